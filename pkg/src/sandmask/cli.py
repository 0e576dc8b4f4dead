"""Command-line client for the sandmask service.

Without ``--server`` the app runs in-process; with it, requests go over HTTP.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

from .datasets import load_dataset, save_dataset
from .harness import TrialRecord, read_records, write_records
from .landscape import write_field_csv
from .masking import write_curve_csv
from .service.schemas import DatasetPayload


class ClientError(RuntimeError):
    pass


class Client:
    def __init__(self, server=None):
        if server:
            import httpx
            self._http = httpx.Client(base_url=server, timeout=None)
        else:
            from .service import app
            with warnings.catch_warnings():
                # starlette nags about its httpx backend; irrelevant in-process
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient
            self._http = TestClient(app)

    def post(self, path, payload):
        resp = self._http.post(path, json=payload)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ClientError(f"{path}: {detail}")
        return resp.json()


def json_arg(value):
    """Inline JSON object or a path to a JSON file."""
    if value is None:
        return {}
    if os.path.isfile(value):
        with open(value) as fh:
            return json.load(fh)
    try:
        return json.loads(value)
    except json.JSONDecodeError as err:
        raise argparse.ArgumentTypeError(f"not JSON or a JSON file: {value!r}") from err


def float_list(value):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from err


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_gen_data(client, args):
    payload = client.post("/datasets", {"dataset": args.dataset, "config": args.config, "seed": args.seed})
    ds = DatasetPayload(**payload).to_dataset()
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.environments)} environments to {args.out}")


def _dataset_ref(args):
    if os.path.isdir(args.dataset):
        return {"inline": DatasetPayload.from_dataset(load_dataset(args.dataset)).model_dump()}
    return {"name": args.dataset, "config": args.data_config, "seed": args.data_seed}


def cmd_run(client, args):
    body = {"dataset": _dataset_ref(args), "method": args.method, "test_env": args.test_env,
            "seeds": args.seeds, "steps": args.steps, "hparams_seed": args.hparams_seed,
            "space_overrides": args.pin}
    if args.hparams.startswith("sample:"):
        body["sample"] = int(args.hparams.split(":", 1)[1])
    else:
        body["hparams"] = json_arg(args.hparams)
    records = [TrialRecord.from_dict(r) for r in client.post("/runs", body)["records"]]
    write_records(records, args.out, append=args.append)
    failed = sum(r.failed for r in records)
    print(f"wrote {len(records)} trials to {args.out} ({failed} failed)")


def cmd_sweep(client, args):
    body = {"kind": args.kind, "values": args.values, "base": args.base, "dataset_config": args.dataset_config,
            "seeds": args.seeds, "steps": args.steps, "test_env": args.test_env, "data_seed": args.data_seed}
    out = client.post("/sweeps", body)
    header = ["kind", "value", "seed", "test_acc", "val_acc", "failed", "rho", "p_value"]
    _write_csv(args.out, header, [[row[h] for h in header] for row in out["rows"]])
    print(f"spearman rho={out['rho']} p={out['p_value']}")


def cmd_landscape(client, args):
    out = client.post("/landscape", {"preset": args.preset, "method": args.method, "tau": args.tau,
                                     "resolution": args.resolution})
    write_field_csv(out["rows"], args.out)
    print(f"dead fraction {out['dead_fraction']:.4f}")


def cmd_mask_curve(client, args):
    body = {"tau": args.tau, "sigma2": args.sigma2}
    if args.points:
        body["a_grid"] = [i / (args.points - 1) for i in range(args.points)]
    write_curve_csv([tuple(r) for r in client.post("/mask-curve", body)["rows"]], args.out)


def cmd_report(client, args):
    records = [r.to_dict() for r in read_records(args.input)]
    out = client.post("/report", {"records": records, "selection": args.selection})
    with open(args.out, "w", newline="") as fh:
        fh.write(out["csv"])
    print(out["csv"], end="")


def cmd_serve(_client, args):
    import uvicorn
    uvicorn.run("sandmask.service:app", host=args.host, port=args.port)


def build_parser():
    parser = argparse.ArgumentParser(prog="sandmask", description=__doc__.splitlines()[0])
    parser.add_argument("--server", help="base URL of a running service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset directory")
    p.add_argument("--dataset", choices=["spirals", "cmnist"], required=True)
    p.add_argument("--config", type=json_arg, default={})
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="train trials and append records as JSON lines")
    p.add_argument("--dataset", required=True, help="dataset directory or generator name")
    p.add_argument("--data-config", type=json_arg, default={})
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--method", choices=["erm", "and", "sand"], required=True)
    p.add_argument("--test-env", required=True)
    p.add_argument("--hparams", default="{}", help="JSON object, JSON file, or sample:N")
    p.add_argument("--hparams-seed", type=int, default=0)
    p.add_argument("--pin", type=json_arg, default={}, help="hyperparameters held fixed while sampling")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="accuracy distribution over one knob")
    p.add_argument("--kind", choices=["momentum", "noise", "init"], required=True)
    p.add_argument("--values", type=float_list, required=True)
    p.add_argument("--base", type=json_arg, default={})
    p.add_argument("--dataset-config", type=json_arg, default={})
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--test-env", default="0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("landscape", help="masked gradient field on a toy landscape pair")
    p.add_argument("--preset", choices=["fig1"], default="fig1")
    p.add_argument("--method", choices=["none", "and", "sand"], required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("mask-curve", help="SAND weight as a function of agreement")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--sigma2", type=float_list, required=True)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_curve)

    p = sub.add_parser("report", help="model-selected accuracy table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--selection", choices=["trainval", "oracle"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    client = None if args.command == "serve" else Client(args.server)
    try:
        args.func(client, args)
    except ClientError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
