import csv
import json

import pytest

from sandmask.cli import main
from sandmask.datasets import load_dataset
from sandmask.harness import read_records

TINY = json.dumps({"width": 8, "depth": 1, "batch_size": 16})
SMALL_SPIRALS = json.dumps({"num_envs": 3, "samples_per_env": 40})


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_data_then_run_then_report(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--dataset", "spirals", "--config", SMALL_SPIRALS, "--seed", "3", "--out", str(data)]) == 0
    assert load_dataset(data).env_ids == ["0", "1", "2"]
    results = tmp_path / "results.jsonl"
    for method in ("erm", "and"):
        assert main(["run", "--dataset", str(data), "--method", method, "--test-env", "1", "--hparams", TINY,
                     "--seeds", "2", "--steps", "3", "--out", str(results), "--append"]) == 0
    records = read_records(results)
    assert len(records) == 4 and records[0].dataset["seed"] == 3
    table = tmp_path / "table.csv"
    assert main(["report", "--in", str(results), "--selection", "trainval", "--out", str(table)]) == 0
    rows = read_csv(table)
    assert rows[0] == ["method", "1", "Avg"]
    assert [r[0] for r in rows[1:]] == ["ERM", "AND-mask"]
    first = table.read_bytes()
    main(["report", "--in", str(results), "--selection", "trainval", "--out", str(table)])
    assert table.read_bytes() == first


def test_run_by_name_with_sampling(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["run", "--dataset", "spirals", "--data-config", SMALL_SPIRALS, "--method", "sand",
                 "--test-env", "0", "--hparams", "sample:2", "--pin", TINY, "--seeds", "1", "--steps", "2",
                 "--out", str(out)]) == 0
    assert [r.config_id for r in read_records(out)] == [0, 1]


def test_hparams_from_file(tmp_path):
    hp = tmp_path / "hp.json"
    hp.write_text(TINY)
    out = tmp_path / "r.jsonl"
    main(["run", "--dataset", "cmnist", "--data-config", '{"samples_per_env": 40}', "--method", "erm",
          "--test-env", "-0.90", "--hparams", str(hp), "--seeds", "1", "--steps", "2", "--out", str(out)])
    assert read_records(out)[0].config["width"] == 8


def test_landscape_and_mask_curve(tmp_path):
    field = tmp_path / "field.csv"
    assert main(["landscape", "--preset", "fig1", "--method", "sand", "--tau", "0.5", "--resolution", "6",
                 "--out", str(field)]) == 0
    rows = read_csv(field)
    assert rows[0] == ["x", "y", "gxA", "gyA", "gxB", "gyB", "mask_x", "mask_y", "ux", "uy", "dead"]
    assert len(rows) == 37
    curve = tmp_path / "curve.csv"
    assert main(["mask-curve", "--tau", "0.2", "--sigma2", "0.01,1", "--points", "3", "--out", str(curve)]) == 0
    rows = read_csv(curve)
    assert rows[0] == ["a", "sigma2", "mask"] and len(rows) == 7


def test_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--kind", "noise", "--values", "0,0.2", "--base", TINY, "--dataset-config",
                 SMALL_SPIRALS, "--seeds", "2", "--steps", "2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0][:4] == ["kind", "value", "seed", "test_acc"] and len(rows) == 5


def test_service_errors_become_exit_code(tmp_path, capsys):
    code = main(["run", "--dataset", "spirals", "--data-config", SMALL_SPIRALS, "--method", "and",
                 "--test-env", "7", "--hparams", TINY, "--seeds", "1", "--steps", "1", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "unknown environment" in capsys.readouterr().err


def test_bad_arguments_exit():
    with pytest.raises(SystemExit):
        main(["sweep", "--kind", "lr", "--values", "1", "--out", "x"])
    with pytest.raises(SystemExit):
        main(["mask-curve", "--tau", "0.5", "--sigma2", "a,b", "--out", "x"])
