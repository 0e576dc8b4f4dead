"""FastAPI app exposing the library; the CLI talks to it."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from ..datasets import DatasetError, generate
from ..harness import (
    HparamError,
    TrialError,
    TrialRecord,
    report_table,
    run_search,
    run_sweep,
    space_for,
    sweep_csv_rows,
    table_csv,
)
from ..landscape import FIELD_COLUMNS, LandscapeError, compute_field, dead_zone_map, field_rows, make_fig1_pair
from ..masking import MaskConfig, MaskingError, mask_shape_curve
from .schemas import (
    DatasetPayload,
    DatasetRef,
    GenDataRequest,
    LandscapeRequest,
    LandscapeResponse,
    MaskCurveRequest,
    MaskCurveResponse,
    RecordsResponse,
    ReportRequest,
    ReportResponse,
    RunRequest,
    SweepRequest,
    SweepResponse,
)

USER_ERRORS = (DatasetError, HparamError, TrialError, LandscapeError, MaskingError, TypeError, ValueError)
LANDSCAPE_METHODS = {"none": "none", "and": "and_mask", "sand": "sand_mask"}

app = FastAPI(title="sandmask", version="0.1.0")


def _resolve(ref: DatasetRef):
    if ref.inline is not None:
        return ref.inline.to_dataset()
    return generate(ref.name, ref.config, ref.seed)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except USER_ERRORS as err:
        raise HTTPException(status_code=422, detail=str(err)) from err


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/datasets", response_model=DatasetPayload)
def gen_data(req: GenDataRequest):
    return DatasetPayload.from_dataset(_guard(generate, req.dataset, req.config, req.seed))


def _runs(req: RunRequest):
    ds = _resolve(req.dataset)
    configs, space = None, None
    if req.sample is None:
        name = ds.provenance.get("generator")
        defaults = space_for(name).defaults() if name else {}
        configs = [{**defaults, **(req.hparams or {})}]
    else:
        space = space_for(ds.provenance.get("generator")).with_rules(**req.space_overrides)
    records = run_search(ds, req.method, [req.test_env], req.sample or 1, req.seeds, req.steps,
                         space=space, hparams_seed=req.hparams_seed, configs=configs)
    return RecordsResponse(records=[r.to_dict() for r in records])


@app.post("/runs", response_model=RecordsResponse)
def runs(req: RunRequest):
    return _guard(_runs, req)


def _sweep(req: SweepRequest):
    result = run_sweep(req.kind, req.values, req.base, req.dataset_config, seeds=req.seeds, steps=req.steps,
                       test_env=req.test_env, data_seed=req.data_seed)
    return SweepResponse(rows=sweep_csv_rows(result), rho=result.rho, p_value=result.p_value)


@app.post("/sweeps", response_model=SweepResponse)
def sweeps(req: SweepRequest):
    return _guard(_sweep, req)


def _landscape(req: LandscapeRequest):
    field = compute_field(make_fig1_pair(), MaskConfig(method=LANDSCAPE_METHODS[req.method], tau=req.tau),
                          resolution=req.resolution)
    return LandscapeResponse(columns=list(FIELD_COLUMNS), rows=field_rows(field),
                             dead_fraction=dead_zone_map(field)[1])


@app.post("/landscape", response_model=LandscapeResponse)
def landscape(req: LandscapeRequest):
    return _guard(_landscape, req)


@app.post("/mask-curve", response_model=MaskCurveResponse)
def mask_curve(req: MaskCurveRequest):
    grid = req.a_grid if req.a_grid is not None else np.linspace(0.0, 1.0, 101)
    return MaskCurveResponse(rows=_guard(mask_shape_curve, req.tau, req.sigma2, grid))


def _report(req: ReportRequest):
    records = [TrialRecord.from_dict(r) for r in req.records]
    header, rows = report_table(records, req.selection)
    return ReportResponse(header=header, rows=rows, csv=table_csv(header, rows))


@app.post("/report", response_model=ReportResponse)
def report(req: ReportRequest):
    return _guard(_report, req)
