"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator

from ..datasets import EnvDataset, Environment


class DatasetPayload(BaseModel):
    """A full dataset in JSON form."""

    env_ids: list[str]
    features: list[list[list[float]]]
    labels: list[list[int]]
    feature_dim: int
    num_classes: int
    provenance: dict = Field(default_factory=dict)

    @classmethod
    def from_dataset(cls, ds: EnvDataset):
        return cls(
            env_ids=ds.env_ids,
            features=[env.features.tolist() for env in ds.environments],
            labels=[env.labels.tolist() for env in ds.environments],
            feature_dim=ds.feature_dim,
            num_classes=ds.num_classes,
            provenance=ds.provenance,
        )

    def to_dataset(self) -> EnvDataset:
        envs = [Environment(e, x, y) for e, x, y in zip(self.env_ids, self.features, self.labels)]
        return EnvDataset(envs, self.feature_dim, self.num_classes, dict(self.provenance))


class DatasetRef(BaseModel):
    """Either a generator recipe or an inline dataset."""

    name: Literal["spirals", "cmnist"] | None = None
    config: dict = Field(default_factory=dict)
    seed: int = Field(0, ge=0)
    inline: DatasetPayload | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.name is None) == (self.inline is None):
            raise ValueError("give exactly one of 'name' or 'inline'")
        return self


class GenDataRequest(BaseModel):
    dataset: Literal["spirals", "cmnist"]
    config: dict = Field(default_factory=dict)
    seed: int = Field(0, ge=0)


class RunRequest(BaseModel):
    dataset: DatasetRef
    method: Literal["erm", "and", "sand"]
    test_env: str
    hparams: dict | None = None
    sample: int | None = Field(None, ge=1, description="number of sampled configs; config 0 is the default")
    hparams_seed: int = 0
    space_overrides: dict = Field(default_factory=dict, description="hyperparameters pinned during sampling")
    seeds: int = Field(3, ge=1)
    steps: int = Field(3000, ge=1)

    @model_validator(mode="after")
    def _one_source(self):
        if self.hparams is not None and self.sample is not None:
            raise ValueError("give either explicit hparams or sample, not both")
        return self


class RecordsResponse(BaseModel):
    records: list[dict]


class SweepRequest(BaseModel):
    kind: Literal["momentum", "noise", "init"]
    values: list[float] = Field(min_length=1)
    base: dict = Field(default_factory=dict)
    dataset_config: dict = Field(default_factory=dict)
    data_seed: int = 0
    seeds: int = Field(20, ge=1)
    steps: int = Field(3000, ge=1)
    test_env: str = "0"


class SweepResponse(BaseModel):
    rows: list[dict]
    rho: float | None
    p_value: float | None


class LandscapeRequest(BaseModel):
    preset: Literal["fig1"] = "fig1"
    method: Literal["none", "and", "sand"]
    tau: float = Field(1.0, ge=0.0, le=1.0)
    resolution: int = Field(101, ge=2, le=1001)


class LandscapeResponse(BaseModel):
    columns: list[str]
    rows: list[list[float]]
    dead_fraction: float


class MaskCurveRequest(BaseModel):
    tau: float = Field(ge=0.0, le=1.0)
    sigma2: list[float] = Field(min_length=1)
    a_grid: list[float] | None = None


class MaskCurveResponse(BaseModel):
    rows: list[tuple[float, float, float]]


class ReportRequest(BaseModel):
    records: list[dict] = Field(min_length=1)
    selection: Literal["trainval", "oracle"]


class ReportResponse(BaseModel):
    header: list[str]
    rows: list[dict]
    csv: str
