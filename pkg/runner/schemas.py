from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from uqbench.modelzoo import MEMBER_IDS
from uqbench.types import PerturbationSpec, SaliencyParams

SCHEMA_VERSION = "1"

MemberName = Literal["resnet50", "vgg16", "densenet121", "alexnet", "googlenet"]
ExperimentNo = Literal[1, 2, 3]


class PerturbationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["rotate", "grayscale", "sepia", "gaussian_blur", "hue_shift"]
    degrees: Optional[float] = None
    sigma: Optional[float] = Field(default=None, ge=0.0)
    shift: Optional[float] = Field(default=None, ge=-180.0, le=180.0)

    @model_validator(mode="after")
    def _params_match_kind(self) -> "PerturbationModel":
        # PerturbationSpec enforces "parameters present iff required by kind"
        self.to_spec()
        return self

    def to_spec(self) -> PerturbationSpec:
        return PerturbationSpec(kind=self.kind, degrees=self.degrees, sigma=self.sigma, shift=self.shift)


class SaliencyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    n_samples: int = Field(default=25, ge=1)
    sigma_fraction: float = Field(default=0.15, ge=0.0)
    seed: int = 0
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)

    def params(self) -> SaliencyParams:
        return SaliencyParams(n_samples=self.n_samples, sigma_fraction=self.sigma_fraction, seed=self.seed)


def _default_perturbations() -> List[PerturbationModel]:
    return [PerturbationModel(kind="rotate", degrees=180.0), PerturbationModel(kind="sepia")]


class RunConfig(BaseModel):
    """Run-config JSON document (``version`` must be "1")."""

    model_config = ConfigDict(extra="forbid")

    version: Literal["1"] = SCHEMA_VERSION
    members: List[MemberName] = Field(default_factory=lambda: list(MEMBER_IDS), min_length=1)
    experiments: List[ExperimentNo] = Field(default_factory=lambda: [1, 2, 3], min_length=1)
    perturbations: List[PerturbationModel] = Field(default_factory=_default_perturbations)
    saliency: SaliencyConfig = Field(default_factory=SaliencyConfig)
    experiment3_member: MemberName = "resnet50"
    weights: Optional[List[float]] = None
    variance_ddof: Literal[0, 1] = 0
    seed: int = 0
    format: Literal["csv", "markdown"] = "csv"
    workers: int = Field(default=1, ge=1)
    output_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None

    @field_validator("members")
    @classmethod
    def _unique_members(cls, v: List[str]) -> List[str]:
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate members: {v}")
        return v

    @model_validator(mode="after")
    def _weights_match_members(self) -> "RunConfig":
        if self.weights is not None:
            if len(self.weights) != len(self.members):
                raise ValueError(f"{len(self.weights)} weights given for {len(self.members)} members")
            if any(w < 0 for w in self.weights) or not sum(self.weights) > 0:
                raise ValueError("weights must be non-negative with a positive sum")
        return self

    def perturbation_specs(self) -> List[PerturbationSpec]:
        return [p.to_spec() for p in self.perturbations]


class ManifestEntryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_id: str = Field(min_length=1)
    path: str = Field(min_length=1)
    ground_truth: str = Field(min_length=1)
    accepted_classes: List[Union[int, str]] = Field(min_length=1)
    experiments: List[ExperimentNo] = Field(default_factory=lambda: [1, 2, 3], min_length=1)


class ManifestModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: Literal["1"]
    entries: List[ManifestEntryModel]

    @field_validator("entries")
    @classmethod
    def _unique_ids(cls, v: List[ManifestEntryModel]) -> List[ManifestEntryModel]:
        seen = set()
        for e in v:
            if e.image_id in seen:
                raise ValueError(f"duplicate image_id: {e.image_id!r}")
            seen.add(e.image_id)
        return v
