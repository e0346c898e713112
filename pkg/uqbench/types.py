from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np

# A model's softmax output: 1-D float array, non-negative, summing to 1.
ProbabilityVector = np.ndarray

MemberId = Literal["resnet50", "vgg16", "densenet121", "alexnet", "googlenet"]
VoteKind = Literal["decision", "tie", "no_majority"]
PerturbationKind = Literal["rotate", "grayscale", "sepia", "gaussian_blur", "hue_shift"]
SaliencyMethod = Literal["vanilla", "smoothgrad", "ensemble_smoothgrad"]


@dataclass(frozen=True)
class Prediction:
    class_index: int
    class_name: str
    probability: float


@dataclass(frozen=True)
class MemberPredictionSet:
    """Per-image committee input: one probability vector per member, in member order."""

    image_id: str
    entries: Tuple[Tuple[str, ProbabilityVector], ...]

    def __post_init__(self) -> None:
        if len(self.entries) == 0:
            raise ValueError(f"Empty member prediction set for image {self.image_id!r}")
        members = [m for m, _ in self.entries]
        if len(set(members)) != len(members):
            raise ValueError(f"Duplicate member ids in prediction set: {members}")
        lengths = {int(np.asarray(p).shape[-1]) for _, p in self.entries}
        if len(lengths) != 1:
            raise ValueError(f"Probability vectors differ in length: {sorted(lengths)}")

    @property
    def members(self) -> list[str]:
        return [m for m, _ in self.entries]

    @property
    def num_classes(self) -> int:
        return int(np.asarray(self.entries[0][1]).shape[-1])

    def matrix(self) -> np.ndarray:
        """Stacked (members, K) float64 matrix."""
        return np.stack([np.asarray(p, dtype=np.float64) for _, p in self.entries], axis=0)


@dataclass(frozen=True)
class VoteOutcome:
    kind: VoteKind
    decided_class: Optional[int] = None
    tied_classes: Optional[frozenset[int]] = None

    def __post_init__(self) -> None:
        if self.kind == "decision" and (self.decided_class is None or self.tied_classes is not None):
            raise ValueError("A decision needs decided_class and no tied_classes")
        if self.kind == "tie" and (self.tied_classes is None or len(self.tied_classes) < 2 or self.decided_class is not None):
            raise ValueError("A tie needs at least two tied classes")
        if self.kind == "no_majority" and (self.decided_class is not None or self.tied_classes is not None):
            raise ValueError("no_majority carries neither a class nor a tie")

    @classmethod
    def decision(cls, class_index: int) -> "VoteOutcome":
        return cls(kind="decision", decided_class=int(class_index))

    @classmethod
    def tie(cls, classes) -> "VoteOutcome":
        return cls(kind="tie", tied_classes=frozenset(int(c) for c in classes))

    @classmethod
    def no_majority(cls) -> "VoteOutcome":
        return cls(kind="no_majority")

    def describe(self, names=None) -> str:
        """Report cell text; ``names`` maps a class index to its display name."""
        name = names or str
        if self.kind == "decision":
            return name(self.decided_class)
        if self.kind == "tie":
            return "tie: " + ", ".join(name(c) for c in sorted(self.tied_classes or ()))
        return "no majority"


@dataclass(frozen=True)
class UncertaintyRecord:
    image_id: str
    ground_truth: str
    ensemble_class: int
    ensemble_name: str
    avg_probability: float
    variance: float
    entropy_bits: float
    entropy_ratio: float
    ensemble_correct: Optional[bool] = None


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    degrees: Optional[float] = None
    sigma: Optional[float] = None
    shift: Optional[float] = None

    def __post_init__(self) -> None:
        required = {
            "rotate": "degrees",
            "gaussian_blur": "sigma",
            "hue_shift": "shift",
        }
        if self.kind not in ("rotate", "grayscale", "sepia", "gaussian_blur", "hue_shift"):
            raise ValueError(f"Unknown perturbation kind: {self.kind!r}")
        needed = required.get(self.kind)
        for param in ("degrees", "sigma", "shift"):
            present = getattr(self, param) is not None
            if present != (param == needed):
                state = "requires" if param == needed else "does not accept"
                raise ValueError(f"Perturbation {self.kind!r} {state} parameter {param!r}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"Blur sigma must be >= 0, got {self.sigma}")
        if self.shift is not None and not -180.0 <= self.shift <= 180.0:
            raise ValueError(f"Hue shift must be within [-180, 180], got {self.shift}")

    @property
    def is_filter(self) -> bool:
        return self.kind != "rotate"

    def label(self) -> str:
        if self.kind == "rotate":
            return f"rotate {self.degrees:g}"
        if self.kind == "gaussian_blur":
            return f"gaussian_blur sigma={self.sigma:g}"
        if self.kind == "hue_shift":
            return f"hue_shift {self.shift:g}"
        return self.kind

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        for param in ("degrees", "sigma", "shift"):
            value = getattr(self, param)
            if value is not None:
                out[param] = float(value)
        return out


@dataclass(frozen=True)
class RobustnessRecord:
    image_id: str
    ground_truth: str
    original_prediction: Prediction
    perturbed_prediction: Prediction
    spec: PerturbationSpec
    flipped: bool
    originally_correct: bool
    perturbed_correct: bool


@dataclass(frozen=True)
class SaliencyParams:
    n_samples: int = 25
    sigma_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.sigma_fraction < 0:
            raise ValueError(f"sigma_fraction must be >= 0, got {self.sigma_fraction}")


@dataclass(frozen=True)
class SaliencyMap:
    # values: H x W in [0, 1]; raw: the same grid before normalization
    values: np.ndarray
    raw: np.ndarray
    image_id: str
    target_class: int
    method: SaliencyMethod
    params: SaliencyParams = field(default_factory=SaliencyParams)

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.values.shape[0]), int(self.values.shape[1])
