from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .types import Prediction

logger = logging.getLogger(__name__)

NUM_CLASSES = 1000


@dataclass(frozen=True)
class LabelEntry:
    index: int
    canonical_name: str
    synonyms: tuple[str, ...] = ()


@dataclass(frozen=True)
class AcceptedClassSet:
    """Class indices counted as correct for one ground-truth label."""

    ground_truth_name: str
    accepted_indices: frozenset[int]

    def __post_init__(self) -> None:
        if not self.accepted_indices:
            raise ValueError(f"Accepted class set for {self.ground_truth_name!r} is empty")


class LabelCatalog:
    """Immutable class-index <-> name mapping with synonym lookup."""

    def __init__(self, entries: Sequence[LabelEntry], num_classes: int = NUM_CLASSES):
        by_index: dict[int, LabelEntry] = {}
        for e in entries:
            if not 0 <= e.index < num_classes:
                raise ValueError(f"Class index out of range: {e.index}")
            if e.index in by_index:
                raise ValueError(f"Duplicate class index: {e.index}")
            by_index[e.index] = e
        if len(by_index) != num_classes:
            raise ValueError(f"Label catalog must have {num_classes} entries, got {len(entries)}")

        canonical: dict[str, int] = {}
        for e in entries:
            key = e.canonical_name.casefold()
            if key in canonical:
                raise ValueError(f"Duplicate canonical class name: {e.canonical_name!r}")
            canonical[key] = e.index

        # canonical names win over synonyms; first synonym occurrence wins otherwise
        lookup = dict(canonical)
        for e in sorted(entries, key=lambda x: x.index):
            for syn in e.synonyms:
                lookup.setdefault(syn.casefold(), e.index)

        self.num_classes = num_classes
        self._entries = tuple(by_index[i] for i in range(num_classes))
        self._lookup = lookup

    def __len__(self) -> int:
        return self.num_classes

    @property
    def entries(self) -> tuple[LabelEntry, ...]:
        return self._entries

    def name(self, index: int) -> str:
        if not 0 <= int(index) < self.num_classes:
            raise ValueError(f"Class index out of range: {index}")
        return self._entries[int(index)].canonical_name

    def lookup(self, name: str) -> int:
        try:
            return self._lookup[name.strip().casefold()]
        except KeyError:
            raise ValueError(f"Unknown class name: {name!r}") from None

    def resolve(self, ref: int | str) -> int:
        """Resolve a class index or a class name/synonym to an index."""
        if isinstance(ref, bool):
            raise ValueError(f"Invalid class reference: {ref!r}")
        if isinstance(ref, (int, np.integer)):
            self.name(int(ref))
            return int(ref)
        text = str(ref).strip()
        if text.isdigit():
            return self.resolve(int(text))
        return self.lookup(text)


def default_catalog_path() -> Path:
    return Path(__file__).resolve().parents[1] / "data" / "imagenet_classes.tsv"


def load_label_catalog(path: Path | str, num_classes: int = NUM_CLASSES) -> LabelCatalog:
    """Read ``index<TAB>canonical_name<TAB>syn1|syn2|...`` rows (synonyms optional)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Label catalog not found: {path}")

    entries: list[LabelEntry] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields, got {len(parts)}")
        raw_index, name = parts[0].strip(), parts[1].strip()
        if not raw_index.isdigit() or not name:
            raise ValueError(f"{path}:{lineno}: malformed row {line!r}")
        synonyms = ()
        if len(parts) == 3 and parts[2].strip():
            synonyms = tuple(s.strip() for s in parts[2].split("|") if s.strip())
        entries.append(LabelEntry(int(raw_index), name, synonyms))

    catalog = LabelCatalog(entries, num_classes=num_classes)
    logger.debug("Loaded label catalog %s (%d classes)", path, len(catalog))
    return catalog


def build_accepted_set(catalog: LabelCatalog, ground_truth: str, refs: Iterable[int | str]) -> AcceptedClassSet:
    return AcceptedClassSet(
        ground_truth_name=ground_truth,
        accepted_indices=frozenset(catalog.resolve(r) for r in refs),
    )


def top_k(p: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k (index, probability) pairs, probability descending, lower index first on ties."""
    probs = np.asarray(p, dtype=np.float64).ravel()
    if not 1 <= k <= probs.size:
        raise ValueError(f"k must be within [1, {probs.size}], got {k}")
    order = np.argsort(-probs, kind="stable")[:k]
    return [(int(i), float(probs[i])) for i in order]


def is_correct(predicted_index: int, accepted: AcceptedClassSet) -> bool:
    return int(predicted_index) in accepted.accepted_indices


def prediction_from_probs(probs: np.ndarray, catalog: Optional[LabelCatalog] = None) -> Prediction:
    """Argmax prediction (lowest index on ties), named from the catalog when one is given."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    cls = int(np.argmax(p))
    name = catalog.name(cls) if catalog is not None and cls < len(catalog) else str(cls)
    return Prediction(class_index=cls, class_name=name, probability=float(p[cls]))
