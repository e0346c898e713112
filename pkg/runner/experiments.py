from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from uqbench.ensemble import ensemble_predict, majority_vote, member_votes, plurality_vote
from uqbench.labelspace import AcceptedClassSet, LabelCatalog, build_accepted_set, is_correct, prediction_from_probs
from uqbench.modelzoo import ModelMember, load_image, preprocess, preprocess_view
from uqbench.perturb import apply_perturbation, make_robustness_record
from uqbench.saliency import combine_maps, smoothgrad, vanilla_gradient
from uqbench.types import (
    MemberPredictionSet,
    PerturbationSpec,
    Prediction,
    RobustnessRecord,
    SaliencyMap,
    SaliencyMethod,
    UncertaintyRecord,
)
from uqbench.uncertainty import build_record, rank_by_uncertainty
from uqbench.visualize import export_map_csv, overlay, save_png, side_by_side

from .reporting import (
    ACCURACY_COLUMNS,
    ERROR_COLUMNS,
    emit_report,
    ROBUSTNESS_COLUMNS,
    UNCERTAINTY_COLUMNS,
    VOTE_COLUMNS,
    robustness_rows,
    save_table,
    uncertainty_rows,
)
from .schemas import ManifestModel, RunConfig
from .storage import ArrayCache, cache_key, file_sha256, load_json

logger = logging.getLogger(__name__)

MemberFactory = Callable[[str], ModelMember]

DETAIL_COLUMNS = [
    "Image",
    "Ground Truth",
    "Ensemble",
    "Ensemble correct",
    "Avg Probability",
    "Variance",
    "Entropy",
    "Entropy / Max",
]


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: Path
    ground_truth: str
    accepted: AcceptedClassSet
    experiments: Tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class Manifest:
    version: str
    entries: Tuple[ManifestEntry, ...]

    def for_experiment(self, which: int) -> List[ManifestEntry]:
        return [e for e in self.entries if which in e.experiments]


@dataclass(frozen=True)
class ImageFailure:
    image_id: str
    experiment: int
    stage: str
    message: str


@dataclass
class ExperimentResult:
    experiment: int
    files: List[Path] = field(default_factory=list)
    failures: List[ImageFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class ImageStageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    try:
        yield
    except ImageStageError:
        raise
    except Exception as e:
        raise ImageStageError(name, e) from e


def slugify(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "item"


def load_manifest(path: Union[Path, str], catalog: LabelCatalog) -> Manifest:
    """Validate the manifest JSON and resolve every accepted class against the catalog."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        model = ManifestModel.model_validate(load_json(path))
    except ValidationError as e:
        raise ValueError(f"Invalid manifest {path}: {e}") from e
    except ValueError as e:
        raise ValueError(f"Manifest {path} is not valid JSON: {e}") from e

    entries = []
    for e in model.entries:
        try:
            accepted = build_accepted_set(catalog, e.ground_truth, e.accepted_classes)
        except ValueError as err:
            raise ValueError(f"Manifest entry {e.image_id!r}: {err}") from err
        img_path = Path(e.path)
        if not img_path.is_absolute():
            img_path = (path.parent / img_path).resolve()
        entries.append(
            ManifestEntry(
                image_id=e.image_id,
                path=img_path,
                ground_truth=e.ground_truth,
                accepted=accepted,
                experiments=tuple(sorted(set(e.experiments))),
            )
        )
    return Manifest(version=model.version, entries=tuple(entries))


def load_run_config(path: Optional[Union[Path, str]]) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Run config not found: {path}")
    try:
        return RunConfig.model_validate(load_json(path))
    except ValidationError as e:
        raise ValueError(f"Invalid run config {path}: {e}") from e
    except ValueError as e:
        raise ValueError(f"Run config {path} is not valid JSON: {e}") from e


class ExperimentRunner:
    """Runs Experiments 1-3 over a manifest with cached member outputs.

    Each worker thread owns its member handles; the array cache is the only
    shared mutable state. Failures are isolated per image and collected.
    """

    def __init__(
        self,
        config: RunConfig,
        manifest: Manifest,
        catalog: LabelCatalog,
        *,
        output_dir: Path,
        cache_dir: Path,
        weights_dir: Optional[Path] = None,
        device: str = "cpu",
        member_factory: Optional[MemberFactory] = None,
    ):
        self.config = config
        self.manifest = manifest
        self.catalog = catalog
        self.output_dir = Path(output_dir)
        self.cache = ArrayCache(Path(cache_dir))
        self.weights_dir = weights_dir
        self.device = device
        self._factory = member_factory or self._default_factory
        self._local = threading.local()
        self._lock = threading.Lock()
        self._created: List[ModelMember] = []
        self._hashes: Dict[Path, str] = {}

    # -----------------
    # Members and cached outputs
    # -----------------

    def _default_factory(self, member_id: str) -> ModelMember:
        return ModelMember(member_id, weights_dir=self.weights_dir, device=self.device)

    def member(self, member_id: str) -> ModelMember:
        handles = getattr(self._local, "members", None)
        if handles is None:
            handles = self._local.members = {}
        if member_id not in handles:
            m = self._factory(member_id)
            handles[member_id] = m
            with self._lock:
                self._created.append(m)
        return handles[member_id]

    @property
    def model_invocations(self) -> int:
        with self._lock:
            return sum(m.invocations for m in self._created)

    def image_hash(self, entry: ManifestEntry) -> str:
        with self._lock:
            cached = self._hashes.get(entry.path)
        if cached is None:
            with stage("load"):
                cached = file_sha256(entry.path)
            with self._lock:
                self._hashes[entry.path] = cached
        return cached

    def _image_loader(self, entry: ManifestEntry) -> Callable[[], np.ndarray]:
        loaded: List[np.ndarray] = []

        def get() -> np.ndarray:
            if not loaded:
                with stage("load"):
                    loaded.append(load_image(entry.path))
            return loaded[0]

        return get

    def member_probs(
        self,
        member_id: str,
        entry: ManifestEntry,
        image: Callable[[], np.ndarray],
        spec: Optional[PerturbationSpec] = None,
    ) -> np.ndarray:
        m = self.member(member_id)
        key = cache_key(
            kind="probs",
            member=member_id,
            weights=m.weights_source,
            image=self.image_hash(entry),
            perturbation=spec.to_dict() if spec else None,
        )

        def compute() -> np.ndarray:
            img = image()
            if spec is not None:
                img = apply_perturbation(img, spec)
            return m.predict_image(img)

        return self.cache.get_or_compute("probs", key, compute)

    def saliency_grid(
        self,
        member_ids: Sequence[str],
        entry: ManifestEntry,
        image: Callable[[], np.ndarray],
        class_index: int,
        *,
        spec: Optional[PerturbationSpec] = None,
        method: str = "smoothgrad",
    ) -> np.ndarray:
        """Normalized map for one member, or the ensemble map for several."""
        members = [self.member(mid) for mid in member_ids]
        params = self.config.saliency.params()
        key = cache_key(
            kind="saliency",
            method=method,
            members=[[m.member_id, m.weights_source] for m in members],
            image=self.image_hash(entry),
            perturbation=spec.to_dict() if spec else None,
            target=int(class_index),
            params=[params.n_samples, params.sigma_fraction, params.seed],
        )

        def compute() -> np.ndarray:
            img = image()
            if spec is not None:
                img = apply_perturbation(img, spec)
            x = preprocess(img, members[0].input_spec)
            if method == "vanilla":
                maps = [vanilla_gradient(m, x, class_index, image_id=entry.image_id).values for m in members]
            else:
                maps = [
                    smoothgrad(m, x, class_index, params.n_samples, params.sigma_fraction, params.seed, image_id=entry.image_id).values
                    for m in members
                ]
            if len(maps) == 1:
                return maps[0]
            return combine_maps(maps, image_id=entry.image_id, class_index=class_index, params=params).values

        return self.cache.get_or_compute("saliency", key, compute)

    def prediction_set(self, entry: ManifestEntry, image: Callable[[], np.ndarray]) -> MemberPredictionSet:
        entries = []
        for member_id in self.config.members:
            with stage(f"predict:{member_id}"):
                entries.append((member_id, self.member_probs(member_id, entry, image)))
        return MemberPredictionSet(image_id=entry.image_id, entries=tuple(entries))

    def _view(self, member_id: str, image: np.ndarray) -> np.ndarray:
        return preprocess_view(image, self.member(member_id).input_spec)

    # -----------------
    # Per-image driver
    # -----------------

    def _map_images(
        self,
        which: int,
        entries: Sequence[ManifestEntry],
        fn: Callable[[ManifestEntry], Any],
    ) -> Tuple[List[Tuple[ManifestEntry, Any]], List[ImageFailure]]:
        def guarded(entry: ManifestEntry):
            try:
                return entry, fn(entry), None
            except ImageStageError as e:
                return entry, None, ImageFailure(entry.image_id, which, e.stage, str(e.cause))
            except Exception as e:
                return entry, None, ImageFailure(entry.image_id, which, "unknown", f"{type(e).__name__}: {e}")

        desc = f"experiment {which}"
        workers = max(1, int(self.config.workers))
        if workers == 1:
            results = [guarded(e) for e in tqdm(entries, desc=desc, disable=None, leave=False)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(tqdm(pool.map(guarded, entries), total=len(entries), desc=desc, disable=None, leave=False))

        done: List[Tuple[ManifestEntry, Any]] = []
        failures: List[ImageFailure] = []
        for entry, value, failure in results:
            if failure is not None:
                logger.warning("Image %s failed in experiment %d at %s: %s", entry.image_id, which, failure.stage, failure.message)
                failures.append(failure)
            else:
                done.append((entry, value))
        return done, failures

    def _finish(self, which: int, files: List[Path], failures: List[ImageFailure]) -> ExperimentResult:
        for p in files:
            logger.info("Saved: %s", p)
        return ExperimentResult(experiment=which, files=files, failures=failures)

    # -----------------
    # Experiments
    # -----------------

    def run(self, which: int) -> ExperimentResult:
        logger.info("Experiment %d: %d images, members=%s", which, len(self.manifest.for_experiment(which)), ",".join(self.config.members))
        if which == 1:
            return self.run_classification()
        if which == 2:
            return self.run_uncertainty()
        if which == 3:
            return self.run_robustness()
        raise ValueError(f"Unknown experiment: {which}")

    def run_classification(self) -> ExperimentResult:
        """Experiment 1: per-member predictions, vote outcomes, per-member accuracy."""
        entries = self.manifest.for_experiment(1)
        members = list(self.config.members)

        def per_image(entry: ManifestEntry) -> MemberPredictionSet:
            return self.prediction_set(entry, self._image_loader(entry))

        done, failures = self._map_images(1, entries, per_image)
        by_id: Dict[str, MemberPredictionSet] = {e.image_id: pset for e, pset in done}

        name = self.catalog.name
        pred_columns = ["Model"] + [e.image_id for e in entries]
        pred_rows = []
        acc_rows = []
        for i, member_id in enumerate(members):
            row: Dict[str, Any] = {"Model": member_id}
            correct = 0
            for e in entries:
                pset = by_id.get(e.image_id)
                if pset is None:
                    row[e.image_id] = "ERROR"
                    continue
                cls = member_votes(pset)[i]
                row[e.image_id] = name(cls)
                correct += int(is_correct(cls, e.accepted))
            pred_rows.append(row)
            total = len(by_id)
            acc_rows.append(
                {"Model": member_id, "Correct": correct, "Total": total, "Accuracy": correct / total if total else 0.0}
            )

        vote_rows = []
        ens_correct = 0
        for e in entries:
            pset = by_id.get(e.image_id)
            if pset is None:
                continue
            votes = member_votes(pset)
            decision = ensemble_predict(pset, self.catalog, self.config.weights)
            ens_correct += int(is_correct(decision.class_index, e.accepted))
            vote_rows.append(
                {
                    "Image": e.image_id,
                    "Ground Truth": e.ground_truth,
                    "Member Votes": "; ".join(name(v) for v in votes),
                    "Majority": majority_vote(votes).describe(name),
                    "Plurality": plurality_vote(votes).describe(name),
                    "Ensemble": decision.class_name,
                }
            )
        total = len(by_id)
        acc_rows.append({"Model": "ensemble", "Correct": ens_correct, "Total": total, "Accuracy": ens_correct / total if total else 0.0})

        fmt = self.config.format
        files = save_table(self.output_dir, "exp1_predictions", pred_columns, pred_rows, fmt)
        files += save_table(self.output_dir, "exp1_votes", VOTE_COLUMNS, vote_rows, fmt)
        files += save_table(self.output_dir, "exp1_accuracy", ACCURACY_COLUMNS, acc_rows, fmt)
        return self._finish(1, files, failures)

    def run_uncertainty(self) -> ExperimentResult:
        """Experiment 2: ensemble uncertainty ranking plus ensemble saliency maps."""
        entries = self.manifest.for_experiment(2)
        sal = self.config.saliency
        saliency_dir = self.output_dir / "saliency"

        def per_image(entry: ManifestEntry) -> Tuple[UncertaintyRecord, List[Path]]:
            image = self._image_loader(entry)
            pset = self.prediction_set(entry, image)
            with stage("uncertainty"):
                record = build_record(
                    pset,
                    entry.ground_truth,
                    catalog=self.catalog,
                    accepted=entry.accepted,
                    weights=self.config.weights,
                    ddof=self.config.variance_ddof,
                )
            written: List[Path] = []
            if sal.enabled:
                with stage("saliency"):
                    grid = self.saliency_grid(self.config.members, entry, image, record.ensemble_class)
                    view = self._view(self.config.members[0], image())
                    base = saliency_dir / f"exp2_{slugify(entry.image_id)}"
                    smap = _as_map(grid, entry.image_id, record.ensemble_class)
                    save_png(base.with_suffix(".png"), overlay(smap, view, sal.alpha))
                    export_map_csv(base.with_suffix(".csv"), grid)
                    written += [base.with_suffix(".png"), base.with_suffix(".csv")]
            return record, written

        done, failures = self._map_images(2, entries, per_image)
        records = [rec for _, (rec, _) in done]
        ranked = rank_by_uncertainty(records)

        detail = [
            {
                "Image": r.image_id,
                "Ground Truth": r.ground_truth,
                "Ensemble": r.ensemble_name,
                "Ensemble correct": r.ensemble_correct,
                "Avg Probability": r.avg_probability,
                "Variance": r.variance,
                "Entropy": r.entropy_bits,
                "Entropy / Max": r.entropy_ratio,
            }
            for r in ranked
        ]
        fmt = self.config.format
        files = save_table(self.output_dir, "exp2_uncertainty", UNCERTAINTY_COLUMNS, uncertainty_rows(ranked), fmt)
        files += save_table(self.output_dir, "exp2_detail", DETAIL_COLUMNS, detail, fmt)
        for _, (_, written) in done:
            files += written
        return self._finish(2, files, failures)

    def run_robustness(self) -> ExperimentResult:
        """Experiment 3: one member's predictions before and after each perturbation."""
        entries = self.manifest.for_experiment(3)
        member_id = self.config.experiment3_member
        specs = self.config.perturbation_specs()
        sal = self.config.saliency
        saliency_dir = self.output_dir / "saliency"

        def per_image(entry: ManifestEntry) -> Tuple[List[RobustnessRecord], List[Path]]:
            image = self._image_loader(entry)
            with stage(f"predict:{member_id}"):
                original = prediction_from_probs(self.member_probs(member_id, entry, image), self.catalog)
            records = []
            for spec in specs:
                with stage(f"perturb:{spec.label()}"):
                    perturbed = prediction_from_probs(self.member_probs(member_id, entry, image, spec), self.catalog)
                records.append(make_robustness_record(entry.image_id, spec, original, perturbed, entry.accepted))

            written: List[Path] = []
            if sal.enabled and specs:
                with stage("saliency"):
                    written += self._robustness_saliency(entry, image, member_id, original, records, saliency_dir)
            return records, written

        done, failures = self._map_images(3, entries, per_image)
        records = [r for _, (recs, _) in done for r in recs]
        files = save_table(self.output_dir, "exp3_robustness", ROBUSTNESS_COLUMNS, robustness_rows(records), self.config.format)
        for _, (_, written) in done:
            files += written
        return self._finish(3, files, failures)

    def _robustness_saliency(
        self,
        entry: ManifestEntry,
        image: Callable[[], np.ndarray],
        member_id: str,
        original: Prediction,
        records: Sequence[RobustnessRecord],
        saliency_dir: Path,
    ) -> List[Path]:
        alpha = self.config.saliency.alpha
        slug = slugify(entry.image_id)
        grid = self.saliency_grid([member_id], entry, image, original.class_index)
        panels = [overlay(_as_map(grid, entry.image_id, original.class_index), self._view(member_id, image()), alpha)]
        captions = [f"original: {original.class_name}"]
        written = [saliency_dir / f"exp3_{slug}_original.csv"]
        export_map_csv(written[0], grid)

        for rec in records:
            spec = rec.spec
            cls = rec.perturbed_prediction.class_index
            grid = self.saliency_grid([member_id], entry, image, cls, spec=spec)
            view = self._view(member_id, apply_perturbation(image(), spec))
            panels.append(overlay(_as_map(grid, entry.image_id, cls), view, alpha))
            captions.append(f"{spec.label()}: {rec.perturbed_prediction.class_name}")
            csv_path = saliency_dir / f"exp3_{slug}_{slugify(spec.label())}.csv"
            export_map_csv(csv_path, grid)
            written.append(csv_path)

        png = saliency_dir / f"exp3_{slug}.png"
        save_png(png, side_by_side(panels, captions))
        return [png] + written

    def run_saliency(self, member_ids: Sequence[str], method: str = "smoothgrad") -> ExperimentResult:
        """Saliency maps for every manifest image, for one member or the ensemble of several."""
        entries = list(self.manifest.entries)
        label = member_ids[0] if len(member_ids) == 1 else "ensemble"
        saliency_dir = self.output_dir / "saliency"
        alpha = self.config.saliency.alpha
        weights = self.config.weights if list(member_ids) == list(self.config.members) else None

        def per_image(entry: ManifestEntry) -> List[Path]:
            image = self._image_loader(entry)
            psets = []
            for member_id in member_ids:
                with stage(f"predict:{member_id}"):
                    psets.append((member_id, self.member_probs(member_id, entry, image)))
            decision = ensemble_predict(MemberPredictionSet(entry.image_id, tuple(psets)), self.catalog, weights)
            with stage("saliency"):
                grid = self.saliency_grid(member_ids, entry, image, decision.class_index, method=method)
                base = saliency_dir / f"{method}_{label}_{slugify(entry.image_id)}"
                smap = _as_map(grid, entry.image_id, decision.class_index, "vanilla" if method == "vanilla" else "smoothgrad")
                save_png(base.with_suffix(".png"), overlay(smap, self._view(member_ids[0], image()), alpha))
                export_map_csv(base.with_suffix(".csv"), grid)
            return [base.with_suffix(".png"), base.with_suffix(".csv")]

        done, failures = self._map_images(0, entries, per_image)
        files = [p for _, paths in done for p in paths]
        return self._finish(0, files, failures)


def _as_map(grid: np.ndarray, image_id: str, class_index: int, method: SaliencyMethod = "smoothgrad") -> SaliencyMap:
    return SaliencyMap(values=grid, raw=grid, image_id=image_id, target_class=int(class_index), method=method)


def run_experiment(
    config: RunConfig,
    manifest: Manifest,
    which: int,
    *,
    catalog: LabelCatalog,
    output_dir: Path,
    cache_dir: Path,
    weights_dir: Optional[Path] = None,
    device: str = "cpu",
    member_factory: Optional[MemberFactory] = None,
) -> ExperimentResult:
    runner = ExperimentRunner(
        config,
        manifest,
        catalog,
        output_dir=output_dir,
        cache_dir=cache_dir,
        weights_dir=weights_dir,
        device=device,
        member_factory=member_factory,
    )
    return runner.run(which)


def write_errors(output_dir: Path, failures: Sequence[ImageFailure]) -> Path:
    """``errors.csv`` with one row per failed image (header only when none failed)."""
    rows = [
        {"Image": f.image_id, "Experiment": f.experiment, "Stage": f.stage, "Error": f.message}
        for f in failures
    ]
    return emit_report(rows, "csv", Path(output_dir) / "errors.csv", columns=ERROR_COLUMNS)
