from __future__ import annotations

import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .labelspace import AcceptedClassSet, LabelCatalog, is_correct, prediction_from_probs
from .modelzoo import ModelMember
from .types import PerturbationSpec, Prediction, RobustnessRecord

FILTER_KINDS = ("grayscale", "sepia", "gaussian_blur", "hue_shift")

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SEPIA_MATRIX = np.array(
    [
        [0.393, 0.769, 0.189],
        [0.349, 0.686, 0.168],
        [0.272, 0.534, 0.131],
    ]
)

# Experiment 3 defaults: one rotation and one color filter
DEFAULT_SUITE = (
    PerturbationSpec(kind="rotate", degrees=180.0),
    PerturbationSpec(kind="sepia"),
)


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def _split_alpha(image: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
    img = np.asarray(image)
    if img.ndim == 2:
        return np.repeat(img[:, :, None], 3, axis=2), None
    if img.shape[2] == 4:
        return img[:, :, :3], img[:, :, 3:]
    if img.shape[2] == 1:
        return np.repeat(img, 3, axis=2), None
    return img, None


def _merge_alpha(rgb: np.ndarray, alpha: Optional[np.ndarray]) -> np.ndarray:
    return rgb if alpha is None else np.concatenate([rgb, alpha], axis=2)


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation.

    Multiples of 90 degrees are exact pixel permutations. Other angles use
    bilinear resampling onto a canvas enlarged to hold the whole rotated image,
    with black fill.
    """
    img = np.asarray(image)
    if img.size == 0:
        raise ValueError(f"Cannot rotate an empty image: shape {img.shape}")

    d = float(degrees) % 360.0
    if d % 90.0 == 0.0:
        return np.ascontiguousarray(np.rot90(img, k=int(d // 90.0)))

    import cv2  # lazy

    h, w = img.shape[:2]
    m = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), d, 1.0)
    cos, sin = abs(m[0, 0]), abs(m[0, 1])
    new_w = int(math.ceil(h * sin + w * cos))
    new_h = int(math.ceil(h * cos + w * sin))
    m[0, 2] += new_w / 2.0 - w / 2.0
    m[1, 2] += new_h / 2.0 - h / 2.0
    return cv2.warpAffine(
        img,
        m,
        (new_w, new_h),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def grayscale(image: np.ndarray) -> np.ndarray:
    rgb, alpha = _split_alpha(image)
    luma = _to_uint8(rgb.astype(np.float64) @ LUMA_WEIGHTS)
    return _merge_alpha(np.repeat(luma[:, :, None], 3, axis=2), alpha)


def sepia(image: np.ndarray) -> np.ndarray:
    rgb, alpha = _split_alpha(image)
    return _merge_alpha(_to_uint8(rgb.astype(np.float64) @ SEPIA_MATRIX.T), alpha)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D normalized Gaussian kernel truncated at 3 sigma."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"Blur sigma must be >= 0, got {sigma}")
    img = np.asarray(image)
    if sigma == 0:
        return img.copy()

    import cv2  # lazy

    k = gaussian_kernel(sigma)
    out = cv2.sepFilter2D(img.astype(np.float64), cv2.CV_64F, k, k, borderType=cv2.BORDER_REFLECT_101)
    return _to_uint8(out).reshape(img.shape)


def hue_shift(image: np.ndarray, shift: float) -> np.ndarray:
    """Rotate hue by ``shift`` degrees in HSV space."""
    if not -180.0 <= shift <= 180.0:
        raise ValueError(f"Hue shift must be within [-180, 180], got {shift}")
    import cv2  # lazy

    rgb, alpha = _split_alpha(image)
    hsv = cv2.cvtColor(rgb.astype(np.float32) / 255.0, cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = np.mod(hsv[:, :, 0] + np.float32(shift), np.float32(360.0))
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return _merge_alpha(_to_uint8(out.astype(np.float64) * 255.0), alpha)


_FILTERS: Dict[str, Callable[[np.ndarray, PerturbationSpec], np.ndarray]] = {
    "grayscale": lambda im, spec: grayscale(im),
    "sepia": lambda im, spec: sepia(im),
    "gaussian_blur": lambda im, spec: gaussian_blur(im, float(spec.sigma)),
    "hue_shift": lambda im, spec: hue_shift(im, float(spec.shift)),
}


def apply_filter(image: np.ndarray, spec: PerturbationSpec) -> np.ndarray:
    fn = _FILTERS.get(spec.kind)
    if fn is None:
        raise ValueError(f"Not a filter kind: {spec.kind!r}; expected one of {', '.join(FILTER_KINDS)}")
    if np.asarray(image).size == 0:
        raise ValueError("Cannot filter an empty image")
    return fn(image, spec)


def apply_perturbation(image: np.ndarray, spec: PerturbationSpec) -> np.ndarray:
    if spec.kind == "rotate":
        return rotate(image, float(spec.degrees))
    return apply_filter(image, spec)


def make_robustness_record(
    image_id: str,
    spec: PerturbationSpec,
    original: Prediction,
    perturbed: Prediction,
    accepted: AcceptedClassSet,
) -> RobustnessRecord:
    return RobustnessRecord(
        image_id=image_id,
        ground_truth=accepted.ground_truth_name,
        original_prediction=original,
        perturbed_prediction=perturbed,
        spec=spec,
        flipped=original.class_index != perturbed.class_index,
        originally_correct=is_correct(original.class_index, accepted),
        perturbed_correct=is_correct(perturbed.class_index, accepted),
    )


def robustness_eval(
    member: ModelMember,
    image: np.ndarray,
    specs: Sequence[PerturbationSpec],
    accepted: AcceptedClassSet,
    *,
    image_id: str = "",
    catalog: Optional[LabelCatalog] = None,
) -> List[RobustnessRecord]:
    """Classify the image once as-is and once per perturbation; one record per spec."""
    if np.asarray(image).size == 0:
        raise ValueError("robustness_eval needs a non-empty image")
    if not specs:
        return []

    original = prediction_from_probs(member.predict_image(image), catalog)
    records = []
    for spec in specs:
        perturbed = prediction_from_probs(member.predict_image(apply_perturbation(image, spec)), catalog)
        records.append(make_robustness_record(image_id, spec, original, perturbed, accepted))
    return records
