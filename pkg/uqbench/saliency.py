"""Gradient saliency: vanilla input gradients, SmoothGrad and ensemble maps.

Gradients are taken of the pre-softmax class score with respect to the
normalized input. Per-pixel magnitude is the max over channels of the
absolute gradient.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .modelzoo import ModelMember
from .types import SaliencyMap, SaliencyParams

logger = logging.getLogger(__name__)

CLIP_PERCENTILE = 99.0


def input_gradient(member: ModelMember, input: np.ndarray, class_index: int) -> np.ndarray:
    """d score(class) / d input, shape 3 x H x W, float64."""
    import torch

    member.check_input(input)
    if class_index < 0:
        raise ValueError(f"Class index out of range: {class_index}")

    x = torch.as_tensor(np.asarray(input), dtype=member.dtype, device=member.device).clone()
    x.requires_grad_(True)
    with torch.enable_grad():
        scores = member.logits(x.unsqueeze(0))
        if class_index >= scores.shape[1]:
            raise ValueError(f"Class index out of range: {class_index} (K={scores.shape[1]})")
        (grad,) = torch.autograd.grad(scores[0, class_index], x)
    if grad is None:  # pragma: no cover
        raise RuntimeError(f"Gradient unavailable for {member.member_id}")
    return grad.detach().cpu().numpy().astype(np.float64)


def _magnitude(grad: np.ndarray) -> np.ndarray:
    return np.abs(grad).max(axis=0)


def normalize_map(raw: np.ndarray, percentile: float = CLIP_PERCENTILE) -> np.ndarray:
    """Clip at the given percentile, then scale to [0, 1]; an all-zero map stays zero."""
    raw = np.asarray(raw, dtype=np.float64)
    hi = float(np.percentile(raw, percentile)) if raw.size else 0.0
    if not hi > 0:
        hi = float(raw.max()) if raw.size else 0.0
    if not hi > 0:
        return np.zeros_like(raw)
    return np.minimum(raw, hi) / hi


def vanilla_gradient(member: ModelMember, input: np.ndarray, class_index: int, *, image_id: str = "") -> SaliencyMap:
    raw = _magnitude(input_gradient(member, input, class_index))
    return SaliencyMap(
        values=normalize_map(raw),
        raw=raw,
        image_id=image_id,
        target_class=int(class_index),
        method="vanilla",
        params=SaliencyParams(n_samples=1, sigma_fraction=0.0),
    )


def smoothgrad(
    member: ModelMember,
    input: np.ndarray,
    class_index: int,
    n: int = 25,
    sigma_fraction: float = 0.15,
    seed: int = 0,
    *,
    image_id: str = "",
) -> SaliencyMap:
    """Mean gradient magnitude over ``n`` Gaussian-noised copies of the input.

    Noise std is ``sigma_fraction`` times the input's dynamic range. Sample i
    draws from a generator seeded with (seed, i), so each sample's noise is
    fixed independently of evaluation order.
    """
    params = SaliencyParams(n_samples=n, sigma_fraction=sigma_fraction, seed=seed)
    x = np.asarray(input)
    sigma = sigma_fraction * float(x.max() - x.min())

    acc = np.zeros(x.shape[1:], dtype=np.float64)
    for i in range(n):
        if sigma > 0:
            rng = np.random.default_rng([seed, i])
            noisy = (x + rng.normal(0.0, sigma, size=x.shape)).astype(x.dtype)
        else:
            noisy = x
        acc += _magnitude(input_gradient(member, noisy, class_index))
    raw = acc / n
    logger.debug("smoothgrad %s class=%d n=%d sigma=%.4f", member.member_id, class_index, n, sigma)
    return SaliencyMap(
        values=normalize_map(raw),
        raw=raw,
        image_id=image_id,
        target_class=int(class_index),
        method="smoothgrad",
        params=params,
    )


def ensemble_saliency(
    members: Sequence[ModelMember],
    input: np.ndarray,
    class_index: int,
    params: SaliencyParams = SaliencyParams(),
    *,
    image_id: str = "",
) -> SaliencyMap:
    """Mean of the members' normalized SmoothGrad maps, rescaled to a max of 1."""
    if not members:
        raise ValueError("ensemble_saliency needs at least one member")
    maps = [
        smoothgrad(m, input, class_index, params.n_samples, params.sigma_fraction, params.seed, image_id=image_id).values
        for m in members
    ]
    return combine_maps(maps, image_id=image_id, class_index=class_index, params=params)


def combine_maps(maps: Sequence[np.ndarray], *, image_id: str, class_index: int, params: SaliencyParams) -> SaliencyMap:
    if not maps:
        raise ValueError("No maps to combine")
    shapes = {np.asarray(m).shape for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"Saliency maps differ in shape: {sorted(shapes)}")
    mean = np.mean(np.stack([np.asarray(m, dtype=np.float64) for m in maps]), axis=0)
    top = float(mean.max())
    values = mean / top if top > 0 else np.zeros_like(mean)
    return SaliencyMap(
        values=values,
        raw=mean,
        image_id=image_id,
        target_class=int(class_index),
        method="ensemble_smoothgrad",
        params=params,
    )
