from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .types import ProbabilityVector

logger = logging.getLogger(__name__)

MEMBER_IDS: Tuple[str, ...] = ("resnet50", "vgg16", "densenet121", "alexnet", "googlenet")
DEFAULT_WEIGHTS = "IMAGENET1K_V1"

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class WeightsUnavailableError(RuntimeError):
    """Raised when a member's network cannot be imported, downloaded or loaded."""


@dataclass(frozen=True)
class PreprocessSpec:
    resize_short_side: int = 256
    center_crop: int = 224
    channel_means: Tuple[float, float, float] = IMAGENET_MEAN
    channel_stds: Tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self) -> None:
        if self.center_crop < 1 or self.center_crop > self.resize_short_side:
            raise ValueError(
                f"center_crop must be within [1, resize_short_side], got {self.center_crop} > {self.resize_short_side}"
            )
        if len(self.channel_means) != 3 or len(self.channel_stds) != 3:
            raise ValueError("channel_means and channel_stds need exactly 3 values")
        if any(s <= 0 for s in self.channel_stds):
            raise ValueError(f"channel_stds must be strictly positive, got {self.channel_stds}")

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return 3, self.center_crop, self.center_crop


def list_members() -> List[str]:
    return list(MEMBER_IDS)


def load_image(path: Path) -> np.ndarray:
    """Decode a PNG/JPEG into an RGB, RGBA or single-channel uint8 array."""
    import cv2  # lazy

    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ValueError(f"Failed to read image: {path}")
    if img.dtype == np.uint16:
        img = (img // 257).astype(np.uint8)
    if img.ndim == 3 and img.shape[2] == 3:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGBA)
    return img


def to_rgb(image: np.ndarray) -> np.ndarray:
    """Grayscale is replicated to 3 channels; an alpha channel is dropped."""
    img = np.asarray(image)
    if img.size == 0 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"Zero-size image: shape {img.shape}")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3, 4):
        raise ValueError(f"Unsupported image shape {img.shape}; expected 1, 3 or 4 channels")
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    elif img.shape[2] == 4:
        img = img[:, :, :3]
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    return np.ascontiguousarray(img)


def preprocess_view(image: np.ndarray, spec: PreprocessSpec = PreprocessSpec()) -> np.ndarray:
    """Resize the short side, then center-crop; returns the uint8 RGB crop."""
    from PIL import Image  # lazy

    rgb = to_rgb(image)
    h, w = rgb.shape[:2]
    short = spec.resize_short_side
    if h <= w:
        new_h, new_w = short, max(short, int(short * w / h))
    else:
        new_h, new_w = max(short, int(short * h / w)), short
    resized = np.asarray(Image.fromarray(rgb).resize((new_w, new_h), Image.BILINEAR))

    crop = spec.center_crop
    top = int(round((new_h - crop) / 2.0))
    left = int(round((new_w - crop) / 2.0))
    return np.ascontiguousarray(resized[top:top + crop, left:left + crop])


def preprocess(image: np.ndarray, spec: PreprocessSpec = PreprocessSpec()) -> np.ndarray:
    """Normalized float32 array of shape 3 x crop x crop."""
    view = preprocess_view(image, spec).astype(np.float32) / 255.0
    mean = np.asarray(spec.channel_means, dtype=np.float32)
    std = np.asarray(spec.channel_stds, dtype=np.float32)
    arr = (view - mean) / std
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


class ModelMember:
    """One committee member: a pretrained torchvision classifier.

    The network is built lazily on first use so that listing members, reading
    caches and preprocessing never pay the torch import. Passing ``network``
    replaces the torchvision model with any module mapping (N, 3, H, W) to
    (N, K) raw scores.
    """

    def __init__(
        self,
        member_id: str,
        *,
        weights_source: str = DEFAULT_WEIGHTS,
        weights_dir: Optional[Path] = None,
        input_spec: PreprocessSpec = PreprocessSpec(),
        device: str = "cpu",
        network=None,
    ):
        if network is None and member_id not in MEMBER_IDS:
            raise ValueError(f"Unknown member id {member_id!r}; expected one of {', '.join(MEMBER_IDS)}")
        self.member_id = member_id
        if network is not None and weights_source == DEFAULT_WEIGHTS:
            weights_source = "custom"
        self.weights_source = weights_source
        self.weights_dir = Path(weights_dir) if weights_dir is not None else None
        self.input_spec = input_spec
        self.device = device
        self.invocations = 0
        self._model = network
        if network is not None:
            network.eval()

    def __repr__(self) -> str:
        return f"ModelMember({self.member_id!r}, weights_source={self.weights_source!r})"

    def _load(self):
        if self._model is not None:
            return
        try:
            import torch
            from torchvision.models import get_model
        except Exception as e:  # pragma: no cover
            raise WeightsUnavailableError(
                "torch/torchvision are not installed or failed to import. "
                "Install requirements.txt to use pretrained members."
            ) from e

        if self.weights_dir is not None:
            self.weights_dir.mkdir(parents=True, exist_ok=True)
            # torchvision stores files as <hub_dir>/checkpoints/<arch>-<hash>.pth
            torch.hub.set_dir(str(self.weights_dir))
        try:
            model = get_model(self.member_id, weights=self.weights_source)
        except Exception as e:
            raise WeightsUnavailableError(
                f"Could not load weights {self.weights_source!r} for {self.member_id}: {e}"
            ) from e
        model.eval()
        self._model = model.to(self.device)
        logger.info("Loaded member %s (%s)", self.member_id, self.weights_source)

    @property
    def network(self):
        self._load()
        return self._model

    @property
    def dtype(self):
        import torch

        params = list(self.network.parameters())
        return params[0].dtype if params else torch.float32

    def logits(self, batch):
        """Raw pre-softmax scores for a (N, 3, H, W) tensor; gradients stay enabled."""
        self.invocations += 1
        return self.network(batch)

    def check_input(self, input: np.ndarray) -> None:
        shape = tuple(np.asarray(input).shape)
        if shape != self.input_spec.input_shape:
            raise ValueError(f"Input shape mismatch for {self.member_id}: expected {self.input_spec.input_shape}, got {shape}")

    def predict(self, input: np.ndarray) -> ProbabilityVector:
        """Softmax probabilities (float64, length K) for one normalized input."""
        import torch

        self.check_input(input)
        x = torch.as_tensor(np.asarray(input), dtype=self.dtype, device=self.device).unsqueeze(0)
        with torch.inference_mode():
            scores = self.logits(x)
            probs = torch.softmax(scores.to(torch.float64), dim=1)[0]
        out = probs.cpu().numpy()
        if not np.all(np.isfinite(out)):
            raise ValueError(f"Non-finite probabilities from {self.member_id}")
        return out

    def predict_image(self, image: np.ndarray) -> ProbabilityVector:
        return self.predict(preprocess(image, self.input_spec))

    def reference_accuracy(self) -> Optional[float]:
        return reference_accuracy(self.member_id, self.weights_source)


def predict(member: ModelMember, input: np.ndarray) -> ProbabilityVector:
    return member.predict(input)


def reference_accuracy(member_id: str, weights_source: str = DEFAULT_WEIGHTS) -> Optional[float]:
    """Published ImageNet-1k top-1 accuracy (percent) from torchvision weight metadata."""
    try:
        from torchvision.models import get_model_weights
    except Exception:  # pragma: no cover
        return None
    weights = get_model_weights(member_id)[weights_source]
    metrics = weights.meta.get("_metrics", {}).get("ImageNet-1K", {})
    acc = metrics.get("acc@1")
    return float(acc) if acc is not None else None


def top1_accuracy(member: ModelMember, samples: Iterable[Tuple[np.ndarray, int]]) -> float:
    """Top-1 accuracy in percent over (decoded image, label index) pairs."""
    total = 0
    correct = 0
    for image, label in samples:
        probs = member.predict_image(image)
        correct += int(int(np.argmax(probs)) == int(label))
        total += 1
    if total == 0:
        raise ValueError("No samples to evaluate")
    return 100.0 * correct / total
