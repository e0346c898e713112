from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)

LOCK_STRIPES = 64


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cache_key(**parts: Any) -> str:
    """Digest of the canonical JSON encoding of ``parts``."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ArrayCache:
    """On-disk cache of float arrays keyed by digest.

    Files live at ``<root>/<namespace>/<key[:2]>/<key>.npy``. Writes go to a
    temp file in the same directory and are renamed into place; writes for the
    same key are serialized within the process through a fixed pool of
    striped locks.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0
        self._locks = tuple(threading.Lock() for _ in range(LOCK_STRIPES))
        self._guard = threading.Lock()

    def _path(self, namespace: str, key: str) -> Path:
        return self.root / namespace / key[:2] / f"{key}.npy"

    def _lock_for(self, key: str) -> threading.Lock:
        return self._locks[hash(key) % LOCK_STRIPES]

    def get(self, namespace: str, key: str) -> Optional[np.ndarray]:
        path = self._path(namespace, key)
        if not path.exists():
            with self._guard:
                self.misses += 1
            return None
        try:
            arr = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as e:
            logger.warning("Ignoring unreadable cache entry %s: %s", path, e)
            with self._guard:
                self.misses += 1
            return None
        with self._guard:
            self.hits += 1
        logger.debug("cache hit %s/%s", namespace, key[:12])
        return arr

    def put(self, namespace: str, key: str, value: np.ndarray) -> Path:
        path = self._path(namespace, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock_for(key):
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{key[:12]}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as f:
                    np.save(f, np.asarray(value), allow_pickle=False)
                os.replace(tmp, path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        return path

    def get_or_compute(self, namespace: str, key: str, compute) -> np.ndarray:
        cached = self.get(namespace, key)
        if cached is not None:
            return cached
        value = np.asarray(compute())
        self.put(namespace, key, value)
        return value
