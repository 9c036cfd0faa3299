"""Signature -> features -> DTW-aligned fixed-length pair arrays, with caching."""

from __future__ import annotations

import os
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import dtw as dtw_mod
from .features import signature_features
from .signature_io import RawSignature


def worker_count() -> int:
    """Worker-pool cap from ``SIGVER_THREADS`` (default: processor count)."""
    raw = os.environ.get("SIGVER_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


class PairPreparer:
    """Caches per-signature features and per-pair warping paths.

    Paths, not expanded matrices, are cached: a (2000, 23) float32 pair is
    ~370 kB while its path is a few kB, and re-expanding is a cheap gather.
    """

    def __init__(self, rate_hz: float = 100.0, length: int = dtw_mod.PAIR_LENGTH,
                 cache_size: int = 20000, threads: int | None = None):
        self.rate_hz = rate_hz
        self.length = length
        self.cache_size = cache_size
        self.threads = threads if threads is not None else worker_count()
        self._features: dict[str, np.ndarray] = {}
        self._paths: OrderedDict[tuple[str, str], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def features(self, sig: RawSignature) -> np.ndarray:
        key = sig.key
        with self._lock:
            cached = self._features.get(key)
        if cached is None:
            cached = signature_features(sig, self.rate_hz).values
            with self._lock:
                self._features[key] = cached
        return cached

    def path(self, enrolled: RawSignature, questioned: RawSignature) -> np.ndarray:
        key = (enrolled.key, questioned.key)
        with self._lock:
            steps = self._paths.get(key)
            if steps is not None:
                self._paths.move_to_end(key)
                return steps
        steps = dtw_mod.dtw(self.features(enrolled), self.features(questioned)).steps
        with self._lock:
            self._paths[key] = steps
            while len(self._paths) > self.cache_size:
                self._paths.popitem(last=False)
        return steps

    def aligned(self, enrolled: RawSignature, questioned: RawSignature,
                label: str | None = None) -> dtw_mod.AlignedPair:
        a, b, valid = dtw_mod.expand_along_path(
            self.features(enrolled), self.features(questioned),
            self.path(enrolled, questioned), self.length)
        return dtw_mod.AlignedPair(a, b, valid, label)

    def batch(self, pairs: Sequence, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
        """Stack aligned halves for ``pairs`` (anything with .enrolled/.questioned)."""
        def one(p):
            return dtw_mod.expand_along_path(
                self.features(p.enrolled), self.features(p.questioned),
                self.path(p.enrolled, p.questioned), self.length, dtype)

        if self.threads > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(one, pairs))  # map keeps pair order
        else:
            parts = [one(p) for p in pairs]
        a = np.stack([p[0] for p in parts])
        b = np.stack([p[1] for p in parts])
        return a, b
