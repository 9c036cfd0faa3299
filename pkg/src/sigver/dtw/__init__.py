"""DTW alignment of feature sequences and fixed-length aligned pairs.

The cumulative-cost fill and the backtrack run in a compiled Cython kernel when
it has been built (``pip install -e .``); otherwise a numpy implementation is
used.  Set ``SIGVER_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import _fallback

if os.environ.get("SIGVER_PURE_PYTHON"):
    _core = None
else:
    try:
        from . import _core
    except ImportError:
        _core = None

BACKEND = "cython" if _core is not None else "python"
PAIR_LENGTH = 2000

LABEL_CODES = {"match": 0, "nonmatch_random": 1, "nonmatch_skilled": 2, None: 255}
_CODE_LABELS = {v: k for k, v in LABEL_CODES.items()}
_MAGIC = b"SVAP"
_HEADER = struct.Struct("<4sIII")  # magic, valid_length, label code, channels


class AlignmentError(ValueError):
    pass


def _kernels(backend: str | None):
    backend = backend or BACKEND
    if backend == "cython":
        if _core is None:
            raise AlignmentError("compiled DTW kernel is not built")
        return _core
    if backend == "python":
        return _fallback
    raise AlignmentError(f"unknown DTW backend {backend!r}")


def _as_matrix(seq) -> np.ndarray:
    values = getattr(seq, "values", seq)
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise AlignmentError(f"expected a non-empty (T, C) sequence, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class WarpingPath:
    steps: np.ndarray  # (L, 2) int64 index pairs
    cost: float

    def __len__(self) -> int:
        return len(self.steps)


def accumulated_cost(a, b, *, backend: str | None = None) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise AlignmentError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    return np.asarray(_kernels(backend).accumulated_cost(a, b))


def dtw(a, b, *, backend: str | None = None) -> WarpingPath:
    """Unconstrained DTW with Euclidean frame distance.

    Accepts FeatureSequence objects or (T, C) arrays.  Backtracking prefers the
    diagonal predecessor, then (i-1, j), then (i, j-1) on ties.
    """
    kernels = _kernels(backend)
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise AlignmentError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    D = kernels.accumulated_cost(a, b)
    return WarpingPath(steps=np.asarray(kernels.backtrack(D)), cost=float(D[-1, -1]))


@dataclass(frozen=True, eq=False)
class AlignedPair:
    a: np.ndarray  # (2000, C) float32
    b: np.ndarray
    valid_length: int
    label: str | None = None

    def __post_init__(self):
        if self.label not in LABEL_CODES:
            raise AlignmentError(f"unknown pair label {self.label!r}")

    def to_bytes(self) -> bytes:
        """16-byte header then little-endian float32 ``[a | b]``."""
        header = _HEADER.pack(_MAGIC, self.valid_length, LABEL_CODES[self.label], self.a.shape[1])
        body = np.concatenate([self.a, self.b]).astype("<f4").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, payload: bytes, length: int = PAIR_LENGTH) -> "AlignedPair":
        magic, valid, code, channels = _HEADER.unpack_from(payload)
        if magic != _MAGIC:
            raise AlignmentError("not an aligned-pair record")
        if code not in _CODE_LABELS:
            raise AlignmentError(f"unknown label code {code}")
        body = np.frombuffer(payload, dtype="<f4", offset=_HEADER.size)
        body = body.reshape(2, length, channels).astype(np.float32)
        return cls(a=body[0], b=body[1], valid_length=int(valid), label=_CODE_LABELS[code])


def expand_along_path(a, b, steps: np.ndarray, length: int = PAIR_LENGTH,
                      dtype=np.float32) -> tuple[np.ndarray, np.ndarray, int]:
    """Rows ``a[i_k]`` / ``b[j_k]`` along the path, tail-truncated and zero-padded."""
    a, b = _as_matrix(a), _as_matrix(b)
    steps = steps[:length]
    valid = len(steps)
    out_a = np.zeros((length, a.shape[1]), dtype=dtype)
    out_b = np.zeros((length, b.shape[1]), dtype=dtype)
    out_a[:valid] = a[steps[:, 0]]
    out_b[:valid] = b[steps[:, 1]]
    return out_a, out_b, valid


def prepare_pair(a, b, label: str | None = None, *, length: int = PAIR_LENGTH,
                 backend: str | None = None) -> AlignedPair:
    path = dtw(a, b, backend=backend)
    out_a, out_b, valid = expand_along_path(a, b, path.steps, length)
    return AlignedPair(out_a, out_b, valid, label)
