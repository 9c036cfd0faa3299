"""The 23 local time functions and per-channel z-normalisation.

Channel order (0-based index, name):

====  ==========  ==========================================================
 0    x           horizontal position
 1    y           vertical position
 2    p           pressure
 3    theta       path tangent angle atan2(dy, dx)
 4    v           path velocity magnitude
 5    rho         log curvature radius ln(v / (|dtheta| + eps) + eps)
 6    a           total acceleration sqrt(dv^2 + (v dtheta)^2)
 7-13 d_*         first derivatives of channels 0-6
14    dd_x        second derivative of x
15    dd_y        second derivative of y
16    v_ratio     min(v) / (max(v) + eps) over a centred 5-sample window
17    alpha       angle of consecutive samples atan2(y[n]-y[n-1], x[n]-x[n-1])
18    d_alpha     derivative of alpha
19    sin_alpha
20    cos_alpha
21    lw_ratio5   stroke length / (window diameter + eps), 5-sample window
22    lw_ratio7   same over a 7-sample window
====  ==========  ==========================================================

Derivatives use unit time step: central differences inside, one-sided at the
ends; angle differences are wrapped into (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signature_io import UniformSignature

EPS = 1e-8
NUM_CHANNELS = 23
MIN_LENGTH = 7

CHANNEL_NAMES = (
    "x", "y", "p", "theta", "v", "rho", "a",
    "d_x", "d_y", "d_p", "d_theta", "d_v", "d_rho", "d_a",
    "dd_x", "dd_y",
    "v_ratio", "alpha", "d_alpha", "sin_alpha", "cos_alpha",
    "lw_ratio5", "lw_ratio7",
)
assert len(CHANNEL_NAMES) == NUM_CHANNELS


class FeatureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    values: np.ndarray  # (T, 23) float64
    channel_names: tuple[str, ...] = CHANNEL_NAMES

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != NUM_CHANNELS:
            raise FeatureError(f"expected (T, {NUM_CHANNELS}) values, got {values.shape}")
        if tuple(self.channel_names) != CHANNEL_NAMES:
            raise FeatureError("channel names do not match the fixed channel order")
        if not np.all(np.isfinite(values)):
            raise FeatureError("feature values contain NaN or Inf")
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def to_tsv(self) -> str:
        lines = ["\t".join(self.channel_names)]
        lines.extend("\t".join(f"{v:.9g}" for v in row) for row in self.values)
        return "\n".join(lines) + "\n"


def wrap_angle(d: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - d, 2 * np.pi)


def derivative(f: np.ndarray, *, angular: bool = False) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    wrap = wrap_angle if angular else (lambda d: d)
    out = np.empty_like(f)
    out[1:-1] = wrap(f[2:] - f[:-2]) / 2.0
    out[0] = wrap(f[1] - f[0])
    out[-1] = wrap(f[-1] - f[-2])
    return out


def _windows(f: np.ndarray, width: int) -> np.ndarray:
    """Centred windows, edge-padded so every sample gets a full window."""
    half = width // 2
    padded = np.pad(f, half, mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, width)


def velocity_ratio(v: np.ndarray, width: int = 5) -> np.ndarray:
    w = _windows(v, width)
    return w.min(axis=1) / (w.max(axis=1) + EPS)


def length_width_ratio(x: np.ndarray, y: np.ndarray, width: int) -> np.ndarray:
    """Path length inside a centred window over the diameter of its points.

    The diameter (largest pairwise distance) is used as the width so the ratio
    is rotation invariant.
    """
    wx = _windows(x, width)
    wy = _windows(y, width)
    length = np.hypot(np.diff(wx, axis=1), np.diff(wy, axis=1)).sum(axis=1)
    dx = wx[:, :, None] - wx[:, None, :]
    dy = wy[:, :, None] - wy[:, None, :]
    diameter = np.hypot(dx, dy).max(axis=(1, 2))
    return length / (diameter + EPS)


def extract_time_functions(sig: UniformSignature) -> FeatureSequence:
    """Compute the (T, 23) local time-function matrix of a uniform signature."""
    if sig.length < MIN_LENGTH:
        raise FeatureError("signature too short")
    x, y, p = sig.x, sig.y, sig.pressure

    dx = derivative(x)
    dy = derivative(y)
    theta = np.arctan2(dy, dx)
    v = np.hypot(dx, dy)
    dtheta = derivative(theta, angular=True)
    rho = np.log(v / (np.abs(dtheta) + EPS) + EPS)
    dv = derivative(v)
    a = np.sqrt(dv**2 + (v * dtheta) ** 2)

    alpha = np.empty_like(x)
    alpha[1:] = np.arctan2(np.diff(y), np.diff(x))
    alpha[0] = alpha[1]

    channels = [
        x, y, p, theta, v, rho, a,
        dx, dy, derivative(p), dtheta, dv, derivative(rho), derivative(a),
        derivative(dx), derivative(dy),
        velocity_ratio(v, 5),
        alpha, derivative(alpha, angular=True), np.sin(alpha), np.cos(alpha),
        length_width_ratio(x, y, 5), length_width_ratio(x, y, 7),
    ]
    return FeatureSequence(np.stack(channels, axis=1))


def znormalize_channels(fs: FeatureSequence) -> FeatureSequence:
    """Zero-mean, unit (population) std per channel; near-constant channels become 0."""
    values = fs.values
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    flat = std < 1e-8
    out = (values - mean) / np.where(flat, 1.0, std)
    out[:, flat] = 0.0
    return FeatureSequence(out)


def signature_features(sig, rate_hz: float = 100.0) -> FeatureSequence:
    """Raw signature -> resampled -> 23 channels -> z-normalised."""
    from .signature_io import resample_uniform

    return znormalize_channels(extract_time_functions(resample_uniform(sig, rate_hz)))
