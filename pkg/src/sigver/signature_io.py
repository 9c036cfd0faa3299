"""Raw signature containers, file adapters, resampling and a synthetic corpus.

Two on-disk formats are understood:

``canonical_tsv``
    UTF-8 text, header ``x<TAB>y<TAB>timestamp_ms<TAB>pressure``, one sample per row.
``legacy7``
    SVC2004-style: first line is the point count, then whitespace separated
    ``X Y TIMESTAMP BUTTON_STATUS AZIMUTH ALTITUDE PRESSURE`` rows.  Azimuth and
    altitude are dropped and ``BUTTON_STATUS == 0`` forces pressure to zero.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CANONICAL_HEADER = ("x", "y", "timestamp_ms", "pressure")
DEFAULT_RATE_HZ = 100.0
LABELS = ("genuine", "skilled_forgery")


class SignatureError(ValueError):
    """Malformed signature file or invariant violation."""


@dataclass(frozen=True, eq=False)
class RawSignature:
    x: np.ndarray
    y: np.ndarray
    pressure: np.ndarray
    timestamp: np.ndarray
    subject_id: str = ""
    sample_id: str = ""
    label: str = "genuine"

    def __post_init__(self):
        arrays = {}
        for name in ("x", "y", "pressure", "timestamp"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise SignatureError(f"{name} must be one-dimensional")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays[name] = arr
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1:
            raise SignatureError(f"sequence lengths differ: {sorted(lengths)}")
        n = lengths.pop()
        if n < 2:
            raise SignatureError(f"signature needs at least 2 points, got {n}")
        if self.label not in LABELS:
            raise SignatureError(f"unknown label {self.label!r}")
        t = arrays["timestamp"]
        bad = np.flatnonzero(np.diff(t) < 0)
        if bad.size:
            raise SignatureError(f"non-monotonic timestamp at sample {bad[0] + 1}")
        if t[-1] == t[0]:
            raise SignatureError("zero duration")
        if np.any(arrays["pressure"] < 0):
            raise SignatureError("negative pressure")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise SignatureError(f"non-finite value in {name}")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def key(self) -> str:
        return f"{self.subject_id}/{self.sample_id}"

    def equals(self, other: "RawSignature") -> bool:
        return (
            self.subject_id == other.subject_id
            and self.sample_id == other.sample_id
            and self.label == other.label
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("x", "y", "pressure", "timestamp")
            )
        )


@dataclass(frozen=True, eq=False)
class UniformSignature:
    x: np.ndarray
    y: np.ndarray
    pressure: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        for name in ("x", "y", "pressure"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (len(self.x) == len(self.y) == len(self.pressure)):
            raise SignatureError("uniform signature sequences differ in length")
        if len(self.x) < 2:
            raise SignatureError("uniform signature needs at least 2 samples")
        if self.rate_hz <= 0:
            raise SignatureError("rate_hz must be positive")

    @property
    def length(self) -> int:
        return len(self.x)


# --------------------------------------------------------------------------- files


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


atomic_write_text = _atomic_write_text


def _parse_float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise SignatureError(f"line {lineno}: cannot parse number {token!r}") from None


def _check_monotonic(t: Sequence[float]) -> None:
    for k in range(1, len(t)):
        if t[k] < t[k - 1]:
            raise SignatureError(f"non-monotonic timestamp at line {k + 1}")


def parse_signature(
    path: str | os.PathLike,
    format: str = "canonical_tsv",
    *,
    subject_id: str = "",
    sample_id: str | None = None,
    label: str = "genuine",
) -> RawSignature:
    """Read one signature file.

    Line numbers in error messages count data rows from 1; the header (or the
    legacy point-count line) is line 0.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if sample_id is None:
        sample_id = path.stem

    xs: list[float] = []
    ys: list[float] = []
    ts: list[float] = []
    ps: list[float] = []
    if format == "canonical_tsv":
        if not lines or tuple(lines[0].strip().split("\t")) != CANONICAL_HEADER:
            raise SignatureError("line 0: expected header " + "\\t".join(CANONICAL_HEADER))
        for lineno, line in enumerate(lines[1:], start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise SignatureError(f"line {lineno}: expected 4 columns, got {len(parts)}")
            x, y, t, p = (_parse_float(tok, lineno) for tok in parts)
            xs.append(x)
            ys.append(y)
            ts.append(t)
            ps.append(p)
    elif format == "legacy7":
        if not lines:
            raise SignatureError("line 0: empty file")
        try:
            count = int(lines[0].strip())
        except ValueError:
            raise SignatureError(f"line 0: expected point count, got {lines[0]!r}") from None
        for lineno, line in enumerate(lines[1:], start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 7:
                raise SignatureError(f"line {lineno}: expected 7 columns, got {len(parts)}")
            x, y, t, button, _az, _alt, p = (_parse_float(tok, lineno) for tok in parts)
            xs.append(x)
            ys.append(y)
            ts.append(t)
            ps.append(0.0 if button == 0 else p)
        if count != len(xs):
            raise SignatureError(f"line 0: point count {count} does not match {len(xs)} rows")
    else:
        raise SignatureError(f"unknown signature format {format!r}")

    if len(xs) < 2:
        raise SignatureError(f"signature needs at least 2 points, got {len(xs)}")
    _check_monotonic(ts)
    return RawSignature(
        x=np.array(xs), y=np.array(ys), pressure=np.array(ps), timestamp=np.array(ts),
        subject_id=subject_id, sample_id=sample_id, label=label,
    )


def format_canonical(sig: RawSignature) -> str:
    rows = ["\t".join(CANONICAL_HEADER)]
    for x, y, t, p in zip(sig.x, sig.y, sig.timestamp, sig.pressure):
        rows.append(f"{x:.6f}\t{y:.6f}\t{t:.6f}\t{p:.6f}")
    return "\n".join(rows) + "\n"


def write_signature(sig: RawSignature, path: str | os.PathLike) -> None:
    """Write ``sig`` as canonical TSV (6 decimals), atomically."""
    _atomic_write_text(Path(path), format_canonical(sig))


# ---------------------------------------------------------------------- manifests


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    sample_id: str
    label: str
    path: str


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise SignatureError(f"{path}: manifest must be a JSON array")
    entries = []
    for k, item in enumerate(raw):
        try:
            entries.append(ManifestEntry(
                str(item["subject_id"]), str(item["sample_id"]), str(item["label"]), str(item["path"])))
        except (KeyError, TypeError):
            raise SignatureError(f"{path}: entry {k} lacks subject_id/sample_id/label/path") from None
    return entries


def load_dataset(manifest_path: str | os.PathLike) -> list[RawSignature]:
    """Load every signature named by a dataset manifest (paths relative to it)."""
    manifest_path = Path(manifest_path)
    out = []
    for entry in read_manifest(manifest_path):
        p = Path(entry.path)
        if not p.is_absolute():
            p = manifest_path.parent / p
        fmt = "legacy7" if p.suffix.lower() in (".txt", ".sig") and _looks_legacy(p) else "canonical_tsv"
        out.append(parse_signature(p, fmt, subject_id=entry.subject_id,
                                   sample_id=entry.sample_id, label=entry.label))
    return out


def _looks_legacy(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
    return head.isdigit()


def write_dataset(signatures: Iterable[RawSignature], out_dir: str | os.PathLike) -> Path:
    """Write signatures as TSV files plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    entries = []
    for sig in signatures:
        rel = f"{sig.subject_id}/{sig.sample_id}.tsv"
        write_signature(sig, out_dir / rel)
        entries.append({"subject_id": sig.subject_id, "sample_id": sig.sample_id,
                        "label": sig.label, "path": rel})
    manifest = out_dir / "manifest.json"
    _atomic_write_text(manifest, json.dumps(entries, indent=1) + "\n")
    return manifest


# --------------------------------------------------------------------- resampling


def resample_uniform(sig: RawSignature, rate_hz: float = DEFAULT_RATE_HZ) -> UniformSignature:
    """Linearly interpolate x, y and pressure onto a uniform ``rate_hz`` grid.

    The grid runs from the first timestamp in steps of ``1000 / rate_hz`` ms and
    has ``floor(duration_s * rate_hz) + 1`` points.
    """
    if rate_hz <= 0:
        raise SignatureError("rate_hz must be positive")
    t = sig.timestamp
    duration_ms = t[-1] - t[0]
    if duration_ms <= 0:
        raise SignatureError("zero duration")
    step = 1000.0 / rate_hz
    # guard against 0.29 * 100 == 28.999999999999996
    n = int(math.floor(duration_ms * rate_hz / 1000.0 + 1e-9)) + 1
    grid = t[0] + np.arange(n) * step
    return UniformSignature(
        x=np.interp(grid, t, sig.x),
        y=np.interp(grid, t, sig.y),
        pressure=np.interp(grid, t, sig.pressure),
        rate_hz=float(rate_hz),
    )


# ---------------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SyntheticSubjectSpec:
    seed: int
    num_harmonics: int
    amplitude: np.ndarray = field(repr=False)   # (2, H): x and y amplitudes, device units
    frequency: np.ndarray = field(repr=False)   # (2, H): cycles per signature
    phase: np.ndarray = field(repr=False)       # (2, H)
    duration_s: float = 4.0
    pressure_freq: float = 2.0
    pressure_phase: float = 0.0
    gaps: tuple[tuple[float, float], ...] = ()  # pen-up (start, width) as fractions

    @classmethod
    def draw(cls, seed: int) -> "SyntheticSubjectSpec":
        rng = np.random.default_rng(seed)
        h = int(rng.integers(2, 6))
        amplitude = rng.uniform(300.0, 2500.0, size=(2, h)) / np.arange(1, h + 1)
        frequency = rng.uniform(0.5, 4.0, size=(2, h))
        phase = rng.uniform(-np.pi, np.pi, size=(2, h))
        n_gaps = int(rng.integers(1, 4))
        starts = np.sort(rng.uniform(0.1, 0.85, size=n_gaps))
        widths = rng.uniform(0.03, 0.06, size=n_gaps)
        return cls(
            seed=int(seed), num_harmonics=h, amplitude=amplitude, frequency=frequency,
            phase=phase, duration_s=float(rng.uniform(2.0, 10.0)),
            pressure_freq=float(rng.uniform(1.0, 4.0)),
            pressure_phase=float(rng.uniform(-np.pi, np.pi)),
            gaps=tuple(zip(starts.tolist(), widths.tolist())),
        )


def _jitter(rng: np.random.Generator, values: np.ndarray, low: float, high: float) -> np.ndarray:
    """Multiply by (1 +/- r) with r ~ U(low, high) and a random sign per entry."""
    r = rng.uniform(low, high, size=np.shape(values))
    sign = rng.choice([-1.0, 1.0], size=np.shape(values))
    return values * (1.0 + sign * r)


def _render(
    spec: SyntheticSubjectSpec,
    rng: np.random.Generator,
    *,
    rel_low: float,
    rel_high: float,
    warp: float,
    noise: float,
    subject_id: str,
    sample_id: str,
    label: str,
) -> RawSignature:
    amplitude = _jitter(rng, spec.amplitude, rel_low, rel_high)
    frequency = _jitter(rng, spec.frequency, rel_low, rel_high)
    phase = spec.phase + rng.uniform(-1.0, 1.0, size=spec.phase.shape) * rel_high * np.pi
    duration = spec.duration_s * (1.0 + rng.uniform(-rel_high, rel_high))
    duration = float(np.clip(duration, 2.0, 10.0))

    # ~200 Hz device clock with millisecond quantisation and jitter
    n = int(round(duration * 200.0))
    t_ms = np.round(np.arange(n) * 5.0 + rng.uniform(-1.0, 1.0, size=n))
    t_ms = np.maximum.accumulate(t_ms - t_ms[0])

    tau = np.linspace(0.0, 1.0, n)
    if warp:
        # monotone velocity-profile warp: derivative 1 + warp*cos(.) stays > 0 for warp < 1
        c = rng.uniform(1.0, 3.0)
        tau = tau + warp * np.sin(2 * np.pi * c * tau) / (2 * np.pi * c)
        tau = (tau - tau[0]) / (tau[-1] - tau[0])

    arg = 2 * np.pi * frequency[:, :, None] * tau[None, None, :] + phase[:, :, None]
    xy = (amplitude[:, :, None] * np.sin(arg)).sum(axis=1)
    scale = np.abs(spec.amplitude).sum(axis=1, keepdims=True)
    xy = xy + rng.normal(0.0, noise, size=xy.shape) * scale
    x = xy[0] + 5000.0
    y = xy[1] + 5000.0

    pressure = 600.0 * (1.0 + 0.35 * np.sin(2 * np.pi * spec.pressure_freq * tau + spec.pressure_phase))
    pressure = pressure * (1.0 + rng.normal(0.0, noise, size=n))
    pressure = np.clip(pressure, 1.0, None)
    for start, width in spec.gaps:
        s = start + rng.uniform(-1.0, 1.0) * rel_high * 0.2
        w = width * (1.0 + rng.uniform(-rel_high, rel_high))
        pressure[(tau >= s) & (tau < s + w)] = 0.0
    return RawSignature(x=x, y=y, pressure=pressure, timestamp=t_ms,
                        subject_id=subject_id, sample_id=sample_id, label=label)


def generate_synthetic_dataset(
    num_subjects: int,
    genuine_per_subject: int,
    forgeries_per_subject: int,
    seed: int,
) -> list[RawSignature]:
    """Deterministic sum-of-sinusoids corpus with genuine samples and skilled forgeries.

    Genuine samples jitter the subject's parameters by at most 5%; forgeries use
    15-30% jitter and a warped velocity profile.  Subject ids embed the seed so
    corpora drawn with different seeds never share subjects.
    """
    if min(num_subjects, genuine_per_subject, forgeries_per_subject) < 1:
        raise ValueError("all counts must be >= 1")
    root = np.random.SeedSequence(int(seed))
    out: list[RawSignature] = []
    for s, child in enumerate(root.spawn(num_subjects)):
        spec_seed, sample_seed = child.generate_state(2, dtype=np.uint64)
        spec = SyntheticSubjectSpec.draw(int(spec_seed))
        rng = np.random.default_rng(int(sample_seed))
        subject_id = f"syn{seed}-{s:03d}"
        for g in range(genuine_per_subject):
            out.append(_render(spec, rng, rel_low=0.0, rel_high=0.05, warp=0.0, noise=0.002,
                               subject_id=subject_id, sample_id=f"g{g:02d}", label="genuine"))
        for f in range(forgeries_per_subject):
            out.append(_render(spec, rng, rel_low=0.15, rel_high=0.30,
                               warp=float(rng.uniform(0.3, 0.6)), noise=0.004,
                               subject_id=subject_id, sample_id=f"f{f:02d}",
                               label="skilled_forgery"))
    return out
