"""Verification scores, EER by impostor type and DET curves.

The overall EER pools random and skilled impostor scores against the genuine
scores; the report records this in ``meta["overall"]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .signature_io import RawSignature, atomic_write_text

PAIR_LABELS = ("match", "nonmatch_random", "nonmatch_skilled")


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PairSpec:
    enrolled: RawSignature
    questioned: RawSignature
    label: str

    def __post_init__(self):
        if self.label not in PAIR_LABELS:
            raise ValueError(f"unknown pair label {self.label!r}")

    @property
    def key(self) -> tuple[str, str]:
        return self.enrolled.key, self.questioned.key


@dataclass
class ScoreSet:
    genuine: list[float] = field(default_factory=list)
    impostor_random: list[float] = field(default_factory=list)
    impostor_skilled: list[float] = field(default_factory=list)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.genuine), len(self.impostor_random), len(self.impostor_skilled)

    def add(self, label: str, score: float) -> None:
        if label == "match":
            self.genuine.append(score)
        elif label == "nonmatch_random":
            self.impostor_random.append(score)
        elif label == "nonmatch_skilled":
            self.impostor_skilled.append(score)
        else:
            raise ValueError(f"unknown comparison label {label!r}")


@dataclass(frozen=True)
class EER:
    eer: float
    threshold: float


@dataclass
class DetCurve:
    """(FAR, FRR) at each candidate threshold, thresholds ascending."""

    far: list[float]
    frr: list[float]
    thresholds: list[float]

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.far, self.frr))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["far", "frr", "threshold"])
        for row in zip(self.far, self.frr, self.thresholds):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _sweep(genuine, impostor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.sort(np.asarray(genuine, dtype=np.float64))
    i = np.sort(np.asarray(impostor, dtype=np.float64))
    if g.size == 0 or i.size == 0:
        raise ValueError("EER needs at least one genuine and one impostor score")
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([g, i])), [np.inf]])
    far = (i.size - np.searchsorted(i, thresholds, side="left")) / i.size   # impostor >= t
    frr = np.searchsorted(g, thresholds, side="left") / g.size              # genuine < t
    return thresholds, far, frr


def compute_eer(genuine: Sequence[float], impostor: Sequence[float]) -> EER:
    """EER at the threshold minimising |FAR - FRR| (lowest such threshold).

    Candidates are every distinct score plus -inf and +inf; the returned
    value is (FAR + FRR) / 2 at that threshold.
    """
    thresholds, far, frr = _sweep(genuine, impostor)
    k = int(np.argmin(np.abs(far - frr)))
    return EER(eer=float((far[k] + frr[k]) / 2), threshold=float(thresholds[k]))


def det_curve(genuine: Sequence[float], impostor: Sequence[float]) -> DetCurve:
    thresholds, far, frr = _sweep(genuine, impostor)
    return DetCurve(far.tolist(), frr.tolist(), thresholds.tolist())


# ----------------------------------------------------------------- comparisons


def subjects_of(signatures) -> set[str]:
    return {s.subject_id for s in signatures}


def check_disjoint(a: set[str], b: set[str]) -> None:
    overlap = sorted(set(a) & set(b))
    if overlap:
        raise ProtocolError(f"protocol error: overlapping subjects ({', '.join(overlap[:5])})")


def build_comparisons(dataset: Sequence[RawSignature], *, enrol: int = 1,
                      random_per_subject: int | None = None, seed: int = 0) -> list[PairSpec]:
    """Fixed comparison list for a labelled corpus.

    Per subject the first ``enrol`` genuine samples are references.  Every
    remaining genuine sample and every skilled forgery is compared with each
    reference; random impostors are genuine samples of other subjects
    (as many as there are genuine comparisons unless ``random_per_subject``).
    """
    by_subject: dict[str, dict[str, list[RawSignature]]] = {}
    for sig in dataset:
        by_subject.setdefault(sig.subject_id, {"genuine": [], "skilled_forgery": []})
        by_subject[sig.subject_id][sig.label].append(sig)
    subjects = sorted(by_subject)
    rng = np.random.default_rng(seed)
    out: list[PairSpec] = []
    for sid in subjects:
        genuine = by_subject[sid]["genuine"]
        refs, probes = genuine[:enrol], genuine[enrol:]
        others = [g for o in subjects if o != sid for g in by_subject[o]["genuine"]]
        for ref in refs:
            out.extend(PairSpec(ref, q, "match") for q in probes)
            out.extend(PairSpec(ref, q, "nonmatch_skilled") for q in by_subject[sid]["skilled_forgery"])
            n_random = random_per_subject if random_per_subject is not None else len(probes)
            if others and n_random:
                pick = rng.choice(len(others), size=min(n_random, len(others)), replace=False)
                out.extend(PairSpec(ref, others[k], "nonmatch_random") for k in sorted(pick))
    return out


# ---------------------------------------------------------------------- scoring


def compute_scores(model, comparisons: Sequence[PairSpec], preparer, batch: int = 32) -> ScoreSet:
    """Symmetrised Siamese score for each comparison, routed by label."""
    from .diff.tensor import no_grad

    for c in comparisons:
        if c.label not in PAIR_LABELS:
            raise ValueError(f"unknown comparison label {c.label!r}")
    scores = ScoreSet()
    for start in range(0, len(comparisons), batch):
        chunk = comparisons[start:start + batch]
        a, b = preparer.batch(chunk, dtype=model.dtype)
        with no_grad():
            e = model.embed(np.concatenate([a, b]), training=False).data
        s = model.symmetric_scores(e[:len(chunk)], e[len(chunk):])
        for c, v in zip(chunk, s):
            scores.add(c.label, float(v))
    return scores


@dataclass
class ProtocolReport:
    eer_random: float
    eer_skilled: float
    eer_overall: float
    thresholds: dict[str, float]
    counts: dict[str, int]
    det_curves: dict[str, DetCurve]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["det_curves"] = {k: asdict(v) for k, v in self.det_curves.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProtocolReport":
        d = json.loads(text)
        d["det_curves"] = {k: DetCurve(**v) for k, v in d["det_curves"].items()}
        return cls(**d)

    def write(self, out_dir: str | Path, svg: bool = False) -> list[Path]:
        out_dir = Path(out_dir)
        written = [out_dir / "report.json"]
        atomic_write_text(written[0], self.to_json() + "\n")
        for name, curve in self.det_curves.items():
            path = out_dir / f"det_{name}.csv"
            atomic_write_text(path, curve.to_csv())
            written.append(path)
        if svg:
            written.append(write_det_svg(self.det_curves, out_dir / "det.svg"))
        return written


def report_from_scores(scores: ScoreSet, meta: dict | None = None) -> ProtocolReport:
    if not scores.genuine:
        raise ValueError("no genuine comparisons to evaluate")
    impostors = {
        "random": scores.impostor_random,
        "skilled": scores.impostor_skilled,
        "overall": scores.impostor_random + scores.impostor_skilled,
    }
    eers, thresholds, curves = {}, {}, {}
    for name, imp in impostors.items():
        if imp:
            r = compute_eer(scores.genuine, imp)
            eers[name], thresholds[name] = r.eer, r.threshold
            curves[name] = det_curve(scores.genuine, imp)
        else:
            eers[name], thresholds[name] = math.nan, math.nan
    meta = dict(meta or {})
    meta.setdefault("overall", "pooled random + skilled impostor scores")
    return ProtocolReport(
        eer_random=eers["random"], eer_skilled=eers["skilled"], eer_overall=eers["overall"],
        thresholds=thresholds,
        counts={"genuine": len(scores.genuine), "random": len(scores.impostor_random),
                "skilled": len(scores.impostor_skilled)},
        det_curves=curves, meta=meta)


def run_protocol(model, comparisons: Sequence[PairSpec], preparer, *,
                 train_subjects: set[str] | None = None, meta: dict | None = None) -> ProtocolReport:
    if train_subjects is not None:
        eval_subjects = {s for c in comparisons for s in (c.enrolled.subject_id, c.questioned.subject_id)}
        check_disjoint(set(train_subjects), eval_subjects)
    return report_from_scores(compute_scores(model, comparisons, preparer), meta)


def write_det_svg(curves: dict[str, DetCurve], path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for name, c in curves.items():
        ax.plot(np.asarray(c.far) * 100, np.asarray(c.frr) * 100, label=name)
    ax.set_xlabel("false acceptance rate (%)")
    ax.set_ylabel("false rejection rate (%)")
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())
    return path
