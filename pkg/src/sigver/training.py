"""Pair sampling, BCE training with Adam, validation EER and early stopping."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .diff import ops
from .diff.optim import Adam
from .evaluation import (
    PairSpec,
    ProtocolError,
    build_comparisons,
    check_disjoint,
    compute_scores,
    report_from_scores,
    subjects_of,
)
from .model import ModelConfig, SiameseModel
from .pipeline import PairPreparer
from .signature_io import RawSignature

log = logging.getLogger(__name__)


class PairList(list):
    """A list of PairSpec that remembers whether the skilled quota was re-allocated."""

    skilled_reallocated: bool = False


def _index(dataset: Sequence[RawSignature]):
    genuine: dict[str, list[RawSignature]] = {}
    forged: dict[str, list[RawSignature]] = {}
    for sig in dataset:
        target = genuine if sig.label == "genuine" else forged
        target.setdefault(sig.subject_id, []).append(sig)
    return genuine, forged


def _draw_unique(rng, count, draw, seen, pool_size):
    """Draw ``count`` items via ``draw()``; repeats only once the pool is exhausted."""
    out = []
    tries = 0
    while len(out) < count:
        item = draw()
        key = item.key
        exhausted = len(seen) >= pool_size
        if key not in seen or exhausted or tries > 50 * max(count, 1):
            seen.add(key)
            out.append(item)
        tries += 1
    return out


def sample_pairs(dataset: Sequence[RawSignature], count: int, seed: int) -> PairList:
    """Random training pairs: 50% match, 25% random impostor, 25% skilled impostor.

    The impostor quotas are ``count // 4`` each and the remainder goes to
    matches.  Without skilled forgeries their quota moves to random impostors
    and ``skilled_reallocated`` is set.
    """
    genuine, forged = _index(dataset)
    subjects = sorted(s for s, g in genuine.items() if len(g) >= 2)
    if len(genuine) < 2:
        raise ProtocolError("pair sampling needs at least 2 subjects")
    if not subjects:
        raise ProtocolError("pair sampling needs subjects with at least 2 genuine signatures")
    forgers = sorted(s for s in subjects if forged.get(s))
    all_genuine_subjects = sorted(genuine)
    rng = np.random.default_rng(seed)

    n_random = n_skilled = count // 4
    n_match = count - n_random - n_skilled
    out = PairList()
    if not forgers:
        n_random += n_skilled
        n_skilled = 0
        out.skilled_reallocated = True
        log.warning("no skilled forgeries available; skilled pairs re-allocated to random")

    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    def draw_match():
        s = pick(subjects)
        i, j = rng.choice(len(genuine[s]), size=2, replace=False)
        return PairSpec(genuine[s][i], genuine[s][j], "match")

    def draw_random():
        s = pick(subjects)
        o = pick([x for x in all_genuine_subjects if x != s])
        return PairSpec(pick(genuine[s]), pick(genuine[o]), "nonmatch_random")

    def draw_skilled():
        s = pick(forgers)
        return PairSpec(pick(genuine[s]), pick(forged[s]), "nonmatch_skilled")

    total_genuine = sum(len(genuine[s]) for s in all_genuine_subjects)
    match_pool = sum(len(genuine[s]) * (len(genuine[s]) - 1) for s in subjects)
    random_pool = sum(len(genuine[s]) * (total_genuine - len(genuine[s])) for s in subjects)
    skilled_pool = sum(len(genuine[s]) * len(forged[s]) for s in forgers)
    seen: set = set()
    out.extend(_draw_unique(rng, n_match, draw_match, seen, match_pool))
    seen_r: set = set()
    out.extend(_draw_unique(rng, n_random, draw_random, seen_r, random_pool))
    seen_s: set = set()
    if n_skilled:
        out.extend(_draw_unique(rng, n_skilled, draw_skilled, seen_s, skilled_pool))
    order = rng.permutation(len(out))
    shuffled = PairList(out[k] for k in order)
    shuffled.skilled_reallocated = out.skilled_reallocated
    return shuffled


@dataclass
class TrainHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 32
    max_epochs: int = 30
    patience: int = 5
    pairs_per_epoch: int = 256
    seed: int = 0
    threads: int = 1


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    best_validation_eer: float = math.inf
    best_epoch: int = 0
    patience_counter: int = 0
    rng_seed: int = 0


@dataclass
class TrainResult:
    model: SiameseModel
    state: TrainState
    log: list[dict] = field(default_factory=list)
    preparer: PairPreparer | None = None
    validation_comparisons: list[PairSpec] = field(default_factory=list)


def labels_of(pairs: Sequence[PairSpec], dtype) -> np.ndarray:
    return np.array([1.0 if p.label == "match" else 0.0 for p in pairs], dtype=dtype)


def train_step(model: SiameseModel, opt: Adam, a: np.ndarray, b: np.ndarray,
               y: np.ndarray) -> float:
    opt.zero_grad()
    loss = ops.binary_cross_entropy_with_logits(model.pair_logits(a, b, training=True), y)
    loss.backward()
    opt.step()
    return float(loss.data)


def pair_accuracy(model: SiameseModel, pairs: Sequence[PairSpec], preparer: PairPreparer,
                  batch: int = 32) -> float:
    """Fraction of (enrolled, questioned) pairs classified correctly at score 0.5."""
    from .diff.tensor import no_grad

    correct = 0
    for start in range(0, len(pairs), batch):
        chunk = pairs[start:start + batch]
        a, b = preparer.batch(chunk, dtype=model.dtype)
        with no_grad():
            z = model.pair_logits(a, b, training=False).data
        correct += int(((z > 0) == (labels_of(chunk, np.float64) > 0.5)).sum())
    return correct / max(len(pairs), 1)


def train(
    config: ModelConfig,
    train_set: Sequence[RawSignature],
    validation_set: Sequence[RawSignature],
    hyper: TrainHyper | None = None,
    *,
    preparer: PairPreparer | None = None,
    checkpoint_path: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train one Siamese configuration; returns the best-validation model."""
    hyper = hyper or TrainHyper()
    check_disjoint(subjects_of(train_set), subjects_of(validation_set))
    preparer = preparer or PairPreparer(threads=hyper.threads)
    model = SiameseModel(config)
    params = model.parameters()
    opt = Adam(params, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    comparisons = build_comparisons(validation_set, seed=hyper.seed)
    state = TrainState(rng_seed=hyper.seed)
    history: list[dict] = []
    best = {k: p.data.copy() for k, p in params.items()}

    with threadpool_limits(limits=hyper.threads):
        for epoch in range(1, hyper.max_epochs + 1):
            state.epoch = epoch
            pairs = sample_pairs(train_set, hyper.pairs_per_epoch, seed=hyper.seed * 100003 + epoch)
            losses = []
            for start in range(0, len(pairs), hyper.batch):
                chunk = pairs[start:start + hyper.batch]
                a, b = preparer.batch(chunk, dtype=model.dtype)
                losses.append(train_step(model, opt, a, b, labels_of(chunk, model.dtype)))
                state.step += 1
            report = report_from_scores(compute_scores(model, comparisons, preparer))
            record = {"epoch": epoch, "loss": float(np.mean(losses)),
                      "val_eer_r": report.eer_random, "val_eer_s": report.eer_skilled,
                      "val_eer_o": report.eer_overall}
            history.append(record)
            if on_epoch is not None:
                on_epoch(record)

            if report.eer_overall < state.best_validation_eer:
                state.best_validation_eer = report.eer_overall
                state.best_epoch = epoch
                state.patience_counter = 0
                best = {k: p.data.copy() for k, p in params.items()}
                if checkpoint_path is not None:
                    model.save(checkpoint_path, extra=opt.state_arrays(),
                               meta=_meta(state, train_set, hyper))
            else:
                state.patience_counter += 1
                if state.patience_counter >= hyper.patience:
                    break

    for k, p in params.items():
        p.data = best[k]
    return TrainResult(model, state, history, preparer, comparisons)


def _meta(state: TrainState, train_set, hyper: TrainHyper) -> dict:
    return {"train_state": asdict(state), "train_subjects": sorted(subjects_of(train_set)),
            "hyper": asdict(hyper)}


def format_log(record: dict) -> str:
    return json.dumps(record, sort_keys=True)
