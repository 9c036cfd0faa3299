from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..diff import checkpoint, ops
from ..diff.nn import Linear, Module
from ..diff.tensor import Tensor, no_grad
from ..signature_io import atomic_write_text
from .config import ModelConfig
from .encoders import build_embedder


DIFFERENCE_INIT_GAIN = 0.5
DIFFERENCE_INIT_BIAS = 1.0


class PairedMasks:
    """Dropout mask source shared by the two towers.

    While ``paired`` is set the leading axis holds the enrolled half followed by
    the questioned half, and both halves get the same mask, so the towers stay
    one function during training and the difference the head reads is not
    swamped by independent dropout noise.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.paired = False

    def random(self, shape) -> np.ndarray:
        if not self.paired:
            return self.rng.random(shape)
        if shape[0] % 2:
            raise ops.ShapeError(f"paired dropout: odd leading axis {shape}")
        half = self.rng.random((shape[0] // 2, *shape[1:]))
        return np.concatenate([half, half])


class SiameseHead(Module):
    """[e1 | e2] -> affine -> relu -> affine -> logit.

    With ``difference_init`` the hidden units start in pairs reading
    ``+u.(e1 - e2)`` and ``-u.(e1 - e2)`` and the output sums them negatively,
    so the initial logit falls with embedding distance instead of being an
    arbitrary function of the concatenation.  Training is free to leave that
    form.
    """

    def __init__(self, embedding: int, hidden: int, rng, dtype, difference_init: bool = True):
        self.embedding = embedding
        self.fc1 = Linear(2 * embedding, hidden, rng, dtype)
        self.fc2 = Linear(hidden, 1, rng, dtype)
        if difference_init and hidden >= 2:
            w = self.fc1.weight.data
            pairs = hidden // 2
            u = w[:embedding, :pairs].copy()
            w[:embedding, 0:2 * pairs:2] = u
            w[:embedding, 1:2 * pairs:2] = -u
            w[embedding:, :2 * pairs] = -w[:embedding, :2 * pairs]
            self.fc2.weight.data[:2 * pairs] = -DIFFERENCE_INIT_GAIN
            self.fc2.bias.data[:] = DIFFERENCE_INIT_BIAS

    def __call__(self, e1: Tensor, e2: Tensor) -> Tensor:
        if e1.shape != e2.shape or e1.shape[-1] != self.embedding:
            raise ops.ShapeError(f"siamese_score: embeddings {e1.shape} and {e2.shape} "
                                 f"do not both have size {self.embedding}")
        z = self.fc2(ops.relu(self.fc1(ops.concat([e1, e2], axis=-1))))
        return ops.reshape(z, z.shape[:-1])


class SiameseModel(Module):
    """Weight-shared embedder plus scoring head.

    Order of arguments to the head is (enrolled, questioned); the evaluation
    score averages both orders.
    """

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        init_rng = np.random.default_rng(config.seed)
        self.dropout_rng = PairedMasks(np.random.default_rng([config.seed, 1]))
        self.embedder = build_embedder(config, init_rng, self.dtype, self.dropout_rng)
        self.head = SiameseHead(config.embedding_size, config.head_hidden, init_rng, self.dtype)

    def _input(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=self.dtype))

    def embed(self, x, training: bool = False) -> Tensor:
        """(L, C) -> (E,) or (B, L, C) -> (B, E)."""
        x = self._input(x)
        squeeze = x.ndim == 2
        if squeeze:
            x = ops.reshape(x, (1, *x.shape))
        e = self.embedder(x, training)
        return ops.reshape(e, e.shape[1:]) if squeeze else e

    def logits(self, e1: Tensor, e2: Tensor) -> Tensor:
        return self.head(e1, e2)

    def score(self, e1, e2) -> Tensor:
        return ops.sigmoid(self.head(self._input(e1), self._input(e2)))

    def pair_logits(self, a, b, training: bool = False) -> Tensor:
        """Embed both halves in one batched pass and score (a, b)."""
        a, b = self._input(a), self._input(b)
        n = a.shape[0]
        self.dropout_rng.paired = True
        try:
            e = self.embed(ops.concat([a, b], axis=0), training)
        finally:
            self.dropout_rng.paired = False
        return self.head(e[:n], e[n:])

    def symmetric_scores(self, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
        with no_grad():
            s12 = self.score(e1, e2).data.astype(np.float64)
            s21 = self.score(e2, e1).data.astype(np.float64)
        return 0.5 * (s12 + s21)

    # ------------------------------------------------------------ persistence

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise checkpoint.CheckpointError(f"checkpoint lacks parameters: {missing[:5]}")
        for name, p in params.items():
            if tuple(arrays[name].shape) != p.shape:
                raise checkpoint.CheckpointError(
                    f"{name}: checkpoint shape {arrays[name].shape} != model shape {p.shape}")
            p.data = arrays[name].astype(self.dtype)

    def save(self, path: str | Path, extra: dict[str, np.ndarray] | None = None,
             meta: dict | None = None) -> None:
        """Write the checkpoint and ``<path>.json`` with the config (+ meta)."""
        path = Path(path)
        arrays = dict(self.state_arrays())
        if extra:
            arrays.update(extra)
        checkpoint.save(path, arrays)
        doc = {"config": self.config.to_dict(), "meta": meta or {}}
        atomic_write_text(config_path(path), json.dumps(doc, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path, dtype=np.float32) -> tuple["SiameseModel", dict, dict]:
        path = Path(path)
        doc = json.loads(config_path(path).read_text(encoding="utf-8"))
        model = cls(ModelConfig.from_dict(doc["config"]), dtype=dtype)
        arrays = checkpoint.load(path)
        model.load_state_arrays(arrays)
        return model, doc.get("meta", {}), arrays


def config_path(ckpt: str | Path) -> Path:
    ckpt = Path(ckpt)
    return ckpt.with_name(ckpt.name + ".json")
