"""Masked autoregressive flow with exact log-densities.

Each block applies an elementwise affine map

    u_d = (x_d - mu_d(x)) * exp(-alpha_d(x))

whose shift and log-scale heads are masked so that the pair for position d
depends only on inputs strictly earlier in the block's ordering; the
first-ordered pair is a constant.  The Jacobian of the map is therefore
triangular and its log-determinant is simply -sum(alpha).  Blocks are
stacked with alternating natural/reversed orderings, mapping data to a
standard normal base, so

    log p(x) = log N(u; 0, I) + sum over blocks of logdet.

The forward pass is a single masked evaluation; inversion reconstructs one
ordered position per pass (D passes).  Masks follow the usual degree
construction: input d gets degree rank(d)+1, hidden units cycle through
degrees 1..D-1, a connection exists where the consumer's degree is >= (for
hidden) or > (for outputs) the producer's.

Heads start at zero, so a freshly built model is the identity flow and its
log-density is exactly the standard normal's.  Log-scales are clamped to
``ALPHA_CLAMP`` for numerical safety far outside the training support.
"""

from __future__ import annotations

import json
import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .preprocess import PreprocessConfig, Standardizer

LOG_TWO_PI = math.log(2.0 * math.pi)
ALPHA_CLAMP = 7.0
HIDDEN_INIT_SCALE = 0.1
MODEL_FORMAT_VERSION = 1


class BlockCache(NamedTuple):
    """Intermediates one forward pass keeps so training can backpropagate."""

    x: np.ndarray          # block input, (B, D)
    feats: np.ndarray      # head inputs: tanh hidden units, or x itself
    alpha_raw: np.ndarray  # pre-clamp log-scales
    exp_neg_alpha: np.ndarray
    u: np.ndarray          # block output


def _hidden_degrees(dim: int, hidden: int) -> np.ndarray:
    return np.arange(hidden) % max(1, dim - 1) + min(1, dim - 1)


class MadeBlock:
    """One masked autoregressive affine layer."""

    def __init__(self, dim: int, hidden: int, ordering: Sequence[int], rng: np.random.Generator):
        if dim < 1:
            raise ValidationError(f"block dimension must be >= 1, got {dim}")
        if hidden < 0:
            raise ValidationError(f"hidden width must be >= 0, got {hidden}")
        ordering = np.ascontiguousarray(ordering, dtype=np.int64)
        if sorted(ordering.tolist()) != list(range(dim)):
            raise ValidationError(f"ordering must be a permutation of 0..{dim - 1}")
        self.dim = dim
        self.hidden = hidden
        self.ordering = ordering

        deg_in = ordering + 1
        if hidden > 0:
            deg_h = _hidden_degrees(dim, hidden)
            self.mask_in = (deg_in[None, :] <= deg_h[:, None]).astype(np.float64)
            self.mask_out = (deg_h[None, :] < deg_in[:, None]).astype(np.float64)
            self.w_in = rng.uniform(-HIDDEN_INIT_SCALE, HIDDEN_INIT_SCALE, (hidden, dim)) * self.mask_in
            self.b_in = np.zeros(hidden)
            n_feats = hidden
        else:
            self.mask_in = None
            self.mask_out = (deg_in[None, :] < deg_in[:, None]).astype(np.float64)
            self.w_in = None
            self.b_in = None
            n_feats = dim
        # Zero heads make the block start as the identity map.
        self.w_mu = np.zeros((dim, n_feats))
        self.b_mu = np.zeros(dim)
        self.w_alpha = np.zeros((dim, n_feats))
        self.b_alpha = np.zeros(dim)

    def features(self, x: np.ndarray) -> np.ndarray:
        if self.hidden > 0:
            return np.tanh(x @ (self.w_in * self.mask_in).T + self.b_in)
        return x

    def heads(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Returns (mu, clamped alpha, raw alpha, head inputs)."""
        feats = self.features(x)
        mu = feats @ (self.w_mu * self.mask_out).T + self.b_mu
        alpha_raw = feats @ (self.w_alpha * self.mask_out).T + self.b_alpha
        return mu, np.clip(alpha_raw, -ALPHA_CLAMP, ALPHA_CLAMP), alpha_raw, feats

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map a (B, D) batch to (u, logdet) with logdet shaped (B,)."""
        u, logdet, _ = self.forward_cached(x)
        return u, logdet

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, BlockCache]:
        x = np.asarray(x, dtype=np.float64)
        mu, alpha, alpha_raw, feats = self.heads(x)
        exp_neg_alpha = np.exp(-alpha)
        u = (x - mu) * exp_neg_alpha
        logdet = -alpha.sum(axis=1)
        if not (np.isfinite(u).all() and np.isfinite(logdet).all()):
            raise NumericError("non-finite value in block forward pass (diverged model?)")
        return u, logdet, BlockCache(x, feats, alpha_raw, exp_neg_alpha, u)

    def inverse(self, u: np.ndarray) -> np.ndarray:
        """Sequential reconstruction, one ordered position per pass."""
        u = np.asarray(u, dtype=np.float64)
        x = np.zeros_like(u)
        position_at_rank = np.argsort(self.ordering)
        for rank in range(self.dim):
            mu, alpha, _, _ = self.heads(x)
            d = position_at_rank[rank]
            x[:, d] = u[:, d] * np.exp(alpha[:, d]) + mu[:, d]
        if not np.isfinite(x).all():
            raise NumericError("non-finite value in block inverse pass")
        return x

    def params(self) -> list[np.ndarray]:
        """Trainable arrays, in a fixed order shared with gradients."""
        if self.hidden > 0:
            return [self.w_in, self.b_in, self.w_mu, self.b_mu, self.w_alpha, self.b_alpha]
        return [self.w_mu, self.b_mu, self.w_alpha, self.b_alpha]

    def param_masks(self) -> list[np.ndarray | None]:
        """Mask per params() entry; None means fully trainable."""
        if self.hidden > 0:
            return [self.mask_in, None, self.mask_out, None, self.mask_out, None]
        return [self.mask_out, None, self.mask_out, None]

    def param_count(self) -> int:
        n = 2 * (int(self.mask_out.sum()) + self.dim)
        if self.hidden > 0:
            n += int(self.mask_in.sum()) + self.hidden
        return n

    def to_dict(self) -> dict:
        d = {
            "w_mu": self.w_mu.tolist(),
            "b_mu": self.b_mu.tolist(),
            "w_alpha": self.w_alpha.tolist(),
            "b_alpha": self.b_alpha.tolist(),
        }
        if self.hidden > 0:
            d["w_in"] = self.w_in.tolist()
            d["b_in"] = self.b_in.tolist()
        return d

    def load_dict(self, d: dict) -> None:
        def _take(key: str, shape: tuple[int, ...]) -> np.ndarray:
            arr = np.array(d[key], dtype=np.float64).reshape(shape)
            return arr

        self.w_mu = _take("w_mu", self.w_mu.shape)
        self.b_mu = _take("b_mu", self.b_mu.shape)
        self.w_alpha = _take("w_alpha", self.w_alpha.shape)
        self.b_alpha = _take("b_alpha", self.b_alpha.shape)
        if self.hidden > 0:
            self.w_in = _take("w_in", self.w_in.shape)
            self.b_in = _take("b_in", self.b_in.shape)


class FlowModel:
    """A stack of masked affine blocks over a standard-normal base.

    Carries the preprocessing metadata (variant name, cleaning config,
    standardizer, optional frame size) needed to score new tracks exactly
    the way the training data was prepared.
    """

    def __init__(
        self,
        blocks: Sequence[MadeBlock],
        *,
        variant: str | None = None,
        preprocess: PreprocessConfig | None = None,
        standardizer: Standardizer | None = None,
        frame_size: tuple[float, float] | None = None,
    ):
        if not blocks:
            raise ValidationError("a flow needs at least one block")
        dims = {b.dim for b in blocks}
        if len(dims) != 1:
            raise ValidationError(f"all blocks must share one dimension, got {sorted(dims)}")
        self.blocks = list(blocks)
        self.dim = self.blocks[0].dim
        self.variant = variant
        self.preprocess = preprocess
        self.standardizer = standardizer
        self.frame_size = frame_size

    @classmethod
    def build(
        cls,
        dim: int,
        n_blocks: int,
        hidden: int,
        seed,
        **metadata,
    ) -> "FlowModel":
        """Fresh identity-initialized flow; orderings alternate with reversal."""
        if n_blocks < 1:
            raise ValidationError(f"need at least one block, got {n_blocks}")
        rng = np.random.default_rng(seed)
        natural = np.arange(dim)
        blocks = []
        for i in range(n_blocks):
            ordering = natural if i % 2 == 0 else natural[::-1]
            blocks.append(MadeBlock(dim, hidden, ordering, rng))
        return cls(blocks, **metadata)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def hidden(self) -> int:
        return self.blocks[0].hidden

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Compose all blocks; returns (u, total logdet) for a (B, D) batch."""
        u = np.asarray(x, dtype=np.float64)
        logdet = np.zeros(u.shape[0])
        for block in self.blocks:
            u, ld = block.forward(u)
            logdet += ld
        return u, logdet

    def inverse(self, u: np.ndarray) -> np.ndarray:
        x = np.asarray(u, dtype=np.float64)
        for block in reversed(self.blocks):
            x = block.inverse(x)
        return x

    def log_prob_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValidationError(f"expected {self.dim}-dimensional inputs, got {x.shape[1]}")
        if not np.isfinite(x).all():
            raise NumericError("non-finite flow input")
        u, logdet = self.forward(x)
        lp = -0.5 * self.dim * LOG_TWO_PI - 0.5 * (u**2).sum(axis=1) + logdet
        if not np.isfinite(lp).all():
            raise NumericError("non-finite log-density (diverged model?)")
        return lp

    def log_prob(self, x: np.ndarray) -> float:
        return float(self.log_prob_batch(np.asarray(x).reshape(1, -1))[0])

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for block in self.blocks:
            out.extend(block.params())
        return out

    def param_masks(self) -> list[np.ndarray | None]:
        out: list[np.ndarray | None] = []
        for block in self.blocks:
            out.extend(block.param_masks())
        return out

    def param_count(self) -> int:
        """Trainable scalars: unmasked weights plus biases."""
        return sum(block.param_count() for block in self.blocks)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "variant": self.variant,
            "frame_size": list(self.frame_size) if self.frame_size else None,
            "preprocess": self.preprocess.to_dict() if self.preprocess else None,
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
            "flow": {
                "D": self.dim,
                "K": self.n_blocks,
                "H": self.hidden,
                "orderings": [b.ordering.tolist() for b in self.blocks],
                "blocks": [b.to_dict() for b in self.blocks],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowModel":
        version = d.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValidationError(
                f"unsupported model format_version {version!r} (expected {MODEL_FORMAT_VERSION})"
            )
        flow = d["flow"]
        dim, n_blocks, hidden = int(flow["D"]), int(flow["K"]), int(flow["H"])
        orderings = flow["orderings"]
        block_dicts = flow["blocks"]
        if len(orderings) != n_blocks or len(block_dicts) != n_blocks:
            raise ValidationError("model file: block count mismatch")
        rng = np.random.default_rng(0)  # placeholder init, overwritten below
        blocks = []
        for ordering, bd in zip(orderings, block_dicts):
            block = MadeBlock(dim, hidden, ordering, rng)
            block.load_dict(bd)
            blocks.append(block)
        pre = d.get("preprocess")
        std = d.get("standardizer")
        fs = d.get("frame_size")
        return cls(
            blocks,
            variant=d.get("variant"),
            preprocess=PreprocessConfig.from_dict(pre) if pre else None,
            standardizer=Standardizer.from_dict(std) if std else None,
            frame_size=tuple(fs) if fs else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, allow_nan=False)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FlowModel":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: malformed model file ({exc.msg})") from None
        return cls.from_dict(d)
