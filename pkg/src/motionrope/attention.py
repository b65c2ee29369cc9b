"""Single-head attention with RoPE on queries and keys.

Tokens are real S x D arrays whose channel pairs ``(x[2i], x[2i+1])`` are read
as complex numbers ``x[2i] + j x[2i+1]``. The toy velocity model is a frozen,
seeded attention layer standing in for a video DiT: it maps a latent
``C x S_t x S_h x S_w`` (C = D) to a velocity of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rope import RopeGrid

__all__ = [
    "apply_rope",
    "attention_scores",
    "softmax",
    "ToyVelocityModel",
    "toy_forward",
    "latent_to_tokens",
    "tokens_to_latent",
]


def _flat(rope) -> np.ndarray:
    return rope.flat if isinstance(rope, RopeGrid) else np.asarray(rope)


def apply_rope(x, rope) -> np.ndarray:
    """Rotate each complex channel pair of token m by ``rope[m, i]``."""
    x = np.asarray(x, dtype=np.float64)
    phi = _flat(rope)
    if x.ndim != 2 or x.shape[1] % 2:
        raise ValueError(f"tokens must be S x D with D even, got shape {x.shape}")
    if phi.shape != (x.shape[0], x.shape[1] // 2):
        raise ValueError(f"RoPE shape {phi.shape} does not fit tokens of shape {x.shape}")
    z = (x[:, 0::2] + 1j * x[:, 1::2]) * phi
    out = np.empty_like(x)
    out[:, 0::2] = z.real
    out[:, 1::2] = z.imag
    return out


def attention_scores(q, k) -> np.ndarray:
    """Raw scaled dot products ``q_m . k_n / sqrt(D)`` (no softmax)."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ValueError(f"query/key shapes {q.shape} and {k.shape} are incompatible")
    return q @ k.T / np.sqrt(q.shape[1])


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def latent_to_tokens(x: np.ndarray) -> np.ndarray:
    """C x S_t x S_h x S_w latent -> (S_t*S_h*S_w) x C tokens in RoPE sequence order."""
    return x.reshape(x.shape[0], -1).T


def tokens_to_latent(tokens: np.ndarray, shape) -> np.ndarray:
    return np.ascontiguousarray(tokens.T).reshape(shape)


@dataclass(frozen=True)
class ToyVelocityModel:
    """Frozen Q/K/V projections, each D x D, drawn from U(-1/sqrt(D), 1/sqrt(D))."""

    dim: int
    seed: int = 0
    wq: np.ndarray = field(init=False, repr=False)
    wk: np.ndarray = field(init=False, repr=False)
    wv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"model dimension must be even and positive, got {self.dim}")
        rng = np.random.default_rng(self.seed)
        bound = 1.0 / np.sqrt(self.dim)
        for name in ("wq", "wk", "wv"):
            w = rng.uniform(-bound, bound, size=(self.dim, self.dim))
            w.setflags(write=False)
            object.__setattr__(self, name, w)


def toy_forward(model: ToyVelocityModel, x_t, rope) -> np.ndarray:
    """softmax(scores(rope(Q x), rope(K x))) V x, returned in the shape of ``x_t``.

    ``x_t`` is either a C x S_t x S_h x S_w latent or an S x D token array.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim == 2:
        tokens = x_t
    elif x_t.ndim == 4:
        tokens = latent_to_tokens(x_t)
    else:
        raise ValueError(f"x_t must be S x D tokens or a C x S_t x S_h x S_w latent, got shape {x_t.shape}")
    if tokens.shape[1] != model.dim:
        raise ValueError(f"token dim {tokens.shape[1]} does not match model dim {model.dim}")
    q = apply_rope(tokens @ model.wq, rope)
    k = apply_rope(tokens @ model.wk, rope)
    v = tokens @ model.wv
    out = softmax(attention_scores(q, k)) @ v
    if x_t.ndim == 2:
        return out
    return tokens_to_latent(out, x_t.shape)
