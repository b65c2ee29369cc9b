"""3D rotary position embeddings for (t, h, w) video token lattices.

The default construction applies 1D RoPE independently along each axis and
repeats it over the other two. The motion-augmented construction shifts the
h and w position indices of every lattice cell by a cumulative displacement,
leaving the temporal block untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import DisplacementGrid

__all__ = [
    "DEFAULT_THETA",
    "DEFAULT_DIMS",
    "RopeConfig",
    "RopeGrid",
    "freq_spectrum",
    "rope_1d",
    "build_default_rope",
    "build_motion_rope",
]

DEFAULT_THETA = 10000.0
DEFAULT_DIMS = (16, 24, 24)


@dataclass(frozen=True)
class RopeConfig:
    seq: tuple[int, int, int]
    dims: tuple[int, int, int] = DEFAULT_DIMS
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        seq = tuple(int(s) for s in self.seq)
        dims = tuple(int(d) for d in self.dims)
        if len(seq) != 3 or len(dims) != 3:
            raise ValueError("seq and dims must each have three entries (t, h, w)")
        if any(s < 1 for s in seq):
            raise ValueError(f"sequence lengths must be positive, got {seq}")
        if any(d < 2 or d % 2 for d in dims):
            raise ValueError(f"embedding dims must be even and positive, got {dims}")
        if not (self.theta > 0 and np.isfinite(self.theta)):
            raise ValueError(f"theta must be a positive finite number, got {self.theta}")
        object.__setattr__(self, "seq", seq)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def channels(self) -> int:
        """Complex channels per token, D/2."""
        return sum(self.dims) // 2

    @property
    def length(self) -> int:
        st, sh, sw = self.seq
        return st * sh * sw


@dataclass(frozen=True)
class RopeGrid:
    """Complex RoPE tensor of shape S_t x S_h x S_w x D/2, channel order t | h | w."""

    grid: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        """Sequence form, (S_t*S_h*S_w) x D/2 with s = t*S_h*S_w + h*S_w + w."""
        return self.grid.reshape(-1, self.grid.shape[-1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.grid.shape

    def phases(self) -> np.ndarray:
        return np.angle(self.grid)


def freq_spectrum(dim: int, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Frequencies ``theta ** (-2 i / dim)`` for ``i`` in ``0 .. dim/2 - 1``."""
    if dim < 2 or dim % 2:
        raise ValueError(f"RoPE dimension must be even and positive, got {dim}")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    d = np.arange(dim // 2, dtype=np.float64)
    return np.power(float(theta), -2.0 * d / dim)


def rope_1d(positions, freqs) -> np.ndarray:
    """``exp(j * p f^T)`` as a len(p) x len(f) complex array."""
    p = np.asarray(positions, dtype=np.float64)
    f = np.asarray(freqs, dtype=np.float64)
    return _cis(p[..., None] * f)


def _cis(angle: np.ndarray) -> np.ndarray:
    out = np.empty(angle.shape, dtype=np.complex128)
    out.real = np.cos(angle)
    out.imag = np.sin(angle)
    return out


def _assemble(cfg: RopeConfig, h_pos: np.ndarray, w_pos: np.ndarray) -> RopeGrid:
    st, sh, sw = cfg.seq
    dt, dh, dw = cfg.dims
    phi_t = rope_1d(np.arange(st), freq_spectrum(dt, cfg.theta))
    blocks = (
        np.broadcast_to(phi_t[:, None, None, :], (st, sh, sw, dt // 2)),
        rope_1d(h_pos, freq_spectrum(dh, cfg.theta)),
        rope_1d(w_pos, freq_spectrum(dw, cfg.theta)),
    )
    return RopeGrid(np.concatenate(blocks, axis=-1))


def _lattice(cfg: RopeConfig) -> tuple[np.ndarray, np.ndarray]:
    st, sh, sw = cfg.seq
    h_pos = np.broadcast_to(np.arange(sh, dtype=np.float64)[None, :, None], (st, sh, sw))
    w_pos = np.broadcast_to(np.arange(sw, dtype=np.float64)[None, None, :], (st, sh, sw))
    return h_pos, w_pos


def build_default_rope(cfg: RopeConfig) -> RopeGrid:
    h_pos, w_pos = _lattice(cfg)
    return _assemble(cfg, h_pos, w_pos)


def build_motion_rope(cfg: RopeConfig, disp: DisplacementGrid) -> RopeGrid:
    """RoPE whose h/w indices at cell (t, h, w) are ``h + h_flow[t,h,w]`` and ``w + w_flow[t,h,w]``."""
    if tuple(disp.shape) != cfg.seq:
        raise ValueError(f"displacement grid shape {tuple(disp.shape)} does not match sequence {cfg.seq}")
    h_pos, w_pos = _lattice(cfg)
    return _assemble(cfg, h_pos + disp.h_flow, w_pos + disp.w_flow)
