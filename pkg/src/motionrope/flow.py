"""Dense optical flow: Middlebury ``.flo`` I/O, synthetic fields, and the
conversion from pixel flow to patch-unit displacement grids."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FLO_MAGIC",
    "FlowField",
    "DisplacementGrid",
    "FloError",
    "FloBadMagicError",
    "FloTruncatedError",
    "flo_dumps",
    "flo_loads",
    "flo_read",
    "flo_write",
    "read_flow_dir",
    "write_flow_dir",
    "flow_synth",
    "downsample_to_grid",
    "accumulate",
    "displacement_from_flow",
]

FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")


class FloError(ValueError):
    pass


class FloBadMagicError(FloError):
    pass


class FloTruncatedError(FloError):
    pass


@dataclass(frozen=True)
class FlowField:
    """Per-frame flow ``u`` (rightward) and ``v`` (downward), each S_t x H x W, px/frame."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim == 2:
            u = u[None]
        if v.ndim == 2:
            v = v[None]
        if u.ndim != 3 or u.shape != v.shape:
            raise ValueError(f"u and v must share an S_t x H x W shape, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow displacements must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def frames(self) -> int:
        return self.u.shape[0]

    @property
    def height(self) -> int:
        return self.u.shape[1]

    @property
    def width(self) -> int:
        return self.u.shape[2]

    def stacked(self) -> np.ndarray:
        """The 2 x S_t x H x W array ``[u, v]``."""
        return np.stack([self.u, self.v])

    @classmethod
    def from_stacked(cls, arr) -> "FlowField":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[0] != 2:
            raise ValueError(f"expected a 2 x S_t x H x W flow array, got shape {arr.shape}")
        return cls(arr[0], arr[1])


@dataclass(frozen=True)
class DisplacementGrid:
    """Cumulative patch-unit offsets, each S_t x S_h x S_w."""

    h_flow: np.ndarray
    w_flow: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_flow, dtype=np.float64)
        w = np.asarray(self.w_flow, dtype=np.float64)
        if h.ndim != 3 or h.shape != w.shape:
            raise ValueError(f"h_flow and w_flow must share an S_t x S_h x S_w shape, got {h.shape} and {w.shape}")
        object.__setattr__(self, "h_flow", h)
        object.__setattr__(self, "w_flow", w)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.h_flow.shape

    @classmethod
    def zeros(cls, st: int, sh: int, sw: int) -> "DisplacementGrid":
        return cls(np.zeros((st, sh, sw)), np.zeros((st, sh, sw)))

    def stacked(self) -> np.ndarray:
        """The 2 x S_t x S_h x S_w array ``[h_flow, w_flow]``."""
        return np.stack([self.h_flow, self.w_flow])

    @classmethod
    def from_stacked(cls, arr) -> "DisplacementGrid":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[0] != 2:
            raise ValueError(f"expected a 2 x S_t x S_h x S_w grid, got shape {arr.shape}")
        return cls(arr[0], arr[1])

    def __add__(self, other: "DisplacementGrid") -> "DisplacementGrid":
        return DisplacementGrid(self.h_flow + other.h_flow, self.w_flow + other.w_flow)

    def __mul__(self, scale: float) -> "DisplacementGrid":
        return DisplacementGrid(self.h_flow * scale, self.w_flow * scale)

    __rmul__ = __mul__


# -- Middlebury .flo ---------------------------------------------------------


def flo_dumps(u, v) -> bytes:
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim != 2 or u.shape != v.shape:
        raise ValueError(f"single-frame flow must be two equal H x W arrays, got {u.shape} and {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("flow values must be finite")
    h, w = u.shape
    payload = np.empty((h, w, 2), dtype="<f4")
    payload[..., 0] = u
    payload[..., 1] = v
    return _FLO_HEADER.pack(FLO_MAGIC, w, h) + payload.tobytes()


def flo_loads(buf: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Parse a .flo blob into float32 ``(u, v)`` arrays of shape H x W."""
    if len(buf) < 4:
        raise FloTruncatedError("file shorter than the magic number")
    (magic,) = struct.unpack_from("<f", buf, 0)
    if magic != np.float32(FLO_MAGIC):
        raise FloBadMagicError(f"bad .flo magic {magic!r}, expected {FLO_MAGIC}")
    if len(buf) < _FLO_HEADER.size:
        raise FloTruncatedError("header truncated")
    _, w, h = _FLO_HEADER.unpack_from(buf, 0)
    if w < 0 or h < 0:
        raise FloError(f"negative dimensions {w}x{h}")
    need = _FLO_HEADER.size + 8 * w * h
    if len(buf) < need:
        raise FloTruncatedError(f"payload truncated: {len(buf)} of {need} bytes")
    data = np.frombuffer(buf, dtype="<f4", count=2 * w * h, offset=_FLO_HEADER.size)
    data = data.reshape(h, w, 2)
    return data[..., 0].astype(np.float32), data[..., 1].astype(np.float32)


def flo_write(frame, path) -> None:
    """Write one flow frame; ``frame`` is a ``(u, v)`` pair or a 1-frame FlowField."""
    if isinstance(frame, FlowField):
        if frame.frames != 1:
            raise ValueError(f".flo holds a single frame, got {frame.frames}")
        u, v = frame.u[0], frame.v[0]
    else:
        u, v = frame
    Path(path).write_bytes(flo_dumps(u, v))


def flo_read(path) -> FlowField:
    path = Path(path)
    try:
        u, v = flo_loads(path.read_bytes())
    except FloError as exc:
        raise type(exc)(f"{path}: {exc}") from None
    return FlowField(u[None], v[None])


def read_flow_dir(path) -> FlowField:
    """Stack every ``*.flo`` in a directory, ordered lexicographically by name."""
    path = Path(path)
    files = sorted(path.glob("*.flo"), key=lambda p: p.name)
    if not files:
        raise FileNotFoundError(f"no .flo files in {path}")
    frames = [flo_read(f) for f in files]
    shapes = {(f.height, f.width) for f in frames}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent frame sizes in {path}: {sorted(shapes)}")
    return FlowField(np.concatenate([f.u for f in frames]), np.concatenate([f.v for f in frames]))


def write_flow_dir(flow: FlowField, path) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(flow.frames)))
    out = []
    for t in range(flow.frames):
        target = path / f"{t:0{width}d}.flo"
        flo_write((flow.u[t], flow.v[t]), target)
        out.append(target)
    return out


# -- synthetic fields --------------------------------------------------------


def flow_synth(pattern: str, params: dict | None = None, frames: int = 1, height: int = 1, width: int = 1) -> FlowField:
    """Generate a stationary synthetic flow field.

    ``constant`` takes ``a`` (u) and ``b`` (v); ``rotation`` takes ``omega``
    (radians per frame, about the frame center); ``zoom`` takes ``scale``
    (per-frame radial scale factor about the frame center).
    """
    params = dict(params or {})
    if frames < 1 or height < 1 or width < 1:
        raise ValueError(f"frames, height and width must be positive, got {frames}, {height}, {width}")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    if pattern == "constant":
        u = np.full((height, width), float(params.get("a", 0.0)))
        v = np.full((height, width), float(params.get("b", 0.0)))
    elif pattern == "rotation":
        omega = float(params.get("omega", 0.0))
        dx = xs - cx
        dy = ys - cy
        c, s = np.cos(omega), np.sin(omega)
        u = (c * dx - s * dy) - dx
        v = (s * dx + c * dy) - dy
    elif pattern == "zoom":
        scale = float(params.get("scale", 1.0))
        u = (scale - 1.0) * (xs - cx)
        v = (scale - 1.0) * (ys - cy)
    else:
        raise ValueError(f"unknown flow pattern {pattern!r}; expected constant, rotation or zoom")
    return FlowField(np.repeat(u[None], frames, axis=0), np.repeat(v[None], frames, axis=0))


# -- flow -> displacement grid -----------------------------------------------


def downsample_to_grid(f: FlowField, sh: int, sw: int) -> np.ndarray:
    """Block-mean pool the flow to S_h x S_w and express it in patch units.

    Returns a 2 x S_t x S_h x S_w array ``[u_patch, v_patch]``.
    """
    H, W = f.height, f.width
    if sh < 1 or sw < 1 or H % sh or W % sw:
        raise ValueError(f"flow of size {H}x{W} cannot be pooled to a {sh}x{sw} patch grid")
    ph, pw = H // sh, W // sw
    blocks = f.stacked().reshape(2, f.frames, sh, ph, sw, pw)
    pooled = blocks.mean(axis=(3, 5))
    pooled[0] /= pw
    pooled[1] /= ph
    return pooled


def accumulate(g) -> DisplacementGrid:
    """Exclusive prefix sum over time: frame t holds the motion of flow frames 0..t-1."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 4 or g.shape[0] != 2:
        raise ValueError(f"expected a 2 x S_t x S_h x S_w patch flow, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("patch flow must be finite")
    out = np.zeros_like(g)
    np.cumsum(g[:, :-1], axis=1, out=out[:, 1:])
    u_patch, v_patch = out
    return DisplacementGrid(h_flow=v_patch, w_flow=u_patch)


def displacement_from_flow(f: FlowField, st: int, sh: int, sw: int) -> DisplacementGrid:
    """Pool and accumulate ``f`` into a grid with exactly ``st`` frames.

    A flow with ``st - 1`` frames (one per transition) is padded with a trailing
    zero frame; the last flow frame never contributes to the exclusive sum.
    """
    g = downsample_to_grid(f, sh, sw)
    if g.shape[1] == st - 1:
        g = np.concatenate([g, np.zeros((2, 1, sh, sw))], axis=1)
    elif g.shape[1] != st:
        raise ValueError(f"flow has {g.shape[1]} frames; expected {st} or {st - 1} for S_t={st}")
    return accumulate(g)
