"""Trajectory metrics: discrete Fréchet distance, occlusion filling, query
sampling, Fréchet Trajectory Distance (FTD) and a simplified Motion Fidelity.

Tracks are ingested, never computed. A :class:`TrajectorySet` holds N tracks of
F frames as an N x F x 2 array of (x, y) pixel coordinates plus an N x F
visibility mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TrajectorySet",
    "Mask",
    "SplitMix64",
    "sample_queries",
    "fill_and_drop",
    "discrete_frechet",
    "FtdResult",
    "ftd_report",
    "ftd",
    "motion_fidelity",
    "read_trajectories",
    "write_trajectories",
    "read_pgm",
    "write_pgm",
    "synthetic_tracks",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TrajectorySet:
    width: float
    height: float
    tracks: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        tracks = np.asarray(self.tracks, dtype=np.float64)
        if tracks.size == 0 and tracks.ndim < 3:
            tracks = tracks.reshape(0, max(1, tracks.shape[-1] if tracks.ndim else 1), 2)
        visible = np.asarray(self.visible, dtype=bool)
        if tracks.ndim != 3 or tracks.shape[2] != 2:
            raise ValueError(f"tracks must be N x F x 2, got shape {tracks.shape}")
        if visible.shape != tracks.shape[:2]:
            raise ValueError(f"visibility shape {visible.shape} does not match tracks {tracks.shape[:2]}")
        if tracks.shape[1] < 1:
            raise ValueError("tracks need at least one frame")
        if not np.all(np.isfinite(tracks)):
            raise ValueError("track coordinates must be finite")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"frame size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "tracks", tracks)
        object.__setattr__(self, "visible", visible)

    @property
    def n_tracks(self) -> int:
        return self.tracks.shape[0]

    @property
    def n_frames(self) -> int:
        return self.tracks.shape[1]

    @classmethod
    def all_visible(cls, width, height, tracks) -> "TrajectorySet":
        tracks = np.asarray(tracks, dtype=np.float64)
        return cls(width, height, tracks, np.ones(tracks.shape[:2], dtype=bool))


@dataclass(frozen=True)
class Mask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


class SplitMix64:
    """splitmix64 generator; identical streams on every platform for a given seed."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, free of modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def _sample_without_replacement(pool: list[tuple[float, float]], n: int, rng: SplitMix64):
    pool = list(pool)
    for i in range(n):
        j = i + rng.below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:n]


def sample_queries(mask: Mask, n: int, fg_only: bool = False, rng: SplitMix64 | int = 0):
    """First-frame query points ``(x, y)`` drawn uniformly without replacement.

    Pixel (row r, column c) is represented by its center at ``(c, r)``. With
    ``fg_only`` all ``n`` points come from the foreground; otherwise ``n // 2``
    foreground points are followed by ``n // 2`` background points.
    """
    if isinstance(rng, int):
        rng = SplitMix64(rng)
    if n < 0:
        raise ValueError("n must be non-negative")
    rows, cols = np.nonzero(mask.bits)
    fg = [(float(c), float(r)) for r, c in zip(rows, cols)]
    rows, cols = np.nonzero(~mask.bits)
    bg = [(float(c), float(r)) for r, c in zip(rows, cols)]
    if n == 0:
        return []
    if fg_only:
        plan = [("foreground", fg, n)]
    else:
        plan = [("foreground", fg, n // 2), ("background", bg, n // 2)]
    out = []
    for name, pool, count in plan:
        if not pool:
            raise ValueError(f"{name} region of the mask is empty")
        if count > len(pool):
            raise ValueError(f"cannot sample {count} points from a {name} region of {len(pool)} pixels")
        out.extend(_sample_without_replacement(pool, count, rng))
    return out


def fill_and_drop(t: TrajectorySet) -> tuple[TrajectorySet, np.ndarray]:
    """Fill occluded points from their nearest visible neighbour; report dropped tracks.

    At each frame f >= 1 an invisible point takes the frame-f position of the
    visible track whose frame-f position is nearest to the invisible point's
    filled frame-(f-1) position (ties go to the lowest track index). If no
    track is visible at frame f, every point keeps its frame-(f-1) position.
    A track is dropped when it is invisible at every frame f >= 1.
    """
    filled = t.tracks.copy()
    vis = t.visible
    for f in range(1, t.n_frames):
        inv_idx = np.flatnonzero(~vis[:, f])
        vis_idx = np.flatnonzero(vis[:, f])
        if inv_idx.size == 0:
            continue
        if vis_idx.size == 0:
            filled[:, f] = filled[:, f - 1]
            continue
        prev_pts = filled[inv_idx, f - 1]
        curr_pts = filled[vis_idx, f]
        d = np.linalg.norm(prev_pts[:, None, :] - curr_pts[None, :, :], axis=-1)
        filled[inv_idx, f] = curr_pts[np.argmin(d, axis=1)]
    dropped = np.flatnonzero(~vis[:, 1:].any(axis=1))
    return TrajectorySet(t.width, t.height, filled, vis.copy()), dropped


def discrete_frechet(P, Q) -> float:
    """Discrete Fréchet distance between two polylines (Eiter and Mannila's DP)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.ndim != 2 or Q.ndim != 2 or len(P) == 0 or len(Q) == 0:
        raise ValueError("curves must be non-empty point sequences")
    if P.shape[1] != Q.shape[1]:
        raise ValueError(f"curves live in different dimensions: {P.shape[1]} vs {Q.shape[1]}")
    dist = np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=-1))
    p, q = dist.shape
    ca = np.empty((p, q))
    ca[0, 0] = dist[0, 0]
    for i in range(1, p):
        ca[i, 0] = max(ca[i - 1, 0], dist[i, 0])
    for j in range(1, q):
        ca[0, j] = max(ca[0, j - 1], dist[0, j])
    for i in range(1, p):
        for j in range(1, q):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), dist[i, j])
    return float(ca[-1, -1])


@dataclass(frozen=True)
class FtdResult:
    value: float
    pairs: int
    dropped_real: tuple[int, ...]
    dropped_fake: tuple[int, ...]
    distances: tuple[float, ...] = field(repr=False, default=())


def ftd_report(real: TrajectorySet, fake: TrajectorySet) -> FtdResult:
    if real.tracks.shape[:2] != fake.tracks.shape[:2]:
        raise ValueError(
            f"real and fake track sets differ in shape: {real.tracks.shape[:2]} vs {fake.tracks.shape[:2]}"
        )
    normed = []
    drops = []
    for ts in (real, fake):
        filled, drop = fill_and_drop(ts)
        pts = filled.tracks.copy()
        pts[..., 0] /= ts.width
        pts[..., 1] /= ts.height
        normed.append(pts)
        drops.append(set(drop.tolist()))
    dists = []
    for i in range(real.n_tracks):
        if i in drops[0] or i in drops[1]:
            continue
        dists.append(discrete_frechet(normed[0][i], normed[1][i]))
    if not dists:
        raise ValueError("no valid trajectory pairs: every track was dropped in the real or fake set")
    value = math.sqrt(math.fsum(d * d for d in dists) / len(dists))
    return FtdResult(value, len(dists), tuple(sorted(drops[0])), tuple(sorted(drops[1])), tuple(dists))


def ftd(real: TrajectorySet, fake: TrajectorySet) -> float:
    """Root-mean-square Fréchet distance over resolution-normalized track pairs."""
    return ftd_report(real, fake).value


def _displacement_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    both_zero = (na == 0) & (nb == 0)
    one_zero = (na == 0) ^ (nb == 0)
    denom = np.where((na > 0) & (nb > 0), na * nb, 1.0)
    cos = (a * b).sum(axis=-1) / denom
    cos = np.where(both_zero, 1.0, np.where(one_zero, 0.0, cos))
    return np.clip(cos, -1.0, 1.0)


def motion_fidelity(real: TrajectorySet, fake: TrajectorySet) -> float:
    """Simplified Motion Fidelity: mean over real tracks of the best-matching
    fake track's mean frame-to-frame displacement cosine similarity."""
    if real.n_frames != fake.n_frames:
        raise ValueError(f"frame counts differ: {real.n_frames} vs {fake.n_frames}")
    if real.n_frames < 2:
        raise ValueError("motion fidelity needs at least two frames")
    if real.n_tracks == 0 or fake.n_tracks == 0:
        raise ValueError("motion fidelity needs non-empty track sets")
    dr = np.diff(real.tracks, axis=1)
    df = np.diff(fake.tracks, axis=1)
    sims = _displacement_cosines(dr[:, None], df[None, :]).mean(axis=-1)
    return float(sims.max(axis=1).mean())


# -- file formats ------------------------------------------------------------


def read_trajectories(path) -> TrajectorySet:
    """Load ``{"width", "height", "tracks": [{"points": [[x, y], ...], "visible": [...]}]}``."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        width = float(doc["width"])
        height = float(doc["height"])
        entries = doc["tracks"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: missing trajectory field {exc}") from None
    if not entries:
        raise ValueError(f"{path}: no tracks")
    points = []
    vis = []
    for i, entry in enumerate(entries):
        pts = entry["points"]
        flags = entry.get("visible", [True] * len(pts))
        if len(flags) != len(pts):
            raise ValueError(f"{path}: track {i} has {len(pts)} points but {len(flags)} visibility flags")
        points.append(pts)
        vis.append([bool(v) for v in flags])
    lengths = {len(p) for p in points}
    if len(lengths) != 1:
        raise ValueError(f"{path}: tracks differ in frame count {sorted(lengths)}")
    return TrajectorySet(width, height, np.array(points, dtype=np.float64), np.array(vis, dtype=bool))


def write_trajectories(ts: TrajectorySet, path) -> None:
    doc = {
        "width": ts.width,
        "height": ts.height,
        "tracks": [
            {"points": ts.tracks[i].tolist(), "visible": ts.visible[i].tolist()} for i in range(ts.n_tracks)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _pgm_tokens(buf: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> Mask:
    """Binary PGM (P5, maxval <= 255); nonzero pixels are foreground."""
    path = Path(path)
    buf = path.read_bytes()
    tokens, offset = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM is not supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=width * height, offset=offset) if width * height else np.zeros(0, np.uint8)
    if data.size != width * height:
        raise ValueError(f"{path}: truncated PGM payload")
    return Mask(data.reshape(height, width) != 0)


def write_pgm(mask: Mask, path) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.bits.astype(np.uint8) * 255).tobytes())


def synthetic_tracks(
    queries,
    frames: int,
    width: float,
    height: float,
    velocity=(0.0, 0.0),
    occlusions: dict[int, tuple[int, int]] | None = None,
) -> TrajectorySet:
    """Straight-line tracks from ``queries`` moving ``velocity`` px/frame.

    ``occlusions`` maps a track index to a half-open frame window ``[start, stop)``
    during which that track is flagged invisible.
    """
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    steps = np.arange(frames, dtype=np.float64)[None, :, None]
    tracks = q[:, None, :] + steps * np.asarray(velocity, dtype=np.float64)
    vis = np.ones(tracks.shape[:2], dtype=bool)
    for i, (start, stop) in (occlusions or {}).items():
        vis[i, start:stop] = False
    return TrajectorySet(width, height, tracks, vis)
