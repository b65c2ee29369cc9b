"""Flow-matching objective with Fourier phase/magnitude regularizers, and the
short RoPE-offset optimization run over the first denoising steps.

Spectra are unnormalized forward DFTs over the three trailing (t, h, w) axes.
Phases are compared on the unit circle as (cos, sin) pairs, so the +/-pi wrap
of ``angle`` never enters a loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .attention import ToyVelocityModel, toy_forward
from .flow import DisplacementGrid
from .rope import RopeConfig, build_motion_rope

__all__ = [
    "NULL_BIN_EPS",
    "Schedule",
    "ObjectiveConfig",
    "SpectralDecomp",
    "LossTerms",
    "TraceRow",
    "target_velocity",
    "fm_loss",
    "dft_matrix",
    "dft3",
    "spectral_decompose",
    "phase_loss_terms",
    "phase_loss",
    "magnitude_loss",
    "loss_terms",
    "combined_objective",
    "central_difference",
    "grad_wrt_offsets",
    "optimize_offsets",
]

logger = logging.getLogger(__name__)

NULL_BIN_EPS = 1e-12
REGULARIZERS = ("phase", "magnitude", "none")


@dataclass(frozen=True)
class Schedule:
    sigmas: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        if not s:
            raise ValueError("schedule needs at least one sigma")
        if any(not (0.0 < x <= 1.0) for x in s):
            raise ValueError("every sigma must lie in (0, 1]")
        if any(b >= a for a, b in zip(s, s[1:])):
            raise ValueError("sigmas must be strictly decreasing")
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def linear(cls, steps: int = 50, start: float = 1.0, stop: float = 0.02) -> "Schedule":
        return cls(tuple(np.linspace(start, stop, steps)))

    def __len__(self) -> int:
        return len(self.sigmas)

    def next_sigma(self, i: int) -> float:
        """Sigma after step ``i``; 0 past the end of the schedule."""
        return self.sigmas[i + 1] if i + 1 < len(self.sigmas) else 0.0


@dataclass(frozen=True)
class ObjectiveConfig:
    # Defaults follow the reported settings: l = 1e-4, s = 5, t = 10, lambda = 1.
    lam: float = 1.0
    opt_steps_t: int = 10
    inner_steps_s: int = 5
    learning_rate: float = 1e-4
    regularizer: str = "phase"
    fd_step: float = 1e-4
    optimizer: str = "sgd"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.opt_steps_t < 0 or self.inner_steps_s < 0:
            raise ValueError("step counts must be non-negative")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.fd_step > 0:
            raise ValueError("finite-difference step must be positive")


@dataclass(frozen=True)
class SpectralDecomp:
    magnitude: np.ndarray
    phase_cos: np.ndarray
    phase_sin: np.ndarray


@dataclass(frozen=True)
class LossTerms:
    fm: float
    phase_cos: float
    phase_sin: float
    magnitude: float
    total: float

    @property
    def phase(self) -> float:
        return self.phase_cos + self.phase_sin


@dataclass(frozen=True)
class TraceRow:
    step: int
    inner_step: int
    fm: float
    phase: float
    total: float

    def csv(self) -> str:
        return f"{self.step},{self.inner_step},{self.fm:.9g},{self.phase:.9g},{self.total:.9g}"


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def target_velocity(x_t, v_ref, sigma_t: float) -> np.ndarray:
    """``(x_t - v_ref) / sigma_t``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    v_ref = np.asarray(v_ref, dtype=np.float64)
    if not sigma_t > 0:
        raise ValueError(f"sigma_t must be positive, got {sigma_t}")
    _check_same_shape(x_t, v_ref)
    return (x_t - v_ref) / sigma_t


def fm_loss(u_t, v_pred) -> float:
    u_t = np.asarray(u_t, dtype=np.float64)
    v_pred = np.asarray(v_pred, dtype=np.float64)
    _check_same_shape(u_t, v_pred)
    return float(np.mean((v_pred - u_t) ** 2))


def dft_matrix(n: int) -> np.ndarray:
    """``W[k, m] = exp(-2j pi k m / n)``; integer ``k*m mod n`` keeps the angles exact."""
    km = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * km / n)


def dft3(x, method: str = "direct") -> np.ndarray:
    """Unnormalized forward DFT over the last three axes.

    ``method="direct"`` applies an explicit O(N^2) DFT matrix per axis;
    ``method="fft"`` uses ``numpy.fft.fftn`` as a fast path.
    """
    x = np.asarray(x)
    if x.ndim < 3:
        raise ValueError(f"dft3 needs at least three axes (t, h, w), got shape {x.shape}")
    if method == "fft":
        return np.fft.fftn(x, axes=(-3, -2, -1))
    if method != "direct":
        raise ValueError(f"unknown DFT method {method!r}")
    out = x.astype(np.complex128)
    for axis in (-3, -2, -1):
        w = dft_matrix(out.shape[axis])
        out = np.moveaxis(np.tensordot(w, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def spectral_decompose(X, eps: float = NULL_BIN_EPS) -> SpectralDecomp:
    X = np.asarray(X, dtype=np.complex128)
    mag = np.abs(X)
    live = mag > eps
    safe = np.where(live, mag, 1.0)
    cos = np.where(live, X.real / safe, 1.0)
    sin = np.where(live, X.imag / safe, 0.0)
    return SpectralDecomp(mag, cos, sin)


def _spectra(u_t, v_pred, method: str):
    u_t = np.asarray(u_t, dtype=np.float64)
    v_pred = np.asarray(v_pred, dtype=np.float64)
    _check_same_shape(u_t, v_pred)
    return spectral_decompose(dft3(u_t, method)), spectral_decompose(dft3(v_pred, method))


def phase_loss_terms(u_t, v_pred, method: str = "direct") -> tuple[float, float]:
    """Mean-reduced L1 distances of the (cos, sin) phase components."""
    su, sv = _spectra(u_t, v_pred, method)
    return (
        float(np.mean(np.abs(su.phase_cos - sv.phase_cos))),
        float(np.mean(np.abs(su.phase_sin - sv.phase_sin))),
    )


def phase_loss(u_t, v_pred, method: str = "direct") -> float:
    c, s = phase_loss_terms(u_t, v_pred, method)
    return c + s


def magnitude_loss(u_t, v_pred, method: str = "direct") -> float:
    su, sv = _spectra(u_t, v_pred, method)
    return float(np.mean(np.abs(su.magnitude - sv.magnitude)))


def loss_terms(u_t, v_pred, cfg: ObjectiveConfig | None = None, method: str = "direct") -> LossTerms:
    """Every term at once; ``total`` uses the regularizer selected in ``cfg``."""
    cfg = cfg or ObjectiveConfig()
    su, sv = _spectra(u_t, v_pred, method)
    fm = fm_loss(u_t, v_pred)
    pc = float(np.mean(np.abs(su.phase_cos - sv.phase_cos)))
    ps = float(np.mean(np.abs(su.phase_sin - sv.phase_sin)))
    mag = float(np.mean(np.abs(su.magnitude - sv.magnitude)))
    if cfg.lam == 0 or cfg.regularizer == "none":
        total = fm
    elif cfg.regularizer == "phase":
        total = fm + cfg.lam * pc + cfg.lam * ps
    else:
        total = fm + cfg.lam * mag
    return LossTerms(fm=fm, phase_cos=pc, phase_sin=ps, magnitude=mag, total=total)


def combined_objective(u_t, v_pred, cfg: ObjectiveConfig | None = None) -> float:
    """``fm + lam * ||dcos||_1 + lam * ||dsin||_1`` with mean-reduced norms."""
    cfg = cfg or ObjectiveConfig()
    if cfg.lam == 0 or cfg.regularizer == "none":
        return fm_loss(u_t, v_pred)
    return loss_terms(u_t, v_pred, cfg).total


def central_difference(func, x0, eps: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of scalar ``func`` at array ``x0``."""
    x0 = np.asarray(x0, dtype=np.float64)
    x = x0.copy()
    flat = x.reshape(-1)
    grad = np.zeros(x0.size)
    for j in range(x0.size):
        orig = flat[j]
        flat[j] = orig + eps
        fplus = func(x)
        flat[j] = orig - eps
        fminus = func(x)
        flat[j] = orig
        grad[j] = (fplus - fminus) / (2 * eps)
    return grad.reshape(x0.shape)


def _offset_objective(model, x_t, u_t, rope_cfg, cfg):
    def f(stacked: np.ndarray) -> float:
        disp = DisplacementGrid(stacked[0], stacked[1])
        v = toy_forward(model, x_t, build_motion_rope(rope_cfg, disp))
        return combined_objective(u_t, v, cfg)

    return f


def grad_wrt_offsets(
    model: ToyVelocityModel,
    x_t,
    u_t,
    disp: DisplacementGrid,
    cfg: ObjectiveConfig,
    rope_cfg: RopeConfig,
    eps: float | None = None,
) -> DisplacementGrid:
    """Central-difference gradient of the combined objective w.r.t. every offset."""
    x_t = np.asarray(x_t, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    _check_same_shape(x_t, u_t)
    f = _offset_objective(model, x_t, u_t, rope_cfg, cfg)
    g = central_difference(f, disp.stacked(), cfg.fd_step if eps is None else eps)
    return DisplacementGrid.from_stacked(g)


@dataclass
class _Adam:
    betas: tuple[float, float]
    eps: float
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        b1, b2 = self.betas
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        mhat = self.m / (1 - b1**self.t)
        vhat = self.v / (1 - b2**self.t)
        return lr * mhat / (np.sqrt(vhat) + self.eps)


def optimize_offsets(
    model: ToyVelocityModel,
    schedule: Schedule,
    x_init,
    v_ref,
    disp_init: DisplacementGrid,
    cfg: ObjectiveConfig,
    rope_cfg: RopeConfig,
) -> tuple[DisplacementGrid, list[TraceRow]]:
    """Optimize RoPE offsets over the first ``cfg.opt_steps_t`` denoising steps.

    Per step: build the target velocity from the current latent, take
    ``cfg.inner_steps_s`` descent steps on the offsets, then advance the latent
    with the Euler update ``x <- x - (sigma_t - sigma_next) * v_pred``. Each
    trace row holds the objective evaluated before that inner update.
    """
    if cfg.opt_steps_t > len(schedule):
        raise ValueError(f"opt_steps_t={cfg.opt_steps_t} exceeds schedule length {len(schedule)}")
    x = np.asarray(x_init, dtype=np.float64).copy()
    v_ref = np.asarray(v_ref, dtype=np.float64)
    _check_same_shape(x, v_ref)
    params = disp_init.stacked().copy()
    adam = _Adam(cfg.adam_betas, cfg.adam_eps) if cfg.optimizer == "adam" else None
    trace: list[TraceRow] = []

    for i in range(cfg.opt_steps_t):
        sigma = schedule.sigmas[i]
        u_t = target_velocity(x, v_ref, sigma)
        f = _offset_objective(model, x, u_t, rope_cfg, cfg)
        for j in range(cfg.inner_steps_s):
            disp = DisplacementGrid.from_stacked(params)
            v_pred = toy_forward(model, x, build_motion_rope(rope_cfg, disp))
            terms = loss_terms(u_t, v_pred, cfg)
            trace.append(TraceRow(i, j, terms.fm, terms.phase, terms.total))
            if cfg.learning_rate == 0:
                continue
            grad = central_difference(f, params, cfg.fd_step)
            if adam is None:
                params = params - cfg.learning_rate * grad
            else:
                params = params - adam.step(grad, cfg.learning_rate)
        logger.debug("step %d sigma=%.4f last total=%s", i, sigma, trace[-1].total if trace else None)
        disp = DisplacementGrid.from_stacked(params)
        v_pred = toy_forward(model, x, build_motion_rope(rope_cfg, disp))
        x = x - (sigma - schedule.next_sigma(i)) * v_pred

    return DisplacementGrid.from_stacked(params), trace
