"""Motion-augmented rotary position embeddings for video attention, the
flow-matching objective with Fourier phase regularization, and the Fréchet
Trajectory Distance metric."""

__version__ = "0.1.0"

from .flow import DisplacementGrid, FlowField, accumulate, downsample_to_grid, flow_synth
from .rope import RopeConfig, RopeGrid, build_default_rope, build_motion_rope, freq_spectrum, rope_1d
from .tnsr import tnsr_read, tnsr_write
from .trajectory import TrajectorySet, discrete_frechet, fill_and_drop, ftd

__all__ = [
    "__version__",
    "DisplacementGrid",
    "FlowField",
    "accumulate",
    "downsample_to_grid",
    "flow_synth",
    "RopeConfig",
    "RopeGrid",
    "build_default_rope",
    "build_motion_rope",
    "freq_spectrum",
    "rope_1d",
    "tnsr_read",
    "tnsr_write",
    "TrajectorySet",
    "discrete_frechet",
    "fill_and_drop",
    "ftd",
]
