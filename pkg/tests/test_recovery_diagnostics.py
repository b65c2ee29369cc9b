"""Diagnostics for the offset-recovery loop (not acceptance criteria).

With the latent frozen at the first denoising step, descent on the offsets should make
progress toward the generating offsets. The full multi-step run, where the latent keeps
moving and the target moves with it, is covered by the acceptance suite.
"""

import pytest

from motionrope.flow import DisplacementGrid
from motionrope.objective import ObjectiveConfig, optimize_offsets

from .test_acceptance import recovery_instance


def _single_step_run(seed):
    cfg, schedule, model, x, v_ref, _ = recovery_instance(seed)
    oc = ObjectiveConfig(opt_steps_t=1, inner_steps_s=50, learning_rate=1e-4)
    _, trace = optimize_offsets(model, schedule, x, v_ref, DisplacementGrid.zeros(*cfg.seq), oc, cfg)
    return trace


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_fixed_target_descent_reduces_loss(seed):
    trace = _single_step_run(seed)
    assert trace[-1].total < trace[0].total


def test_fixed_target_seed0_halves_loss():
    trace = _single_step_run(0)
    assert trace[-1].total < 0.5 * trace[0].total
