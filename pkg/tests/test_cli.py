import json
import subprocess
import sys

import numpy as np
import pytest

from motionrope.cli import main
from motionrope.tnsr import tnsr_read, tnsr_write
from motionrope.trajectory import TrajectorySet, write_trajectories

ROPE_SMALL = ["--st", "2", "--sh", "2", "--sw", "2", "--dt", "2", "--dh", "2", "--dw", "2"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def result_fields(stdout):
    line = next(l for l in stdout.splitlines() if l.startswith("RESULT "))
    return dict(kv.split("=", 1) for kv in line.split()[1:])


def test_rope_build_shape_and_manifest(tmp_path, capsys):
    out = tmp_path / "r.tnsr"
    code, stdout, _ = run(["rope", "build", *ROPE_SMALL, "--out", out], capsys)
    assert code == 0
    assert tnsr_read(out).shape == (2, 2, 2, 3)
    assert "shape [2, 2, 2, 3]" in stdout
    manifest = json.loads((tmp_path / "r.tnsr.manifest.json").read_text())
    assert manifest["command"] == "rope build"
    assert manifest["parameters"]["st"] == 2
    assert "tool_version" in manifest


def test_usage_error_exit_code(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "motionrope.cli", "rope", "build", *ROPE_SMALL],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "--out" in proc.stderr


def test_invalid_config_exit_code(tmp_path, capsys):
    code, _, err = run(["rope", "build", "--st", "2", "--sh", "2", "--sw", "2", "--dt", "3", "--out", tmp_path / "x"], capsys)
    assert code == 1
    assert "even" in err


def test_rope_build_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a" / "r.tnsr", tmp_path / "b" / "r.tnsr"
    a.parent.mkdir()
    b.parent.mkdir()
    run(["rope", "build", *ROPE_SMALL, "--out", a], capsys)
    run(["rope", "build", *ROPE_SMALL, "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_rope_warp_zero_flow_check(tmp_path, capsys):
    flow = tmp_path / "flow"
    assert run(["flow", "synth", "--pattern", "constant", "--frames", "2", "--height", "4", "--width", "4", "--out", flow], capsys)[0] == 0
    code, stdout, _ = run(["rope", "warp", "--flow", flow, *ROPE_SMALL, "--out", tmp_path / "w.tnsr", "--check"], capsys)
    assert code == 0
    fields = result_fields(stdout)
    assert float(fields["max_abs_diff_vs_default"]) <= 1e-12
    assert fields["check"] == "pass"
    run(["rope", "build", *ROPE_SMALL, "--out", tmp_path / "d.tnsr"], capsys)
    assert np.max(np.abs(tnsr_read(tmp_path / "w.tnsr") - tnsr_read(tmp_path / "d.tnsr"))) <= 1e-12


def test_rope_warp_constant_flow_shift_law(tmp_path, capsys):
    flow = tmp_path / "flow"
    run(["flow", "synth", "--pattern", "constant", "--a", "2", "--frames", "2", "--height", "4", "--width", "4", "--out", flow], capsys)
    code, stdout, _ = run(["rope", "warp", "--flow", flow, *ROPE_SMALL, "--out", tmp_path / "w.tnsr", "--check"], capsys)
    assert code == 0
    assert result_fields(stdout)["check"] == "pass"
    grid = tnsr_read(tmp_path / "w.tnsr")
    # 2 px/frame over 2-px patches is one patch per frame; frame 1 w-block at column 0 sits at position 1
    np.testing.assert_allclose(grid[1, 0, 0, 2], np.exp(1j * 1.0), atol=1e-12)


def test_rope_warp_missing_flow(tmp_path, capsys):
    code, _, err = run(["rope", "warp", "--flow", tmp_path / "nope", *ROPE_SMALL, "--out", tmp_path / "w.tnsr"], capsys)
    assert code == 1
    assert "file not found" in err


def test_rope_warp_non_divisible(tmp_path, capsys):
    flow = tmp_path / "flow"
    run(["flow", "synth", "--pattern", "constant", "--frames", "2", "--height", "3", "--width", "4", "--out", flow], capsys)
    code, _, err = run(["rope", "warp", "--flow", flow, *ROPE_SMALL, "--out", tmp_path / "w.tnsr"], capsys)
    assert code == 1
    assert "3x4" in err


def test_flow_convert_roundtrip(tmp_path, capsys):
    run(["flow", "synth", "--pattern", "rotation", "--omega", "0.2", "--frames", "2", "--height", "3", "--width", "5", "--out", tmp_path / "f"], capsys)
    assert run(["flow", "convert", "--in", tmp_path / "f", "--out", tmp_path / "f.tnsr"], capsys)[0] == 0
    assert tnsr_read(tmp_path / "f.tnsr").shape == (2, 2, 3, 5)
    assert run(["flow", "convert", "--in", tmp_path / "f.tnsr", "--out", tmp_path / "g"], capsys)[0] == 0
    assert sorted(p.name for p in (tmp_path / "g").glob("*.flo")) == ["0000.flo", "0001.flo"]
    for name in ("0000.flo", "0001.flo"):
        assert (tmp_path / "f" / name).read_bytes() == (tmp_path / "g" / name).read_bytes()


def _write(ts, path):
    write_trajectories(ts, path)
    return path


def test_metric_ftd_identical_and_swap(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a = _write(TrajectorySet.all_visible(32, 32, rng.uniform(0, 30, (5, 4, 2))), tmp_path / "a.json")
    b = _write(TrajectorySet.all_visible(32, 32, rng.uniform(0, 30, (5, 4, 2))), tmp_path / "b.json")
    code, stdout, _ = run(["metric", "ftd", "--real", a, "--fake", a], capsys)
    assert code == 0
    assert "FTD 0" in stdout
    assert float(result_fields(stdout)["ftd"]) == 0.0
    ab = result_fields(run(["metric", "ftd", "--real", a, "--fake", b], capsys)[1])["ftd"]
    ba = result_fields(run(["metric", "ftd", "--real", b, "--fake", a], capsys)[1])["ftd"]
    assert ab == ba


def test_metric_ftd_fixture_and_mf(tmp_path, capsys):
    real = _write(TrajectorySet.all_visible(10, 10, [[[0, 0], [0, 0]]]), tmp_path / "r.json")
    fake = _write(TrajectorySet.all_visible(10, 10, [[[0, 0], [0, 5]]]), tmp_path / "f.json")
    code, stdout, _ = run(["metric", "ftd", "--real", real, "--fake", fake, "--mf"], capsys)
    assert code == 0
    fields = result_fields(stdout)
    assert fields["ftd"] == "0.5"
    assert fields["pairs"] == "1"
    assert "motion_fidelity_simplified" in fields


def test_metric_ftd_no_pairs(tmp_path, capsys):
    t = _write(TrajectorySet(10, 10, np.zeros((1, 2, 2)), [[1, 0]]), tmp_path / "t.json")
    code, _, err = run(["metric", "ftd", "--real", t, "--fake", t], capsys)
    assert code == 1
    assert "no valid trajectory pairs" in err


def test_metric_ftd_mask_subsample(tmp_path, capsys):
    from motionrope.trajectory import Mask, write_pgm

    bits = np.zeros((8, 8), bool)
    bits[:4] = True
    write_pgm(Mask(bits), tmp_path / "m.pgm")
    starts = [(c, r) for r in (1, 6) for c in range(6)]
    tracks = np.array([[s, s] for s in starts], dtype=float)
    t = _write(TrajectorySet.all_visible(8, 8, tracks), tmp_path / "t.json")
    argv = ["metric", "ftd", "--real", t, "--fake", t, "--mask", tmp_path / "m.pgm", "--n", "4", "--seed", "3"]
    code, stdout, _ = run(argv, capsys)
    assert code == 0
    assert result_fields(stdout)["pairs"] == "4"
    assert run(argv, capsys)[1] == stdout


def test_metric_frechet(tmp_path, capsys):
    (tmp_path / "p.json").write_text("[[0,0],[2,0]]")
    (tmp_path / "q.json").write_text("[[1,3]]")
    code, stdout, _ = run(["metric", "frechet", "--p", tmp_path / "p.json", "--q", tmp_path / "q.json"], capsys)
    assert code == 0
    assert result_fields(stdout)["frechet"] == f"{np.sqrt(10):.9g}"


def test_metric_queries(tmp_path, capsys):
    from motionrope.trajectory import Mask, write_pgm

    write_pgm(Mask(np.eye(4, dtype=bool)), tmp_path / "m.pgm")
    out = tmp_path / "q.json"
    assert run(["metric", "queries", "--mask", tmp_path / "m.pgm", "--n", "4", "--out", out], capsys)[0] == 0
    pts = json.loads(out.read_text())
    assert len(pts) == 4
    assert all(x == y for x, y in pts[:2])


@pytest.fixture
def loss_inputs(tmp_path):
    u = np.random.default_rng(0).standard_normal((2, 2, 3, 4))
    tnsr_write(u, tmp_path / "u.tnsr")
    tnsr_write(2 * u, tmp_path / "v.tnsr")
    tnsr_write(u[:1], tmp_path / "bad.tnsr")
    return tmp_path, u


def test_loss_eval_identical(loss_inputs, capsys):
    d, _ = loss_inputs
    code, stdout, _ = run(["loss", "eval", "--target", d / "u.tnsr", "--pred", d / "u.tnsr", "--terms", "fm,phase,mag"], capsys)
    assert code == 0
    fields = result_fields(stdout)
    assert all(float(fields[k]) == 0.0 for k in ("fm", "phase", "mag", "combined"))


def test_loss_eval_lambda_zero_and_scaling(loss_inputs, capsys):
    d, u = loss_inputs
    f0 = result_fields(run(["loss", "eval", "--target", d / "u.tnsr", "--pred", d / "v.tnsr", "--lambda", "0", "--terms", "fm,mag"], capsys)[1])
    assert f0["combined"] == f0["fm"]
    f1 = result_fields(run(["loss", "eval", "--target", d / "u.tnsr", "--pred", d / "v.tnsr"], capsys)[1])
    assert float(f1["phase"]) <= 1e-9
    assert float(f1["fm"]) == pytest.approx(np.mean(u**2), rel=1e-8)


def test_loss_eval_shape_mismatch(loss_inputs, capsys):
    d, _ = loss_inputs
    code, _, err = run(["loss", "eval", "--target", d / "u.tnsr", "--pred", d / "bad.tnsr"], capsys)
    assert code == 1
    assert "shape mismatch" in err


def test_loss_eval_bad_terms(loss_inputs):
    d, _ = loss_inputs
    with pytest.raises(SystemExit) as exc:
        main(["loss", "eval", "--target", str(d / "u.tnsr"), "--pred", str(d / "u.tnsr"), "--terms", "fm,l2"])
    assert exc.value.code == 2


def _flow_dir(tmp_path, capsys):
    flow = tmp_path / "flow"
    run(["flow", "synth", "--pattern", "constant", "--a", "0.4", "--frames", "2", "--height", "4", "--width", "4", "--out", flow], capsys)
    return flow


SIM_SMALL = ["--st", "3", "--sh", "2", "--sw", "2", "--dt", "2", "--dh", "2", "--dw", "2", "--t", "2", "--s", "2"]


def test_sim_optimize_lr_zero_flat(tmp_path, capsys):
    flow = _flow_dir(tmp_path, capsys)
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(["sim", "optimize", "--flow", flow, *SIM_SMALL, "--lr", "0", "--out", out], capsys)
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "step,inner_step,fm,phase,total"
    assert len(rows) == 5
    for step in ("0", "1"):
        totals = {r.split(",")[4] for r in rows[1:] if r.startswith(step + ",")}
        assert len(totals) == 1
    assert tnsr_read(tmp_path / "trace.offsets.tnsr").shape == (2, 3, 2, 2)
    assert not tnsr_read(tmp_path / "trace.offsets.tnsr").any()


def test_sim_optimize_deterministic(tmp_path, capsys):
    flow = _flow_dir(tmp_path, capsys)
    outs = []
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        out = tmp_path / name / "trace.csv"
        run(["sim", "optimize", "--flow", flow, *SIM_SMALL, "--lr", "0.01", "--seed", "7", "--out", out], capsys)
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert (tmp_path / "a" / "trace.offsets.tnsr").read_bytes() == (tmp_path / "b" / "trace.offsets.tnsr").read_bytes()
