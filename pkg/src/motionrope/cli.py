"""Command-line front end.

Every command is deterministic given its arguments. Output files get a
``<file>.manifest.json`` sidecar; machine-readable summaries are printed on a
single line prefixed ``RESULT``. Exit codes: 0 success, 1 runtime/data error,
2 usage error.
"""

from __future__ import annotations

import argparse
import errno
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .attention import ToyVelocityModel, toy_forward
from .flow import (
    DisplacementGrid,
    FlowField,
    displacement_from_flow,
    flo_read,
    flow_synth,
    read_flow_dir,
    write_flow_dir,
)
from .objective import ObjectiveConfig, Schedule, loss_terms, optimize_offsets
from .rope import DEFAULT_THETA, RopeConfig, build_default_rope, build_motion_rope, freq_spectrum
from .tnsr import TnsrError, tnsr_dumps, tnsr_read, tnsr_write
from .trajectory import (
    SplitMix64,
    TrajectorySet,
    discrete_frechet,
    ftd_report,
    motion_fidelity,
    read_pgm,
    read_trajectories,
    sample_queries,
)

log = logging.getLogger("motionrope")

LOSS_TERMS = ("fm", "phase", "mag")


class CliError(Exception):
    """Runtime/data failure reported with exit code 1."""


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(path.iterdir(), key=lambda p: p.name):
            if child.is_file():
                h.update(child.name.encode())
                h.update(child.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _input_digests(paths) -> dict[str, str]:
    return {str(p): _sha256_file(Path(p)) for p in paths if p is not None}


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs, seed=None) -> None:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "group", "action")}
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "inputs": _input_digests(inputs),
        "outputs": {str(out): _sha256_file(out)},
        "tool_version": __version__,
    }
    sidecar = out.parent / (out.name + ".manifest.json")
    sidecar.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _result(**fields: Any) -> None:
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = fmt(value)
        elif isinstance(value, (list, tuple)):
            value = "[" + ",".join(str(v) for v in value) + "]"
        parts.append(f"{key}={value}")
    print("RESULT " + " ".join(parts))


def _rope_config(args) -> RopeConfig:
    try:
        return RopeConfig((args.st, args.sh, args.sw), (args.dt, args.dh, args.dw), args.theta)
    except ValueError as exc:
        raise CliError(f"invalid RoPE configuration: {exc}") from None


def _load_flow(path: str) -> FlowField:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(errno.ENOENT, "flow input not found", str(p))
    if p.is_dir():
        return read_flow_dir(p)
    if p.suffix == ".flo":
        return flo_read(p)
    return FlowField.from_stacked(tnsr_read(p))


# -- rope --------------------------------------------------------------------


def cmd_rope_build(args) -> int:
    cfg = _rope_config(args)
    grid = build_default_rope(cfg).grid
    out = Path(args.out)
    tnsr_write(grid, out)
    _write_manifest(out, "rope build", args, [])
    digest = hashlib.sha256(tnsr_dumps(grid)).hexdigest()
    print(f"shape {list(grid.shape)}")
    print(f"sha256 {digest}")
    _result(command="rope_build", shape=list(grid.shape), sha256=digest)
    return 0


def cmd_rope_warp(args) -> int:
    cfg = _rope_config(args)
    flow = _load_flow(args.flow)
    st, sh, sw = cfg.seq
    disp = displacement_from_flow(flow, st, sh, sw)
    rope = build_motion_rope(cfg, disp)
    out = Path(args.out)
    tnsr_write(rope.grid, out)
    _write_manifest(out, "rope warp", args, [args.flow])
    digest = hashlib.sha256(tnsr_dumps(rope.grid)).hexdigest()
    default = build_default_rope(cfg).grid
    diff_default = float(np.max(np.abs(rope.grid - default)))
    print(f"shape {list(rope.grid.shape)}")
    print(f"sha256 {digest}")
    print(f"max_abs_diff_vs_default {fmt(diff_default)}")
    fields = dict(command="rope_warp", shape=list(rope.grid.shape), sha256=digest, max_abs_diff_vs_default=diff_default)
    if args.check:
        # Independent route: rotate the default grid by exp(j * offset * f) per block.
        dt, dh, dw = cfg.dims
        fh = freq_spectrum(dh, cfg.theta)
        fw = freq_spectrum(dw, cfg.theta)
        expect = default.copy()
        expect[..., dt // 2 : (dt + dh) // 2] *= np.exp(1j * disp.h_flow[..., None] * fh)
        expect[..., (dt + dh) // 2 :] *= np.exp(1j * disp.w_flow[..., None] * fw)
        shift_err = float(np.max(np.abs(rope.grid - expect)))
        ok = shift_err <= 1e-9
        print(f"shift_law_max_err {fmt(shift_err)} {'PASS' if ok else 'FAIL'}")
        fields.update(shift_law_max_err=shift_err, check="pass" if ok else "fail")
        _result(**fields)
        if not ok:
            raise CliError(f"phase shift law violated: max error {shift_err:.3g} > 1e-9")
        return 0
    _result(**fields)
    return 0


# -- flow --------------------------------------------------------------------


def _write_flow(flow: FlowField, out: Path) -> None:
    if out.suffix == ".tnsr":
        tnsr_write(flow.stacked(), out)
    else:
        write_flow_dir(flow, out)


def cmd_flow_synth(args) -> int:
    params = {"a": args.a, "b": args.b, "omega": args.omega, "scale": args.scale}
    flow = flow_synth(args.pattern, params, args.frames, args.height, args.width)
    out = Path(args.out)
    _write_flow(flow, out)
    _write_manifest(out, "flow synth", args, [])
    print(f"frames {flow.frames} height {flow.height} width {flow.width}")
    _result(command="flow_synth", pattern=args.pattern, frames=flow.frames, height=flow.height, width=flow.width)
    return 0


def cmd_flow_convert(args) -> int:
    flow = _load_flow(args.input)
    out = Path(args.out)
    _write_flow(flow, out)
    _write_manifest(out, "flow convert", args, [args.input])
    _result(command="flow_convert", frames=flow.frames, height=flow.height, width=flow.width)
    return 0


# -- metrics -----------------------------------------------------------------


def _load_curve(path: str, track: int | None) -> np.ndarray:
    p = Path(path)
    doc = json.loads(p.read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        ts = read_trajectories(p)
        idx = 0 if track is None else track
        if not 0 <= idx < ts.n_tracks:
            raise CliError(f"{p}: track index {idx} out of range (0..{ts.n_tracks - 1})")
        return ts.tracks[idx]
    return np.asarray(doc, dtype=np.float64)


def cmd_metric_frechet(args) -> int:
    P = _load_curve(args.p, args.track)
    Q = _load_curve(args.q, args.track)
    d = discrete_frechet(P, Q)
    print(f"frechet {fmt(d)}")
    _result(command="metric_frechet", frechet=d)
    return 0


def _select_tracks(real: TrajectorySet, fake: TrajectorySet, args) -> np.ndarray:
    """Indices to evaluate: all tracks, or a mask-driven fg/bg subsample."""
    idx = np.arange(real.n_tracks)
    if args.mask is None:
        return idx
    mask = read_pgm(args.mask)
    start = real.tracks[:, 0]
    cols = np.clip(np.rint(start[:, 0]).astype(int), 0, mask.width - 1)
    rows = np.clip(np.rint(start[:, 1]).astype(int), 0, mask.height - 1)
    in_fg = mask.bits[rows, cols]
    rng = SplitMix64(args.seed)
    if args.fg_only:
        groups = [("foreground", idx[in_fg], args.n)]
    else:
        groups = [("foreground", idx[in_fg], args.n // 2), ("background", idx[~in_fg], args.n // 2)]
    chosen = []
    for name, pool, count in groups:
        count = min(count, len(pool))
        if count == 0:
            raise CliError(f"no tracks start in the {name} region of {args.mask}")
        pool = list(pool)
        for i in range(count):
            j = i + rng.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        chosen.extend(sorted(pool[:count]))
    return np.asarray(chosen, dtype=int)


def _subset(ts: TrajectorySet, idx: np.ndarray) -> TrajectorySet:
    return TrajectorySet(ts.width, ts.height, ts.tracks[idx], ts.visible[idx])


def cmd_metric_ftd(args) -> int:
    real = read_trajectories(args.real)
    fake = read_trajectories(args.fake)
    if real.tracks.shape[:2] != fake.tracks.shape[:2]:
        raise CliError(f"track sets differ in shape: {real.tracks.shape[:2]} vs {fake.tracks.shape[:2]}")
    idx = _select_tracks(real, fake, args)
    real_s, fake_s = _subset(real, idx), _subset(fake, idx)
    try:
        rep = ftd_report(real_s, fake_s)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    drop_real = [int(idx[i]) for i in rep.dropped_real]
    drop_fake = [int(idx[i]) for i in rep.dropped_fake]
    print(f"FTD {fmt(rep.value)}")
    print(f"pairs {rep.pairs}")
    print(f"dropped_real {drop_real}")
    print(f"dropped_fake {drop_fake}")
    fields = dict(command="metric_ftd", ftd=rep.value, pairs=rep.pairs, dropped_real=drop_real, dropped_fake=drop_fake)
    if args.mf:
        mf = motion_fidelity(real_s, fake_s)
        print(f"motion_fidelity_simplified {fmt(mf)}")
        fields["motion_fidelity_simplified"] = mf
    _result(**fields)
    return 0


def cmd_metric_queries(args) -> int:
    mask = read_pgm(args.mask)
    pts = sample_queries(mask, args.n, args.fg_only, SplitMix64(args.seed))
    out = Path(args.out)
    out.write_text(json.dumps([list(p) for p in pts]) + "\n", encoding="utf-8")
    _write_manifest(out, "metric queries", args, [args.mask], seed=args.seed)
    _result(command="metric_queries", count=len(pts))
    return 0


# -- losses ------------------------------------------------------------------


def _parse_terms(raw: str) -> list[str]:
    terms = [t.strip() for t in raw.split(",") if t.strip()]
    bad = [t for t in terms if t not in LOSS_TERMS]
    if bad or not terms:
        raise argparse.ArgumentTypeError(f"terms must be drawn from {','.join(LOSS_TERMS)}, got {raw!r}")
    return terms


def cmd_loss_eval(args) -> int:
    u = tnsr_read(args.target)
    v = tnsr_read(args.pred)
    if np.iscomplexobj(u) or np.iscomplexobj(v):
        raise CliError("loss evaluation expects real tensors")
    if u.shape != v.shape:
        raise CliError(f"shape mismatch: target {list(u.shape)} vs pred {list(v.shape)}")
    if u.ndim < 3:
        raise CliError(f"tensors need at least three (t, h, w) axes, got shape {list(u.shape)}")
    lt = loss_terms(u, v, ObjectiveConfig(lam=args.lam))
    values = {"fm": lt.fm, "phase": lt.phase, "mag": lt.magnitude}
    combined = 0.0
    for term in args.terms:
        if term == "fm":
            combined += lt.fm
        elif args.lam != 0:
            combined += args.lam * values[term]
    fields = {}
    for term in args.terms:
        print(f"{term} {fmt(values[term])}")
        fields[term] = values[term]
    print(f"combined {fmt(combined)}")
    _result(command="loss_eval", **fields, combined=combined)
    return 0


# -- simulation --------------------------------------------------------------


def build_recovery_instance(disp_true: DisplacementGrid, cfg: RopeConfig, seed: int, amplitude: float, schedule: Schedule):
    """Seeded toy model, latent, and a reference latent whose first-step target
    velocity is exactly the toy model's output at ``disp_true``."""
    model = ToyVelocityModel(2 * cfg.channels, seed)
    rng = np.random.default_rng(seed + 1)
    x_init = amplitude * rng.standard_normal((2 * cfg.channels, *cfg.seq))
    u_true = toy_forward(model, x_init, build_motion_rope(cfg, disp_true))
    v_ref = x_init - schedule.sigmas[0] * u_true
    return model, x_init, v_ref


def cmd_sim_optimize(args) -> int:
    flow = _load_flow(args.flow)
    st = args.st if args.st is not None else flow.frames
    cfg = _rope_config(argparse.Namespace(**{**vars(args), "st": st}))
    disp_true = displacement_from_flow(flow, *cfg.seq)
    schedule = Schedule.linear(args.steps)
    try:
        ocfg = ObjectiveConfig(
            lam=args.lam,
            opt_steps_t=args.t,
            inner_steps_s=args.s,
            learning_rate=args.lr,
            optimizer=args.optimizer,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    model, x_init, v_ref = build_recovery_instance(disp_true, cfg, args.seed, args.amplitude, schedule)
    disp_init = DisplacementGrid.zeros(*cfg.seq) if args.init == "zero" else disp_true
    final, trace = optimize_offsets(model, schedule, x_init, v_ref, disp_init, ocfg, cfg)

    out = Path(args.out)
    lines = ["step,inner_step,fm,phase,total"] + [row.csv() for row in trace]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out, "sim optimize", args, [args.flow], seed=args.seed)
    offsets = Path(args.offsets_out) if args.offsets_out else out.with_suffix(".offsets.tnsr")
    tnsr_write(final.stacked(), offsets)
    _write_manifest(offsets, "sim optimize", args, [args.flow], seed=args.seed)

    fields = dict(command="sim_optimize", rows=len(trace))
    if trace:
        initial, last = trace[0].total, trace[-1].total
        ratio = last / initial if initial else float("nan")
        print(f"initial_total {fmt(initial)}")
        print(f"final_total {fmt(last)}")
        print(f"ratio {fmt(ratio)}")
        fields.update(initial=initial, final=last, ratio=ratio)
    _result(**fields)
    return 0


# -- parser ------------------------------------------------------------------


def _add_rope_args(p: argparse.ArgumentParser, st_required: bool = True) -> None:
    p.add_argument("--st", type=int, required=st_required, default=None)
    p.add_argument("--sh", type=int, required=True)
    p.add_argument("--sw", type=int, required=True)
    p.add_argument("--dt", type=int, default=16)
    p.add_argument("--dh", type=int, default=24)
    p.add_argument("--dw", type=int, default=24)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionrope", description="Motion-augmented RoPE toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    rope = groups.add_parser("rope", help="build RoPE grids").add_subparsers(dest="action", required=True)
    p = rope.add_parser("build", help="default 3D RoPE")
    _add_rope_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rope_build)
    p = rope.add_parser("warp", help="motion-augmented RoPE from optical flow")
    p.add_argument("--flow", required=True, help="directory of .flo files, a .flo file, or a 2xS_txHxW .tnsr")
    _add_rope_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--check", action="store_true", help="verify the per-cell phase shift law")
    p.set_defaults(func=cmd_rope_warp)

    flow = groups.add_parser("flow", help="optical flow utilities").add_subparsers(dest="action", required=True)
    p = flow.add_parser("synth", help="synthetic flow fields")
    p.add_argument("--pattern", choices=["constant", "rotation", "zoom"], required=True)
    p.add_argument("--a", type=float, default=0.0, help="constant u (px/frame)")
    p.add_argument("--b", type=float, default=0.0, help="constant v (px/frame)")
    p.add_argument("--omega", type=float, default=0.0, help="rotation angle per frame (rad)")
    p.add_argument("--scale", type=float, default=1.0, help="zoom factor per frame")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory of .flo files, or a .tnsr path")
    p.set_defaults(func=cmd_flow_synth)
    p = flow.add_parser("convert", help="convert between .flo directories and TNSR")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flow_convert)

    metric = groups.add_parser("metric", help="trajectory metrics").add_subparsers(dest="action", required=True)
    p = metric.add_parser("frechet", help="discrete Fréchet distance between two curves")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--track", type=int, default=None, help="track index when inputs are trajectory files")
    p.set_defaults(func=cmd_metric_frechet)
    p = metric.add_parser("ftd", help="Fréchet Trajectory Distance")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--mask", default=None, help="binary PGM first-frame foreground mask")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fg-only", action="store_true")
    p.add_argument("--mf", action="store_true", help="also report simplified Motion Fidelity")
    p.set_defaults(func=cmd_metric_ftd)
    p = metric.add_parser("queries", help="sample first-frame query points from a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fg-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metric_queries)

    loss = groups.add_parser("loss", help="objective evaluation").add_subparsers(dest="action", required=True)
    p = loss.add_parser("eval", help="evaluate FM / phase / magnitude terms")
    p.add_argument("--target", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--terms", type=_parse_terms, default=["fm", "phase"])
    p.set_defaults(func=cmd_loss_eval)

    sim = groups.add_parser("sim", help="toy optimization runs").add_subparsers(dest="action", required=True)
    p = sim.add_parser("optimize", help="optimize RoPE offsets on a seeded toy model")
    p.add_argument("--flow", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t", type=int, default=10)
    p.add_argument("--s", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=50, help="denoising schedule length")
    p.add_argument("--amplitude", type=float, default=10.0, help="latent standard deviation")
    p.add_argument("--init", choices=["zero", "flow"], default="zero")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--st", type=int, default=None)
    p.add_argument("--sh", type=int, default=4)
    p.add_argument("--sw", type=int, default=4)
    p.add_argument("--dt", type=int, default=4)
    p.add_argument("--dh", type=int, default=4)
    p.add_argument("--dw", type=int, default=4)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)
    p.add_argument("--out", required=True)
    p.add_argument("--offsets-out", default=None)
    p.set_defaults(func=cmd_sim_optimize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    command = f"{args.group} {args.action}"
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"motionrope {command}: file not found: {exc.filename or exc}", file=sys.stderr)
    except (CliError, TnsrError, ValueError, OSError) as exc:
        print(f"motionrope {command}: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
