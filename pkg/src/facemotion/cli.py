"""Batch command surface.

Commands: animate, style-edit, emotion, retarget, train-refiner, gradcheck,
bench, serve, init-weights. Global flags --config / --seed / --out; the
FACEMOTION_CONFIG environment variable supplies the default config path.
Exit codes: 0 success, 1 runtime failure (with a machine-readable
`error: <Type>: <message>` line on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import (
    Seeds,
    load_config,
    load_schedule,
    schedule_from_obj,
)
from .core import Deformation, KeypointSet, RegionMask, compose_keypoints, decompose_keypoints
from .errors import ConfigError, FacemotionError, ScheduleError
from .losses import grad_check
from .models import ModelDims, NoiseSpec, StyleCode, init_weights
from .pipeline import (
    BenchSizes,
    ControlSchedule,
    Trajectory,
    bench_frame,
    builtin_pose_templates,
    run_inference,
)
from .training import (
    make_synthetic_dataset,
    pack_refiner,
    refiner_loss_fn,
    train_refiner,
    write_loss_trace,
)
from . import io as fio

GRADCHECK_THRESHOLD = 1e-4

# Small refiner configuration for the gradient checker: exact central
# differences over every parameter are affordable at this size.
_GRADCHECK_DIMS = ModelDims(
    n_kp=6, d_audio=8, d_model=8, n_layers=1, n_heads=2,
    ff_hidden=16, refiner_hidden=16, lip_count=2, cond_dim=4,
)
_GRADCHECK_LIPS = RegionMask("lips", (2, 4))


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _resolve_seeds(cfg_seeds: Seeds, seed: int | None) -> Seeds:
    if seed is None:
        return cfg_seeds
    return Seeds(weights=seed, noise=seed, data=seed + 1)


def _require_out(args) -> str:
    if args.out is None:
        raise UsageError(f"--out is required for '{args.command}'")
    return args.out


class UsageError(Exception):
    pass


def _session_inputs(args, cfg, seeds):
    identity = fio.read_identity(_read(args.identity))
    audio = fio.read_audio_features(_read(args.audio))
    weights = fio.read_weights(_read(args.weights))
    phonemes = fio.read_phonemes(_read(args.phonemes)) if args.phonemes else {}
    style = StyleCode(args.style, weights.dims.n_styles)
    template = builtin_pose_templates()[args.pose]
    noise = NoiseSpec(weights.dims.noise_sigma, seeds.noise)
    window = args.window if args.window is not None else cfg.window
    overlap = args.overlap if args.overlap is not None else cfg.overlap
    regions = cfg.region_masks()
    return identity, audio, weights, phonemes, style, template, noise, window, overlap, regions


def _cmd_animate(args) -> int:
    out_path = _require_out(args)
    cfg = load_config(args.config)
    seeds = _resolve_seeds(cfg.seeds, args.seed)
    identity, audio, weights, phonemes, style, template, noise, window, overlap, regions = (
        _session_inputs(args, cfg, seeds)
    )
    schedule = load_schedule(args.schedule) if args.schedule else ControlSchedule.neutral()
    traj = run_inference(
        identity, template, audio, style, schedule, weights,
        noise=noise, phonemes=phonemes, regions=regions, window=window, overlap=overlap,
    )
    _write(out_path, fio.write_trajectory(traj))
    print(f"animate frames={len(traj)} n_kp={traj.n_kp} out={out_path}")
    return 0


def _cmd_emotion(args) -> int:
    out_path = _require_out(args)
    cfg = load_config(args.config)
    seeds = _resolve_seeds(cfg.seeds, args.seed)
    identity, audio, weights, phonemes, style, template, noise, window, overlap, regions = (
        _session_inputs(args, cfg, seeds)
    )
    base = load_schedule(args.schedule) if args.schedule else ControlSchedule.neutral()
    try:
        spec_obj = json.loads(_read(args.spec))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"emotion spec {args.spec}: invalid JSON: {exc}") from exc
    schedule = schedule_from_obj({"emotion": spec_obj}, base)
    traj = run_inference(
        identity, template, audio, style, schedule, weights,
        noise=noise, phonemes=phonemes, regions=regions, window=window, overlap=overlap,
    )
    _write(out_path, fio.write_trajectory(traj))
    print(f"emotion frames={len(traj)} n_kp={traj.n_kp} out={out_path}")
    return 0


def _cmd_style_edit(args) -> int:
    out_path = _require_out(args)
    cfg = load_config(args.config)
    traj = fio.read_trajectory(_read(args.traj))
    if traj.poses is None:
        raise ScheduleError("style-edit needs a trajectory with a pose track")
    identity = fio.read_identity(_read(args.identity))
    phonemes = fio.read_phonemes(_read(args.phonemes))
    vec = phonemes.get(args.name)
    if vec is None:
        raise ScheduleError(f"unknown phoneme vector '{args.name}'")
    stop = args.stop if args.stop is not None else len(traj)
    if not (0 <= args.start <= stop <= len(traj)):
        raise ScheduleError(f"bad frame range [{args.start}, {stop}) for {len(traj)} frames")
    lips = cfg.region_masks()["lips"]
    lips.validate_for(traj.n_kp)
    if vec.direction.size != len(lips) * 3:
        raise ScheduleError(
            f"phoneme '{args.name}' direction length {vec.direction.size} does not match "
            f"the lip mask ({len(lips) * 3})"
        )
    idx = lips.index_array()
    zero = Deformation.zeros(identity.n_kp)
    frames = list(traj.frames)
    for t in range(args.start, stop):
        k_ori = compose_keypoints(identity, traj.poses[t], zero)
        x = (frames[t].coords[idx] - k_ori.coords[idx]).reshape(-1)
        corr = (args.lam - 1.0) * (x @ vec.direction) * vec.direction
        coords = np.array(frames[t].coords)
        coords[idx] = coords[idx] + corr.reshape(len(lips), 3)
        frames[t] = KeypointSet(coords)
    edited = Trajectory(tuple(frames), traj.poses)
    _write(out_path, fio.write_trajectory(edited))
    print(f"style-edit name={args.name} lam={args.lam} frames=[{args.start},{stop}) out={out_path}")
    return 0


def _cmd_retarget(args) -> int:
    out_path = _require_out(args)
    from .pipeline import retarget

    traj = fio.read_trajectory(_read(args.traj))
    if traj.poses is None:
        raise ScheduleError("retarget needs a driving trajectory with a pose track")
    driving_identity = fio.read_identity(_read(args.driving_identity))
    new_identity = fio.read_identity(_read(args.identity))
    driving = [
        (pose, decompose_keypoints(frame, pose, driving_identity))
        for frame, pose in zip(traj.frames, traj.poses)
    ]
    out = retarget(driving, new_identity)
    _write(out_path, fio.write_trajectory(out))
    print(f"retarget frames={len(out)} out={out_path}")
    return 0


def _cmd_train_refiner(args) -> int:
    out_path = _require_out(args)
    cfg = load_config(args.config)
    seeds = _resolve_seeds(cfg.seeds, args.seed)
    dims = cfg.dims
    lips = cfg.region_masks()["lips"]
    w0 = (
        fio.read_weights(_read(args.weights))
        if args.weights
        else init_weights(seeds.weights, dims, cfg.categories)
    )
    data = make_synthetic_dataset(
        seeds.data, w0.dims, lips,
        n_windows=args.windows,
        noise=NoiseSpec(w0.dims.noise_sigma, seeds.noise),
    )
    trained, trace = train_refiner(data, w0, steps=args.steps, lr=args.lr, lw=cfg.loss_weights)
    _write(out_path, fio.write_weights(trained))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            write_loss_trace(trace, fh)
    ratio = trace[-1] / trace[0]
    print(
        f"train-refiner steps={args.steps} lr={args.lr:g} "
        f"l0={trace[0]:.6f} l_final={trace[-1]:.6f} ratio={ratio:.4f} out={out_path}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    dims = _GRADCHECK_DIMS
    w = init_weights(seed, dims)
    data = make_synthetic_dataset(seed + 1, dims, _GRADCHECK_LIPS, n_windows=3)
    fn = refiner_loss_fn(data, dims)
    p0 = pack_refiner(w.tensors)
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(args.points):
        point = p0 + rng.normal(0.0, 0.05, size=p0.shape)
        worst = max(worst, grad_check(fn, point))
    status = "pass" if worst <= GRADCHECK_THRESHOLD else "fail"
    print(
        f"gradcheck points={args.points} max_rel_err={worst:.6e} "
        f"threshold={GRADCHECK_THRESHOLD:.1e} status={status}"
    )
    return 0 if status == "pass" else 1


def _cmd_bench(args) -> int:
    sizes = BenchSizes(
        n_frames=args.frames,
        warmup=args.warmup,
        seed=args.seed if args.seed is not None else 0,
    )
    report = bench_frame(None, sizes)
    text = report.to_text()
    print(text, end="")
    machine = " ".join(
        f"{r.stage}_median_ms={r.median_ms:.6f} {r.stage}_p95_ms={r.p95_ms:.6f}"
        for r in report.rows
    )
    print(f"bench {machine}" if machine else "bench empty=1")
    if args.out:
        _write(args.out, text)
    return 0


def _cmd_init_weights(args) -> int:
    out_path = _require_out(args)
    cfg = load_config(args.config)
    seeds = _resolve_seeds(cfg.seeds, args.seed)
    w = init_weights(seeds.weights, cfg.dims, cfg.categories)
    _write(out_path, fio.write_weights(w))
    print(f"init-weights seed={seeds.weights} tensors={len(w.tensors)} out={out_path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    app = create_app(cfg)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--identity", required=True, help="identity keypoint file")
    p.add_argument("--audio", required=True, help="audio feature file")
    p.add_argument("--weights", required=True, help="model weight file")
    p.add_argument("--phonemes", help="phoneme library file")
    p.add_argument("--schedule", help="control schedule JSON file")
    p.add_argument("--style", type=int, default=0, help="speaking style index")
    p.add_argument("--pose", choices=("static", "nod", "sway"), default="static")
    p.add_argument("--window", type=int, help="prediction window override")
    p.add_argument("--overlap", type=int, help="window overlap override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facemotion",
        description="Keypoint-space facial animation control engine.",
    )
    # Global flags are accepted both before and after the subcommand; the
    # after-subcommand position wins. The parent parser suppresses defaults
    # so a subcommand-level absence never clobbers a value set up front.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        help="session config JSON (default: $FACEMOTION_CONFIG)",
    )
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed override")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file path")
    parser.add_argument("--config", default=os.environ.get("FACEMOTION_CONFIG"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)
    sub_kw = {"parents": [common]}

    p = sub.add_parser("animate", **sub_kw, help="drive a trajectory from identity + audio")
    _add_session_args(p)
    p.set_defaults(func=_cmd_animate)

    p = sub.add_parser("emotion", **sub_kw, help="animate with the emotion spec replaced")
    _add_session_args(p)
    p.add_argument("--spec", required=True, help="emotion spec JSON file")
    p.set_defaults(func=_cmd_emotion)

    p = sub.add_parser("style-edit", **sub_kw, help="re-edit a trajectory along a phoneme direction")
    p.add_argument("--traj", required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--phonemes", required=True)
    p.add_argument("--name", required=True, help="phoneme vector name")
    p.add_argument("--lam", type=float, required=True, help="scale along the direction")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--stop", type=int, help="end frame (exclusive; default: all)")
    p.set_defaults(func=_cmd_style_edit)

    p = sub.add_parser("retarget", **sub_kw, help="replay a driving trajectory onto a new identity")
    p.add_argument("--traj", required=True, help="driving trajectory with poses")
    p.add_argument("--driving-identity", required=True)
    p.add_argument("--identity", required=True, help="new identity keypoint file")
    p.set_defaults(func=_cmd_retarget)

    p = sub.add_parser("train-refiner", **sub_kw, help="train the lip refiner on synthetic windows")
    p.add_argument("--weights", help="starting weights (default: seeded init)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--windows", type=int, default=256, help="synthetic dataset size")
    p.add_argument("--trace", help="write the per-step loss trace here")
    p.set_defaults(func=_cmd_train_refiner)

    p = sub.add_parser("gradcheck", **sub_kw, help="check analytic refiner gradients")
    p.add_argument("--points", type=int, default=20)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", **sub_kw, help="per-frame latency of control path and full inference")
    p.add_argument("--frames", type=int, default=240)
    p.add_argument("--warmup", type=int, default=25)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", **sub_kw, help="run the streaming control service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("init-weights", **sub_kw, help="write deterministically initialized weights")
    p.set_defaults(func=_cmd_init_weights)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 2
    except (FacemotionError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
