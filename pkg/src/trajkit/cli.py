"""``trajkit`` command line.

Every flag can also be set through an environment variable named
``TRAJKIT_<FLAG>`` (upper case, dashes as underscores), e.g. ``TRAJKIT_SEED=3``.
Command-line flags win over the environment.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 parse error,
5 I/O error, 6 numeric failure, 7 scene composition failure, 1 anything else.
Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import camera, dataset, metrics, sampler, traj
from .errors import CompositionError, NumericError, ParseError, ValidationError
from .textio import canonical_dumps

ENV_PREFIX = "TRAJKIT_"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_PARSE = 4
EXIT_IO = 5
EXIT_NUMERIC = 6
EXIT_COMPOSITION = 7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401
        raise UsageError(f"{self.prog}: {message}")


def _env_default(dest: str, default, typ):
    raw = os.environ.get(ENV_PREFIX + dest.upper())
    if raw is None:
        return default
    try:
        return typ(raw) if typ is not None else raw
    except ValueError:
        raise UsageError(f"environment variable {ENV_PREFIX}{dest.upper()}={raw!r} is not a valid {typ.__name__}") from None


def _add(p: argparse.ArgumentParser, flag: str, *, type=str, default=None, help: str = "", **kw) -> None:
    dest = flag.lstrip("-").replace("-", "_")
    p.add_argument(flag, dest=dest, type=type, default=_env_default(dest, default, type), help=help, **kw)


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _pos_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="trajkit", description="Entity trajectory toolkit.", formatter_class=fmt)
    _add(parser, "--seed", type=int, default=0, help="seed for every random choice")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def cmd(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help, formatter_class=fmt)
        _add(p, "--out", default="-", help="output path, '-' for stdout")
        # accepted after the command too; SUPPRESS keeps the top-level value otherwise
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for every random choice")
        return p

    p = cmd("gen-traj", "generate template trajectories as single-entity .poseq documents")
    _add(p, "--template", default=None, help="template name (see --list)")
    p.add_argument("--list", action="store_true", help="print the template names and exit")
    _add(p, "--frames", type=_pos_int, default=traj.DEFAULT_FRAMES, help="frames F")
    _add(p, "--fps", type=_pos_float, default=traj.DEFAULT_FPS, help="frames per second")
    _add(p, "--kind", default="human", choices=dataset.KINDS, help="entity kind")

    p = cmd("compose-scene", "place 1-3 templated entities on the stage")
    p.add_argument("--template", action="append", required=True, help="template name, once per entity")
    p.add_argument("--kind", action="append", default=None, help="entity kind per entity (default human)")
    p.add_argument("--prompt", action="append", default=None, help="entity prompt per entity")
    _add(p, "--location", default="city", help="location tag")
    _add(p, "--frames", type=_pos_int, default=traj.DEFAULT_FRAMES, help="frames F")
    _add(p, "--fps", type=_pos_float, default=traj.DEFAULT_FPS, help="frames per second")
    _add(p, "--drop-leading", type=_nonneg_int, default=0, help="drop this many leading frames after composition")

    p = cmd("build-rig", "export the 12-camera surround rig")
    _add(p, "--radius", type=_pos_float, default=camera.RIG_RADIUS, help="rig radius in meters")
    _add(p, "--height", type=float, default=camera.RIG_HEIGHT, help="camera height in meters")
    _add(p, "--hfov", type=_pos_float, default=camera.HFOV_DEG, help="horizontal field of view in degrees")

    p = cmd("project-2d", "project a .poseq scene into one rig camera as CSV tracks")
    _add(p, "--poseq", default=None, help="input .poseq path", required=os.environ.get(ENV_PREFIX + "POSEQ") is None)
    _add(p, "--camera", type=_nonneg_int, default=0, help="camera index 0-11")
    _add(p, "--radius", type=_pos_float, default=camera.RIG_RADIUS, help="rig radius in meters")
    _add(p, "--height", type=float, default=camera.RIG_HEIGHT, help="camera height in meters")

    p = cmd("manifest", "enumerate a dataset manifest")
    _add(p, "--budget", type=_pos_int, default=1, help="number of compositions")
    _add(p, "--frames", type=_pos_int, default=traj.DEFAULT_FRAMES, help="frames F")
    _add(p, "--fps", type=_pos_float, default=traj.DEFAULT_FPS, help="frames per second")

    p = cmd("eval", "compare estimated and ground-truth .poseq documents")
    _add(p, "--est", default=None, help="estimated .poseq", required=os.environ.get(ENV_PREFIX + "EST") is None)
    _add(p, "--gt", default=None, help="ground-truth .poseq", required=os.environ.get(ENV_PREFIX + "GT") is None)
    _add(p, "--clip-id", default="clip", help="clip id written into the report")

    p = cmd("sample-demo", "run annealed sampling with a toy denoiser")
    _add(p, "--steps", type=_pos_int, default=sampler.DEFAULT_STEPS, help="respaced DDIM steps")
    _add(p, "--w", type=_nonneg_float, default=sampler.DEFAULT_W, help="guidance strength")
    _add(p, "--tc", type=_nonneg_int, default=sampler.DEFAULT_TC, help="annealed timestep T_c (conditioned steps)")
    _add(p, "--alpha", type=_nonneg_float, default=sampler.DEFAULT_ALPHA_LORA, help="LoRA scalar alpha")
    _add(p, "--eta", type=_nonneg_float, default=0.0, help="DDIM eta (0 is deterministic)")
    _add(p, "--negative-mode", default="uncond", choices=sampler.NEGATIVE_MODES, help="negative branch")
    _add(p, "--text", default="a man and a dog", help="text prompt")
    _add(p, "--log", default=None, help="also write the step-count log here")

    p = cmd("grad-check", "finite-difference check of the injector backward pass")
    _add(p, "--dtype", default="float64", choices=("float64", "float32"), help="precision of the analytic pass")
    return parser


# --------------------------------------------------------------------------
# commands


def _emit(args, text: str | bytes) -> None:
    data = text.encode("utf-8") if isinstance(text, str) else text
    if args.out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(args.out).write_bytes(data)


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _templates() -> dict[str, traj.TrajectoryTemplate]:
    return {t.name: t for t in traj.default_template_library()}


def _template(name: str) -> traj.TrajectoryTemplate:
    lib = _templates()
    if name not in lib:
        raise ValidationError(f"unknown template {name!r}", "template", "a name from gen-traj --list")
    return lib[name]


def cmd_gen_traj(args) -> int:
    if args.list:
        _emit(args, "".join(n + "\n" for n in _templates()))
        return EXIT_OK
    if args.template is None:
        raise UsageError("gen-traj needs --template or --list")
    seq = traj.generate_template(_template(args.template), args.frames, args.fps)
    ent = traj.SceneEntity("e0", "a person" if args.kind == "human" else "an animal", traj.scale_for(args.kind), seq, args.kind)
    _emit(args, dataset.serialize_pose_sequence(traj.SceneComposition((ent,))))
    return EXIT_OK


def cmd_compose_scene(args) -> int:
    n = len(args.template)
    kinds = args.kind or ["human"] * n
    prompts = args.prompt or [None] * n
    if len(kinds) != n or len(prompts) != n:
        raise UsageError("--kind and --prompt must be given once per --template")
    slots = [traj.EntitySlot(_template(t), k, p) for t, k, p in zip(args.template, kinds, prompts)]
    scene = traj.compose_scene(slots, args.frames, args.fps, args.seed, location_tag=args.location)
    if args.drop_leading:
        scene = scene.drop_leading(args.drop_leading)
    _emit(args, dataset.serialize_pose_sequence(scene))
    return EXIT_OK


def cmd_build_rig(args) -> int:
    rig = camera.build_rig(radius=args.radius, height=args.height, intrinsics=camera.Intrinsics.from_hfov(args.hfov))
    _emit(args, canonical_dumps(rig.to_dict()))
    return EXIT_OK


def cmd_project_2d(args) -> int:
    scene = dataset.parse_pose_sequence(_read(args.poseq))
    if args.camera >= camera.NUM_CAMERAS:
        raise ValidationError(f"camera index {args.camera} out of range", "camera", "0..11")
    rig = camera.build_rig(radius=args.radius, height=args.height)
    _emit(args, camera.write_tracks_csv(camera.track_rows(rig.cameras[args.camera], scene)))
    return EXIT_OK


def cmd_manifest(args) -> int:
    m = dataset.enumerate_manifest(budget=args.budget, seed=args.seed, frame_count=args.frames, fps=args.fps)
    _emit(args, dataset.serialize_manifest(m))
    return EXIT_OK


def cmd_eval(args) -> int:
    est = dataset.parse_pose_sequence(_read(args.est))
    gt = dataset.parse_pose_sequence(_read(args.gt))
    gt_by_id = {e.entity_id: e for e in gt.entities}
    missing = [e.entity_id for e in est.entities if e.entity_id not in gt_by_id]
    if missing:
        raise ValidationError(f"entities {missing} have no ground truth", "entities", "ids present in both files")
    rows = metrics.report_rows((args.clip_id, e.entity_id, e.trajectory, gt_by_id[e.entity_id].trajectory) for e in est.entities)
    _emit(args, metrics.write_report(rows))
    return EXIT_OK


def _demo_pairs(frames: int = 20) -> list[sampler.Pair]:
    lib = _templates()
    a = traj.generate_template(lib["line_length3"], frames)
    b = traj.generate_template(lib["arc_radius1_sweep90_side1"], frames)
    return [("a man in a red hoodie", a), ("a dog", b)]


def cmd_sample_demo(args) -> int:
    sched = sampler.make_schedule(args.steps, args.w, args.tc, args.alpha, args.eta)
    den = sampler.RecordingDenoiser(sampler.ToyDenoiser())
    res = sampler.annealed_sample(den, sched, args.text, _demo_pairs(), args.negative_mode, args.seed)
    log = {
        "conditioned_steps": res.conditioned_steps,
        "base_steps": res.base_steps,
        "conditioned_calls": den.count("conditioned"),
        "base_calls": den.count("base"),
        "steps": args.steps,
        "T_c": args.tc,
        "w": args.w,
        "alpha_lora": args.alpha,
        "negative_mode": args.negative_mode,
        "seed": args.seed,
    }
    dump = {"log": log, "latent": {"shape": list(res.x0.shape), "data": [float(v) for v in res.x0.ravel()]}}
    _emit(args, canonical_dumps(dump))
    if args.log:
        Path(args.log).write_text(canonical_dumps(log))
    sys.stderr.write(json.dumps(log, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from . import dit

    params, batch = dit.default_grad_check_setup(args.seed)
    errs = dit.injector_grad_check(params, batch, np.dtype(args.dtype))
    doc = {"dtype": args.dtype, "max_relative_error": max(errs.values()), "per_tensor": errs}
    _emit(args, canonical_dumps(doc))
    return EXIT_OK


COMMANDS = {
    "gen-traj": cmd_gen_traj,
    "compose-scene": cmd_compose_scene,
    "build-rig": cmd_build_rig,
    "project-2d": cmd_project_2d,
    "manifest": cmd_manifest,
    "eval": cmd_eval,
    "sample-demo": cmd_sample_demo,
    "grad-check": cmd_grad_check,
}


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    for attr in ("field", "constraint", "line", "offset", "step"):
        v = getattr(exc, attr, None)
        if v is not None:
            doc[attr] = v
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("trajkit: a command is required (see --help)")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ParseError as exc:
        return _fail(EXIT_PARSE, exc)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    except CompositionError as exc:
        return _fail(EXIT_COMPOSITION, exc)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except Exception as exc:  # noqa: BLE001
        return _fail(EXIT_ERROR, exc)


if __name__ == "__main__":
    sys.exit(main())
