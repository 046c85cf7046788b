"""Command-line entry point: ``hoilab {gen-ref,train,rollout,eval,qp}``.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
input files), 3 numerical fault (non-finite simulation state or a failed
update).
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

PRESETS = ("two-finger-box",)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalFault(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _load_scene(path, preset=None):
    from .sim.model import Scene
    from .sim.presets import two_finger_box
    if preset is not None:
        return two_finger_box()
    if path is None:
        raise UsageError("give --scene or --preset")
    return Scene.load(path)


def _load_refs(paths, nq):
    from .episode.reference import ReferenceSequence
    return [ReferenceSequence.load(p, nq) for p in paths]


def cmd_gen_ref(args):
    from .episode.reference import NoiseSpec, generate_reference
    scene = _load_scene(args.scene, args.preset)
    if args.write_scene:
        scene.save(args.write_scene)
    try:
        noise = NoiseSpec(args.jitter, args.penetration, args.dropout)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seq = generate_reference(scene, args.script, args.frames, noise, args.seed, args.amount)
    seq.save(args.out)
    print(f"wrote {len(seq)} frames to {args.out}")


def cmd_train(args):
    from .episode.training import RunConfig, load_run_config, train
    config = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.trainer.seed = args.seed
    if args.epochs is not None:
        config.trainer.epochs = args.epochs
    if args.no_compensation:
        config.episode.compensation = False
    scene = _load_scene(args.scene, args.preset)
    dataset = _load_refs(args.ref, scene.hand.nq)

    def report(s):
        if not args.quiet:
            print(f"epoch {s.epoch:5d}  reward {s.mean_reward:.4f}  len {s.mean_len:7.2f}  "
                  f"phys {s.phys_mean:.4f}", flush=True)
            if s.update.get("aborted"):
                print(f"  update aborted: {s.update.get('reason')}", flush=True)

    stats = train(config, scene, dataset, args.out, resume=args.resume, on_epoch=report)
    if stats and all(s.update.get("aborted") for s in stats[-3:]) and len(stats) >= 3:
        raise NumericalFault("the last updates were all aborted on non-finite values")


def cmd_rollout(args):
    from .control import RewardConfig
    from .episode.env import Tracker, rollout
    from .episode.training import run_config_from_dict
    from .policy import load_checkpoint
    from .sim.model import Scene
    ck = load_checkpoint(args.policy)
    meta = ck.manifest.get("meta", {})
    if args.scene or args.preset:
        scene = _load_scene(args.scene, args.preset)
    elif "scene" in meta:
        scene = Scene.from_dict(meta["scene"])
    else:
        raise UsageError("checkpoint carries no scene; pass --scene")
    cfg = run_config_from_dict(meta["run_config"]) if "run_config" in meta else None
    dataset = _load_refs([args.ref], scene.hand.nq)
    ep = cfg.episode if cfg else None
    tracker = Tracker(scene, dataset, cfg.reward if cfg else RewardConfig(),
                      ep.compensation if ep else ck.policy.act_size > scene.hand.nq,
                      ep.n_future if ep else 5, ep.max_len if ep else 300,
                      ep.thresholds() if ep else None)
    if tracker.obs_size != ck.policy.obs_size or tracker.act_size != ck.policy.act_size:
        raise DataError(f"policy expects obs/act sizes {ck.policy.obs_size}/{ck.policy.act_size}, "
                        f"scene gives {tracker.obs_size}/{tracker.act_size}")
    if not 0 <= args.start < len(dataset[0]):
        raise UsageError(f"--start must lie in [0, {len(dataset[0]) - 1}]")
    rng = np.random.default_rng(args.seed) if args.stochastic else None
    traj, transitions, status = rollout(ck.policy, tracker, 0, args.start, args.steps, rng)
    traj.save(args.out)
    if args.transitions:
        with open(args.transitions, "w") as fh:
            for tr in transitions:
                fh.write(tr.to_json() + "\n")
    mean_r = float(np.mean([t.reward.r_total for t in transitions])) if transitions else 0.0
    print(f"wrote {len(traj)} frames to {args.out} (status {status}, mean reward {mean_r:.4f})")
    if status == "fault":
        raise NumericalFault("simulation fault during rollout")


def cmd_eval(args):
    from .eval import evaluate
    from .episode.reference import ReferenceSequence
    scene = _load_scene(args.scene, args.preset)
    seq = ReferenceSequence.load(args.traj, scene.hand.nq)
    report = evaluate(seq, scene, args.threshold, {"trajectory": os.path.basename(args.traj)})
    if args.report:
        report.save(args.report)
    else:
        print(report.to_json())
    a = report.aggregates
    print(f"Phys. {a['phys_ratio']:.2f}%  penetration {a['mean_penetration'] * 1000:.3f} mm  "
          f"hand smoothness {a['hand_smoothness']:.2f} cm/s^2  "
          f"object smoothness {a['object_smoothness']:.2f} cm/s^2", file=sys.stderr)


def cmd_qp(args):
    from .contact.surface import ContactSet, audit
    from .sim.model import ObjectModel, ObjectState
    try:
        with open(args.input) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.input}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise DataError(f"{args.input}: expected a JSON object")
    if d.get("format_version", 1) != 1:
        raise DataError(f"unsupported format_version {d.get('format_version')}")
    try:
        obj = ObjectModel.from_dict(d["object"])
        s = d["state"]
        state = ObjectState(s["pos"], s.get("quat", [1, 0, 0, 0]), s.get("vel", [0, 0, 0]),
                            s.get("angvel", [0, 0, 0]), s.get("acc", [0, 0, 0]),
                            s.get("angacc", [0, 0, 0]))
        cl = d.get("contacts", [])
        cs = ContactSet([c["point"] for c in cl], [c["normal"] for c in cl],
                        [c.get("depth", 0.0) for c in cl],
                        [c.get("vrel", [0, 0, 0]) for c in cl],
                        rel_angvel=[c.get("rel_angvel", [0, 0, 0]) for c in cl])
        gravity = np.asarray(d.get("gravity", [0.0, 0.0, -9.81]), float)
    except KeyError as exc:
        raise DataError(f"{args.input}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise DataError(f"{args.input}: malformed input ({exc})") from None
    nrm = np.linalg.norm(cs.normals, axis=1) if len(cs) else np.zeros(0)
    if np.any(nrm == 0):
        raise DataError("contact normals must be non-zero")
    cs.normals = cs.normals / nrm[:, None] if len(cs) else cs.normals
    sol = audit(cs, obj, state, gravity, offset=args.offset, extended=not args.point)
    if not np.all(np.isfinite(sol.lam)):
        raise NumericalFault("QP produced non-finite multipliers")
    out = {"format_version": 1, **sol.to_dict()}
    text = json.dumps(out, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def build_parser():
    p = _Parser(prog="hoilab", description="Physics-audited hand-object imitation laboratory.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def scene_args(sp, required=False):
        g = sp.add_mutually_exclusive_group(required=required)
        g.add_argument("--scene", help="scene JSON file")
        g.add_argument("--preset", choices=PRESETS, help="built-in scene instead of --scene")

    g = sub.add_parser("gen-ref", help="synthesize a kinematic reference (JSON Lines)")
    scene_args(g, required=True)
    g.add_argument("--script", required=True,
                   choices=("hold", "lift", "translate", "rotate", "shake"), help="motion script")
    g.add_argument("--frames", type=int, default=90, help="number of 30 Hz frames (default 90)")
    g.add_argument("--amount", type=float, default=None,
                   help="script size: metres for lift/translate/shake, radians for rotate")
    g.add_argument("--jitter", type=float, default=0.0, help="per-frame position noise std, m")
    g.add_argument("--penetration", type=float, default=0.0,
                   help="object shift into the nearest hand body, m")
    g.add_argument("--dropout", type=float, default=0.0,
                   help="per-frame probability of an open hand (missing contacts)")
    g.add_argument("--seed", type=int, default=0, help="noise seed")
    g.add_argument("--write-scene", metavar="PATH", help="also save the scene JSON here")
    g.add_argument("--out", required=True, help="output reference file (.jsonl)")
    g.set_defaults(func=cmd_gen_ref)

    t = sub.add_parser("train", help="train an imitation policy with PPO")
    scene_args(t, required=True)
    t.add_argument("--ref", required=True, action="append",
                   help="reference file (repeat for a dataset)")
    t.add_argument("--config", help="TOML run configuration ([trainer], [reward], [episode])")
    t.add_argument("--out", required=True, help="run directory for curves.csv and checkpoints")
    t.add_argument("--epochs", type=int, help="override trainer.epochs")
    t.add_argument("--seed", type=int, help="override trainer.seed")
    t.add_argument("--no-compensation", action="store_true",
                   help="ablation: policy outputs PD targets only")
    t.add_argument("--resume", action="store_true", help="continue from the newest checkpoint")
    t.add_argument("--quiet", action="store_true", help="no per-epoch output")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("rollout", help="simulate a trained policy along a reference")
    r.add_argument("--policy", required=True, help="checkpoint (.json manifest or stem)")
    r.add_argument("--ref", required=True, help="reference file to imitate")
    scene_args(r)
    r.add_argument("--start", type=int, default=0, help="start frame (default 0)")
    r.add_argument("--steps", type=int, default=None, help="maximum control steps")
    r.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")
    r.add_argument("--seed", type=int, default=0, help="sampling seed with --stochastic")
    r.add_argument("--out", required=True, help="output trajectory file (.jsonl)")
    r.add_argument("--transitions", help="also write per-step transition records (.jsonl)")
    r.set_defaults(func=cmd_rollout)

    e = sub.add_parser("eval", help="plausibility metrics of a trajectory")
    e.add_argument("--traj", required=True, help="trajectory or reference file (.jsonl)")
    scene_args(e, required=True)
    e.add_argument("--threshold", type=float, default=0.01,
                   help="Phys. threshold on |f_res| + |tau_res| (default 0.01)")
    e.add_argument("--report", help="output report JSON (default: stdout)")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("qp", help="audit one frame's contacts (debugging)")
    q.add_argument("--in", dest="input", required=True,
                   help="frame JSON: object, state, contacts, gravity")
    q.add_argument("--offset", type=float, default=0.0025, help="patch offset, m")
    q.add_argument("--point", action="store_true", help="point contacts only (no patch points)")
    q.add_argument("--out", help="output JSON (default: stdout)")
    q.set_defaults(func=cmd_qp)
    return p


def main(argv=None):
    from .episode.reference import ReferenceError
    from .episode.training import ConfigError
    from .eval.metrics import MetricError
    from .policy.checkpoint import CheckpointError
    from .sim.model import SceneError
    from .sim.world import SimulationFault
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            args.func(args)
    except UsageError as exc:
        print(f"hoilab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationFault, NumericalFault, FloatingPointError) as exc:
        print(f"hoilab {args.command}: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"hoilab {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, SceneError, ReferenceError, CheckpointError, MetricError, OSError,
            ValueError, KeyError) as exc:
        print(f"hoilab {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
