"""Training runs: TOML configuration, the epoch loop, learning curves and checkpoints.

A run directory holds ``curves.csv`` and ``ckpt_NNNNN.{json,bin,state.npz}``
files, where ``NNNNN`` counts finished epochs. The CSV starts with a
``# format_version: 1`` comment line followed by the header
``epoch,mean_reward,mean_len,phys_mean,mean_return,f_res_mean,episodes``.
"""
from dataclasses import dataclass, field, asdict
import csv
import glob
import logging
import math
import os
import re

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..control import RewardConfig
from ..policy import TrainerConfig, save_checkpoint, load_checkpoint
from .learner import Learner
from .lifecycle import Thresholds

log = logging.getLogger(__name__)

RUN_FORMAT_VERSION = 1
CURVE_FORMAT_VERSION = 1
CURVE_COLUMNS = ("epoch", "mean_reward", "mean_len", "phys_mean", "mean_return", "f_res_mean",
                 "episodes")


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class EpisodeConfig:
    max_len: int = 300
    n_future: int = 5
    n_envs: int = 8
    compensation: bool = True
    joint_error: float = 0.10
    obj_pos_error: float = 0.10
    obj_rot_error: float = 1.0

    def thresholds(self):
        return Thresholds(self.joint_error, self.obj_pos_error, self.obj_rot_error)

    def errors(self):
        out = []
        for name in ("max_len", "n_future", "n_envs"):
            v = getattr(self, name)
            if not v >= 1:
                out.append(f"episode.{name} must be at least 1, got {v}")
        for name in ("joint_error", "obj_pos_error", "obj_rot_error"):
            v = getattr(self, name)
            if not v > 0:
                out.append(f"episode.{name} must be positive, got {v}")
        return out


@dataclass
class RunConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)

    def to_dict(self):
        return {"format_version": RUN_FORMAT_VERSION, "trainer": self.trainer.to_dict(),
                "reward": self.reward.to_dict(), "episode": asdict(self.episode)}


def _typed(section, d, defaults, errors):
    """Keep entries of ``d`` whose type matches the default; report the rest."""
    out = {}
    for k, v in d.items():
        if k not in defaults:
            errors.append(f"unknown key {section}.{k}")
            continue
        ref = defaults[k]
        if isinstance(ref, bool):
            ok = isinstance(v, bool)
            want = "a boolean"
        elif isinstance(ref, int):
            ok = isinstance(v, int) and not isinstance(v, bool)
            want = "an integer"
        elif isinstance(ref, float):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
            want = "a number"
        else:
            ok = isinstance(v, list) and all(isinstance(w, int) and not isinstance(w, bool)
                                             for w in v)
            want = "a list of integers"
        if ok:
            out[k] = tuple(v) if isinstance(v, list) else v
        else:
            errors.append(f"{section}.{k} must be {want}, got {v!r}")
    return out


def run_config_from_dict(d):
    """Build a :class:`RunConfig`, collecting every validation error first."""
    errors = []
    if not isinstance(d, dict):
        raise ConfigError(["configuration must be a table"])
    version = d.get("format_version", RUN_FORMAT_VERSION)
    if version != RUN_FORMAT_VERSION:
        errors.append(f"unsupported format_version {version!r}")
    for k in sorted(set(d) - {"format_version", "trainer", "reward", "episode"}):
        errors.append(f"unknown section or key {k!r}")
    sections = {}
    for name in ("trainer", "reward", "episode"):
        sec = d.get(name, {})
        if not isinstance(sec, dict):
            errors.append(f"[{name}] must be a table")
            sec = {}
        sections[name] = sec

    tr = _typed("trainer", sections["trainer"], asdict(TrainerConfig()), errors)
    trainer = TrainerConfig(**tr)
    errors.extend(f"trainer: {e}" for e in trainer.errors())

    rd = _typed("reward", sections["reward"], asdict(RewardConfig()), errors)
    reward_errors = RewardConfig.errors_for(rd)
    errors.extend(reward_errors)

    ed = _typed("episode", sections["episode"], asdict(EpisodeConfig()), errors)
    episode = EpisodeConfig(**ed)
    errors.extend(episode.errors())

    if errors:
        raise ConfigError(errors)
    return RunConfig(trainer, RewardConfig(**rd), episode)


def load_run_config(path):
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: invalid TOML ({exc})"]) from None
    return run_config_from_dict(d)


def normalize_curve(values, lo=None, hi=None):
    """Min-max normalization: the minimum maps to 0 and the maximum to 1.

    ``lo`` / ``hi`` override the range (used to put several curves on one
    scale). A constant curve maps to zeros.
    """
    v = np.asarray(values, dtype=float)
    lo = float(np.nanmin(v)) if lo is None else float(lo)
    hi = float(np.nanmax(v)) if hi is None else float(hi)
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def checkpoint_path(out_dir, epoch):
    return os.path.join(out_dir, f"ckpt_{epoch:05d}")


def latest_checkpoint(out_dir):
    """``(epoch, stem)`` of the newest checkpoint in ``out_dir`` or ``None``."""
    best = None
    for p in glob.glob(os.path.join(out_dir, "ckpt_*.json")):
        m = re.fullmatch(r"ckpt_(\d+)\.json", os.path.basename(p))
        if m and (best is None or int(m.group(1)) > best[0]):
            best = (int(m.group(1)), p[:-5])
    return best


def read_curves(path):
    """Rows of a curves CSV as dictionaries of floats (``epoch`` and ``episodes`` as ints)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing format_version line")
        version = first.split(":", 1)[-1].strip()
        if version != str(CURVE_FORMAT_VERSION):
            raise ValueError(f"{path}: unsupported curve format_version {version}")
        rows = []
        for r in csv.DictReader(fh):
            row = {k: float(v) for k, v in r.items()}
            row["epoch"] = int(row["epoch"])
            row["episodes"] = int(row["episodes"])
            rows.append(row)
    return rows


def _write_curves(path, rows, append):
    new = not (append and os.path.exists(path))
    with open(path, "w" if new else "a", newline="") as fh:
        if new:
            fh.write(f"# format_version: {CURVE_FORMAT_VERSION}\n")
            fh.write(",".join(CURVE_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c])
                              for c in CURVE_COLUMNS) + "\n")


def _row(stats):
    return {"epoch": stats.epoch, "mean_reward": stats.mean_reward, "mean_len": stats.mean_len,
            "phys_mean": stats.phys_mean, "mean_return": stats.mean_return,
            "f_res_mean": stats.f_res_mean, "episodes": stats.episodes}


def _save(learner, out_dir, epoch, meta):
    m = dict(meta)
    m["epoch"] = epoch
    m["rng_state"] = learner.rng.bit_generator.state
    m["trainer"] = learner.config.to_dict()
    return save_checkpoint(checkpoint_path(out_dir, epoch), learner.policy, learner.value, m,
                           (learner.pol_opt, learner.val_opt))


def restore_learner(learner, out_dir):
    """Load the newest checkpoint of ``out_dir`` into ``learner``; returns its epoch.

    Parameters, normalizer, Adam moments and the random stream are
    restored exactly. Episodes that were running when the checkpoint was
    written are not: the resumed run starts fresh episodes.
    """
    found = latest_checkpoint(out_dir)
    if found is None:
        raise FileNotFoundError(f"no checkpoint to resume from in {out_dir}")
    epoch, stem = found
    ck = load_checkpoint(stem)
    if ck.state is None:
        raise ValueError(f"{stem} has no resume state")
    learner.policy.net.set_params(ck.state["policy"])
    learner.policy.norm = ck.policy.norm
    learner.value.set_params(ck.state["value"])
    for opt, p in ((learner.pol_opt, "p"), (learner.val_opt, "v")):
        opt.load_state({"t": ck.state[p + "t"], "m": ck.state[p + "m"], "v": ck.state[p + "v"]})
    learner.rng.bit_generator.state = ck.manifest["meta"]["rng_state"]
    learner.reset_episodes()
    return epoch


def train_env(learner, env, out_dir, epochs=None, checkpoint_every=None, meta=None,
              resume=False, on_epoch=None):
    """Run the epoch loop on a vectorized environment, logging and checkpointing.

    A fresh run writes the initial checkpoint ``ckpt_00000`` before the
    first epoch (so zero epochs produce only that file). ``resume=True``
    continues from the newest checkpoint and appends to the curves, first
    dropping rows newer than that checkpoint. Returns the list of
    :class:`EpochStats` of this call.
    """
    cfg = learner.config
    epochs = cfg.epochs if epochs is None else int(epochs)
    every = cfg.checkpoint_every if checkpoint_every is None else int(checkpoint_every)
    meta = dict(meta or {})
    os.makedirs(out_dir, exist_ok=True)
    curves = os.path.join(out_dir, "curves.csv")
    start = 0
    if resume:
        start = restore_learner(learner, out_dir)
        rows = [r for r in read_curves(curves) if r["epoch"] < start] \
            if os.path.exists(curves) else []
        _write_curves(curves, rows, append=False)
    else:
        _write_curves(curves, [], append=False)
        _save(learner, out_dir, 0, meta)
    out = []
    for e in range(start, epochs):
        stats = learner.epoch(env, e)
        if stats.update.get("aborted"):
            log.warning("epoch %d: update aborted (%s); parameters kept", e,
                        stats.update.get("reason"))
        _write_curves(curves, [_row(stats)], append=True)
        out.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
        done = e + 1
        if done % every == 0 or done == epochs:
            _save(learner, out_dir, done, meta)
    return out


def make_env(scene, dataset, config):
    """The imitation environment described by a :class:`RunConfig`."""
    from .env import Tracker, HoiEnv
    ep = config.episode
    tracker = Tracker(scene, dataset, config.reward, ep.compensation, ep.n_future, ep.max_len,
                      ep.thresholds())
    return HoiEnv(tracker, ep.n_envs)


def train(config, scene, dataset, out_dir, resume=False, epochs=None, on_epoch=None):
    """Train an imitation policy for ``scene`` on the reference ``dataset``.

    Writes ``curves.csv`` and checkpoints into ``out_dir``; the checkpoint
    metadata records the scene and run configuration so that ``rollout``
    can rebuild the environment. Deterministic for a given seed.
    """
    errs = config.trainer.errors() + config.episode.errors()
    if errs:
        raise ConfigError(errs)
    env = make_env(scene, dataset, config)
    learner = Learner(env.obs_size, env.act_size, config.trainer)
    meta = {"task": "imitation", "scene": scene.to_dict(), "run_config": config.to_dict()}
    return train_env(learner, env, out_dir, epochs, meta=meta, resume=resume, on_epoch=on_epoch)
