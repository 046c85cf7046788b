"""Compensation-control ablation on the toy lift task.

Each arm trains the imitation policy on the two-finger box lifting a
reference, once with the compensation action and once without. The
learning curve is the total reward of all episodes in an epoch; both arms
of one seed are min-max normalized on a shared scale. The arm with
compensation is then evaluated with its mean action from random start
frames.
"""
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..policy import TrainerConfig
from ..sim.presets import two_finger_box
from .env import FAULT, rollout
from .learner import Learner
from .reference import generate_reference
from .training import EpisodeConfig, RunConfig, make_env, normalize_curve, train_env


@dataclass
class AblationConfig:
    epochs: int = 500
    seeds: tuple = (0, 1, 2)
    batch_size: int = 512
    n_envs: int = 8
    frames: int = 90
    eval_episodes: int = 20
    success_error: float = 0.02
    final_window: int = 100
    trainer: dict = field(default_factory=dict)


@dataclass
class ArmResult:
    compensation: bool
    seed: int
    totals: np.ndarray
    phys: np.ndarray
    final_errors: np.ndarray


def lift_task(frames=90):
    scene = two_finger_box()
    return scene, [generate_reference(scene, "lift", frames)]


def final_object_errors(policy, tracker, episodes, seed):
    """Object position error at the end of mean-action episodes from random starts.

    Faulted episodes count as an infinite error.
    """
    rng = np.random.default_rng(seed)
    seq = tracker.dataset[0]
    out = []
    for _ in range(episodes):
        start = int(rng.integers(0, len(seq) - 1))
        traj, trans, status = rollout(policy, tracker, 0, start)
        if status == FAULT:
            out.append(np.inf)
            continue
        ref = seq[min(trans[-1].t, len(seq) - 1)]
        out.append(float(np.linalg.norm(traj.frames[-1].obj_pos - ref.obj_pos)))
    return np.array(out)


def run_arm(compensation, seed, config=None, out_dir=None, on_epoch=None):
    """Train one arm and evaluate its final policy.

    Checkpoints and curves go to ``out_dir`` (a temporary directory when
    omitted).
    """
    config = config or AblationConfig()
    scene, dataset = lift_task(config.frames)
    trainer = TrainerConfig(batch_size=config.batch_size, epochs=config.epochs, seed=seed,
                            checkpoint_every=max(config.epochs, 1), **config.trainer)
    run = RunConfig(trainer, episode=EpisodeConfig(compensation=compensation,
                                                   n_envs=config.n_envs))
    env = make_env(scene, dataset, run)
    learner = Learner(env.obs_size, env.act_size, trainer)
    meta = {"task": "ablation", "scene": scene.to_dict(), "run_config": run.to_dict()}
    with tempfile.TemporaryDirectory() as tmp:
        stats = train_env(learner, env, out_dir or tmp, meta=meta, on_epoch=on_epoch)
    errors = final_object_errors(learner.policy, env.tracker, config.eval_episodes,
                                 10_000 + seed)
    # every epoch collects exactly batch_size steps
    totals = np.array([s.mean_reward * config.batch_size for s in stats])
    return ArmResult(compensation, seed, totals, np.array([s.phys_mean for s in stats]), errors)


def compare(with_comp, without, window=100):
    """Final-window means of the jointly normalized curves of one seed."""
    both = np.concatenate([with_comp.totals, without.totals])
    lo, hi = np.nanmin(both), np.nanmax(both)
    a = normalize_curve(with_comp.totals, lo, hi)[-window:]
    b = normalize_curve(without.totals, lo, hi)[-window:]
    return float(np.nanmean(a)), float(np.nanmean(b))


def run_ablation(config=None, on_arm=None):
    """Both arms for every seed.

    Returns a dict with per-seed final normalized means (``with``,
    ``without``, ``gap``), the final-window mean physics reward of the
    compensation arm (``phys``) and the success rate of that arm over all
    its evaluation episodes.
    """
    config = config or AblationConfig()
    seeds, errors = [], []
    for seed in config.seeds:
        arms = []
        for comp in (True, False):
            arm = run_arm(comp, seed, config)
            arms.append(arm)
            if on_arm is not None:
                on_arm(arm)
        a, b = compare(arms[0], arms[1], config.final_window)
        phys = float(np.mean(arms[0].phys[-config.final_window:]))
        seeds.append({"seed": seed, "with": a, "without": b, "gap": a - b, "phys": phys})
        errors.append(arms[0].final_errors)
    errors = np.concatenate(errors)
    return {"seeds": seeds, "min_gap": min(s["gap"] for s in seeds),
            "success_rate": float(np.mean(errors < config.success_error)),
            "final_errors": errors.tolist()}
