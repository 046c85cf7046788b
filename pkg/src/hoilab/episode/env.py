"""Imitation environment: simulator + rewards + contact audit per control step."""
from dataclasses import dataclass
import json

import numpy as np

from ..contact.surface import audit, physics_reward
from ..control import ActionMap, RewardConfig, build_observation, observation_size
from ..control.rewards import hand_reward, object_reward, total_reward, RewardBreakdown
from ..sim.kinematics import forward_kinematics
from ..sim.world import World, SimulationFault
from .lifecycle import (Thresholds, EpisodeSpec, start_episode, initial_state,
                        check_termination, EARLY_STOP, SEQUENCE_END)

FAULT = "fault"


@dataclass
class Transition:
    """Everything one control step produced; JSON round-trips bit-exactly."""
    ref_index: int
    t: int
    action: np.ndarray
    q_target: np.ndarray
    f_comp: np.ndarray
    tau_comp: np.ndarray
    reward: RewardBreakdown
    f_res: np.ndarray
    tau_res: np.ndarray
    status: str
    q: np.ndarray
    dq: np.ndarray
    obj_pos: np.ndarray
    obj_quat: np.ndarray
    obj_vel: np.ndarray
    obj_angvel: np.ndarray

    _ARRAYS = ("action", "q_target", "f_comp", "tau_comp", "f_res", "tau_res", "q", "dq",
               "obj_pos", "obj_quat", "obj_vel", "obj_angvel")

    def to_dict(self):
        d = {"ref_index": self.ref_index, "t": self.t, "status": self.status,
             "reward": self.reward.to_dict()}
        for k in self._ARRAYS:
            d[k] = np.asarray(getattr(self, k), float).tolist()
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        kw = {k: np.asarray(d[k], dtype=float) for k in cls._ARRAYS}
        return cls(ref_index=int(d["ref_index"]), t=int(d["t"]), status=d["status"],
                   reward=RewardBreakdown(**d["reward"]), **kw)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


class Tracker:
    """Single-episode stepping logic shared by training, rollout and tests.

    With ``compensation=False`` the action holds only the PD target, the
    simulator receives no compensation wrench and ``r_phys`` is fixed at 1
    (the contact audit is skipped).
    """

    def __init__(self, scene, dataset, reward_config=None, compensation=True, n_future=5,
                 max_len=300, thresholds=None):
        self.scene = scene
        self.world = World(scene)
        self.model = scene.hand
        self.dataset = list(dataset)
        self.rewards = reward_config or RewardConfig()
        self.compensation = compensation
        self.n_future = n_future
        self.max_len = max_len
        self.thresholds = thresholds or Thresholds()
        self.action_map = ActionMap.for_object(scene.hand, scene.obj, scene.world.gravity,
                                                compensation)
        self._ref_fk = [[None] * len(s) for s in self.dataset]

    @property
    def obs_size(self):
        return observation_size(self.model.nq, self.n_future)

    @property
    def act_size(self):
        return self.action_map.size

    def ref_fk(self, i, t):
        c = self._ref_fk[i][t]
        if c is None:
            c = forward_kinematics(self.model, self.dataset[i][t].q)
            self._ref_fk[i][t] = c
        return c

    def start(self, rng):
        spec, hs, os_ = start_episode(self.dataset, rng, self.max_len, self.thresholds)
        return spec, hs, os_

    def start_at(self, ref_index, start):
        spec = EpisodeSpec(ref_index, start, self.max_len, self.thresholds)
        hs, os_ = initial_state(self.dataset[ref_index][start])
        return spec, hs, os_

    def observe(self, spec, hs, os_, t):
        seq = self.dataset[spec.ref_index]
        return build_observation(self.model, hs, os_, seq.window(t, self.n_future), self.n_future)

    def apply(self, spec, hs, os_, t, raw, steps=None):
        """Advance one control step from reference frame ``t`` with a raw action.

        Returns ``(hand_state, obj_state, transition)``. A simulator fault
        yields the unchanged states and status ``"fault"`` with zero reward.
        """
        seq = self.dataset[spec.ref_index]
        nxt = min(t + 1, len(seq) - 1)
        act = self.action_map(raw, seq[nxt].q)
        f_res = np.zeros(3)
        tau_res = np.zeros(3)
        try:
            hs2, os2 = self.world.step_pd(hs, os_, act.q_target, act.f_comp, act.tau_comp)
        except SimulationFault:
            zero = RewardBreakdown(*([0.0] * 10))
            tr = Transition(spec.ref_index, nxt, np.asarray(raw, float), act.q_target, act.f_comp,
                            act.tau_comp, zero, f_res, tau_res, FAULT, hs.q, hs.dq, os_.pos,
                            os_.quat, os_.vel, os_.angvel)
            return hs, os_, tr
        fk_sim = forward_kinematics(self.model, hs2.q)
        fk_ref = self.ref_fk(spec.ref_index, nxt)
        cfg = self.rewards
        r_phys = 1.0
        if self.compensation:
            sol = audit(self.world.contacts(hs2, os2), self.scene.obj, os2,
                        self.scene.world.gravity)
            r_phys = physics_reward(sol, cfg.k_phys, cfg.w_torque)
            f_res, tau_res = sol.f_res, sol.tau_res
        rb = total_reward(hand_reward(self.model, hs2, seq[nxt], cfg, fk_sim, fk_ref),
                          object_reward(os2, seq[nxt], cfg), r_phys)
        steps = (nxt - spec.start) if steps is None else steps
        status = check_termination(self.model, hs2, os2, seq, nxt, spec, steps, fk_sim, fk_ref)
        tr = Transition(spec.ref_index, nxt, np.asarray(raw, float), act.q_target, act.f_comp,
                        act.tau_comp, rb, f_res, tau_res, status, hs2.q, hs2.dq, os2.pos,
                        os2.quat, os2.vel, os2.angvel)
        return hs2, os2, tr


def control_step(policy, tracker, spec, hs, os_, t, rng=None):
    """Observation, action (sampled with ``rng``, else the mean), one step.

    Returns ``(hand_state, obj_state, reward_breakdown, transition)``.
    """
    obs = tracker.observe(spec, hs, os_, t)
    if rng is None:
        raw = policy.mean_action(obs[None, :])[0]
    else:
        raw = policy.act(obs[None, :], rng)[0][0]
    hs2, os2, tr = tracker.apply(spec, hs, os_, t, raw)
    return hs2, os2, tr.reward, tr


class HoiEnv:
    """Vectorized wrapper around :class:`Tracker` for the learner.

    Early stops and faults are terminal; reaching the last reference frame
    is terminal as well (nothing is left to imitate); hitting ``max_len``
    is a truncation.
    """

    def __init__(self, tracker, n_envs=8):
        self.tracker = tracker
        self.n_envs = int(n_envs)
        self.obs_size = tracker.obs_size
        self.act_size = tracker.act_size
        self._slots = [None] * self.n_envs
        self.faults = 0

    def _start(self, i, rng):
        spec, hs, os_ = self.tracker.start(rng)
        self._slots[i] = [spec, hs, os_, spec.start, 0]

    def _obs(self, i):
        spec, hs, os_, t, _ = self._slots[i]
        return self.tracker.observe(spec, hs, os_, t)

    def reset(self, rng):
        for i in range(self.n_envs):
            self._start(i, rng)
        return np.array([self._obs(i) for i in range(self.n_envs)])

    def step(self, actions, rng):
        n = self.n_envs
        obs = np.zeros((n, self.obs_size))
        final = np.zeros((n, self.obs_size))
        rew = np.zeros(n)
        term = np.zeros(n, bool)
        trunc = np.zeros(n, bool)
        phys = np.ones(n)
        fres = np.zeros(n)
        for i in range(n):
            spec, hs, os_, t, steps = self._slots[i]
            hs2, os2, tr = self.tracker.apply(spec, hs, os_, t, actions[i], steps + 1)
            rew[i] = tr.reward.r_total
            phys[i] = tr.reward.r_phys
            fres[i] = np.linalg.norm(tr.f_res)
            self._slots[i] = [spec, hs2, os2, tr.t, steps + 1]
            if tr.status == FAULT:
                self.faults += 1
                term[i] = True
            elif tr.status == EARLY_STOP:
                term[i] = True
            elif tr.status == SEQUENCE_END:
                if tr.t >= len(self.tracker.dataset[spec.ref_index]) - 1:
                    term[i] = True
                else:
                    trunc[i] = True
            if trunc[i]:
                final[i] = self._obs(i)
            if term[i] or trunc[i]:
                self._start(i, rng)
            obs[i] = self._obs(i)
        return obs, rew, term, trunc, {"final_obs": final, "r_phys": phys, "f_res": fres}


def rollout(policy, tracker, ref_index=0, start=0, max_steps=None, rng=None):
    """Run one episode from ``reference[start]`` and record it.

    Actions are the policy mean unless ``rng`` is given. Stops at an early
    stop, a fault, the end of the reference or ``max_steps``. Returns
    ``(trajectory, transitions, status)`` where the trajectory holds the
    initial state and one frame per control step.
    """
    from .reference import sequence_from_states
    spec, hs, os_ = tracker.start_at(ref_index, start)
    if max_steps is not None:
        spec.max_len = int(max_steps)
    hands, objs, trans = [hs], [os_], []
    t = start
    status = "continue"
    while status == "continue":
        hs, os_, _, tr = control_step(policy, tracker, spec, hs, os_, t, rng)
        trans.append(tr)
        status = tr.status
        if status == FAULT:
            break
        hands.append(hs)
        objs.append(os_)
        t = tr.t
    seq = tracker.dataset[ref_index]
    prov = {"source": "rollout", "ref_index": int(ref_index), "start": int(start),
            "status": status, "reference": seq.provenance}
    return sequence_from_states(hands, objs, seq.fps, prov), trans, status
