"""Checkpoints: a JSON manifest next to a little-endian float32 parameter blob.

The blob stores the policy network then the value network, each as its
flat parameter vector (per layer ``W`` row-major ``out x in``, then ``b``).
An optional ``<stem>.state.npz`` keeps the exact float64 parameters and
the Adam moments so that training can resume without rounding.
"""
from dataclasses import dataclass
import json
import os

import numpy as np

from .gaussian import GaussianPolicy
from .mlp import Mlp
from .optim import RunningNorm

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    policy: GaussianPolicy
    value: Mlp
    manifest: dict
    state: dict = None


def _stem(path):
    path = os.fspath(path)
    for ext in (".json", ".bin"):
        if path.endswith(ext):
            return path[:-len(ext)]
    return path


def save_checkpoint(path, policy, value, meta=None, optimizers=None):
    """Write ``<stem>.json`` and ``<stem>.bin`` (plus the resume state when
    ``optimizers`` is a ``(policy_adam, value_adam)`` pair). Returns the
    manifest path."""
    stem = _stem(path)
    blob = np.concatenate([policy.net.params, value.params]).astype("<f4")
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "blob": os.path.basename(stem) + ".bin",
        "dtype": "float32", "byteorder": "little",
        "layout": "per layer: W (out x in, row-major) then b; policy then value",
        "networks": [
            {"name": "policy", "sizes": policy.net.sizes, "offset": 0,
             "count": policy.net.n_params},
            {"name": "value", "sizes": value.sizes, "offset": policy.net.n_params,
             "count": value.n_params},
        ],
        "obs_size": policy.obs_size, "act_size": policy.act_size, "sigma": policy.sigma,
        "normalizer": policy.norm.state(),
        "meta": meta or {},
    }
    d = os.path.dirname(stem)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(stem + ".bin", "wb") as fh:
        fh.write(blob.tobytes())
    if optimizers is not None:
        po, vo = optimizers
        np.savez(stem + ".state.npz", policy=policy.net.params, value=value.params,
                 pm=po.m, pv=po.v, pt=po.t, vm=vo.m, vv=vo.v, vt=vo.t)
    with open(stem + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return stem + ".json"


def load_checkpoint(path):
    stem = _stem(path)
    try:
        with open(stem + ".json") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint manifest {stem}.json: {exc}") from None
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {manifest.get('format_version')}")
    try:
        nets = {n["name"]: n for n in manifest["networks"]}
        blob_path = os.path.join(os.path.dirname(stem), manifest["blob"])
        raw = np.fromfile(blob_path, dtype="<f4").astype(float)
        total = sum(n["count"] for n in nets.values())
        if raw.size != total:
            raise CheckpointError(f"blob holds {raw.size} values, manifest expects {total}")
        pn, vn = nets["policy"], nets["value"]
        policy = GaussianPolicy(manifest["obs_size"], manifest["act_size"], pn["sizes"][1:-1],
                                manifest["sigma"])
        policy.net.set_params(raw[pn["offset"]:pn["offset"] + pn["count"]])
        policy.norm = RunningNorm.from_state(manifest["normalizer"])
        value = Mlp(vn["sizes"], params=raw[vn["offset"]:vn["offset"] + vn["count"]])
    except (KeyError, TypeError, OSError) as exc:
        raise CheckpointError(f"malformed checkpoint {stem}: {exc}") from None
    state = None
    if os.path.exists(stem + ".state.npz"):
        with np.load(stem + ".state.npz") as z:
            state = {k: z[k] for k in z.files}
        policy.net.set_params(state["policy"])
        value.set_params(state["value"])
    return Checkpoint(policy, value, manifest, state)
