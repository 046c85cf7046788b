"""Command-line surface: subcommands, files and exit codes."""
import json

import numpy as np
import pytest

from hoilab.cli import main
from hoilab.episode import ReferenceSequence, read_curves
from hoilab.sim.presets import two_finger_box

CONFIG = """format_version = 1
[trainer]
batch_size = 32
passes = 1
minibatches = 2
policy_hidden = [8, 8]
value_hidden = [8, 8]
checkpoint_every = 1
[episode]
n_envs = 2
"""


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """gen-ref, then two epochs of training on it."""
    d = tmp_path_factory.mktemp("run")
    assert main(["gen-ref", "--preset", "two-finger-box", "--script", "lift", "--frames", "12",
                 "--write-scene", str(d / "scene.json"), "--out", str(d / "ref.jsonl")]) == 0
    (d / "cfg.toml").write_text(CONFIG)
    assert main(["train", "--scene", str(d / "scene.json"), "--ref", str(d / "ref.jsonl"),
                 "--config", str(d / "cfg.toml"), "--epochs", "2", "--quiet",
                 "--out", str(d / "out")]) == 0
    return d


def test_pipeline_end_to_end(run, capsys):
    assert len(read_curves(run / "out" / "curves.csv")) == 2
    assert main(["rollout", "--policy", str(run / "out" / "ckpt_00002"), "--ref",
                 str(run / "ref.jsonl"), "--out", str(run / "sim.jsonl"),
                 "--transitions", str(run / "tr.jsonl")]) == 0
    traj = ReferenceSequence.load(run / "sim.jsonl")
    assert traj.kind == "trajectory" and len(traj) >= 2
    n_tr = len((run / "tr.jsonl").read_text().splitlines())
    assert n_tr == len(traj) - 1
    if len(traj) >= 3:
        assert main(["eval", "--traj", str(run / "sim.jsonl"), "--scene", str(run / "scene.json"),
                     "--report", str(run / "rep.json")]) == 0
        rep = json.loads((run / "rep.json").read_text())
        assert rep["format_version"] == 1 and len(rep["frames"]) == len(traj)


def test_eval_reference_twice_is_byte_identical(run, capsys):
    args = ["eval", "--traj", str(run / "ref.jsonl"), "--preset", "two-finger-box"]
    assert main(args + ["--report", str(run / "a.json")]) == 0
    assert main(args + ["--report", str(run / "b.json")]) == 0
    assert (run / "a.json").read_bytes() == (run / "b.json").read_bytes()
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out)["aggregates"]["frames"] == 12


def test_resume_extends_run(run):
    assert main(["train", "--scene", str(run / "scene.json"), "--ref", str(run / "ref.jsonl"),
                 "--config", str(run / "cfg.toml"), "--epochs", "3", "--quiet", "--resume",
                 "--out", str(run / "out")]) == 0
    assert [r["epoch"] for r in read_curves(run / "out" / "curves.csv")] == [0, 1, 2]


def test_qp_command(tmp_path, capsys):
    frame = {"format_version": 1, "object": two_finger_box().obj.to_dict(),
             "state": {"pos": [0, 0, 0]},
             "contacts": [{"point": [0, 0, -0.025], "normal": [0, 0, 1]}]}
    p = tmp_path / "frame.json"
    p.write_text(json.dumps(frame))
    assert main(["qp", "--in", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["converged"] and len(out["lambda"]) == 20
    assert np.linalg.norm(out["residual"]["force"]) < 1e-6
    assert main(["qp", "--in", str(p), "--point", "--out", str(tmp_path / "o.json")]) == 0
    assert len(json.loads((tmp_path / "o.json").read_text())["lambda"]) == 4


def test_usage_errors(capsys):
    assert main(["train", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["gen-ref", "--script", "hold", "--out", "x.jsonl"]) == 1
    assert main(["gen-ref", "--preset", "two-finger-box", "--script", "juggle",
                 "--out", "x.jsonl"]) == 1
    assert main(["--help"]) == 0


def test_data_errors(tmp_path, capsys):
    assert main(["eval", "--traj", str(tmp_path / "missing.jsonl"),
                 "--preset", "two-finger-box"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[trainer]\ngamma = 2.0\nbatch_size = 0\n")
    ref = tmp_path / "r.jsonl"
    assert main(["gen-ref", "--preset", "two-finger-box", "--script", "hold", "--frames", "3",
                 "--out", str(ref)]) == 0
    capsys.readouterr()
    assert main(["train", "--preset", "two-finger-box", "--ref", str(ref), "--config", str(bad),
                 "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "gamma" in err and "batch_size" in err
    (tmp_path / "q.json").write_text("{\"state\": {}}")
    assert main(["qp", "--in", str(tmp_path / "q.json")]) == 2
    assert main(["gen-ref", "--preset", "two-finger-box", "--script", "hold", "--frames", "0",
                 "--out", str(tmp_path / "j.jsonl")]) == 2


def test_numerical_fault_exit_code(run, tmp_path):
    d = json.loads((run / "scene.json").read_text())
    for j in d["hand"]["joints"]:
        j["kp"] = [1e300] * len(j["kp"])
        j["torque_limit"] = [1e300] * len(j["torque_limit"])
    d["world"]["force_limit"] = 1e300
    (tmp_path / "wild.json").write_text(json.dumps(d))
    ref = tmp_path / "open.jsonl"
    seq = ReferenceSequence.load(run / "ref.jsonl")
    for f in seq.frames:
        f.q = f.q.copy()
        f.q[6:] = -0.5
    seq.save(ref)
    assert main(["rollout", "--policy", str(run / "out" / "ckpt_00002"), "--ref", str(ref),
                 "--scene", str(tmp_path / "wild.json"), "--out", str(tmp_path / "t.jsonl")]) == 3
