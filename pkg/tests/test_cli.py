import json

import numpy as np
import pytest

from icr.cli import main
from icr.fileio import packet_to_dict, write_json
from conftest import random_packets


def _scenario(tmp_path, **kw):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({"example_id": 3, "K": 4, "n": 80, "p": 12, "seed": 3, **kw}))
    return path


def test_pipeline_end_to_end(tmp_path):
    scen = _scenario(tmp_path)
    data = tmp_path / "data"
    assert main(["simulate", str(scen), "--out-dir", str(data)]) == 0
    packets = []
    for k in range(4):
        out = tmp_path / f"pk{k}.json"
        assert main(["local-fit", str(data / f"client_{k:03d}.csv"), "--out", str(out), "--seed", "0"]) == 0
        packets.append(str(out))
    model, scores = tmp_path / "model.json", tmp_path / "scores.csv"
    assert main(["aggregate", *packets, "--out-model", str(model), "--out-scores", str(scores)]) == 0
    header = scores.read_text().splitlines()[0]
    assert header == "lambda1,lambda2,mbic,m_hat,q_hat,converged"
    metrics = tmp_path / "metrics.json"
    assert main(["evaluate", str(model), str(data / "truth.json"), "--out", str(metrics)]) == 0
    m = json.loads(metrics.read_text())
    assert set(m) == {"TPR", "FPR", "MS", "M_hat", "Per", "RI", "ARI", "RMSE"}
    assert m["Per"] == 1.0


def test_local_fit_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((10, 3))
    y = X @ [1.0, -0.5, 0.0] + 0.1 * rng.standard_normal(10)
    path = tmp_path / "c.csv"
    path.write_text("y,a,b,c\n" + "".join(",".join(repr(float(v)) for v in [yi, *xi]) + "\n" for yi, xi in zip(y, X)))
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}.json"
        assert main(["local-fit", str(path), "--out", str(out), "--seed", "4"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["p"] == 4


def test_explicit_grid(tmp_path, rng):
    paths = []
    for k, pk in enumerate(random_packets(rng, K=3, p=4)):
        paths.append(str(tmp_path / f"{k}.json"))
        write_json(packet_to_dict(pk), paths[-1])
    scores = tmp_path / "s.csv"
    rc = main(["aggregate", *paths, "--out-model", str(tmp_path / "m.json"), "--out-scores", str(scores),
               "--lambda1-grid", "0.01,0.1", "--lambda2-grid", "0.05"])
    assert rc == 0
    assert len(scores.read_text().splitlines()) == 3


def test_mixed_dimensions_rejected(tmp_path, rng):
    a = random_packets(rng, K=1, p=4)[0]
    b = random_packets(rng, K=1, p=5)[0]
    write_json(packet_to_dict(a), tmp_path / "a.json")
    write_json(packet_to_dict(b), tmp_path / "b.json")
    rc = main(["aggregate", str(tmp_path / "a.json"), str(tmp_path / "b.json"),
               "--out-model", str(tmp_path / "m.json"), "--out-scores", str(tmp_path / "s.csv")])
    assert rc == 2


def test_tampered_packet_exit_code(tmp_path, rng):
    d = packet_to_dict(random_packets(rng, K=1)[0])
    d["n"] += 1
    write_json(d, tmp_path / "a.json")
    rc = main(["aggregate", str(tmp_path / "a.json"), "--out-model", str(tmp_path / "m.json"),
               "--out-scores", str(tmp_path / "s.csv")])
    assert rc == 2


@pytest.mark.parametrize("argv", [
    ["local-fit", "missing.csv", "--out", "x.json"],
    ["simulate", "nope.json", "--out-dir", "d"],
    ["aggregate", "a.json", "--out-model", "m", "--out-scores", "s", "--lambda1-grid", "abc"],
    ["bogus-command"],
])
def test_bad_input_exit_code(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_non_binary_logistic_response(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("y,a\n0,1.0\n3,0.5\n1,0.1\n")
    assert main(["local-fit", str(path), "--loss-kind", "logistic", "--out", str(tmp_path / "o.json")]) == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    import icr.cli as cli
    from icr.admm import SolverDivergence

    def boom(*a, **k):
        raise SolverDivergence("diverged")

    monkeypatch.setattr(cli, "grid_search", boom)
    pk = random_packets(np.random.default_rng(0), K=1)[0]
    write_json(packet_to_dict(pk), tmp_path / "a.json")
    rc = main(["aggregate", str(tmp_path / "a.json"), "--out-model", str(tmp_path / "m.json"),
               "--out-scores", str(tmp_path / "s.csv")])
    assert rc == 3


def test_bench_identical_across_threads(tmp_path):
    scen = _scenario(tmp_path)
    outs = []
    for t in (1, 2):
        out = tmp_path / f"t{t}.csv"
        per = tmp_path / f"r{t}.csv"
        assert main(["bench", str(scen), "--replicates", "2", "--methods", "ICR,Oracle", "--threads", str(t),
                     "--out", str(out), "--per-replicate", str(per)]) == 0
        outs.append((out.read_bytes(), per.read_bytes()))
    assert outs[0] == outs[1]
