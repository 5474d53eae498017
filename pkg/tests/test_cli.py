import json

import numpy as np
import pytest

from isacwk import evaluate, make_scenario, papr
from isacwk.cli import main
from isacwk.io import read_matrix, write_matrix
from isacwk.model import WaveformFrame, orthogonal_lfm_chirp


def test_design_writes_waveform(tmp_path, capsys):
    out = tmp_path / "wf.csv"
    rc = main(["design", "--n", "4", "--k", "2", "--l", "20", "--eta-db", "9", "--epsilon", "0.7",
               "--seed", "3", "--out", str(out), "--diagnostics", str(tmp_path / "d.csv")])
    assert rc == 0
    X = read_matrix(out)
    assert X.shape == (4, 20)
    assert abs(np.linalg.norm(X) - 1) <= 1e-6
    assert papr(X) <= 10**0.9 * (1 + 1e-6)
    line = capsys.readouterr().out.strip()
    assert line.startswith("objective_db=") and "stop=" in line
    assert (tmp_path / "d.csv").read_text().startswith("iter,")


def test_design_json_and_auto_seed(capsys):
    assert main(["design", "--n", "2", "--k", "1", "--l", "4", "--eta", "2", "--epsilon", "1",
                 "--max-iter", "50", "--format", "json"]) == 0
    cap = capsys.readouterr()
    assert set(json.loads(cap.out)) == {"objective_db", "papr_db", "similarity", "iterations", "stop"}
    assert cap.err.startswith("seed: ")


@pytest.mark.parametrize("argv", [
    ["design", "--eta", "0.5", "--epsilon", "1"],
    ["design", "--eta", "2", "--eta-db", "3", "--epsilon", "1"],
    ["design", "--epsilon", "1"],
    ["design", "--eta", "2", "--epsilon", "-1"],
    ["design", "--n", "1", "--k", "2", "--eta", "2", "--epsilon", "1", "--seed", "0"],
    ["robust-design", "--eta", "2", "--epsilon", "1", "--sigma-delta", "-1", "--seed", "0"],
])
def test_usage_errors(argv):
    try:
        rc = main(argv)
    except SystemExit as exc:
        rc = exc.code
    assert rc == 2


def test_robust_design(tmp_path, capsys):
    out = tmp_path / "wf.bin"
    rc = main(["robust-design", "--n", "5", "--k", "2", "--l", "8", "--eta", "1.5", "--epsilon", "1.25",
               "--sigma-delta-db", "-2", "--seed", "1", "--out", str(out), "--format", "json"])
    assert rc == 0
    assert read_matrix(out).shape == (5, 8)


def test_design_then_metrics(tmp_path, capsys):
    out = tmp_path / "wf.csv"
    main(["design", "--n", "4", "--k", "2", "--l", "20", "--eta-db", "6", "--epsilon", "1.2", "--seed", "5",
          "--out", str(out)])
    capsys.readouterr()
    rc = main(["metrics", "--in", str(out), "--k", "2", "--seed", "5", "--eta-db", "6", "--epsilon", "1.2"])
    rep = json.loads(capsys.readouterr().out)
    assert rc == 0 and rep["feasible"]
    X = read_matrix(out)
    m = evaluate(make_scenario(4, 2, 20, seed=5), WaveformFrame(X))
    assert rep["papr_linear"] == pytest.approx(papr(X), rel=1e-12)
    assert rep["mui_energy"] == pytest.approx(m.mui_energy, rel=1e-12)
    assert rep["similarity_dist"] == pytest.approx(np.linalg.norm(X - orthogonal_lfm_chirp(4, 20).entries))


def test_metrics_infeasible(tmp_path, capsys):
    p = tmp_path / "spike.csv"
    X = np.zeros((2, 4), complex)
    X[0, 0] = 1
    write_matrix(p, X)
    assert main(["metrics", "--in", str(p), "--eta", "2", "--format", "csv"]) == 1
    assert "feasible=False" in capsys.readouterr().out


def test_metrics_missing_file(tmp_path, capsys):
    assert main(["metrics", "--in", str(tmp_path / "none.csv")]) == 1


def test_experiment_exit_codes(tmp_path, capsys):
    spec = tmp_path / "s.yaml"
    spec.write_text("spec_version: 1\nkind: CostConvergence\nN: 2\nK: 1\nL: 4\nmax_iter: 20\netas: [2.0]\n"
                    "epsilons: [1.0]\ntrials: 50\nchecks:\n"
                    "  - {name: loose, column: trials_ok, op: '>=', value: 1}\n")
    out = tmp_path / "r.json"
    assert main(["experiment", str(spec), "--trials", "2", "--out", str(out), "--format", "json",
                 "--plot-data"]) == 0
    assert "PASS loose" in capsys.readouterr().out
    doc = json.loads(out.read_text())
    assert doc["spec"]["trials"] == 2
    assert (tmp_path / "r_history.csv").exists()
    spec.write_text(spec.read_text().replace("value: 1}", "value: 99}"))
    assert main(["experiment", str(spec), "--trials", "2", "--out", str(tmp_path / "r.csv")]) == 1
    assert "FAIL loose" in capsys.readouterr().out
    spec.write_text("spec_version: 1\nkind: Nope\n")
    assert main(["experiment", str(spec), "--out", str(out)]) == 2


def test_pareto(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["pareto", "--n", "2", "--k", "1", "--l", "4", "--eta", "1.5", "2", "--weights", "5",
                 "--seed", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "front,eta,w,E_MUI_db,similarity,papr_db"
    assert {l.split(",")[0] for l in lines[1:]} == {"M", "M_clipped", "M_eta"}
    js = tmp_path / "p.json"
    assert main(["pareto", "--n", "2", "--k", "1", "--l", "4", "--eta-db", "3", "--weights", "4",
                 "--seed", "0", "--out", str(js), "--format", "json"]) == 0
    doc = json.loads(js.read_text())
    assert doc["rows"][0][1] is None
    with pytest.raises(SystemExit):
        main(["pareto", "--out", str(out)])
