import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from qdefinetti.channels import max_entangled_state
from qdefinetti.cli import load_schema, main
from qdefinetti.linalg import matrix_to_json

FAST = ["--particles", "256", "--shots", "64"]


def _json(path):
    return json.loads(path.read_text())


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_povm_qubit(tmp_path, capsys):
    out = tmp_path / "p.json"
    assert main(["povm", "--dim", "2", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    jsonschema.validate(summary, load_schema("povm_summary"))
    assert summary["identity_residual"] < 1e-12
    assert summary["num_elements"] == 4
    povm = _json(out)
    jsonschema.validate(povm, load_schema("povm"))
    assert len(povm["elements"]) == 4


def test_povm_qutrit(tmp_path, capsys):
    assert main(["povm", "--dim", "3", "--out", str(tmp_path / "p3.json")]) == 0
    assert json.loads(capsys.readouterr().out)["gram_rank"] == 9


@pytest.mark.parametrize("dim", ["1", "9"])
def test_povm_dim_out_of_range(tmp_path, capsys, dim):
    assert main(["povm", "--dim", dim, "--out", str(tmp_path / "p.json")]) == 2
    err = _error(capsys)
    jsonschema.validate(err, load_schema("error"))
    assert err["error"]["exit_code"] == 2
    assert not (tmp_path / "p.json").exists()


def test_missing_output_directory(tmp_path, capsys):
    assert main(["povm", "--out", str(tmp_path / "nope" / "p.json")]) == 2
    assert "does not exist" in _error(capsys)["error"]["message"]


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["povm", "--dim", "two"])
    assert exc.value.code == 2
    jsonschema.validate(_error(capsys), load_schema("error"))


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QDEFINETTI_OUT_DIR", str(tmp_path))
    assert main(["povm", "--dim", "2"]) == 0
    assert (tmp_path / "povm-d2.json").exists()


def test_state_tomo_outputs_and_schema(tmp_path, capsys):
    out = tmp_path / "st.json"
    code = main(["state-tomo", *FAST, "--out", str(out)])
    assert code in (0, 1)
    report = _json(out)
    jsonschema.validate(report, load_schema("state_tomography_report"))
    header = out.with_suffix(".csv").read_text().splitlines()[0]
    assert header == "shots,cross_prior_distance,prior1_truth,prior2_truth"


def test_state_tomo_zero_shots_fails_threshold(tmp_path, capsys):
    out = tmp_path / "s0.json"
    assert main(["state-tomo", "--shots", "0", "--particles", "512", "--out", str(out)]) == 1
    rows = _json(out)["rows"]
    assert len(rows) == 1 and rows[0][0] == 0


def test_state_tomo_is_bitwise_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["state-tomo", *FAST, "--seed", "3", "--out", str(a)])
    main(["state-tomo", *FAST, "--seed", "3", "--out", str(b)])
    assert a.with_suffix(".csv").read_bytes() == b.with_suffix(".csv").read_bytes()
    c = tmp_path / "c.json"
    main(["state-tomo", *FAST, "--seed", "4", "--out", str(c)])
    assert a.with_suffix(".csv").read_bytes() != c.with_suffix(".csv").read_bytes()


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"shots": 32, "particles": 128, "seed": 9, "truth": [0, 0, 0.3]}))
    out = tmp_path / "r.json"
    main(["state-tomo", "--config", str(cfg), "--shots", "16", "--out", str(out)])
    used = _json(out)["config"]
    assert used["shots"] == 16 and used["particles"] == 128 and used["seed"] == 9
    assert used["threshold"] == 0.08
    assert _json(out)["final"]["shots"] == 16


def test_config_errors(tmp_path, capsys):
    assert main(["state-tomo", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"shot": 3}))
    assert main(["state-tomo", "--config", str(bad)]) == 2
    assert "unknown config keys" in _error(capsys)["error"]["message"]


def test_state_tomo_unknown_truth(tmp_path, capsys):
    assert main(["state-tomo", "--truth", "no-such-state", "--out", str(tmp_path / "x.json")]) == 2


def test_state_tomo_inline_povm(tmp_path, capsys):
    from qdefinetti.povm import build_min_ic_povm

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"povm": build_min_ic_povm(2).to_json(), "shots": 32, "particles": 128}))
    assert main(["state-tomo", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) in (0, 1)


def test_state_tomo_prior_support_is_runtime_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"support_radius": 0.0, "particles": 16, "shots": 8}))
    assert main(["state-tomo", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 3
    assert _error(capsys)["error"]["type"] == "PriorSupportError"


def test_process_tomo_small(tmp_path, capsys):
    out = tmp_path / "pt.json"
    code = main(["process-tomo", "--particles", "256", "--shots", "200", "--out", str(out)])
    assert code in (0, 1)
    report = _json(out)
    jsonschema.validate(report, load_schema("process_tomography_report"))
    header = out.with_suffix(".csv").read_text().splitlines()[0]
    assert header.endswith("choi_distance")


def test_process_tomo_not_cp_truth(tmp_path, capsys):
    p = max_entangled_state(2)
    truth = tmp_path / "bad.json"
    truth.write_text(json.dumps({"dim": 2, "choi": matrix_to_json(1.15 * p - 0.05 * (np.eye(4) - p))}))
    assert main(["process-tomo", "--truth", str(truth), "--out", str(tmp_path / "x.json")]) == 2
    err = _error(capsys)
    jsonschema.validate(err, load_schema("error"))
    assert err["error"]["type"] == "NotCPError"


def test_process_tomo_rejects_qutrit(tmp_path, capsys):
    assert main(["process-tomo", "--dim", "3", "--out", str(tmp_path / "x.json")]) == 2


@pytest.mark.parametrize("case", ["anticorrelated", "ghz", "witness", "tp-filter"])
def test_demos(tmp_path, capsys, case):
    out = tmp_path / f"{case}.json"
    assert main(["definetti-demo", "--case", case, "--out", str(out)]) == 0
    report = _json(out)
    jsonschema.validate(report, load_schema("definetti_demo"))
    assert report["passed"]
    text = capsys.readouterr().out
    assert "FAIL" not in text


def test_anticorrelated_verdicts(tmp_path, capsys):
    out = tmp_path / "a.json"
    main(["definetti-demo", "--case", "anticorrelated", "--out", str(out)])
    checks = {c["name"]: c["value"] for c in _json(out)["checks"]}
    assert checks == {"symmetric": True, "extendible_to_3": False, "certificate_exact": True}


def test_witness_demo_crosses_at_14(tmp_path, capsys):
    out = tmp_path / "w.json"
    main(["definetti-demo", "--case", "witness", "--out", str(out)])
    report = _json(out)
    jsonschema.validate(report["details"], load_schema("witness"))
    growth = dict((n, v) for n, v in report["details"]["growth"])
    assert growth[12] < 1 < growth[14]


def test_tp_filter_demo_schema(tmp_path, capsys):
    out = tmp_path / "t.json"
    main(["definetti-demo", "--case", "tp-filter", "--out", str(out)])
    details = _json(out)["details"]
    for key in ("trace_preserving", "scaled"):
        jsonschema.validate(details[key], load_schema("tp_filter"))


def test_unknown_demo_case(tmp_path, capsys):
    assert main(["definetti-demo", "--case", "bogus", "--out", str(tmp_path / "x.json")]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qdefinetti.cli", "povm", "--dim", "2", "--out", str(tmp_path / "p.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["dim"] == 2


def test_json_matrix_schema_roundtrip(rng):
    from qdefinetti.exchangeability import anticorrelated_pair
    from qdefinetti.channels import random_channel

    jsonschema.validate(matrix_to_json(np.eye(3)), load_schema("matrix"))
    jsonschema.validate(anticorrelated_pair().to_json(), load_schema("joint_distribution"))
    ch = random_channel(2, rng)
    jsonschema.validate(ch.to_json(), load_schema("channel"))
