import json

import numpy as np
import pytest

from hybridfilt.cli import main
from hybridfilt.config import model_to_dict, save_model, save_theta
from hybridfilt.scenarios import WONHAM_THETA, wonham


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_model(wonham(), "m.json")
    save_theta(WONHAM_THETA, "t.json")
    save_theta([1.5, 0.7, 0.8], "ti.json")
    assert main(["simulate", "--model", "m.json", "--theta", "t.json", "--T", "5", "--dt", "1e-3",
                 "--seed", "42", "--out", "sim"]) == 0
    return tmp_path


def _rerun(manifest_file, new_out):
    m = json.loads(manifest_file.read_text())
    argv = list(m["argv"])
    argv[argv.index("--out") + 1] = new_out
    assert main(argv) == 0
    again = json.loads((manifest_file.parent.parent / new_out / "manifest.json").read_text())
    return m, again


def test_pipeline_and_byte_identical_reruns(workdir):
    runs = {
        "sim": None,
        "flt": ["filter", "--y", "sim/path.csv", "--model", "m.json", "--theta", "t.json",
                "--smooth-at", "1,2.5", "--out", "flt"],
        "sm": ["smooth", "--y", "sim/path.csv", "--model", "m.json", "--theta", "t.json",
               "--at", "0.5", "--out", "sm"],
        "ll": ["loglik", "--path", "sim/path.csv", "--model", "m.json", "--theta", "ti.json",
               "--theta0", "t.json", "--partial", "--out", "ll"],
        "em": ["em", "--y", "sim/path.csv", "--model", "m.json", "--theta-init", "ti.json",
               "--max-iter", "5", "--out", "em"],
        "mle": ["mle", "--y", "sim/path.csv", "--model", "m.json", "--theta-init", "ti.json",
                "--restarts", "1", "--max-iter", "40", "--out", "mle"],
    }
    for name, argv in runs.items():
        if argv:
            assert main(argv) == 0, name
        m, again = _rerun(workdir / name / "manifest.json", name + "_again")
        assert m["outputs"] and m["outputs"] == again["outputs"], name
        assert m["config_hash"] == again["config_hash"]
        assert set(m["versions"]) >= {"python", "numpy", "scipy", "numba", "hybridfilt"}
    header = (workdir / "flt" / "filter.csv").read_text().splitlines()[0]
    assert header == "t,log_mass,p_1,p_2"
    em_csv = (workdir / "em" / "em_iterations.csv").read_text().splitlines()
    assert em_csv[0].startswith("n,") and len(em_csv) >= 2
    ll = json.loads((workdir / "ll" / "loglik.json").read_text())
    assert np.isfinite(ll["value"]) and "partial" in ll


def test_exit_codes(workdir, tmp_path):
    assert main(["bogus"]) == 1
    assert main(["filter", "--y", "missing.csv", "--model", "m.json", "--theta", "t.json"]) == 1
    save_theta([100.0, 1.0, 1.0], "bad.json")
    assert main(["filter", "--y", "sim/path.csv", "--model", "m.json", "--theta", "bad.json"]) == 1
    (tmp_path / "broken.json").write_text("{}")
    assert main(["filter", "--y", "sim/path.csv", "--model", "broken.json", "--theta", "t.json"]) == 1
    # a jump that is impossible under theta0 makes the complete ratio singular
    cfg = model_to_dict(wonham())
    cfg["box"]["lower"] = [0.0, 0.0, -5.0]
    (tmp_path / "zero.json").write_text(json.dumps(cfg))
    save_theta([0.0, 0.0, 1.0], "t0.json")
    assert main(["loglik", "--path", "sim/path.csv", "--model", "zero.json", "--theta", "t.json",
                 "--theta0", "t0.json"]) == 2


def test_verify_quick(workdir):
    assert main(["verify", "--scenario", "wonham_split", "--seed", "3", "--quick", "--out", "v"]) == 0
    rep = json.loads((workdir / "v" / "verify.json").read_text())
    assert rep["pass"] is True
    assert {c["name"] for c in rep["checks"]} >= {"exact_scheme_log_mass_vs_oracle",
                                                 "scalar_vs_vector_mass"}
