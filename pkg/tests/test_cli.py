import json

import numpy as np
import pytest

from xdfrelax import cli
from xdfrelax.hammodel import synth_hamiltonian, write_fcidump

from _common import regime_fixture


@pytest.fixture(scope="module")
def fcidump_n3(tmp_path_factory):
    path = tmp_path_factory.mktemp("fixtures") / "n3.fcidump"
    path.write_text(write_fcidump(synth_hamiltonian(3, 1, 1, 2)), encoding="ascii")
    return str(path)


@pytest.fixture(scope="module")
def fcidump_n4(tmp_path_factory):
    path = tmp_path_factory.mktemp("fixtures") / "n4.fcidump"
    path.write_text(write_fcidump(regime_fixture()), encoding="ascii")
    return str(path)


def _run(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = cli.main(args + ["--out", str(out)])
    return code, json.loads(out.read_text())


def test_factorize_json_contract(fcidump_n4, tmp_path):
    code, payload = _run(["factorize", "--fcidump", fcidump_n4, "--threshold", "0.3"],
                         tmp_path)
    assert code == 0
    assert payload["total_leaves"] == 10
    assert payload["retained"] == 4
    mags = np.abs(payload["leaf_eigenvalues"])
    assert np.all(np.diff(mags) <= 1e-12)
    assert payload["config"]["threshold"] == 0.3
    assert payload["exit_code"] == 0


def test_factorize_threshold_zero_retains_all(fcidump_n3, tmp_path):
    code, payload = _run(["factorize", "--fcidump", fcidump_n3, "--threshold", "0"],
                         tmp_path)
    assert code == 0
    assert payload["retained"] == payload["total_leaves"] == 6
    assert payload["reconstruction_error"] < 1e-10


def test_vqe_command(fcidump_n3, tmp_path):
    code, payload = _run(["vqe", "--fcidump", fcidump_n3, "--layers", "3",
                          "--tol", "1e-9", "--seed", "3"], tmp_path)
    assert code == 0
    assert payload["converged"] is True
    assert payload["grad_norm"] <= 1e-9
    assert len(payload["params"]["data"]) == payload["params"]["shape"][0]


def test_rdm_oracle_flag_untruncated(fcidump_n3, tmp_path):
    code, payload = _run(["rdm", "--fcidump", fcidump_n3, "--layers", "3",
                          "--tol", "1e-10", "--seed", "3"], tmp_path)
    assert code == 0
    assert payload["oracle"]["gamma_max_abs_diff"] < 1e-8
    assert payload["oracle"]["Gamma_max_abs_diff"] < 1e-8
    assert payload["gamma_sym"]["shape"] == [3, 3]
    assert payload["Gamma_sym"]["shape"] == [3, 3, 3, 3]


def test_rdm_truncated_oracle_not_applicable(fcidump_n3, tmp_path):
    code, payload = _run(["rdm", "--fcidump", fcidump_n3, "--leaves", "3",
                          "--layers", "3", "--seed", "3"], tmp_path)
    assert code == 0
    assert payload["oracle"] == "not-applicable"


def test_rdm_gamma_hf_limit(tmp_path):
    # an effectively one-body problem: gamma is the HF occupation pattern
    from _common import zero_two_body
    ham = zero_two_body(2, 1, 1, [-2.0, 1.0], core=0.1)
    path = tmp_path / "hf.fcidump"
    path.write_text(write_fcidump(ham), encoding="ascii")
    code, payload = _run(["rdm", "--fcidump", str(path), "--layers", "1",
                          "--seed", "1"], tmp_path)
    assert code == 0
    gamma = np.array(payload["gamma_sym"]["data"]).reshape(2, 2)
    np.testing.assert_allclose(gamma, np.diag([2.0, 0.0]), atol=1e-8)


def test_verify_command_small(fcidump_n3, tmp_path):
    code, payload = _run(["verify", "--fcidump", fcidump_n3, "--layers", "3",
                          "--layers-small", "1", "--leaves", "3",
                          "--perturbations", "1", "--seed", "0"], tmp_path)
    assert code == 0
    assert payload["all_passed"] is True
    assert len(payload["reports"]) == 4 * 2
    assert "regime" in payload["table"]


def test_path_command_short(fcidump_n3, tmp_path):
    ham_b = synth_hamiltonian(3, 1, 1, 8)
    path_b = tmp_path / "n3b.fcidump"
    path_b.write_text(write_fcidump(ham_b), encoding="ascii")
    code, payload = _run(["path", "--fcidump", fcidump_n3,
                          "--fcidump-b", str(path_b), "--steps", "10",
                          "--dt", "0.02", "--layers", "3", "--seed", "3"], tmp_path)
    assert code == 0
    assert payload["steps_completed"] == 10
    assert payload["relative_drift"] < 1e-6
    assert len(payload["total"]["data"]) == 11


def test_exit_code_input_error(tmp_path):
    code, payload = _run(["factorize", "--fcidump", "/nonexistent.fcidump"], tmp_path)
    assert code == 1
    assert "error" in payload


def test_exit_code_malformed_file(tmp_path):
    bad = tmp_path / "bad.fcidump"
    bad.write_text("not a namelist at all\n", encoding="ascii")
    code, payload = _run(["factorize", "--fcidump", str(bad)], tmp_path)
    assert code == 1


def test_exit_code_nonconvergence(fcidump_n3, tmp_path):
    # zero optimizer iterations leaves the random start non-stationary
    code, payload = _run(["vqe", "--fcidump", fcidump_n3, "--layers", "2",
                          "--tol", "1e-9", "--maxiter", "0", "--seed", "0"], tmp_path)
    assert code == 3
    assert "error" in payload


def test_byte_identical_reruns(fcidump_n3, tmp_path):
    args = ["rdm", "--fcidump", fcidump_n3, "--layers", "2", "--seed", "4"]
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
