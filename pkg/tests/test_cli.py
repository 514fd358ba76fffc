import json

import numpy as np
import pytest

from koopnnm import cli
from koopnnm.koopman import compute_identity_modes
from koopnnm.models import TwoDofParams, build_2dof_cubic
from koopnnm.polyfield import jacobian_at_origin
from koopnnm.spectral import decompose


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--output-dir", str(out)])
    return code, out


def test_eigen_report(tmp_path, capsys):
    code, out = run(tmp_path, "eigen", "--set", "model.params.k_b=4.7")
    assert code == 0
    text = capsys.readouterr().out
    assert "-0.075000 + i3.224031" in text and "-0.025000 + i0.999687" in text
    header, data = cli.read_csv(out / "eigen.csv")
    assert header == ["index", "re", "im", "freq_rad_s", "damping_ratio"]
    assert data.shape == (4, 5)


def test_modes_order_one_has_two_rows(tmp_path):
    code, out = run(tmp_path, "modes", "--order", "1")
    assert code == 0
    header, data = cli.read_csv(out / "modes.csv")
    assert header[:4] == ["k1", "k2", "re_x1", "im_x1"] and len(header) == 10
    assert data[:, :2].tolist() == [[1, 0], [0, 1]]
    dec = decompose(jacobian_at_origin(build_2dof_cubic()))
    v = dec.right_eigenvectors[:, 0]
    np.testing.assert_array_equal(data[0, 2::2], v.real)
    np.testing.assert_array_equal(data[0, 3::2], v.imag)


def test_modes_csv_round_trip_is_bit_exact(tmp_path):
    code, out = run(tmp_path, "modes", "--order", "9", "--set", "model.params.k_b=4.1")
    assert code == 0
    field = build_2dof_cubic(TwoDofParams(k_b=4.1))
    tab = compute_identity_modes(field, decompose(jacobian_at_origin(field)), (0, 1), 9)
    _, data = cli.read_csv(out / "modes.csv")
    for row, ((k1, k2), v) in zip(data, tab.modes.items()):
        assert (row[0], row[1]) == (k1, k2)
        assert np.array_equal(row[2::2], v.real) and np.array_equal(row[3::2], v.imag)


def test_outputs_are_deterministic(tmp_path):
    args = ("manifold", "--order", "15", "--radius", "0.5", "--grid", "6x12")
    assert run(tmp_path, *args, name="a")[0] == 0
    assert run(tmp_path, *args, name="b")[0] == 0
    for f in ("mesh.csv", "manifold.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_mesh_csv(tmp_path):
    code, out = run(tmp_path, "manifold", "--order", "10", "--radius", "0.3", "--grid", "3x4")
    assert code == 0
    header, data = cli.read_csv(out / "mesh.csv")
    assert header == ["u", "v", "x1", "x2", "x3", "x4", "pde_residual"]
    assert data.shape == (12, 7)
    summary = json.loads((out / "manifold.json").read_text())
    assert summary["radius"] == 0.3 and not summary["radius_is_validity_radius"]


def test_trajectory_files_and_nmse(tmp_path):
    code, out = run(tmp_path, "trajectory", "--order", "20", "--xi0-re", "0.3", "--xi0-im", "0.1",
                    "--samples", "200", "--orders", "1,3")
    assert code == 0
    header, est = cli.read_csv(out / "estimate.csv")
    assert header == ["t", "x1", "x2", "x3", "x4"] and est.shape == (200, 5)
    assert (out / "order_3.csv").exists() and (out / "reference.csv").exists()
    report = json.loads((out / "trajectory.json").read_text())
    assert report["passed"] and report["nmse_percent"] < 1e-6


def test_trajectory_from_state(tmp_path):
    from koopnnm.manifold import eval_psi

    field = build_2dof_cubic()
    tab = compute_identity_modes(field, decompose(jacobian_at_origin(field)), (0, 1), 20)
    x0 = eval_psi(tab, 0.2 - 0.2j).state
    code, out = run(tmp_path, "trajectory", "--order", "20", "--samples", "100",
                    "--x0", ",".join(repr(float(c)) for c in x0))
    assert code == 0
    report = json.loads((out / "trajectory.json").read_text())
    assert report["xi0"] == pytest.approx([0.2, -0.2], abs=1e-8)


def test_nmse_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "trajectory", "--order", "3", "--xi0-re", "0.9", "--samples", "200",
                  "--set", "model.params.k_b=4.1")
    assert code == cli.EXIT_VALIDATION


def test_resonance_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "validate", "--set", "model.params.k_b=4", "--radius", "0.1")
    assert code == cli.EXIT_RESONANCE
    err = capsys.readouterr().err
    assert "k=(3,0)" in err or "k=(0,3)" in err


def test_validate_passes(tmp_path):
    code, out = run(tmp_path, "validate", "--order", "30", "--radius", "0.3", "--samples", "300")
    assert code == 0
    verdict = json.loads((out / "validate.json").read_text())
    assert verdict["passed"] and verdict["checks"]["resonance"]["passed"]
    assert len(verdict["checks"]["rays"]["nmse_percent"]) == 8


@pytest.mark.parametrize(
    "argv,field",
    [
        (["modes", "--order", "0"], "order"),
        (["modes", "--order", "101"], "order"),
        (["modes", "--set", "validation.nmse_threshold=0"], "validation.nmse_threshold"),
        (["modes", "--set", "nonsense=1"], "nonsense"),
        (["modes", "--set", "model.name=\"pendulum\""], "model.name"),
        (["modes", "--set", "model.params.k_a=-1"], "model.params"),
        (["modes", "--mode", "sideways"], "mode"),
        (["manifold", "--grid", "2000x1000", "--radius", "1"], "grid"),
        (["trajectory", "--order", "5"], "trajectory.xi0"),
    ],
)
def test_config_errors(tmp_path, capsys, argv, field):
    code, _ = run(tmp_path, *argv)
    assert code == cli.EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema": 1, "order": 3, "model": {"name": "quadratic_1d", "params": {}}, "mode": 0}))
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["modes", "--config", str(cfg)]) == 0
    _, data = cli.read_csv(tmp_path / "env" / "modes.csv")
    np.testing.assert_allclose(data[:, 2], [1, -1, 1], atol=1e-14)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 2}))
    assert cli.main(["modes", "--config", str(bad)]) == cli.EXIT_CONFIG
