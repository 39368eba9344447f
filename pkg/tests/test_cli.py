import json
import math

import numpy as np
import pytest

from freespec import ConvergenceError, __version__
from freespec import cli
from freespec import solver
from freespec.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_OK


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return p


def freespec(tmp_path, command, cfg, *extra, out="out"):
    path = write(tmp_path, command + ".json", cfg)
    return cli.run([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


def rows(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# freespec ")
    head = lines[1].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return head, data


SIM = {
    "ensemble": {"function": "product", "n": 8, "m": 1, "law": {"kind": "standard-complex-gaussian"}},
    "trials": 1,
    "seed": 11,
}


def test_simulate_is_deterministic(tmp_path):
    assert freespec(tmp_path, "simulate", SIM, out="a") == EXIT_OK
    assert freespec(tmp_path, "simulate", SIM, out="b") == EXIT_OK
    for name in ("spectrum_0000.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head, data = rows(tmp_path / "a" / "spectrum_0000.csv")
    assert head == ["s"] and data.shape == (8, 1)
    assert np.all(np.diff(data[:, 0]) <= 0)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["failure_count"] == 0
    assert summary["max_singular_value"] == data[0, 0]
    assert summary["min_singular_value"] == data[-1, 0]


def test_thread_count_does_not_change_bytes(tmp_path):
    cfg = dict(SIM, trials=6, spectrum="eigen")
    assert freespec(tmp_path, "simulate", cfg, "--threads", "1", out="one") == EXIT_OK
    assert freespec(tmp_path, "simulate", cfg, "--threads", "3", out="three") == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert len(names) == 7
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "three" / name).read_bytes()


def test_output_banner_and_format(tmp_path):
    assert freespec(tmp_path, "simulate", SIM) == EXIT_OK
    raw = (tmp_path / "out" / "spectrum_0000.csv").read_bytes()
    assert b"\r" not in raw
    digest = cli.config_hash(SIM)
    assert raw.decode().splitlines()[0] == "# freespec %s config_sha256=%s" % (__version__, digest)
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["config_sha256"] == digest and summary["freespec_version"] == __version__


def test_seed_override_changes_output(tmp_path):
    freespec(tmp_path, "simulate", SIM, out="a")
    freespec(tmp_path, "simulate", SIM, "--seed", "12", out="b")
    assert (tmp_path / "a" / "spectrum_0000.csv").read_bytes() != (tmp_path / "b" / "spectrum_0000.csv").read_bytes()


def test_simulate_records_singular_trials(tmp_path):
    cfg = {
        "ensemble": {"function": "spherical-product", "n": 2, "m": 1, "law": {"kind": "rademacher"}},
        "trials": 40,
        "seed": 3,
    }
    assert freespec(tmp_path, "simulate", cfg) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    # a 2x2 sign matrix is singular with probability 1/2
    assert 5 <= summary["failure_count"] <= 35
    assert summary["succeeded"] + summary["failure_count"] == 40
    assert len(list((tmp_path / "out").glob("spectrum_*.csv"))) == summary["succeeded"]


def test_simulate_spherical_rarely_fails(tmp_path):
    cfg = {
        "ensemble": {"function": "spherical-product", "n": 64, "m": 1, "law": {"kind": "standard-real-gaussian"}},
        "trials": 20,
        "seed": 5,
        "diagnostics": {"alpha": [0.5, 0.0]},
    }
    assert freespec(tmp_path, "simulate", cfg) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["failure_count"] == 0
    assert len(summary["diagnostics"]) == 20
    assert summary["c1_min_smallest"] > 0


def test_simulate_zero_trials(tmp_path):
    with pytest.warns(UserWarning):
        assert freespec(tmp_path, "simulate", dict(SIM, trials=0)) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["trials"] == 0 and summary["min_singular_value"] is None
    assert not list((tmp_path / "out").glob("spectrum_*.csv"))


def test_law_marchenko_pastur(tmp_path):
    cfg = {"law": {"kind": "marchenko-pastur", "y": 1}, "grid": {"start": 0, "stop": 4, "step": 0.01}}
    assert freespec(tmp_path, "law", cfg) == EXIT_OK
    head, data = rows(tmp_path / "out" / "law.csv")
    assert head == ["x", "density", "cdf"] and len(data) == 401
    i = int(np.argmin(np.abs(data[:, 0] - 1)))
    assert data[i, 1] == pytest.approx(math.sqrt(3) / (2 * math.pi), abs=1e-12)
    assert data[i, 1] == pytest.approx(0.27566, abs=1e-5)
    assert data[i, 2] == pytest.approx(0.609, abs=1e-3)


def test_law_radial_tables(tmp_path):
    cfg = {"law": {"kind": "circular-ev"}, "grid": {"start": 0, "stop": 1, "points": 11}}
    assert freespec(tmp_path, "law", cfg) == EXIT_OK
    head, data = rows(tmp_path / "out" / "law.csv")
    assert head == ["r", "f", "radial_cdf"]
    assert data[:, 1] == pytest.approx(1 / math.pi)
    cfg = {"law": {"kind": "spherical-ev"}, "grid": {"start": 0, "stop": 2, "points": 5}}
    assert freespec(tmp_path, "law", cfg, out="sph") == EXIT_OK
    _, data = rows(tmp_path / "sph" / "law.csv")
    assert data[0, 1] == pytest.approx(1 / math.pi)


def test_law_unknown_lists_catalog(tmp_path, capsys):
    cfg = {"law": {"kind": "wigner"}, "grid": {"start": 0, "stop": 1, "points": 3}}
    assert freespec(tmp_path, "law", cfg) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "catalog" in err and "marchenko-pastur" in err


def test_solve_circular(tmp_path):
    cfg = {"law": {"kind": "circular-ev"}, "grid": {"start": 0.1, "stop": 1.5, "points": 15}}
    assert freespec(tmp_path, "solve", cfg) == EXIT_OK
    head, data = rows(tmp_path / "out" / "psi_kappa.csv")
    assert head == ["r", "psi", "kappa", "f", "residual"]
    r, psi = data[:, 0], data[:, 1]
    assert psi == pytest.approx(np.minimum(r * r, 1.0), abs=1e-8)
    tr = json.loads((tmp_path / "out" / "transitions.json").read_text())
    assert tr["transitions"] == pytest.approx([1.0], abs=1e-3)
    assert tr["radial_mass"] == pytest.approx(1.0, abs=1e-3)


def test_solve_product_and_rect(tmp_path):
    cfg = {"law": {"kind": "product-ev", "m": 3}, "grid": {"start": 0.1, "stop": 1, "points": 10}}
    assert freespec(tmp_path, "solve", cfg) == EXIT_OK
    _, data = rows(tmp_path / "out" / "psi_kappa.csv")
    assert data[:, 1] == pytest.approx(data[:, 0] ** (2 / 3), abs=1e-8)
    cfg = {"law": {"kind": "product-rect-ev", "ratios": [0.5, 1]}, "grid": {"start": 0.5, "stop": 1, "points": 3}}
    assert freespec(tmp_path, "solve", cfg, out="rect") == EXIT_OK
    _, data = rows(tmp_path / "rect" / "psi_kappa.csv")
    assert data[-1, 1] == pytest.approx(1.0, abs=1e-8)


def test_solve_from_moments(tmp_path):
    cfg = {"moments": [0, 1, 0, 2, 0, 5, 0, 14], "label": "semicircle", "grid": {"start": 0.2, "stop": 0.8, "points": 4}}
    assert freespec(tmp_path, "solve", cfg) == EXIT_OK
    _, data = rows(tmp_path / "out" / "psi_kappa.csv")
    assert np.all(np.diff(data[:, 1]) > 0)
    bad = dict(cfg, moments=[0, 1, 0, 0.5, 0, 1])
    assert freespec(tmp_path, "solve", bad, out="bad") == EXIT_CONFIG


def test_solve_needs_positive_grid(tmp_path):
    cfg = {"law": {"kind": "circular-ev"}, "grid": {"start": 0, "stop": 1, "points": 3}}
    assert freespec(tmp_path, "solve", cfg) == EXIT_CONFIG


def test_numeric_errors_exit_3(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise ConvergenceError("no convergence at r = 0.5", iterations=10)

    monkeypatch.setattr(solver, "solve_psi_kappa", boom)
    cfg = {"law": {"kind": "circular-ev"}, "grid": {"start": 0.1, "stop": 1, "points": 3}}
    assert freespec(tmp_path, "solve", cfg) == EXIT_NUMERIC
    assert "r = 0.5" in capsys.readouterr().err


@pytest.mark.parametrize(
    "cfg",
    [
        dict(SIM, extra=1),
        {k: v for k, v in SIM.items() if k != "seed"},
        dict(SIM, ensemble=dict(SIM["ensemble"], law={"kind": "cauchy"})),
        dict(SIM, ensemble=dict(SIM["ensemble"], function="exp")),
        dict(SIM, seed=-1),
        dict(SIM, trials="many"),
    ],
    ids=["unknown-field", "no-seed", "bad-entry-law", "bad-function", "negative-seed", "bad-trials"],
)
def test_config_errors_exit_2(tmp_path, cfg):
    assert freespec(tmp_path, "simulate", cfg) == EXIT_CONFIG


def test_unreadable_config_exit_2(tmp_path):
    assert cli.run(["law", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "broken.json").write_text("{", encoding="utf-8")
    assert cli.run(["law", "--config", str(tmp_path / "broken.json")]) == EXIT_CONFIG


def _spectra(tmp_path, ensemble, trials, seed, out, spectrum="singular"):
    cfg = {"ensemble": ensemble, "trials": trials, "seed": seed, "spectrum": spectrum}
    assert freespec(tmp_path, "simulate", cfg, out=out) == EXIT_OK
    return sorted(str(p) for p in (tmp_path / out).glob("spectrum_*.csv"))


GINIBRE = {"function": "identity", "n": 1024, "law": {"kind": "standard-complex-gaussian"}}


def test_compare_pass_and_wrong_law(tmp_path):
    files = _spectra(tmp_path, GINIBRE, 1, 1, "g")
    assert freespec(tmp_path, "compare", {"spectra": files, "law": {"kind": "marchenko-pastur", "y": 1}}, out="c1") == EXIT_OK
    rep = json.loads((tmp_path / "c1" / "report.json").read_text())
    assert rep["pass"] and rep["convention"] == "squared" and rep["n"] == 1024
    assert rep["threshold"] == pytest.approx(1.63 / 32)
    assert freespec(tmp_path, "compare", {"spectra": files, "law": {"kind": "spherical-sv"}}, out="c2") == EXIT_FAIL
    rep = json.loads((tmp_path / "c2" / "report.json").read_text())
    assert not rep["pass"] and rep["value"] > 2 * rep["threshold"]
    assert rep["value"] >= 0.1


def test_compare_eigenvalues_radial(tmp_path):
    files = _spectra(tmp_path, dict(GINIBRE, n=256), 2, 4, "e", spectrum="eigen")
    cfg = {"spectra": files, "law": {"kind": "circular-ev"}}
    assert freespec(tmp_path, "compare", cfg, out="c") == EXIT_OK
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert rep["statistic"] == "radial_ks" and rep["n"] == 512
    cfg["statistic"] = "angular_ks"
    assert freespec(tmp_path, "compare", cfg, out="c3") == EXIT_OK


def test_compare_convention_mismatch(tmp_path):
    files = _spectra(tmp_path, dict(GINIBRE, n=16), 1, 1, "g")
    cfg = {"spectra": files, "law": {"kind": "marchenko-pastur", "y": 1}, "convention": "unsquared"}
    assert freespec(tmp_path, "compare", cfg) == EXIT_CONFIG
    eig = _spectra(tmp_path, dict(GINIBRE, n=16), 1, 1, "e", spectrum="eigen")
    assert freespec(tmp_path, "compare", {"spectra": eig, "law": {"kind": "marchenko-pastur", "y": 1}}) == EXIT_CONFIG


def test_compare_relative_paths_and_two_sample(tmp_path):
    a = _spectra(tmp_path, dict(GINIBRE, n=128), 1, 1, "a")
    b = _spectra(tmp_path, dict(GINIBRE, n=128, law={"kind": "rademacher"}), 1, 2, "b")
    cfg = {"spectra": "a/spectrum_0000.csv", "reference": "b/spectrum_0000.csv"}
    assert freespec(tmp_path, "compare", cfg) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["statistic"] == "ks2"
    assert rep["threshold"] == pytest.approx(1.63 * math.sqrt(2 / 128))
    assert len(a) == len(b) == 1


def test_compare_missing_file(tmp_path):
    assert freespec(tmp_path, "compare", {"spectra": "nope.csv", "law": {"kind": "circular-ev"}}) == EXIT_CONFIG


def test_universality_command(tmp_path):
    cfg = {
        "ensemble": {"function": "product", "n": 64, "m": 2},
        "laws": [{"kind": "standard-complex-gaussian"}, {"kind": "rademacher"}],
        "trials": 8,
        "seed": 9,
        "min_pass_fraction": 0.75,
    }
    assert freespec(tmp_path, "universality", cfg) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "universality.json").read_text())
    assert len(rep["trials"]) == 8 and rep["pass"]
    assert rep["trials"][0]["threshold"] == pytest.approx(1.63 * math.sqrt(2 / 64))


def test_universality_detects_different_functions(tmp_path):
    # an impossible pass fraction turns the run into a statistical failure
    cfg = {
        "ensemble": {"function": "product", "n": 32, "m": 2},
        "laws": [{"kind": "standard-complex-gaussian"}, {"kind": "standard-real-gaussian"}],
        "trials": 2,
        "seed": 1,
        "ks_coeff": 1e-6,
    }
    assert freespec(tmp_path, "universality", cfg) == EXIT_FAIL


def test_main_exits_with_code(tmp_path):
    path = write(tmp_path, "c.json", {"law": {"kind": "nope"}, "grid": {"start": 0, "stop": 1, "points": 2}})
    with pytest.raises(SystemExit) as exc:
        cli.main(["law", "--config", str(path), "--out", str(tmp_path)])
    assert exc.value.code == EXIT_CONFIG
