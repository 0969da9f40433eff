import math

import numpy as np
import pytest

import snapspec


@pytest.fixture(scope="module")
def library():
    return snapspec.generate_spectra(count=60, bands=8, seed=1, g_max=1.0)


def test_spectra_and_selection(library):
    assert len(library) == 60
    assert library.values.shape == (60, 8)
    sel = snapspec.select_fps(library, 9)
    assert len(set(sel.indices)) == 9
    p = np.abs(snapspec.pearson(library))
    sub = p[np.ix_(sel.indices, sel.indices)]
    np.testing.assert_allclose(sel.pairwise, sub, atol=1e-12)
    assert sel.max_offdiag == pytest.approx((sub - np.eye(9)).max())


def test_spectra_from_numpy_roundtrip(tmp_path):
    rows = np.linspace(0.1, 0.9, 24).reshape(3, 8)
    ds = snapspec.Spectra(rows)
    ds.save(tmp_path / "x.spc")
    back = snapspec.load_spectra(tmp_path / "x.spc")
    np.testing.assert_array_equal(back.values, rows.astype(np.float32))
    with pytest.raises(snapspec.ShapeError):
        snapspec.Spectra(rows, grid=[1.0, 2.0])


def test_forward_adjoint(library):
    sel = snapspec.select_fps(library, 16)
    phi = snapspec.build_mosaic(sel, 16, 16, 4)
    rng = np.random.default_rng(0)
    x = rng.random((16, 16, 8))
    y = rng.standard_normal((16, 16))
    lhs = float(np.sum(snapspec.encode(x, phi) * y))
    rhs = float(np.sum(x * snapspec.adjoint(y, phi)))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    np.testing.assert_allclose(snapspec.encode(x, phi), np.sum(phi.mosaic * x, axis=2), atol=1e-12)
    with pytest.raises(snapspec.ShapeError):
        snapspec.encode(x[:, :, :4], phi)


def test_metrics_and_classical(library):
    phi = snapspec.build_mosaic(snapspec.select_fps(library, 16), 32, 32, 4)
    truth = snapspec.generate_scene(32, 32, 8, seed=3)
    assert snapspec.psnr(truth, truth) == math.inf
    assert snapspec.ssim(truth, truth) == 1.0
    y = snapspec.encode(truth, phi)
    x0 = snapspec.init_estimate(y, phi)
    est, fidelity = snapspec.reconstruct_classical(y, phi, stages=5)
    assert est.shape == truth.shape
    assert len(fidelity) == 5
    assert all(b <= a + 1e-12 for a, b in zip(fidelity, fidelity[1:]))
    mse = np.mean((x0 - truth) ** 2)
    assert snapspec.psnr(x0, truth) == pytest.approx(10 * math.log10(1 / mse), abs=1e-9)


def test_cli_train_and_load_model(tmp_path):
    def run(*args):
        code, out, err = snapspec.run_cli([str(a) for a in args])
        assert code == 0, err
        return out

    run("gen-spectra", "--n", 100, "--bands", 8, "--gmax", 1.0, "--out", tmp_path / "lib.spc")
    run("select-filters", "--in", tmp_path / "lib.spc", "--k", 16, "--out", tmp_path / "sel.spc")
    run("gen-scenes", "--n", 1, "--height", 16, "--width", 16, "--bands", 8, "--out", tmp_path / "scenes")
    run("train", "--scenes", tmp_path / "scenes", "--filters", tmp_path / "sel.spc", "--mosaic-s", 4,
        "--stages", 2, "--channels", 4, "--epochs", 1, "--out", tmp_path / "m.erp")
    model = snapspec.Model.load(tmp_path / "m.erp")
    assert model.stages == 2
    assert model.parameter_count > 0
    phi = snapspec.build_mosaic(snapspec.load_spectra(tmp_path / "sel.spc"), 16, 16, 4)
    y = snapspec.encode(snapspec.generate_scene(16, 16, 8, seed=2), phi)
    assert model.reconstruct(y, phi).shape == (16, 16, 8)
    assert snapspec.run_cli(["frobnicate"])[0] == 2
