import math

import numpy as np
import pytest

import fragdiff as fd
from fragdiff.errors import DomainError
from fragdiff.grid import (
    GridSpec,
    SizeSpectrumField,
    gradient_sq_integral,
    integrate,
    laplacian_neumann,
    make_grid_1d,
    make_grid_2d,
    read_species_csv,
    spectral_heat_solve_1d,
    stencil_eigenvalue,
    write_species_csv,
)


class TestGridSpec:
    def test_basic_properties(self):
        g = make_grid_1d(10, 2.0)
        assert g.dim == 1
        assert g.h == (0.2,)
        assert g.cell_volume == pytest.approx(0.2)
        assert g.ncells == 10
        np.testing.assert_allclose(g.centers(), np.arange(10) * 0.2 + 0.1)

    def test_2d(self):
        g = make_grid_2d(4, 8, 1.0, 2.0)
        assert g.shape == (4, 8)
        assert g.cell_volume == pytest.approx(0.25 * 0.25)
        X, Y = g.meshgrid()
        assert X.shape == (4, 8)
        assert Y[0, 0] == pytest.approx(0.125)

    def test_validation(self):
        with pytest.raises(DomainError):
            GridSpec(shape=(3,), lengths=(1.0,))
        with pytest.raises(DomainError):
            GridSpec(shape=(8, 8, 8), lengths=(1.0, 1.0, 1.0))
        with pytest.raises(DomainError):
            GridSpec(shape=(8,), lengths=(0.0,))
        with pytest.raises(DomainError):
            GridSpec(shape=(8, 8), lengths=(1.0,))


def test_stencil_cosine_modes_are_eigenvectors():
    # cos(k pi x / L) at cell centers reflects exactly at both walls, so the
    # stencil acts on it as multiplication by its eigenvalue
    g = make_grid_1d(32, 1.5)
    x = g.centers()
    for k in (0, 1, 2, 5, 11):
        u = np.cos(k * np.pi * x / 1.5)
        got = laplacian_neumann(g, u)
        lam = stencil_eigenvalue(g, k)
        np.testing.assert_allclose(got, lam * u, atol=1e-10 * max(1.0, abs(lam)))


def test_stencil_eigenvalue_continuum_limit():
    lam_exact = -((3.0 * np.pi / 1.0) ** 2)
    errs = []
    for m in (64, 128, 256):
        g = make_grid_1d(m)
        errs.append(abs(stencil_eigenvalue(g, 3) - lam_exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_laplacian_2d_additivity():
    g = make_grid_2d(8, 12, 1.0, 3.0)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(g.shape)
    full = laplacian_neumann(g, u)
    # sum of the per-axis operators applied through 1D grids
    gx = make_grid_1d(8, 1.0)
    gy = make_grid_1d(12, 3.0)
    part = np.zeros_like(u)
    for col in range(12):
        part[:, col] += laplacian_neumann(gx, u[:, col])
    for row in range(8):
        part[row, :] += laplacian_neumann(gy, u[row, :])
    np.testing.assert_allclose(full, part, rtol=1e-12, atol=1e-12)


def test_laplacian_annihilates_constants_and_conserves():
    g = make_grid_2d(6, 6)
    assert np.array_equal(laplacian_neumann(g, np.full(g.shape, 3.7)), np.zeros(g.shape))
    rng = np.random.default_rng(4)
    u = rng.uniform(size=g.shape)
    # zero-flux boundaries: the stencil sum telescopes to zero
    assert abs(integrate(g, laplacian_neumann(g, u))) <= 1e-12


def test_integrate_constant():
    g = make_grid_2d(5, 7, 2.0, 3.0)
    assert integrate(g, np.full(g.shape, 2.0)) == pytest.approx(12.0, rel=1e-15)


def test_gradient_sq_exact_for_linear():
    # a uniform slope has |grad u|^2 = s^2 everywhere; the face weighting
    # makes the quadrature exact at any resolution
    for m in (4, 9, 50):
        g = make_grid_1d(m, 2.0)
        u = 3.0 * g.centers()
        assert gradient_sq_integral(g, u) == pytest.approx(9.0 * 2.0, rel=1e-13)
    g2 = make_grid_2d(5, 8, 1.0, 2.0)
    X, Y = g2.meshgrid()
    u2 = 2.0 * X - 1.0 * Y
    assert gradient_sq_integral(g2, u2) == pytest.approx((4.0 + 1.0) * 2.0, rel=1e-13)


def test_gradient_sq_mask():
    g = make_grid_1d(10)
    u = g.centers().copy()
    full = gradient_sq_integral(g, u)
    none = gradient_sq_integral(g, u, mask=np.zeros(10, dtype=bool))
    assert none == 0.0
    half = np.zeros(10, dtype=bool)
    half[:5] = True  # 4 interior faces of 9 stay active
    part = gradient_sq_integral(g, u, mask=half)
    assert 0.0 < part < full
    assert part == pytest.approx(full * 4.0 / 9.0, rel=1e-12)


def test_gradient_sq_shape_errors():
    g = make_grid_1d(8)
    with pytest.raises(DomainError):
        gradient_sq_integral(g, np.zeros(9))
    with pytest.raises(DomainError):
        gradient_sq_integral(g, np.zeros(8), mask=np.ones(7, dtype=bool))


class TestSpectralReference:
    def test_zero_time_identity(self):
        g = make_grid_1d(16)
        rng = np.random.default_rng(5)
        u0 = rng.uniform(size=16)
        np.testing.assert_allclose(spectral_heat_solve_1d(g, u0, 0.3, 0.0), u0, rtol=1e-13)

    def test_single_mode_decay(self):
        g = make_grid_1d(64, 1.0)
        x = g.centers()
        u0 = 1.0 + 0.5 * np.cos(2.0 * np.pi * x)
        d, t = 0.25, 0.1
        expect = 1.0 + 0.5 * math.exp(-d * (2.0 * np.pi) ** 2 * t) * np.cos(2.0 * np.pi * x)
        np.testing.assert_allclose(spectral_heat_solve_1d(g, u0, d, t), expect, atol=1e-12)

    def test_mass_preserved(self):
        g = make_grid_1d(32)
        rng = np.random.default_rng(6)
        u0 = rng.uniform(size=32)
        ut = spectral_heat_solve_1d(g, u0, 1.0, 0.7)
        assert integrate(g, ut) == pytest.approx(integrate(g, u0), rel=1e-13)

    def test_rejects_bad_input(self):
        g = make_grid_1d(8)
        with pytest.raises(DomainError):
            spectral_heat_solve_1d(g, np.zeros(8), 1.0, -0.1)
        with pytest.raises(DomainError):
            spectral_heat_solve_1d(make_grid_2d(8, 8), np.zeros((8, 8)), 1.0, 0.1)


def test_species_csv_round_trip_1d(tmp_path):
    g = make_grid_1d(12, 1.75)
    rng = np.random.default_rng(8)
    vals = rng.uniform(size=(3, 12))
    p = tmp_path / "fields.csv"
    write_species_csv(p, g, vals, metadata={"t": repr(0.125), "note": "x"})
    g2, vals2, meta = read_species_csv(p)
    assert g2 == g
    assert np.array_equal(vals, vals2)  # bitwise via repr round-trip
    assert meta["t"] == "0.125"
    assert meta["note"] == "x"


def test_species_csv_round_trip_2d(tmp_path):
    g = make_grid_2d(5, 6, 2.0, 0.5)
    rng = np.random.default_rng(9)
    vals = rng.standard_normal((2, 5, 6))
    p = tmp_path / "fields2d.csv"
    write_species_csv(p, g, vals)
    g2, vals2, meta = read_species_csv(p)
    assert g2 == g
    assert np.array_equal(vals, vals2)
    assert meta == {"species": "2"}


def test_species_csv_missing_metadata(tmp_path):
    p = tmp_path / "broken.csv"
    p.write_text("x,f_1\n0.5,1.0\n")
    with pytest.raises(DomainError):
        read_species_csv(p)


def test_field_validation():
    g = make_grid_1d(8)
    with pytest.raises(DomainError):
        SizeSpectrumField(g, np.zeros((2, 7)))
    with pytest.raises(DomainError):
        SizeSpectrumField(g, np.array([[np.inf] * 8]))
    fld = SizeSpectrumField(g, np.ones((4, 8)))
    assert fld.n == 4
