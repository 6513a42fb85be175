import numpy as np
import pytest

from stochnls.grid import SpatialGrid, dense_laplacian, laplacian_symbol
from stochnls.markov import MarkovModel
from stochnls.potential import PotentialFamily, make_amplitude_family, shape_field
from stochnls.spectral import (
    assemble_h,
    assemble_kb,
    default_lambda_grid,
    eigen_analysis,
    kb_scan,
    resolvent_identity_residual,
    write_scan_csv,
    write_spectrum_csv,
)


def two_state_model(rate=1.0):
    return MarkovModel(rate * np.array([[1.0, -1.0], [-1.0, 1.0]]))


def sech_family(grid, m=2, contrast=1.0, depth=-2.0):
    well = shape_field(grid, "sech2", amplitude=depth, width=1.0)
    if m == 1:
        return PotentialFamily(grid, well[None, :])
    return make_amplitude_family(well, -0.5 * depth * shape_field(
        grid, "sech2", amplitude=1.0, width=1.0),
        np.linspace(-contrast, contrast, m), grid)


class TestAssemble:
    def test_free_spectrum_is_laplacian_symbols(self):
        grid = SpatialGrid(1, 32, 10.0)
        fam = PotentialFamily(grid, np.zeros((1, grid.size)))
        model = MarkovModel(np.zeros((1, 1)))
        ham = assemble_h(fam, model)
        eigvals = np.sort(np.linalg.eigvals(ham.H).real)
        np.testing.assert_allclose(eigvals, np.sort(laplacian_symbol(grid)),
                                   atol=1e-9)

    def test_commuting_sum_spectrum(self):
        # V=0, A nonzero: spectrum is exactly {|k|^2 + i mu}
        grid = SpatialGrid(1, 16, 8.0)
        model = two_state_model(1.7)
        fam = PotentialFamily(grid, np.zeros((2, grid.size)))
        ham = assemble_h(fam, model)
        eigvals = np.linalg.eigvals(ham.H)
        mus = np.linalg.eigvalsh(model.A)
        expected = (laplacian_symbol(grid)[:, None] + 1j * mus[None, :]).reshape(-1)
        got = np.sort_complex(np.round(eigvals, 9))
        want = np.sort_complex(np.round(expected, 9))
        np.testing.assert_allclose(got, want, atol=1e-8)

    def test_poschl_teller_level(self):
        # -2 sech^2 well holds a single level at -1 on the line; the doubled
        # resolution solve is the oracle for the box value
        levels = []
        for n in (128, 256):
            grid = SpatialGrid(1, n, 40.0)
            fam = sech_family(grid, m=1)
            ham = assemble_h(fam, MarkovModel(np.zeros((1, 1))))
            report = eigen_analysis(ham)
            bound = report.discrete_subset()
            levels.append(float(bound.real.min()))
        assert abs(levels[0] - levels[1]) <= 1e-6  # resolved well
        assert abs(levels[1] - (-1.0)) <= 1e-3     # box/line discrepancy only

    def test_size_cap(self):
        grid = SpatialGrid(1, 4096, 100.0)
        fam = PotentialFamily(grid, np.zeros((2, grid.size)))
        with pytest.raises(ValueError):
            assemble_h(fam, two_state_model())


class TestEigenAnalysis:
    def test_selfadjoint_case_real_spectrum(self):
        grid = SpatialGrid(1, 64, 20.0)
        fam = sech_family(grid, m=1)
        ham = assemble_h(fam, MarkovModel(np.zeros((1, 1))))
        report = eigen_analysis(ham)
        assert np.max(np.abs(report.eigenvalues.imag)) <= 1e-10

    def test_trivial_randomness_keeps_real_bound_state(self):
        # V independent of y, A nonzero: H block-diagonalizes over spec(A);
        # the ground block is self-adjoint, so the bound state stays real
        grid = SpatialGrid(1, 128, 40.0)
        well = shape_field(grid, "sech2", amplitude=-2.0, width=1.0)
        fam = PotentialFamily(grid, np.vstack([well, well]))
        ham = assemble_h(fam, two_state_model())
        report = eigen_analysis(ham)
        bound = report.discrete_subset()
        best = bound[np.argmin(bound.real)]
        assert best.real < -0.5
        assert abs(best.imag) <= 1e-8 * report.norm

    def test_nontrivial_randomness_creates_resonance(self):
        grid = SpatialGrid(1, 128, 40.0)
        fam = sech_family(grid, m=2, contrast=1.0)
        ham = assemble_h(fam, two_state_model())
        report = eigen_analysis(ham)
        bound = report.discrete_subset()
        assert bound.size > 0
        best = bound[np.argmin(bound.real)]
        assert best.imag >= 1e-6 * report.norm  # strictly decaying resonance

    def test_dissipativity_on_random_families(self):
        # quadratic-form argument: Im<Hf,f> = <Af,f> >= 0 for every family
        rng = np.random.default_rng(0)
        grid = SpatialGrid(1, 16, 8.0)
        for _ in range(200):
            V = rng.standard_normal((3, grid.size))
            fam = PotentialFamily(grid, V)
            A = -np.abs(rng.standard_normal((3, 3)))
            A = 0.5 * (A + A.T)
            np.fill_diagonal(A, 0.0)
            np.fill_diagonal(A, -A.sum(axis=1))
            model = MarkovModel(A)
            report = eigen_analysis(assemble_h(fam, model))
            assert report.min_imag >= -1e-8 * report.norm


class TestKatoBirman:
    def test_zero_potential_gives_identity(self):
        grid = SpatialGrid(1, 16, 8.0)
        fam = PotentialFamily(grid, np.zeros((2, grid.size)))
        kb = assemble_kb(fam, two_state_model(), lam=-1.0 - 1.0j)
        np.testing.assert_allclose(kb.KB, np.eye(32), atol=1e-12)
        assert kb.min_singular_value() == pytest.approx(1.0)

    def test_large_lambda_approaches_identity(self):
        grid = SpatialGrid(1, 32, 12.0)
        fam = sech_family(grid, m=2, contrast=1.0)
        kb = assemble_kb(fam, two_state_model(), lam=-1e4j)
        assert np.linalg.norm(kb.KB - np.eye(64), 2) <= 1e-2

    def test_upper_half_plane_rejected(self):
        grid = SpatialGrid(1, 16, 8.0)
        fam = sech_family(grid, m=2)
        with pytest.raises(ValueError):
            assemble_kb(fam, two_state_model(), lam=1.0 + 0.5j)

    def test_scan_positive_min_singular_values(self):
        grid = SpatialGrid(1, 32, 12.0)
        fam = sech_family(grid, m=2, contrast=1.0)
        scan = kb_scan(fam, two_state_model(), default_lambda_grid(n_re=7, n_im=3))
        assert scan["min_singular_values"].size == 21
        assert scan["global_min"] > 0.0

    def test_kb_inverse_consistency(self):
        # (I - v2 R_V v1) must invert KB
        grid = SpatialGrid(1, 16, 8.0)
        fam = sech_family(grid, m=2, contrast=0.7)
        model = two_state_model()
        lam = -2.0 - 1.5j
        kb = assemble_kb(fam, model, lam)
        inv = np.linalg.inv(kb.KB)
        from stochnls.grid import dense_laplacian as dl
        from stochnls.potential import split

        H0 = np.kron(np.eye(2), dl(grid)).astype(complex) \
            + 1j * np.kron(model.A, np.eye(grid.size))
        w = split(fam)
        RV = np.linalg.inv(H0 + np.diag(fam.V.reshape(-1)) - lam * np.eye(32))
        direct = np.eye(32) - w.v2.reshape(-1)[:, None] * RV * w.v1.reshape(-1)[None, :]
        assert np.max(np.abs(direct - inv)) <= 1e-6


class TestResolventIdentity:
    def test_zero_potential_machine_zero(self):
        grid = SpatialGrid(1, 16, 8.0)
        fam = PotentialFamily(grid, np.zeros((2, grid.size)))
        assert resolvent_identity_residual(fam, two_state_model(), -1.0 - 1.0j) <= 1e-13

    def test_random_family(self):
        rng = np.random.default_rng(1)
        grid = SpatialGrid(1, 16, 8.0)
        fam = PotentialFamily(grid, 0.5 * rng.standard_normal((2, grid.size)))
        res = resolvent_identity_residual(fam, two_state_model(), -1.0 - 1.0j)
        assert res <= 1e-8

    def test_embedded_real_lambda_with_dissipation(self):
        grid = SpatialGrid(1, 32, 12.0)
        fam = sech_family(grid, m=2, contrast=0.5)
        res = resolvent_identity_residual(fam, two_state_model(), 10.0 + 0.0j)
        assert res <= 1e-6


class TestCsvWriters:
    def test_spectrum_and_scan_files(self, tmp_path):
        grid = SpatialGrid(1, 16, 8.0)
        fam = sech_family(grid, m=2, contrast=1.0)
        model = two_state_model()
        report = eigen_analysis(assemble_h(fam, model))
        spath = tmp_path / "spectrum.csv"
        write_spectrum_csv(spath, report)
        lines = spath.read_text().strip().split("\n")
        assert lines[0] == "re,im,localization"
        assert len(lines) == 1 + 32
        scan = kb_scan(fam, model, default_lambda_grid(n_re=3, n_im=2))
        kpath = tmp_path / "scan.csv"
        write_scan_csv(kpath, scan)
        klines = kpath.read_text().strip().split("\n")
        assert klines[0] == "re_lambda,im_lambda,min_singular_value"
        assert len(klines) == 7
