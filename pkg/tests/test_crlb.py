"""Fisher information and the calibration-coefficient variance bound."""

import numpy as np
import pytest
from oracles import finite_difference_worst_error, random_crlb_instance

from recical.crlb import (
    CrlbInputs,
    crlb_coefficients,
    fisher_information,
    pair_statistics,
)
from recical.errors import IdentifiabilityError
from recical.estimators import EmSettings, em_calibrate, score_mse
from recical.frontend import FrontEnd, deterministic_frontend, true_coefficients
from recical.geometry import build_geometry, draw_channel, draw_coupling, full_mask, reduced_mask
from recical.sounding import sound


def unit_ref_frontend(tx, rx, ref):
    tx = np.asarray(tx, dtype=complex)
    rx = np.asarray(rx, dtype=complex)
    return FrontEnd(tx / tx[ref], rx / rx[ref], ref)


class TestPairStatistics:
    def setup_method(self):
        self.hbar = np.array([[np.nan, 0.07 + 0.02j], [0.07 + 0.02j, np.nan]])
        self.mask = full_mask(2)

    def test_zero_multipath_gives_white_covariance(self):
        fe = unit_ref_frontend([1.0, 0.8 + 0.1j], [1.0, 1.2 - 0.3j], 0)
        inputs = CrlbInputs(fe, self.hbar, 0.0, 1e-3, self.mask)
        _, cov = pair_statistics(inputs, 0, 1)
        assert cov == pytest.approx(1e-3 * np.eye(2))

    def test_unit_gains_structure(self):
        fe = unit_ref_frontend([1.0, 1.0], [1.0, 1.0], 0)
        inputs = CrlbInputs(fe, self.hbar, 2e-4, 1e-3, self.mask)
        mu, cov = pair_statistics(inputs, 0, 1)
        assert mu == pytest.approx(self.hbar[0, 1] * np.ones(2))
        assert cov == pytest.approx(2e-4 * np.ones((2, 2)) + 1e-3 * np.eye(2))

    def test_covariance_positive_definite_with_noise(self):
        fe = unit_ref_frontend([1.0, 0.5 + 0.9j], [1.0, 1.4 + 0.2j], 0)
        inputs = CrlbInputs(fe, self.hbar, 5e-3, 1e-4, self.mask)
        _, cov = pair_statistics(inputs, 0, 1)
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() >= 1e-4 - 1e-15

    def test_same_antenna_rejected(self):
        fe = unit_ref_frontend([1.0, 1.0], [1.0, 1.0], 0)
        inputs = CrlbInputs(fe, self.hbar, 0.0, 1e-3, self.mask)
        with pytest.raises(ValueError):
            pair_statistics(inputs, 1, 1)


class TestFisherInformation:
    @pytest.mark.parametrize("seed", range(6))
    def test_derivatives_match_finite_differences(self, seed):
        inputs = random_crlb_instance(4, seed)
        M = 4
        worst = 0.0
        for n in range(M):
            for m in range(n + 1, M):
                worst = max(worst, finite_difference_worst_error(inputs, n, m))
        assert worst < 1e-5

    def test_symmetric_positive_semidefinite(self):
        inputs = random_crlb_instance(5, seed=11)
        fim = fisher_information(inputs)
        assert fim == pytest.approx(fim.T)
        eigs = np.linalg.eigvalsh(fim)
        assert eigs.min() >= -1e-8 * np.linalg.norm(fim)

    def test_doubling_noise_halves_information_without_multipath(self):
        base = random_crlb_instance(4, seed=3, sigma2=0.0, noise_var=1e-3)
        doubled = CrlbInputs(base.frontend, base.coupling_mean, 0.0, 2e-3, base.mask)
        assert fisher_information(doubled) == pytest.approx(0.5 * fisher_information(base))

    def test_zero_noise_rejected(self):
        inputs = random_crlb_instance(3, seed=4, sigma2=1e-4, noise_var=0.0)
        with pytest.raises(ValueError):
            fisher_information(inputs)

    def test_unnormalized_reference_rejected(self):
        fe = FrontEnd(np.array([2.0 + 0j, 1.0]), np.array([1.0 + 0j, 1.0]), 0)
        with pytest.raises(ValueError):
            CrlbInputs(fe, np.ones((2, 2), complex), 0.0, 1e-3, full_mask(2))


class TestCrlbCoefficients:
    def test_bound_positive_and_ref_undefined(self):
        inputs = random_crlb_instance(5, seed=7)
        report = crlb_coefficients(inputs)
        ref = inputs.frontend.ref
        others = np.arange(5) != ref
        assert np.all(report.bound[others] > 0)
        assert np.isnan(report.bound[ref])
        assert report.fim_condition >= 1.0

    def test_invariant_to_coupling_phases(self, coupling):
        geom = build_geometry(2, 4)
        fe = deterministic_frontend(8, 3)
        mask = full_mask(8)
        h1 = draw_coupling(geom, coupling, np.random.default_rng(0))
        h2 = draw_coupling(geom, coupling, np.random.default_rng(99))
        r1 = crlb_coefficients(CrlbInputs(fe, h1, coupling.sigma2, 1e-6, mask))
        r2 = crlb_coefficients(CrlbInputs(fe, h2, coupling.sigma2, 1e-6, mask))
        others = np.arange(8) != 3
        assert r1.bound[others] == pytest.approx(r2.bound[others], rel=1e-10)

    def test_more_measurements_never_hurt(self, coupling):
        geom = build_geometry(3, 5)
        fe = deterministic_frontend(15, 7)
        hbar = draw_coupling(geom, coupling, np.random.default_rng(1))
        full = crlb_coefficients(CrlbInputs(fe, hbar, coupling.sigma2, 1e-7, full_mask(15))).bound
        reduced = crlb_coefficients(
            CrlbInputs(fe, hbar, coupling.sigma2, 1e-7, reduced_mask(geom, 1 / np.sqrt(2)))
        ).bound
        others = np.arange(15) != 7
        assert np.all(full[others] <= reduced[others] + 1e-10)

    def test_disconnected_measurements_not_identifiable(self):
        # two isolated pairs with no multipath: the per-pair means cannot pin
        # eight real parameters, so the information matrix is singular
        fe = unit_ref_frontend(np.ones(4), np.ones(4), 0)
        hbar = np.zeros((4, 4), complex)
        hbar[0, 1] = hbar[1, 0] = 0.1
        hbar[2, 3] = hbar[3, 2] = 0.1
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 1] = mask[1, 0] = True
        mask[2, 3] = mask[3, 2] = True
        inputs = CrlbInputs(fe, hbar, 0.0, 1e-4, mask)
        with pytest.raises(IdentifiabilityError):
            crlb_coefficients(inputs)

    def test_em_variance_reaches_bound_at_high_snr(self, coupling):
        # estimator-vs-bound oracle on the full-size array at low noise
        geom = build_geometry(4, 25)
        fe = deterministic_frontend(100, 37)
        c = true_coefficients(fe)
        hbar = draw_coupling(geom, coupling, np.random.default_rng(8))
        n0 = 1e-8
        estimates = []
        for t in range(200):
            rng = np.random.default_rng((15, t))
            h = draw_channel(geom, coupling, rng, coupling=hbar)
            data = sound(h, fe, n0, rng)
            estimates.append(em_calibrate(data, EmSettings(ref=37)))
        score = score_mse(estimates, c, 37)
        bound = crlb_coefficients(CrlbInputs(fe, hbar, coupling.sigma2, n0, full_mask(100))).bound
        for antenna in (0, 38):
            gap_db = 10 * np.log10(score.mse[antenna] / bound[antenna])
            assert abs(gap_db) < 1.0
