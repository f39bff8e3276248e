import numpy as np
import pytest

from irsce.channels import CorrelationSpec, SystemDims, derive_cascaded, \
    sample_channels
from irsce.lmmse import (assemble_full_channel, build_covariances,
                         lmmse_phase1_gains, lmmse_typical,
                         noise_var_for_phase1_snr, phase1_signal_power,
                         run_lmmse_pipeline)
from irsce.recovery import (build_phase2_system, build_stacked_observations,
                            recover_antenna_ratios, recover_phase1_gains,
                            recover_typical_pinv)
from irsce.schedules import build_schedule, synthesize_observations


def _setup(m, n, k, rho=0.5, power=1.0):
    dims = SystemDims(m, n, k)
    spec = CorrelationSpec.exponential(dims, rho)
    cov = build_covariances(spec, np.ones(k, dtype=np.complex128), power)
    sched = build_schedule(dims, pilot_power=power)
    return dims, spec, cov, sched


class TestCovariances:
    def test_uncorrelated_unit_case_by_hand(self):
        # identity correlations with the all-ones pilot: the pair moments
        # collapse to Kronecker deltas, so the gain covariance is p*K*I and
        # the stacked covariance is block diagonal with unit diagonals
        dims = SystemDims(3, 4, 5)
        spec = CorrelationSpec.exponential(dims, 0.0)
        p = 2.0
        cov = build_covariances(spec, np.ones(5, dtype=np.complex128), p)
        assert np.allclose(cov.phase1_gain_cov, p * 5 * np.eye(4), atol=1e-12)
        assert np.allclose(cov.typical_cov, np.eye(20), atol=1e-12)

    def test_zero_gain_all_zero(self):
        dims = SystemDims(3, 4, 2)
        spec = CorrelationSpec.exponential(dims, 0.5, irs_bs_gain=0.0)
        cov = build_covariances(spec, np.ones(2, dtype=np.complex128), 1.0)
        assert np.all(cov.phase1_gain_cov == 0)
        assert np.all(cov.typical_cov == 0)

    def test_hermitian_psd(self):
        _, _, cov, _ = _setup(4, 6, 3, rho=0.7)
        for mat in (cov.phase1_gain_cov, cov.typical_cov):
            assert np.allclose(mat, mat.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(mat).min() >= -1e-10

    def test_gain_covariance_monte_carlo(self):
        # brute-force moment oracle: sample gains over many channel draws
        # and compare the empirical covariance with the analytic one
        dims, spec, cov, sched = _setup(4, 4, 3, rho=0.6, power=2.0)
        draws = 10_000
        acc = np.zeros((dims.N, dims.N), dtype=np.complex128)
        for i in range(draws):
            casc = derive_cascaded(sample_channels(dims, spec, 10_000 + i))
            gains = sched.amplitude * casc.by_antenna[0] @ sched.base_pilot
            acc += np.outer(gains, gains.conj())
        acc /= draws
        rel = np.linalg.norm(acc - cov.phase1_gain_cov) / \
            np.linalg.norm(cov.phase1_gain_cov)
        assert rel < 0.05

    def test_typical_cov_monte_carlo(self):
        dims, spec, cov, sched = _setup(2, 3, 2, rho=0.4)
        draws = 10_000
        acc = np.zeros((6, 6), dtype=np.complex128)
        for i in range(draws):
            casc = derive_cascaded(sample_channels(dims, spec, 30_000 + i))
            stacked = casc.typical_rows.reshape(-1)
            acc += np.outer(stacked, stacked.conj())
        acc /= draws
        rel = np.linalg.norm(acc - cov.typical_cov) / np.linalg.norm(cov.typical_cov)
        assert rel < 0.05

    def test_bad_pilot_length(self):
        dims = SystemDims(3, 4, 2)
        spec = CorrelationSpec.exponential(dims, 0.5)
        with pytest.raises(ValueError):
            build_covariances(spec, np.ones(3, dtype=np.complex128), 1.0)


class TestPhase1Lmmse:
    def test_huge_noise_shrinks_to_zero(self):
        dims, spec, cov, sched = _setup(4, 4, 2)
        ch = sample_channels(dims, spec, 1)
        casc = derive_cascaded(ch)
        noise_var = 1e9 * phase1_signal_power(cov)
        obs = synthesize_observations(ch, casc, sched, noise_var, seed=2)
        gains, _ = lmmse_phase1_gains(obs.y1, sched, cov, noise_var)
        scale = np.linalg.norm(sched.amplitude * casc.by_antenna[0] @ sched.base_pilot)
        assert np.linalg.norm(gains) < 1e-6 * scale

    def test_vanishing_noise_matches_matched_filter(self):
        dims, spec, cov, sched = _setup(4, 4, 2)
        ch = sample_channels(dims, spec, 3)
        casc = derive_cascaded(ch)
        noise_var = 1e-12 * phase1_signal_power(cov)
        obs = synthesize_observations(ch, casc, sched, noise_var, seed=4)
        lmmse, _ = lmmse_phase1_gains(obs.y1, sched, cov, noise_var)
        exact = recover_phase1_gains(obs.y1, sched)
        assert np.linalg.norm(lmmse - exact) <= 1e-4 * np.linalg.norm(exact)

    def test_error_trace_matches_monte_carlo(self):
        dims, spec, cov, sched = _setup(4, 4, 3)
        noise_var = noise_var_for_phase1_snr(cov, 10.0)
        trials = 2000
        total = 0.0
        trace = None
        for t in range(trials):
            ch = sample_channels(dims, spec, 40_000 + t)
            casc = derive_cascaded(ch)
            obs = synthesize_observations(ch, casc, sched, noise_var, seed=t)
            gains, trace = lmmse_phase1_gains(obs.y1, sched, cov, noise_var)
            truth = sched.amplitude * np.einsum("mnk,k->nm", casc.by_antenna,
                                                sched.base_pilot)
            total += np.mean(np.sum(np.abs(gains - truth) ** 2, axis=0))
        assert total / trials == pytest.approx(trace, rel=0.10)

    def test_never_worse_than_plain_least_squares(self):
        # paired one-sided comparison with a 3-sigma allowance
        dims, spec, cov, sched = _setup(4, 4, 2)
        noise_var = noise_var_for_phase1_snr(cov, 0.0)
        phi = sched.phase1_reflections
        pinv = np.linalg.pinv(phi)
        diffs = []
        for t in range(10_000):
            ch = sample_channels(dims, spec, 60_000 + t)
            casc = derive_cascaded(ch)
            obs = synthesize_observations(ch, casc, sched, noise_var, seed=t)
            truth = sched.amplitude * np.einsum("mnk,k->nm", casc.by_antenna,
                                                sched.base_pilot)
            est_lmmse, _ = lmmse_phase1_gains(obs.y1, sched, cov, noise_var)
            est_ls = pinv @ obs.y1
            diffs.append(np.sum(np.abs(est_ls - truth) ** 2)
                         - np.sum(np.abs(est_lmmse - truth) ** 2))
        diffs = np.array(diffs)
        margin = 3 * diffs.std(ddof=1) / np.sqrt(diffs.size)
        assert diffs.mean() > -margin

    def test_zero_noise_rejected(self):
        dims, spec, cov, sched = _setup(3, 3, 2)
        with pytest.raises(ValueError):
            lmmse_phase1_gains(np.zeros((3, 3), dtype=complex), sched, cov, 0.0)


class TestTypicalLmmse:
    def test_zero_rhs_gives_zero(self):
        dims, spec, cov, sched = _setup(4, 4, 2)
        casc = derive_cascaded(sample_channels(dims, spec, 5))
        system = build_phase2_system(casc.antenna_ratios, sched)
        stacked = np.zeros(system.shape[0], dtype=complex)
        typical = lmmse_typical(stacked, system, cov, 1.0, sched.tau2)
        assert np.all(typical == 0)

    def test_vanishing_noise_matches_exact_recovery(self):
        for m, n, k, sched_seed in [(8, 4, 3, 0), (2, 4, 2, 7)]:
            dims = SystemDims(m, n, k)
            spec = CorrelationSpec.exponential(dims, 0.5)
            cov = build_covariances(spec, np.ones(k, dtype=np.complex128), 1.0)
            sched = build_schedule(dims, pilot_power=1.0, seed=sched_seed)
            ch = sample_channels(dims, spec, 6)
            casc = derive_cascaded(ch)
            noise_var = 1e-12 * phase1_signal_power(cov)
            obs = synthesize_observations(ch, casc, sched, noise_var, seed=8)
            result = run_lmmse_pipeline(obs, sched, cov, dims)
            exact_gains = recover_phase1_gains(obs.y1, sched)
            ratios = recover_antenna_ratios(exact_gains)
            system = build_phase2_system(ratios, sched)
            stacked = build_stacked_observations(obs.y2, exact_gains[:, 0])
            exact = recover_typical_pinv(system, stacked, dims.K)
            err = np.linalg.norm(result.typical_hat - exact)
            assert err <= 1e-4 * np.linalg.norm(exact)

    def test_beats_plain_pinv_at_unit_snr(self):
        # at noise comparable to the signal the Bayesian solve must beat
        # the unregularized pseudo-inverse on average
        dims, spec, cov, sched = _setup(6, 4, 3)
        noise_var = phase1_signal_power(cov)  # 0 dB
        lmmse_err = pinv_err = truth_norm = 0.0
        for t in range(1000):
            ch = sample_channels(dims, spec, 80_000 + t)
            casc = derive_cascaded(ch)
            obs = synthesize_observations(ch, casc, sched, noise_var, seed=t)
            system = build_phase2_system(casc.antenna_ratios, sched)
            stacked = build_stacked_observations(
                obs.y2, sched.amplitude * casc.by_antenna[0] @ sched.base_pilot)
            est = lmmse_typical(stacked, system, cov, noise_var, sched.tau2)
            sol, *_ = np.linalg.lstsq(system, stacked, rcond=None)
            truth = casc.typical_rows
            lmmse_err += np.sum(np.abs(est - truth) ** 2)
            pinv_err += np.sum(np.abs(sol.reshape(dims.N, dims.K) - truth) ** 2)
            truth_norm += np.sum(np.abs(truth) ** 2)
        assert lmmse_err / truth_norm < pinv_err / truth_norm

    def test_non_finite_rejected(self):
        dims, spec, cov, sched = _setup(4, 4, 2)
        casc = derive_cascaded(sample_channels(dims, spec, 9))
        system = build_phase2_system(casc.antenna_ratios, sched)
        stacked = np.full(system.shape[0], np.nan, dtype=complex)
        with pytest.raises(ValueError):
            lmmse_typical(stacked, system, cov, 1.0, sched.tau2)


class TestAssemble:
    def test_exact_inputs_exact_output(self):
        dims = SystemDims(5, 3, 2)
        spec = CorrelationSpec.exponential(dims, 0.5)
        casc = derive_cascaded(sample_channels(dims, spec, 10))
        full = assemble_full_channel(casc.typical_rows, casc.antenna_ratios)
        err = np.abs(full - casc.by_antenna) / np.abs(casc.by_antenna)
        assert np.max(err) < 1e-12

    def test_first_antenna_passes_through(self):
        rng = np.random.default_rng(0)
        typical = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        ratios = np.ones((4, 3), dtype=complex)
        ratios[1:] = rng.standard_normal((3, 3))
        full = assemble_full_channel(typical, ratios)
        assert np.array_equal(full[0], typical)

    def test_pipeline_result_ratio_row(self):
        dims, spec, cov, sched = _setup(4, 4, 2)
        ch = sample_channels(dims, spec, 11)
        casc = derive_cascaded(ch)
        noise_var = noise_var_for_phase1_snr(cov, 15.0)
        obs = synthesize_observations(ch, casc, sched, noise_var, seed=12)
        result = run_lmmse_pipeline(obs, sched, cov, dims)
        assert np.all(result.ratios_hat[0] == 1.0)
        assert result.full_hat.shape == (4, 4, 2)
        assert result.phase1_error_cov_trace > 0
