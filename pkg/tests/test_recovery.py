import numpy as np
import pytest

from irsce.channels import CorrelationSpec, SystemDims, derive_cascaded, \
    sample_channels
from irsce.errors import (DegenerateChannelError, IdentifiabilityError,
                          RankDeficientError)
from irsce.recovery import (build_phase2_system, build_stacked_observations,
                            certify_random_schedule, coefficient_counts,
                            rank_check, recover_antenna_ratios,
                            recover_phase1_gains, recover_typical_by_instant,
                            recover_typical_pinv)
from irsce.schedules import (build_phase1_schedule, build_schedule,
                             min_durations, synthesize_observations)


def _noiseless_setup(m, n, k, seed, tau1=None, tau2=None, power=2.0,
                     sched_seed=0):
    dims = SystemDims(m, n, k)
    spec = CorrelationSpec.exponential(dims, 0.5)
    ch = sample_channels(dims, spec, seed)
    casc = derive_cascaded(ch)
    sched = build_schedule(dims, tau1, tau2, power, seed=sched_seed)
    obs = synthesize_observations(ch, casc, sched, 0.0)
    return dims, casc, sched, obs


def _true_gains(casc, sched):
    # composite gain of element n at antenna m under the fixed pilot:
    # amplitude * (antenna m's row for element n) . base_pilot
    return sched.amplitude * np.einsum("mnk,k->nm", casc.by_antenna,
                                       sched.base_pilot)


class TestPhase1Gains:
    def test_exact_recovery_random(self):
        _, casc, sched, obs = _noiseless_setup(4, 4, 3, seed=21)
        gains = recover_phase1_gains(obs.y1, sched)
        want = _true_gains(casc, sched)
        assert np.linalg.norm(gains - want) <= 1e-10 * np.linalg.norm(want)

    def test_exact_recovery_overdetermined(self):
        _, casc, sched, obs = _noiseless_setup(4, 4, 3, seed=22, tau1=8)
        gains = recover_phase1_gains(obs.y1, sched)
        want = _true_gains(casc, sched)
        assert np.linalg.norm(gains - want) <= 1e-10 * np.linalg.norm(want)

    def test_zero_observations_zero_gains(self):
        dims = SystemDims(3, 2, 2)
        sched = build_schedule(dims, pilot_power=1.0)
        gains = recover_phase1_gains(np.zeros((2, 3), dtype=complex), sched)
        assert np.all(gains == 0)

    def test_non_orthogonal_falls_back_to_lstsq(self):
        import dataclasses
        dims = SystemDims(4, 3, 2)
        spec = CorrelationSpec.exponential(dims, 0.5)
        ch = sample_channels(dims, spec, 23)
        casc = derive_cascaded(ch)
        sched = build_schedule(dims, tau1=5, pilot_power=2.0)
        # perturb one reflection phase so the DFT shortcut is invalid but
        # the system stays full rank and consistent
        refl = sched.reflections.copy()
        refl[0, 0] *= np.exp(0.3j)
        crooked = dataclasses.replace(sched, reflections=refl)
        obs = synthesize_observations(ch, casc, crooked, 0.0)
        gains = recover_phase1_gains(obs.y1, crooked)
        want = _true_gains(casc, crooked)
        assert np.linalg.norm(gains - want) <= 1e-8 * np.linalg.norm(want)

    def test_rank_deficient_reflections_error(self):
        import dataclasses
        dims = SystemDims(3, 2, 2)
        sched = build_schedule(dims, pilot_power=1.0)
        refl = np.ones_like(sched.reflections)
        broken = dataclasses.replace(sched, reflections=refl)
        with pytest.raises(RankDeficientError):
            recover_phase1_gains(np.ones((2, 3), dtype=complex), broken)


class TestAntennaRatios:
    def test_proportional_columns(self):
        rng = np.random.default_rng(0)
        col = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        factors = np.array([1.0, 2.0 + 1j, -0.5j])
        gains = np.stack([f * col for f in factors], axis=1)
        ratios = recover_antenna_ratios(gains)
        for m, f in enumerate(factors):
            assert np.allclose(ratios[m], f)

    def test_zero_denominator_names_element(self):
        gains = np.ones((5, 3), dtype=complex)
        gains[2, 0] = 0.0
        with pytest.raises(DegenerateChannelError, match=r"\[2\]"):
            recover_antenna_ratios(gains)

    def test_round_trip_matches_ground_truth(self):
        _, casc, sched, obs = _noiseless_setup(5, 4, 3, seed=24)
        ratios = recover_antenna_ratios(recover_phase1_gains(obs.y1, sched))
        err = np.linalg.norm(ratios - casc.antenna_ratios)
        assert err <= 1e-10 * np.linalg.norm(casc.antenna_ratios)
        assert np.all(ratios[0] == 1.0)


class TestPhase2System:
    def test_entry_formula_random_tuples(self):
        dims, casc, sched, _ = _noiseless_setup(4, 3, 3, seed=25, tau2=4)
        system = build_phase2_system(casc.antenna_ratios, sched)
        rng = np.random.default_rng(1)
        for _ in range(20):
            i = rng.integers(sched.tau2)
            m = rng.integers(dims.M)
            n = rng.integers(dims.N)
            k = rng.integers(dims.K)
            want = (sched.amplitude * sched.phase2_reflections[i, n]
                    * sched.phase2_pilots[i, k] * casc.antenna_ratios[m, n])
            assert system[i * dims.M + m, n * dims.K + k] == pytest.approx(want)

    def test_bottom_block_is_scaled_base_pilot(self):
        dims, casc, sched, _ = _noiseless_setup(4, 3, 2, seed=26)
        system = build_phase2_system(casc.antenna_ratios, sched)
        bottom = system[sched.tau2 * dims.M:]
        for n in range(dims.N):
            block = bottom[n, n * dims.K:(n + 1) * dims.K]
            assert np.allclose(block, sched.amplitude * sched.base_pilot)
            rest = np.delete(bottom[n], np.s_[n * dims.K:(n + 1) * dims.K])
            assert np.all(rest == 0)

    def test_tau2_zero_bottom_only(self):
        dims = SystemDims(2, 3, 1)
        sched = build_schedule(dims, tau1=3, tau2=0, pilot_power=1.0)
        ratios = np.ones((2, 3), dtype=complex)
        system = build_phase2_system(ratios, sched)
        assert system.shape == (3, 3)

    def test_single_antenna_rows(self):
        # with one antenna every ratio is 1, so row i of the top block is
        # [phi_{1,i} x_{i,1}, ..., phi_{N,i} x_{i,K}] times the amplitude
        dims, casc, sched, _ = _noiseless_setup(1, 3, 2, seed=27, tau2=3)
        system = build_phase2_system(np.ones((1, 3), dtype=complex), sched)
        for i in range(3):
            want = (sched.amplitude * sched.phase2_reflections[i][:, None]
                    * sched.phase2_pilots[i][None, :]).reshape(-1)
            assert np.allclose(system[i], want)


class TestRankCheck:
    def test_zero_matrix(self):
        rank, ok = rank_check(np.zeros((4, 3), dtype=complex))
        assert rank == 0 and not ok

    def test_identifiable_at_minimum_tall_regime(self):
        _, casc, sched, _ = _noiseless_setup(6, 4, 3, seed=28)
        system = build_phase2_system(casc.antenna_ratios, sched)
        rank, ok = rank_check(system)
        assert ok and rank == 12

    def test_sharp_below_minimum(self):
        # one instant short of the minimum leaves fewer independent
        # equations than unknowns in both antenna regimes; (10, 2, 3) has
        # enough rows but too few distinct pilot projections per element
        for m, n, k, seed in [(6, 4, 3, 31), (8, 8, 4, 32), (2, 4, 2, 33),
                              (4, 16, 3, 34), (10, 2, 3, 35)]:
            dims = SystemDims(m, n, k)
            _, tau2_star, _ = min_durations(dims)
            if tau2_star < 2:
                continue
            spec = CorrelationSpec.exponential(dims, 0.5)
            casc = derive_cascaded(sample_channels(dims, spec, seed))
            plan1 = build_phase1_schedule(dims, dims.N)
            short = tau2_star - 1
            pilots = np.exp(2j * np.pi * np.random.default_rng(seed)
                            .random((short, k)))
            refl = np.exp(2j * np.pi * np.random.default_rng(seed + 1)
                          .random((short, n)))
            from irsce.schedules import PhasePlan, assemble_schedule
            sched = assemble_schedule(plan1, PhasePlan(pilots, refl), 1.0)
            system = build_phase2_system(casc.antenna_ratios, sched)
            rank, ok = rank_check(system)
            assert not ok and rank < k * n


class TestTypicalRecovery:
    def test_per_instant_exact(self):
        dims, casc, sched, obs = _noiseless_setup(8, 4, 3, seed=41)
        gains = recover_phase1_gains(obs.y1, sched)
        ratios = recover_antenna_ratios(gains)
        typical = recover_typical_by_instant(obs.y2, ratios, gains[:, 0], sched)
        err = np.linalg.norm(typical - casc.typical_rows)
        assert err <= 1e-8 * np.linalg.norm(casc.typical_rows)

    def test_per_instant_k2_single_phase2_instant(self):
        dims, casc, sched, obs = _noiseless_setup(5, 3, 2, seed=42)
        assert sched.tau2 == 1
        gains = recover_phase1_gains(obs.y1, sched)
        ratios = recover_antenna_ratios(gains)
        typical = recover_typical_by_instant(obs.y2, ratios, gains[:, 0], sched)
        err = np.linalg.norm(typical - casc.typical_rows)
        assert err <= 1e-8 * np.linalg.norm(casc.typical_rows)

    def test_per_instant_zero_observations(self):
        dims, casc, sched, obs = _noiseless_setup(8, 4, 3, seed=43)
        ratios = casc.antenna_ratios
        typical = recover_typical_by_instant(np.zeros_like(obs.y2), ratios,
                                             np.zeros(dims.N, dtype=complex),
                                             sched)
        assert np.allclose(typical, 0.0, atol=1e-12)

    def test_per_instant_needs_tall_ratios(self):
        dims, casc, sched, obs = _noiseless_setup(2, 4, 2, seed=44)
        with pytest.raises(RankDeficientError):
            recover_typical_by_instant(obs.y2, casc.antenna_ratios,
                                       np.zeros(4, dtype=complex), sched)

    def test_pinv_exact_wide_regime(self):
        dims, casc, sched, obs = _noiseless_setup(2, 4, 2, seed=45,
                                                  sched_seed=7)
        gains = recover_phase1_gains(obs.y1, sched)
        ratios = recover_antenna_ratios(gains)
        system = build_phase2_system(ratios, sched)
        stacked = build_stacked_observations(obs.y2, gains[:, 0])
        typical = recover_typical_pinv(system, stacked, dims.K)
        err = np.linalg.norm(typical - casc.typical_rows)
        assert err <= 1e-8 * np.linalg.norm(casc.typical_rows)

    def test_paths_agree_where_both_apply(self):
        for seed in range(5):
            dims, casc, sched, obs = _noiseless_setup(8, 4, 3, seed=60 + seed)
            gains = recover_phase1_gains(obs.y1, sched)
            ratios = recover_antenna_ratios(gains)
            system = build_phase2_system(ratios, sched)
            stacked = build_stacked_observations(obs.y2, gains[:, 0])
            a = recover_typical_pinv(system, stacked, dims.K)
            b = recover_typical_by_instant(obs.y2, ratios, gains[:, 0], sched)
            assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(a)

    def test_pinv_linear_in_rhs(self):
        dims, casc, sched, obs = _noiseless_setup(8, 4, 3, seed=46)
        gains = recover_phase1_gains(obs.y1, sched)
        ratios = recover_antenna_ratios(gains)
        system = build_phase2_system(ratios, sched)
        stacked = build_stacked_observations(obs.y2, gains[:, 0])
        a = recover_typical_pinv(system, stacked, dims.K)
        b = recover_typical_pinv(system, (2 - 1j) * stacked, dims.K)
        assert np.allclose(b, (2 - 1j) * a, rtol=1e-10)

    def test_pinv_rank_deficient_rejected(self):
        dims, casc, sched, obs = _noiseless_setup(6, 4, 3, seed=47)
        system = build_phase2_system(casc.antenna_ratios, sched)
        stacked = build_stacked_observations(obs.y2, np.zeros(4, dtype=complex))
        # dropping the anchor rows leaves fewer equations than unknowns
        with pytest.raises(IdentifiabilityError):
            recover_typical_pinv(system[:dims.M * sched.tau2 - 1],
                                 stacked[:dims.M * sched.tau2 - 1], dims.K)


class TestCertification:
    def test_hundred_seeds_full_rank_first_try(self):
        dims = SystemDims(2, 4, 2)
        spec = CorrelationSpec.exponential(dims, 0.5)
        plan1 = build_phase1_schedule(dims, dims.N)
        _, tau2_star, _ = min_durations(dims)
        failures = 0
        for seed in range(100):
            casc = derive_cascaded(sample_channels(dims, spec, 500 + seed))
            _, _, attempts = certify_random_schedule(
                dims, casc.antenna_ratios, plan1, tau2_star, 1.0, seed=seed)
            failures += attempts > 0
        assert failures <= 1

    def test_exhausted_attempts_raise(self):
        dims = SystemDims(2, 4, 2)
        plan1 = build_phase1_schedule(dims, dims.N)
        # rank-one ratios make every random schedule uncertifiable
        ratios = np.ones((2, 4), dtype=complex)
        ratios[1] = 2.0
        with pytest.raises(IdentifiabilityError):
            certify_random_schedule(dims, ratios, plan1, 2, 1.0, seed=0,
                                    max_attempts=3)


def test_coefficient_counts():
    dims = SystemDims(8, 4, 3)
    full, reduced = coefficient_counts(dims)
    assert full == 96
    assert reduced == 3 * 4 + 7 * 4
    assert reduced < full


def test_noiseless_round_trip_grid():
    # covers both antenna regimes at minimum durations
    cases = [(8, 4, 3), (6, 6, 2), (2, 4, 2), (4, 16, 3)]
    for m, n, k in cases:
        dims = SystemDims(m, n, k)
        spec = CorrelationSpec.exponential(dims, 0.5)
        for seed in range(3):
            ch = sample_channels(dims, spec, 700 + seed)
            casc = derive_cascaded(ch)
            sched = build_schedule(dims, pilot_power=1.5, seed=seed)
            obs = synthesize_observations(ch, casc, sched, 0.0)
            gains = recover_phase1_gains(obs.y1, sched)
            ratios = recover_antenna_ratios(gains)
            system = build_phase2_system(ratios, sched)
            stacked = build_stacked_observations(obs.y2, gains[:, 0])
            typical = recover_typical_pinv(system, stacked, dims.K)
            assert np.linalg.norm(ratios - casc.antenna_ratios) <= \
                1e-8 * np.linalg.norm(casc.antenna_ratios)
            assert np.linalg.norm(typical - casc.typical_rows) <= \
                1e-8 * np.linalg.norm(casc.typical_rows)
