"""LMMSE estimation under receiver noise.

Phase I estimates each antenna's per-element composite gains with the
standard Bayesian linear estimator R A^H (A R A^H + noise)^-1 y, using the
analytic gain covariance implied by the fading model. Phase II applies the
same estimator to the stacked system built from the *estimated* antenna
ratios; the propagation of Phase I errors into that system is deliberately
ignored (the estimator treats the ratio matrix and the typical gains as
exact), which is accurate when Phase I is long or high powered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import CorrelationSpec, SystemDims
from .recovery import (build_phase2_system, build_stacked_observations,
                       recover_antenna_ratios)
from .schedules import ObservationSet, TrainingSchedule


@dataclass(frozen=True)
class CovarianceModel:
    """Analytic second moments used by the estimators.

    phase1_gain_cov: (N, N) covariance shared by every antenna's gain
        vector (the IRS-to-BS statistics are antenna independent).
    typical_cov: (K*N, K*N) covariance of the typical antenna's stacked
        rows, element-major / user-minor, in K x K blocks per element pair.
    pair_diag: (N, N, K); entry [c, l, k] is user k's cross-element moment
        E[t_kc conj(t_kl)], the diagonal of the (c, l) block before the
        IRS-to-BS factor is applied.
    """

    phase1_gain_cov: np.ndarray
    typical_cov: np.ndarray
    pair_diag: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.phase1_gain_cov.shape[0]

    @property
    def n_users(self) -> int:
        return self.pair_diag.shape[2]


@dataclass(frozen=True)
class LmmseResult:
    """Estimates from one noisy trial; ratios_hat row 0 is all ones."""

    gains_hat: np.ndarray
    ratios_hat: np.ndarray
    typical_hat: np.ndarray
    full_hat: np.ndarray
    phase1_error_cov_trace: float


def _validate_psd(mat: np.ndarray, name: str) -> np.ndarray:
    scale = float(np.max(np.abs(mat))) or 1.0
    if np.max(np.abs(mat - mat.conj().T)) > 1e-12 * scale:
        raise ValueError(f"{name} is not Hermitian within tolerance")
    mat = 0.5 * (mat + mat.conj().T)
    w = np.linalg.eigvalsh(mat)
    if w.min() < -1e-10 * max(w.max(), 0.0):
        raise ValueError(f"{name} is not PSD (min eigenvalue {w.min():.3e})")
    return mat


def build_covariances(spec: CorrelationSpec, base_pilot: np.ndarray,
                      pilot_power: float) -> CovarianceModel:
    """Covariances implied by the correlated CSCG fading model.

    With irs_pair[c, l] = E[r_c conj(r_l)] / irs_bs_gain (identical for
    every antenna) and pair_diag[c, l, k] = E[t_kc conj(t_kl)]:

      phase1_gain_cov[c, l] = p * irs_bs_gain * irs_pair[c, l]
                              * sum_k base_pilot[k]^2 * pair_diag[c, l, k]
      typical_cov block (c, l) = irs_bs_gain * irs_pair[c, l]
                                 * diag(pair_diag[c, l, :])

    The pilot quadratic form follows the fixed Phase I pilot, which this
    package always sets to the all-ones vector (making the form equal to
    its conjugated variant).
    """
    base_pilot = np.asarray(base_pilot, dtype=np.complex128)
    n_el = spec.n_elements
    n_usr = spec.n_users
    if base_pilot.shape != (n_usr,):
        raise ValueError("base_pilot must have one entry per user")

    s = spec.irs_corr_sqrt
    irs_pair = s.T @ s.conj()
    pair_diag = np.empty((n_el, n_el, n_usr), dtype=np.complex128)
    for k in range(n_usr):
        sk = spec.user_corr_sqrts[k]
        pair_diag[:, :, k] = spec.user_irs_gains[k] * (sk.T @ sk.conj())

    quad = pair_diag @ (base_pilot ** 2)
    gain_cov = pilot_power * spec.irs_bs_gain * irs_pair * quad

    blocks = spec.irs_bs_gain * irs_pair[:, :, None] * pair_diag
    typical_cov = np.zeros((n_el * n_usr, n_el * n_usr), dtype=np.complex128)
    for k in range(n_usr):
        typical_cov[k::n_usr, k::n_usr] = blocks[:, :, k]

    gain_cov = _validate_psd(gain_cov, "phase1 gain covariance")
    typical_cov = _validate_psd(typical_cov, "typical-row covariance")
    return CovarianceModel(phase1_gain_cov=gain_cov, typical_cov=typical_cov,
                           pair_diag=pair_diag)


def phase1_signal_power(cov: CovarianceModel) -> float:
    """Mean received power per antenna per Phase I instant under
    unit-modulus orthogonal reflections (equals the gain-covariance trace)."""
    return float(np.trace(cov.phase1_gain_cov).real)


def noise_var_for_phase1_snr(cov: CovarianceModel, snr_db: float) -> float:
    """Noise variance that puts the per-antenna Phase I SNR at snr_db."""
    return phase1_signal_power(cov) / 10 ** (snr_db / 10)


def lmmse_phase1_gains(y1: np.ndarray, sched: TrainingSchedule,
                       cov: CovarianceModel,
                       noise_var: float) -> tuple[np.ndarray, float]:
    """Per-antenna Bayesian estimate of the Phase I gains, plus the analytic
    mean-squared error tr(R - R PHI^H (PHI R PHI^H + s2 I)^-1 PHI R) of one
    antenna's estimate (identical for all antennas).

    Requires noise_var > 0; noiseless data belongs to the exact-recovery
    routines.
    """
    if noise_var <= 0:
        raise ValueError("lmmse_phase1_gains needs noise_var > 0")
    phi = sched.phase1_reflections
    r = cov.phase1_gain_cov
    mix = phi @ r
    inner = mix @ phi.conj().T + noise_var * np.eye(phi.shape[0])
    solved = np.linalg.solve(inner, np.column_stack([y1, mix]))
    gains = mix.conj().T @ solved[:, :y1.shape[1]]
    err_cov = r - mix.conj().T @ solved[:, y1.shape[1]:]
    return gains, float(np.trace(err_cov).real)


def lmmse_typical(stacked: np.ndarray, system_hat: np.ndarray,
                  cov: CovarianceModel, noise_var: float, tau2: int,
                  ridge_scale: float = 1e-10) -> np.ndarray:
    """Bayesian estimate of the typical antenna's rows, (N, K).

    The stacked right-hand side mixes noisy Phase II snapshots (noise
    variance noise_var) with Phase I gain estimates treated as exact, so
    the noise covariance is diag(noise_var I, 0). A small relative ridge
    keeps the inner solve well posed despite the zero block.
    """
    if not np.all(np.isfinite(stacked)):
        raise ValueError("stacked observations contain non-finite entries")
    rows, n_unk = system_hat.shape
    n_ant_rows = rows - cov.n_elements
    if tau2 and n_ant_rows % tau2:
        raise ValueError("system rows inconsistent with tau2")
    mix = system_hat @ cov.typical_cov
    inner = mix @ system_hat.conj().T
    ridge = ridge_scale * np.trace(inner).real / rows
    inner[np.diag_indices(n_ant_rows)] += noise_var
    inner[np.diag_indices(rows)] += ridge
    sol = np.linalg.solve(inner, stacked)
    typical = mix.conj().T @ sol
    return typical.reshape(cov.n_elements, cov.n_users)


def assemble_full_channel(typical: np.ndarray, ratios: np.ndarray) -> np.ndarray:
    """All antennas' reflected rows, (M, N, K): antenna m's row for element
    n is its scaling coefficient times the typical antenna's row."""
    return ratios[:, :, None] * typical[None, :, :]


def run_lmmse_pipeline(obs: ObservationSet, sched: TrainingSchedule,
                       cov: CovarianceModel, dims: SystemDims) -> LmmseResult:
    """Full noisy estimation chain: Phase I gains, ratio estimates, stacked
    Phase II solve, and the reassembled full channel."""
    gains_hat, err_trace = lmmse_phase1_gains(obs.y1, sched, cov, obs.noise_var)
    ratios_hat = recover_antenna_ratios(gains_hat)
    system_hat = build_phase2_system(ratios_hat, sched)
    stacked = build_stacked_observations(obs.y2, gains_hat[:, 0])
    typical_hat = lmmse_typical(stacked, system_hat, cov, obs.noise_var,
                                sched.tau2)
    full_hat = assemble_full_channel(typical_hat, ratios_hat)
    return LmmseResult(gains_hat=gains_hat, ratios_hat=ratios_hat,
                       typical_hat=typical_hat, full_hat=full_hat,
                       phase1_error_cov_trace=err_trace)
