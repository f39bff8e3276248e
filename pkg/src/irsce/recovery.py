"""Exact recovery from noiseless observations.

Phase I: with a fixed pilot vector and orthogonal reflection patterns, each
antenna's stacked snapshots are an orthogonal mix of N composite gains (one
per IRS element), so a single matched correlation recovers them exactly.
Ratios of the gains across antennas yield the antenna scaling coefficients.

Phase II: stacking the Phase II snapshots with the typical antenna's Phase I
gains gives one tall linear system in the typical antenna's reflected
channel rows; full column rank (certified numerically) makes the solution
unique. In the tall antenna regime (M >= N) a cheaper two-step route exists:
invert the antenna mix per time instant, then solve a small per-element
pilot system.
"""

from __future__ import annotations

import logging

import numpy as np

from . import kernels
from .channels import SystemDims
from .errors import (DegenerateChannelError, IdentifiabilityError,
                     RankDeficientError)
from .schedules import (PhasePlan, TrainingSchedule, assemble_schedule,
                        build_phase2_schedule_random)

log = logging.getLogger("irsce")


def coefficient_counts(dims: SystemDims) -> tuple[int, int]:
    """(unstructured, structured) unknown counts: estimating every cascaded
    coefficient costs K*M*N, the ratio structure reduces it to
    K*N + (M-1)*N."""
    return dims.K * dims.M * dims.N, dims.K * dims.N + (dims.M - 1) * dims.N


def recover_phase1_gains(y1: np.ndarray, sched: TrainingSchedule) -> np.ndarray:
    """Recover the per-element composite gains of every antenna from
    noiseless Phase I snapshots.

    Returns (N, M); column m holds antenna m's gains. With orthogonal
    reflections (PHI^H PHI = tau1 I) this is the exact matched solve
    PHI^H Y / tau1; otherwise falls back to least squares, which is still
    exact on consistent noiseless data when PHI has full column rank.
    """
    phi = sched.phase1_reflections
    tau1, n_el = phi.shape
    if y1.shape[0] != tau1:
        raise ValueError("y1 rows must equal tau1")
    gram = phi.conj().T @ phi
    if np.max(np.abs(gram - tau1 * np.eye(n_el))) <= 1e-8 * tau1:
        return phi.conj().T @ y1 / tau1
    rank = np.linalg.matrix_rank(phi)
    if rank < n_el:
        raise RankDeficientError(
            f"Phase I reflections have rank {rank} < N={n_el}")
    gains, *_ = np.linalg.lstsq(phi, y1, rcond=None)
    return gains


def recover_antenna_ratios(gains: np.ndarray,
                           rel_floor: float = 1e-12) -> np.ndarray:
    """Antenna scaling coefficients from per-element gains.

    ratios[m, n] = gains[n, m] / gains[n, 0]; row 0 is all ones. Raises
    DegenerateChannelError naming the offending element(s) when a typical-
    antenna gain is (numerically) zero, since the ratio is then undefined.
    """
    typical = gains[:, 0]
    floor = rel_floor * np.linalg.norm(typical)
    bad = np.flatnonzero(np.abs(typical) <= floor)
    if bad.size:
        raise DegenerateChannelError(
            f"typical-antenna gain vanishes at element(s) {bad.tolist()}")
    ratios = (gains / typical[:, None]).T
    ratios[0] = 1.0  # the typical antenna's ratio is 1 by definition
    return ratios


def build_phase2_system(ratios: np.ndarray, sched: TrainingSchedule,
                        base_pilot: np.ndarray | None = None) -> np.ndarray:
    """Stacked (tau2*M + N) x (K*N) system mapping the typical antenna's
    rows (element-major, user-minor ordering) to the stacked observations.
    `ratios` must carry an all-ones first row (the typical antenna)."""
    if base_pilot is None:
        base_pilot = sched.base_pilot
    return kernels.phase2_system(sched.phase2_reflections, sched.phase2_pilots,
                                 ratios, np.asarray(base_pilot), sched.amplitude)


def build_stacked_observations(y2: np.ndarray,
                               typical_gains: np.ndarray) -> np.ndarray:
    """Right-hand side pairing Phase II snapshots (antennas fastest per
    instant) with the typical antenna's Phase I gains."""
    return np.concatenate([np.asarray(y2).reshape(-1), np.asarray(typical_gains)])


def rank_check(system: np.ndarray) -> tuple[int, bool]:
    """Numerical rank by singular value thresholding
    (max-dimension * machine-eps * largest singular value) and whether it
    reaches the column count, i.e. whether the unknowns are identifiable."""
    system = np.asarray(system)
    if system.size == 0:
        return 0, system.shape[1] == 0
    svals = np.linalg.svd(system, compute_uv=False)
    tol = max(system.shape) * np.finfo(np.float64).eps * svals[0]
    rank = int(np.count_nonzero(svals > tol))
    return rank, rank == system.shape[1]


def recover_typical_by_instant(y2: np.ndarray, ratios: np.ndarray,
                               typical_gains: np.ndarray,
                               sched: TrainingSchedule) -> np.ndarray:
    """Two-step exact recovery of the typical antenna's rows, (N, K).

    Needs M >= N with full-column-rank ratios: each Phase II instant then
    determines one composite gain per element (after undoing the reflection
    phase), and per element the stacked pilot vectors of Phase I plus
    Phase II determine the K row entries.
    """
    n_ant, n_el = ratios.shape
    if n_ant < n_el:
        raise RankDeficientError(
            "per-instant recovery needs at least as many antennas as elements")
    rank = np.linalg.matrix_rank(ratios)
    if rank < n_el:
        raise RankDeficientError(
            f"antenna ratio matrix has rank {rank} < N={n_el}")
    # y2[i] = ratios @ (phase[i] * eta[i]); undo the mix, then the phases
    mixed, *_ = np.linalg.lstsq(ratios, y2.T, rcond=None)
    instant_gains = mixed / sched.phase2_reflections.T

    stacked_pilots = np.vstack([sched.base_pilot[None, :], sched.phase2_pilots])
    n_usr = stacked_pilots.shape[1]
    if np.linalg.matrix_rank(stacked_pilots) < n_usr:
        raise RankDeficientError("stacked pilot vectors do not span all users")
    rhs = np.vstack([typical_gains[None, :], instant_gains.T])
    sol, *_ = np.linalg.lstsq(sched.amplitude * stacked_pilots, rhs, rcond=None)
    return sol.T


def recover_typical_pinv(system: np.ndarray, stacked: np.ndarray,
                         n_users: int) -> np.ndarray:
    """General exact recovery: pseudo-inverse solve of the stacked system,
    reshaped to (N, K). Requires full column rank (unique solution); the
    pseudo-inverse runs through an SVD-backed least-squares solve rather
    than normal equations, for numerical stability."""
    rank, ok = rank_check(system)
    if not ok:
        raise IdentifiabilityError(
            f"stacked system rank {rank} < unknowns {system.shape[1]}; "
            "increase tau2 or rebuild the schedule with a new seed")
    sol, *_ = np.linalg.lstsq(system, stacked, rcond=None)
    return sol.reshape(-1, n_users)


def certify_random_schedule(dims: SystemDims, ratios: np.ndarray,
                            phase1: PhasePlan, tau2: int, pilot_power: float,
                            seed: int, max_attempts: int = 10,
                            ) -> tuple[TrainingSchedule, np.ndarray, int]:
    """Build a wide-regime random Phase II schedule whose stacked system is
    certified full column rank against the given antenna ratios.

    Retries with consecutive seeds (logged) up to max_attempts, then raises
    IdentifiabilityError. Returns (schedule, system, attempts_used).
    """
    last_rank = -1
    for attempt in range(max_attempts):
        plan2 = build_phase2_schedule_random(dims, tau2, seed + attempt)
        sched = assemble_schedule(phase1, plan2, pilot_power)
        system = build_phase2_system(ratios, sched)
        last_rank, ok = rank_check(system)
        if ok:
            if attempt:
                log.warning("schedule certification needed %d retries (seed %d)",
                            attempt, seed + attempt)
            return sched, system, attempt
        log.warning("schedule seed %d gave rank %d < %d; resampling",
                    seed + attempt, last_rank, system.shape[1])
    raise IdentifiabilityError(
        f"no full-rank schedule in {max_attempts} attempts "
        f"(last rank {last_rank})")
