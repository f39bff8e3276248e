"""Pilot and IRS-reflection schedules for the two-phase training protocol.

Phase I (tau1 instants) keeps the pilot vector fixed while sweeping the IRS
through orthogonal (DFT) reflection patterns; this exposes, per antenna, one
composite gain per IRS element, and ratios of those gains across antennas
give the antenna scaling coefficients. Phase II (tau2 instants) varies the
pilots to pin down the typical antenna's reflected channel rows.

Minimum durations: tau1 = N, and tau2 = max(K-1, ceil((K-1)N/M)); the total
matches the user-correlation baseline's minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, matrixio
from .channels import CascadedChannels, ChannelRealization, SystemDims
from .errors import InsufficientDurationError, WrongRegimeError

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class PhasePlan:
    """Pilots and reflections for one phase (rows are time instants)."""

    pilots: np.ndarray
    reflections: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.pilots.shape[0] != self.reflections.shape[0]:
            raise ValueError("pilots and reflections must cover the same instants")


@dataclass(frozen=True)
class TrainingSchedule:
    """Complete two-phase plan.

    pilots:      (tau1 + tau2, K), each entry unit modulus or zero.
    reflections: (tau1 + tau2, N), each entry unit modulus.
    pilot_power: per-user pilot power p (linear watts); transmitted symbols
                 are sqrt(p) * pilots.
    phase2_seed: seed of a randomized Phase II construction, kept so a
                 failed identifiability certification can rebuild with a
                 fresh seed; None for deterministic constructions.
    """

    tau1: int
    tau2: int
    pilots: np.ndarray
    reflections: np.ndarray
    pilot_power: float
    phase2_seed: int | None = None

    def __post_init__(self):
        tau = self.tau1 + self.tau2
        if self.pilots.shape[0] != tau or self.reflections.shape[0] != tau:
            raise ValueError("schedule rows must equal tau1 + tau2")
        if self.pilot_power < 0:
            raise ValueError("pilot_power must be nonnegative")
        mod = np.abs(self.pilots)
        if not np.all((np.abs(mod - 1.0) < 1e-9) | (mod < 1e-9)):
            raise ValueError("pilot entries must be unit modulus or zero")
        if np.max(np.abs(np.abs(self.reflections) - 1.0)) > 1e-9:
            raise ValueError("reflection entries must be unit modulus")
        if self.tau1 and not np.all(self.pilots[:self.tau1] == self.pilots[0]):
            raise ValueError("Phase I pilot rows must be identical")

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.pilot_power)

    @property
    def base_pilot(self) -> np.ndarray:
        """The fixed Phase I pilot vector (length K)."""
        return self.pilots[0]

    @property
    def phase1_reflections(self) -> np.ndarray:
        return self.reflections[:self.tau1]

    @property
    def phase2_reflections(self) -> np.ndarray:
        return self.reflections[self.tau1:]

    @property
    def phase2_pilots(self) -> np.ndarray:
        return self.pilots[self.tau1:]


@dataclass(frozen=True)
class ObservationSet:
    """Received training blocks after direct-path cancellation.

    y1: (tau1, M), row i is the Phase I snapshot at instant i.
    y2: (tau2, M), same for Phase II.
    """

    y1: np.ndarray
    y2: np.ndarray
    noise_var: float


def dft_matrix(size: int) -> np.ndarray:
    """Unnormalized DFT matrix, F[a, b] = exp(-2 pi i a b / size)."""
    idx = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / size)


def min_durations(dims: SystemDims) -> tuple[int, int, int]:
    """(tau1*, tau2*, tau1* + tau2*): shortest durations that make noiseless
    recovery exact. Phase I needs one orthogonal pattern per IRS element;
    Phase II needs max(K-1, ceil((K-1)N/M)) further instants."""
    tau1 = dims.N
    tau2 = max(dims.K - 1, -((dims.K - 1) * dims.N // -dims.M))
    return tau1, tau2, tau1 + tau2


def build_phase1_schedule(dims: SystemDims, tau1: int) -> PhasePlan:
    """Phase I plan: all-ones pilots every instant; reflections are the
    first N columns of the tau1-point DFT, so the reflection matrix PHI
    satisfies PHI^H PHI = tau1 * I_N."""
    if tau1 < dims.N:
        raise InsufficientDurationError(
            f"Phase I needs at least N={dims.N} instants, got {tau1}")
    pilots = np.ones((tau1, dims.K), dtype=np.complex128)
    reflections = dft_matrix(tau1)[:, :dims.N]
    return PhasePlan(pilots=pilots, reflections=reflections)


def build_phase2_schedule_dft(dims: SystemDims, tau2: int) -> PhasePlan:
    """Phase II plan for the tall regime M >= N.

    The first K-1 instants use the exact minimum-duration construction:
    reflections all ones and pilot rows taken from columns 2..K of the
    K-point DFT; together with the all-ones Phase I pilot these span all K
    DFT columns, so the stacked pilot matrix has full rank K. Extension
    instants keep cycling the DFT pilot columns but rotate the reflections
    through fresh DFT-phase rows: repeating the all-ones pattern would make
    the extra snapshots copies of the first K-1 ones, so estimation errors
    carried over from Phase I would repeat identically instead of averaging
    out, and longer Phase II budgets would buy nothing.
    """
    if dims.M < dims.N:
        raise WrongRegimeError("DFT Phase II construction requires M >= N")
    if tau2 < dims.K - 1:
        raise InsufficientDurationError(
            f"Phase II needs at least K-1={dims.K - 1} instants, got {tau2}")
    if dims.K > 1:
        dft = dft_matrix(dims.K)
        cols = [1 + (j % (dims.K - 1)) for j in range(tau2)]
        pilots = dft[:, cols].T.copy()
    else:
        # single user: the typical antenna's rows are fixed by Phase I already
        pilots = np.ones((tau2, 1), dtype=np.complex128)
    reflections = np.ones((tau2, dims.N), dtype=np.complex128)
    extra = tau2 - (dims.K - 1)
    if extra > 0:
        freq = np.arange(1, extra + 1)[:, None]
        reflections[dims.K - 1:] = np.exp(
            -2j * np.pi * freq * np.arange(dims.N)[None, :] / (extra + 1))
    return PhasePlan(pilots=pilots, reflections=reflections)


def build_phase2_schedule_random(dims: SystemDims, tau2: int, seed: int) -> PhasePlan:
    """Phase II plan for the wide regime M < N: user K stays silent, the
    remaining pilots and all reflections get independent uniform random
    phases. Generic phases make the stacked system full rank with
    probability one; callers must certify the rank numerically before
    estimating and may rebuild with a fresh seed on failure."""
    if dims.M >= dims.N:
        raise WrongRegimeError("random Phase II construction targets M < N")
    need = -((dims.K - 1) * dims.N // -dims.M)
    if tau2 < need:
        raise InsufficientDurationError(
            f"Phase II needs at least ceil((K-1)N/M)={need} instants, got {tau2}")
    rng = np.random.default_rng(seed)
    pilots = np.exp(2j * np.pi * rng.random((tau2, dims.K)))
    pilots[:, dims.K - 1] = 0.0
    reflections = np.exp(2j * np.pi * rng.random((tau2, dims.N)))
    return PhasePlan(pilots=pilots, reflections=reflections, seed=seed)


def build_schedule(dims: SystemDims, tau1: int | None = None,
                   tau2: int | None = None, pilot_power: float = 1.0,
                   seed: int | None = None) -> TrainingSchedule:
    """Assemble a full two-phase schedule, defaulting to minimum durations.
    `seed` feeds the randomized construction in the wide regime and is
    ignored in the tall regime."""
    t1_star, t2_star, _ = min_durations(dims)
    tau1 = t1_star if tau1 is None else tau1
    tau2 = t2_star if tau2 is None else tau2
    p1 = build_phase1_schedule(dims, tau1)
    if dims.M >= dims.N:
        p2 = build_phase2_schedule_dft(dims, tau2)
    else:
        p2 = build_phase2_schedule_random(dims, tau2, 0 if seed is None else seed)
    return assemble_schedule(p1, p2, pilot_power)


def assemble_schedule(phase1: PhasePlan, phase2: PhasePlan,
                      pilot_power: float) -> TrainingSchedule:
    return TrainingSchedule(
        tau1=phase1.pilots.shape[0],
        tau2=phase2.pilots.shape[0],
        pilots=np.vstack([phase1.pilots, phase2.pilots]),
        reflections=np.vstack([phase1.reflections, phase2.reflections]),
        pilot_power=float(pilot_power),
        phase2_seed=phase2.seed,
    )


def draw_noise(tau: int, n_ant: int, noise_var: float, seed: int) -> np.ndarray:
    """(tau, n_ant) i.i.d. CSCG noise block, deterministic in `seed`.

    Drawn as one interleaved block so two calls sharing a seed agree on
    their common leading instants even if tau differs (keeps trials paired
    across schedule lengths)."""
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    if noise_var == 0:
        return np.zeros((tau, n_ant), dtype=np.complex128)
    z = np.random.default_rng(seed).standard_normal((tau, n_ant, 2))
    return np.sqrt(noise_var) * _SQRT_HALF * (z[..., 0] + 1j * z[..., 1])


def synthesize_observations(ch: ChannelRealization, casc: CascadedChannels,
                            sched: TrainingSchedule, noise_var: float,
                            include_direct: bool = False,
                            seed: int = 0) -> ObservationSet:
    """Simulate the received training blocks for one realization.

    The received snapshot is the superposition of the direct-link term and
    the IRS-reflected term plus CSCG noise. With the direct channels known
    perfectly (assumed here), the receiver subtracts the direct term before
    estimation. When include_direct is set, the direct superposition is
    formed explicitly and then cancelled; the residual cancellation error is
    at floating-point rounding level.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    dims = ch.dims
    tau = sched.tau1 + sched.tau2
    y = kernels.cascade_signal(sched.reflections, sched.pilots,
                               casc.by_antenna, sched.amplitude)
    y = y + draw_noise(tau, dims.M, noise_var, seed)
    if include_direct:
        direct_term = sched.amplitude * (sched.pilots @ ch.direct.T)
        y = (y + direct_term) - direct_term
    return ObservationSet(y1=y[:sched.tau1], y2=y[sched.tau1:],
                          noise_var=float(noise_var))


def save_schedule(sched: TrainingSchedule, pilots_path, reflections_path) -> None:
    """Serialize pilots and reflections to the plain-text complex format."""
    matrixio.save_complex_matrix(pilots_path, sched.pilots)
    matrixio.save_complex_matrix(reflections_path, sched.reflections)


def load_schedule(pilots_path, reflections_path, tau1: int,
                  pilot_power: float) -> TrainingSchedule:
    pilots = matrixio.load_complex_matrix(pilots_path)
    reflections = matrixio.load_complex_matrix(reflections_path)
    return TrainingSchedule(tau1=tau1, tau2=pilots.shape[0] - tau1,
                            pilots=pilots, reflections=reflections,
                            pilot_power=pilot_power)
