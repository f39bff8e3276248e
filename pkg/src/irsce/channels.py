"""Correlated Rayleigh channel generation for an IRS-assisted uplink.

One realization consists of three links: the direct user-to-BS channels, the
per-element user-to-IRS channels, and the IRS-element-to-BS channels. The
cascaded user-IRS-BS channel through element n is the product of the last
two, which creates two kinds of redundancy this package exploits:

* all antennas see the same user-to-IRS coefficients, so the reflected
  channel vector of antenna m is a scaled copy of antenna 1's (scale
  `antenna_ratios[m, n]`), and
* all users share the IRS-to-BS channel, so user k's cascaded vector is a
  scaled copy of user 1's (scale `user_ratios[k, n]`).

Fading follows a CSCG model with per-side spatial correlation applied
through supplied matrix square roots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateChannelError

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class SystemDims:
    """Problem sizes: M BS antennas, N IRS elements, K single-antenna users.

    The protocols assume M, N, K > 1; degenerate sizes of 1 are accepted so
    hand-checkable corner cases stay constructible.
    """

    M: int
    N: int
    K: int

    def __post_init__(self):
        for name in ("M", "N", "K"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class CorrelationSpec:
    """Second-order statistics of the fading model.

    irs_bs_gain:       average power of each IRS-to-BS coefficient (linear).
    user_irs_gains:    length-K vector of average user-to-IRS powers.
    irs_corr_sqrt:     N x N square root of the IRS correlation matrix seen
                       from the BS side.
    user_corr_sqrts:   K x N x N square roots of the per-user IRS
                       correlation matrices.
    """

    irs_bs_gain: float
    user_irs_gains: np.ndarray
    irs_corr_sqrt: np.ndarray
    user_corr_sqrts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "user_irs_gains",
                           np.asarray(self.user_irs_gains, dtype=np.float64))
        object.__setattr__(self, "irs_corr_sqrt",
                           np.asarray(self.irs_corr_sqrt, dtype=np.complex128))
        object.__setattr__(self, "user_corr_sqrts",
                           np.asarray(self.user_corr_sqrts, dtype=np.complex128))
        if self.irs_bs_gain < 0 or np.any(self.user_irs_gains < 0):
            raise ValueError("channel gains must be nonnegative")
        n = self.irs_corr_sqrt.shape[0]
        if self.irs_corr_sqrt.shape != (n, n):
            raise ValueError("irs_corr_sqrt must be square")
        k = self.user_irs_gains.shape[0]
        if self.user_corr_sqrts.shape != (k, n, n):
            raise ValueError("user_corr_sqrts must have shape (K, N, N)")
        _check_corr_sqrt(self.irs_corr_sqrt, "irs_corr_sqrt")
        for i in range(k):
            _check_corr_sqrt(self.user_corr_sqrts[i], f"user_corr_sqrts[{i}]")

    @property
    def n_elements(self) -> int:
        return self.irs_corr_sqrt.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_irs_gains.shape[0]

    @classmethod
    def exponential(cls, dims: SystemDims, rho: float = 0.5,
                    irs_bs_gain: float = 1.0,
                    user_irs_gain: float | np.ndarray = 1.0) -> "CorrelationSpec":
        """Build a spec from the one-parameter exponential correlation model,
        with the same rho on the BS side and for every user."""
        s = build_exponential_corr_sqrt(dims.N, rho)
        gains = np.broadcast_to(np.asarray(user_irs_gain, dtype=np.float64),
                                (dims.K,)).copy()
        return cls(irs_bs_gain=float(irs_bs_gain),
                   user_irs_gains=gains,
                   irs_corr_sqrt=s,
                   user_corr_sqrts=np.broadcast_to(s, (dims.K, dims.N, dims.N)).copy())

    def check_dims(self, dims: SystemDims) -> None:
        if self.n_elements != dims.N or self.n_users != dims.K:
            raise ValueError(
                f"correlation spec sized for N={self.n_elements}, K={self.n_users}; "
                f"dims ask for N={dims.N}, K={dims.K}")


def _check_corr_sqrt(s: np.ndarray, name: str, tol: float = 1e-8) -> None:
    """A valid square root S must give a Hermitian PSD S @ S^H with unit
    diagonal (a correlation matrix, not a covariance)."""
    full = s @ s.conj().T
    if np.max(np.abs(full - full.conj().T)) > tol * max(1.0, np.max(np.abs(full))):
        raise ValueError(f"{name}: S S^H is not Hermitian")
    if np.max(np.abs(np.diag(full).real - 1.0)) > 1e-6:
        raise ValueError(f"{name}: S S^H does not have unit diagonal")
    w = np.linalg.eigvalsh(full)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise ValueError(f"{name}: S S^H is not positive semidefinite")


def build_exponential_corr_sqrt(n: int, rho: float) -> np.ndarray:
    """Principal square root of the exponential correlation matrix
    C[i, j] = rho**|i - j|.

    rho must lie in [0, 1); C is then Hermitian positive definite and the
    returned S satisfies S @ S = C.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    if n < 1:
        raise ValueError("matrix size must be positive")
    idx = np.arange(n)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    w, q = np.linalg.eigh(corr)
    w = np.clip(w, 0.0, None)
    s = (q * np.sqrt(w)) @ q.conj().T
    return s.astype(np.complex128)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of all physical links.

    direct:  M x K, column k is user k's direct channel to the BS.
    irs_bs:  N x M, row n is the channel from IRS element n to the antennas.
    user_irs: K x N, entry (k, n) is the channel from user k to element n.
    """

    direct: np.ndarray
    irs_bs: np.ndarray
    user_irs: np.ndarray

    def __post_init__(self):
        for name in ("direct", "irs_bs", "user_irs"):
            a = np.asarray(getattr(self, name), dtype=np.complex128)
            if a.ndim != 2 or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be a finite 2-D complex array")
            object.__setattr__(self, name, a)
        m, k = self.direct.shape
        n, m2 = self.irs_bs.shape
        k2, n2 = self.user_irs.shape
        if m != m2 or n != n2 or k != k2:
            raise ValueError("channel array shapes are inconsistent")

    @property
    def dims(self) -> SystemDims:
        return SystemDims(M=self.irs_bs.shape[1], N=self.irs_bs.shape[0],
                          K=self.user_irs.shape[0])


@dataclass(frozen=True)
class CascadedChannels:
    """Cascaded user-IRS-BS quantities derived from one realization.

    by_user:    (K, N, M); [k, n] is user k's cascaded vector through
                element n across antennas.
    by_antenna: (M, N, K); [m, n] is the reflected channel from all users to
                antenna m through element n. Entry [m, n, k] equals
                by_user[k, n, m] exactly (same coefficients, re-indexed).
    antenna_ratios: (M, N); by_antenna[m, n] = antenna_ratios[m, n] *
                by_antenna[0, n], row 0 all ones.
    user_ratios: (K, N); by_user[k, n] = user_ratios[k, n] * by_user[0, n],
                row 0 all ones.
    """

    by_user: np.ndarray
    by_antenna: np.ndarray
    antenna_ratios: np.ndarray
    user_ratios: np.ndarray

    @property
    def typical_rows(self) -> np.ndarray:
        """(N, K): reflected channel rows of the typical antenna (antenna 1)."""
        return self.by_antenna[0]


def sample_channels(dims: SystemDims, spec: CorrelationSpec, seed: int) -> ChannelRealization:
    """Draw one correlated CSCG realization, deterministically from `seed`.

    IRS-to-BS coefficients: irs_bs[n, m] = sum_i white[i, m] * S[i, n] with
    white i.i.d. CN(0, irs_bs_gain) and S the IRS correlation square root.
    User-to-IRS coefficients follow the same recipe per user with that
    user's square root and gain. Direct channels are i.i.d. CN(0, 1); they
    are only used to exercise direct-path synthesis and cancellation.
    """
    spec.check_dims(dims)
    rng = np.random.default_rng(seed)

    def cn(shape, var):
        z = rng.standard_normal(shape + (2,))
        return np.sqrt(var) * _SQRT_HALF * (z[..., 0] + 1j * z[..., 1])

    white_r = cn((dims.N, dims.M), spec.irs_bs_gain)
    irs_bs = spec.irs_corr_sqrt.T @ white_r

    user_irs = np.empty((dims.K, dims.N), dtype=np.complex128)
    for k in range(dims.K):
        white_t = cn((dims.N,), spec.user_irs_gains[k])
        user_irs[k] = spec.user_corr_sqrts[k].T @ white_t

    direct = cn((dims.M, dims.K), 1.0)
    return ChannelRealization(direct=direct, irs_bs=irs_bs, user_irs=user_irs)


def derive_cascaded(ch: ChannelRealization) -> CascadedChannels:
    """Form all cascaded quantities and both families of scaling ratios.

    Raises DegenerateChannelError if any typical-antenna coefficient
    irs_bs[n, 0] or typical-user coefficient user_irs[0, n] is exactly zero,
    since the ratios are then undefined (a probability-zero event under
    continuous fading; callers that sample may retry with a fresh seed).
    """
    r = ch.irs_bs
    t = ch.user_irs
    bad_r = np.flatnonzero(r[:, 0] == 0)
    if bad_r.size:
        raise DegenerateChannelError(
            f"typical-antenna coefficient is zero at element(s) {bad_r.tolist()}")
    bad_t = np.flatnonzero(t[0, :] == 0)
    if bad_t.size:
        raise DegenerateChannelError(
            f"typical-user coefficient is zero at element(s) {bad_t.tolist()}")

    # by_user[k, n, m] = t[k, n] * r[n, m]
    by_user = t[:, :, None] * r[None, :, :]
    by_antenna = np.ascontiguousarray(by_user.transpose(2, 1, 0))
    antenna_ratios = np.ascontiguousarray((r / r[:, :1]).T)
    antenna_ratios[0] = 1.0  # reference antenna scales itself by definition
    user_ratios = t / t[:1, :]
    user_ratios[0] = 1.0
    return CascadedChannels(by_user=by_user, by_antenna=by_antenna,
                            antenna_ratios=antenna_ratios, user_ratios=user_ratios)
