"""Hot inner kernels with a numba fast path and a pure-numpy fallback.

Three small dense constructions dominate a Monte Carlo sweep because they
run once (or more) per trial:

* `cascade_signal`  - noiseless received block for a pilot/reflection plan,
* `phase2_system`   - stacked linear system tying observations to the
                      typical antenna's rows,
* `baseline_system` - stacked linear system for the user-ratio baseline.

Backend selection: environment variable IRSCE_BACKEND in {"auto", "numba",
"numpy"} (read at import, override via `set_backend`). "auto" uses numba
when it imports, else numpy. `benchmarks/bench_kernels.py` times the two
paths against each other.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

_VALID = ("auto", "numba", "numpy")
_backend = os.environ.get("IRSCE_BACKEND", "auto").strip().lower()
if _backend not in _VALID:
    warnings.warn(f"IRSCE_BACKEND={_backend!r} not in {_VALID}; using 'auto'")
    _backend = "auto"
if _backend == "numba" and not HAS_NUMBA:
    warnings.warn("IRSCE_BACKEND=numba but numba is not importable; using numpy")
    _backend = "numpy"


def set_backend(name: str) -> None:
    """Select 'auto', 'numba' or 'numpy' at runtime (mainly for tests)."""
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    if name == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not installed")
    _backend = name


def active_backend() -> str:
    """The backend that will actually run: 'numba' or 'numpy'."""
    if _backend == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    return _backend


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.complex128)


# ---------------------------------------------------------------- numpy path

def cascade_signal_numpy(phases, pilots, by_antenna, amplitude):
    """Noiseless received block, (tau, M).

    y[i, m] = amplitude * sum_n phases[i, n] * sum_k by_antenna[m, n, k] * pilots[i, k]
    """
    w = np.einsum("mnk,ik->imn", by_antenna, pilots)
    return amplitude * np.einsum("in,imn->im", phases, w)


def phase2_system_numpy(phases2, pilots2, ratios, base_pilot, amplitude):
    """Stacked system matrix, (tau2*M + N, N*K).

    Top rows, grouped per time instant (antennas fastest):
      S[i*M + m, n*K + k] = amplitude * phases2[i, n] * pilots2[i, k] * ratios[m, n]
    Bottom N rows encode the side information accumulated before this phase:
      S[tau2*M + n, n*K + k] = amplitude * base_pilot[k]
    """
    tau2, n_el = phases2.shape
    n_ant = ratios.shape[0]
    n_usr = base_pilot.shape[0]
    out = np.zeros((tau2 * n_ant + n_el, n_el * n_usr), dtype=np.complex128)
    if tau2:
        top = np.einsum("in,ik,mn->imnk", phases2, pilots2, ratios)
        out[:tau2 * n_ant] = amplitude * top.reshape(tau2 * n_ant, n_el * n_usr)
    for n in range(n_el):
        out[tau2 * n_ant + n, n * n_usr:(n + 1) * n_usr] = amplitude * base_pilot
    return out


def baseline_system_numpy(phases2, pilots_active, typical_user, amplitude):
    """Stacked system for the user-ratio baseline, (tau2*M, N*(K-1)).

    S[i*M + m, n*(K-1) + j] = amplitude * phases2[i, n] * pilots_active[i, j]
                              * typical_user[n, m]
    with typical_user[n, m] the (estimated) cascaded channel of user 1.
    """
    tau2, n_el = phases2.shape
    n_ant = typical_user.shape[1]
    n_act = pilots_active.shape[1]
    top = np.einsum("in,ij,nm->imnj", phases2, pilots_active, typical_user)
    return amplitude * top.reshape(tau2 * n_ant, n_el * n_act)


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _cascade_signal_nb(phases, pilots, by_antenna, amplitude):
        tau, n_el = phases.shape
        n_ant = by_antenna.shape[0]
        n_usr = by_antenna.shape[2]
        y = np.empty((tau, n_ant), dtype=np.complex128)
        for i in range(tau):
            for m in range(n_ant):
                acc = 0.0 + 0.0j
                for n in range(n_el):
                    s = 0.0 + 0.0j
                    for k in range(n_usr):
                        s += by_antenna[m, n, k] * pilots[i, k]
                    acc += phases[i, n] * s
                y[i, m] = amplitude * acc
        return y

    @njit(cache=True)
    def _phase2_system_nb(phases2, pilots2, ratios, base_pilot, amplitude):
        tau2, n_el = phases2.shape
        n_ant = ratios.shape[0]
        n_usr = base_pilot.shape[0]
        out = np.zeros((tau2 * n_ant + n_el, n_el * n_usr), dtype=np.complex128)
        for i in range(tau2):
            for m in range(n_ant):
                row = i * n_ant + m
                for n in range(n_el):
                    pn = amplitude * phases2[i, n] * ratios[m, n]
                    for k in range(n_usr):
                        out[row, n * n_usr + k] = pn * pilots2[i, k]
        for n in range(n_el):
            for k in range(n_usr):
                out[tau2 * n_ant + n, n * n_usr + k] = amplitude * base_pilot[k]
        return out

    @njit(cache=True)
    def _baseline_system_nb(phases2, pilots_active, typical_user, amplitude):
        tau2, n_el = phases2.shape
        n_ant = typical_user.shape[1]
        n_act = pilots_active.shape[1]
        out = np.empty((tau2 * n_ant, n_el * n_act), dtype=np.complex128)
        for i in range(tau2):
            for m in range(n_ant):
                row = i * n_ant + m
                for n in range(n_el):
                    gn = amplitude * phases2[i, n] * typical_user[n, m]
                    for j in range(n_act):
                        out[row, n * n_act + j] = gn * pilots_active[i, j]
        return out


# --------------------------------------------------------------- dispatchers

def cascade_signal(phases, pilots, by_antenna, amplitude):
    if active_backend() == "numba":
        return _cascade_signal_nb(_c(phases), _c(pilots), _c(by_antenna),
                                  complex(amplitude))
    return cascade_signal_numpy(np.asarray(phases), np.asarray(pilots),
                                np.asarray(by_antenna), amplitude)


def phase2_system(phases2, pilots2, ratios, base_pilot, amplitude):
    if active_backend() == "numba" and phases2.shape[0] > 0:
        return _phase2_system_nb(_c(phases2), _c(pilots2), _c(ratios),
                                 _c(base_pilot).ravel(), complex(amplitude))
    return phase2_system_numpy(np.asarray(phases2), np.asarray(pilots2),
                               np.asarray(ratios), np.asarray(base_pilot),
                               amplitude)


def baseline_system(phases2, pilots_active, typical_user, amplitude):
    if active_backend() == "numba":
        return _baseline_system_nb(_c(phases2), _c(pilots_active),
                                   _c(typical_user), complex(amplitude))
    return baseline_system_numpy(np.asarray(phases2), np.asarray(pilots_active),
                                 np.asarray(typical_user), amplitude)
