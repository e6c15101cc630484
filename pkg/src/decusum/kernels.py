"""Hot loops of the Monte Carlo engine.

Each kernel advances a chunk of independent trials through one block of
pre-computed log-likelihood ratios, updating state arrays in place.  Step
``j`` of a block is time ``n0 + j``.  ``stop[i] == 0`` marks a trial that is
still running; once it alarms, ``stop[i]`` holds the alarm time and the trial
is left untouched.  ``samples`` counts observations used, ``early`` counts
those taken at times ``n < mark`` (pre-change samples when ``mark`` is the
change point), and ``ones`` counts binary "1" transmissions.

Every kernel has a numba implementation (scalar loops) and a numpy one
(vectorized across trials).  Both only add, compare and assign, so they agree
bit for bit; :mod:`decusum._backend` selects which one runs.
"""

from __future__ import annotations

import numpy as np

from decusum._backend import active_backend, njit

# A sleeping DE-CuSum statistic climbs by repeated ``+ mu``.  Rounding drift
# can leave it a hair below zero after exactly ceil(|W| / mu) steps (e.g.
# -0.5 plus ten steps of 0.05), costing one spurious extra skip.  Values
# within RAMP_TOL * mu of zero are therefore snapped to zero.
RAMP_TOL = 1e-9

# -- numba -------------------------------------------------------------------


@njit(cache=True)
def _centralized_nb(s, V, stop, samples, early, n0, mark, threshold):
    N, B = s.shape
    for i in range(N):
        if stop[i] != 0:
            continue
        v = V[i]
        for j in range(B):
            n = n0 + j
            v = v + s[i, j]
            if v < 0.0:
                v = 0.0
            samples[i] += 1
            if n < mark:
                early[i] += 1
            if v > threshold:
                stop[i] = n
                break
        V[i] = v


@njit(cache=True)
def _every_nth_nb(s, V, stop, samples, early, n0, mark, threshold, stride):
    N, B = s.shape
    for i in range(N):
        if stop[i] != 0:
            continue
        v = V[i]
        for j in range(B):
            n = n0 + j
            if n % stride == 0:
                v = v + s[i, j]
                if v < 0.0:
                    v = 0.0
                samples[i] += 1
                if n < mark:
                    early[i] += 1
            if v > threshold:
                stop[i] = n
                break
        V[i] = v


@njit(cache=True)
def _all_nb(llr, C, stop, samples, early, ones, n0, mark, thr):
    N, B, L = llr.shape
    for i in range(N):
        if stop[i] != 0:
            continue
        for j in range(B):
            n = n0 + j
            alarm = True
            for k in range(L):
                c = C[i, k] + llr[i, j, k]
                if c < 0.0:
                    c = 0.0
                C[i, k] = c
                samples[i, k] += 1
                if n < mark:
                    early[i, k] += 1
                if c > thr[k]:
                    ones[i, k] += 1
                else:
                    alarm = False
            if alarm:
                stop[i] = n
                break


@njit(cache=True)
def _fractional_nb(llr, skip, C, stop, samples, early, ones, n0, mark, thr):
    N, B, L = llr.shape
    for i in range(N):
        if stop[i] != 0:
            continue
        for j in range(B):
            n = n0 + j
            alarm = True
            for k in range(L):
                c = C[i, k]
                if not skip[i, j, k]:
                    c = c + llr[i, j, k]
                    if c < 0.0:
                        c = 0.0
                    C[i, k] = c
                    samples[i, k] += 1
                    if n < mark:
                        early[i, k] += 1
                if c > thr[k]:
                    ones[i, k] += 1
                else:
                    alarm = False
            if alarm:
                stop[i] = n
                break


@njit(cache=True)
def _deall_nb(llr, W, stop, samples, early, ones, n0, mark, thr, mu, floor):
    N, B, L = llr.shape
    for i in range(N):
        if stop[i] != 0:
            continue
        for j in range(B):
            n = n0 + j
            alarm = True
            for k in range(L):
                w = W[i, k]
                if w >= 0.0:
                    w = w + llr[i, j, k]
                    if w < floor[k]:
                        w = floor[k]
                    samples[i, k] += 1
                    if n < mark:
                        early[i, k] += 1
                else:
                    w = w + mu[k]
                    if w > -(RAMP_TOL * mu[k]):
                        w = 0.0
                W[i, k] = w
                if w > thr[k]:
                    ones[i, k] += 1
                else:
                    alarm = False
            if alarm:
                stop[i] = n
                break


@njit(cache=True)
def _cusum_paths_nb(llr):
    N, T = llr.shape
    out = np.empty((N, T))
    for i in range(N):
        c = 0.0
        for t in range(T):
            c = c + llr[i, t]
            if c < 0.0:
                c = 0.0
            out[i, t] = c
    return out


@njit(cache=True)
def _decusum_paths_nb(llr, mu, floor, start):
    N, T = llr.shape
    out = np.empty((N, T))
    sampled = np.empty((N, T), dtype=np.bool_)
    for i in range(N):
        w = start[i]
        for t in range(T):
            if w >= 0.0:
                sampled[i, t] = True
                w = w + llr[i, t]
                if w < floor[i]:
                    w = floor[i]
            else:
                sampled[i, t] = False
                w = w + mu[i]
                if w > -(RAMP_TOL * mu[i]):
                    w = 0.0
            out[i, t] = w
    return out, sampled


# -- numpy -------------------------------------------------------------------


def _centralized_np(s, V, stop, samples, early, n0, mark, threshold):
    run = stop == 0
    for j in range(s.shape[1]):
        if not run.any():
            break
        n = n0 + j
        v = V + s[:, j]
        v[v < 0.0] = 0.0
        V[run] = v[run]
        samples += run
        if n < mark:
            early += run
        hit = run & (V > threshold)
        stop[hit] = n
        run &= ~hit


def _every_nth_np(s, V, stop, samples, early, n0, mark, threshold, stride):
    run = stop == 0
    for j in range(s.shape[1]):
        if not run.any():
            break
        n = n0 + j
        if n % stride == 0:
            v = V + s[:, j]
            v[v < 0.0] = 0.0
            V[run] = v[run]
            samples += run
            if n < mark:
                early += run
        hit = run & (V > threshold)
        stop[hit] = n
        run &= ~hit


def _all_np(llr, C, stop, samples, early, ones, n0, mark, thr):
    run = stop == 0
    for j in range(llr.shape[1]):
        if not run.any():
            break
        n = n0 + j
        c = C + llr[:, j, :]
        c[c < 0.0] = 0.0
        C[run] = c[run]
        col = run[:, None]
        samples += col
        if n < mark:
            early += col
        up = C > thr
        ones += up & col
        hit = run & up.all(axis=1)
        stop[hit] = n
        run &= ~hit


def _fractional_np(llr, skip, C, stop, samples, early, ones, n0, mark, thr):
    run = stop == 0
    for j in range(llr.shape[1]):
        if not run.any():
            break
        n = n0 + j
        take = run[:, None] & ~skip[:, j, :]
        c = C + llr[:, j, :]
        c[c < 0.0] = 0.0
        C[take] = c[take]
        samples += take
        if n < mark:
            early += take
        up = C > thr
        ones += up & run[:, None]
        hit = run & up.all(axis=1)
        stop[hit] = n
        run &= ~hit


def _deall_np(llr, W, stop, samples, early, ones, n0, mark, thr, mu, floor):
    run = stop == 0
    for j in range(llr.shape[1]):
        if not run.any():
            break
        n = n0 + j
        col = run[:, None]
        take = W >= 0.0
        awake = W + llr[:, j, :]
        awake = np.where(awake < floor, floor, awake)
        asleep = W + mu
        asleep[asleep > -(RAMP_TOL * mu)] = 0.0
        w = np.where(take, awake, asleep)
        W[run] = w[run]
        take &= col
        samples += take
        if n < mark:
            early += take
        up = W > thr
        ones += up & col
        hit = run & up.all(axis=1)
        stop[hit] = n
        run &= ~hit


def _cusum_paths_np(llr):
    N, T = llr.shape
    out = np.empty((N, T))
    c = np.zeros(N)
    for t in range(T):
        c = c + llr[:, t]
        c[c < 0.0] = 0.0
        out[:, t] = c
    return out


def _decusum_paths_np(llr, mu, floor, start):
    N, T = llr.shape
    out = np.empty((N, T))
    sampled = np.empty((N, T), dtype=bool)
    w = start.copy()
    for t in range(T):
        take = w >= 0.0
        awake = w + llr[:, t]
        awake = np.where(awake < floor, floor, awake)
        asleep = w + mu
        asleep[asleep > -(RAMP_TOL * mu)] = 0.0
        w = np.where(take, awake, asleep)
        out[:, t] = w
        sampled[:, t] = take
    return out, sampled


# -- dispatch ----------------------------------------------------------------

_IMPL = {
    "numba": {
        "centralized": _centralized_nb,
        "every_nth": _every_nth_nb,
        "all": _all_nb,
        "fractional": _fractional_nb,
        "deall": _deall_nb,
        "cusum_paths": _cusum_paths_nb,
        "decusum_paths": _decusum_paths_nb,
    },
    "numpy": {
        "centralized": _centralized_np,
        "every_nth": _every_nth_np,
        "all": _all_np,
        "fractional": _fractional_np,
        "deall": _deall_np,
        "cusum_paths": _cusum_paths_np,
        "decusum_paths": _decusum_paths_np,
    },
}


def kernel(name: str, backend: str | None = None):
    return _IMPL[backend or active_backend()][name]


def cusum_paths(llr: np.ndarray, *, backend: str | None = None) -> np.ndarray:
    """CuSum statistic ``C_n`` along each row of ``llr`` (no stopping)."""
    return kernel("cusum_paths", backend)(np.ascontiguousarray(llr, dtype=np.float64))


def decusum_paths(llr, mu, h, start=0.0, *, backend: str | None = None):
    """DE-CuSum statistic ``W_n`` and sampling flags along each row of ``llr``.

    ``llr[i, t]`` is the LLR of the observation at time ``t + 1``; it is only
    consumed when the path samples at that time.  ``mu``, ``h`` and ``start``
    broadcast over rows.
    """
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    N = llr.shape[0]
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (N,)).copy()
    floor = 0.0 - np.broadcast_to(np.asarray(h, dtype=np.float64), (N,))
    start = np.broadcast_to(np.asarray(start, dtype=np.float64), (N,)).copy()
    return kernel("decusum_paths", backend)(llr, mu, np.ascontiguousarray(floor), start)
