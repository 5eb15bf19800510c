"""Inner loops of the solvers.

Every kernel exists twice: a loop version compiled with numba and a
numpy version.  Both take and return the same arrays, so callers never
care which one runs.  The active set is chosen once at import time by
:mod:`modent._accel`; both sets stay importable for benchmarking.

Stage arrays
------------
Time-dependent coefficients are passed pre-sampled.  For a grid with
``n`` steps, an array of shape ``(n, 3, d, d)`` holds the coefficient at
the start, midpoint and end of every step (the three RK4 stage times).
"""
import numpy as np

from ._accel import HAS_NUMBA, njit


def _ric_rhs(X, F, Q, G):
    return F @ X + X @ F.T + Q - X @ G @ X


# --------------------------------------------------------------------- numba


@njit(cache=True, inline="always")
def _ric_rhs_nb(X, F, Q, G, tmp, out):
    d = X.shape[0]
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += G[i, k] * X[k, j]
            tmp[i, j] = acc
    for i in range(d):
        for j in range(i, d):
            acc = Q[i, j]
            for k in range(d):
                acc += F[i, k] * X[k, j] + X[i, k] * F[j, k] - X[i, k] * tmp[k, j]
            out[i, j] = acc
            out[j, i] = acc


@njit(cache=True, inline="always")
def _lyap_rhs_nb(X, F, S, out):
    d = X.shape[0]
    for i in range(d):
        for j in range(i, d):
            acc = S[i, j]
            for k in range(d):
                acc += F[i, k] * X[k, j] + X[i, k] * F[j, k]
            out[i, j] = acc
            out[j, i] = acc


@njit(cache=True)
def _riccati_rk4_period_nb(X0, F, Q, G, dt):
    n = F.shape[0]
    d = X0.shape[0]
    out = np.empty((n + 1, d, d))
    X = 0.5 * (X0 + X0.T)
    Y = np.empty((d, d))
    tmp = np.empty((d, d))
    k1 = np.empty((d, d))
    k2 = np.empty((d, d))
    k3 = np.empty((d, d))
    k4 = np.empty((d, d))
    out[0] = X0
    for s in range(n):
        _ric_rhs_nb(X, F[s, 0], Q, G, tmp, k1)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + 0.5 * dt * k1[i, j]
        _ric_rhs_nb(Y, F[s, 1], Q, G, tmp, k2)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + 0.5 * dt * k2[i, j]
        _ric_rhs_nb(Y, F[s, 1], Q, G, tmp, k3)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + dt * k3[i, j]
        _ric_rhs_nb(Y, F[s, 2], Q, G, tmp, k4)
        for i in range(d):
            for j in range(d):
                X[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        for i in range(d):
            for j in range(i + 1, d):
                m = 0.5 * (X[i, j] + X[j, i])
                X[i, j] = m
                X[j, i] = m
        out[s + 1] = X
    return out


@njit(cache=True)
def _lyapunov_rk4_period_nb(X0, F, S, dt):
    n = F.shape[0]
    d = X0.shape[0]
    out = np.empty((n + 1, d, d))
    X = 0.5 * (X0 + X0.T)
    Y = np.empty((d, d))
    k1 = np.empty((d, d))
    k2 = np.empty((d, d))
    k3 = np.empty((d, d))
    k4 = np.empty((d, d))
    out[0] = X0
    for s in range(n):
        _lyap_rhs_nb(X, F[s, 0], S[s, 0], k1)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + 0.5 * dt * k1[i, j]
        _lyap_rhs_nb(Y, F[s, 1], S[s, 1], k2)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + 0.5 * dt * k2[i, j]
        _lyap_rhs_nb(Y, F[s, 1], S[s, 1], k3)
        for i in range(d):
            for j in range(d):
                Y[i, j] = X[i, j] + dt * k3[i, j]
        _lyap_rhs_nb(Y, F[s, 2], S[s, 2], k4)
        for i in range(d):
            for j in range(d):
                X[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        out[s + 1] = X
    return out


@njit(cache=True)
def _linear_rk4_period_nb(Y0, F, dt):
    n = F.shape[0]
    Y = Y0.copy()
    for i in range(n):
        k1 = F[i, 0] @ Y
        k2 = F[i, 1] @ (Y + 0.5 * dt * k1)
        k3 = F[i, 1] @ (Y + 0.5 * dt * k2)
        k4 = F[i, 2] @ (Y + dt * k3)
        Y = Y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y


@njit(cache=True)
def _subspace_propagate_nb(Z0, E):
    n = E.shape[0]
    out = np.empty((n + 1, Z0.shape[0], Z0.shape[1]))
    Z = np.ascontiguousarray(Z0)
    out[0] = Z
    for i in range(n):
        Z, _ = np.linalg.qr(np.ascontiguousarray(E[i]) @ Z)
        Z = np.ascontiguousarray(Z)
        out[i + 1] = Z
    return out


@njit(cache=True)
def _em_period_nb(x, xi, F, L, dt, rec_idx, out):
    ntraj = x.shape[0]
    n = F.shape[0]
    d = x.shape[1]
    m = xi.shape[2]
    nrec = rec_idx.shape[0]
    new = np.empty(d)
    for j in range(ntraj):
        r = 0
        for i in range(n):
            if r < nrec and rec_idx[r] == i:
                for a in range(d):
                    out[j, r, a] = x[j, a]
                r += 1
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += F[i, a, b] * x[j, b]
                acc *= dt
                for b in range(m):
                    acc += L[i, a, b] * xi[j, i, b]
                new[a] = x[j, a] + acc
            for a in range(d):
                x[j, a] = new[a]
    return x


# --------------------------------------------------------------------- numpy


def _riccati_rk4_period_np(X0, F, Q, G, dt):
    n = F.shape[0]
    out = np.empty((n + 1,) + X0.shape)
    X = np.array(X0, dtype=float)
    out[0] = X
    for i in range(n):
        F0, F1, F2 = F[i]
        k1 = _ric_rhs(X, F0, Q, G)
        k2 = _ric_rhs(X + 0.5 * dt * k1, F1, Q, G)
        k3 = _ric_rhs(X + 0.5 * dt * k2, F1, Q, G)
        k4 = _ric_rhs(X + dt * k3, F2, Q, G)
        X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = 0.5 * (X + X.T)
        out[i + 1] = X
    return out


def _lyapunov_rk4_period_np(X0, F, S, dt):
    n = F.shape[0]
    out = np.empty((n + 1,) + X0.shape)
    X = np.array(X0, dtype=float)
    out[0] = X
    for i in range(n):
        F0, F1, F2 = F[i]
        k1 = F0 @ X + X @ F0.T + S[i, 0]
        Y = X + 0.5 * dt * k1
        k2 = F1 @ Y + Y @ F1.T + S[i, 1]
        Y = X + 0.5 * dt * k2
        k3 = F1 @ Y + Y @ F1.T + S[i, 1]
        Y = X + dt * k3
        k4 = F2 @ Y + Y @ F2.T + S[i, 2]
        X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = 0.5 * (X + X.T)
        out[i + 1] = X
    return out


def _linear_rk4_period_np(Y0, F, dt):
    Y = np.array(Y0, dtype=float)
    for i in range(F.shape[0]):
        F0, F1, F2 = F[i]
        k1 = F0 @ Y
        k2 = F1 @ (Y + 0.5 * dt * k1)
        k3 = F1 @ (Y + 0.5 * dt * k2)
        k4 = F2 @ (Y + dt * k3)
        Y = Y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y


def _subspace_propagate_np(Z0, E):
    n = E.shape[0]
    out = np.empty((n + 1,) + Z0.shape)
    Z = np.array(Z0, dtype=float)
    out[0] = Z
    for i in range(n):
        Z, _ = np.linalg.qr(E[i] @ Z)
        out[i + 1] = Z
    return out


def _em_period_np(x, xi, F, L, dt, rec_idx, out):
    n = F.shape[0]
    r = 0
    for i in range(n):
        if r < len(rec_idx) and rec_idx[r] == i:
            out[:, r, :] = x
            r += 1
        x += dt * (x @ F[i].T) + xi[:, i, :] @ L[i].T
    return x


NUMBA_KERNELS = {
    "riccati_rk4_period": _riccati_rk4_period_nb,
    "lyapunov_rk4_period": _lyapunov_rk4_period_nb,
    "linear_rk4_period": _linear_rk4_period_nb,
    "subspace_propagate": _subspace_propagate_nb,
    "em_period": _em_period_nb,
}
NUMPY_KERNELS = {
    "riccati_rk4_period": _riccati_rk4_period_np,
    "lyapunov_rk4_period": _lyapunov_rk4_period_np,
    "linear_rk4_period": _linear_rk4_period_np,
    "subspace_propagate": _subspace_propagate_np,
    "em_period": _em_period_np,
}

_active = NUMBA_KERNELS if HAS_NUMBA else NUMPY_KERNELS

riccati_rk4_period = _active["riccati_rk4_period"]
lyapunov_rk4_period = _active["lyapunov_rk4_period"]
linear_rk4_period = _active["linear_rk4_period"]
subspace_propagate = _active["subspace_propagate"]
em_period = _active["em_period"]
