"""Compiled double-precision kernels for the cG(q) fast path.

The stepping loop mirrors :func:`cgq.primal._step_generic` operation for
operation; it exists because long double-precision sweeps (10^6 and more
intervals) are out of reach for the interpreted path. Kernels are only used
for ``digits <= 16``.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

AVAILABLE = numba is not None

# status codes returned by the stepper
OK = 0
DIVERGED = 1


def _jit(fn):
    return numba.njit(cache=True, fastmath=False)(fn) if AVAILABLE else fn


# right-hand sides write into ``out``; Jacobians return a new matrix and are
# only called on Newton iterations


@_jit
def lorenz_f(u, t, prm, out):
    out[0] = prm[0] * (u[1] - u[0])
    out[1] = prm[1] * u[0] - u[1] - u[0] * u[2]
    out[2] = u[0] * u[1] - prm[2] * u[2]


@_jit
def lorenz_jac(u, t, prm):
    J = np.empty((3, 3))
    J[0, 0] = -prm[0]
    J[0, 1] = prm[0]
    J[0, 2] = 0.0
    J[1, 0] = prm[1] - u[2]
    J[1, 1] = -1.0
    J[1, 2] = -u[0]
    J[2, 0] = u[1]
    J[2, 1] = u[0]
    J[2, 2] = -prm[2]
    return J


@_jit
def vdp_f(u, t, prm, out):
    out[0] = u[1]
    out[1] = prm[0] * (1.0 - u[0] * u[0]) * u[1] - u[0]


@_jit
def vdp_jac(u, t, prm):
    J = np.empty((2, 2))
    J[0, 0] = 0.0
    J[0, 1] = 1.0
    J[1, 0] = -2.0 * prm[0] * u[0] * u[1] - 1.0
    J[1, 1] = prm[0] * (1.0 - u[0] * u[0])
    return J


@_jit
def linear_f(u, t, prm, out):
    n = u.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += prm[i * n + j] * u[j]
        out[i] = acc


@_jit
def linear_jac(u, t, prm):
    n = u.shape[0]
    J = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            J[i, j] = prm[i * n + j]
    return J


KERNELS = {
    "lorenz": (lorenz_f, lorenz_jac),
    "vanderpol": (vdp_f, vdp_jac),
    "linear": (linear_f, linear_jac),
}


@_jit
def cg_march(f, jac, prm, u0, nodes, lam, W, x, tol, newton_after, max_iter,
             lookahead, store, values):
    """March cG(q) over all intervals.

    ``lam`` is the (n, q+1) basis table at quadrature points, ``W`` the
    (q, n) nodal weight matrix. When ``store`` is true the nodal values go
    to ``values`` (shape (M, q+1, N)). Returns (status, interval, final
    value, total iterations, max iterations on one interval).
    """
    M = nodes.shape[0] - 1
    N = u0.shape[0]
    n = x.shape[0]
    q = W.shape[0]
    U0 = u0.copy()
    Y = np.empty((q, N))
    Ynew = np.empty((q, N))
    P = np.empty((n, N))
    G = np.empty((n, N))
    total_iters = 0
    worst = 0
    for m in range(M):
        t0 = nodes[m]
        dt = nodes[m + 1] - nodes[m]
        for k in range(q):
            for i in range(N):
                Y[k, i] = U0[i]
        newton = newton_after == 0
        prev = np.inf
        converged = False
        it = 0
        while it < max_iter:
            it += 1
            for j in range(n):
                for i in range(N):
                    acc = lam[j, 0] * U0[i]
                    for l in range(q):
                        acc += lam[j, l + 1] * Y[l, i]
                    P[j, i] = acc
                f(P[j], t0 + x[j] * dt, prm, G[j])
            upd = 0.0
            scale = 0.0
            if not newton:
                for k in range(q):
                    for i in range(N):
                        acc = 0.0
                        for j in range(n):
                            acc += W[k, j] * G[j, i]
                        Ynew[k, i] = U0[i] + dt * acc
                        d = abs(Ynew[k, i] - Y[k, i])
                        if d > upd:
                            upd = d
                for k in range(q):
                    for i in range(N):
                        Y[k, i] = Ynew[k, i]
                        if abs(Y[k, i]) > scale:
                            scale = abs(Y[k, i])
                target = tol * (1.0 + scale)
                if upd <= target:
                    converged = True
                    break
                if it >= newton_after:
                    newton = True
                elif it > 1:
                    if upd >= prev:
                        newton = True
                    elif upd > 0.0 and (np.log10(target) - np.log10(upd)
                                        < lookahead * (np.log10(upd) - np.log10(prev))):
                        newton = True
                prev = upd
            else:
                size = q * N
                Jb = np.zeros((size, size))
                F = np.empty(size)
                for k in range(q):
                    for i in range(N):
                        acc = 0.0
                        for j in range(n):
                            acc += W[k, j] * G[j, i]
                        F[k * N + i] = Y[k, i] - U0[i] - dt * acc
                        Jb[k * N + i, k * N + i] = 1.0
                for j in range(n):
                    Jj = jac(P[j], t0 + x[j] * dt, prm)
                    for k in range(q):
                        for l in range(q):
                            c = dt * W[k, j] * lam[j, l + 1]
                            for a in range(N):
                                for b in range(N):
                                    Jb[k * N + a, l * N + b] -= c * Jj[a, b]
                delta = np.linalg.solve(Jb, F)
                for k in range(q):
                    for i in range(N):
                        d = delta[k * N + i]
                        Y[k, i] -= d
                        if abs(d) > upd:
                            upd = abs(d)
                        if abs(Y[k, i]) > scale:
                            scale = abs(Y[k, i])
                if upd <= tol * (1.0 + scale):
                    converged = True
                    break
        total_iters += it
        if it > worst:
            worst = it
        if not converged:
            return DIVERGED, m, U0, total_iters, worst
        if store:
            for i in range(N):
                values[m, 0, i] = U0[i]
            for k in range(q):
                for i in range(N):
                    values[m, k + 1, i] = Y[k, i]
        for i in range(N):
            U0[i] = Y[q - 1, i]
    return OK, M, U0, total_iters, worst
