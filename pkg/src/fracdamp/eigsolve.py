"""Matrix-free smallest-eigenvalue solvers for Hermitian positive operators.

Operators are given as ``matvec(V)`` acting on the columns of a complex
``(N, k)`` array.  The driver :func:`smallest_eigenpair` runs a shifted
power iteration first and hands over to a Krylov method once progress
stalls: preconditioned LOBPCG when a preconditioner is supplied, restarted
Lanczos with full reorthogonalisation otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
# residual floor in units of eps * ||A||; below this no double-precision method can go
FLOOR_FACTOR = 64.0


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    method: str
    tol_used: float


def _cols(v):
    return v.reshape(-1, 1) if v.ndim == 1 else v


def residual_norm(matvec, x, theta):
    """||A x - theta x|| / ||x|| with a fresh operator application."""
    x = _cols(x)
    r = matvec(x)[:, 0] - theta * x[:, 0]
    return float(np.linalg.norm(r) / np.linalg.norm(x))


def _orthonormalize(Z, basis=None, drop=1e-10):
    """Orthonormalise the columns of Z (against ``basis`` first), dropping near-dependent ones."""
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            Z = Z - basis @ (basis.conj().T @ Z)
        if Z.shape[1] == 0:
            return Z
        Q, R = np.linalg.qr(Z)
        diag = np.abs(np.diag(R))
        keep = diag > drop * max(diag.max(), 1e-300)
        Z = Q[:, keep]
    return Z


def lobpcg_smallest(matvec, x0, precond=None, tol=1e-8, maxiter=500, block=3, rng=None):
    """Block LOBPCG for the smallest eigenpair; ``x0`` seeds the first column."""
    rng = rng if rng is not None else np.random.default_rng(0)
    x0 = _cols(np.asarray(x0, dtype=complex))
    N = x0.shape[0]
    k = max(1, min(block, N))
    X = np.empty((N, k), dtype=complex)
    X[:, :1] = x0
    if k > 1:
        X[:, 1:] = rng.standard_normal((N, k - 1)) + 1j * rng.standard_normal((N, k - 1))
    X = _orthonormalize(X)
    k = X.shape[1]
    AX = matvec(X)
    H = X.conj().T @ AX
    theta, C = scipy.linalg.eigh(0.5 * (H + H.conj().T))
    X, AX = X @ C, AX @ C
    P = np.zeros((N, 0), dtype=complex)
    res = np.inf
    for it in range(1, maxiter + 1):
        R = AX - X * theta
        res = float(np.linalg.norm(R[:, 0]))
        if res <= tol:
            return EigenResult(float(theta[0]), X[:, 0], res, it, "lobpcg", tol)
        W = precond(R) if precond is not None else R
        W = _orthonormalize(W, X)
        P = _orthonormalize(P, np.hstack([X, W])) if P.shape[1] else P
        Q = np.hstack([X, W, P])
        AQ = np.hstack([AX, matvec(W) if W.shape[1] else W, matvec(P) if P.shape[1] else P])
        H = Q.conj().T @ AQ
        vals, vecs = scipy.linalg.eigh(0.5 * (H + H.conj().T))
        Ck = vecs[:, :k]
        Xn, AXn = Q @ Ck, AQ @ Ck
        P = Q[:, k:] @ Ck[k:, :]
        X, AX, theta = Xn, AXn, vals[:k]
    raise ConvergenceError(f"LOBPCG did not converge in {maxiter} iterations (residual {res:.3e})",
                           residual=res, iterations=maxiter)


def lanczos_smallest(matvec, x0, tol=1e-8, krylov_dim=200, max_restarts=200):
    """Explicitly restarted Lanczos with full reorthogonalisation.

    The Krylov space is rebuilt from the current Ritz vector at each restart.
    When the space becomes invariant (or spans everything) the Ritz value is exact.
    """
    x = np.asarray(x0, dtype=complex).ravel()
    N = x.size
    m = min(krylov_dim, N)
    res = np.inf
    total = 0
    for restart in range(max_restarts):
        V = np.zeros((N, m + 1), dtype=complex)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[:, 0] = x / np.linalg.norm(x)
        j_end = m
        for j in range(m):
            w = matvec(V[:, j:j + 1])[:, 0]
            total += 1
            alpha[j] = float(np.real(np.vdot(V[:, j], w)))
            # full reorthogonalisation, twice
            for _ in range(2):
                w = w - V[:, :j + 1] @ (V[:, :j + 1].conj().T @ w)
            beta[j] = float(np.linalg.norm(w))
            if beta[j] <= 1e-14 * max(abs(alpha[j]), 1.0) or j + 1 == N:
                j_end = j + 1
                break
            V[:, j + 1] = w / beta[j]
        a, b = alpha[:j_end], beta[:j_end - 1]
        vals, vecs = scipy.linalg.eigh_tridiagonal(a, b) if j_end > 1 else (a, np.ones((1, 1)))
        y = vecs[:, 0]
        x = V[:, :j_end] @ y
        x /= np.linalg.norm(x)
        res = residual_norm(matvec, x, vals[0])
        if res <= tol:
            return EigenResult(float(vals[0]), x, res, total, "lanczos", tol)
    raise ConvergenceError(f"Lanczos did not converge after {max_restarts} restarts (residual {res:.3e})",
                           residual=res, iterations=total)


def shifted_power(matvec, x0, shift, tol, maxiter=2000, window=50, min_gain=1e-3):
    """Power iteration on (shift*I - A).

    Returns ``(x, theta, residual, iterations, stalled)``; stalls when the
    residual improves by less than a relative ``min_gain`` over ``window`` steps.
    """
    x = np.asarray(x0, dtype=complex).ravel()
    x = x / np.linalg.norm(x)
    history = []
    theta, res = np.nan, np.inf
    for it in range(1, maxiter + 1):
        Ax = matvec(x[:, None])[:, 0]
        theta = float(np.real(np.vdot(x, Ax)))
        res = float(np.linalg.norm(Ax - theta * x))
        if res <= tol:
            return x, theta, res, it, False
        history.append(res)
        if len(history) > window and history[-1] > (1 - min_gain) * history[-1 - window]:
            return x, theta, res, it, True
        y = shift * x - Ax
        x = y / np.linalg.norm(y)
    return x, theta, res, maxiter, True


def smallest_eigenpair(matvec, n, *, shift, tol=1e-8, precond=None, x0=None, seed=0,
                       norm_estimate=None, maxiter=2000, power_iters=60):
    """Smallest eigenpair of a Hermitian positive semidefinite operator of size ``n``.

    ``shift`` is an upper bound on the spectrum; it drives the power phase and
    sets the residual floor ``FLOOR_FACTOR * eps * shift`` when no sharper
    ``norm_estimate`` is given.  The returned residual is recomputed from a fresh
    application of the operator.
    """
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    norm_est = shift if norm_estimate is None else norm_estimate
    tol_used = max(tol, FLOOR_FACTOR * _EPS * norm_est)
    x, theta, res, iters, stalled = shifted_power(matvec, x0, shift, tol_used, maxiter=power_iters)
    if not stalled:
        return EigenResult(theta, x, res, iters, "power", tol_used)
    log.debug("power iteration stalled at residual %.3e after %d steps", res, iters)
    if precond is not None:
        out = lobpcg_smallest(matvec, x, precond=precond, tol=tol_used, maxiter=maxiter, rng=rng)
    else:
        out = lanczos_smallest(matvec, x, tol=tol_used, krylov_dim=min(n, 300))
    out.iterations += iters
    out.residual = residual_norm(matvec, out.vector, out.value)
    out.tol_used = tol_used
    if out.residual > 4 * tol_used:
        raise ConvergenceError(f"certified residual {out.residual:.3e} exceeds {tol_used:.3e}",
                               residual=out.residual, iterations=out.iterations)
    return out
