"""Krylov-subspace action of the matrix exponential, ``exp(-i t K) v``.

Only matrix-vector products with ``K`` are needed, so the generator may be a
dense array, a scipy sparse matrix, or any callable ``v -> K v``. For
Hermitian ``K`` the basis is built by Lanczos (three-term recurrence); for a
general generator by Arnoldi. Long steps are split adaptively using the
usual a-posteriori error estimate ``h_{m+1,m} |[exp(-i tau H_m)]_{m,0}|``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NonConverged


def _as_matvec(op):
    if callable(op):
        return op
    return lambda x: op @ x


@dataclass
class KrylovStats:
    matvecs: int = 0
    substeps: int = 0
    max_error: float = 0.0


def _small_expm(h, tau, hermitian):
    if hermitian:
        # real symmetric tridiagonal projection: diagonalise instead of Pade
        w, u = np.linalg.eigh(h.real)
        return (u * np.exp(-1j * tau * w)) @ u.T
    return sla.expm(-1j * tau * h)


def _build_basis(matvec, v, m, hermitian, tau=None, target=None):
    """Arnoldi/Lanczos basis of up to ``m`` vectors.

    With ``tau`` and ``target`` the build stops early once the error estimate
    for a step of length ``tau`` falls below ``target``.
    """
    n = v.shape[0]
    beta = np.linalg.norm(v)
    basis = np.zeros((m + 1, n), dtype=complex)
    h = np.zeros((m + 1, m), dtype=complex)
    basis[0] = v / beta
    breakdown = False
    k = m
    for j in range(m):
        w = matvec(basis[j])
        if hermitian:
            if j > 0:
                w = w - h[j - 1, j] * basis[j - 1]
            h[j, j] = np.vdot(basis[j], w).real
            w = w - h[j, j] * basis[j]
            # one pass of full reorthogonalisation keeps the Lanczos basis clean
            w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        else:
            for i in range(j + 1):
                h[i, j] = np.vdot(basis[i], w)
                w = w - h[i, j] * basis[i]
            corr = basis[: j + 1].conj() @ w
            h[: j + 1, j] += corr
            w = w - basis[: j + 1].T @ corr
        nrm = np.linalg.norm(w)
        h[j + 1, j] = nrm
        if hermitian and j + 1 < m:
            h[j, j + 1] = nrm
        if nrm < 1e-13 * max(1.0, abs(h[j, j])):
            breakdown = True
            k = j + 1
            break
        basis[j + 1] = w / nrm
        if target is not None and j >= 3 and j % 2 == 1:
            small = _small_expm(h[: j + 1, : j + 1], tau, hermitian)
            if beta * nrm * abs(small[j, 0]) <= target:
                k = j + 1
                break
    return basis, h, beta, k, breakdown


def _target(tol, norm0, tau):
    # per-unit-time tolerance, floored at roundoff so tiny steps cannot underflow it
    return norm0 * max(tol * tau, 4 * np.finfo(float).eps)


def expm_krylov(
    op,
    v: np.ndarray,
    t: float,
    m: int = 30,
    tol: float = 1e-12,
    hermitian: bool = True,
    stats: KrylovStats | None = None,
    max_substeps: int = 10000,
) -> np.ndarray:
    """Return ``exp(-i t K) v`` for a generator ``K`` given by ``op``.

    The subspace grows until the error estimate for the current substep meets
    the tolerance, up to ``m`` vectors; beyond that the step is halved.

    Parameters
    ----------
    op : array, sparse matrix or callable
        The generator ``K``; a callable must map a complex vector to ``K v``.
    v : ndarray
        Starting vector.
    t : float
        Evolution time (may be negative).
    m : int
        Krylov subspace size per substep.
    tol : float
        Target local error per unit time, relative to ``|v|``.
    hermitian : bool
        Use the Lanczos recurrence (``K`` Hermitian) instead of Arnoldi.
    """
    matvec = _as_matvec(op)
    w = np.array(v, dtype=complex)
    norm0 = np.linalg.norm(w)
    if norm0 == 0 or t == 0:
        return w
    m = max(2, min(m, w.shape[0]))
    t_left = abs(t)
    sign = 1.0 if t > 0 else -1.0
    tau = t_left
    substeps = 0
    while t_left > 0:
        tau = min(tau, t_left)
        basis, h, beta, k, breakdown = _build_basis(matvec, w, m, hermitian, sign * tau, _target(tol, norm0, tau))
        if stats is not None:
            stats.matvecs += k
        hk = h[:k, :k]
        while True:
            tau = min(tau, t_left)
            small = _small_expm(hk, sign * tau, hermitian)
            if breakdown:
                err = 0.0
            else:
                err = beta * abs(h[k, k - 1]) * abs(small[k - 1, 0])
            if err <= _target(tol, norm0, tau) or breakdown:
                break
            tau *= 0.5
            if tau < 1e-14 * abs(t):
                raise NonConverged("Krylov step size collapsed; generator norm too large for subspace size")
        w = beta * (basis[:k].T @ small[:, 0])
        t_left -= tau
        substeps += 1
        if stats is not None:
            stats.substeps += 1
            stats.max_error = max(stats.max_error, err)
        if substeps > max_substeps:
            raise NonConverged("Krylov propagation exceeded the substep budget")
        # try a larger step next time if this one was comfortably accurate
        if err < 0.1 * tol * norm0 * tau:
            tau *= 2.0
    return w
