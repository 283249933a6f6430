"""Coherent spin states, partial traces and Husimi Q-functions.

Spin coherent states are ``|theta, phi> = exp{i theta (Sx sin(phi) - Sy cos(phi))} |N/2, N/2>``.
Two normalisations of the spin Q-function are offered:

* ``'normalized'`` (default): prefactor ``(N+1)/4pi``, integrates to one over the sphere;
* ``'unnormalized'``: prefactor ``(2N+1)/4pi``, integrates to (2N+1)/(N+1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid
from scipy.special import gammaln, gammaincc

from .errors import DimensionMismatch, GridTooSmall
from .hilbert import build_collective_spin_ops
from .spectrum import StateVector

CONVENTIONS = ("normalized", "unnormalized")
OUTSIDE_MASS_LIMIT = 1e-3


def coherent_spin_state(n_spins: int, theta: float, phi: float) -> np.ndarray:
    """Rotate the top Dicke state by the matrix exponential of the spin generator."""
    if not 0 <= theta <= np.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    sx, sy, _ = (op.toarray() for op in build_collective_spin_ops(n_spins))
    gen = theta * (sx * np.sin(phi) - sy * np.cos(phi))
    top = np.zeros(n_spins + 1, dtype=complex)
    top[0] = 1.0
    out = sla.expm(1j * gen) @ top
    return out / np.linalg.norm(out)


def coherent_spin_amplitudes(n_spins: int, theta, phi) -> np.ndarray:
    """Closed-form coherent-state amplitudes on the Dicke basis, up to a global phase.

    Returns an array of shape ``theta.shape + (N+1,)`` holding
    ``sqrt(C(N,k)) cos(theta/2)^(N-k) sin(theta/2)^k exp(i k phi)`` for ``m = N/2 - k``.
    """
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    k = np.arange(n_spins + 1)
    log_binom = 0.5 * (gammaln(n_spins + 1) - gammaln(k + 1) - gammaln(n_spins - k + 1))
    c, s = np.abs(np.cos(theta / 2)), np.abs(np.sin(theta / 2))
    # log space avoids overflow of the binomial at large N; 0 * log 0 is taken as 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_c = np.where(n_spins - k > 0, (n_spins - k) * np.log(c), 0.0)
        log_s = np.where(k > 0, k * np.log(s), 0.0)
    mag = np.exp(log_binom + log_c + log_s)
    sign = np.where(np.cos(theta / 2) < 0, (-1.0) ** (n_spins - k), 1.0)
    return sign * mag * np.exp(1j * k * phi)


# ---------------------------------------------------------------------------
# partial traces


def _split_dims(x, dims):
    if isinstance(x, StateVector):
        return x.data, (x.boson_cutoff, x.n_spins + 1)
    x = np.asarray(x)
    if dims is None:
        raise DimensionMismatch("dims=(boson_dim, spin_dim) required for a bare array")
    if x.shape[0] != dims[0] * dims[1]:
        raise DimensionMismatch(f"array of size {x.shape[0]} does not factor as {dims}")
    return x, tuple(int(d) for d in dims)


def _reduce(x, dims, keep):
    data, (db, ds) = _split_dims(x, dims)
    if data.ndim == 1:
        m = data.reshape(db, ds)
        out = m.T @ m.conj() if keep == "spin" else m @ m.conj().T
    elif data.ndim == 2 and data.shape[0] == data.shape[1]:
        r = data.reshape(db, ds, db, ds)
        out = np.einsum("nknl->kl", r) if keep == "spin" else np.einsum("nkmk->nm", r)
    else:
        raise DimensionMismatch(f"expected a state vector or square density matrix, got shape {data.shape}")
    return 0.5 * (out + out.conj().T)


def reduce_spin(x, dims=None) -> np.ndarray:
    """Trace out the boson. ``dims`` is ``(boson_dim, spin_dim)`` for bare arrays."""
    return _reduce(x, dims, "spin")


def reduce_boson(x, dims=None) -> np.ndarray:
    """Trace out the spin. ``dims`` is ``(boson_dim, spin_dim)`` for bare arrays."""
    return _reduce(x, dims, "boson")


def _check_density(rho, tol=1e-8):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch("density matrix must be square")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace {tr} differs from 1")
    return rho


def _check_grid(values, name):
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2 or np.any(np.diff(values) <= 0):
        raise ValueError(f"{name} grid must be strictly increasing with at least 2 points")
    return values


# ---------------------------------------------------------------------------
# spin Q-function


@dataclass
class SpinQGrid:
    theta: np.ndarray
    phi: np.ndarray
    q: np.ndarray  # shape (n_theta, n_phi)
    convention: str
    n_spins: int

    def integral(self) -> float:
        """Trapezoidal quadrature of Q sin(theta) over the sampled sphere patch."""
        inner = trapezoid(self.q, self.phi, axis=1)
        return float(trapezoid(inner * np.sin(self.theta), self.theta))

    def rows(self):
        for i, t in enumerate(self.theta):
            for j, p in enumerate(self.phi):
                yield (float(t), float(p), float(self.q[i, j]))

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(int(np.argmax(self.q)), self.q.shape)
        return float(self.theta[i]), float(self.phi[j])


def spin_q_prefactor(n_spins: int, convention: str) -> float:
    if convention == "normalized":
        return (n_spins + 1) / (4 * np.pi)
    if convention == "unnormalized":
        return (2 * n_spins + 1) / (4 * np.pi)
    raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


def spin_q(rho_spin, theta, phi, convention: str = "normalized") -> SpinQGrid:
    """Husimi function ``pref * <theta,phi| rho |theta,phi>`` on a (theta, phi) grid."""
    rho = _check_density(rho_spin)
    n = rho.shape[0] - 1
    pref = spin_q_prefactor(n, convention)
    theta = _check_grid(theta, "theta")
    phi = _check_grid(phi, "phi")
    if theta[0] < 0 or theta[-1] > np.pi + 1e-12:
        raise ValueError("theta grid must lie in [0, pi]")
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    amps = coherent_spin_amplitudes(n, tt, pp).reshape(-1, n + 1)
    q = np.einsum("pk,pk->p", amps.conj(), amps @ rho.T).real
    return SpinQGrid(theta, phi, pref * q.reshape(tt.shape), convention, n)


# ---------------------------------------------------------------------------
# boson Q-function


def truncated_coherent_amplitudes(alpha, boson_cutoff: int) -> np.ndarray:
    """Fock amplitudes of ``|alpha>`` on ``n < N_b``, renormalised after truncation."""
    alpha = np.asarray(alpha, dtype=complex).ravel()
    n = np.arange(boson_cutoff)
    r = np.abs(alpha)[:, None]
    with np.errstate(divide="ignore"):
        logmag = np.where(r > 0, n * np.log(np.where(r > 0, r, 1.0)), np.where(n == 0, 0.0, -np.inf))
    logmag = logmag - 0.5 * gammaln(n + 1)
    logmag -= logmag.max(axis=1, keepdims=True)
    amps = np.exp(logmag) * np.exp(1j * n * np.angle(alpha)[:, None])
    return amps / np.linalg.norm(amps, axis=1, keepdims=True)


@dataclass
class BosonQGrid:
    x: np.ndarray
    y: np.ndarray
    q: np.ndarray  # shape (n_x, n_y)
    outside_mass: float

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.q, self.y, axis=1), self.x))

    def rows(self):
        for i, a in enumerate(self.x):
            for j, b in enumerate(self.y):
                yield (float(a), float(b), float(self.q[i, j]))

    def real_axis_maxima(self) -> np.ndarray:
        """x positions of strict local maxima of Q along the y = 0 row (nearest row)."""
        j = int(np.argmin(np.abs(self.y)))
        line = self.q[:, j]
        idx = [i for i in range(1, len(line) - 1) if line[i] > line[i - 1] and line[i] > line[i + 1]]
        return self.x[idx]


def outside_mass_estimate(rho_boson, radius: float) -> float:
    """Q-weight beyond ``|alpha| = radius``: sum_n p_n Gamma(n+1, R^2)/n!."""
    p = np.clip(np.diag(np.asarray(rho_boson)).real, 0, None)
    n = np.arange(len(p))
    return float(np.sum(p * gammaincc(n + 1, radius**2)))


def boson_q(rho_boson, x, y, check_support: bool = True) -> BosonQGrid:
    """Husimi function ``<alpha|rho|alpha>/pi`` on the grid ``alpha = x + i y``.

    Raises
    ------
    GridTooSmall
        If the estimated Q-weight outside the largest origin-centred disk
        inscribed in the grid exceeds 1e-3.
    """
    rho = _check_density(rho_boson)
    x = _check_grid(x, "x")
    y = _check_grid(y, "y")
    radius = max(0.0, min(-x[0], x[-1], -y[0], y[-1]))
    outside = outside_mass_estimate(rho, radius)
    if check_support and outside > OUTSIDE_MASS_LIMIT:
        raise GridTooSmall(f"estimated Q-weight {outside:.2e} lies outside a grid of radius {radius:g}")
    xx, yy = np.meshgrid(x, y, indexing="ij")
    amps = truncated_coherent_amplitudes(xx + 1j * yy, rho.shape[0])
    q = np.einsum("pk,pk->p", amps.conj(), amps @ rho.T).real / np.pi
    return BosonQGrid(x, y, q.reshape(xx.shape), outside)


def coherent_mixture_q(beta: float, x, y) -> np.ndarray:
    """Q of the equal mixture of ``|beta>`` and ``|-beta>`` (untruncated)."""
    xx, yy = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    a = xx + 1j * yy
    return (np.exp(-np.abs(a - beta) ** 2) + np.exp(-np.abs(a + beta) ** 2)) / (2 * np.pi)
