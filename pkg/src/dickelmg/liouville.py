"""Liouville-space representation of density-matrix dynamics.

Two single-body orderings are supported:

``'row'``
    ``v[m*d + n] = rho[m, n]``; ``O rho -> O (x) I``, ``rho O -> I (x) O^T``,
    ``O1 rho O2 -> O1 (x) O2^T``.
``'column'``
    ``v[n*d + m] = rho[m, n]``; ``O rho -> I (x) O``, ``rho O -> O^T (x) I``,
    ``O1 rho O2 -> O2^T (x) O1``.

Closed-system evolution uses ``L = -i (H_left - H_right)``. Since
``K = H_left - H_right`` is Hermitian for Hermitian H, each step is a
Lanczos action of ``exp(-i K dt)``. Above ``MATRIX_FREE_DIM`` the
superoperator is never formed; ``K v`` is computed as ``vec(H rho - rho H)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NonHermitianInput, StepNonConverged
from .krylov import expm_krylov

CONVENTIONS = ("row", "column")
MATRIX_FREE_DIM = 1600


def _check_convention(convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


@dataclass(frozen=True)
class VectorizedState:
    data: np.ndarray
    convention: str = "row"

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.data.shape[0])))


@dataclass(frozen=True)
class SuperOperator:
    matrix: object  # dense or sparse, d^2 x d^2
    convention: str = "row"

    def __matmul__(self, other):
        data = other.data if isinstance(other, VectorizedState) else other
        out = self.matrix @ data
        return VectorizedState(out, self.convention) if isinstance(other, VectorizedState) else out

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)


def vectorize(rho, convention: str = "row") -> VectorizedState:
    _check_convention(convention)
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {rho.shape}")
    order = "C" if convention == "row" else "F"
    return VectorizedState(rho.reshape(-1, order=order).copy(), convention)


def devectorize(v, convention: str | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`; an explicit ``convention`` overrides the tag."""
    if isinstance(v, VectorizedState):
        convention = convention or v.convention
        v = v.data
    convention = convention or "row"
    _check_convention(convention)
    v = np.asarray(v)
    d = int(round(np.sqrt(v.shape[0])))
    if d * d != v.shape[0]:
        raise DimensionMismatch(f"length {v.shape[0]} is not a perfect square")
    return v.reshape(d, d, order="C" if convention == "row" else "F")


def _kron(a, b):
    if sp.issparse(a) or sp.issparse(b):
        return sp.kron(sp.csr_matrix(a), sp.csr_matrix(b), format="csr")
    return np.kron(a, b)


def _eye_like(o):
    n = o.shape[0]
    return sp.identity(n, dtype=complex, format="csr") if sp.issparse(o) else np.eye(n, dtype=complex)


def _square(o):
    if o.ndim != 2 or o.shape[0] != o.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {o.shape}")
    return o


def _as_op(o):
    o = o.data if hasattr(o, "data") and hasattr(o, "hermitian") else o
    return _square(o if sp.issparse(o) else np.asarray(o))


def left_superop(o, convention: str = "row") -> SuperOperator:
    """Superoperator of ``rho -> O rho``."""
    _check_convention(convention)
    o = _as_op(o)
    i = _eye_like(o)
    return SuperOperator(_kron(o, i) if convention == "row" else _kron(i, o), convention)


def right_superop(o, convention: str = "row") -> SuperOperator:
    """Superoperator of ``rho -> rho O``."""
    _check_convention(convention)
    o = _as_op(o)
    i = _eye_like(o)
    return SuperOperator(_kron(i, o.T) if convention == "row" else _kron(o.T, i), convention)


def sandwich_superop(o1, o2, convention: str = "row") -> SuperOperator:
    """Superoperator of ``rho -> O1 rho O2``."""
    _check_convention(convention)
    o1, o2 = _as_op(o1), _as_op(o2)
    if o1.shape != o2.shape:
        raise DimensionMismatch("sandwich operators must share a dimension")
    return SuperOperator(_kron(o1, o2.T) if convention == "row" else _kron(o2.T, o1), convention)


def _abs_max(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.abs(m).max()) if m.size else 0.0


def _check_hermitian(h, tol=1e-12):
    err = _abs_max(h - h.conj().T)
    if err > tol * max(1.0, _abs_max(h)):
        raise NonHermitianInput(f"Hamiltonian is not Hermitian (max deviation {err:.2e})")


def bath_superoperator(*args, **kwargs):
    """Extension point for fluctuation-dissipation terms of an open system; not provided."""
    raise NotImplementedError("bath (dissipative) superoperators are not implemented")


def liouvillian(h, convention: str = "row", bath=None) -> SuperOperator:
    """``L = -i (H_left - H_right)`` so that ``d|rho>/dt = L |rho>``."""
    h = _as_op(h)
    _check_hermitian(h)
    if bath is not None:
        bath_superoperator(bath)
    left = left_superop(h, convention).matrix
    right = right_superop(h, convention).matrix
    return SuperOperator(-1j * (left - right), convention)


def commutator_generator(h, convention: str = "row"):
    """Hermitian ``K = H_left - H_right`` as an explicit matrix or a matrix-free callable."""
    h = _as_op(h)
    d = h.shape[0]
    if d > MATRIX_FREE_DIM:
        order = "C" if convention == "row" else "F"

        def matvec(v):
            rho = v.reshape(d, d, order=order)
            return np.asarray(h @ rho - rho @ h).reshape(-1, order=order)

        return matvec
    return sp.csr_matrix(left_superop(h, convention).matrix) - sp.csr_matrix(right_superop(h, convention).matrix)


def expectation_from_vectorized(v, o, convention: str | None = None) -> complex:
    """``Tr[rho O]`` as the Liouville inner product ``<O^dagger | rho>``."""
    if isinstance(v, VectorizedState):
        convention = convention or v.convention
        v = v.data
    convention = convention or "row"
    o = _as_op(o)
    o = o.toarray() if sp.issparse(o) else o
    if o.shape[0] ** 2 != np.asarray(v).shape[0]:
        raise DimensionMismatch("operator and vectorized state dimensions differ")
    return complex(np.vdot(vectorize(o.conj().T, convention).data, v))


# ---------------------------------------------------------------------------
# evolution


@dataclass
class LiouvilleTrajectory:
    times: np.ndarray
    expectations: dict[str, np.ndarray]
    stored_times: np.ndarray
    states: list[np.ndarray]
    convention: str
    trace_drift: float = 0.0
    hermiticity_error: float = 0.0
    metadata: dict = field(default_factory=dict)


def _check_physical(rho, tol=1e-10):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch("initial state must be a square matrix")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("initial density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol:
        raise ValueError("initial density matrix does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValueError("initial density matrix is not positive semidefinite")
    return rho.astype(complex)


def evolve_liouville(
    rho0,
    hamiltonian: Callable[[float], object] | object,
    dt: float,
    t_final: float,
    convention: str = "row",
    observables: dict | None = None,
    store_every: int | None = None,
    krylov_dim: int = 30,
    tol: float = 1e-12,
) -> LiouvilleTrajectory:
    """Step ``|rho>`` with ``exp(L(t_k + dt/2) dt)`` from 0 to ``t_final``.

    ``hamiltonian`` is a fixed matrix or a callable ``t -> H(t)``. Observables
    are recorded at every step; full density matrices every ``store_every``
    steps (default: first and last only).
    """
    _check_convention(convention)
    rho0 = _check_physical(rho0)
    if not dt > 0 or not t_final >= 0:
        raise ValueError("dt must be positive and t_final non-negative")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer multiple of dt")
    h_of_t = hamiltonian if callable(hamiltonian) else (lambda t, _h=hamiltonian: _h)
    static = not callable(hamiltonian)
    observables = observables or {}
    obs_vecs = {k: vectorize(_as_dense(o).conj().T, convention).data for k, o in observables.items()}

    v = vectorize(rho0, convention).data
    times = dt * np.arange(n_steps + 1)
    expectations = {k: np.zeros(n_steps + 1, dtype=complex) for k in observables}
    stored_t, states = [], []

    def record(step, vec):
        for k, ov in obs_vecs.items():
            expectations[k][step] = np.vdot(ov, vec)
        if (store_every and step % store_every == 0) or step in (0, n_steps):
            stored_t.append(times[step])
            states.append(devectorize(vec, convention).copy())

    record(0, v)
    gen = None
    for k in range(n_steps):
        h = h_of_t(times[k] + 0.5 * dt)
        _check_hermitian(_as_op(h))
        if gen is None or not static:
            gen = commutator_generator(h, convention)
        v = expm_krylov(gen, v, dt, m=krylov_dim, tol=tol, hermitian=True)
        record(k + 1, v)

    final = devectorize(v, convention)
    traj = LiouvilleTrajectory(
        times=times,
        expectations={k: (e.real if np.abs(e.imag).max() < 1e-10 else e) for k, e in expectations.items()},
        stored_times=np.array(stored_t),
        states=states,
        convention=convention,
        trace_drift=float(abs(np.trace(final) - 1)),
        hermiticity_error=float(np.abs(final - final.conj().T).max()),
        metadata={"representation": "liouville", "convention": convention, "dt": dt, "t_final": t_final},
    )
    return traj


def _as_dense(o):
    o = _as_op(o)
    return o.toarray() if sp.issparse(o) else o


def liouville_gain_check(rho0, hamiltonian, number_op, dt, t_final, convention="row", threshold=0.01, **kw):
    """Halving-step guard on the gain at its first peak, as for Hilbert-space runs."""
    from .dynamics import first_peak_index

    out = []
    for step in (dt, dt / 2):
        tr = evolve_liouville(rho0, hamiltonian, step, t_final, convention, {"n": number_op}, **kw)
        g = tr.expectations["n"].real / tr.expectations["n"][0].real
        i = first_peak_index(g)
        out.append((tr, g, i))
    (t1, g1, i1), (t2, g2, _) = out
    if i1 is None:
        return t1, float("nan")
    # the dt/2 run samples the same physical time at twice the index
    rel = abs(g2[2 * i1] - g1[i1]) / abs(g1[i1])
    if rel > threshold:
        raise StepNonConverged(f"gain at first peak changed by {100 * rel:.2f}% under dt -> dt/2")
    return t1, rel


# ---------------------------------------------------------------------------
# two-body orderings


def multibody_vectorize(rho, dims: tuple[int, ...], scheme: str = "i") -> np.ndarray:
    """Vectorize a density matrix of subsystems with dimensions ``dims``.

    Scheme ``'i'``: all kets, then all bras, index ``(m_1..m_k; n_1..n_k)``.
    Scheme ``'ii'``: ket-bra pairs per subsystem, index ``(m_1 n_1; ...; m_k n_k)``.
    """
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    rho = np.asarray(rho)
    if rho.shape != (total, total):
        raise DimensionMismatch(f"density matrix shape {rho.shape} does not match dims {dims}")
    if scheme == "i":
        return rho.reshape(-1).copy()
    if scheme == "ii":
        k = len(dims)
        t = rho.reshape(dims + dims)
        perm = [ax for j in range(k) for ax in (j, k + j)]
        return t.transpose(perm).reshape(-1).copy()
    raise ValueError(f"unknown scheme {scheme!r}; expected 'i' or 'ii'")


def multibody_devectorize(v, dims: tuple[int, ...], scheme: str = "i") -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    v = np.asarray(v)
    if scheme == "i":
        return v.reshape(total, total)
    if scheme == "ii":
        k = len(dims)
        t = v.reshape([d for dd in dims for d in (dd, dd)])
        perm = [2 * j for j in range(k)] + [2 * j + 1 for j in range(k)]
        return t.transpose(perm).reshape(total, total)
    raise ValueError(f"unknown scheme {scheme!r}; expected 'i' or 'ii'")


def multibody_sandwich(left_ops, right_ops, scheme: str = "i"):
    """Superoperator of ``rho -> (L_1 (x) ... (x) L_k) rho (R_1 (x) ... (x) R_k)``.

    ``left_ops`` and ``right_ops`` list one operator per subsystem (use the
    identity where a factor acts trivially).
    """
    if len(left_ops) != len(right_ops):
        raise DimensionMismatch("need one left and one right operator per subsystem")
    left_ops = [np.asarray(o) for o in left_ops]
    right_ops = [np.asarray(o) for o in right_ops]
    for a, b in zip(left_ops, right_ops):
        if a.shape != b.shape:
            raise DimensionMismatch("left and right factors of a subsystem must match")
    if scheme == "i":
        big_l = left_ops[0]
        big_r = right_ops[0]
        for a, b in zip(left_ops[1:], right_ops[1:]):
            big_l, big_r = np.kron(big_l, a), np.kron(big_r, b)
        return np.kron(big_l, big_r.T)
    if scheme == "ii":
        out = np.ones((1, 1), dtype=complex)
        for a, b in zip(left_ops, right_ops):
            out = np.kron(out, np.kron(a, b.T))
        return out
    raise ValueError(f"unknown scheme {scheme!r}; expected 'i' or 'ii'")
