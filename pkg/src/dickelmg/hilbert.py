"""Joint boson-spin Hilbert space and the Dicke-LMG Hamiltonian.

Basis states are ``|n> (x) |N/2, m>`` with ``n = 0 .. N_b-1`` Fock states and
``N+1`` Dicke states. Ordering conventions, fixed for the whole package:

* boson-major tensor ordering, ``flat = n * (N + 1) + k``;
* spin index ``k = 0 .. N`` enumerates ``m = N/2 - k`` (descending m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class ModelParams:
    """Couplings of ``H = a'a + (2 lam/sqrt N)(a+a')Sx + eps Sz - (2/N)(Jx Sx^2 + Jy Sy^2)``.

    All energies are in units of the boson frequency.
    """

    epsilon: float = 1.0
    lam: float = 0.0
    jx: float = 0.0
    jy: float = 0.0
    n_spins: int = 2
    boson_cutoff: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        for name in ("lam", "jx", "jy"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0 (ferromagnetic couplings only)")
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValueError(f"n_spins must be a positive integer, got {self.n_spins}")
        if int(self.boson_cutoff) != self.boson_cutoff or self.boson_cutoff < 2:
            raise ValueError(f"boson_cutoff must be an integer >= 2, got {self.boson_cutoff}")

    def replace(self, **changes) -> "ModelParams":
        d = self.as_dict()
        d.update(changes)
        return ModelParams(**d)

    def as_dict(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "lam": float(self.lam),
            "jx": float(self.jx),
            "jy": float(self.jy),
            "n_spins": int(self.n_spins),
            "boson_cutoff": int(self.boson_cutoff),
        }

    @property
    def dimension(self) -> int:
        return self.boson_cutoff * (self.n_spins + 1)


@dataclass(frozen=True)
class SpinBosonBasis:
    n_spins: int
    boson_cutoff: int

    @property
    def spin_dim(self) -> int:
        return self.n_spins + 1

    @property
    def dimension(self) -> int:
        return self.boson_cutoff * self.spin_dim

    @cached_property
    def m_values(self) -> np.ndarray:
        """Sz eigenvalues in basis order (descending)."""
        return self.n_spins / 2 - np.arange(self.spin_dim)

    def index(self, n: int, m: float) -> int:
        k = self.n_spins / 2 - m
        if not (0 <= n < self.boson_cutoff) or k != int(k) or not (0 <= k <= self.n_spins):
            raise ValueError(f"no basis state (n={n}, m={m})")
        return int(n) * self.spin_dim + int(k)

    def label(self, flat: int) -> tuple[int, float]:
        if not 0 <= flat < self.dimension:
            raise ValueError(f"flat index {flat} out of range")
        n, k = divmod(int(flat), self.spin_dim)
        return n, self.n_spins / 2 - k

    def parity_diagonal(self) -> np.ndarray:
        """Eigenvalues (+1/-1) of exp{i pi (a'a + Sz + N/2)} along the basis."""
        n = np.repeat(np.arange(self.boson_cutoff), self.spin_dim)
        up = np.tile(self.n_spins - np.arange(self.spin_dim), self.boson_cutoff)
        return np.where((n + up) % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class OperatorMatrix:
    """Square operator over a fixed basis; ``data`` is dense or scipy-sparse."""

    data: object
    hermitian: bool = False
    label: str = field(default="", compare=False)

    def __post_init__(self):
        shape = self.data.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"operator must be square, got shape {shape}")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def toarray(self) -> np.ndarray:
        return self.data.toarray() if self.is_sparse else np.asarray(self.data)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.data)

    def __matmul__(self, other):
        return self.data @ other


def _ladder_elements(n_spins: int) -> np.ndarray:
    # <j, m+1|S+|j, m> for m = N/2-1 .. -N/2 in basis order
    j = n_spins / 2
    m = j - np.arange(1, n_spins + 1)
    return np.sqrt(j * (j + 1) - m * (m + 1))


def spin_ops_sparse(n_spins: int):
    """Sparse (Sx, Sy, Sz) on the (N+1)-dim Dicke space, complex128 CSR."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    # S+ raises m, i.e. lowers the index k: nonzero at (k-1, k)
    splus = sp.diags(_ladder_elements(n_spins).astype(complex), offsets=1, format="csr")
    sminus = splus.T.tocsr()
    sx = ((splus + sminus) * 0.5).tocsr()
    sy = ((splus - sminus) * (-0.5j)).tocsr()
    sz = sp.diags(n_spins / 2 - np.arange(n_spins + 1), format="csr").astype(complex)
    return sx, sy, sz


def build_collective_spin_ops(n_spins: int) -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
    """Collective spin operators S_alpha = sum_j sigma_j^alpha / 2 for j = N/2."""
    return tuple(
        OperatorMatrix(op.toarray(), hermitian=True, label=name)
        for op, name in zip(spin_ops_sparse(n_spins), ("Sx", "Sy", "Sz"))
    )


def boson_ops_sparse(boson_cutoff: int):
    if boson_cutoff < 2:
        raise ValueError("boson_cutoff must be >= 2")
    a = sp.diags(np.sqrt(np.arange(1, boson_cutoff)).astype(complex), offsets=1, format="csr")
    adag = a.T.tocsr()
    num = sp.diags(np.arange(boson_cutoff, dtype=float), format="csr").astype(complex)
    return a, adag, num


def build_boson_ops(boson_cutoff: int) -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
    """Truncated annihilation, creation and number operators."""
    a, adag, num = boson_ops_sparse(boson_cutoff)
    return (
        OperatorMatrix(a.toarray(), label="a"),
        OperatorMatrix(adag.toarray(), label="a_dagger"),
        OperatorMatrix(num.toarray(), hermitian=True, label="n"),
    )


class HamiltonianParts:
    """Coupling-independent pieces of H, so that H(lam, jx, jy) is a cheap sum.

    ``H = free + eps * zeeman + lam * coupling + jx * xx + jy * yy`` with

    * ``free = a'a (x) I``
    * ``zeeman = I (x) Sz``
    * ``coupling = (2/sqrt N)(a + a') (x) Sx``
    * ``xx = -(2/N) I (x) Sx^2``, ``yy = -(2/N) I (x) Sy^2``.

    Every piece is real, so the parts are stored as float64 CSR matrices.
    """

    def __init__(self, n_spins: int, boson_cutoff: int):
        self.basis = SpinBosonBasis(n_spins, boson_cutoff)
        sx, sy, sz = spin_ops_sparse(n_spins)
        a, adag, num = boson_ops_sparse(boson_cutoff)
        ib = sp.identity(boson_cutoff, format="csr")
        isp = sp.identity(n_spins + 1, format="csr")
        n = float(n_spins)

        def real(m):
            m = sp.csr_matrix(m)
            assert m.nnz == 0 or abs(m.imag).max() < 1e-14
            return sp.csr_matrix(m.real)

        self.number = real(sp.kron(num, isp))
        self.zeeman = real(sp.kron(ib, sz))
        self.coupling = real(sp.kron(a + adag, sx) * (2.0 / np.sqrt(n)))
        self.xx = real(sp.kron(ib, sx @ sx) * (-2.0 / n))
        self.yy = real(sp.kron(ib, sy @ sy) * (-2.0 / n))
        # observables on the full space
        self.sx = sp.kron(ib, sx, format="csr")
        self.sy = sp.kron(ib, sy, format="csr")
        self.sz = self.zeeman
        self.sx2 = real(sp.kron(ib, sx @ sx))
        self.sy2 = real(sp.kron(ib, sy @ sy))
        self.quadrature = real(sp.kron(a + adag, isp))

    def hamiltonian(self, epsilon, lam=0.0, jx=0.0, jy=0.0) -> sp.csr_matrix:
        h = self.number + epsilon * self.zeeman
        if lam:
            h = h + lam * self.coupling
        if jx:
            h = h + jx * self.xx
        if jy:
            h = h + jy * self.yy
        return sp.csr_matrix(h)

    def for_params(self, params: ModelParams) -> sp.csr_matrix:
        return self.hamiltonian(params.epsilon, params.lam, params.jx, params.jy)


_PARTS_CACHE: dict[tuple[int, int], HamiltonianParts] = {}


def hamiltonian_parts(n_spins: int, boson_cutoff: int) -> HamiltonianParts:
    key = (int(n_spins), int(boson_cutoff))
    parts = _PARTS_CACHE.get(key)
    if parts is None:
        if len(_PARTS_CACHE) > 16:
            _PARTS_CACHE.clear()
        parts = _PARTS_CACHE[key] = HamiltonianParts(*key)
    return parts


def assemble_hamiltonian(params: ModelParams, sparse: bool = False) -> OperatorMatrix:
    """Dicke-LMG Hamiltonian over the boson-major joint basis.

    Dense complex storage by default; ``sparse=True`` returns CSR.
    """
    h = hamiltonian_parts(params.n_spins, params.boson_cutoff).for_params(params)
    h = h.astype(complex)
    return OperatorMatrix(h if sparse else h.toarray(), hermitian=True, label="H")


def parity_operator(n_spins: int, boson_cutoff: int) -> OperatorMatrix:
    diag = SpinBosonBasis(n_spins, boson_cutoff).parity_diagonal()
    return OperatorMatrix(np.diag(diag).astype(complex), hermitian=True, label="parity")
