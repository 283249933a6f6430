import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dickelmg.hilbert import (
    ModelParams,
    SpinBosonBasis,
    assemble_hamiltonian,
    build_boson_ops,
    build_collective_spin_ops,
    hamiltonian_parts,
    parity_operator,
)

couplings = st.floats(0.0, 2.0, allow_nan=False)


def _pauli_sum_ops(n):
    """Collective spin operators built from N explicit qubits, projected on the symmetric subspace."""
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]]) / 2
    total = []
    for s in (sx, sy, sz):
        acc = np.zeros((2**n, 2**n), dtype=complex)
        for site in range(n):
            acc += np.kron(np.kron(np.eye(2**site), s), np.eye(2 ** (n - site - 1)))
        total.append(acc)
    # Dicke states |N/2, m> in descending m: symmetric sums over bit strings with k down spins
    states = []
    for k in range(n + 1):
        v = np.zeros(2**n)
        for b in range(2**n):
            if bin(b).count("1") == k:
                v[b] = 1.0
        states.append(v / np.linalg.norm(v))
    p = np.array(states).T
    return [p.T @ s @ p for s in total]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_collective_ops_match_explicit_qubits(n):
    ours = [o.toarray() for o in build_collective_spin_ops(n)]
    ref = _pauli_sum_ops(n)
    for a, b in zip(ours, ref):
        np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20))
def test_su2_algebra_and_casimir(n):
    sx, sy, sz = (o.toarray() for o in build_collective_spin_ops(n))
    j = n / 2
    assert np.abs(sx @ sy - sy @ sx - 1j * sz).max() < 1e-12 * max(1, n)
    assert np.abs(sy @ sz - sz @ sy - 1j * sx).max() < 1e-12 * max(1, n)
    assert np.abs(sz @ sx - sx @ sz - 1j * sy).max() < 1e-12 * max(1, n)
    cas = sx @ sx + sy @ sy + sz @ sz
    np.testing.assert_allclose(cas, j * (j + 1) * np.eye(n + 1), atol=1e-10)


def test_boson_ops():
    a, adag, num = (o.toarray() for o in build_boson_ops(6))
    np.testing.assert_allclose(adag @ a, num, atol=1e-14)
    comm = a @ adag - adag @ a
    # canonical commutator holds except in the truncated top level
    np.testing.assert_allclose(np.diag(comm)[:-1], 1.0)
    assert np.isclose(comm[-1, -1], -5.0)


@settings(max_examples=25, deadline=None)
@given(couplings, couplings, couplings, st.floats(0.1, 2.0), st.integers(1, 20), st.integers(2, 8))
def test_hamiltonian_hermitian_and_parity_symmetric(lam, jx, jy, eps, n, nb):
    p = ModelParams(epsilon=eps, lam=lam, jx=jx, jy=jy, n_spins=n, boson_cutoff=nb)
    h = assemble_hamiltonian(p).toarray()
    par = parity_operator(n, nb).toarray()
    assert np.abs(h - h.conj().T).max() < 1e-12
    assert np.abs(h @ par - par @ h).max() < 1e-12
    np.testing.assert_allclose(par @ par, np.eye(p.dimension))


def test_hamiltonian_against_kron_construction():
    n, nb = 3, 4
    p = ModelParams(epsilon=0.7, lam=0.4, jx=0.3, jy=0.9, n_spins=n, boson_cutoff=nb)
    sx, sy, sz = _pauli_sum_ops(n)
    a = np.diag(np.sqrt(np.arange(1, nb)), 1)
    ib, isp = np.eye(nb), np.eye(n + 1)
    h = (
        np.kron(a.T @ a, isp)
        + 2 * p.lam / np.sqrt(n) * np.kron(a + a.T, sx)
        + p.epsilon * np.kron(ib, sz)
        - 2 / n * (p.jx * np.kron(ib, sx @ sx) + p.jy * np.kron(ib, sy @ sy))
    )
    np.testing.assert_allclose(assemble_hamiltonian(p).toarray(), h, atol=1e-12)
    np.testing.assert_allclose(assemble_hamiltonian(p, sparse=True).toarray(), h, atol=1e-12)


def test_basis_indexing_roundtrip():
    b = SpinBosonBasis(4, 3)
    assert b.dimension == 15
    for flat in range(b.dimension):
        n, m = b.label(flat)
        assert b.index(n, m) == flat
    assert b.index(0, 2.0) == 0
    assert b.index(1, -2.0) == 9
    with pytest.raises(ValueError):
        b.index(3, 0)
    with pytest.raises(ValueError):
        b.index(0, 0.5)


def test_parity_of_reference_states():
    b = SpinBosonBasis(2, 3)
    d = b.parity_diagonal()
    # vacuum with all spins down is even
    assert d[b.index(0, -1.0)] == 1
    assert d[b.index(1, -1.0)] == -1
    assert d[b.index(0, 0.0)] == -1


def test_parts_cache_consistency():
    p = ModelParams(epsilon=1.0, lam=0.3, jx=0.2, jy=0.5, n_spins=4, boson_cutoff=5)
    parts = hamiltonian_parts(4, 5)
    assert parts is hamiltonian_parts(4, 5)
    np.testing.assert_allclose(parts.for_params(p).toarray(), assemble_hamiltonian(p).toarray())


@pytest.mark.parametrize(
    "kw",
    [dict(epsilon=0.0), dict(lam=-0.1), dict(n_spins=0), dict(boson_cutoff=1), dict(n_spins=2.5)],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)
