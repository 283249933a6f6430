"""Small-dimension oracle checks behind ``dickelmg selftest``."""
from __future__ import annotations

import sys

import numpy as np


def _operator_algebra(rng):
    from .hilbert import ModelParams, assemble_hamiltonian, parity_operator, spin_ops_sparse

    worst = 0.0
    for n in range(1, 9):
        sx, sy, sz = (o.toarray() for o in spin_ops_sparse(n))
        j = n / 2
        worst = max(
            worst,
            np.abs(sx @ sy - sy @ sx - 1j * sz).max(),
            np.abs(sy @ sz - sz @ sy - 1j * sx).max(),
            np.abs(sz @ sx - sx @ sz - 1j * sy).max(),
            np.abs(sx @ sx + sy @ sy + sz @ sz - j * (j + 1) * np.eye(n + 1)).max(),
        )
        p = ModelParams(epsilon=1.0, lam=rng.uniform(0, 1), jx=rng.uniform(0, 1), jy=rng.uniform(0, 1),
                        n_spins=n, boson_cutoff=5)
        h = assemble_hamiltonian(p).toarray()
        par = parity_operator(n, 5).toarray()
        worst = max(worst, np.abs(h - h.conj().T).max(), np.abs(h @ par - par @ h).max())
    return worst, 1e-12


def _correspondences(rng):
    from .liouville import devectorize, left_superop, right_superop, sandwich_superop, vectorize

    worst = 0.0
    for _ in range(20):
        d = int(rng.choice([2, 3, 5, 8]))
        o1, o2, rho = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3))
        for conv in ("row", "column"):
            v = vectorize(rho, conv)
            for sup, ref in (
                (left_superop(o1, conv), o1 @ rho),
                (right_superop(o1, conv), rho @ o1),
                (sandwich_superop(o1, o2, conv), o1 @ rho @ o2),
            ):
                worst = max(worst, np.abs(devectorize(sup @ v) - ref).max() / max(1.0, np.abs(ref).max()))
    return worst, 1e-12


def _hilbert_vs_liouville(rng):
    from .dynamics import PulseEnvelope, evolve
    from .hilbert import ModelParams, hamiltonian_parts
    from .liouville import evolve_liouville

    p = ModelParams(epsilon=1.0, lam=0.3, jx=0.0, jy=1.0, n_spins=2, boson_cutoff=12)
    env = PulseEnvelope(amplitude=0.05, tau=2.0)
    t_final, dt = 4.0, 0.05
    traj = evolve(p, env, t_final, dt, snapshot_times=(0.0, t_final))
    psi0 = traj.snapshot(0.0).data
    parts = hamiltonian_parts(p.n_spins, p.boson_cutoff)
    num = parts.number.toarray()
    lt = evolve_liouville(
        np.outer(psi0, psi0.conj()),
        lambda t: parts.hamiltonian(p.epsilon, float(env.coupling(p.lam, t)), p.jx, p.jy),
        dt, t_final, observables={"n": num},
    )
    psi = traj.snapshot(t_final).data
    err_state = np.abs(lt.states[-1] - np.outer(psi, psi.conj())).max()
    err_n = np.abs(lt.expectations["n"].real - traj.n_mean).max()
    return max(err_state, err_n), 1e-6


CHECKS = (
    ("operator algebra (su(2), Casimir, Hermiticity, parity), N<=8", _operator_algebra),
    ("Liouville correspondence identities, both conventions", _correspondences),
    ("Hilbert vs Liouville pure-state evolution, N=2, N_b=12", _hilbert_vs_liouville),
)


def run_selftest(stream=None) -> bool:
    """Run every oracle check, print one line each, and return overall success."""
    stream = stream or sys.stdout
    rng = np.random.default_rng(12345)
    ok_all = True
    for name, fn in CHECKS:
        try:
            err, tol = fn(rng)
            ok = bool(err <= tol)
            line = f"{'PASS' if ok else 'FAIL'}  {name}: max error {err:.3e} (tolerance {tol:.0e})"
        except Exception as exc:  # report, do not abort the remaining checks
            ok = False
            line = f"FAIL  {name}: {type(exc).__name__}: {exc}"
        ok_all &= ok
        print(line, file=stream)
    print("selftest " + ("passed" if ok_all else "FAILED"), file=stream)
    return ok_all
