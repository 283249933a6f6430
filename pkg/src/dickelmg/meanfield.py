"""Mean-field ground states of the Dicke-LMG model.

The trial state is a boson coherent state ``|sqrt(N) alpha>`` times a spin
coherent state ``|theta, phi>``. The scaled energy has three closed-form
stationary branches (paramagnetic-normal, ferromagnetic-normal,
ferromagnetic-superradiant); the solver enumerates them, checks the 3x3
Hessian in ``(alpha, theta, phi)`` and keeps the lowest stable one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import ModelParams

PN, FN, FS = "PN", "FN", "FS"
PHASES = (PN, FN, FS)
# tie-break order on an exact phase boundary
_PREFERENCE = {FS: 0, FN: 1, PN: 2}

STABILITY_TOL = 1e-9
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class OrderParameters:
    zeta_s: float
    zeta_mx: float
    zeta_my: float
    m_z: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.zeta_s, self.zeta_mx, self.zeta_my, self.m_z)


@dataclass(frozen=True)
class Branch:
    label: str
    alpha0: float
    theta0: float
    phi0: tuple[float, ...]  # empty for PN, whose azimuth is undetermined


@dataclass(frozen=True)
class MeanFieldSolution:
    phase: str
    alpha0: float
    theta0: float
    phi0_branches: tuple[float, ...]
    energy: float
    hessian_eigenvalues: tuple[tuple[float, ...], ...]
    boundary: bool = False
    stable_branches: tuple[str, ...] = field(default=())


def mean_field_energy(alpha, theta, phi, params: ModelParams) -> float:
    """Scaled energy <H>/N of ``|sqrt(N) alpha> (x) |theta, phi>`` (constant dropped)."""
    alpha = complex(alpha)
    st, ct = np.sin(theta), np.cos(theta)
    cp, sph = np.cos(phi), np.sin(phi)
    return float(
        abs(alpha) ** 2
        + 0.5 * params.epsilon * ct
        + params.lam * 2.0 * alpha.real * st * cp
        - 0.5 * params.jx * st**2 * cp**2
        - 0.5 * params.jy * st**2 * sph**2
    )


def energy_gradient(alpha: float, theta: float, phi: float, params: ModelParams) -> np.ndarray:
    eps, lam, jx, jy = params.epsilon, params.lam, params.jx, params.jy
    st, ct, cp, sph = np.sin(theta), np.cos(theta), np.cos(phi), np.sin(phi)
    return np.array([
        2 * alpha + 2 * lam * st * cp,
        -0.5 * eps * st + 2 * lam * alpha * ct * cp - (jx * cp**2 + jy * sph**2) * st * ct,
        -2 * lam * alpha * st * sph + (jx - jy) * st**2 * sph * cp,
    ])


def hessian_matrix(alpha: float, theta: float, phi: float, params: ModelParams) -> np.ndarray:
    """Closed-form second derivatives of the scaled energy in (alpha, theta, phi), alpha real."""
    eps, lam, jx, jy = params.epsilon, params.lam, params.jx, params.jy
    st, ct, cp, sph = np.sin(theta), np.cos(theta), np.cos(phi), np.sin(phi)
    d_aa = 2.0
    d_tt = -0.5 * eps * ct - 2 * lam * alpha * st * cp - (jx * cp**2 + jy * sph**2) * np.cos(2 * theta)
    d_pp = -2 * lam * alpha * st * cp + (jx - jy) * st**2 * np.cos(2 * phi)
    d_at = 2 * lam * ct * cp
    d_ap = -2 * lam * st * sph
    d_tp = -2 * lam * alpha * ct * sph + 0.5 * (jx - jy) * np.sin(2 * theta) * np.sin(2 * phi)
    return np.array([
        [d_aa, d_at, d_ap],
        [d_at, d_tt, d_tp],
        [d_ap, d_tp, d_pp],
    ])


def equilibrium_branches(params: ModelParams) -> list[Branch]:
    """Stationary points of the mean-field energy that exist for these couplings."""
    eps = params.epsilon
    out = [Branch(PN, 0.0, np.pi, ())]
    if 2 * params.jy >= eps:
        theta = float(np.arccos(-eps / (2 * params.jy)))
        out.append(Branch(FN, 0.0, theta, (np.pi / 2, 3 * np.pi / 2)))
    k = 4 * params.lam**2 + 2 * params.jx
    if k >= eps:
        theta = float(np.arccos(-eps / k))
        # alpha0 quoted for phi0 = 0; the phi0 = pi partner has the opposite sign
        out.append(Branch(FS, float(-params.lam * np.sin(theta)), theta, (0.0, np.pi)))
    return out


def branch_alpha(branch: Branch, phi: float, params: ModelParams) -> float:
    return float(-params.lam * np.sin(branch.theta0) * np.cos(phi))


# the PN Hessian depends on the free azimuth; the stability condition is linear
# in cos^2(phi), so probing both extremes covers every phi
_PN_PROBES = (0.0, np.pi / 2)


def hessian(params: ModelParams, branch: Branch, phi: float | None = None):
    """Hessian at a branch point and its eigenvalues (ascending).

    ``phi`` defaults to the branch's first degenerate azimuth (``0`` for PN).
    """
    if phi is None:
        phi = branch.phi0[0] if branch.phi0 else 0.0
    alpha = branch_alpha(branch, phi, params)
    m = hessian_matrix(alpha, branch.theta0, phi, params)
    return m, np.linalg.eigvalsh(m)


def _branch_eigenvalues(params: ModelParams, branch: Branch) -> tuple[tuple[float, ...], ...]:
    phis = branch.phi0 if branch.phi0 else _PN_PROBES
    return tuple(tuple(float(x) for x in hessian(params, branch, p)[1]) for p in phis)


def branch_order_parameters(params: ModelParams, branch: Branch) -> OrderParameters:
    """Order parameters of a branch from the Table-I closed forms."""
    eps = params.epsilon
    if branch.label == PN:
        return OrderParameters(0.0, 0.0, 0.0, -0.5)
    if branch.label == FN:
        jy = params.jy
        return OrderParameters(0.0, 0.0, 0.25 * (1 - eps**2 / (4 * jy**2)), -eps / (4 * jy))
    k = 4 * params.lam**2 + 2 * params.jx
    r = 1 - eps**2 / k**2
    return OrderParameters(params.lam**2 * r, 0.25 * r, 0.0, -eps / (2 * k))


def coherent_order_parameters(params: ModelParams, alpha: float, theta: float, phi: float) -> OrderParameters:
    """Leading-order expectation values on ``|sqrt(N) alpha> (x) |theta, phi>``."""
    st2 = np.sin(theta) ** 2
    return OrderParameters(
        float(alpha**2),
        float(0.25 * st2 * np.cos(phi) ** 2),
        float(0.25 * st2 * np.sin(phi) ** 2),
        float(0.5 * np.cos(theta)),
    )


def classify_phase(params: ModelParams) -> tuple[MeanFieldSolution, OrderParameters]:
    """Lowest-energy stable branch and its order parameters.

    On an exact boundary (two stable branches degenerate within 1e-9) the
    solution carries ``boundary=True`` and the phase is chosen FS > FN > PN.
    """
    candidates = []
    for br in equilibrium_branches(params):
        eigs = _branch_eigenvalues(params, br)
        if min(min(e) for e in eigs) < -STABILITY_TOL:
            continue
        phi = br.phi0[0] if br.phi0 else 0.0
        energy = mean_field_energy(branch_alpha(br, phi, params), br.theta0, phi, params)
        candidates.append((energy, br, eigs))
    if not candidates:  # cannot happen for non-negative couplings; keep PN as a floor
        br = equilibrium_branches(params)[0]
        candidates.append((-0.5 * params.epsilon, br, _branch_eigenvalues(params, br)))

    e_min = min(c[0] for c in candidates)
    lowest = [c for c in candidates if c[0] - e_min <= DEGENERACY_TOL]
    # branches that coincide geometrically (e.g. FS at 4 lam^2 + 2 Jx = eps is the PN point)
    # still count as a boundary, which is the physically right flag there
    lowest.sort(key=lambda c: _PREFERENCE[c[1].label])
    energy, br, eigs = lowest[0]
    sol = MeanFieldSolution(
        phase=br.label,
        alpha0=br.alpha0,
        theta0=br.theta0,
        phi0_branches=br.phi0,
        energy=energy,
        hessian_eigenvalues=eigs,
        boundary=len(lowest) > 1,
        stable_branches=tuple(c[1].label for c in candidates),
    )
    return sol, branch_order_parameters(params, br)


# ---------------------------------------------------------------------------
# phase-diagram grids

AXES = ("x", "jy", "epsilon")  # "x" is the composite 2*lam^2 + Jx


@dataclass
class PhaseGrid:
    axis1: str
    axis2: str
    values1: np.ndarray
    values2: np.ndarray
    phase: np.ndarray  # (n1, n2) labels
    order: np.ndarray  # (n1, n2, 4): zeta_s, zeta_mx, zeta_my, m_z
    boundary: np.ndarray  # (n1, n2) bool
    fixed: ModelParams
    split: str

    def rows(self):
        for i, a in enumerate(self.values1):
            for j, b in enumerate(self.values2):
                yield (float(a), float(b), str(self.phase[i, j]), *map(float, self.order[i, j]))


def params_at(base: ModelParams, coords: dict, split: str = "lambda") -> ModelParams:
    """Concrete couplings for a grid point.

    The composite ``x = 2 lam^2 + Jx`` is realised either by solving for lam at
    the fixed Jx (``split='lambda'``) or for Jx at the fixed lam (``split='jx'``).
    """
    changes = {}
    if "jy" in coords:
        changes["jy"] = float(coords["jy"])
    if "epsilon" in coords:
        changes["epsilon"] = float(coords["epsilon"])
    if "x" in coords:
        x = float(coords["x"])
        if split == "lambda":
            rest = x - base.jx
            if rest < -1e-15:
                raise ValueError(f"composite {x} below fixed Jx={base.jx}")
            changes["lam"] = float(np.sqrt(max(rest, 0.0) / 2))
        elif split == "jx":
            rest = x - 2 * base.lam**2
            if rest < -1e-15:
                raise ValueError(f"composite {x} below fixed 2 lam^2={2 * base.lam**2}")
            changes["jx"] = max(rest, 0.0)
        else:
            raise ValueError(f"unknown split {split!r}")
    return base.replace(**changes)


def phase_diagram_grid(
    axis1: str,
    range1: tuple[float, float],
    axis2: str,
    range2: tuple[float, float],
    resolution: int | tuple[int, int] = 101,
    fixed: ModelParams | None = None,
    split: str = "lambda",
) -> PhaseGrid:
    """Classify every cell of a rectangular grid over two of ``x``, ``jy``, ``epsilon``."""
    if axis1 not in AXES or axis2 not in AXES or axis1 == axis2:
        raise ValueError(f"axes must be two distinct entries of {AXES}")
    n1, n2 = (resolution, resolution) if np.isscalar(resolution) else resolution
    if n1 < 2 or n2 < 2:
        raise ValueError("resolution must be >= 2 per axis")
    for lo, hi in (range1, range2):
        if not hi > lo or lo < 0:
            raise ValueError(f"invalid range {(lo, hi)}")
    fixed = fixed or ModelParams()
    v1 = np.linspace(*range1, n1)
    v2 = np.linspace(*range2, n2)
    phase = np.empty((n1, n2), dtype=object)
    order = np.zeros((n1, n2, 4))
    flag = np.zeros((n1, n2), dtype=bool)
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            p = params_at(fixed, {axis1: a, axis2: b}, split)
            sol, ops = classify_phase(p)
            phase[i, j] = sol.phase
            order[i, j] = ops.as_tuple()
            flag[i, j] = sol.boundary
    # cells adjacent to a change of phase also sit on a boundary
    diff1 = phase[1:, :] != phase[:-1, :]
    diff2 = phase[:, 1:] != phase[:, :-1]
    flag[1:, :] |= diff1
    flag[:-1, :] |= diff1
    flag[:, 1:] |= diff2
    flag[:, :-1] |= diff2
    return PhaseGrid(axis1, axis2, v1, v2, phase, order, flag, fixed, split)


def boundary_points(grid: PhaseGrid) -> dict[str, np.ndarray]:
    """Midpoints between neighbouring cells of different phase, keyed ``'A-B'``."""
    pts: dict[str, list] = {}
    v1, v2, ph = grid.values1, grid.values2, grid.phase

    def add(a, b, x, y):
        key = "-".join(sorted((a, b), key=PHASES.index))
        pts.setdefault(key, []).append((x, y))

    for i in range(len(v1) - 1):
        for j in range(len(v2)):
            if ph[i, j] != ph[i + 1, j]:
                add(ph[i, j], ph[i + 1, j], 0.5 * (v1[i] + v1[i + 1]), v2[j])
    for i in range(len(v1)):
        for j in range(len(v2) - 1):
            if ph[i, j] != ph[i, j + 1]:
                add(ph[i, j], ph[i, j + 1], v1[i], 0.5 * (v2[j] + v2[j + 1]))
    # cells flagged as exactly degenerate are boundary points in their own right
    for i, j in zip(*np.nonzero(_degenerate_mask(grid))):
        p = params_at(grid.fixed, {grid.axis1: v1[i], grid.axis2: v2[j]}, grid.split)
        stable = classify_phase(p)[0].stable_branches
        energies = {}
        for br in equilibrium_branches(p):
            if br.label in stable:
                phi = br.phi0[0] if br.phi0 else 0.0
                energies[br.label] = mean_field_energy(branch_alpha(br, phi, p), br.theta0, phi, p)
        e0 = min(energies.values())
        labels = sorted((k for k, e in energies.items() if e - e0 <= DEGENERACY_TOL), key=PHASES.index)
        for a_idx in range(len(labels)):
            for b_idx in range(a_idx + 1, len(labels)):
                add(labels[a_idx], labels[b_idx], v1[i], v2[j])
    return {k: np.array(v) for k, v in pts.items()}


def _degenerate_mask(grid: PhaseGrid) -> np.ndarray:
    mask = np.zeros(grid.phase.shape, dtype=bool)
    for i, a in enumerate(grid.values1):
        for j, b in enumerate(grid.values2):
            if grid.boundary[i, j]:
                p = params_at(grid.fixed, {grid.axis1: a, grid.axis2: b}, grid.split)
                mask[i, j] = classify_phase(p)[0].boundary
    return mask


def triple_points(grid: PhaseGrid) -> np.ndarray:
    """Centres of 2x2 cell blocks in which all three phases appear."""
    ph = grid.phase
    out = []
    for i in range(len(grid.values1) - 1):
        for j in range(len(grid.values2) - 1):
            if len({ph[i, j], ph[i + 1, j], ph[i, j + 1], ph[i + 1, j + 1]}) == 3:
                out.append((
                    0.5 * (grid.values1[i] + grid.values1[i + 1]),
                    0.5 * (grid.values2[j] + grid.values2[j + 1]),
                ))
    return np.array(out).reshape(-1, 2)


def boundary_segments(grid: PhaseGrid) -> dict:
    """Straight-line summary of each boundary: endpoints and fitted line through the points."""
    out = {}
    for key, p in sorted(boundary_points(grid).items()):
        if len(p) == 0:
            continue
        # order along the dominant direction of the point cloud
        centred = p - p.mean(axis=0)
        direction = np.linalg.svd(centred, full_matrices=False)[2][0] if len(p) > 1 else np.array([1.0, 0.0])
        t = centred @ direction
        lo, hi = p[np.argmin(t)], p[np.argmax(t)]
        out[key] = {
            "start": [float(lo[0]), float(lo[1])],
            "end": [float(hi[0]), float(hi[1])],
            "n_points": int(len(p)),
        }
    tp = triple_points(grid)
    result = {"segments": out}
    if len(tp):
        c = tp.mean(axis=0)
        result["triple_point"] = [float(c[0]), float(c[1])]
    return result
