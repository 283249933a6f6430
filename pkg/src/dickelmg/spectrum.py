"""Exact diagonalisation: ground states, order parameters, sensitivities, thermal states.

H conserves the excitation parity ``(-1)^(n + N/2 + m)``, so ground states
are computed in each parity block separately and the lower one is returned,
embedded back into the full space. Near the first-order line the two blocks'
lowest levels cross; keeping track of the block makes finite differences of
the order parameters well defined there.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .errors import ConfigError, CutoffInsufficient, DimensionMismatch, NonConverged
from .hilbert import ModelParams, hamiltonian_parts
from .meanfield import OrderParameters

DENSE_LIMIT = 2000
MAX_DIMENSION = 20000
TAIL_THRESHOLD = 1e-6
RESIDUAL_TOL = 1e-8

AXIS_ALIASES = {"lambda": "lam", "lam": "lam", "jx": "jx", "jy": "jy", "epsilon": "epsilon"}


def canonical_axis(axis: str) -> str:
    try:
        return AXIS_ALIASES[axis]
    except KeyError:
        raise ConfigError(f"unknown coupling axis {axis!r}; expected one of {sorted(AXIS_ALIASES)}") from None


@dataclass(frozen=True)
class StateVector:
    """Normalised amplitudes over the boson-major joint basis."""

    data: np.ndarray
    n_spins: int
    boson_cutoff: int
    parity: int = 0  # +1/-1 when known, 0 otherwise

    def __post_init__(self):
        if self.data.shape != (self.boson_cutoff * (self.n_spins + 1),):
            raise DimensionMismatch(f"state of length {self.data.shape} does not fit the basis")
        nrm = np.linalg.norm(self.data)
        if abs(nrm - 1) > 1e-10:
            raise ValueError(f"state norm {nrm} differs from 1")

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to (boson, spin)."""
        return self.data.reshape(self.boson_cutoff, self.n_spins + 1)


def fock_populations(psi: np.ndarray, boson_cutoff: int) -> np.ndarray:
    return (np.abs(psi.reshape(boson_cutoff, -1)) ** 2).sum(axis=1)


def tail_population(psi: np.ndarray, boson_cutoff: int) -> float:
    """Population in the top 10% of Fock layers (at least one layer)."""
    layers = max(1, int(np.ceil(0.1 * boson_cutoff)))
    return float(fock_populations(psi, boson_cutoff)[-layers:].sum())


def _operator_norm_bound(h) -> float:
    # max absolute row sum bounds the spectral norm from above
    return float(abs(h).sum(axis=1).max()) if sp.issparse(h) else float(np.abs(h).sum(axis=1).max())


def lowest_eigenpair(h, dense_limit: int = DENSE_LIMIT, v0: np.ndarray | None = None):
    """Lowest eigenpair of a real symmetric or Hermitian matrix with a residual check."""
    n = h.shape[0]
    if n <= dense_limit:
        dense = h.toarray() if sp.issparse(h) else np.asarray(h)
        w, v = sla.eigh(dense, subset_by_index=[0, 0])
        energy, vec = float(w[0]), v[:, 0]
    else:
        if v0 is None or v0.shape[0] != n:
            v0 = np.ones(n, dtype=h.dtype)
        energy, vec = None, None
        for ncv in (None, 60, 120):
            try:
                w, v = spla.eigsh(h, k=1, which="SA", v0=v0, tol=0, ncv=ncv, maxiter=20 * n)
            except spla.ArpackNoConvergence:
                continue
            energy, vec = float(w[0]), v[:, 0]
            if np.linalg.norm(h @ vec - energy * vec) <= RESIDUAL_TOL * _operator_norm_bound(h):
                break
        if vec is None:
            raise NonConverged("iterative eigensolver did not converge")
    res = np.linalg.norm(h @ vec - energy * vec)
    if res > RESIDUAL_TOL * max(_operator_norm_bound(h), 1.0):
        raise NonConverged(f"ground-state residual {res:.2e} above tolerance")
    return energy, vec / np.linalg.norm(vec)


def _check_dimension(params: ModelParams, max_dimension: int):
    if params.dimension > max_dimension:
        raise ConfigError(
            f"Hilbert-space dimension {params.dimension} exceeds the configured limit {max_dimension}"
        )


def sector_indices(params: ModelParams) -> dict[int, np.ndarray]:
    par = hamiltonian_parts(params.n_spins, params.boson_cutoff).basis.parity_diagonal()
    return {1: np.flatnonzero(par > 0), -1: np.flatnonzero(par < 0)}


def sector_ground_state(params: ModelParams, parity: int, dense_limit: int = DENSE_LIMIT, v0=None):
    """Lowest level of one parity block, returned as a full-space vector."""
    h = hamiltonian_parts(params.n_spins, params.boson_cutoff).for_params(params)
    idx = sector_indices(params)[parity]
    sub = h[idx][:, idx]
    sub_v0 = v0[idx].real if v0 is not None else None
    energy, vec = lowest_eigenpair(sub, dense_limit, sub_v0)
    full = np.zeros(params.dimension, dtype=complex)
    full[idx] = vec
    return energy, full


def ground_state(
    params: ModelParams,
    use_parity: bool = True,
    dense_limit: int = DENSE_LIMIT,
    max_dimension: int = MAX_DIMENSION,
    check_cutoff: bool = True,
) -> tuple[float, StateVector]:
    """Lowest eigenpair of H.

    With ``use_parity`` (default) both parity blocks are diagonalised and the
    lower level wins, ties going to the even block; otherwise the full matrix
    is diagonalised and the solver's lowest vector is returned as is.

    Raises
    ------
    CutoffInsufficient
        If the top 10% of Fock layers hold more than 1e-6 of the population.
    """
    _check_dimension(params, max_dimension)
    if use_parity:
        best = None
        for parity in (1, -1):
            e, vec = sector_ground_state(params, parity, dense_limit)
            if best is None or e < best[0] - 1e-12 * max(1.0, abs(e)):
                best = (e, vec, parity)
        energy, vec, parity = best
    else:
        h = hamiltonian_parts(params.n_spins, params.boson_cutoff).for_params(params)
        energy, vec = lowest_eigenpair(h, dense_limit)
        vec = vec.astype(complex)
        parity = 0
    if check_cutoff:
        tail = tail_population(vec, params.boson_cutoff)
        if tail > TAIL_THRESHOLD:
            raise CutoffInsufficient(tail, TAIL_THRESHOLD)
    return energy, StateVector(vec, params.n_spins, params.boson_cutoff, parity)


def order_parameters_ed(state: StateVector, params: ModelParams) -> OrderParameters:
    """(<a'a>/N, <Sx^2>/N^2, <Sy^2>/N^2, <Sz>/N) on an ED state."""
    if (state.n_spins, state.boson_cutoff) != (params.n_spins, params.boson_cutoff):
        raise DimensionMismatch("state basis does not match params")
    return _ops_from_vector(state.data, params)


def _ops_from_vector(psi: np.ndarray, params: ModelParams) -> OrderParameters:
    parts = hamiltonian_parts(params.n_spins, params.boson_cutoff)
    n = params.n_spins

    def ev(op):
        return float(np.vdot(psi, op @ psi).real)

    return OrderParameters(ev(parts.number) / n, ev(parts.sx2) / n**2, ev(parts.sy2) / n**2, ev(parts.sz) / n)


def op_scan(params: ModelParams, axis: str, values, **kwargs) -> list[OrderParameters]:
    """Ground-state order parameters along one coupling axis (values ascending)."""
    axis = canonical_axis(axis)
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0 or np.any(np.diff(values) <= 0):
        raise ConfigError("scan values must be a non-empty strictly ascending sequence")
    out = []
    for v in values:
        _, state = ground_state(params.replace(**{axis: float(v)}), **kwargs)
        out.append(order_parameters_ed(state, params.replace(**{axis: float(v)})))
    return out


# ---------------------------------------------------------------------------
# sensitivity


def chi_observable(axis: str) -> str:
    """Order parameter differentiated for a given axis: zeta_mx for Jx, zeta_s for lambda."""
    axis = canonical_axis(axis)
    if axis == "jx":
        return "zeta_mx"
    if axis == "lam":
        return "zeta_s"
    raise ConfigError(f"sensitivity is defined along 'jx' or 'lambda', got {axis!r}")


@dataclass
class ChiPoint:
    value: float
    order: OrderParameters
    chi: float
    parity: int


@dataclass
class ChiScan:
    axis: str
    values: np.ndarray
    order: list[OrderParameters]
    chi: np.ndarray
    peak_location: float
    peak_height: float
    fd_step: float
    parity: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    guard_relative_change: float = float("nan")

    @property
    def op_values(self) -> np.ndarray:
        name = chi_observable(self.axis)
        return np.array([getattr(o, name) for o in self.order])

    def rows(self):
        for v, o, c in zip(self.values, self.order, self.chi):
            yield (float(v), *o.as_tuple(), float(c))


class _ChiEvaluator:
    """Central differences of an order parameter inside the parity block of the ground state."""

    def __init__(self, params: ModelParams, axis: str, dense_limit: int = DENSE_LIMIT, check_cutoff: bool = True):
        self.params = params
        self.axis = canonical_axis(axis)
        self.name = chi_observable(axis)
        self.dense_limit = dense_limit
        self.check_cutoff = check_cutoff
        self.evaluations = 0

    def _at(self, value):
        return self.params.replace(**{self.axis: float(value)})

    def _op(self, p, parity, v0=None):
        _, vec = sector_ground_state(p, parity, self.dense_limit, v0)
        self.evaluations += 1
        return getattr(_ops_from_vector(vec, p), self.name)

    def centre(self, value):
        p = self._at(value)
        best = None
        for parity in (1, -1):
            e, vec = sector_ground_state(p, parity, self.dense_limit)
            if best is None or e < best[0] - 1e-12 * max(1.0, abs(e)):
                best = (e, vec, parity)
        if self.check_cutoff:
            tail = tail_population(best[1], p.boson_cutoff)
            if tail > TAIL_THRESHOLD:
                raise CutoffInsufficient(tail, TAIL_THRESHOLD)
        return best[2], best[1], _ops_from_vector(best[1], p)

    def chi_in_sector(self, value, h, parity, v0=None):
        lo = max(value - h, 0.0)
        hi = value + h
        return (self._op(self._at(hi), parity, v0) - self._op(self._at(lo), parity, v0)) / (hi - lo)

    def point(self, value, h) -> ChiPoint:
        parity, vec, order = self.centre(value)
        return ChiPoint(float(value), order, self.chi_in_sector(value, h, parity, vec), parity)


def sensitivity_chi(
    params: ModelParams,
    axis: str,
    values,
    fd_step: float = 1e-4,
    refine: bool = True,
    guard: bool = True,
    dense_limit: int = DENSE_LIMIT,
    check_cutoff: bool = True,
) -> ChiScan:
    """chi = d(OP)/d(coupling) by central differences along a scan.

    The OP is ``zeta_mx`` for ``axis='jx'`` and ``zeta_s`` (``<a'a>/N``) for
    ``axis='lambda'``. Both stencil points stay in the parity block of the
    ground state at the centre. With ``refine`` the peak is polished by a
    bounded scalar search between the neighbours of the best grid point; with
    ``guard`` the peak is recomputed at half the step.

    Raises
    ------
    NonConverged
        If halving ``fd_step`` moves the peak height by more than 2%.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ConfigError("scan values must be a non-empty 1-d sequence")
    if np.any(np.diff(values) <= 0):
        raise ConfigError("scan values must be strictly ascending")
    if not fd_step > 0:
        raise ConfigError("fd_step must be positive")
    if len(values) > 1 and fd_step >= np.min(np.diff(values)):
        raise ConfigError("fd_step must be smaller than the value spacing")
    ev = _ChiEvaluator(params, axis, dense_limit, check_cutoff)
    points = [ev.point(v, fd_step) for v in values]
    chi = np.array([p.chi for p in points])
    i = int(np.argmax(chi))
    peak_x, peak_y, peak_parity = values[i], chi[i], points[i].parity

    if refine and 0 < i < len(values) - 1:
        res = minimize_scalar(
            lambda x: -ev.point(x, fd_step).chi,
            bounds=(values[i - 1], values[i + 1]),
            method="bounded",
            options={"xatol": max(fd_step * 1e-2, 1e-9)},
        )
        if -res.fun > peak_y:
            peak_x, peak_y = float(res.x), float(-res.fun)
            peak_parity = ev.centre(peak_x)[0]

    rel = float("nan")
    if guard:
        half = ev.chi_in_sector(peak_x, fd_step / 2, peak_parity)
        rel = abs(half - peak_y) / max(abs(peak_y), 1e-300)
        if rel > 0.02:
            raise NonConverged(
                f"chi peak moved by {100 * rel:.2f}% when halving fd_step={fd_step:g}"
            )
    return ChiScan(
        axis=canonical_axis(axis),
        values=values,
        order=[p.order for p in points],
        chi=chi,
        peak_location=float(peak_x),
        peak_height=float(peak_y),
        fd_step=fd_step,
        parity=np.array([p.parity for p in points]),
        guard_relative_change=rel,
    )


def mean_field_transition(params: ModelParams, axis: str) -> float:
    """Mean-field transition coupling along ``axis`` with the other couplings held fixed."""
    axis = canonical_axis(axis)
    eps, lam, jx, jy = params.epsilon, params.lam, params.jx, params.jy
    if axis == "lam":
        # FN-FS at 2 lam^2 + Jx = Jy (first order) or PN-FS at 4 lam^2 + 2 Jx = eps
        target = jy if 2 * jy > eps else eps / 2
        return float(np.sqrt(max(target - jx, 0.0) / 2))
    if axis == "jx":
        target = jy if 2 * jy > eps else eps / 2
        return float(max(target - 2 * lam**2, 0.0))
    raise ConfigError(f"no transition defined along {axis!r}")


def default_window(params: ModelParams, axis: str) -> tuple[float, float]:
    # finite-N peaks sit below the mean-field value and approach it from the left
    c = mean_field_transition(params, axis)
    return (max(c - 0.08, 1e-3), c + 0.04)


def locate_chi_peak(
    params: ModelParams,
    axis: str,
    window: tuple[float, float] | None = None,
    coarse: int = 61,
    fine: int = 41,
    fd_step: float = 1e-4,
    dense_limit: int = DENSE_LIMIT,
    check_cutoff: bool = True,
) -> ChiScan:
    """Find the sensitivity maximum by a coarse OP scan, a fine chi scan and a bounded refine.

    The coarse pass brackets the steepest rise of the order parameter; the fine
    pass evaluates chi on a grid spanning two coarse cells either side.
    """
    axis = canonical_axis(axis)
    name = chi_observable(axis)
    if window is None:
        window = default_window(params, axis)
    xs = np.linspace(window[0], window[1], coarse)
    ev = _ChiEvaluator(params, axis, dense_limit, check_cutoff)
    ops = np.array([getattr(ev.centre(x)[2], name) for x in xs])
    step = np.abs(np.diff(ops))
    i = int(np.argmax(step))
    lo = xs[max(i - 2, 0)]
    hi = xs[min(i + 3, coarse - 1)]
    grid = np.linspace(lo, hi, fine)
    return sensitivity_chi(params, axis, grid, fd_step, refine=True, guard=True,
                           dense_limit=dense_limit, check_cutoff=check_cutoff)


def adequate_cutoff(params: ModelParams, start: int | None = None, max_cutoff: int = 400) -> int:
    """Smallest Fock cutoff >= ``start`` (default N) passing the tail-population rule at ``params``."""
    nb = max(2, int(start if start is not None else params.n_spins))
    while nb <= max_cutoff:
        _, state = ground_state(params.replace(boson_cutoff=nb), check_cutoff=False)
        if tail_population(state.data, nb) <= TAIL_THRESHOLD:
            return nb
        nb += max(2, int(np.ceil(0.1 * nb)))
    raise CutoffInsufficient(tail_population(state.data, state.boson_cutoff), TAIL_THRESHOLD)


@dataclass
class ScalingFit:
    coefficients: tuple[float, float, float]
    r_squared: float
    n_values: np.ndarray
    chi_max: np.ndarray
    peak_locations: np.ndarray

    def predict(self, n):
        return np.polyval(self.coefficients, n)


def quadratic_fit(n_values, chi_max) -> tuple[tuple[float, float, float], float]:
    x = np.asarray(n_values, dtype=float)
    y = np.asarray(chi_max, dtype=float)
    if len(np.unique(x)) < 4:
        raise ConfigError("a quadratic scaling fit needs at least 4 distinct N values")
    coeffs = np.polyfit(x, y, 2)
    resid = y - np.polyval(coeffs, x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return tuple(float(c) for c in coeffs), float(r2)


def chi_scaling_fit(
    template: ModelParams,
    axis: str,
    n_values,
    boson_cutoff: int | str = "N",
    **peak_kwargs,
) -> ScalingFit:
    """Quadratic least-squares fit of chi_max(N).

    ``boson_cutoff='N'`` ties the Fock cutoff to the spin number; ``'auto'``
    starts there and grows it until the tail rule holds at the upper end of the
    search window; an integer fixes it (e.g. 2 when the boson is decoupled).
    """
    n_values = np.asarray(n_values, dtype=int)
    if len(np.unique(n_values)) < 4:
        raise ConfigError("a quadratic scaling fit needs at least 4 distinct N values")
    peaks, locs = [], []
    for n in n_values:
        p = template.replace(n_spins=int(n), boson_cutoff=max(2, int(n)))
        if boson_cutoff == "auto":
            window = peak_kwargs.get("window") or default_window(p, axis)
            top = p.replace(**{canonical_axis(axis): window[1]})
            p = p.replace(boson_cutoff=adequate_cutoff(top))
        elif boson_cutoff != "N":
            p = p.replace(boson_cutoff=int(boson_cutoff))
        scan = locate_chi_peak(p, axis, **peak_kwargs)
        peaks.append(scan.peak_height)
        locs.append(scan.peak_location)
    coeffs, r2 = quadratic_fit(n_values, peaks)
    return ScalingFit(coeffs, r2, n_values, np.array(peaks), np.array(locs))


# ---------------------------------------------------------------------------
# thermal states


def thermal_state(h_or_params, temperature: float, max_dimension: int = MAX_DIMENSION) -> np.ndarray:
    """Gibbs state ``M exp(-beta D) M' / Z`` from a full eigendecomposition.

    Accepts either ModelParams or an explicit Hermitian matrix.
    """
    if not temperature > 0 or not np.isfinite(temperature):
        raise ConfigError("temperature must be positive and finite")
    if isinstance(h_or_params, ModelParams):
        _check_dimension(h_or_params, max_dimension)
        h = hamiltonian_parts(h_or_params.n_spins, h_or_params.boson_cutoff).for_params(h_or_params).toarray()
    else:
        h = h_or_params.toarray() if sp.issparse(h_or_params) else np.asarray(h_or_params)
    w, m = np.linalg.eigh(h)
    weights = np.exp(-(w - w[0]) / temperature)
    weights /= weights.sum()
    rho = (m * weights) @ m.conj().T
    return 0.5 * (rho + rho.conj().T)
