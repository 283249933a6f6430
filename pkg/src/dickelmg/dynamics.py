"""Time-dependent amplification runs under a ramped spin-boson coupling.

The coupling follows ``lam(t) = lam0 + dlam * P_e(t)``. Starting from the
ground state at ``lam0``, each step of length ``dt`` applies
``exp(-i H(t_k + dt/2) dt)`` through a Krylov action. H conserves
excitation parity and the initial state lies in one parity block, so the
evolution is carried out inside that block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError, DegenerateDenominator, NoPeak, StepNonConverged
from .hilbert import ModelParams, hamiltonian_parts
from .krylov import KrylovStats, expm_krylov
from .qfunction import boson_q, reduce_boson, reduce_spin, spin_q
from .spectrum import StateVector, ground_state, sector_indices

SHAPES = ("sin2", "linear")
DEFAULT_DT = 0.02
DEFAULT_TAU = 10.0
PEAK_PROMINENCE = 0.05
GAIN_FLOOR = 1e-3
ECHO_FLOOR = 1e-300


@dataclass(frozen=True)
class PulseEnvelope:
    """Monotone ramp from 0 to ``plateau`` over ``tau``, then constant.

    ``shape='sin2'`` is ``sin^2(pi t / (2 tau))``; ``'linear'`` is ``t / tau``.
    """

    amplitude: float = 0.01
    tau: float = DEFAULT_TAU
    shape: str = "sin2"
    plateau: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown envelope shape {self.shape!r}; expected one of {SHAPES}")
        if not self.tau > 0:
            raise ConfigError("envelope tau must be positive")
        if not 0 < self.plateau <= 1:
            raise ConfigError("envelope plateau must lie in (0, 1]")

    def __call__(self, t):
        x = np.clip(np.asarray(t, dtype=float) / self.tau, 0.0, 1.0)
        ramp = np.sin(0.5 * np.pi * x) ** 2 if self.shape == "sin2" else x
        return self.plateau * ramp

    def coupling(self, lam0: float, t):
        return lam0 + self.amplitude * self(t)

    def as_dict(self) -> dict:
        return {"shape": self.shape, "tau": self.tau, "amplitude": self.amplitude, "plateau": self.plateau}


@dataclass
class Trajectory:
    params: ModelParams
    envelope: PulseEnvelope
    dt: float
    times: np.ndarray
    n_mean: np.ndarray
    n2_mean: np.ndarray
    overlap: np.ndarray  # <psi(0)|psi(t)>
    energy: np.ndarray  # <H(t_k)> at the step boundaries
    norm: np.ndarray
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    parity: int = 0
    krylov: KrylovStats = field(default_factory=KrylovStats)
    convergence: dict = field(default_factory=dict)

    def snapshot(self, t: float) -> StateVector:
        key = min(self.snapshots, key=lambda s: abs(s - t))
        if abs(key - t) > 0.5 * self.dt:
            raise KeyError(f"no snapshot stored near t={t}")
        return StateVector(self.snapshots[key], self.params.n_spins, self.params.boson_cutoff, self.parity)

    def metadata(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "envelope": self.envelope.as_dict(),
            "dt": self.dt,
            "t_final": float(self.times[-1]),
            "steps": int(len(self.times) - 1),
            "parity_sector": int(self.parity),
            "max_norm_drift": float(np.abs(self.norm - 1).max()),
            "krylov": {"matvecs": self.krylov.matvecs, "substeps": self.krylov.substeps},
            "convergence": self.convergence,
        }


def _sector_parts(params: ModelParams, parity: int):
    parts = hamiltonian_parts(params.n_spins, params.boson_cutoff)
    idx = sector_indices(params)[parity]

    def sub(m):
        return m[idx][:, idx].tocsr()

    static = sub(parts.number + params.epsilon * parts.zeeman + params.jx * parts.xx + params.jy * parts.yy)
    return idx, static, sub(parts.coupling), sub(parts.number)


def _time_grid(t_final: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not t_final > 0:
        raise ConfigError("t_final must be positive")
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigError("t_final must be a positive integer multiple of dt")
    return dt * np.arange(n_steps + 1)


def evolve(
    params: ModelParams,
    envelope: PulseEnvelope,
    t_final: float,
    dt: float = DEFAULT_DT,
    snapshot_times=(),
    krylov_dim: int = 30,
    tol: float = 1e-12,
    check_step: bool = False,
    initial: StateVector | None = None,
    check_cutoff: bool = True,
) -> Trajectory:
    """Evolve the ground state of ``H(params.lam)`` under the ramped coupling.

    ``params.lam`` is the bias ``lam0``. With ``check_step`` the run is
    repeated at ``dt/2`` and the gain at the first peak compared.

    Raises
    ------
    StepNonConverged
        If ``check_step`` and the two gains differ by more than 1%.
    """
    times = _time_grid(t_final, dt)
    if initial is None:
        _, initial = ground_state(params, check_cutoff=check_cutoff)
    parity = initial.parity
    if parity == 0:
        raise ConfigError("initial state must carry a definite parity")
    idx, static, coupling, number = _sector_parts(params, parity)
    psi0 = initial.data[idx].astype(complex)
    psi = psi0.copy()
    n_steps = len(times) - 1

    n_mean = np.empty(n_steps + 1)
    n2_mean = np.empty(n_steps + 1)
    overlap = np.empty(n_steps + 1, dtype=complex)
    energy = np.empty(n_steps + 1)
    norm = np.empty(n_steps + 1)
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    if any(s < 0 or s > n_steps for s in snap_steps):
        raise ConfigError("snapshot times must lie within [0, t_final]")
    snapshots = {}
    stats = KrylovStats()

    def record(k, vec):
        nv = number @ vec
        n_mean[k] = np.vdot(vec, nv).real
        n2_mean[k] = np.vdot(nv, nv).real
        overlap[k] = np.vdot(psi0, vec)
        lam_k = envelope.coupling(params.lam, times[k])
        energy[k] = np.vdot(vec, static @ vec + lam_k * (coupling @ vec)).real
        norm[k] = np.linalg.norm(vec)
        if k in snap_steps:
            full = np.zeros(params.dimension, dtype=complex)
            full[idx] = vec
            snapshots[float(times[k])] = full

    record(0, psi)
    for k in range(n_steps):
        lam_mid = float(envelope.coupling(params.lam, times[k] + 0.5 * dt))
        h = static + lam_mid * coupling
        psi = expm_krylov(h, psi, dt, m=krylov_dim, tol=tol, stats=stats)
        record(k + 1, psi)

    traj = Trajectory(params, envelope, dt, times, n_mean, n2_mean, overlap, energy, norm,
                      snapshots, parity, stats)
    if check_step:
        half = evolve(params, envelope, t_final, dt / 2, krylov_dim=krylov_dim, tol=tol, initial=initial)
        traj.convergence = step_convergence(traj, half)
    return traj


def step_convergence(coarse: Trajectory, fine: Trajectory, threshold: float = 0.01) -> dict:
    """Compare the gain at the coarse run's first peak with the half-step run."""
    g1 = quantum_gain(coarse)
    g2 = quantum_gain(fine)
    i = first_peak_index(g1)
    if i is None:
        raise NoPeak("no gain peak to compare under dt -> dt/2")
    ratio = int(round(coarse.dt / fine.dt))
    rel = float(abs(g2[ratio * i] - g1[i]) / abs(g1[i]))
    report = {"dt": coarse.dt, "dt_half": fine.dt, "t_peak": float(coarse.times[i]),
              "gain_peak": float(g1[i]), "gain_peak_half": float(g2[ratio * i]), "relative_change": rel}
    if rel > threshold:
        raise StepNonConverged(f"gain at the first peak changed by {100 * rel:.2f}% under dt -> dt/2")
    return report


# ---------------------------------------------------------------------------
# observables


def quantum_gain(traj: Trajectory) -> np.ndarray:
    """``g(t) = <n>(t) / <n>(0)``."""
    n0 = traj.n_mean[0]
    if n0 < 1e-14:
        raise DegenerateDenominator(f"initial boson population {n0:.2e} is too small for a gain")
    return traj.n_mean / n0


def sqnr(traj: Trajectory) -> np.ndarray:
    """``<n>^2 / var(n)``; +inf where the variance is below 1e-14."""
    var = traj.n2_mean - traj.n_mean**2
    out = np.full_like(var, np.inf)
    ok = var >= 1e-14
    out[ok] = traj.n_mean[ok] ** 2 / var[ok]
    return out


def loschmidt_echo(traj: Trajectory) -> np.ndarray:
    return np.abs(traj.overlap) ** 2


def rate_function(traj: Trajectory, n_spins: int | None = None, ceiling: float | None = None) -> np.ndarray:
    """``-(1/N) log L(t)`` with L floored at 1e-300 and an optional ceiling on the result."""
    n = n_spins or traj.params.n_spins
    xi = -np.log(np.maximum(loschmidt_echo(traj), ECHO_FLOOR)) / n
    if ceiling is not None:
        xi = np.minimum(xi, ceiling)
    return xi


def first_peak_index(g: np.ndarray, prominence: float = PEAK_PROMINENCE) -> int | None:
    """Index of the first local maximum whose prominence is at least ``prominence * max(g)``."""
    g = np.asarray(g, dtype=float)
    peaks, _ = find_peaks(g, prominence=prominence * np.max(g))
    return int(peaks[0]) if len(peaks) else None


def echo_cycles(times, echo, t_max: float | None = None, prominence: float = 0.1) -> list[tuple[int, int]]:
    """Collapse-revival cycles of L(t) as (minimum index, following maximum index) pairs.

    Extrema must have a prominence of at least ``prominence`` times the range
    of L over ``t <= t_max``; a cycle counts only if its revival is inside.
    """
    times, echo = np.asarray(times), np.asarray(echo)
    keep = times <= (times[-1] if t_max is None else t_max)
    e = echo[keep]
    span = float(e.max() - e.min())
    if span == 0:
        return []
    lows, _ = find_peaks(-e, prominence=prominence * span)
    highs, _ = find_peaks(e, prominence=prominence * span)
    cycles = []
    for k, lo in enumerate(lows):
        nxt = lows[k + 1] if k + 1 < len(lows) else len(e)
        up = highs[(highs > lo) & (highs < nxt)]
        if len(up):
            cycles.append((int(lo), int(up[0])))
    return cycles


def rate_kinks(xi, n_sigma: float = 5.0) -> np.ndarray:
    """Indices where |second difference of xi| spikes above ``n_sigma`` robust sigmas.

    The background level and width are the median and the scaled median
    absolute deviation of the second difference. Consecutive spike samples
    form one kink located at their largest value.
    """
    d2 = np.abs(np.diff(np.asarray(xi, dtype=float), 2))
    med = np.median(d2)
    sigma = 1.4826 * np.median(np.abs(d2 - med))
    hot = np.flatnonzero(d2 > med + n_sigma * sigma)
    if len(hot) == 0:
        return hot
    groups = np.split(hot, np.flatnonzero(np.diff(hot) > 1) + 1)
    return np.array([g[np.argmax(d2[g])] + 1 for g in groups])


def local_minima(y) -> np.ndarray:
    """Indices of strict interior local minima."""
    y = np.asarray(y)
    return np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1


@dataclass
class PeakInfo:
    index: int
    t_peak: float
    gain: float
    sqnr: float


def first_gain_peak(traj: Trajectory) -> PeakInfo:
    """First prominent maximum of g(t).

    Raises
    ------
    NoPeak
        If g never exceeds 1 + 1e-3 or has no prominent local maximum before t_final.
    """
    g = quantum_gain(traj)
    if g.max() <= 1 + GAIN_FLOOR:
        raise NoPeak(f"gain never exceeds 1 + {GAIN_FLOOR:g} within t_final={traj.times[-1]:g}")
    i = first_peak_index(g)
    if i is None:
        raise NoPeak(f"gain has no prominent local maximum within t_final={traj.times[-1]:g}")
    return PeakInfo(i, float(traj.times[i]), float(g[i]), float(sqnr(traj)[i]))


# ---------------------------------------------------------------------------
# scans


@dataclass
class BiasScan:
    lambda0: np.ndarray
    gain_peak: np.ndarray
    sqnr_peak: np.ndarray
    t_peak: np.ndarray
    params: ModelParams
    envelope: PulseEnvelope
    dt: float
    t_final: float

    @property
    def optimal_index(self) -> int:
        if np.all(np.isnan(self.gain_peak)):
            raise NoPeak("no bias produced a gain peak")
        return int(np.nanargmax(self.gain_peak))

    @property
    def optimal_bias(self) -> float:
        return float(self.lambda0[self.optimal_index])

    @property
    def max_gain(self) -> float:
        return float(self.gain_peak[self.optimal_index])

    def rows(self):
        for row in zip(self.lambda0, self.gain_peak, self.sqnr_peak, self.t_peak):
            yield tuple(float(x) for x in row)


def peak_for_bias(params: ModelParams, lam0: float, envelope: PulseEnvelope, t_final: float,
                  dt: float = DEFAULT_DT, check_cutoff: bool = True):
    """(g, SQNR, T_peak) at the first gain peak for one bias; NaNs when there is no peak."""
    traj = evolve(params.replace(lam=float(lam0)), envelope, t_final, dt, check_cutoff=check_cutoff)
    try:
        pk = first_gain_peak(traj)
    except NoPeak:
        return float("nan"), float("nan"), float("nan")
    return pk.gain, pk.sqnr, pk.t_peak


def bias_scan(params: ModelParams, lambda0_values, envelope: PulseEnvelope, t_final: float,
              dt: float = DEFAULT_DT, mapper=map, check_cutoff: bool = True) -> BiasScan:
    """First-peak gain, SQNR and T_peak over a set of biases.

    Biases without a peak are recorded as NaN; ``mapper`` lets callers supply
    a parallel map. Raises NoPeak only when no bias produces a peak.
    """
    lam0 = np.asarray(lambda0_values, dtype=float)
    if lam0.ndim != 1 or len(lam0) == 0 or np.any(np.diff(lam0) <= 0):
        raise ConfigError("bias values must be a non-empty strictly ascending sequence")
    results = list(mapper(lambda x: peak_for_bias(params, x, envelope, t_final, dt, check_cutoff), lam0))
    arr = np.array(results, dtype=float).reshape(len(lam0), 3)
    scan = BiasScan(lam0, arr[:, 0], arr[:, 1], arr[:, 2], params, envelope, dt, t_final)
    scan.optimal_index  # raises NoPeak when every bias failed
    return scan


def refine_bias(params: ModelParams, window: tuple[float, float], envelope: PulseEnvelope, t_final: float,
                dt: float = DEFAULT_DT, steps=(0.01, 0.001, 0.0005), check_cutoff: bool = True) -> BiasScan:
    """Coarse-to-fine bias search for the largest first-peak gain.

    The first level scans ``window`` at ``steps[0]``; each later level scans
    plus or minus one previous step around the current optimum. Every
    evaluated bias is kept in the returned scan.
    """
    lo, hi = map(float, window)
    if not hi > lo or not steps or any(s <= 0 for s in steps):
        raise ConfigError("window must be ascending and steps positive")
    seen: dict[float, tuple] = {}

    def run(values):
        for x in values:
            key = round(float(x), 12)
            if lo - 1e-12 <= key <= hi + 1e-12 and key not in seen:
                seen[key] = peak_for_bias(params, key, envelope, t_final, dt, check_cutoff)

    def best():
        keys = sorted(seen)
        gains = np.array([seen[k][0] for k in keys])
        if np.all(np.isnan(gains)):
            raise NoPeak("no bias in the window produced a gain peak")
        return keys[int(np.nanargmax(gains))]

    run(np.arange(round((hi - lo) / steps[0]) + 1) * steps[0] + lo)
    for prev, step in zip(steps, steps[1:]):
        centre = best()
        k = int(round(prev / step))
        run(centre + step * np.arange(-k, k + 1))
    keys = sorted(seen)
    arr = np.array([seen[k] for k in keys], dtype=float)
    return BiasScan(np.array(keys), arr[:, 0], arr[:, 1], arr[:, 2], params, envelope, dt, t_final)


# ---------------------------------------------------------------------------
# phase-space snapshots


@dataclass
class QSnapshot:
    time: float
    spin: object
    boson: object


def qfunction_snapshots(traj: Trajectory, times, theta, phi, x, y, convention: str = "normalized") -> list[QSnapshot]:
    out = []
    for t in times:
        state = traj.snapshot(t)
        out.append(QSnapshot(float(t), spin_q(reduce_spin(state), theta, phi, convention),
                             boson_q(reduce_boson(state), x, y)))
    return out
