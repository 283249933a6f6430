"""Command-line driver: ``dickelmg <command> --config run.yaml --out results/``.

Every CSV gets a JSON sidecar holding the resolved configuration and the
package version. Floats are written with 17 significant digits and rows are
sorted before writing, so output does not depend on the worker count.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, load_config, resolve, values_from
from .errors import ConfigError, DickeLMGError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def sidecar(csv_path: Path, command: str, cfg: dict, **extra) -> Path:
    payload = {"artifact_version": __version__, "command": command, "config": cfg}
    payload.update(extra)
    return write_json(csv_path.with_suffix(".json"), payload)


def pmap(fn, items, workers: int):
    """Ordered map over a process pool (inline when ``workers == 1``)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _params(cfg, **changes):
    from .hilbert import ModelParams

    return ModelParams(**{**cfg["params"], **changes})


# ---------------------------------------------------------------------------
# worker tasks (module level so they pickle)


def _ed_cell(task):
    from .meanfield import classify_phase
    from .spectrum import ground_state, order_parameters_ed
    from .hilbert import ModelParams

    key, pdict = task
    p = ModelParams(**pdict)
    _, state = ground_state(p)
    return key, classify_phase(p)[0].phase, order_parameters_ed(state, p).as_tuple()


def _op_point(task):
    from .spectrum import ground_state, order_parameters_ed
    from .hilbert import ModelParams

    value, pdict = task
    p = ModelParams(**pdict)
    _, state = ground_state(p)
    return value, order_parameters_ed(state, p).as_tuple()


def _chi_ladder_point(task):
    from .hilbert import ModelParams
    from .spectrum import adequate_cutoff, canonical_axis, default_window, locate_chi_peak

    n, pdict, axis, cutoff, window, fd_step = task
    p = ModelParams(**pdict).replace(n_spins=n, boson_cutoff=max(2, n))
    if cutoff == "auto":
        w = window or default_window(p, axis)
        p = p.replace(boson_cutoff=adequate_cutoff(p.replace(**{canonical_axis(axis): w[1]})))
    elif cutoff != "N":
        p = p.replace(boson_cutoff=int(cutoff))
    scan = locate_chi_peak(p, axis, window=window, fd_step=fd_step)
    return n, p.boson_cutoff, scan


def _bias_point(task):
    from .dynamics import PulseEnvelope, peak_for_bias
    from .hilbert import ModelParams

    lam0, pdict, env, t_final, dt, check = task
    return (lam0, *peak_for_bias(ModelParams(**pdict), lam0, PulseEnvelope(**env), t_final, dt, check))


# ---------------------------------------------------------------------------
# commands


def cmd_phase_diagram(cfg, out: Path):
    from .meanfield import PhaseGrid, boundary_segments, params_at, phase_diagram_grid

    pd = cfg["phase_diagram"]
    a1, a2 = pd["axis1"], pd["axis2"]
    base = _params(cfg)
    grid = phase_diagram_grid(
        a1["name"], (a1["start"], a1["stop"]), a2["name"], (a2["start"], a2["stop"]),
        (a1["num"], a2["num"]), fixed=base, split=pd["split"],
    )
    files = []
    if pd["mode"] == "ed":
        tasks = []
        for i, x in enumerate(grid.values1):
            for j, y in enumerate(grid.values2):
                p = params_at(base, {a1["name"]: x, a2["name"]: y}, pd["split"])
                tasks.append(((i, j), p.as_dict()))
        results = sorted(pmap(_ed_cell, tasks, cfg["workers"]), key=lambda r: r[0])
        order = np.zeros_like(grid.order)
        for (i, j), _, ops in results:
            order[i, j] = ops
        grid = PhaseGrid(grid.axis1, grid.axis2, grid.values1, grid.values2, grid.phase, order,
                         grid.boundary, grid.fixed, grid.split)
    path = write_csv(out / "phase_diagram.csv",
                     ("axis1", "axis2", "phase", "zeta_s", "zeta_mx", "zeta_my", "m_z"), grid.rows())
    files.append(path)
    summary = boundary_segments(grid)
    summary.update({"axis1": grid.axis1, "axis2": grid.axis2, "mode": pd["mode"],
                    "boundary_cells": int(grid.boundary.sum())})
    sidecar(path, "phase-diagram", cfg)
    files.append(write_json(out / "phase_boundaries.json",
                            {"artifact_version": __version__, "config": cfg, **summary}))
    return files


def _scan_rows(values, ops, chi):
    return [(v, *o, c) for v, o, c in sorted(zip(values, ops, chi), key=lambda r: r[0])]


SCAN_HEADER = ("coupling", "zeta_s", "zeta_mx", "zeta_my", "m_z", "chi")


def cmd_op_scan(cfg, out: Path):
    from .spectrum import canonical_axis

    sc = cfg["op_scan"]
    axis = canonical_axis(sc["axis"])
    values = values_from(sc["values"], "op_scan.values")
    tasks = [(float(v), _params(cfg, **{axis: float(v)}).as_dict()) for v in values]
    results = sorted(pmap(_op_point, tasks, cfg["workers"]), key=lambda r: r[0])
    ops = np.array([r[1] for r in results])
    col = {"lam": 0, "jx": 1}.get(axis)
    if col is not None and len(values) > 1:
        chi = np.gradient(ops[:, col], values)
    else:
        chi = np.full(len(values), np.nan)
    path = write_csv(out / "op_scan.csv", SCAN_HEADER, _scan_rows(values, ops, chi))
    sidecar(path, "op-scan", cfg, axis=axis, chi_method="np.gradient of the axis order parameter")
    return [path]


def _chi_payload(scan):
    peak_row = int(np.argmax(scan.chi))
    return {
        "axis": scan.axis,
        "peak_location": scan.peak_location,
        "peak_height": scan.peak_height,
        "peak_row": peak_row,
        "fd_step": scan.fd_step,
        "guard_relative_change": scan.guard_relative_change,
    }


def cmd_chi_scan(cfg, out: Path):
    from .spectrum import locate_chi_peak, quadratic_fit, sensitivity_chi

    cs = cfg["chi_scan"]
    files = []
    if cs["n_values"]:
        tasks = [(int(n), cfg["params"], cs["axis"], cs["boson_cutoff"], cs["window"], cs["fd_step"])
                 for n in sorted(set(cs["n_values"]))]
        results = sorted(pmap(_chi_ladder_point, tasks, cfg["workers"]), key=lambda r: r[0])
        for n, nb, scan in results:
            path = write_csv(out / f"chi_scan_N{n}.csv", SCAN_HEADER,
                             _scan_rows(scan.values, [o.as_tuple() for o in scan.order], scan.chi))
            sidecar(path, "chi-scan", cfg, n_spins=n, boson_cutoff=nb, **_chi_payload(scan))
            files.append(path)
        ns = [r[0] for r in results]
        peaks = [r[2].peak_height for r in results]
        coeffs, r2 = quadratic_fit(ns, peaks)
        files.append(write_json(out / "chi_fit.json", {
            "artifact_version": __version__, "config": cfg,
            "n_values": ns, "chi_max": peaks, "peak_locations": [r[2].peak_location for r in results],
            "boson_cutoffs": [r[1] for r in results],
            "coefficients": {"a": coeffs[0], "b": coeffs[1], "c": coeffs[2]}, "r_squared": r2,
        }))
        return files
    p = _params(cfg)
    if cs["values"] is not None:
        scan = sensitivity_chi(p, cs["axis"], values_from(cs["values"], "chi_scan.values"), cs["fd_step"])
    else:
        scan = locate_chi_peak(p, cs["axis"], window=cs["window"], fd_step=cs["fd_step"])
    path = write_csv(out / "chi_scan.csv", SCAN_HEADER,
                     _scan_rows(scan.values, [o.as_tuple() for o in scan.order], scan.chi))
    sidecar(path, "chi-scan", cfg, **_chi_payload(scan))
    return [path]


def _envelope(cfg):
    from .dynamics import PulseEnvelope

    return PulseEnvelope(**cfg["envelope"])


TRAJ_HEADER = ("t", "gain", "sqnr", "echo", "rate")


def _q_files(out: Path, tag: str, spin, boson, cfg, command, **extra):
    r = spin.q / spin.q.max() if spin.q.max() > 0 else spin.q
    rows = [(t, p, q, rr) for (t, p, q), rr in zip(spin.rows(), r.ravel())]
    f1 = write_csv(out / f"q_spin{tag}.csv", ("theta", "phi", "Q", "r"), rows)
    sidecar(f1, command, cfg, convention=spin.convention, integral=spin.integral(), **extra)
    f2 = write_csv(out / f"q_boson{tag}.csv", ("x", "y", "Q"), boson.rows())
    sidecar(f2, command, cfg, outside_mass=boson.outside_mass, integral=boson.integral(), **extra)
    return [f1, f2]


def _qaxes(cfg):
    q = cfg["qfunc"]
    return tuple(values_from(q[k], f"qfunc.{k}") for k in ("theta", "phi", "x", "y"))


def cmd_dynamics(cfg, out: Path):
    from .dynamics import evolve, loschmidt_echo, qfunction_snapshots, quantum_gain, rate_function, sqnr

    d = cfg["dynamics"]
    traj = evolve(_params(cfg), _envelope(cfg), d["t_final"], d["dt"],
                  snapshot_times=d["snapshot_times"], check_step=d["check_step"], check_cutoff=d["check_cutoff"])
    rows = zip(traj.times, quantum_gain(traj), sqnr(traj), loschmidt_echo(traj),
               rate_function(traj, ceiling=d["rate_ceiling"]))
    path = write_csv(out / "trajectory.csv", TRAJ_HEADER, rows)
    sidecar(path, "dynamics", cfg, representation="hilbert", **traj.metadata())
    files = [path]
    if d["snapshot_times"]:
        theta, phi, x, y = _qaxes(cfg)
        for snap in qfunction_snapshots(traj, d["snapshot_times"], theta, phi, x, y, cfg["qfunc"]["convention"]):
            files += _q_files(out, f"_t{fmt(snap.time)}", snap.spin, snap.boson, cfg, "dynamics", time=snap.time)
    return files


def cmd_bias_scan(cfg, out: Path):
    b = cfg["bias_scan"]
    lam0 = values_from(b["lambda0"], "bias_scan.lambda0")
    tasks = [(float(l), cfg["params"], cfg["envelope"], b["t_final"], b["dt"], b["check_cutoff"]) for l in lam0]
    rows = sorted(pmap(_bias_point, tasks, cfg["workers"]), key=lambda r: r[0])
    gains = np.array([r[1] for r in rows])
    if np.all(np.isnan(gains)):
        from .errors import NoPeak

        raise NoPeak("no bias produced a gain peak within t_final")
    k = int(np.nanargmax(gains))
    path = write_csv(out / "bias_scan.csv", ("lambda0", "gain", "sqnr", "t_peak"), rows)
    sidecar(path, "bias-scan", cfg, optimal_bias=rows[k][0], max_gain=rows[k][1], t_peak=rows[k][3])
    return [path]


def cmd_qfunc(cfg, out: Path):
    from .qfunction import boson_q, reduce_boson, reduce_spin, spin_q
    from .spectrum import ground_state

    _, state = ground_state(_params(cfg))
    theta, phi, x, y = _qaxes(cfg)
    spin = spin_q(reduce_spin(state), theta, phi, cfg["qfunc"]["convention"])
    boson = boson_q(reduce_boson(state), x, y)
    return _q_files(out, "", spin, boson, cfg, "qfunc", state="ground")


def cmd_thermal(cfg, out: Path):
    from .hilbert import hamiltonian_parts
    from .spectrum import thermal_state

    p = _params(cfg)
    parts = hamiltonian_parts(p.n_spins, p.boson_cutoff)
    n = p.n_spins
    rows = []
    for temp in sorted(cfg["thermal"]["temperatures"]):
        rho = thermal_state(p, temp)

        def ev(op):
            return float(np.real(np.trace(op @ rho)))

        rows.append((temp, ev(parts.number) / n, ev(parts.sx2) / n**2, ev(parts.sy2) / n**2, ev(parts.sz) / n))
    path = write_csv(out / "thermal.csv", ("temperature", "zeta_s", "zeta_mx", "zeta_my", "m_z"), rows)
    sidecar(path, "thermal", cfg)
    return [path]


def cmd_liouville_evolve(cfg, out: Path):
    from .hilbert import hamiltonian_parts
    from .liouville import evolve_liouville
    from .spectrum import ground_state, thermal_state

    lv = cfg["liouville"]
    p = _params(cfg)
    env = _envelope(cfg)
    parts = hamiltonian_parts(p.n_spins, p.boson_cutoff)
    if lv["temperature"] is None:
        _, state = ground_state(p)
        rho0 = np.outer(state.data, state.data.conj())
    else:
        rho0 = thermal_state(p, lv["temperature"])
    num = parts.number.toarray()

    def h_of_t(t):
        return parts.hamiltonian(p.epsilon, float(env.coupling(p.lam, t)), p.jx, p.jy)

    traj = evolve_liouville(rho0, h_of_t, lv["dt"], lv["t_final"], lv["convention"],
                            observables={"n": num, "n2": num @ num, "rho0": rho0})
    nm = traj.expectations["n"].real
    var = traj.expectations["n2"].real - nm**2
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(var >= 1e-14, nm**2 / np.where(var >= 1e-14, var, 1.0), np.inf)
    echo = np.clip(traj.expectations["rho0"].real, 0, None)
    rate = -np.log(np.maximum(echo, 1e-300)) / p.n_spins
    if nm[0] < 1e-14:
        from .errors import DegenerateDenominator

        raise DegenerateDenominator("initial boson population too small for a gain")
    path = write_csv(out / "trajectory.csv", TRAJ_HEADER, zip(traj.times, nm / nm[0], snr, echo, rate))
    sidecar(path, "liouville-evolve", cfg, representation="liouville", envelope=env.as_dict(),
            trace_drift=traj.trace_drift, hermiticity_error=traj.hermiticity_error,
            convention=traj.convention, dt=lv["dt"], t_final=lv["t_final"])
    return [path]


def cmd_selftest(cfg, out: Path | None = None, stream=None):
    from .selftest import run_selftest

    return run_selftest(stream or sys.stdout)


HANDLERS = {
    "phase-diagram": cmd_phase_diagram,
    "op-scan": cmd_op_scan,
    "chi-scan": cmd_chi_scan,
    "dynamics": cmd_dynamics,
    "bias-scan": cmd_bias_scan,
    "qfunc": cmd_qfunc,
    "thermal": cmd_thermal,
    "liouville-evolve": cmd_liouville_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dickelmg", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML or JSON run configuration")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--workers", type=int, default=None, help="process-pool size")
    ap.add_argument("--seed", type=int, default=None, help="reserved; no stochastic paths use it")
    ap.add_argument("--version", action="version", version=__version__)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            ok = cmd_selftest(None)
            return EXIT_OK if ok else EXIT_NUMERICAL
        user = load_config(args.config)
        if "command" in user and user["command"] != args.command:
            raise ConfigError(f"command: config is for {user['command']!r}, invoked as {args.command!r}")
        cfg = resolve(user, {"workers": args.workers, "seed": args.seed})
        cfg["command"] = args.command
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write_probe"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"--out: directory {out} is not writable ({exc})") from None
        files = HANDLERS[args.command](cfg, out)
        for f in files:
            print(f)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DickeLMGError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
