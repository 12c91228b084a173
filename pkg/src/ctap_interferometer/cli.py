import argparse
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .adiabaticity import adiabaticity_curve
from .csv_writer import CSVWriter
from .evolution import CONVERGENCE_TOL, propagate
from .run_config import FIELD_NAMES, RunConfig, build_config, load_config_file, parse_steps
from .spectrum import CHAIN_LABELS, RING_LABELS, eigenspectrum
from .sweeps import (
    antidiagonal_trace, check_fringe_resolution, fit_fringes, fringe_time_scaling, population_map,
    sensitivity_map, sensitivity_vs_time, time_detuning_sweep, transpose_asymmetry,
)
from .types import (
    CHAIN_SITES, RING_SITES, ConvergenceError, DetuningConfig, FringeFitError, PulseSchedule,
    SingularGapError, SweepPointError,
)

LOG = logging.getLogger("ctap_interferometer")

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_NUMERICAL = 3


def setup_logging(debug: bool, logfile: Optional[str]) -> None:
    level = logging.DEBUG if debug else logging.INFO
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if logfile:
        handlers.append(logging.FileHandler(logfile, encoding="utf-8"))
    logging.basicConfig(level=level, handlers=handlers, format="%(levelname)s %(message)s", force=True)


def _schedule(config: RunConfig, t_max: Optional[float] = None) -> PulseSchedule:
    return PulseSchedule(config.omega_max, config.t_max if t_max is None else t_max)


def _detuning(config: RunConfig) -> DetuningConfig:
    if config.system == "chain":
        return DetuningConfig.chain(config.delta)
    if config.antisymmetric is not None:
        return DetuningConfig.antisymmetric(config.antisymmetric)
    return DetuningConfig(delta_u=config.delta_u, delta_d=config.delta_d)


def _output_path(config: RunConfig) -> Optional[Path]:
    return Path(config.output).expanduser().resolve() if config.output else None


def _t_max_values(config: RunConfig) -> np.ndarray:
    if config.t_max_values:
        return np.asarray(config.t_max_values, dtype=float)
    return np.geomspace(config.t_max_min, config.t_max_max, config.t_max_count)


def _finish(ok: bool, command: str, started: float) -> int:
    if not ok:
        LOG.error("Failed to write %s output", command)
        return EXIT_BAD_ARGS
    LOG.info("%s completed in %.2fs", command, time.perf_counter() - started)
    return EXIT_OK


def cmd_spectrum(config: RunConfig) -> int:
    """瞬時固有値（と任意で固有ベクトル成分）を時刻ごとに出力する"""
    started = time.perf_counter()
    times, energies, vectors = eigenspectrum(_schedule(config), _detuning(config), config.samples, config.system)
    ring = config.system == "ring"
    writer = CSVWriter("spectrum", config.as_metadata())
    ok = writer.write_spectrum(
        times, energies,
        vectors if config.eigenvectors else None,
        site_labels=RING_SITES if ring else CHAIN_SITES,
        state_labels=RING_LABELS if ring else CHAIN_LABELS,
        output_path=_output_path(config),
    )
    return _finish(ok, "spectrum", started)


def cmd_evolve(config: RunConfig) -> int:
    """サイト占有率の時間変化を出力する"""
    started = time.perf_counter()
    traj = propagate(_schedule(config), _detuning(config), config.steps, system=config.system,
                     samples=config.samples, check=config.check_convergence)
    LOG.info("Final rho55 = %.12g after %d steps", traj.populations[-1, -1], traj.steps)
    writer = CSVWriter("evolve", config.as_metadata())
    ok = writer.write_evolution(traj.times, traj.populations, traj.norms, traj.labels, _output_path(config))
    return _finish(ok, "evolve", started)


def _tolerance(config: RunConfig) -> Optional[float]:
    return CONVERGENCE_TOL if config.check_convergence else None


def cmd_map(config: RunConfig) -> int:
    """(Δu, Δd) 平面上の ρ₅₅"""
    started = time.perf_counter()
    bounds = (config.delta_min, config.delta_max)
    pmap = population_map(_schedule(config), bounds, bounds, config.resolution, config.steps,
                          config.workers, _tolerance(config))
    asymmetry = transpose_asymmetry(pmap)
    LOG.info("Map swap asymmetry: %.3e", asymmetry)
    writer = CSVWriter("map", config.as_metadata())
    ok = writer.write_grid(("delta_u", "delta_d", "rho55"), pmap.axis1, pmap.axis2, pmap.grid,
                           _output_path(config), extra_metadata={"swap_asymmetry": asymmetry})
    return _finish(ok, "map", started)


def cmd_timesweep(config: RunConfig) -> int:
    """(t_max, Δ) 平面上の ρ₅₅（Δu = −Δd = Δ）"""
    started = time.perf_counter()
    pmap = time_detuning_sweep(_schedule(config), _t_max_values(config), (config.delta_min, config.delta_max),
                               config.resolution, config.steps, config.workers, _tolerance(config))
    writer = CSVWriter("timesweep", config.as_metadata())
    ok = writer.write_grid(("t_max", "delta", "rho55"), pmap.axis1, pmap.axis2, pmap.grid, _output_path(config))
    return _finish(ok, "timesweep", started)


def cmd_sensitivity(config: RunConfig) -> int:
    """∂ρ₅₅/∂Δu の格子、または --vs-time で第1縞のピーク感度と t_max の線形関係"""
    started = time.perf_counter()
    writer = CSVWriter("sensitivity", config.as_metadata())
    if config.vs_time:
        scaling = sensitivity_vs_time(_schedule(config), _t_max_values(config), config.f_guess,
                                      config.fd_step, config.steps, config.workers)
        LOG.info("Peak sensitivity vs t_max: slope %.6g, R^2 %.6f", scaling.slope, scaling.r_squared)
        rows = zip(scaling.t_max, scaling.operating_points, scaling.peak)
        ok = writer.write_table(
            ["t_max", "delta_operating", "peak_abs_drho55_ddelta_u"], rows, _output_path(config),
            extra_metadata={"fit_slope": scaling.slope, "fit_intercept": scaling.intercept,
                            "fit_r_squared": scaling.r_squared},
        )
        return _finish(ok, "sensitivity", started)

    bounds = (config.delta_min, config.delta_max)
    smap = sensitivity_map(_schedule(config), bounds, bounds, config.resolution, config.fd_step,
                           config.steps, config.workers, config.charge_shift)
    extra: Dict[str, np.ndarray] = {}
    if smap.charge_response is not None:
        extra["drho55_charge"] = smap.charge_response
    ok = writer.write_grid(("delta_u", "delta_d", "drho55_ddelta_u"), smap.axis1, smap.axis2, smap.grid,
                           _output_path(config), extra_columns=extra,
                           extra_metadata={"fd_step_used": smap.delta_step})
    return _finish(ok, "sensitivity", started)


def cmd_fringes(config: RunConfig) -> int:
    """反対称離調線の透過極大 Δₙ と当てはめた f（複数 t_max なら log-log 傾きも）"""
    started = time.perf_counter()
    t_values = list(config.t_max_values) or [config.t_max]
    fits = []
    for t_max in t_values:
        schedule = _schedule(config, t_max)
        span = config.fringe_count * config.f_guess / t_max
        # 計算前に分解能を確認する
        check_fringe_resolution(span / (config.resolution - 1), t_max, config.f_guess)
        trace = antidiagonal_trace(schedule, (0.0, span), config.resolution, config.steps,
                                   config.workers, _tolerance(config))
        fits.append(fit_fringes(trace, t_max, config.f_guess))
    metadata: Dict[str, Any] = {"fit_f": float(np.mean([fit.f for fit in fits]))}
    if len(fits) >= 2:
        metadata["log_delta1_vs_log_t_max_slope"] = fringe_time_scaling(fits)
    writer = CSVWriter("fringes", config.as_metadata())
    ok = writer.write_fringes(fits, _output_path(config), extra_metadata=metadata)
    return _finish(ok, "fringes", started)


def cmd_adiabaticity(config: RunConfig) -> int:
    """鎖モデルの 𝒜_max（数値）と2次級数を Δ ごとに出力する"""
    started = time.perf_counter()
    deltas = np.linspace(config.delta_min, config.delta_max, config.resolution)
    rows = adiabaticity_curve(_schedule(config), deltas)
    writer = CSVWriter("adiabaticity", config.as_metadata())
    ok = writer.write_adiabaticity(rows, _output_path(config))
    return _finish(ok, "adiabaticity", started)


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    p.add_argument("--config", help="key = value parameter file (flags override it)")
    p.add_argument("--omega-max", type=float, default=s, help="Peak coupling Omega_max (default: 1.0)")
    p.add_argument("--steps", type=parse_steps, default=s,
                   help="Integration steps or 'auto' = max(2000, ceil(40*Omega_max*t_max))")
    p.add_argument("--output", "-o", default=s, help="CSV path (default: stdout)")
    p.add_argument("--check-convergence", action="store_true", default=s,
                   help="Require |rho55(2N) - rho55(N)| <= 1e-8; with --steps auto N is doubled "
                        "until it holds (exit 3 if it never does)")
    p.add_argument("--debug", action="store_true", help="Enable debug logs")
    p.add_argument("--logfile", help="Log file path")
    return p


def _add_t_max(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-max", type=float, default=argparse.SUPPRESS, help="Protocol duration (default: 200)")


def _add_detunings(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--system", choices=("ring", "chain"), default=s, help="Six-site ring or five-site chain")
    p.add_argument("--delta-u", type=float, default=s, help="Detuning of site 3u (ring)")
    p.add_argument("--delta-d", type=float, default=s, help="Detuning of site 3d (ring)")
    p.add_argument("--delta", type=float, default=s, help="Middle-site detuning (chain)")
    p.add_argument("--antisymmetric", type=float, default=s, metavar="D",
                   help="Shorthand for delta_u = -delta_d = D (ring)")
    p.add_argument("--samples", type=int, default=s, help="Output time samples (default: 500)")


def _add_grid(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--delta-min", type=float, default=s, help="Lower detuning bound (default: -1)")
    p.add_argument("--delta-max", type=float, default=s, help="Upper detuning bound (default: 1)")
    p.add_argument("--resolution", type=int, default=s, help="Points per detuning axis (default: 201)")


def _add_workers(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="Worker processes (default: 1)")


def _add_t_max_range(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--t-max-min", type=float, default=s, help="Shortest t_max (default: 100)")
    p.add_argument("--t-max-max", type=float, default=s, help="Longest t_max (default: 2000)")
    p.add_argument("--t-max-count", type=int, default=s, help="Log-spaced t_max values (default: 20)")
    p.add_argument("--t-max-values", type=float, nargs="+", default=s, help="Explicit t_max values")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctap-sim",
                                description="Six-site CTAP interferometer simulator (CSV output)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = _common_parser()

    sp = sub.add_parser("spectrum", parents=[common], help="Instantaneous eigenvalues vs t")
    _add_t_max(sp)
    _add_detunings(sp)
    sp.add_argument("--eigenvectors", action="store_true", default=argparse.SUPPRESS,
                    help="Also write labelled eigenvector amplitudes")
    sp.set_defaults(handler=cmd_spectrum)

    sp = sub.add_parser("evolve", parents=[common], help="Site populations vs t")
    _add_t_max(sp)
    _add_detunings(sp)
    sp.set_defaults(handler=cmd_evolve)

    sp = sub.add_parser("map", parents=[common], help="Final rho55 over the (delta_u, delta_d) plane")
    _add_t_max(sp)
    _add_grid(sp)
    _add_workers(sp)
    sp.set_defaults(handler=cmd_map)

    sp = sub.add_parser("timesweep", parents=[common], help="Final rho55 over (t_max, delta)")
    _add_grid(sp)
    _add_t_max_range(sp)
    _add_workers(sp)
    sp.set_defaults(handler=cmd_timesweep)

    sp = sub.add_parser("sensitivity", parents=[common], help="drho55/ddelta_u map or its t_max scaling")
    _add_t_max(sp)
    _add_grid(sp)
    _add_t_max_range(sp)
    _add_workers(sp)
    s = argparse.SUPPRESS
    sp.add_argument("--fd-step", type=float, default=s, help="Central-difference step (default: 1e-3*f/t_max)")
    sp.add_argument("--charge-shift", type=float, default=s,
                    help="Also report rho55 change for a delta_u shift of this size")
    sp.add_argument("--vs-time", action="store_true", default=s,
                    help="Track the first-fringe peak sensitivity across t_max values")
    sp.add_argument("--f-guess", type=float, default=s, help="Fringe factor estimate f (default: 20)")
    sp.set_defaults(handler=cmd_sensitivity)

    sp = sub.add_parser("fringes", parents=[common], help="Fringe maxima and fitted f")
    sp.add_argument("--t-max", dest="t_max_values", type=float, nargs="+", default=s,
                    help="One or more protocol durations")
    sp.add_argument("--resolution", type=int, default=s, help="Detuning samples per trace (default: 201)")
    sp.add_argument("--fringe-count", type=int, default=s, help="Expected fringes to cover (default: 6)")
    sp.add_argument("--f-guess", type=float, default=s, help="Fringe factor estimate f (default: 20)")
    _add_workers(sp)
    sp.set_defaults(handler=cmd_fringes)

    sp = sub.add_parser("adiabaticity", parents=[common], help="Chain adiabaticity maximum vs delta")
    _add_t_max(sp)
    _add_grid(sp)
    sp.set_defaults(handler=cmd_adiabaticity)
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(Path(args.config).expanduser()) if args.config else {}
    flag_values = {k: v for k, v in vars(args).items() if k in FIELD_NAMES}
    if "t_max_values" in flag_values:
        flag_values["t_max_values"] = tuple(flag_values["t_max_values"])
    return build_config(file_values, flag_values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.debug, args.logfile)
    try:
        config = config_from_args(args)
        LOG.debug("Run config: %s", config)
        return args.handler(config)
    except (ConvergenceError, FringeFitError, SweepPointError, SingularGapError) as e:
        LOG.error("%s", e)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        LOG.error("Invalid arguments: %s", e)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    raise SystemExit(main())
