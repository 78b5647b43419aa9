import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

from tqdm import tqdm

from dvrgme import __version__, settings

from .bath import HighTemperatureCorrelation, build_q_table
from .dvr import build_dvr, localized_initial_state
from .exceptions import SimulationError
from .gme import fit_decay_rate, markov_reference, propagate_gme, trajectory_to_csv
from .kernels import KernelSet, coupled_min_xi_sq
from .rates import averaged_rates, decay_rate, higher_order_rates
from .spectrum import solve_spectrum
from .utils import CsvSink, format_value, sha256_file_path

logger = logging.getLogger(__name__)

RATES_FILE = "rates_vs_s.csv"
LEVELS_FILE = "rate_vs_N.csv"
POPULATION_FILE = "population.csv"


@dataclass
class SweepResult:
    mode: str
    path: str
    rows: list = field(default_factory=list)
    trajectory: object = None
    fit: object = None


@dataclass(frozen=True)
class System:
    spectrum: object
    basis: object
    frequency: float


# ---------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------
@lru_cache(maxsize=32)
def _spectrum(potential, grid, levels):
    return solve_spectrum(potential, grid, levels)


def resonant_frequency(cfg):
    """Mean gap between the two lowest doublets."""
    return _spectrum(cfg.potential(), cfg.grid(), 4).mean_gap


def prepare_system(cfg, levels=None):
    spectrum = _spectrum(cfg.potential(), cfg.grid(), levels or cfg.levels)
    basis = build_dvr(spectrum.position, spectrum.energies)
    frequency = resonant_frequency(cfg) if cfg.resonant else cfg.omega
    return System(spectrum=spectrum, basis=basis, frequency=frequency)


def correlation_for(cfg, basis):
    if cfg.mode == "higher-order":
        return HighTemperatureCorrelation(cfg.bath())
    return build_q_table(cfg.bath(), min_pair_sq=coupled_min_xi_sq(basis))


def sweep_metadata(cfg, config_path=None, **extra):
    meta = {"artifact": f"dvrgme {__version__}"}
    for key, value in cfg.model_dump().items():
        if key in ("output_dir", "workers"):
            continue
        if isinstance(value, list):
            value = " ".join(format_value(v) for v in value)
        elif isinstance(value, float):
            value = format_value(value)
        meta[key] = value
    if config_path:
        meta["config_sha256"] = sha256_file_path(config_path)
    meta.update(extra)
    return meta


def _map(cfg, func, items, desc):
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        yield from tqdm(pool.map(func, items), total=len(items), desc=desc, leave=False)


# ---------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------
def _rates_vs_amplitude(cfg, path, meta):
    system = prepare_system(cfg)
    bath = cfg.bath()
    correlation = correlation_for(cfg, system.basis)

    def point(amplitude):
        ks = KernelSet(system.basis, bath, cfg.drive(amplitude, system.frequency), correlation)
        rm = higher_order_rates(ks, cfg.n_max) if cfg.mode == "higher-order" else averaged_rates(ks)
        rate = decay_rate(rm)
        logger.info(f"s={amplitude:g}: rate {rate.rate:.6e}")
        return [amplitude, rate.rate]

    rows = []
    with CsvSink(path, ["s", "rate"], meta) as sink:
        for row in _map(cfg, point, cfg.amplitudes, "amplitudes"):
            sink.write_row(row)
            rows.append(row)
    return rows


def truncation_shifts(rows):
    """|Gamma(N) - Gamma(N_largest)| / |Gamma(N_largest)| per level count of a rate-vs-N sweep."""
    reference = max(rows, key=lambda row: row[0])[1] if rows else 0.0
    if reference == 0.0:
        return {}
    return {int(levels): abs(rate - reference) / abs(reference) for levels, rate in rows}


def _rates_vs_levels(cfg, path, meta):
    bath = cfg.bath()
    amplitude = cfg.amplitudes[0]

    def point(levels):
        system = prepare_system(cfg, levels)
        ks = KernelSet(system.basis, bath, cfg.drive(amplitude, system.frequency), correlation_for(cfg, system.basis))
        rate = decay_rate(averaged_rates(ks))
        logger.info(f"N={levels}: rate {rate.rate:.6e}")
        return [levels, rate.rate]

    rows = []
    with CsvSink(path, ["N", "rate"], meta) as sink:
        for row in _map(cfg, point, cfg.levels_list, "levels"):
            sink.write_row(row)
            rows.append(row)

    largest = max(cfg.levels_list)
    for levels, shift in truncation_shifts(rows).items():
        if levels != largest and shift > settings.TRUNCATION_TOL:
            logger.warning(f"N={levels} rate differs from N={largest} by {shift:.1%}; truncation not converged")
    return rows


def _population(cfg, path, meta):
    system = prepare_system(cfg)
    bath = cfg.bath()
    ks = KernelSet(
        system.basis, bath, cfg.drive(cfg.amplitudes[0], system.frequency), correlation_for(cfg, system.basis)
    )
    init = localized_initial_state(system.basis, system.spectrum)
    try:
        if cfg.mode == "gme":
            traj = propagate_gme(ks, init, cfg.propagation())
        else:
            traj = markov_reference(ks, init, cfg.propagation())
    except SimulationError as exc:
        columns = ["t", *[f"rho_{i + 1}" for i in range(ks.size)], "P_L"]
        CsvSink(path, columns, meta).abort(str(exc).splitlines()[0])
        raise
    fit = fit_decay_rate(traj, cfg.t_burn)
    logger.info(f"{cfg.mode}: fitted rate {fit.rate:.6e} +- {fit.uncertainty:.1e} (rms {fit.rms_residual:.2e})")
    meta = dict(meta, fitted_rate=format_value(fit.rate))
    trajectory_to_csv(traj, path, metadata=meta)
    return traj, fit


def run_sweep(cfg, config_path=None):
    """Run the configured mode and write its CSV into cfg.output_dir."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    meta = sweep_metadata(cfg, config_path)

    if cfg.mode in ("avg-rates", "higher-order"):
        path = os.path.join(cfg.output_dir, RATES_FILE)
        return SweepResult(cfg.mode, path, rows=_rates_vs_amplitude(cfg, path, meta))
    if cfg.mode == "rate-vs-n":
        path = os.path.join(cfg.output_dir, LEVELS_FILE)
        return SweepResult(cfg.mode, path, rows=_rates_vs_levels(cfg, path, meta))

    path = os.path.join(cfg.output_dir, POPULATION_FILE)
    traj, fit = _population(cfg, path, meta)
    return SweepResult(cfg.mode, path, trajectory=traj, fit=fit)
