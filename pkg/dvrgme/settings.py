"""
Settings for the dvrgme simulator.

Values come from the environment (optionally a ``.env`` file next to the
project root) and fall back to the documented defaults below. All physical
quantities use internal units: hbar = M = omega_0 = k_B = 1.
"""

from pathlib import Path
import os
import logging.config

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

env_path = BASE_DIR / ".env"
if env_path.exists():
    load_dotenv(env_path)


def _env_float(key, default):
    return float(os.environ.get(f"DVRGME_{key}", default))


def _env_int(key, default):
    return int(os.environ.get(f"DVRGME_{key}", default))


# ---- Logging ----
LOG_LEVEL = os.environ.get("DVRGME_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "[%(levelname)s] %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        "tunneling": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "dvrgme": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}


def configure_logging():
    logging.config.dictConfig(LOGGING)


# ---- Spectrum ----
GRID_POINTS = _env_int("GRID_POINTS", 2048)
# grid half-width beyond the potential minimum, in harmonic lengths
GRID_MARGIN = _env_float("GRID_MARGIN", 6.0)
DEGENERACY_TOL = _env_float("DEGENERACY_TOL", 1e-12)
# levels above V=0 by more than this (hbar omega_0) raise the above-barrier flag
BARRIER_MARGIN = _env_float("BARRIER_MARGIN", 0.5)
REFINEMENT_TOL = _env_float("REFINEMENT_TOL", 1e-4)

# ---- Bath ----
Q_TABLE_STEP = _env_float("Q_TABLE_STEP", 0.005)
Q_TABLE_T_MAX_CAP = _env_float("Q_TABLE_T_MAX_CAP", 2e4)
QUAD_EPSREL = _env_float("QUAD_EPSREL", 1e-8)
QUAD_LIMIT = _env_int("QUAD_LIMIT", 500)
# absolute floor of rate quadratures, relative to max(Delta^2/2) per unit time
QUAD_ABS_FLOOR = _env_float("QUAD_ABS_FLOOR", 1e-14)

# ---- Kernels / propagation ----
KERNEL_ENVELOPE_CUTOFF = _env_float("KERNEL_ENVELOPE_CUTOFF", 1e-8)
TRACE_TOL = _env_float("TRACE_TOL", 1e-6)
POPULATION_TOL = _env_float("POPULATION_TOL", 1e-6)

# ---- Rates ----
RATE_TAIL = _env_float("RATE_TAIL", 1e-10)
RATE_TAU_CAP = _env_float("RATE_TAU_CAP", 1e5)
SERIES_TOL = _env_float("SERIES_TOL", 0.01)
# relative rate change against the largest N that counts as converged
TRUNCATION_TOL = _env_float("TRUNCATION_TOL", 0.1)
ZERO_MODE_TOL = _env_float("ZERO_MODE_TOL", 1e-10)

# ---- Sweeps ----
WORKERS = _env_int("WORKERS", 1)
OUTPUT_DIR = os.environ.get("DVRGME_OUTPUT_DIR", str(Path.cwd() / "output"))
