import logging
import math

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from .decorators import numerical_stage
from .dvr import left_population
from .exceptions import ConfigError, PropagationError
from .kernels import inhomogeneity_vector, kernel_matrix, memory_time
from .models import DecayFit, Trajectory
from .utils import sha256_payload, write_csv

logger = logging.getLogger(__name__)

# kernel histories larger than this are rebuilt per step instead of cached
CACHE_BYTES = 256 * 1024 * 1024
MONOTONE_TOL = 0.05


# ---------------------------------------------------------------------
# Step selection
# ---------------------------------------------------------------------
def characteristic_frequency(ks):
    return float(max(np.abs(ks.energy_diff).max(), np.abs(ks.basis.tunneling).max()))


def resolve_step(ks, spec):
    """
    Snap h so the drive period holds an integer number of steps and check
    it resolves both the drive and the fastest intrinsic frequency.
    """
    h = spec.step
    drive = ks.drive
    if drive.is_driven:
        per_period = math.ceil(drive.period / h - 1e-9)
        h = drive.period / per_period
        if per_period < 50:
            raise ConfigError([f"step {spec.step} resolves the drive period with only {per_period} steps (need 50)"])
    gap = characteristic_frequency(ks)
    if gap > 0 and h > 0.1 / gap + 1e-12:
        raise ConfigError([f"step {h:.4g} exceeds 0.1 / {gap:.4g}"])
    return h


def _steps_per_period(ks, h):
    if not ks.drive.is_driven:
        return None
    return int(round(ks.drive.period / h))


def _metadata(ks, spec, scheme, h, **extra):
    meta = {
        "scheme": scheme,
        "step": h,
        "bath": sha256_payload(ks.bath),
        "drive": sha256_payload(ks.drive),
        "propagation": sha256_payload(spec),
        "basis": sha256_payload({"lambda": ks.basis.positions, "F": ks.basis.site_energies, "Delta": ks.basis.tunneling}),
    }
    meta.update(extra)
    return meta


def _check_state(rho, k, t, spec):
    drift = abs(rho.sum() - 1.0)
    if drift > spec.trace_tol:
        raise PropagationError("trace drift", {"step": k, "t": round(t, 6), "drift": f"{drift:.3e}"})
    low, high = rho.min(), rho.max()
    if low < -spec.population_tol or high > 1.0 + spec.population_tol:
        raise PropagationError("population out of range", {"step": k, "t": round(t, 6), "min": f"{low:.3e}", "max": f"{high:.3e}"})


# ---------------------------------------------------------------------
# Kernel history
# ---------------------------------------------------------------------
class KernelHistory:
    """
    H(t_k, t_k - l h) for l = 0..memory. Without driving the history depends
    only on the lag; with driving it repeats with the drive period, so
    histories are cached per phase index k mod steps_per_period.
    """

    def __init__(self, ks, t0, h, memory, per_period=None):
        self.ks = ks
        self.t0 = t0
        self.h = h
        self.memory = memory
        self.per_period = per_period
        self.lags = np.arange(memory + 1) * h
        self._cache = {}
        n = ks.size
        if per_period is None:
            self._cacheable = True
        else:
            self._cacheable = per_period * (memory + 1) * n * n * 8 <= CACHE_BYTES

    def at(self, k):
        key = 0 if self.per_period is None else k % self.per_period
        history = self._cache.get(key) if self._cacheable else None
        if history is None:
            t = self.t0 + k * self.h
            history = kernel_matrix(self.ks, t, t - self.lags)
            if self._cacheable:
                self._cache[key] = history
        return history


def _trapezoid_weights(length):
    w = np.ones(length + 1)
    w[0] = w[-1] = 0.5
    return w


def _rhs(k, rho, history, init_term, h, memory):
    """I_nu(t_k) + trapezoidal memory sum over rho[k], rho[k-1], ..., rho[k-L]."""
    span = min(k, memory)
    if span == 0:
        return init_term.copy()
    kernels = history.at(k)[: span + 1]
    past = rho[k - span : k + 1][::-1]
    return init_term + h * np.einsum("l,lij,lj->i", _trapezoid_weights(span), kernels, past)


# ---------------------------------------------------------------------
# Propagators
# ---------------------------------------------------------------------
def _propagate_once(ks, init, spec):
    h = resolve_step(ks, spec)
    steps = int(round(spec.t_end / h))
    t_mem = spec.t_mem or memory_time(ks)
    memory = steps if t_mem is None else min(steps, int(math.ceil(t_mem / h)))
    times = spec.t0 + np.arange(steps + 1) * h
    history = KernelHistory(ks, spec.t0, h, memory, _steps_per_period(ks, h))

    rho = np.zeros((steps + 1, ks.size))
    rho[0] = init.populations
    inhom = np.array([inhomogeneity_vector(ks, init, t, spec.t0) for t in times])

    f_prev = None
    f_k = _rhs(0, rho, history, inhom[0], h, memory)
    for k in range(steps):
        # Adams-Bashforth 2 predictor (Euler on the first step)
        if f_prev is None:
            rho[k + 1] = rho[k] + h * f_k
        else:
            rho[k + 1] = rho[k] + h * (1.5 * f_k - 0.5 * f_prev)
        # trapezoidal corrector
        for _ in range(spec.corrector_passes):
            f_next = _rhs(k + 1, rho, history, inhom[k + 1], h, memory)
            rho[k + 1] = rho[k] + 0.5 * h * (f_k + f_next)
        f_next = _rhs(k + 1, rho, history, inhom[k + 1], h, memory)
        _check_state(rho[k + 1], k + 1, times[k + 1], spec)
        f_prev, f_k = f_k, f_next

    meta = _metadata(ks, spec, "gme", h, memory_steps=memory)
    return Trajectory(times=times, populations=rho, left_population=left_population(rho, ks.basis), metadata=meta)


@numerical_stage("gme")
def propagate_gme(ks, init, spec):
    """
    Solve d rho_nu/dt = I_nu(t, t0) + sum_mu int_{t0}^t H_{nu mu}(t, t') rho_mu(t') dt'
    for the DVR populations. A tolerance breach triggers one retry at h/2.
    """
    if init.size != ks.size:
        raise ConfigError([f"initial state has {init.size} entries, basis has {ks.size}"])
    try:
        traj = _propagate_once(ks, init, spec)
    except PropagationError as exc:
        logger.warning(f"GME propagation failed ({exc}); retrying with step {spec.step / 2:g}")
        traj = _propagate_once(ks, init, spec.halved())
    logger.info(f"GME propagated to t={traj.times[-1]:.1f} ({len(traj.times) - 1} steps)")
    return traj


def _markov_once(ks, init, spec, tau_max):
    from .rates import instantaneous_rates

    h = resolve_step(ks, spec)
    steps = int(round(spec.t_end / h))
    per_period = _steps_per_period(ks, h)
    times = spec.t0 + np.arange(steps + 1) * h
    rho = np.zeros((steps + 1, ks.size))
    rho[0] = init.populations

    propagators = {}
    for k in range(steps):
        key = 0 if per_period is None else k % per_period
        if key not in propagators:
            rates = instantaneous_rates(ks, times[k] + 0.5 * h, tau_max)
            propagators[key] = expm(h * rates.matrix)
        rho[k + 1] = propagators[key] @ rho[k]
        _check_state(rho[k + 1], k + 1, times[k + 1], spec)

    meta = _metadata(ks, spec, "markov", h)
    return Trajectory(times=times, populations=rho, left_population=left_population(rho, ks.basis), metadata=meta)


@numerical_stage("markov")
def markov_reference(ks, init, spec, tau_max=None):
    """
    Time-local propagation with the instantaneous rates Gamma(t). The
    initial coherences do not enter.
    """
    try:
        traj = _markov_once(ks, init, spec, tau_max)
    except PropagationError as exc:
        logger.warning(f"Markov propagation failed ({exc}); retrying with step {spec.step / 2:g}")
        traj = _markov_once(ks, init, spec.halved(), tau_max)
    return traj


# ---------------------------------------------------------------------
# Analysis and export
# ---------------------------------------------------------------------
def fit_decay_rate(traj, t_burn=None, p_inf=0.5):
    """
    Least-squares slope of ln|P_L - P_inf| over [t_burn, t_end].
    `rms_residual` is the RMS misfit of the log, i.e. a relative error.
    """
    t = traj.times
    if t_burn is None:
        t_burn = t[0] + 0.1 * (t[-1] - t[0])
    window = t >= t_burn
    deviation = np.abs(traj.left_population[window] - p_inf)
    t = t[window]

    if len(t) < 3 or np.ptp(deviation) < 1e-12:
        return DecayFit(rate=0.0, uncertainty=0.0, rms_residual=0.0, flagged=True, reason="constant signal")
    usable = deviation > 1e-14
    if usable.sum() < 3:
        return DecayFit(rate=0.0, uncertainty=0.0, rms_residual=0.0, flagged=True, reason="signal reached P_inf")
    t, deviation = t[usable], deviation[usable]

    log_dev = np.log(deviation)
    fit = linregress(t, log_dev)
    residual = float(np.sqrt(np.mean((log_dev - (fit.intercept + fit.slope * t)) ** 2)))

    flagged, reason = False, ""
    if np.any(deviation[1:] > deviation[:-1] * (1.0 + MONOTONE_TOL)):
        flagged, reason = True, "non-monotone signal"
        logger.warning(f"decay fit over [{t[0]:.1f}, {t[-1]:.1f}] sees a non-monotone signal")
    return DecayFit(
        rate=float(-fit.slope),
        uncertainty=float(fit.stderr),
        rms_residual=residual,
        flagged=flagged,
        reason=reason,
    )


def trajectory_to_csv(traj, path, metadata=None):
    n = traj.populations.shape[1]
    columns = ["t", *[f"rho_{i + 1}" for i in range(n)], "P_L"]
    rows = (
        [t, *pops, pl] for t, pops, pl in zip(traj.times, traj.populations, traj.left_population)
    )
    meta = dict(traj.metadata)
    meta.update(metadata or {})
    return write_csv(path, columns, rows, metadata=meta)
