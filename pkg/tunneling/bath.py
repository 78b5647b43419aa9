import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import loggamma

from dvrgme import settings

from .decorators import numerical_stage
from .exceptions import QuadratureError
from .utils import write_csv

logger = logging.getLogger(__name__)

SERIES_SWITCH = 1e-3


def spectral_density(omega, bath):
    omega = np.asarray(omega, dtype=float)
    return bath.gamma * omega * np.exp(-omega / bath.cutoff)


# ---------------------------------------------------------------------
# Q(t) by quadrature (reference evaluation)
# ---------------------------------------------------------------------
def _one_minus_cos_over_w2(w, t):
    # (1 - cos wt) / w^2 written as 2 sin^2(wt/2) / w^2
    x = w * t
    if x < SERIES_SWITCH:
        return 0.5 * t * t * (1.0 - x * x / 12.0)
    return 2.0 * math.sin(0.5 * x) ** 2 / (w * w)


def _w_coth(w, beta):
    # w * coth(beta w / 2), finite at w = 0
    y = beta * w
    if y < 1e-6:
        return 2.0 / beta + beta * w * w / 6.0
    return w / math.tanh(0.5 * y)


def _sin_over_w(w, t):
    x = w * t
    if x < SERIES_SWITCH:
        return t * (1.0 - x * x / 6.0)
    return math.sin(x) / w


def _panel_quad(func, upper, panels):
    total = 0.0
    error = 0.0
    edges = np.linspace(0.0, upper, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                value, err = quad(func, a, b, epsabs=0.0, epsrel=settings.QUAD_EPSREL, limit=settings.QUAD_LIMIT)
            except IntegrationWarning as exc:
                raise QuadratureError(f"bath quadrature failed on [{a:.4g}, {b:.4g}]: {exc}", error) from exc
        total += value
        error += err
    return total, error


def bath_correlation(t, bath):
    """
    Q(t) = (1/pi) int dw J(w)/w^2 [coth(beta w/2)(1 - cos wt) + i sin wt]
    by adaptive quadrature on panels of [0, w_up].
    """
    t = float(t)
    if t == 0.0 or bath.gamma == 0.0:
        return 0j
    sign = 1.0 if t > 0 else -1.0
    t = abs(t)

    eps = settings.QUAD_EPSREL
    upper = bath.cutoff * math.log(1.0 / eps) + 50.0 / t
    panels = int(min(2000, max(8, math.ceil(upper * t / (20.0 * math.pi)))))
    wc, beta = bath.cutoff, bath.beta

    def real_part(w):
        return math.exp(-w / wc) * _w_coth(w, beta) * _one_minus_cos_over_w2(w, t)

    def imag_part(w):
        return math.exp(-w / wc) * _sin_over_w(w, t)

    re, re_err = _panel_quad(real_part, upper, panels)
    im, im_err = _panel_quad(imag_part, upper, panels)
    scale = bath.gamma / math.pi
    if re_err > 10.0 * eps * abs(re) + 1e-14 or im_err > 10.0 * eps * abs(im) + 1e-14:
        raise QuadratureError(f"Q({t}) not resolved to {eps:.0e}", scale * max(re_err, im_err))
    return complex(scale * re, sign * scale * im)


# ---------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------
def exact_correlation(t, bath):
    """
    Closed form of Q(t) for the Ohmic exponential cutoff:
    Q'(t)  = (g/pi)[ln(1 + wc^2 t^2)/2 + 2 lnG(1+k) - 2 Re lnG(1+k+i t T)],  k = T/wc
    Q''(t) = (g/pi) arctan(wc t)
    """
    t = np.asarray(t, dtype=float)
    if bath.gamma == 0.0:
        return np.zeros(t.shape, dtype=complex)
    kappa = bath.temperature / bath.cutoff
    real = (
        0.5 * np.log1p((bath.cutoff * t) ** 2)
        + 2.0 * loggamma(1.0 + kappa).real
        - 2.0 * loggamma(1.0 + kappa + 1j * t * bath.temperature).real
    )
    imag = np.arctan(bath.cutoff * t)
    return (bath.gamma / math.pi) * (real + 1j * imag)


def high_temp_Q(t, bath):
    """
    Linear-in-time Q(t) valid for T >~ omega_0 and wc >> T. t = 0 is read as 0+.
    """
    t = np.asarray(t, dtype=float)
    g = bath.gamma / math.pi
    real = g * (math.pi * bath.temperature * np.abs(t) + math.log(bath.cutoff / (2.0 * math.pi * bath.temperature)))
    imag = 0.5 * bath.gamma * np.where(t < 0, -1.0, 1.0)
    return real + 1j * imag


def effective_coupling(xi, bath, ref_length=1.0):
    """alpha_j = (xi / ref)^2 * gamma ref^2 / (2 pi); independent of ref_length."""
    if ref_length <= 0:
        raise ValueError("ref_length must be positive")
    alpha = bath.gamma * ref_length**2 / (2.0 * math.pi)
    return (np.asarray(xi, dtype=float) / ref_length) ** 2 * alpha


def pair_couplings(basis, bath):
    lam = basis.positions
    return effective_coupling(lam[:, None] - lam[None, :], bath)


# ---------------------------------------------------------------------
# Correlation sources used by the kernels
# ---------------------------------------------------------------------
@dataclass
class QTable:
    """
    Q(t) sampled on a uniform grid [0, t_max] and cubic-interpolated.
    Evaluations outside the table use the closed form.
    """

    bath: object
    step: float
    times: np.ndarray
    real: np.ndarray
    imag: np.ndarray
    _real_spline: CubicSpline = field(init=False, repr=False)
    _imag_spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self._real_spline = CubicSpline(self.times, self.real)
        self._imag_spline = CubicSpline(self.times, self.imag)

    @property
    def t_max(self):
        return float(self.times[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lag = np.abs(t)
        inside = lag <= self.t_max
        out = np.empty(lag.shape, dtype=complex)
        out[inside] = self._real_spline(lag[inside]) + 1j * self._imag_spline(lag[inside])
        if not np.all(inside):
            out[~inside] = exact_correlation(lag[~inside], self.bath)
        # Q' even, Q'' odd
        return np.where(t < 0, np.conj(out), out)

    def to_csv(self, path):
        rows = zip(self.times, self.real, self.imag)
        meta = {"gamma": self.bath.gamma, "omega_c": self.bath.cutoff, "temperature": self.bath.temperature}
        return write_csv(path, ["t", "Qre", "Qim"], rows, metadata=meta)


class HighTemperatureCorrelation:
    """Drop-in replacement for QTable using the linear-in-time Q(t)."""

    t_max = math.inf

    def __init__(self, bath):
        self.bath = bath
        self.valid = bath.high_temperature_valid
        if not self.valid:
            logger.warning(f"high-temperature Q(t) used outside its validity window (T={bath.temperature}, wc={bath.cutoff})")

    def __call__(self, t):
        return high_temp_Q(t, self.bath)


def decay_horizon(correlation, xi_sq, threshold=None, cap=None):
    """Smallest lag with exp(-xi^2 Q'(lag)) below `threshold`."""
    threshold = threshold or settings.RATE_TAIL
    cap = cap or settings.Q_TABLE_T_MAX_CAP
    target = -math.log(threshold)

    def excess(tau):
        return xi_sq * float(np.real(correlation(tau))) - target

    if xi_sq <= 0 or excess(cap) < 0:
        logger.warning(f"envelope for xi^2={xi_sq:.4g} does not reach {threshold:.0e} before {cap:g}; capped")
        return float(cap)

    lower, upper = 0.0, 1.0
    while excess(upper) < 0:
        lower, upper = upper, min(2.0 * upper, cap)
    return float(brentq(excess, lower, upper, xtol=1e-6))


@numerical_stage("q-table")
def build_q_table(bath, t_max=None, step=None, min_pair_sq=None):
    step = step or settings.Q_TABLE_STEP
    if t_max is None:
        if bath.gamma == 0.0:
            t_max = 1.0
        else:
            xi_sq = min_pair_sq if min_pair_sq else 1.0
            t_max = decay_horizon(lambda tau: exact_correlation(tau, bath), xi_sq)
    count = int(math.ceil(t_max / step))
    times = np.arange(count + 1) * step
    values = exact_correlation(times, bath)
    logger.info(f"Q table built: {count + 1} samples up to t={times[-1]:.1f}")
    return QTable(bath=bath, step=step, times=times, real=values.real.copy(), imag=values.imag.copy())
