import logging
import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad, quad_vec
from scipy.special import j0

from dvrgme import settings

from .bath import decay_horizon, effective_coupling
from .decorators import numerical_stage
from .exceptions import QuadratureError, RateError
from .kernels import coupled_min_xi_sq, kernel_envelope, kernel_matrix
from .models import ClusterPath, DecayRate, Jump, RateMatrix
from .utils import write_csv

logger = logging.getLogger(__name__)

IMAGINARY_RESIDUE_TOL = 1e-8
ZERO_CHARGE_TOL = 1e-12


def _with_column_sum_diagonal(matrix):
    matrix = np.array(matrix, dtype=float)
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, -matrix.sum(axis=0))
    return matrix


def _finalize(matrix, metadata):
    rm = RateMatrix(_with_column_sum_diagonal(matrix), metadata)
    if rm.negative_offdiagonal:
        rm.metadata["negative_offdiagonal"] = True
        logger.warning(f"{metadata.get('kind', 'rate')} matrix has negative off-diagonal rates")
    return rm


def _require_decay(ks):
    if ks.bath.gamma == 0.0:
        raise RateError("kernels do not decay for gamma = 0; use gamma > 0 or propagate the GME instead")


def rate_horizon(ks):
    """Lag beyond which exp(-xi^2 Q') < RATE_TAIL for every coupled pair."""
    xi_sq = coupled_min_xi_sq(ks.basis)
    if xi_sq is None:
        return 0.0
    return decay_horizon(ks.correlation, xi_sq, threshold=settings.RATE_TAIL, cap=settings.RATE_TAU_CAP)


def chunk_edges(ks, upper):
    """
    Edges of the quadrature chunks on [0, upper]: one drive period each,
    or one period of the fastest free oscillation without a drive.
    """
    if ks.drive.is_driven:
        period = ks.drive.period
    else:
        fastest = float(np.max(np.abs(ks.energy_diff)))
        period = 2.0 * math.pi / fastest if fastest > 0 else upper
    count = max(1, int(math.ceil(upper / period - 1e-9)))
    edges = np.minimum(np.arange(count + 1) * period, upper)
    edges[-1] = upper
    return edges


def _integrate(func, edges, scale):
    """
    quad_vec chunk by chunk. Each chunk gets an absolute floor of
    QUAD_ABS_FLOOR * scale * length, so decayed tails stop refining at
    rounding level instead of exhausting the subdivision limit.
    """
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        result, error, info = quad_vec(
            func,
            a,
            b,
            epsabs=settings.QUAD_ABS_FLOOR * scale * (b - a),
            epsrel=settings.QUAD_EPSREL,
            norm="max",
            limit=settings.QUAD_LIMIT,
            full_output=True,
        )
        if not info.success:
            raise QuadratureError(f"rate quadrature did not converge on [{a:.6g}, {b:.6g}]: {info.message}", error)
        total = total + result
    return total


# ---------------------------------------------------------------------
# Sequential rates
# ---------------------------------------------------------------------
@numerical_stage("instantaneous-rates")
def instantaneous_rates(ks, t, tau_max=None):
    """Gamma_{nu mu}(t) = int_0^inf dtau H_{nu mu}(t, t - tau)."""
    _require_decay(ks)
    if ks.half_delta_sq.max() == 0:
        return RateMatrix(np.zeros((ks.size, ks.size)), {"kind": "instantaneous", "t": t})
    tau_max = tau_max or rate_horizon(ks)
    if kernel_envelope(ks, tau_max) > settings.KERNEL_ENVELOPE_CUTOFF:
        raise RateError(f"kernel envelope has not decayed by tau = {tau_max:g}; increase tau_max")

    matrix = _integrate(lambda tau: kernel_matrix(ks, t, t - tau), chunk_edges(ks, tau_max), ks.half_delta_sq.max())
    return _finalize(matrix, {"kind": "instantaneous", "t": t})


@numerical_stage("averaged-rates")
def averaged_rates(ks, tau_end=None):
    """
    Period-averaged golden-rule rates:
    (Delta^2/2) int dtau e^{-Q'} J0(zeta (2s/Omega) sin(Omega tau/2)) cos[(F_mu - F_nu) tau - Q''].
    """
    _require_decay(ks)
    drive = ks.drive
    meta = {"kind": "averaged", "amplitude": drive.amplitude, "frequency": drive.frequency or 0.0}
    if ks.half_delta_sq.max() == 0:
        return RateMatrix(np.zeros((ks.size, ks.size)), meta)
    tau_end = tau_end or rate_horizon(ks)

    def integrand(tau):
        q = complex(np.asarray(ks.correlation(tau)))
        out = ks.half_delta_sq * np.exp(-ks.xi_sq * q.real) * np.cos(ks.energy_diff * tau - ks.xi_sq * q.imag)
        if drive.is_driven:
            out = out * j0(ks.lam_diff * (2.0 * drive.amplitude / drive.frequency) * math.sin(0.5 * drive.frequency * tau))
        return out

    matrix = _integrate(integrand, chunk_edges(ks, tau_end), ks.half_delta_sq.max())
    return _finalize(matrix, meta)


def decay_rate(rm):
    """Negated real part of the nonzero eigenvalue closest to zero."""
    matrix = rm.matrix
    scale = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    if scale == 0.0:
        return DecayRate(rate=0.0, zero_modes=rm.size, degenerate=True)

    eig = np.linalg.eigvals(matrix)
    zero = np.abs(eig) < settings.ZERO_MODE_TOL * scale
    zero_modes = int(zero.sum())
    degenerate = zero_modes != 1
    if degenerate:
        logger.warning(f"rate matrix has {zero_modes} zero modes; kinetics are degenerate")
    rest = eig[~zero]
    if rest.size == 0:
        return DecayRate(rate=0.0, zero_modes=zero_modes, degenerate=True)

    slowest = rest[np.argmin(np.abs(rest))]
    residue = abs(slowest.imag)
    complex_pair = residue > IMAGINARY_RESIDUE_TOL
    if complex_pair:
        logger.warning(f"slowest relaxation mode is complex (imaginary part {residue:.3e})")
    rate = float(-slowest.real)
    negative = rate < 0.0
    if negative:
        logger.warning(f"slowest mode grows (rate {rate:.3e}); the rate matrix is not a valid kinetic generator")
    return DecayRate(
        rate=rate,
        imaginary_residue=float(residue),
        zero_modes=zero_modes,
        degenerate=degenerate,
        complex_pair=complex_pair,
        negative=negative,
    )


def stationary_populations(rm):
    eig, vectors = np.linalg.eig(rm.matrix)
    k = int(np.argmin(np.abs(eig)))
    p = np.real(vectors[:, k])
    return p / p.sum()


def rate_matrix_to_csv(rm, path, labels=None):
    labels = labels or [f"mu{j + 1}" for j in range(rm.size)]
    rows = [[i + 1, *rm.matrix[i]] for i in range(rm.size)]
    return write_csv(path, ["nu", *labels], rows, metadata=rm.metadata)


# ---------------------------------------------------------------------
# Cluster paths
# ---------------------------------------------------------------------
def enumerate_cluster_paths(size, order, basis, start=None):
    """
    All `order`-jump walks on the size x size lattice of RDM states that
    leave a diagonal state, stay off-diagonal, and end on the diagonal.
    Each jump moves exactly one index (vertical: mu, horizontal: nu).
    """
    if order < 2:
        raise ValueError("clusters need at least two jumps")
    lam = basis.positions
    tunneling = basis.tunneling
    starts = range(size) if start is None else [start]
    paths = []

    def walk(origin, state, jumps):
        mu, nu = state
        remaining = order - len(jumps)
        prev_charge = lam[mu] - lam[nu]
        moves = [(True, (m, nu)) for m in range(size) if m != mu] + [(False, (mu, n)) for n in range(size) if n != nu]
        for vertical, (m, n) in moves:
            diagonal = m == n
            if diagonal != (remaining == 1):
                continue
            cumulative = lam[m] - lam[n]
            element = tunneling[m, mu] if vertical else tunneling[n, nu]
            jump = Jump(
                vertical=vertical,
                state=(m, n),
                charge=float(cumulative - prev_charge),
                cumulative_charge=float(cumulative),
                element=float(element),
            )
            if remaining == 1:
                paths.append(ClusterPath(start=origin, jumps=tuple(jumps + [jump])))
            else:
                walk(origin, (m, n), jumps + [jump])

    for s in starts:
        walk((s, s), (s, s), [])
    return paths


@lru_cache(maxsize=65536)
def _driven_sojourn(a, b, charge, amplitude, frequency):
    period = 2.0 * math.pi / frequency
    z = 2.0 * charge * amplitude / frequency

    def envelope(tau):
        return math.exp(-a * tau) * j0(z * math.sin(0.5 * frequency * tau))

    opts = dict(epsabs=0.0, epsrel=settings.QUAD_EPSREL, limit=settings.QUAD_LIMIT)
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            if b == 0.0:
                re, err = quad(envelope, 0.0, period, **opts)
                im = 0.0
            else:
                re, err = quad(envelope, 0.0, period, weight="cos", wvar=b, **opts)
                im, err_im = quad(envelope, 0.0, period, weight="sin", wvar=b, **opts)
                im, err = -im, max(err, err_im)
        except IntegrationWarning as exc:
            raise QuadratureError(f"sojourn integral failed for a={a:.4g}, b={b:.4g}: {exc}", 0.0) from exc
    # geometric sum over periods
    return complex(re, im) / (1.0 - np.exp(-(a + 1j * b) * period))


def sojourn_integral(a, b, charge=0.0, drive=None):
    """
    f = int_0^inf dtau e^{-a tau} J0(charge (2s/Omega) sin(Omega tau/2)) e^{-i b tau}.
    """
    driven = drive is not None and drive.is_driven
    if a <= 0.0:
        if b == 0.0:
            raise RateError("divergent sojourn integral: neutral sub-path with a = b = 0")
        if driven and abs(np.exp(-1j * b * drive.period) - 1.0) < 1e-12:
            raise RateError(f"divergent sojourn integral: undamped sub-path resonant with the drive (b={b:.4g})")
    if not driven:
        return 1.0 / complex(a, b)
    return _driven_sojourn(float(a), float(b), float(charge), float(drive.amplitude), float(drive.frequency))


def path_amplitude(path, ks):
    """Complex contribution of one cluster path in the high-temperature theory."""
    bath, drive = ks.bath, ks.drive
    f = ks.basis.site_energies
    thermal = 2.0 * math.pi * bath.temperature / bath.cutoff
    value = 1.0 + 0j
    for j, jump in enumerate(path.jumps):
        xi = jump.charge
        alpha = float(effective_coupling(xi, bath))
        sign = -1.0 if jump.delta else 1.0
        value *= sign * 0.5j * jump.element * thermal**alpha
        value *= np.exp(-1j * math.pi * sign * alpha * jump.cumulative_charge / xi)
        if j < path.order - 1:
            mu, nu = jump.state
            p = jump.cumulative_charge
            a = bath.gamma * bath.temperature * p * p
            value *= sojourn_integral(a, f[mu] - f[nu], p, drive)
    return value


def _ordered_sum(values):
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


@numerical_stage("higher-order-rates")
def higher_order_rates(ks, n_max=4, tolerance=None):
    """
    Averaged rates summed over cluster paths of 2, 4, ..., n_max jumps
    using the high-temperature Q(t). Stops early once an order shifts the
    matrix by less than `tolerance` (relative); pass 0 to always reach
    n_max.
    """
    if n_max < 2 or n_max % 2:
        raise RateError(f"n_max must be even and >= 2, got {n_max}")
    tolerance = settings.SERIES_TOL if tolerance is None else tolerance
    if not ks.bath.high_temperature_valid:
        logger.warning(f"higher-order rates outside the high-temperature regime (T={ks.bath.temperature})")
    # cos(pi alpha) < 0 beyond alpha = 1/2 turns the closed-form sequential rates negative
    alpha = float(np.max(effective_coupling(ks.lam_diff[np.abs(ks.basis.tunneling) > 0], ks.bath), initial=0.0))
    if alpha >= 0.5:
        logger.warning(f"largest pair coupling alpha={alpha:.3f} >= 1/2; closed-form rates lose positivity")

    size = ks.size
    total = np.zeros((size, size))
    direct_diagonal = np.zeros(size)
    skipped = 0
    reached = 1
    for order in range(2, n_max + 1, 2):
        buckets = {}
        for path in enumerate_cluster_paths(size, order, ks.basis):
            if any(abs(j.charge) < ZERO_CHARGE_TOL for j in path.jumps):
                skipped += 1
                continue
            if any(j.element == 0.0 for j in path.jumps):
                continue
            key = (path.end[0], path.start[0])
            buckets.setdefault(key, []).append(path_amplitude(path, ks))

        increment = np.zeros((size, size))
        for (nu, mu), values in sorted(buckets.items()):
            value = _ordered_sum(values)
            if abs(value.imag) > IMAGINARY_RESIDUE_TOL * max(abs(value), 1e-300) and abs(value.imag) > 1e-14:
                raise RateError(f"order-{order} rate ({nu},{mu}) is not real: residue {value.imag:.3e}")
            increment[nu, mu] = value.real
        direct_diagonal += np.diag(increment)
        total += increment
        reached = order

        scale = np.max(np.abs(total - np.diag(np.diag(total))))
        shift = np.max(np.abs(increment - np.diag(np.diag(increment))))
        logger.info(f"cluster order {order}: shift {shift:.3e} of {scale:.3e}")
        if order > 2 and tolerance > 0 and scale > 0 and shift < tolerance * scale:
            break

    if skipped:
        logger.warning(f"{skipped} cluster paths with zero-charge jumps were excluded")

    rm = _finalize(total, {"kind": "higher-order", "order": reached, "skipped_paths": skipped})
    mismatch = np.max(np.abs(np.diag(rm.matrix) - direct_diagonal))
    if mismatch > 1e-6 * float(np.max(np.abs(rm.matrix))) + 1e-14:
        logger.warning(f"column-sum diagonal differs from direct diagonal paths by {mismatch:.3e}")
    rm.metadata["diagonal_mismatch"] = float(mismatch)
    return rm
