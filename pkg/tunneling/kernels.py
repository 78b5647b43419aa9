import logging
from dataclasses import dataclass, field

import numpy as np

from dvrgme import settings

from .bath import build_q_table, decay_horizon
from .exceptions import SimulationError

logger = logging.getLogger(__name__)


@dataclass
class KernelSet:
    """
    Everything needed to evaluate H_{nu mu}(t, t') and I_nu(t, t0).

    Pair tables are indexed [nu, mu]. `correlation` is any callable
    returning complex Q(lag) per unit length^2 (a QTable or the
    high-temperature form).
    """

    basis: object
    bath: object
    drive: object
    correlation: object
    lam_diff: np.ndarray = field(init=False)
    xi_sq: np.ndarray = field(init=False)
    energy_diff: np.ndarray = field(init=False)
    half_delta_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = self.basis.positions
        f = self.basis.site_energies
        if self.basis.tunneling.shape != (len(lam), len(lam)) or len(f) != len(lam):
            raise SimulationError("inconsistent DVR basis dimensions")
        # [nu, mu] -> lambda_mu - lambda_nu and F_mu - F_nu
        self.lam_diff = lam[None, :] - lam[:, None]
        self.xi_sq = self.lam_diff**2
        self.energy_diff = f[None, :] - f[:, None]
        self.half_delta_sq = 0.5 * self.basis.tunneling**2
        np.fill_diagonal(self.half_delta_sq, 0.0)

    @property
    def size(self):
        return self.basis.size

    def with_tunneling(self, tunneling):
        basis = type(self.basis)(
            positions=self.basis.positions,
            transform=self.basis.transform,
            tunneling=tunneling,
            site_energies=self.basis.site_energies,
            labels=self.basis.labels,
        )
        return KernelSet(basis, self.bath, self.drive, self.correlation)


def coupled_min_xi_sq(basis):
    lam = basis.positions
    xi_sq = (lam[:, None] - lam[None, :]) ** 2
    mask = (np.abs(basis.tunneling) > 0) & (xi_sq > 0)
    if not np.any(mask):
        return None
    return float(xi_sq[mask].min())


def build_kernel_set(basis, bath, drive, correlation=None):
    if correlation is None:
        correlation = build_q_table(bath, min_pair_sq=coupled_min_xi_sq(basis))
    return KernelSet(basis=basis, bath=bath, drive=drive, correlation=correlation)


# ---------------------------------------------------------------------
# Phases
# ---------------------------------------------------------------------
def _drive_integral(ks, t, tp):
    """(s / Omega)[cos(Omega t + phi) - cos(Omega t' + phi)], broadcast over t'."""
    drive = ks.drive
    tp = np.asarray(tp, dtype=float)
    if not drive.is_driven:
        return np.zeros(tp.shape)
    w, phi = drive.frequency, drive.phase
    return (drive.amplitude / w) * (np.cos(w * t + phi) - np.cos(w * tp + phi))


def phase_matrix(ks, t, tp):
    """phi_{nu mu}(t, t') for all pairs; trailing axes (N, N), leading axes follow t'."""
    tp = np.asarray(tp, dtype=float)
    lag = (t - tp)[..., None, None]
    drive = _drive_integral(ks, t, tp)[..., None, None]
    return ks.energy_diff * lag + ks.lam_diff * drive


def driving_phase(nu, mu, t, tp, ks):
    return float(phase_matrix(ks, t, tp)[nu, mu])


# ---------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------
def kernel_matrix(ks, t, tp):
    """
    H_{nu mu}(t, t') with the column-sum diagonal. `tp` may be an array of
    earlier times; the result then has shape (len(tp), N, N).
    """
    tp = np.asarray(tp, dtype=float)
    q = np.asarray(ks.correlation(t - tp))[..., None, None]
    envelope = np.exp(-ks.xi_sq * q.real)
    h = ks.half_delta_sq * envelope * np.cos(phase_matrix(ks, t, tp) - ks.xi_sq * q.imag)
    idx = np.arange(ks.size)
    h[..., idx, idx] = 0.0
    h[..., idx, idx] = -h.sum(axis=-2)
    return h


def kernel_H(nu, mu, t, tp, ks):
    return float(kernel_matrix(ks, t, tp)[nu, mu])


def kernel_envelope(ks, lag):
    """Largest |H| over pairs at a given lag, relative to its zero-lag value."""
    peak = ks.half_delta_sq.max()
    if peak == 0:
        return 0.0
    q = ks.correlation(lag)
    return float((ks.half_delta_sq * np.exp(-ks.xi_sq * np.real(q))).max() / peak)


def memory_time(ks, cutoff=None):
    """
    Lag after which every kernel envelope is below `cutoff` of its peak.
    None when the kernels never decay (gamma = 0).
    """
    cutoff = cutoff or settings.KERNEL_ENVELOPE_CUTOFF
    if ks.bath.gamma == 0.0:
        return None
    xi_sq = coupled_min_xi_sq(ks.basis)
    if xi_sq is None:
        return 0.0
    return decay_horizon(ks.correlation, xi_sq, threshold=cutoff)


# ---------------------------------------------------------------------
# Inhomogeneity
# ---------------------------------------------------------------------
def inhomogeneity_vector(ks, init, t, t0):
    """
    I_nu(t, t0) summed over the stored initial coherences (a, b), a < b:
    (delta_{nu b} - delta_{nu a}) Re rho_ab Delta_ab e^{-Q'_ab} sin(phi_ba - Q''_ab).
    """
    out = np.zeros(ks.size)
    if not init.coherences:
        return out
    q = complex(np.asarray(ks.correlation(t - t0)))
    phase = phase_matrix(ks, t, t0)
    tunneling = ks.basis.tunneling
    for a, b, value in init.coherences:
        xi_sq = ks.xi_sq[a, b]
        term = value * tunneling[a, b] * np.exp(-xi_sq * q.real) * np.sin(phase[b, a] - xi_sq * q.imag)
        out[b] += term
        out[a] -= term
    return out


def inhomogeneity_I(nu, t, t0, ks, init):
    return float(inhomogeneity_vector(ks, init, t, t0)[nu])
