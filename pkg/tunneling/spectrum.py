import logging

import numpy as np
from scipy.linalg import eigh_tridiagonal

from dvrgme import settings

from .decorators import numerical_stage
from .exceptions import ConfigError, ConvergenceError
from .models import DoubletParameters, GridSpec, Spectrum

logger = logging.getLogger(__name__)


def potential_value(q, spec):
    """V(q) = q^4 / (64 E_B) - q^2 / 4, vectorized over q."""
    q = np.asarray(q, dtype=float)
    return q**4 / (64.0 * spec.barrier_height) - 0.25 * q**2


def _finite_difference_levels(spec, extent, points, levels):
    # Dirichlet box [-L, L], interior points only
    x = np.linspace(-extent, extent, points + 2)[1:-1]
    dx = 2.0 * extent / (points + 1)
    diagonal = 1.0 / dx**2 + potential_value(x, spec)
    off = np.full(points - 1, -0.5 / dx**2)
    energies, vectors = eigh_tridiagonal(diagonal, off, select="i", select_range=(0, levels - 1))
    return x, dx, energies, vectors


def _fix_signs(x, psi):
    right = x > 0
    for n in range(psi.shape[1]):
        column = psi[:, n]
        k = np.argmax(np.where(right, np.abs(column), -1.0))
        if column[k] < 0:
            psi[:, n] = -column
    return psi


def _quadrature_position(x, psi):
    dx = x[1] - x[0]
    q = psi.T @ (x[:, None] * psi) * dx
    q = 0.5 * (q + q.T)
    idx = np.arange(q.shape[0])
    # equal parity of level indices means equal parity of the states
    q[(idx[:, None] - idx[None, :]) % 2 == 0] = 0.0
    return q


@numerical_stage("spectrum")
def solve_spectrum(spec, grid=None, levels=4):
    """
    Lowest `levels` eigenpairs of -1/2 d^2/dq^2 + V(q).

    Solves on the n-point grid and on the nested 2n+1 grid, then
    Richardson-extrapolates the energies (the 3-point Laplacian error is
    O(dx^2)). Eigenfunctions come from the finer grid.
    """
    grid = grid or GridSpec()
    if levels < 2 or levels % 2:
        raise ConfigError([f"levels must be even and >= 2, got {levels}"])

    extent = grid.resolve_extent(spec)
    if extent < spec.minima_separation / 2.0 + 5.0:
        raise ConfigError([f"grid extent {extent:.3f} does not cover both wells (need >= d0/2 + 5)"])

    _, _, coarse, _ = _finite_difference_levels(spec, extent, grid.points, levels)
    x, dx, fine, vectors = _finite_difference_levels(spec, extent, grid.refined().points, levels)

    energies = (4.0 * fine - coarse) / 3.0
    residual = float(np.max(np.abs(energies - fine)))
    if residual > settings.REFINEMENT_TOL:
        raise ConvergenceError("spectrum not converged under grid refinement", residual)

    gaps = np.diff(energies)
    if np.any(gaps < settings.DEGENERACY_TOL):
        logger.warning(f"quasi-degenerate levels (min gap {gaps.min():.3e}); kept in energy order")

    psi = _fix_signs(x, vectors / np.sqrt(dx))

    above = bool(np.any(energies > settings.BARRIER_MARGIN))
    if above:
        logger.warning(f"{levels} levels reach {energies[-1]:.4f} above the barrier top; truncation is not a doublet ladder")

    spectrum = Spectrum(
        potential=spec,
        extent=extent,
        grid=x,
        energies=energies,
        grid_energies=fine,
        wavefunctions=psi,
        position=_quadrature_position(x, psi),
        residual=residual,
        above_barrier=above,
    )
    logger.info(f"spectrum solved: E_B={spec.barrier_height}, N={levels}, residual={residual:.2e}")
    return spectrum


def position_matrix(spectrum):
    """q_mn = <m|q|n> by grid quadrature; equal-parity entries are exactly zero."""
    return _quadrature_position(spectrum.grid, spectrum.wavefunctions)


def kinetic_energy_check(spectrum):
    """
    Largest disagreement between <T> = E - <V> and <T> from the
    finite-difference Laplacian, both on the finer grid.
    """
    x = spectrum.grid
    dx = spectrum.spacing
    psi = spectrum.wavefunctions
    potential = (psi**2 * potential_value(x, spectrum.potential)[:, None]).sum(axis=0) * dx
    spectral = spectrum.grid_energies - potential

    padded = np.pad(psi, ((1, 1), (0, 0)))
    laplacian = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / dx**2
    direct = -0.5 * (psi * laplacian).sum(axis=0) * dx
    return float(np.max(np.abs(spectral - direct)))


def doublet_parameters(spectrum):
    if spectrum.levels < 4:
        raise ConfigError(["doublet parameters need at least four levels"])
    q = spectrum.position
    e = spectrum.energies
    return DoubletParameters(
        a11=float(q[0, 1]),
        a22=float(q[2, 3]),
        a12=float(0.5 * (q[0, 3] + q[1, 2])),
        b=float(0.5 * (q[0, 3] - q[1, 2])),
        delta1=float(e[1] - e[0]),
        delta2=float(e[3] - e[2]),
        mean_gap=float(spectrum.mean_gap),
        e_mean=float(0.5 * (e[0] + e[1])),
    )


def localized_transform(levels):
    """
    Rows are |L_1>, ..., |L_k>, |R_1>, ..., |R_k> in the energy basis,
    with |L_i> = (|2i-1> - |2i>)/sqrt(2) and |R_i> = (|2i-1> + |2i>)/sqrt(2).
    """
    k = levels // 2
    t = np.zeros((levels, levels))
    for i in range(k):
        t[i, 2 * i], t[i, 2 * i + 1] = 1.0, -1.0
        t[k + i, 2 * i], t[k + i, 2 * i + 1] = 1.0, 1.0
    return t / np.sqrt(2.0)


def localized_position_matrix(spectrum):
    t = localized_transform(spectrum.levels)
    return t @ spectrum.position @ t.T
