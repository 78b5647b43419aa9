import logging

import numpy as np

from .decorators import numerical_stage
from .exceptions import ConfigError, SimulationError
from .models import DvrBasis, InitialState

logger = logging.getLogger(__name__)

LAMBDA_GAP_TOL = 1e-10
COHERENCE_FLOOR = 1e-14
CROSS_WELL_TOL = 1e-6
LEFT_NORM_TOL = 0.999


def dvr_labels(size):
    if size == 2:
        return ("L", "R")
    if size == 4:
        # ascending lambda: alpha states sit in the left well, beta in the right
        return ("alpha1", "alpha2", "beta2", "beta1")
    return tuple(f"dvr{i + 1}" for i in range(size))


def _orientation(transform):
    """
    +1/-1 per row so that the largest-magnitude component on an
    even-parity energy state (index 0, 2, ...) is positive.
    """
    even = np.abs(transform[:, 0::2])
    pick = np.argmax(even, axis=1)
    components = transform[np.arange(transform.shape[0]), 2 * pick]
    return np.where(components < 0, -1.0, 1.0)


def _tie_break(lam, transform):
    """Reorder runs of near-equal eigenvalues by the index of their dominant component."""
    order = np.arange(len(lam))
    start = 0
    while start < len(lam):
        stop = start + 1
        while stop < len(lam) and lam[stop] - lam[stop - 1] < LAMBDA_GAP_TOL:
            stop += 1
        if stop - start > 1:
            logger.warning(f"near-degenerate position eigenvalues at {lam[start]:.6e}; ordering by dominant component")
            block = order[start:stop]
            key = np.argmax(np.abs(transform[block]), axis=1)
            order[start:stop] = block[np.argsort(key, kind="stable")]
        start = stop
    return lam[order], transform[order]


def _split_hamiltonian(h):
    site = np.diag(h).copy()
    tunneling = -2.0 * (h - np.diag(site))
    return site, tunneling


@numerical_stage("dvr")
def build_dvr(qmat, energies):
    """
    Diagonalize the truncated position matrix.

    Returns lambda ascending, the energy->DVR transform (rows are DVR
    states), on-site energies F and transition elements Delta defined by
    H_DVR = F on the diagonal and -Delta/2 off it.
    """
    qmat = np.asarray(qmat, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if qmat.ndim != 2 or qmat.shape[0] != qmat.shape[1] or qmat.shape[0] != len(energies):
        raise SimulationError(f"position matrix shape {qmat.shape} does not match {len(energies)} energies")
    if not np.allclose(qmat, qmat.T, atol=1e-10, rtol=0.0):
        raise SimulationError("position matrix is not symmetric")
    if np.any(np.diff(energies) < 0):
        raise SimulationError("energies must be ascending")

    lam, vectors = np.linalg.eigh(qmat)
    transform = vectors.T
    transform = transform * _orientation(transform)[:, None]
    lam, transform = _tie_break(lam, transform)

    h = transform @ np.diag(energies) @ transform.T
    site, tunneling = _split_hamiltonian(0.5 * (h + h.T))
    return DvrBasis(
        positions=lam,
        transform=transform,
        tunneling=tunneling,
        site_energies=site,
        labels=dvr_labels(len(lam)),
    )


def four_level_closed_form(a11, a22, a12, delta1, delta2, mean_gap, e_mean=0.0):
    """
    Two-doublet DVR from the b = 0 closed forms.

    States are returned in ascending-lambda order alpha1, alpha2, beta2,
    beta1. `e_mean` is the centre of the lowest doublet; F values are
    shifted by it so they can be compared with build_dvr directly.
    """
    if a12 == 0:
        raise SimulationError("a12 = 0: doublets do not mix, closed form is degenerate")

    radical = np.sqrt((a11 - a22) ** 2 + 4.0 * a12**2)
    lam_a1 = 0.5 * (-(a11 + a22) - radical)
    lam_a2 = 0.5 * (-(a11 + a22) + radical)
    u = (a11 + lam_a1) / a12
    v = 1.0 / np.sqrt(1.0 + u * u)
    c = v / np.sqrt(2.0)

    alpha1 = c * np.array([1.0, -1.0, -u, u])
    alpha2 = c * np.array([u, -u, 1.0, -1.0])
    beta1 = c * np.array([1.0, 1.0, -u, -u])
    beta2 = c * np.array([u, u, 1.0, 1.0])
    transform = np.vstack([alpha1, alpha2, beta2, beta1])
    signs = _orientation(transform)
    transform = transform * signs[:, None]

    v2 = v * v
    d_a1b1 = v2 * (delta1 + u * u * delta2)
    d_a2b2 = v2 * (u * u * delta1 + delta2)
    d_cross = v2 * u * (delta1 - delta2)
    d_intra = 2.0 * v2 * u * mean_gap

    # index order: alpha1, alpha2, beta2, beta1
    tunneling = np.array(
        [
            [0.0, d_intra, d_cross, d_a1b1],
            [d_intra, 0.0, d_a2b2, d_cross],
            [d_cross, d_a2b2, 0.0, d_intra],
            [d_a1b1, d_cross, d_intra, 0.0],
        ]
    )
    tunneling = tunneling * np.outer(signs, signs)

    f_low = e_mean + u * u * v2 * mean_gap
    f_high = e_mean + v2 * mean_gap
    return DvrBasis(
        positions=np.array([lam_a1, lam_a2, -lam_a2, -lam_a1]),
        transform=transform,
        tunneling=tunneling,
        site_energies=np.array([f_low, f_high, f_high, f_low]),
        labels=dvr_labels(4),
    )


def localized_initial_state(basis, spectrum=None):
    """
    Project rho(t0) = |L1><L1|, |L1> = (|1> - |2>)/sqrt(2), onto the DVR states.
    """
    if spectrum is not None and spectrum.levels != basis.size:
        raise ConfigError([f"basis has {basis.size} states but spectrum has {spectrum.levels} levels"])

    c = np.zeros(basis.size)
    c[0], c[1] = 1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)
    d = basis.transform @ c
    rho = np.outer(d, d)

    coherences = []
    cross = 0.0
    for a in range(basis.size):
        for b in range(a + 1, basis.size):
            value = rho[a, b]
            if abs(value) <= COHERENCE_FLOOR:
                continue
            coherences.append((a, b, float(value)))
            if basis.positions[a] * basis.positions[b] < 0:
                cross = max(cross, abs(value))

    left_norm = float(np.sum(d[basis.left] ** 2))
    leaks = left_norm < LEFT_NORM_TOL
    if leaks:
        logger.warning(f"left-localized preparation keeps only {left_norm:.6f} of its weight in the left well")
    if cross > CROSS_WELL_TOL:
        logger.warning(f"initial state carries cross-well coherence {cross:.3e}")

    return InitialState(
        populations=np.diag(rho).copy(),
        coherences=tuple(coherences),
        left_norm=left_norm,
        leaks=leaks,
        cross_well_coherence=cross,
    )


def left_population(rho_diag, basis):
    rho_diag = np.asarray(rho_diag, dtype=float)
    return rho_diag[..., basis.left].sum(axis=-1)
