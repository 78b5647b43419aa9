import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dvrgme import settings


# -----------------------
# POTENTIAL + GRID
# -----------------------
class PotentialSpec(BaseModel):
    """
    Symmetric quartic double well V(q) = q^4 / (64 E_B) - q^2 / 4
    in units hbar = M = omega_0 = 1.
    """

    model_config = ConfigDict(frozen=True)

    barrier_height: float = Field(1.4, gt=0)

    @property
    def well_frequency(self):
        return 1.0

    @property
    def mass(self):
        return 1.0

    @property
    def minima_separation(self):
        # d0: the wells sit at +-d0/2
        return 2.0 * math.sqrt(8.0 * self.barrier_height)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: int = Field(default_factory=lambda: settings.GRID_POINTS, ge=64)
    # half-width L of the box [-L, L]; None means d0/2 + GRID_MARGIN
    extent: Optional[float] = Field(None, gt=0)

    def resolve_extent(self, potential):
        if self.extent is not None:
            return self.extent
        return potential.minima_separation / 2.0 + settings.GRID_MARGIN

    def refined(self):
        # 2n+1 interior points nest the coarse grid
        return self.model_copy(update={"points": 2 * self.points + 1})


@dataclass(frozen=True)
class Spectrum:
    potential: PotentialSpec
    extent: float
    grid: np.ndarray
    energies: np.ndarray
    # eigenvalues of the finer finite-difference grid, before extrapolation
    grid_energies: np.ndarray
    # columns are psi_n(q_k), normalized so sum |psi|^2 dq = 1
    wavefunctions: np.ndarray
    position: np.ndarray
    residual: float
    above_barrier: bool = False

    @property
    def levels(self):
        return len(self.energies)

    @property
    def spacing(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def splittings(self):
        e = self.energies
        return e[1::2] - e[0::2]

    @property
    def mean_gap(self):
        """omega_bar_0: distance between the first two doublet centres."""
        if self.levels < 4:
            raise ValueError("mean gap needs at least two doublets")
        e = self.energies
        return 0.5 * (e[2] + e[3]) - 0.5 * (e[0] + e[1])


@dataclass(frozen=True)
class DoubletParameters:
    a11: float
    a22: float
    a12: float
    b: float
    delta1: float
    delta2: float
    mean_gap: float
    # centre (E1 + E2) / 2 of the lowest doublet
    e_mean: float


# -----------------------
# DVR
# -----------------------
@dataclass(frozen=True)
class DvrBasis:
    """
    Position eigenbasis inside the truncated level set.

    Rows of `transform` are the DVR states written in the energy basis, so
    transform @ diag(E) @ transform.T is the DVR Hamiltonian.
    """

    positions: np.ndarray
    transform: np.ndarray
    tunneling: np.ndarray
    site_energies: np.ndarray
    labels: tuple = ()

    @property
    def size(self):
        return len(self.positions)

    @property
    def left(self):
        return self.positions < 0

    def hamiltonian(self):
        h = -0.5 * self.tunneling.copy()
        np.fill_diagonal(h, self.site_energies)
        return h


@dataclass(frozen=True)
class InitialState:
    populations: np.ndarray
    # (a, b, Re rho_ab) with a < b in DVR index order
    coherences: tuple = ()
    # weight of the prepared state on left-well DVR states
    left_norm: float = 1.0
    leaks: bool = False
    cross_well_coherence: float = 0.0

    @property
    def size(self):
        return len(self.populations)


# -----------------------
# BATH
# -----------------------
class BathModel(BaseModel):
    """Ohmic bath J(w) = gamma * w * exp(-w / w_c) at temperature T."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(0.1, ge=0)
    cutoff: float = Field(10.0, gt=0)
    temperature: float = Field(0.1, gt=0)

    @property
    def beta(self):
        return 1.0 / self.temperature

    @property
    def high_temperature_valid(self):
        """Rough validity window of the linear-in-time Q(t)."""
        return self.temperature >= 0.5 and self.cutoff >= 5.0 * max(self.temperature, 1.0)


# -----------------------
# DRIVE
# -----------------------
class DriveSpec(BaseModel):
    """External field s(t) = s * sin(Omega t + phase) coupling as -s(t) q."""

    model_config = ConfigDict(frozen=True)

    amplitude: float = Field(0.0, ge=0)
    frequency: Optional[float] = None
    phase: float = 0.0
    protocol: Literal["sinusoidal", "none"] = "sinusoidal"

    @model_validator(mode="after")
    def _check_frequency(self):
        if self.protocol == "sinusoidal" and (self.frequency is None or self.frequency <= 0):
            raise ValueError("a sinusoidal drive needs frequency > 0")
        return self

    @property
    def is_driven(self):
        return self.protocol == "sinusoidal" and self.amplitude > 0

    @property
    def period(self):
        if self.protocol != "sinusoidal":
            return None
        return 2.0 * math.pi / self.frequency

    def field(self, t):
        if not self.is_driven:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.amplitude * np.sin(self.frequency * np.asarray(t, dtype=float) + self.phase)


# -----------------------
# PROPAGATION
# -----------------------
class PropagationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: float = Field(0.1, gt=0)
    t_end: float = Field(200.0, gt=0)
    # None: chosen from the kernel envelope
    t_mem: Optional[float] = Field(None, gt=0)
    t0: float = 0.0
    trace_tol: float = Field(default_factory=lambda: settings.TRACE_TOL, gt=0)
    population_tol: float = Field(default_factory=lambda: settings.POPULATION_TOL, gt=0)
    corrector_passes: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_memory(self):
        if self.t_mem is not None and self.t_mem > self.t_end:
            raise ValueError("t_mem must not exceed t_end")
        if self.step >= self.t_end:
            raise ValueError("step must be smaller than t_end")
        return self

    def halved(self):
        return self.model_copy(update={"step": self.step / 2.0})


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    populations: np.ndarray
    left_population: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def trace_drift(self):
        return float(np.max(np.abs(self.populations.sum(axis=1) - 1.0)))


@dataclass(frozen=True)
class DecayFit:
    rate: float
    uncertainty: float
    rms_residual: float
    flagged: bool = False
    reason: str = ""


# -----------------------
# RATES
# -----------------------
@dataclass(frozen=True)
class RateMatrix:
    matrix: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def column_sum_error(self):
        return float(np.max(np.abs(self.matrix.sum(axis=0))))

    @property
    def negative_offdiagonal(self):
        off = self.matrix - np.diag(np.diag(self.matrix))
        return bool(np.any(off < -1e-14 * max(1.0, float(np.max(np.abs(self.matrix))))))


@dataclass(frozen=True)
class DecayRate:
    rate: float
    imaginary_residue: float = 0.0
    zero_modes: int = 1
    degenerate: bool = False
    complex_pair: bool = False
    negative: bool = False


@dataclass(frozen=True)
class Jump:
    vertical: bool
    state: tuple
    charge: float
    cumulative_charge: float
    element: float

    @property
    def delta(self):
        # delta_j: 0 for a vertical jump, 1 for a horizontal one
        return 0 if self.vertical else 1


@dataclass(frozen=True)
class ClusterPath:
    start: tuple
    jumps: tuple

    @property
    def end(self):
        return self.jumps[-1].state

    @property
    def order(self):
        return len(self.jumps)

    @property
    def states(self):
        return (self.start,) + tuple(j.state for j in self.jumps)


# -----------------------
# RUN CONFIGURATION
# -----------------------
MODES = ("gme", "markov", "avg-rates", "higher-order", "rate-vs-n")


class RunConfig(BaseModel):
    """One simulation run; defaults are the canonical E_B = 1.4 parameter set."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    barrier_height: float = Field(1.4, gt=0)
    gamma: float = Field(0.1, ge=0)
    omega_c: float = Field(10.0, gt=0)
    temperature: float = Field(0.1, gt=0)
    levels: int = Field(4, ge=2)
    levels_list: Optional[list[int]] = None
    amplitudes: list[float] = Field(default_factory=lambda: [0.0])
    # None means resonant: Omega = mean doublet gap of the solved spectrum
    omega: Optional[float] = Field(0.815, gt=0)
    phase: float = 0.0
    mode: Literal[MODES] = "avg-rates"
    grid_points: int = Field(default_factory=lambda: settings.GRID_POINTS, ge=64)
    grid_extent: Optional[float] = Field(None, gt=0)
    step: float = Field(0.1, gt=0)
    t_end: float = Field(200.0, gt=0)
    t_mem: Optional[float] = Field(None, gt=0)
    t_burn: Optional[float] = Field(None, ge=0)
    n_max: int = Field(4, ge=2)
    length_unit: Literal["harmonic", "minima"] = "harmonic"
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)

    @model_validator(mode="after")
    def _check_mode_fields(self):
        if self.levels % 2:
            raise ValueError(f"levels must be even, got {self.levels}")
        if self.n_max % 2:
            raise ValueError(f"n_max must be even, got {self.n_max}")
        if any(a < 0 for a in self.amplitudes) or not self.amplitudes:
            raise ValueError("amplitudes must be a non-empty list of values >= 0")
        if self.mode == "rate-vs-n":
            if not self.levels_list:
                raise ValueError("mode rate-vs-n requires levels_list")
            if any(n < 2 or n % 2 for n in self.levels_list):
                raise ValueError("levels_list entries must be even and >= 2")
            if len(self.amplitudes) != 1:
                raise ValueError("mode rate-vs-n takes a single amplitude")
        if self.mode in ("gme", "markov") and len(self.amplitudes) != 1:
            raise ValueError(f"mode {self.mode} takes a single amplitude")
        if self.t_mem is not None and self.t_mem > self.t_end:
            raise ValueError("t_mem must not exceed t_end")
        return self

    @property
    def resonant(self):
        return self.omega is None

    def potential(self):
        return PotentialSpec(barrier_height=self.barrier_height)

    def grid(self):
        return GridSpec(points=self.grid_points, extent=self.grid_extent)

    def bath(self):
        return BathModel(gamma=self.gamma, cutoff=self.omega_c, temperature=self.temperature)

    def amplitude_scale(self):
        """Internal field per unit of the configured amplitude axis (s0 = 1/x0 or 1/d0)."""
        if self.length_unit == "minima":
            return 1.0 / self.potential().minima_separation
        return 1.0

    def drive(self, amplitude, frequency):
        if amplitude == 0:
            return DriveSpec(amplitude=0.0, frequency=frequency, phase=self.phase)
        return DriveSpec(amplitude=amplitude * self.amplitude_scale(), frequency=frequency, phase=self.phase)

    def propagation(self):
        return PropagationSpec(step=self.step, t_end=self.t_end, t_mem=self.t_mem)
