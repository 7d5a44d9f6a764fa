"""Geodesic deviation of a test-particle pair in the stochastic background.

Only the excited separation component is tracked. It obeys

    d^2 ell / dtau^2 + c^2 R(t) ell = F

with ``R`` the tidal component ``R^1_010`` of the background and ``F`` a
per-realization stochastic constant. For constant ``R > 0`` the pair
oscillates at ``omega = c sqrt(R)``; the accumulated oscillation phase is
the hidden variable used by the interference and Bell modules.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .background import C_LIGHT, BackgroundEnsemble, SpectrumParams, sample_background
from .errors import DomainError, GridError, SampleSizeError, StepSizeError

PhaseMode = Literal["literal", "integral"]

STABILITY_LIMIT = 0.1


@dataclass(frozen=True)
class DeviationState:
    ell: float
    ell_rate: float
    tau: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.ell, self.ell_rate, self.tau)):
            raise ValueError("deviation state must be finite")


@dataclass(frozen=True)
class TidalSignal:
    """Time series ``t -> R^1_010(t)`` in 1/m^2.

    ``sampler`` must be pure and accept a numpy array of times.
    """

    sampler: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = np.asarray(self.sampler(t_arr), dtype=float)
        return np.broadcast_to(out, t_arr.shape).copy() if out.shape != t_arr.shape else out

    @classmethod
    def constant(cls, r0: float) -> "TidalSignal":
        r0 = float(r0)
        return cls(lambda t: np.full(np.shape(t), r0), f"constant R={r0!r}")

    @classmethod
    def from_background(cls, ensemble: BackgroundEnsemble, position: Sequence[float] = (0.0, 0.0, 0.0)) -> "TidalSignal":
        pos = tuple(float(p) for p in position)
        return cls(
            lambda t: riemann_series(ensemble, t, pos),
            f"background seed={ensemble.seed} n_modes={len(ensemble)} at {pos}",
        )


@dataclass(frozen=True)
class StochasticForcing:
    value_per_realization: float = 0.0
    rng_seed: int = 0
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.sigma == 0 and self.value_per_realization != 0:
            raise ValueError("sigma = 0 forces a zero forcing value")

    @classmethod
    def draw(cls, sigma: float, seed: int) -> "StochasticForcing":
        """Zero-mean Gaussian forcing constant for one realization."""
        if sigma == 0:
            return cls(0.0, seed, 0.0)
        value = float(np.random.default_rng(seed).normal(0.0, sigma))
        return cls(value, seed, float(sigma))

    @classmethod
    def fixed(cls, value: float) -> "StochasticForcing":
        """Deterministic forcing, for checks against closed-form solutions."""
        return cls(float(value), 0, abs(float(value)))


@dataclass(frozen=True)
class Trajectory(Sequence):
    tau: np.ndarray
    ell: np.ndarray
    ell_rate: np.ndarray

    def __len__(self) -> int:
        return self.tau.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return DeviationState(float(self.ell[i]), float(self.ell_rate[i]), float(self.tau[i]))

    def energy(self, r0: float, c: float = C_LIGHT) -> np.ndarray:
        """``ell_rate^2 + c^2 R ell^2`` for a constant tidal value ``r0``."""
        return self.ell_rate**2 + c * c * r0 * self.ell**2


@dataclass(frozen=True)
class PhaseTrace:
    times: np.ndarray
    phi: np.ndarray
    mode: PhaseMode = "integral"
    clipped_fraction: float = 0.0


@dataclass(frozen=True)
class PhaseStatistics:
    mean: float
    variance: float
    kuiper_v: float
    kuiper_pvalue: float
    phases: np.ndarray = field(repr=False)
    clipped_fraction: float = 0.0


def riemann_series(ensemble: BackgroundEnsemble, times, position: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Vectorized :func:`riemann_from_background` over an array of times."""
    t = np.asarray(times, dtype=float)
    if len(ensemble) == 0:
        return np.zeros(t.shape)
    k = ensemble.wave_vectors()
    e11 = ensemble.polarizations()[:, 1, 1]
    offset = k[:, 1:] @ np.asarray(position, dtype=float) + ensemble.phases()
    phase = np.multiply.outer(t, C_LIGHT * k[:, 0]) + offset
    # -(1/2c^2) d^2/dt^2 [2 e11 cos(phase)] = k0^2 e11 cos(phase)
    weights = k[:, 0] ** 2 * e11
    return np.cos(phase) @ weights


def riemann_from_background(ensemble: BackgroundEnsemble, t: float, x: Sequence[float] = (0.0, 0.0, 0.0)) -> float:
    """Tidal component ``R^1_010 = -(1/2c^2) d^2 h_11/dt^2`` in closed form."""
    total = 0.0
    pos = np.asarray(x, dtype=float)
    for mode in ensemble.modes:
        k = mode.wave_vector
        phase = k[0] * C_LIGHT * t + float(k[1:] @ pos) + mode.phase0
        total += k[0] ** 2 * mode.polarization[1, 1] * math.cos(phase)
    return float(total)


def analytic_oscillator(r0: float, ell0: float, t, c: float = C_LIGHT):
    """``ell0 cos(c sqrt(r0) t)``, the bounded solution for constant tidal field."""
    if not r0 > 0:
        raise DomainError(f"R0 must be positive, got {r0}")
    omega = c * math.sqrt(r0)
    return ell0 * np.cos(omega * np.asarray(t, dtype=float))


def integrate_deviation(
    tidal: TidalSignal,
    forcing: StochasticForcing,
    initial: DeviationState,
    dt: float,
    steps: int,
    c: float = C_LIGHT,
) -> Trajectory:
    """Fixed-step classical RK4 for ``ell'' = -c^2 R(t) ell + F``.

    Returns ``steps + 1`` states including the initial one.

    Raises
    ------
    StepSizeError
        If ``dt * c * sqrt(max|R|) >= 0.1`` over the integration window.
    """
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    if int(steps) != steps or steps < 1:
        raise StepSizeError(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    t0 = initial.tau
    # R on the half-step grid: index 2i is t_i, 2i+1 is t_i + dt/2
    r_half = tidal(t0 + 0.5 * dt * np.arange(2 * steps + 1))
    r_max = float(np.max(np.abs(r_half)))
    guard = dt * c * math.sqrt(r_max)
    if not guard < STABILITY_LIMIT:
        raise StepSizeError(f"dt * c * sqrt(max|R|) = {guard:.3g} >= {STABILITY_LIMIT}")
    c2 = c * c
    f = forcing.value_per_realization
    tau = t0 + dt * np.arange(steps + 1)
    ell = np.empty(steps + 1)
    rate = np.empty(steps + 1)
    y, v = initial.ell, initial.ell_rate
    ell[0], rate[0] = y, v
    half = 0.5 * dt
    for i in range(steps):
        r_a, r_b, r_c = r_half[2 * i], r_half[2 * i + 1], r_half[2 * i + 2]
        k1y, k1v = v, -c2 * r_a * y + f
        k2y, k2v = v + half * k1v, -c2 * r_b * (y + half * k1y) + f
        k3y, k3v = v + half * k2v, -c2 * r_b * (y + half * k2y) + f
        k4y, k4v = v + dt * k3v, -c2 * r_c * (y + dt * k3y) + f
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ell[i + 1], rate[i + 1] = y, v
    return Trajectory(tau, ell, rate)


def accumulate_phase(tidal: TidalSignal, t_grid, mode: PhaseMode = "integral", c: float = C_LIGHT) -> PhaseTrace:
    """Oscillation phase of the pair along ``t_grid``.

    The instantaneous frequency is ``omega(t) = c sqrt(max(R(t), 0))``;
    negative tidal values are clipped and their share of grid points is
    reported as ``clipped_fraction``.

    ``mode="integral"`` integrates ``omega`` with the trapezoid rule from the
    first grid time. ``mode="literal"`` returns ``omega(t) * t``.
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or t.size < 1:
        raise GridError("time grid must be a non-empty 1-D sequence")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise GridError("time grid must be strictly increasing")
    if mode not in ("literal", "integral"):
        raise ValueError(f"unknown phase mode {mode!r}")
    r = tidal(t)
    clipped = float(np.mean(r < 0))
    omega = c * np.sqrt(np.maximum(r, 0.0))
    if mode == "literal":
        phi = omega * t
    else:
        phi = np.zeros_like(t)
        if t.size > 1:
            phi[1:] = np.cumsum(0.5 * (omega[1:] + omega[:-1]) * np.diff(t))
    return PhaseTrace(t, phi, mode, clipped)


def kuiper_statistic(angles) -> tuple[float, float]:
    """Kuiper ``V`` of angles (taken mod 2 pi) against the uniform law, with its asymptotic p-value."""
    u = np.sort(np.mod(np.asarray(angles, dtype=float), 2.0 * math.pi) / (2.0 * math.pi))
    n = u.size
    if n == 0:
        return 0.0, 1.0
    i = np.arange(1, n + 1)
    v = float(np.max(i / n - u) + np.max(u - (i - 1) / n))
    sq = math.sqrt(n)
    lam = (sq + 0.155 + 0.24 / sq) * v
    if lam < 0.4:
        return v, 1.0
    j = np.arange(1, 101)
    terms = 2.0 * (4.0 * j**2 * lam**2 - 1.0) * np.exp(-2.0 * j**2 * lam**2)
    return v, float(min(max(terms.sum(), 0.0), 1.0))


def realization_seeds(seed: int, n: int) -> list[int]:
    """Deterministic 63-bit sub-seeds for realizations ``0..n-1``."""
    children = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF).spawn(n)
    return [int(ch.generate_state(1, np.uint64)[0] >> np.uint64(1)) for ch in children]


def window_grid(window: float, spectrum: SpectrumParams, steps_per_period: int = 32, t_start: float = 0.0) -> np.ndarray:
    n = max(64, int(math.ceil(window * spectrum.f_max * steps_per_period)))
    return t_start + np.linspace(0.0, window, n + 1)


def end_of_window_phase(
    spectrum: SpectrumParams,
    n_modes: int,
    sub_seed: int,
    grid: np.ndarray,
    position: Sequence[float] = (0.0, 0.0, 0.0),
    mode: PhaseMode = "integral",
) -> tuple[float, float]:
    ens = sample_background(n_modes, sub_seed, spectrum)
    trace = accumulate_phase(TidalSignal.from_background(ens, position), grid, mode)
    return float(trace.phi[-1]), trace.clipped_fraction


def phase_statistics(
    ensemble: BackgroundEnsemble,
    window: float,
    n_realizations: int,
    seed: int,
    *,
    steps_per_period: int = 32,
    position: Sequence[float] = (0.0, 0.0, 0.0),
    mode: PhaseMode = "integral",
    fixed_subseed: bool = False,
    workers: int = 1,
) -> PhaseStatistics:
    """Spread of the end-of-window phase over independently drawn backgrounds.

    Each realization redraws a background with the mode count and spectrum
    of ``ensemble`` from a sub-seed derived from ``seed``. With
    ``fixed_subseed`` every realization reuses the first sub-seed.
    """
    if n_realizations < 2:
        raise SampleSizeError(f"need at least 2 realizations, got {n_realizations}")
    if not window > 0:
        raise ValueError("window must be positive")
    n_modes = max(len(ensemble), 1)
    grid = window_grid(window, ensemble.spectrum, steps_per_period)
    seeds = realization_seeds(seed, n_realizations)
    if fixed_subseed:
        seeds = [seeds[0]] * n_realizations

    def one(s):
        return end_of_window_phase(ensemble.spectrum, n_modes, s, grid, position, mode)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    phases = np.array([r[0] for r in results])
    clipped = float(np.mean([r[1] for r in results]))
    v, p = kuiper_statistic(phases)
    return PhaseStatistics(
        mean=float(np.mean(phases)),
        variance=float(np.var(phases, ddof=1)),
        kuiper_v=v,
        kuiper_pvalue=p,
        phases=phases,
        clipped_fraction=clipped,
    )
