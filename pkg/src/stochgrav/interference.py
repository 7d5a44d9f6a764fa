"""Two-slit interference with a stochastic relative phase between the paths.

Each path's metric perturbation is reduced to one random phase shift. The
screen intensity is averaged over realizations of the relative phase
``dphi``:

    I(x) = < |A_1(x) + A_2(x) exp(i dphi)|^2 >
         = |A_1|^2 + |A_2|^2 + 2 Re[conj(A_1) A_2 <exp(i dphi)>]

Symmetric phase laws are sampled antithetically (``dphi`` and ``-dphi``), so
``<sin dphi>`` vanishes identically and the pattern is exactly even in x.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .background import BackgroundEnsemble
from .deviation import end_of_window_phase, realization_seeds, window_grid
from .errors import ConfigError, RangeError, SampleSizeError

MIN_DISTANCE_RATIO = 10.0


@dataclass(frozen=True)
class SlitGeometry:
    slit_separation: float = 1e-6
    screen_distance: float = 1.0
    de_broglie_wavelength: float = 50e-12
    screen_points: int = 2001
    screen_half_width: float = 0.25e-3
    source_distance: float | None = None

    def __post_init__(self):
        for name in ("slit_separation", "screen_distance", "de_broglie_wavelength", "screen_half_width"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be a positive length, got {val}")
        if self.source_distance is not None and not self.source_distance > 0:
            raise ConfigError("source_distance must be positive")
        if int(self.screen_points) != self.screen_points or self.screen_points < 2:
            raise ConfigError(f"screen_points must be an integer >= 2, got {self.screen_points}")
        if self.screen_distance < MIN_DISTANCE_RATIO * self.slit_separation:
            raise ConfigError(
                f"screen_distance / slit_separation = {self.screen_distance / self.slit_separation:.3g} < {MIN_DISTANCE_RATIO}"
            )

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.de_broglie_wavelength

    @property
    def fringe_period(self) -> float:
        """Small-angle fringe spacing ``lambda L / d``."""
        return self.de_broglie_wavelength * self.screen_distance / self.slit_separation

    def positions(self) -> np.ndarray:
        """Screen sample positions, exactly symmetric about 0."""
        n = int(self.screen_points)
        step = 2.0 * self.screen_half_width / (n - 1)
        return (np.arange(n) - (n - 1) / 2.0) * step

    def slit_offset(self, slit_index: int) -> float:
        if slit_index == 1:
            return -0.5 * self.slit_separation
        if slit_index == 2:
            return 0.5 * self.slit_separation
        raise ValueError(f"slit_index must be 1 or 2, got {slit_index}")

    def to_dict(self) -> dict:
        return {
            "slit_separation": self.slit_separation,
            "screen_distance": self.screen_distance,
            "de_broglie_wavelength": self.de_broglie_wavelength,
            "screen_points": int(self.screen_points),
            "screen_half_width": self.screen_half_width,
        }


@dataclass(frozen=True)
class PathPhaseModel:
    """Law of the relative stochastic phase between the two paths.

    ``gaussian``: ``N(0, sigma_rel^2)``. ``uniform``: ``U(-a, a)`` with
    ``a = half_width`` (default ``sqrt(3) sigma_rel``). ``background``: the
    difference of the oscillation phases accumulated over two consecutive
    windows of length ``window`` seconds, each realization redrawing a
    background like ``ensemble``. ``mean_phase`` is a fixed shift added to
    every draw; with the default 0 the law is symmetric about zero.
    """

    sigma_rel: float = 0.0
    distribution: Literal["gaussian", "uniform", "background"] = "gaussian"
    half_width: float | None = None
    ensemble: BackgroundEnsemble | None = field(default=None, repr=False)
    window: float = 1.0
    steps_per_period: int = 32
    mean_phase: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mean_phase):
            raise ConfigError("mean_phase must be finite")
        if not (math.isfinite(self.sigma_rel) and self.sigma_rel >= 0):
            raise ConfigError(f"sigma_rel must be >= 0, got {self.sigma_rel}")
        if self.distribution not in ("gaussian", "uniform", "background"):
            raise ConfigError(f"unknown phase distribution {self.distribution!r}")
        if self.distribution == "background" and self.ensemble is None:
            raise ConfigError("background phase model needs an ensemble")
        if self.half_width is not None and not self.half_width >= 0:
            raise ConfigError("half_width must be >= 0")

    @property
    def uniform_half_width(self) -> float:
        return math.sqrt(3.0) * self.sigma_rel if self.half_width is None else self.half_width

    def with_sigma(self, sigma: float) -> "PathPhaseModel":
        return PathPhaseModel(
            sigma, self.distribution, None, self.ensemble, self.window, self.steps_per_period, self.mean_phase
        )

    def to_dict(self) -> dict:
        doc = {"distribution": self.distribution, "sigma_rel": self.sigma_rel}
        if self.mean_phase != 0.0:
            doc["mean_phase"] = self.mean_phase
        if self.distribution == "uniform":
            doc["half_width"] = self.uniform_half_width
        if self.distribution == "background":
            doc.update(window=self.window, n_modes=len(self.ensemble), spectrum=self.ensemble.spectrum.to_dict())
        return doc


@dataclass(frozen=True)
class IntensityProfile:
    positions: np.ndarray
    intensity: np.ndarray
    n_realizations: int
    seed: int
    mean_cos: float = 1.0

    def __post_init__(self):
        if self.positions.shape != self.intensity.shape:
            raise ValueError("positions and intensity differ in length")
        if np.any(self.intensity < 0):
            raise ValueError("negative intensity")


def _path_excess(geometry: SlitGeometry, slit_index: int, screen_x) -> np.ndarray:
    """Optical path source -> slit -> screen minus the on-axis path, in metres."""
    y = geometry.slit_offset(slit_index)
    ls = geometry.screen_distance if geometry.source_distance is None else geometry.source_distance
    lsc = geometry.screen_distance
    dx = np.asarray(screen_x, dtype=float) - y
    # hypot(L, a) - L = a^2 / (hypot(L, a) + L), free of cancellation
    to_screen = dx * dx / (np.hypot(lsc, dx) + lsc)
    to_slit = y * y / (math.hypot(ls, y) + ls)
    return to_slit + to_screen


def path_length(geometry: SlitGeometry, slit_index: int, screen_x: float) -> float:
    """Exact Euclidean length source -> slit -> screen point."""
    y = geometry.slit_offset(slit_index)
    ls = geometry.screen_distance if geometry.source_distance is None else geometry.source_distance
    return math.hypot(ls, y) + math.hypot(geometry.screen_distance, screen_x - y)


def path_amplitude(geometry: SlitGeometry, slit_index: int, screen_x, extra_phase: float = 0.0):
    """Point-slit amplitude ``exp(i (k * path + extra_phase)) / sqrt(2)``.

    The geometric phase is measured relative to the on-axis optical path,
    which removes a phase common to both slits.
    """
    x = np.asarray(screen_x, dtype=float)
    if np.any(np.abs(x) > geometry.screen_half_width * (1 + 1e-12)):
        raise RangeError(f"screen position outside +-{geometry.screen_half_width}")
    phase = geometry.wavenumber * _path_excess(geometry, slit_index, x) + extra_phase
    amp = np.exp(1j * phase) / math.sqrt(2.0)
    return complex(amp) if amp.ndim == 0 else amp


def _symmetric_draws(rng: np.random.Generator, model: PathPhaseModel, n_pairs: int) -> np.ndarray:
    if model.distribution == "gaussian":
        base = model.sigma_rel * rng.standard_normal(n_pairs)
    else:
        a = model.uniform_half_width
        base = rng.uniform(-a, a, n_pairs)
    return base


def _background_draws(model: PathPhaseModel, seed: int, n_pairs: int, workers: int) -> np.ndarray:
    ens = model.ensemble
    n_modes = max(len(ens), 1)
    grid1 = window_grid(model.window, ens.spectrum, model.steps_per_period)
    grid2 = grid1 + model.window

    def one(s):
        phi1, _ = end_of_window_phase(ens.spectrum, n_modes, s, grid1)
        phi2 = end_of_window_phase(ens.spectrum, n_modes, s, grid2)[0]
        return phi1 - phi2

    seeds = realization_seeds(seed, n_pairs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, seeds)))
    return np.array([one(s) for s in seeds])


def draw_relative_phases(model: PathPhaseModel, n_realizations: int, seed: int, workers: int = 1) -> np.ndarray:
    """Antithetic sample ``[d_1..d_m, -d_1..-d_m]`` with ``m = ceil(n / 2)``."""
    if n_realizations < 1:
        raise SampleSizeError(f"need at least one realization, got {n_realizations}")
    n_pairs = (int(n_realizations) + 1) // 2
    if model.distribution == "background":
        base = _background_draws(model, seed, n_pairs, workers)
    else:
        base = _symmetric_draws(np.random.default_rng(seed), model, n_pairs)
    return np.concatenate([base, -base])


def mean_cos(dphi: np.ndarray) -> float:
    """``<cos dphi>`` over an antithetic sample; pairs share the cosine."""
    m = dphi.size // 2
    return float(np.sum(np.cos(dphi[:m])) / m)


def two_slit_intensity(
    geometry: SlitGeometry,
    phase_model: PathPhaseModel,
    n_realizations: int,
    seed: int,
    workers: int = 1,
) -> IntensityProfile:
    """Screen intensity averaged over realizations of the relative phase.

    Odd ``n_realizations`` is rounded up to the next even count by the
    antithetic pairing; the profile records the count actually used.
    """
    dphi = draw_relative_phases(phase_model, n_realizations, seed, workers)
    c = mean_cos(dphi)
    x = geometry.positions()
    a1 = path_amplitude(geometry, 1, x)
    a2 = path_amplitude(geometry, 2, x)
    ph1 = geometry.wavenumber * _path_excess(geometry, 1, x)
    ph2 = geometry.wavenumber * _path_excess(geometry, 2, x)
    delta = ph2 - ph1
    # cos(|delta|) keeps the zero-shift pattern bit-exactly even in x
    fringe = np.cos(np.abs(delta)) if phase_model.mean_phase == 0.0 else np.cos(delta + phase_model.mean_phase)
    cross = fringe * (np.abs(a1) * np.abs(a2))
    intensity = np.abs(a1) ** 2 + np.abs(a2) ** 2 + 2.0 * c * cross
    intensity = np.maximum(intensity, 0.0)
    return IntensityProfile(x, intensity, dphi.size, int(seed), c)


def single_slit_control(geometry: SlitGeometry, slit_index: int) -> IntensityProfile:
    """Intensity with one slit open: ``|A_slit(x)|^2``."""
    x = geometry.positions()
    a = path_amplitude(geometry, slit_index, x)
    return IntensityProfile(x, np.abs(a) ** 2, 1, 0)


def visibility(profile: IntensityProfile, fringe_period: float) -> float:
    """``(I_max - I_min) / (I_max + I_min)`` over the central two fringe periods."""
    x = profile.positions
    if not fringe_period > 0:
        raise RangeError("fringe period must be positive")
    if x[0] > -fringe_period or x[-1] < fringe_period:
        raise RangeError("profile does not cover two fringe periods about the centre")
    sel = np.abs(x) <= fringe_period * (1.0 + 1e-12)
    window = profile.intensity[sel]
    hi, lo = float(window.max()), float(window.min())
    if hi + lo == 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def visibility_curve(
    geometry: SlitGeometry,
    sigmas: Sequence[float],
    n_realizations: int,
    seed: int,
    distribution: Literal["gaussian", "uniform"] = "gaussian",
    workers: int = 1,
) -> list[tuple[float, float]]:
    """Visibility for each sigma, in input order, with common random numbers."""
    out = []
    for s in sigmas:
        if not s >= 0:
            raise ConfigError(f"sigma must be non-negative, got {s}")
        prof = two_slit_intensity(geometry, PathPhaseModel(float(s), distribution), n_realizations, seed, workers)
        out.append((float(s), visibility(prof, geometry.fringe_period)))
    return out


def gaussian_visibility(sigma: float) -> float:
    """Characteristic function of ``N(0, sigma^2)`` at 1."""
    return math.exp(-0.5 * sigma * sigma)


def gaussian_visibility_stderr(sigma: float, n_realizations: int) -> float:
    """Standard error of the antithetic ``<cos dphi>`` estimate for Gaussian phase."""
    var_cos = 0.5 * (1.0 + math.exp(-2.0 * sigma * sigma)) - math.exp(-sigma * sigma)
    n_pairs = (int(n_realizations) + 1) // 2
    return math.sqrt(max(var_cos, 0.0) / n_pairs)
