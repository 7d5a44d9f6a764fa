"""Bell/CHSH correlations of hidden-variable models driven by a random phase.

The shared hidden variable is a phase ``Phi``. The correlation of the
outcomes at polarizer angles differing by ``theta`` is

* ``cosine-projection``:  (1/2pi) int rho(Phi) cos(Phi) cos(Phi + theta) dPhi,
  which is ``(rho/2) cos(theta)`` for constant ``rho``;
* ``deterministic-sign``: the average of ``sign(cos Phi) sign(cos(Phi + theta))``
  over uniform ``Phi``, the sawtooth ``1 - 2|theta|/pi``;
* ``quantum-reference``: ``cos(theta)``.

The Bell observable is ``S = |M_AB + M_A'B + M_AB' - M_A'B'| / 2`` with the
absolute value taken once, on the combination.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate

from .deviation import kuiper_statistic
from .errors import ConfigError, DistributionError, SampleSizeError

TWO_PI = 2.0 * math.pi
MIN_SAMPLES = 100
MIN_BOUND_SETTINGS = 1000
BOUND_SLACK = 1e-9
CHUNK = 1 << 16

ModelKind = Literal["cosine-projection", "deterministic-sign", "quantum-reference"]
MODEL_KINDS = ("cosine-projection", "deterministic-sign", "quantum-reference")


@dataclass(frozen=True)
class MeasurementSettings:
    a: float = 0.0
    a_prime: float = math.pi / 2
    b: float = math.pi / 4
    b_prime: float = -math.pi / 4

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ConfigError("polarizer angles must be finite")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.a_prime, self.b, self.b_prime)

    def thetas(self) -> tuple[float, float, float, float]:
        """Angle differences for (AB, A'B, AB', A'B')."""
        return (self.a - self.b, self.a_prime - self.b, self.a - self.b_prime, self.a_prime - self.b_prime)

    def to_dict(self) -> dict:
        return {"a": self.a, "a_prime": self.a_prime, "b": self.b, "b_prime": self.b_prime}


@dataclass(frozen=True)
class PhaseDistribution:
    """Weight ``rho(Phi)`` of the hidden phase; constant or a periodic table."""

    kind: Literal["constant", "table"] = "constant"
    rho_const: float = 2.0
    table: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "constant":
            if not (math.isfinite(self.rho_const) and self.rho_const >= 0):
                raise DistributionError(f"rho must be non-negative, got {self.rho_const}")
        elif self.kind == "table":
            if self.table is None:
                raise DistributionError("table distribution needs (phi, rho) arrays")
            phi, rho = (np.asarray(a, dtype=float) for a in self.table)
            if phi.ndim != 1 or phi.shape != rho.shape or phi.size < 2:
                raise DistributionError("table needs equal-length phi and rho arrays with >= 2 points")
            if np.any(rho < 0):
                raise DistributionError("rho table has negative values")
            if not np.all(np.diff(phi) > 0) or phi[0] < 0 or phi[-1] >= TWO_PI:
                raise DistributionError("phi grid must be strictly increasing inside [0, 2pi)")
            object.__setattr__(self, "table", (phi, rho))
        else:
            raise DistributionError(f"unknown distribution kind {self.kind!r}")

    def __call__(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if self.kind == "constant":
            return np.full(phi.shape, self.rho_const)
        grid, rho = self.table
        return np.interp(np.mod(phi, TWO_PI), grid, rho, period=TWO_PI)

    def normalization(self) -> float:
        """``(1/2pi) int_0^2pi rho dPhi``; 2 for the default ``rho = 2``."""
        if self.kind == "constant":
            return self.rho_const
        val, _ = integrate.quad(self, 0.0, TWO_PI, points=self._breakpoints(), limit=500, epsabs=1e-13)
        return val / TWO_PI

    def _breakpoints(self):
        return None if self.kind == "constant" else list(self.table[0])

    @cached_property
    def harmonic_coefficients(self) -> tuple[float, float]:
        """``(C, D)`` such that the cosine-projection correlator is ``C cos(theta) - D sin(theta)``."""
        if self.kind == "constant":
            return 0.5 * self.rho_const, 0.0
        pts = self._breakpoints()
        c, _ = integrate.quad(lambda p: self(p) * math.cos(p) ** 2, 0.0, TWO_PI, points=pts, limit=500, epsabs=1e-13)
        d, _ = integrate.quad(lambda p: self(p) * math.sin(p) * math.cos(p), 0.0, TWO_PI, points=pts, limit=500, epsabs=1e-13)
        return c / TWO_PI, d / TWO_PI

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "rho": self.rho_const}
        return {"kind": "table", "phi": self.table[0].tolist(), "rho": self.table[1].tolist()}


@dataclass(frozen=True)
class CorrelationModel:
    kind: ModelKind = "cosine-projection"
    phase_distribution: PhaseDistribution = field(default_factory=PhaseDistribution)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.kind!r}; expected one of {', '.join(MODEL_KINDS)}")

    def correlation(self, theta):
        """Vectorized analytic correlation at angle difference(s) ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "quantum-reference":
            return np.cos(theta)
        if self.kind == "deterministic-sign":
            return sawtooth(theta)
        c, d = self.phase_distribution.harmonic_coefficients
        if d == 0.0:
            return c * np.cos(theta)
        return c * np.cos(theta) - d * np.sin(theta)

    def declared_bound(self) -> float:
        """Largest attainable ``S`` for the model's correlation law."""
        if self.kind == "deterministic-sign":
            return 1.0
        if self.kind == "quantum-reference":
            return math.sqrt(2.0)
        c, d = self.phase_distribution.harmonic_coefficients
        return math.sqrt(2.0) * math.hypot(c, d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "phase_distribution": self.phase_distribution.to_dict()}


@dataclass(frozen=True)
class BellResult:
    s_value: float
    per_pair_correlations: tuple[float, float, float, float]
    method: Literal["analytic", "montecarlo"]
    n_samples: int = 0
    std_error: float = 0.0
    seed: int = 0
    settings: MeasurementSettings = field(default_factory=MeasurementSettings)
    model: CorrelationModel = field(default_factory=CorrelationModel)
    pair_std_errors: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    @property
    def bound(self) -> float:
        return self.model.declared_bound()

    @property
    def passed(self) -> bool:
        # Monte Carlo estimates get three standard errors of slack
        return self.s_value <= self.bound + BOUND_SLACK + 3.0 * self.std_error

    def to_dict(self) -> dict:
        return {
            "settings": self.settings.to_dict(),
            "model": self.model.kind,
            "phase_distribution": self.model.phase_distribution.to_dict(),
            "method": self.method,
            "n_samples": int(self.n_samples),
            "seed": int(self.seed),
            "correlations": [float(m) for m in self.per_pair_correlations],
            "s_value": float(self.s_value),
            "std_error": float(self.std_error),
            "bound": float(self.bound),
            "pass": bool(self.passed),
        }


@dataclass(frozen=True)
class BoundReport:
    model: str
    n_settings: int
    seed: int
    max_s: float
    bound: float
    passed: bool
    argmax: MeasurementSettings


@dataclass(frozen=True)
class BridgeResult:
    estimate: float
    std_error: float
    n: int
    kuiper_v: float
    kuiper_pvalue: float


def bell_combination(m_ab, m_apb, m_abp, m_apbp):
    return 0.5 * np.abs(m_ab + m_apb + m_abp - m_apbp)


def sawtooth(theta):
    """Uniform-phase average of ``sign(cos Phi) sign(cos(Phi + theta))``."""
    wrapped = np.abs(np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi)
    return 1.0 - 2.0 * wrapped / math.pi


def correlation_quadrature(theta: float, dist: PhaseDistribution) -> float:
    """Adaptive quadrature of ``(1/2pi) int rho cos(Phi) cos(Phi + theta) dPhi``."""
    val, _ = integrate.quad(
        lambda p: float(dist(p)) * math.cos(p) * math.cos(p + theta),
        0.0,
        TWO_PI,
        points=dist._breakpoints(),
        limit=500,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    return val / TWO_PI


def correlation_analytic(theta: float, dist: PhaseDistribution | None = None) -> float:
    """Signed cosine-projection correlation; ``(rho/2) cos(theta)`` for constant ``rho``."""
    dist = dist or PhaseDistribution()
    if dist.kind == "constant":
        return 0.5 * dist.rho_const * math.cos(theta)
    return correlation_quadrature(theta, dist)


def _model_correlation_exact(theta: float, model: CorrelationModel) -> float:
    if model.kind == "cosine-projection":
        return correlation_analytic(theta, model.phase_distribution)
    return float(model.correlation(theta))


def _chunk_seeds(seed: int, n_chunks: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF).spawn(n_chunks)


def chunked_moments(
    sample_fn: Callable[[np.random.Generator, int], np.ndarray],
    n: int,
    seed: int,
    workers: int = 1,
) -> tuple[float, float]:
    """Mean and standard error of ``n`` draws split into fixed-size seeded chunks.

    Chunk ``i`` always uses the ``i``-th child of ``SeedSequence(seed)`` and the
    partial sums are combined in chunk order, so the result does not depend on
    ``workers``.
    """
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    seqs = _chunk_seeds(seed, len(sizes))

    def run(args):
        ss, size = args
        vals = sample_fn(np.random.default_rng(ss), size)
        return float(np.sum(vals)), float(np.sum(vals * vals))

    jobs = list(zip(seqs, sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    s1 = 0.0
    s2 = 0.0
    for a, b in parts:
        s1 += a
        s2 += b
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def correlation_montecarlo(
    theta: float,
    model: CorrelationModel,
    n: int,
    seed: int,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo correlation estimate with uniform ``Phi``; returns ``(mean, std_error)``."""
    if n < MIN_SAMPLES:
        raise SampleSizeError(f"need n >= {MIN_SAMPLES}, got {n}")
    n = int(n)
    if model.kind == "quantum-reference":
        return math.cos(theta), 0.0
    dist = model.phase_distribution

    if model.kind == "cosine-projection":
        if dist.kind == "constant":
            rho = dist.rho_const

            def draw(rng, size):
                phi = rng.uniform(0.0, TWO_PI, size)
                return rho * (np.cos(phi) * np.cos(phi + theta))

        else:

            def draw(rng, size):
                phi = rng.uniform(0.0, TWO_PI, size)
                return dist(phi) * np.cos(phi) * np.cos(phi + theta)

    else:

        def draw(rng, size):
            phi = rng.uniform(0.0, TWO_PI, size)
            return np.sign(np.cos(phi)) * np.sign(np.cos(phi + theta))

    return chunked_moments(draw, n, seed, workers)


def bell_observable(
    settings: MeasurementSettings,
    model: CorrelationModel,
    method: Literal["analytic", "montecarlo"] = "analytic",
    n: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> BellResult:
    """Bell observable at four polarizer settings.

    For ``method="montecarlo"`` each of the four correlations is estimated
    from ``n`` samples with an independent sub-seed of ``seed``.
    """
    thetas = settings.thetas()
    if method == "analytic":
        corr = tuple(_model_correlation_exact(t, model) for t in thetas)
        errs = (0.0, 0.0, 0.0, 0.0)
        n_used = 0
    elif method == "montecarlo":
        if n < MIN_SAMPLES:
            raise SampleSizeError(f"need n >= {MIN_SAMPLES} per pair, got {n}")
        subs = [int(s.generate_state(1, np.uint64)[0] >> np.uint64(1)) for s in _chunk_seeds(seed, 4)]
        est = [correlation_montecarlo(t, model, n, s, workers) for t, s in zip(thetas, subs)]
        corr = tuple(e[0] for e in est)
        errs = tuple(e[1] for e in est)
        n_used = int(n)
    else:
        raise ConfigError(f"unknown method {method!r}")
    s_val = float(bell_combination(*corr))
    se = 0.5 * math.sqrt(sum(e * e for e in errs))
    return BellResult(s_val, corr, method, n_used, se, int(seed), settings, model, errs)


def _s_of(model: CorrelationModel, x: np.ndarray) -> float:
    a, ap, b, bp = x
    m = model.correlation(np.array([a - b, ap - b, a - bp, ap - bp]))
    return float(bell_combination(*m))


def maximize_bell(
    model: CorrelationModel,
    resolution: int = 32,
    tol: float = 1e-6,
) -> tuple[MeasurementSettings, float]:
    """Maximize ``S`` over polarizer angles.

    A full grid over ``[0, 2pi)^4`` with ``resolution`` points per angle is
    searched first, then refined by a compass search whose step is halved
    until it drops below ``tol`` radians.
    """
    if resolution < 32:
        raise ConfigError(f"resolution must be >= 32, got {resolution}")
    g = TWO_PI * np.arange(resolution) / resolution
    m = model.correlation(g[:, None] - g[None, :])  # m[i, j] = M(angle_i - angle_j)
    # axes: a, a', b, b'
    s = bell_combination(
        m[:, None, :, None],
        m[None, :, :, None],
        m[:, None, None, :],
        m[None, :, None, :],
    )
    idx = np.unravel_index(int(np.argmax(s)), s.shape)
    x = g[list(idx)].astype(float)
    best = _s_of(model, x)
    step = TWO_PI / resolution
    while step >= tol:
        improved = False
        for i in range(4):
            for sgn in (1.0, -1.0):
                trial = x.copy()
                trial[i] += sgn * step
                val = _s_of(model, trial)
                if val > best + 1e-15:
                    x, best, improved = trial, val, True
        if not improved:
            step *= 0.5
    x = np.mod(x, TWO_PI)
    return MeasurementSettings(*map(float, x)), best


def bound_check(model: CorrelationModel, n_random_settings: int, seed: int) -> BoundReport:
    """Largest analytic ``S`` over uniformly random settings against the model bound.

    A violation is reported through ``passed``; it is not an exception.
    """
    if n_random_settings < MIN_BOUND_SETTINGS:
        raise SampleSizeError(f"need >= {MIN_BOUND_SETTINGS} settings, got {n_random_settings}")
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0.0, TWO_PI, (int(n_random_settings), 4))
    a, ap, b, bp = ang.T
    s = bell_combination(model.correlation(a - b), model.correlation(ap - b), model.correlation(a - bp), model.correlation(ap - bp))
    i = int(np.argmax(s))
    bound = model.declared_bound()
    max_s = float(s[i])
    return BoundReport(model.kind, int(n_random_settings), int(seed), max_s, bound, max_s <= bound + BOUND_SLACK, MeasurementSettings(*map(float, ang[i])))


def phase_source_bridge(
    provider,
    theta: float,
    n: int,
    seed: int = 0,
    dist: PhaseDistribution | None = None,
) -> BridgeResult:
    """Cosine-projection correlation with phases from an external source.

    ``provider`` is an array of phases or a callable ``(n, seed) -> phases``.
    The first ``n`` phases are used; their uniformity is summarized by the
    Kuiper statistic.
    """
    dist = dist or PhaseDistribution()
    phases = provider(n, seed) if callable(provider) else provider
    phases = np.asarray(phases, dtype=float).ravel()
    if n < 2 or phases.size < n:
        raise SampleSizeError(f"provider supplied {phases.size} phases, need n = {n} >= 2")
    phi = np.mod(phases[:n], TWO_PI)
    vals = dist(phi) * np.cos(phi) * np.cos(phi + theta)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n))
    v, p = kuiper_statistic(phi)
    return BridgeResult(est, se, int(n), v, p)


def uniform_phase_provider(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, TWO_PI, n)


def background_phase_provider(ensemble, window: float, **kwargs) -> Callable[[int, int], np.ndarray]:
    """Provider of end-of-window oscillation phases over redrawn backgrounds."""
    from .deviation import phase_statistics

    def provide(n: int, seed: int) -> np.ndarray:
        return phase_statistics(ensemble, window, n, seed, **kwargs).phases

    return provide

