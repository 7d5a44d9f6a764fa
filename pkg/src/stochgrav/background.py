"""Random background of weak gravitational plane waves.

Conventions
-----------
* Signature ``eta = diag(+1, -1, -1, -1)``.
* Events are ``x^mu = (c t, x, y, z)`` in metres (geometric time).
* A mode stores its covariant wave vector ``k_mu = (w/c, -w/c * n)`` in 1/m,
  so the phase is ``k_mu x^mu = w t - (w/c) n.x``.
* A mode's real perturbation is ``h = 2 e cos(k_mu x^mu + phase0)``, the real
  plane wave ``e exp(i k.x) + conj``.
* Sampled polarizations are transverse-traceless in the wave frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

C_LIGHT = 299_792_458.0
GRAVITATIONAL_CONSTANT = 1.0  # geometric units
H_MAX = 1e-2

ETA = np.diag([1.0, -1.0, -1.0, -1.0])
ETA.flags.writeable = False

# E[e_11^2] for an isotropic TT tensor with plus/cross amplitude A is 4 A^2 / 15,
# and a cosine wave averages its square to 1/2, so <h_11^2> = 2 E[e_11^2] = 8 A^2 / 15.
_H11_MEAN_SQUARE_PER_A2 = 8.0 / 15.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FourVector:
    components: np.ndarray

    def __post_init__(self):
        c = _readonly(self.components)
        if c.shape != (4,) or not np.all(np.isfinite(c)):
            raise ValueError(f"four-vector needs 4 finite components, got {self.components!r}")
        object.__setattr__(self, "components", c)

    @classmethod
    def event(cls, t: float, position: Sequence[float] = (0.0, 0.0, 0.0)) -> "FourVector":
        """Event at time ``t`` seconds and spatial ``position`` metres."""
        return cls(np.array([C_LIGHT * t, *position], dtype=float))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


def _as4(x) -> np.ndarray:
    if isinstance(x, FourVector):
        return x.components
    x = np.asarray(x, dtype=float)
    if x.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {x.shape}")
    return x


class MinkowskiMetric:
    """Flat metric, fixed signature (+, -, -, -)."""

    signature = (1, -1, -1, -1)

    @staticmethod
    def matrix() -> np.ndarray:
        return ETA

    @staticmethod
    def dot(a, b) -> float:
        a, b = _as4(a), _as4(b)
        return float(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3])


@dataclass(frozen=True)
class SpectrumParams:
    """Sampling law of the background.

    Amplitudes follow ``A_j ~ (f_j / f_min) ** exponent`` and are rescaled so
    that the per-mode mean of the time-averaged ``h_11^2`` equals ``rms**2``.
    """

    f_min: float
    f_max: float
    exponent: float = 0.0
    rms: float = 1e-6
    h_max: float = H_MAX

    def validate(self) -> None:
        for name in ("f_min", "f_max", "exponent", "rms", "h_max"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.f_min > 0:
            raise ConfigError(f"f_min must be positive, got {self.f_min}")
        if not self.f_min < self.f_max:
            raise ConfigError(f"need f_min < f_max, got {self.f_min} >= {self.f_max}")
        if self.rms < 0:
            raise ConfigError(f"rms must be non-negative, got {self.rms}")
        if self.rms > self.h_max:
            raise ConfigError(f"rms {self.rms} exceeds linearization cap h_max {self.h_max}")

    def to_dict(self) -> dict:
        return {"f_min": self.f_min, "f_max": self.f_max, "exponent": self.exponent, "rms": self.rms}


@dataclass(frozen=True)
class PlaneWaveMode:
    polarization: np.ndarray
    wave_vector: np.ndarray
    phase0: float = 0.0
    mode_id: int = 0

    def __post_init__(self):
        e = _readonly(self.polarization)
        k = _readonly(_as4(self.wave_vector))
        if e.shape != (4, 4):
            raise ValueError(f"polarization must be 4x4, got {e.shape}")
        object.__setattr__(self, "polarization", e)
        object.__setattr__(self, "wave_vector", k)
        object.__setattr__(self, "phase0", float(self.phase0))

    @property
    def angular_frequency(self) -> float:
        """Temporal angular frequency ``w = c k_0`` in rad/s."""
        return C_LIGHT * float(self.wave_vector[0])

    def phase(self, x) -> float:
        return float(self.wave_vector @ _as4(x)) + self.phase0

    def validate(self, h_max: float = H_MAX, tol: float = 1e-12) -> None:
        """Check symmetry, TT gauge, null wave vector and amplitude cap."""
        check_mode(self, h_max=h_max, tol=tol)


def check_mode(mode: PlaneWaveMode, h_max: float = H_MAX, tol: float = 1e-12) -> None:
    e, k = mode.polarization, mode.wave_vector
    scale_e = float(np.max(np.abs(e)))
    k2 = float(k @ k)
    if not np.array_equal(e, e.T):
        raise ValueError("polarization is not symmetric")
    if scale_e > h_max:
        raise ValueError(f"strain amplitude {scale_e:.3g} exceeds h_max {h_max:.3g}")
    if abs(MinkowskiMetric.dot(k, k)) > tol * max(k2, 1e-300):
        raise ValueError("wave vector is not null")
    if scale_e == 0.0:
        return
    if np.max(np.abs(e[0, :])) > tol * scale_e:
        raise ValueError("polarization has time components")
    spatial = e[1:, 1:]
    if abs(np.trace(spatial)) > tol * scale_e:
        raise ValueError("polarization is not traceless")
    ks = k[1:]
    if np.max(np.abs(ks @ spatial)) > tol * scale_e * max(float(np.linalg.norm(ks)), 1e-300):
        raise ValueError("polarization is not transverse")


@dataclass(frozen=True)
class SourceTensor:
    s_mn: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))

    def __post_init__(self):
        s = _readonly(self.s_mn)
        if s.shape != (4, 4) or not np.array_equal(s, s.T):
            raise ValueError("source tensor must be a symmetric 4x4 matrix")
        object.__setattr__(self, "s_mn", s)

    @classmethod
    def vacuum(cls) -> "SourceTensor":
        return cls(np.zeros((4, 4)))


@dataclass(frozen=True)
class BackgroundEnsemble:
    modes: tuple
    seed: int
    spectrum: SpectrumParams

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    def __len__(self) -> int:
        return len(self.modes)

    @classmethod
    def empty(cls, spectrum: SpectrumParams | None = None, seed: int = 0) -> "BackgroundEnsemble":
        return cls((), seed, spectrum or SpectrumParams(1.0, 2.0, rms=0.0))

    def concatenate(self, other: "BackgroundEnsemble") -> "BackgroundEnsemble":
        return BackgroundEnsemble(self.modes + other.modes, self.seed, self.spectrum)

    # vectorized views used by the evaluators
    def polarizations(self) -> np.ndarray:
        if not self.modes:
            return np.zeros((0, 4, 4))
        return np.stack([m.polarization for m in self.modes])

    def wave_vectors(self) -> np.ndarray:
        if not self.modes:
            return np.zeros((0, 4))
        return np.stack([m.wave_vector for m in self.modes])

    def phases(self) -> np.ndarray:
        return np.array([m.phase0 for m in self.modes], dtype=float)

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "spectrum": self.spectrum.to_dict(),
            "modes": [
                {
                    "e": [float(v) for v in m.polarization.ravel()],
                    "k": [float(v) for v in m.wave_vector],
                    "phase0": float(m.phase0),
                }
                for m in self.modes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, h_max: float = H_MAX) -> "BackgroundEnsemble":
        try:
            sp = doc["spectrum"]
            spectrum = SpectrumParams(
                float(sp["f_min"]), float(sp["f_max"]), float(sp["exponent"]), float(sp["rms"]), h_max
            )
            modes = []
            for j, m in enumerate(doc["modes"]):
                if len(m["e"]) != 16 or len(m["k"]) != 4:
                    raise ConfigError(f"mode {j}: expected 16 polarization and 4 wave-vector entries")
                modes.append(
                    PlaneWaveMode(np.reshape(np.array(m["e"], dtype=float), (4, 4)), np.array(m["k"], dtype=float), float(m["phase0"]), j)
                )
            seed = int(doc["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed ensemble document: {exc}") from exc
        for m in modes:
            try:
                check_mode(m, h_max=h_max, tol=1e-10)
            except ValueError as exc:
                raise ConfigError(f"mode {m.mode_id}: {exc}") from exc
        return cls(tuple(modes), seed, spectrum)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "BackgroundEnsemble":
        return cls.from_dict(json.loads(text))


def wave_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane transverse to ``direction``."""
    n = direction / np.linalg.norm(direction)
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    p = np.cross(n, helper)
    p /= np.linalg.norm(p)
    q = np.cross(n, p)
    return p, q


def tt_polarization(direction: np.ndarray, amplitude: float, pol_angle: float) -> np.ndarray:
    """4x4 TT polarization ``A (cos a e_plus + sin a e_cross)`` for waves along ``direction``.

    The trace and the transverse projection are cleaned explicitly so the
    gauge conditions hold to rounding.
    """
    n = direction / np.linalg.norm(direction)
    p, q = wave_frame(n)
    e_plus = np.outer(p, p) - np.outer(q, q)
    e_cross = np.outer(p, q) + np.outer(q, p)
    s = amplitude * (math.cos(pol_angle) * e_plus + math.sin(pol_angle) * e_cross)
    proj = np.eye(3) - np.outer(n, n)
    s = proj @ s @ proj
    s = s - 0.5 * np.trace(s) * proj
    s = 0.5 * (s + s.T)
    e = np.zeros((4, 4))
    e[1:, 1:] = s
    return e


def sample_background(n_modes: int, seed: int, spectrum: SpectrumParams) -> BackgroundEnsemble:
    """Draw a reproducible isotropic background of ``n_modes`` plane waves.

    Directions are uniform on the sphere, frequencies log-uniform in
    ``[f_min, f_max]``, phases uniform in ``[0, 2 pi)`` and the plus/cross
    mixing angle uniform in ``[0, 2 pi)``.
    """
    if int(n_modes) != n_modes or n_modes < 1:
        raise ConfigError(f"n_modes must be a positive integer, got {n_modes}")
    spectrum.validate()
    n_modes = int(n_modes)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))
    directions = rng.standard_normal((n_modes, 3))
    norms = np.linalg.norm(directions, axis=1)
    # zero-norm draws have probability zero; guard anyway
    directions[norms == 0] = [0.0, 0.0, 1.0]
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    log_f = rng.uniform(math.log(spectrum.f_min), math.log(spectrum.f_max), n_modes)
    freqs = np.exp(log_f)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_modes)
    pol_angles = rng.uniform(0.0, 2.0 * math.pi, n_modes)

    shape = (freqs / spectrum.f_min) ** spectrum.exponent
    mean_sq = float(np.mean(shape**2))
    a0 = spectrum.rms / math.sqrt(_H11_MEAN_SQUARE_PER_A2 * mean_sq)
    amplitudes = a0 * shape

    modes = []
    for j in range(n_modes):
        k0 = 2.0 * math.pi * freqs[j] / C_LIGHT
        k_cov = np.concatenate(([k0], -k0 * directions[j]))
        e = tt_polarization(directions[j], amplitudes[j], pol_angles[j])
        mode = PlaneWaveMode(e, k_cov, phases[j], j)
        if np.max(np.abs(mode.polarization)) > spectrum.h_max:
            raise ConfigError(
                f"mode {j} amplitude {np.max(np.abs(mode.polarization)):.3g} exceeds h_max {spectrum.h_max}; lower rms"
            )
        modes.append(mode)
    return BackgroundEnsemble(tuple(modes), int(seed), spectrum)


def metric_perturbation_at(mode: PlaneWaveMode, x) -> np.ndarray:
    """Real perturbation ``2 e cos(k.x + phase0)`` of one mode at event ``x``."""
    return 2.0 * mode.polarization * math.cos(mode.phase(x))


def perturbation_sum(ensemble: BackgroundEnsemble, x) -> np.ndarray:
    x = _as4(x)
    total = np.zeros((4, 4))
    for mode in ensemble.modes:
        total += metric_perturbation_at(mode, x)
    return total


def total_metric(ensemble: BackgroundEnsemble, x) -> np.ndarray:
    """``eta + sum_j h_j(x)``, summed in mode order."""
    return ETA + perturbation_sum(ensemble, x)


def interval(metric, dx) -> float:
    """Squared interval ``g_mn dx^m dx^n``; positive for timelike displacements."""
    g = np.asarray(metric, dtype=float)
    if g.shape != (4, 4) or not np.array_equal(g, g.T):
        raise ValueError("metric must be a symmetric 4x4 matrix")
    d = _as4(dx)
    return float(d @ g @ d)


def harmonic_gauge_residual(mode: PlaneWaveMode, scaled: bool = False) -> float:
    """``max_n |k_m e^m_n - (1/2) k_n e^m_m|`` with indices raised by eta.

    With ``scaled=True`` the residual is divided by ``|k| max|e|``.
    """
    e, k = mode.polarization, mode.wave_vector
    mixed = ETA @ e  # e^m_n
    div = k @ mixed
    trace = float(np.trace(mixed))
    res = float(np.max(np.abs(div - 0.5 * k * trace)))
    if scaled:
        scale = float(np.linalg.norm(k)) * float(np.max(np.abs(e)))
        return res / scale if scale > 0 else 0.0
    return res


def field_equation_residual(
    mode: PlaneWaveMode,
    source: SourceTensor | None = None,
    probe=None,
    scaled: bool = False,
) -> float:
    """Residual of ``box h = -16 pi G S`` for one plane wave.

    For a plane wave ``box h = -(eta^mn k_m k_n) h``. The residual
    ``max |box h + 16 pi G S|`` is evaluated at ``probe``; by default at an
    event where the cosine factor equals 1. ``scaled=True`` divides by
    ``|k|^2 max|e|``.
    """
    source = source or SourceTensor.vacuum()
    k = mode.wave_vector
    k_sq = float(k @ ETA @ k)
    cos_factor = 1.0 if probe is None else math.cos(mode.phase(probe))
    box_h = -k_sq * 2.0 * mode.polarization * cos_factor
    res = float(np.max(np.abs(box_h + 16.0 * math.pi * GRAVITATIONAL_CONSTANT * source.s_mn)))
    if scaled:
        scale = float(k @ k) * float(np.max(np.abs(mode.polarization)))
        return res / scale if scale > 0 else 0.0
    return res


def residual_summary(ensemble: BackgroundEnsemble) -> dict:
    """Maximum scaled gauge and vacuum field-equation residuals over all modes."""
    gauge = max((harmonic_gauge_residual(m, scaled=True) for m in ensemble.modes), default=0.0)
    field_eq = max((field_equation_residual(m, scaled=True) for m in ensemble.modes), default=0.0)
    return {"n_modes": len(ensemble), "max_gauge_residual": gauge, "max_field_equation_residual": field_eq}
