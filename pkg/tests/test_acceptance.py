"""Acceptance criteria, one test each, at the stated tolerances.

Every criterion prints a single ``PASS``/``FAIL`` line (visible under
``pytest -v``). The module also runs standalone:

    python tests/test_acceptance.py
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from stochgrav.background import (
    C_LIGHT,
    BackgroundEnsemble,
    PlaneWaveMode,
    SourceTensor,
    SpectrumParams,
    field_equation_residual,
    harmonic_gauge_residual,
    metric_perturbation_at,
    sample_background,
)
from stochgrav.bell import (
    CorrelationModel,
    MeasurementSettings,
    PhaseDistribution,
    bell_observable,
    bound_check,
    correlation_analytic,
    correlation_quadrature,
    maximize_bell,
)
from stochgrav.deviation import (
    DeviationState,
    StochasticForcing,
    TidalSignal,
    analytic_oscillator,
    integrate_deviation,
    riemann_from_background,
)
from stochgrav.geometry import ComplexStateVector, decompose_inner_product, simplex_volume
from stochgrav.interference import (
    PathPhaseModel,
    SlitGeometry,
    gaussian_visibility,
    gaussian_visibility_stderr,
    single_slit_control,
    two_slit_intensity,
    visibility,
)

pytestmark = pytest.mark.acceptance

SQRT2 = math.sqrt(2.0)
STANDARD_SETTINGS = MeasurementSettings(0.0, math.pi / 2, math.pi / 4, -math.pi / 4)


def criterion_1():
    model = CorrelationModel("cosine-projection")
    analytic = bell_observable(STANDARD_SETTINGS, model).s_value
    start = time.perf_counter()
    mc = bell_observable(STANDARD_SETTINGS, model, "montecarlo", n=1_000_000, seed=0)
    elapsed = time.perf_counter() - start
    ok = abs(analytic - SQRT2) < 1e-9 and abs(mc.s_value - SQRT2) < 3 * mc.std_error and elapsed < 5.0
    return ok, f"analytic S={analytic:.12f}; MC S={mc.s_value:.6f}+-{mc.std_error:.1e} in {elapsed:.2f}s"


def criterion_2():
    model = CorrelationModel("deterministic-sign")
    start = time.perf_counter()
    _, s_max = maximize_bell(model)
    rep = bound_check(model, 10_000, seed=0)
    elapsed = time.perf_counter() - start
    ok = abs(s_max - 1.0) <= 1e-6 and rep.max_s <= 1.0 + 1e-9 and elapsed < 10.0
    return ok, f"max S={s_max:.9f}; max over 1e4 random settings={rep.max_s:.9f} in {elapsed:.2f}s"


def criterion_3():
    rep = bound_check(CorrelationModel("cosine-projection"), 10_000, seed=0)
    return rep.max_s <= SQRT2 + 1e-9, f"max over 1e4 random settings={rep.max_s:.12f} (bound {SQRT2:.12f})"


def criterion_4():
    thetas = np.linspace(-math.pi, math.pi, 100)
    worst = 0.0
    for rho in (0.5, 1.0, 2.0, 3.7):
        dist = PhaseDistribution(rho_const=rho)
        for t in thetas:
            target = 0.5 * rho * math.cos(t)
            worst = max(worst, abs(correlation_analytic(t, dist) - target), abs(correlation_quadrature(t, dist) - target))
    worst_unit = max(abs(correlation_analytic(t) - math.cos(t)) for t in thetas)
    return worst < 1e-10 and worst_unit < 1e-10, f"max |M - rho/2 cos| = {worst:.1e}; rho=2 vs cos: {worst_unit:.1e}"


def _oscillator_error(steps_per_period, periods=10):
    r0 = 1.0 / C_LIGHT**2
    period = 2 * math.pi / (C_LIGHT * math.sqrt(r0))
    traj = integrate_deviation(
        TidalSignal.constant(r0),
        StochasticForcing(),
        DeviationState(1.0, 0.0),
        period / steps_per_period,
        periods * steps_per_period,
    )
    return float(np.max(np.abs(traj.ell - analytic_oscillator(r0, 1.0, traj.tau))))


def criterion_5():
    start = time.perf_counter()
    err = _oscillator_error(200)
    err_half = _oscillator_error(400)
    elapsed = time.perf_counter() - start
    order = math.log2(err / err_half)
    ok = err < 1e-8 and abs(order - 4.0) <= 0.3 and elapsed < 1.0
    return ok, f"max relative error={err:.3e} (limit 1e-8); order={order:.3f}; {elapsed:.2f}s"


def criterion_6():
    start = time.perf_counter()
    ens = sample_background(1000, 0, SpectrumParams(1.0, 100.0, rms=1e-6))
    gauge = max(harmonic_gauge_residual(m, scaled=True) for m in ens.modes)
    field = max(field_equation_residual(m, SourceTensor.vacuum(), scaled=True) for m in ens.modes)
    # off-shell wave: k = (2, 0, 0, -1) so k.k = 4 - 1 = 3
    a = 1e-3
    e = np.zeros((4, 4))
    e[1, 1], e[2, 2] = a, -a
    off = PlaneWaveMode(e, [2.0, 0.0, 0.0, -1.0])
    predicted = 3.0 * 2.0 * a
    got = field_equation_residual(off, SourceTensor.vacuum())
    elapsed = time.perf_counter() - start
    ok = gauge < 1e-10 and field < 1e-10 and abs(got - predicted) <= 0.01 * predicted and elapsed < 5.0
    return ok, f"gauge={gauge:.1e} field={field:.1e}; off-shell {got:.6e} vs {predicted:.6e}; {elapsed:.2f}s"


def _fd_riemann(mode, t, h):
    def h11(s):
        return metric_perturbation_at(mode, np.array([C_LIGHT * s, 0.0, 0.0, 0.0]))[1, 1]

    d2 = (-h11(t + 2 * h) + 16 * h11(t + h) - 30 * h11(t) + 16 * h11(t - h) - h11(t - 2 * h)) / (12 * h * h)
    return -d2 / (2 * C_LIGHT**2)


def criterion_7():
    ens = sample_background(100, 7, SpectrumParams(1.0, 100.0, rms=1e-4))
    rng = np.random.default_rng(7)
    worst = 0.0
    for mode in ens.modes:
        t = rng.uniform(0.0, 1.0)
        exact = riemann_from_background(BackgroundEnsemble((mode,), 0, ens.spectrum), t)
        f = mode.angular_frequency / (2 * math.pi)
        scale = max(abs(exact), mode.wave_vector[0] ** 2 * abs(mode.polarization[1, 1]))
        worst = max(worst, abs(exact - _fd_riemann(mode, t, 1e-3 / f)) / scale)
    return worst < 1e-6, f"max relative deviation from finite differences={worst:.1e}"


def criterion_8():
    geom = SlitGeometry()
    start = time.perf_counter()
    v0 = visibility(two_slit_intensity(geom, PathPhaseModel(0.0), 10, seed=0), geom.fringe_period)
    parts = [f"V(0)={v0:.12f}"]
    ok = abs(v0 - 1.0) <= 1e-9
    n = 100_000
    for sigma in (0.5, 1.0, 2.0):
        v = visibility(two_slit_intensity(geom, PathPhaseModel(sigma), n, seed=1), geom.fringe_period)
        se = gaussian_visibility_stderr(sigma, n)
        ok &= abs(v - gaussian_visibility(sigma)) < 3 * se
        parts.append(f"V({sigma})={v:.4f} vs {gaussian_visibility(sigma):.4f}+-{se:.1e}")
    single = single_slit_control(geom, 1).intensity[:-1]
    spec = np.abs(np.fft.rfft(single))
    k = int(round(2 * geom.screen_half_width / geom.fringe_period))
    ratio = spec[k] / spec[0]
    ok &= ratio < 1e-10
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30.0
    parts.append(f"single-slit fringe/DC={ratio:.1e}; {elapsed:.2f}s")
    return bool(ok), "; ".join(parts)


def criterion_9():
    rng = np.random.default_rng(9)
    worst, sym_ok = 0.0, True
    for _ in range(1000):
        a = ComplexStateVector(rng.standard_normal(6), rng.standard_normal(6))
        b = ComplexStateVector(rng.standard_normal(6), rng.standard_normal(6))
        ref = sum(complex(p, -q) * complex(r, s) for p, q, r, s in zip(a.u, a.v, b.u, b.v))
        ab, ba = decompose_inner_product(a, b), decompose_inner_product(b, a)
        worst = max(worst, abs(ab.reconstruct() - ref) / abs(ref))
        sym_ok &= ab.g_part == ba.g_part and ab.omega_part == -ba.omega_part
    unit = simplex_volume([[1.0, 0.0], [0.0, 1.0]])
    singular = simplex_volume([[1.0, 1.0], [2.0, 2.0]])
    ok = worst < 1e-12 and sym_ok and unit == 0.5 and singular == 0.0
    return bool(ok), f"max reconstruction error={worst:.1e}; symmetry={sym_ok}; V=({unit}, {singular})"


REPRO_CASES = {
    "background": ["n_modes=50"],
    "deviate": ["r_const=1.1126500560536185e-17", "periods=3"],
    "twoslit": ["sigma=1.0", "n_realizations=20001"],
    "bell": ["method=montecarlo", "n=300001"],
    "geometry": [],
    "report": ["n_realizations=20000", "mc_samples=100000", "bound_settings=1000"],
}


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "stochgrav.cli", *args], capture_output=True, cwd=cwd, check=False)


def criterion_10(tmp_dir):
    bad = []
    for cmd, extra in REPRO_CASES.items():
        blobs = []
        for i, workers in enumerate((1, 1, 4)):
            out = tmp_dir / f"{cmd}-{i}.out"
            proc = _cli([cmd, "--seed", "3", "--workers", str(workers), "--output", str(out), *extra], tmp_dir)
            if proc.returncode != 0:
                bad.append(f"{cmd} exit {proc.returncode}")
                break
            side = out.with_suffix(".run.json")
            blobs.append((out.read_bytes(), side.read_bytes() if side.exists() else b""))
        if len(blobs) == 3 and not (blobs[0] == blobs[1] == blobs[2]):
            bad.append(cmd)
    return not bad, "all subcommands byte-identical across reruns and --workers 1/4" if not bad else f"differs: {bad}"


def criterion_11(tmp_dir):
    start = time.perf_counter()
    proc = _cli(["report"], tmp_dir)
    elapsed = time.perf_counter() - start
    out = proc.stdout.decode()
    ok = proc.returncode == 0 and "FAIL" not in out and elapsed < 120.0
    tail = out.strip().splitlines()[-1] if out.strip() else proc.stderr.decode().strip()
    return ok, f"exit {proc.returncode}; {tail}; {elapsed:.1f}s"


CRITERIA = {
    1: ("Bell value sqrt(2)", criterion_1),
    2: ("classical bound", criterion_2),
    3: ("cosine-projection bound", criterion_3),
    4: ("correlation law", criterion_4),
    5: ("oscillator accuracy and order", criterion_5),
    6: ("plane-wave validity", criterion_6),
    7: ("Riemann consistency", criterion_7),
    8: ("interference coherence", criterion_8),
    9: ("state-space geometry", criterion_9),
    10: ("reproducibility", criterion_10),
    11: ("end-to-end report", criterion_11),
}


def evaluate(number, tmp_dir=None):
    _, fn = CRITERIA[number]
    return fn(tmp_dir) if number in (10, 11) else fn()


def format_line(number, ok, detail):
    return f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {CRITERIA[number][0]}: {detail}"


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, tmp_path, capsys):
    ok, detail = evaluate(number, tmp_path)
    with capsys.disabled():
        print("\n" + format_line(number, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for num in sorted(CRITERIA):
            passed, info = evaluate(num, Path(tmp))
            failures += not passed
            print(format_line(num, passed, info), flush=True)
    sys.exit(1 if failures else 0)
