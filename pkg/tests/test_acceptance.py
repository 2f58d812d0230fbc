"""Acceptance criteria AC1 to AC10, one recorded verdict per criterion.

Run with pytest (the verdict lines are printed in the terminal summary) or
directly with ``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from blowuplab.cli_io import decode_snapshot, encode_snapshot, parse_config, run_scenario
from blowuplab.core import InitialData, ProblemSpec, make_grid
from blowuplab.diagnostics import (
    build_series,
    classify_blowup_type,
    concentration_integral,
    epsilon_regularity_check,
    homogeneous_concentration,
    locate_blowup_points,
    rescale_run,
    w_frame_integral,
)
from blowuplab.physical_solver import BLOWUP, StepControl, solve_until_blowup
from blowuplab.similarity import (
    RhoQuadrature,
    contraction_sweep,
    delayed_smoothing_scan,
    mehler_apply,
    random_band_limited,
)
from blowuplab.special_solutions import (
    DECAYING,
    BubbleSpec,
    bubble_critical_norm,
    bubble_norm_oracle,
    bubble_residual,
    profile_critical_norm_growth,
    search_profiles,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# tolerances and limits, as stated by the criteria
AC1_REL, AC1_T, AC1_SUP, AC1_SECONDS = 1e-4, 1e-4, 1e6, 5.0
AC2_REL, AC_RUN_SECONDS = 0.05, 60.0
AC3_REL, AC3_K, AC3_IDENTITY = 0.10, 3.0, 1e-6
AC4_REL, AC4_CENTER = 0.15, 2.0
AC5_MARGIN, AC5_FUNCTIONS, AC5_Q, AC5_S, AC5_B = -1e-6, 100, (1.0, 2.0, 4.0), (0.1, 1.0, 5.0), 6.0
AC6_ORACLE, AC6_LAW = 1e-8, 1e-6
AC7_TAIL, AC7_CORR = 0.10, 0.99
AC8_REL, AC8_RESIDUAL, AC8_LAMBDAS = 1e-6, 1e-5, (0.1, 1.0, 10.0)
AC9_REL, AC9_LAMBDAS = 1e-6, (0.5, 2.0)

KAPPA = 2 ** -0.5


def last_decade(series):
    tau = series.tau
    return tau <= 10.0 * tau.min()


def test_ac1_ode_oracle():
    spec = ProblemSpec(N=1, p=2.0, R=1.0, boundary="homogeneous",
                       initial=InitialData("constant", {"c": 1.0}))
    start = time.perf_counter()
    run = solve_until_blowup(spec, StepControl(u_max=AC1_SUP, ode_safety=0.005), node_count=3)
    elapsed = time.perf_counter() - start
    t, sup = run.sup_series()
    err = float(np.max(np.abs(sup * (1.0 - t) - 1.0)))
    dT = abs(run.T_hat - 1.0)
    ok = (run.termination == BLOWUP and sup[-1] >= AC1_SUP and err <= AC1_REL
          and dT <= AC1_T and elapsed < AC1_SECONDS)
    record("AC1 ODE oracle", ok,
           f"rel err {err:.2e} (<= {AC1_REL:g}), |T_hat-1| {dT:.2e} (<= {AC1_T:g}), "
           f"{elapsed:.2f} s (< {AC1_SECONDS:g} s)")
    assert ok


def test_ac2_type_one_constants(blowup_run):
    start = time.perf_counter()
    series = build_series(blowup_run)
    report = classify_blowup_type(series)
    elapsed = blowup_run.meta["wall_time"] + time.perf_counter() - start
    ratio = series.m[last_decade(series)] / KAPPA
    dev = float(np.max(np.abs(ratio - 1.0)))
    ok = report.verdict == "type-I" and dev <= AC2_REL and elapsed < AC_RUN_SECONDS
    record("AC2 type-I constants", ok,
           f"{report.verdict}, m/kappa in [{ratio.min():.4f}, {ratio.max():.4f}] "
           f"(within {AC2_REL:.0%}), {elapsed:.1f} s (< {AC_RUN_SECONDS:g} s)")
    assert ok


def test_ac3_concentration(blowup_run):
    T = blowup_run.T_hat
    points = locate_blowup_points(blowup_run)
    a = points.centers[0]
    series = build_series(blowup_run, parabolas=[(a, AC3_K)])
    win = last_decade(series)
    vals = series.concentration[(a, AC3_K)][win]
    target = homogeneous_concentration(1, 3.0, AC3_K)
    dev = float(np.max(np.abs(vals / target - 1.0)))
    eta = float(vals.min())
    states = [s for s in blowup_run.trace if s.time < T][-30:]
    identity = max(
        abs(w_frame_integral(s, a, AC3_K, T) / concentration_integral(s, a, AC3_K, T) - 1.0)
        for s in states
    )
    ok = dev <= AC3_REL and eta > 0 and identity <= AC3_IDENTITY
    record("AC3 concentration", ok,
           f"a = {a:g}, max dev {dev:.3f} (<= {AC3_REL:g}), eta {eta:.3f} > 0, "
           f"identity {identity:.1e} (<= {AC3_IDENTITY:g})")
    assert ok


def test_ac4_decay_off_blowup(blowup_run):
    report = epsilon_regularity_check(blowup_run, AC4_CENTER, q=1.0,
                                      band=(1 - AC4_REL, 1 + AC4_REL))
    ok = report.passes
    record("AC4 decay away from blow-up", ok,
           f"a = {AC4_CENTER:g}, L1_rho rate {report.rate_hat:.4f} vs beta 0.5 "
           f"(within {AC4_REL:.0%})")
    assert ok


def test_ac5_contraction_and_delayed_smoothing():
    start = time.perf_counter()
    rng = np.random.default_rng(20240601)
    phis = [random_band_limited(rng) for _ in range(AC5_FUNCTIONS)]
    reports = contraction_sweep(phis, AC5_S, AC5_Q, RhoQuadrature(N=1, nodes=1201), 1e-6)
    margin = min(r.margin for r in reports)
    centers = np.linspace(-AC5_B, AC5_B, 25)
    s_values = (0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)
    scan = delayed_smoothing_scan(2.0, centers, s_values, RhoQuadrature(N=1, Y_max=12.0, nodes=4001))
    b, ratio = scan.ratios(0.01)
    half = b >= 0
    monotone = bool(np.all(np.diff(ratio[half][np.argsort(b[half])]) > 0))
    bounded_after = scan.s_star is not None and all(
        scan.bounded[s] for s in s_values if s >= scan.s_star)
    elapsed = time.perf_counter() - start
    ok = (len(reports) == 900 and margin >= AC5_MARGIN and monotone and bounded_after
          and elapsed < AC_RUN_SECONDS)
    record("AC5 contraction and delayed smoothing", ok,
           f"{len(reports)} cases, min margin {margin:.1e} (>= {AC5_MARGIN:g}), "
           f"s* = {scan.s_star}, monotone at s=0.01: {monotone}, {elapsed:.1f} s")
    assert ok


def test_ac6_semigroup_exactness():
    quad = RhoQuadrature(N=1, rule="gauss-hermite")
    y = np.linspace(-6.0, 6.0, 241)
    err = 0.0
    for s in (0.01, 0.1, 1.0, 5.0):
        e = math.exp(-s / 2.0)
        err = max(err,
                  float(np.max(np.abs(mehler_apply(np.ones_like, s, quad, y) - 1.0))),
                  float(np.max(np.abs(mehler_apply(lambda z: z, s, quad, y) - e * y))),
                  float(np.max(np.abs(mehler_apply(lambda z: z * z - 2, s, quad, y)
                                      - e * e * (y * y - 2)))))
    rng = np.random.default_rng(7)
    law = 0.0
    for _ in range(5):
        f = random_band_limited(rng)
        s1, s2 = rng.uniform(0.05, 2.0, 2)
        inner = lambda z, f=f, s1=s1: mehler_apply(f, s1, quad, z)  # noqa: E731
        law = max(law, float(np.max(np.abs(mehler_apply(inner, s2, quad, y)
                                           - mehler_apply(f, s1 + s2, quad, y)))))
    ok = err <= AC6_ORACLE and law <= AC6_LAW
    record("AC6 semigroup exactness", ok,
           f"oracle err {err:.1e} (<= {AC6_ORACLE:g}), semigroup law {law:.1e} (<= {AC6_LAW:g})")
    assert ok


def test_ac7_supercritical_profile():
    start = time.perf_counter()
    kappa = (1.0 / 6.0) ** (1.0 / 6.0)
    found = search_profiles(3, 7.0, alpha_range=(kappa + 0.01, 3.0))
    prof = found[0]
    slope, corr = profile_critical_norm_growth(prof)
    sobolev = search_profiles(3, 5.0)
    elapsed = time.perf_counter() - start
    tail_dev = abs(prof.tail_exponent / (-1.0 / 3.0) - 1.0)
    ok = (prof.classification == DECAYING and tail_dev <= AC7_TAIL and corr > AC7_CORR
          and slope > 0 and not sobolev and elapsed < AC_RUN_SECONDS)
    record("AC7 supercritical profile", ok,
           f"alpha* {prof.alpha:.10f}, tail {prof.tail_exponent:.4f} vs -1/3 "
           f"(within {AC7_TAIL:.0%}), ladder slope {slope:.3f} corr {corr:.5f} (> {AC7_CORR}), "
           f"p=5 candidates {len(sobolev)}, {elapsed:.1f} s")
    assert ok


def test_ac8_bubble():
    exact = 64.0 * math.pi**2 / 6.0
    oracle_err = abs(bubble_norm_oracle(4) / exact - 1.0)
    norms = [bubble_critical_norm(BubbleSpec(4, lam)) for lam in AC8_LAMBDAS]
    worst = max(abs(v / exact - 1.0) for v in norms)
    spread = (max(norms) - min(norms)) / exact
    residual = bubble_residual(BubbleSpec(4), make_grid("uniform-radial", 10.0, 10001, 4))
    ok = oracle_err <= AC8_REL and worst <= AC8_REL and spread <= AC8_REL and residual <= AC8_RESIDUAL
    record("AC8 bubble", ok,
           f"integral {norms[1]:.10f} vs {exact:.10f} (rel {worst:.1e}), lambda spread "
           f"{spread:.1e} (<= {AC8_REL:g}), residual {residual:.1e} (<= {AC8_RESIDUAL:g})")
    assert ok


def test_ac9_scaling_invariance(blowup_run):
    base = build_series(blowup_run, balls=[(0.0, 0.5)])
    verdict = classify_blowup_type(base).verdict
    worst = 0.0
    same = True
    for lam in AC9_LAMBDAS:
        scaled = rescale_run(blowup_run, lam)
        series = build_series(scaled, balls=[(0.0, 0.5 / lam)])
        worst = max(worst,
                    float(np.max(np.abs(series.critical / base.critical - 1.0))),
                    float(np.max(np.abs(series.local[(0.0, 0.5 / lam)]
                                        / base.local[(0.0, 0.5)] - 1.0))))
        same = same and classify_blowup_type(series).verdict == verdict
    ok = worst <= AC9_REL and same
    record("AC9 scaling invariance", ok,
           f"lambda {AC9_LAMBDAS}: critical integrals rel {worst:.1e} (<= {AC9_REL:g}), "
           f"verdict {verdict} unchanged: {same}")
    assert ok


def test_ac10_round_trip_and_determinism(blowup_run, tmp_path):
    snaps = list(blowup_run.trace[::25]) + [blowup_run.final]
    exact = all(decode_snapshot(encode_snapshot(s)).values.tobytes() == s.values.tobytes()
                for s in snaps)
    outputs = []
    for name in ("a", "b"):
        cfg = parse_config((CONFIGS / "semigroup.ini").read_text(), ["semigroup.functions=3"])
        _, written = run_scenario(cfg, tmp_path / name)
        doc = json.loads(written["summary.json"].read_text())
        doc.pop("wall_time")
        csvs = {k: v.read_bytes() for k, v in written.items() if k.endswith(".csv")}
        outputs.append((csvs, doc))
    identical = outputs[0] == outputs[1]
    ok = exact and identical
    record("AC10 round-trip and determinism", ok,
           f"{len(snaps)} snapshots bit-exact: {exact}, CSV/JSON identical for equal seed: {identical}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
