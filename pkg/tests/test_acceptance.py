"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or as a script.
"""

import time

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import record_criterion
from niplab import (
    LatticeModel,
    MetricDegenerated,
    TimeGrid,
    Trajectory,
    biorthogonal_eig,
    build_fv_generator,
    build_lattice_d,
    check_quasi_hermiticity,
    kg_generator,
    kg_residual,
    kg_scenario,
    metric_flow_residual_g,
    metric_from_basis,
    plane_wave_mode,
    propagate_basis,
    propagate_bra,
    propagate_ket,
    stationary_kg_metric,
)
from niplab.evolution import SampledOperator
from niplab.scenarios import benchmark_metric_routes, cross_check, load_config, run
from niplab.scenarios.runner import write_bench


def check(number, passed, detail):
    record_criterion(number, passed, detail)
    assert passed, detail


@pytest.fixture(scope="module")
def toy():
    cfg = load_config("toy2x2_driven")
    return cfg, cfg.model.build()


@pytest.fixture(scope="module")
def toy_run(toy):
    cfg, _ = toy
    start = time.perf_counter()
    report = run(cfg)
    return report, time.perf_counter() - start


def test_criterion_01_overlap_conservation(toy):
    cfg, g_fn = toy
    basis = biorthogonal_eig(np.array(g_fn(0.0))).basis()
    theta0 = metric_from_basis(basis.bras)
    psi0 = basis.kets.sum(axis=1)
    psi0 = psi0 / np.linalg.norm(psi0)
    g_fn = cfg.model.build()  # fresh cache for a fair timing
    start = time.perf_counter()
    kets = propagate_ket(g_fn, psi0, cfg.grid)["psi"]
    bras = propagate_bra(g_fn, theta0 @ psi0, cfg.grid)["psi_theta"]
    elapsed = time.perf_counter() - start
    ov = np.einsum("ki,ki->k", bras.conj(), kets)
    drift = np.max(np.abs(ov - ov[0])) / abs(ov[0])
    check(1, drift <= 1e-9 and elapsed < 1.0,
          f"overlap drift {drift:.2e}/|initial| (<= 1e-9), ket+bra propagation {elapsed:.2f} s (< 1 s)")


def _basis_metric_residual(g_fn, dt):
    """Max metric_flow_residual_g of the basis-built metric, stencil spacing = dt."""
    basis = biorthogonal_eig(np.array(g_fn(0.0))).basis()
    traj = propagate_basis(g_fn, basis, TimeGrid(0.0, 5.0, dt, 1))
    thetas = np.array([metric_from_basis(b) for b in traj["bras"]])
    theta_fn = SampledOperator(traj.times, thetas)
    return max(
        metric_flow_residual_g(theta_fn, g_fn, traj.times[i], dt)
        for i in range(2, len(traj.times) - 2)
    )


def test_criterion_02_basis_metric_flow(toy):
    cfg, _ = toy
    start = time.perf_counter()
    fine = _basis_metric_residual(cfg.model.build(), 1e-3)
    coarse = _basis_metric_residual(cfg.model.build(), 0.025)
    half = _basis_metric_residual(cfg.model.build(), 0.0125)
    elapsed = time.perf_counter() - start
    ratio = coarse / half
    check(2, fine <= 1e-6 and 14 <= ratio <= 18 and elapsed < 5.0,
          f"residual {fine:.2e} at dt=1e-3 (<= 1e-6), ratio {ratio:.2f} for dt 0.025->0.0125 "
          f"(in [14, 18]), {elapsed:.2f} s (< 5 s)")


def test_criterion_03_h_tilde_identity(toy_run):
    report, elapsed = toy_run
    value = report.checks["h_tilde"].value
    check(3, value <= 1e-6 and elapsed < 5.0, f"||G + Sigma - H||/||H|| = {value:.2e} (<= 1e-6), {elapsed:.2f} s (< 5 s)")


def test_criterion_04_cross_picture():
    cfg = load_config("cross_diag_exp")
    start = time.perf_counter()
    report = cross_check(cfg)
    elapsed = time.perf_counter() - start
    dev = report.checks["deviation"].value
    check(4, dev <= 1e-7 and elapsed < 2.0, f"max deviation {dev:.2e} (<= 1e-7), {elapsed:.2f} s (< 2 s)")


def test_criterion_05_route_equivalence(tmp_path):
    start = time.perf_counter()
    rows = benchmark_metric_routes(load_config("bench_chain"), [2, 4, 8, 16])
    write_bench(rows, tmp_path / "bench.csv")
    elapsed = time.perf_counter() - start
    worst = max(r.max_deviation for r in rows)
    table = ", ".join(f"N={r.n} {r.route} {r.per_step * 1e6:.0f} us/step" for r in rows)
    check(5, worst <= 1e-6 and (tmp_path / "bench.csv").exists() and elapsed < 30.0,
          f"max route deviation {worst:.2e} (<= 1e-6), {elapsed:.2f} s (< 30 s); {table}")


def test_criterion_06_stationary_anchor():
    start = time.perf_counter()
    model = LatticeModel(16, 1.0, lambda x, t: np.full_like(x, 0.8))
    d = build_lattice_d(model, 0.0)
    h = build_fv_generator(d)
    qh = check_quasi_hermiticity(h, stationary_kg_metric(d))
    lam = np.linalg.eigvalsh(d)
    expected = np.sort(np.r_[-np.sqrt(lam), np.sqrt(lam)])
    ev = biorthogonal_eig(h).eigenvalues
    err = max(np.max(np.abs(ev.real - expected)), np.max(np.abs(ev.imag)))
    elapsed = time.perf_counter() - start
    check(6, qh <= 1e-12 and err <= 1e-9 and elapsed < 1.0,
          f"quasi-Hermiticity {qh:.2e} (<= 1e-12), eigenvalue error {err:.2e} (<= 1e-9), {elapsed:.2f} s (< 1 s)")


def test_criterion_07_kg_dynamics():
    cfg = load_config("kg_plane_wave")
    model = cfg.model.lattice()
    start = time.perf_counter()
    state, _ = plane_wave_mode(model, 1)
    traj = propagate_ket(kg_generator(model), state.vector, cfg.grid)
    spacing = cfg.grid.dt * cfg.grid.sample_stride
    residuals = {}
    for k in (4, 2, 1):
        sub = Trajectory(traj.grid, traj.times[::k], {"psi": traj["psi"][::k]}, {})
        residuals[k * spacing] = kg_residual(sub, model)
    elapsed = time.perf_counter() - start
    r = list(residuals.values())
    ratios = (r[0] / r[1], r[1] / r[2])
    at_target = residuals[spacing]
    ok = abs(spacing - 1e-2) < 1e-12 and at_target <= 1e-4 and all(3.5 <= q <= 4.5 for q in ratios)
    check(7, ok and elapsed < 10.0,
          f"kg_residual {at_target:.2e} at spacing 1e-2 (<= 1e-4), halving ratios "
          f"{ratios[0]:.2f}, {ratios[1]:.2f} (O(spacing^2): in [3.5, 4.5]), {elapsed:.2f} s (< 10 s)")


def test_criterion_08_kg_unitarity():
    cfg = load_config("kg_driven")
    start = time.perf_counter()
    report = run(cfg)
    elapsed = time.perf_counter() - start
    ov = report.checks["overlap_drift"].value
    om = report.checks["omega_flow"].value
    check(8, ov <= 1e-8 and om <= 1e-7 and elapsed < 30.0,
          f"overlap drift {ov:.2e} (<= 1e-8), ||Omega^+ Omega - Theta||/||Theta|| {om:.2e} (<= 1e-7), "
          f"{elapsed:.2f} s (< 30 s)")


def test_criterion_09_isospectral(toy_run):
    report, _ = toy_run
    q = report.checks["q_eigen_drift"].value
    h = report.checks["h_eigen_drift"].value
    forms = report.checks["heisenberg_forms"].value
    check(9, max(q, h, forms) <= 1e-8,
          f"Q eigen drift {q:.2e}, H eigen drift {h:.2e}, Sigma-form vs G-form {forms:.2e} (all <= 1e-8)")


def test_criterion_10_tachyonic_breakdown():
    cfg = load_config("kg_tachyonic")
    model = cfg.model.lattice()
    lam = lambda t: np.linalg.eigvalsh(build_lattice_d(model, t))[0]  # noqa: E731
    crossing = brentq(lam, cfg.grid.t_start, 1.5 * np.pi, xtol=1e-12)
    state, _ = plane_wave_mode(model, 1)
    raised_at = None
    try:
        kg_scenario(model, state, cfg.grid)
    except MetricDegenerated as exc:
        raised_at = exc.t
    gap = float("inf") if raised_at is None else abs(raised_at - crossing)
    check(10, gap <= cfg.grid.dt,
          f"MetricDegenerated at t={raised_at}, eigenvalue crossing at t={crossing:.6f}, "
          f"gap {gap:.2e} (<= dt = {cfg.grid.dt:g})")


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
