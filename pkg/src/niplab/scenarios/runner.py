"""Run orchestration and the metric-route benchmark."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NipError
from ..evolution import nip_pipeline, propagate_basis
from ..klein_gordon import FvState, kg_generator, kg_residual, kg_scenario, plane_wave_mode
from ..metric import dyson_factorize, hamiltonian_from_spectral, metric_from_basis, solve_metric_ode
from ..operator_core import BiorthogonalBasis, biorthogonal_eig, fro
from ..oracle import cross_picture_trajectory
from ..timeline import Trajectory
from .config import (
    ChainModel,
    CrossModel,
    KgModel,
    MatrixModel,
    ScenarioConfig,
    _known_checks,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_GAUGES = {"identity_v": "identity", "sqrt_theta": "sqrt"}


@dataclass(frozen=True)
class CheckResult:
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


@dataclass
class RunReport:
    """Per-sample table plus one summary entry per enabled check."""

    name: str
    kind: str
    columns: list[str]
    rows: list[list[float]]
    checks: dict[str, CheckResult] = field(default_factory=dict)
    error: str | None = None
    error_time: float | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def status(self) -> int:
        if self.error is not None:
            return EXIT_NUMERICAL
        return EXIT_OK if all(c.passed for c in self.checks.values()) else EXIT_CHECK_FAILED

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "status": self.status,
            "error": self.error,
            "error_time": self.error_time,
            "checks": {
                k: {"max": _json_float(c.value), "tolerance": c.tolerance, "passed": c.passed}
                for k, c in self.checks.items()
            },
        }


def _json_float(x: float):
    return x if np.isfinite(x) else str(x)


def _enabled_checks(config: ScenarioConfig, strict: bool) -> dict[str, float]:
    if strict:
        return {**_known_checks(config.model), **config.checks}
    return dict(config.checks)


def _initial_basis(config: ScenarioConfig, g0: np.ndarray) -> BiorthogonalBasis:
    choice = config.initial.basis
    if choice == "eigenbasis":
        return biorthogonal_eig(g0).basis(config.energies)
    kets = choice["kets"]
    bras = np.linalg.inv(kets).conj().T
    return BiorthogonalBasis(kets, bras, np.asarray(config.energies, dtype=float))


def _initial_observable(config: ScenarioConfig, basis0: BiorthogonalBasis) -> np.ndarray:
    obs = config.initial.observable
    if isinstance(obs, str):
        return hamiltonian_from_spectral(basis0)
    omega0 = dyson_factorize(metric_from_basis(basis0.bras), _GAUGES[config.gauge]).omega
    return np.linalg.solve(omega0, obs @ omega0)


def _cplx_cols(prefix: str, values: np.ndarray, cols: dict[str, np.ndarray]) -> None:
    values = np.asarray(values)
    if values.ndim == 1:
        cols[f"{prefix}_re"] = values.real
        cols[f"{prefix}_im"] = values.imag
    else:
        for j in range(values.shape[1]):
            cols[f"{prefix}{j}_re"] = values[:, j].real
            cols[f"{prefix}{j}_im"] = values[:, j].imag


_RESIDUAL_COLUMNS = (
    "gram_deviation",
    "completeness_deviation",
    "quasi_hermiticity_h",
    "quasi_hermiticity_q",
    "metric_flow_sigma",
    "metric_flow_g",
    "h_tilde",
    "omega_flow",
    "heisenberg_forms",
    "min_eig_theta",
)


def _pipeline_table(traj: Trajectory) -> tuple[list[str], list[list[float]]]:
    cols: dict[str, np.ndarray] = {"t": traj.times}
    _cplx_cols("expectation_raw", traj["expectation_raw"], cols)
    _cplx_cols("expectation_normalized", traj["expectation_normalized"], cols)
    _cplx_cols("overlap", traj["overlap"], cols)
    for name in _RESIDUAL_COLUMNS:
        cols[name] = traj.residuals[name]
    for name in ("krein_drift", "theta_drift"):
        if name in traj.residuals:
            cols[name] = traj.residuals[name]
    _cplx_cols("E", traj["h_eigenvalues"], cols)
    names = list(cols)
    data = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    return names, data.tolist()


def _pipeline_check_value(traj: Trajectory, name: str) -> float:
    if name == "overlap_drift":
        ov = traj["overlap"]
        return float(np.max(np.abs(ov - ov[0])) / abs(ov[0]))
    return traj.max_residual(name)


def run(config: ScenarioConfig, strict: bool = False) -> RunReport:
    """Execute a scenario and evaluate its enabled checks.

    Numerical failures (metric degeneration, basis breakdown, ...) do not
    raise; they are recorded in the report together with the failure time.
    """
    if isinstance(config.model, CrossModel):
        return cross_check(config, strict)
    checks = _enabled_checks(config, strict)
    try:
        if isinstance(config.model, KgModel):
            traj, extra = _run_kg(config)
        else:
            traj, extra = _run_matrix(config), {}
    except ConfigError:
        raise
    except NipError as exc:
        return RunReport(
            config.name, config.kind, [], [], {},
            error=f"{type(exc).__name__}: {exc}", error_time=getattr(exc, "t", None),
        )
    columns, rows = _pipeline_table(traj)
    results = {}
    for name, tol in checks.items():
        value = extra[name] if name in extra else _pipeline_check_value(traj, name)
        results[name] = CheckResult(float(value), float(tol))
    return RunReport(config.name, config.kind, columns, rows, results, trajectory=traj)


def _run_matrix(config: ScenarioConfig) -> Trajectory:
    g_fn = config.model.build()
    t0 = config.grid.t_start
    basis0 = _initial_basis(config, np.array(g_fn(t0)))
    q0 = _initial_observable(config, basis0)
    psi0 = config.initial.state
    return nip_pipeline(g_fn, basis0, q0, config.grid, psi0=psi0, gauge=_GAUGES[config.gauge])


def _run_kg(config: ScenarioConfig) -> tuple[Trajectory, dict[str, float]]:
    model = config.model.lattice()
    state = config.initial.state
    if state is None:
        state = {"plane_wave": 1}
    if isinstance(state, dict):
        initial, _ = plane_wave_mode(model, state["plane_wave"], config.grid.t_start)
    else:
        initial = FvState.from_vector(state)
    obs = config.initial.observable
    q0 = None
    if not isinstance(obs, str):
        basis0 = biorthogonal_eig(np.array(kg_generator(model)(config.grid.t_start))).basis(config.energies)
        q0 = _initial_observable(config, basis0)
    traj = kg_scenario(
        model, initial, config.grid, energies=config.energies, q0=q0, gauge=_GAUGES[config.gauge]
    )
    extra = {}
    if len(traj.times) >= 5:
        extra["kg_residual"] = kg_residual(traj, model)
    else:
        extra["kg_residual"] = float("nan")
    return traj, extra


def cross_check(config: ScenarioConfig, strict: bool = False) -> RunReport:
    """Compare predictions of the textbook and non-Hermitian pictures."""
    if not isinstance(config.model, CrossModel):
        raise ConfigError("model.kind", "cross_check requires a 'cross' model")
    omega_fn, h_fn = config.model.build()
    n = omega_fn.dim
    psi0 = config.initial.state
    if psi0 is None:
        psi0 = np.eye(n, dtype=complex)[0]
    q_t = config.initial.observable
    if isinstance(q_t, str):
        q_t = np.array(h_fn(config.grid.t_start))
    checks = _enabled_checks(config, strict) or {"deviation": 1e-7}
    try:
        traj = cross_picture_trajectory(omega_fn, h_fn, psi0, q_t, config.grid)
    except ConfigError:
        raise
    except NipError as exc:
        return RunReport(
            config.name, "cross", [], [], {},
            error=f"{type(exc).__name__}: {exc}", error_time=getattr(exc, "t", None),
        )
    cols: dict[str, np.ndarray] = {"t": traj.times}
    _cplx_cols("expectation_nip", traj["expectation_nip"], cols)
    cols["expectation_textbook"] = traj["expectation_textbook"]
    cols["deviation"] = traj.residuals["deviation"]
    cols["textbook_norm_drift"] = traj.residuals["textbook_norm_drift"]
    names = list(cols)
    rows = np.column_stack([np.asarray(cols[k], dtype=float) for k in names]).tolist()
    results = {k: CheckResult(traj.max_residual(k), float(v)) for k, v in checks.items()}
    return RunReport(config.name, "cross", names, rows, results, trajectory=traj)


def format_float(x: float) -> str:
    """Full-precision scientific notation (17 significant digits)."""
    return f"{x:.16e}"


def write_csv(path: Path, columns: list[str], rows: list[list[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_float(x) for x in r])


def write_report(report: RunReport, out_dir: Path, prefix: str | None = None) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` and ``<prefix>.summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = prefix or report.name
    csv_path = out_dir / f"{stem}.csv"
    summary_path = out_dir / f"{stem}.summary.json"
    write_csv(csv_path, report.columns, report.rows)
    summary_path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    return csv_path, summary_path


@dataclass(frozen=True)
class BenchRow:
    n: int
    route: str
    wall_time: float
    steps: int
    max_deviation: float

    @property
    def per_step(self) -> float:
        return self.wall_time / self.steps

    @property
    def valid(self) -> bool:
        return bool(self.max_deviation < 1e-6)


BENCH_COLUMNS = ["n", "route", "wall_time_s", "per_step_s", "max_deviation", "valid"]


def _scaled_model(model, n: int):
    if isinstance(model, ChainModel):
        return replace(model, n=n)
    if isinstance(model, MatrixModel) and model.dim == n:
        return model
    raise ConfigError("model.kind", "benchmark needs a 'chain' model (or a matrix model of matching size)")


def benchmark_metric_routes(config: ScenarioConfig, dims: list[int]) -> list[BenchRow]:
    """Time the operator-ODE and basis-propagation routes to the metric.

    For each ``N`` the metric is built (a) by integrating the N^2-component
    operator flow and (b) by propagating N bras and summing their outer
    products.  The deviation between the two is recorded on both rows; a
    timing row counts as valid only if the routes agree to 1e-6.
    """
    rows: list[BenchRow] = []
    grid = config.grid
    for n in dims:
        model = _scaled_model(config.model, n)
        g0 = np.array(model.build()(grid.t_start))
        eig = biorthogonal_eig(g0)
        basis0 = BiorthogonalBasis(eig.kets, eig.bras, np.zeros(n))
        theta0 = metric_from_basis(basis0.bras)

        g_fn = model.build()
        start = time.perf_counter()
        ode = solve_metric_ode(g_fn, theta0, grid)["theta"]
        t_ode = time.perf_counter() - start

        g_fn = model.build()
        start = time.perf_counter()
        bras = propagate_basis(g_fn, basis0, grid)["bras"]
        vec = np.array([metric_from_basis(b) for b in bras])
        t_vec = time.perf_counter() - start

        dev = max(fro(a - b) / fro(b) for a, b in zip(ode, vec))
        rows.append(BenchRow(n, "operator_ode", t_ode, grid.n_steps, dev))
        rows.append(BenchRow(n, "vector_propagation", t_vec, grid.n_steps, dev))
    return rows


def write_bench(rows: list[BenchRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow([r.n, r.route, format_float(r.wall_time), format_float(r.per_step),
                        format_float(r.max_deviation), int(r.valid)])
