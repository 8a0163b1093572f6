"""Scenario configuration schema and model construction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Union

import numpy as np
import yaml

from ..errors import ConfigError
from ..klein_gordon import LatticeModel
from ..timeline import GeneratorFunction, TimeGrid
from .expressions import ExpressionError, compile_matrix

# check name -> default tolerance; used by ``--strict`` and as documentation
DEFAULT_CHECKS: dict[str, float] = {
    "overlap_drift": 1e-9,
    "gram_deviation": 1e-8,
    "completeness_deviation": 1e-8,
    "quasi_hermiticity_h": 1e-9,
    "quasi_hermiticity_q": 1e-9,
    "metric_flow_sigma": 1e-6,
    "metric_flow_g": 1e-6,
    "h_tilde": 1e-6,
    "omega_flow": 1e-7,
    "heisenberg_forms": 1e-8,
    "h_eigen_drift": 1e-8,
    "q_eigen_drift": 1e-8,
}
KG_CHECKS: dict[str, float] = {"krein_drift": 1e-9, "kg_residual": 1e-4}
CROSS_CHECKS: dict[str, float] = {"deviation": 1e-7, "textbook_norm_drift": 1e-10}


@dataclass(frozen=True)
class MatrixModel:
    """Generator given entry by entry as expressions in ``t``."""

    generator: list

    def build(self) -> GeneratorFunction:
        f, n = compile_matrix(self.generator)
        return GeneratorFunction(f, n, name="G")

    @property
    def dim(self) -> int:
        return len(self.generator)


@dataclass(frozen=True)
class ChainModel:
    """Open chain with gain/loss: ``G = -J T + i gamma(t) diag(+1, -1, ...)``.

    ``T`` is the nearest-neighbour hopping matrix and
    ``gamma(t) = gamma0 + gamma1 sin(nu t)``.  Scales to any ``n``.
    """

    n: int
    hopping: float = 1.0
    gamma0: float = 0.2
    gamma1: float = 0.1
    nu: float = 1.0

    def build(self) -> GeneratorFunction:
        n = self.n
        hop = -self.hopping * (np.eye(n, k=1) + np.eye(n, k=-1))
        signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)

        def g(t):
            return hop + np.diag(1j * (self.gamma0 + self.gamma1 * np.sin(self.nu * t)) * signs)

        return GeneratorFunction(g, n, name=f"chain{n}")

    @property
    def dim(self) -> int:
        return self.n


@dataclass(frozen=True)
class KgModel:
    n_sites: int
    dx: float
    mu0: float
    mu1: float = 0.0
    nu: float = 0.0
    profile: str = "uniform"
    gamma: float = 0.0
    boundary: str = "dirichlet"

    def lattice(self) -> LatticeModel:
        return LatticeModel.driven(
            self.n_sites, self.dx, self.mu0, self.mu1, self.nu, self.profile, self.gamma,
            boundary=self.boundary,
        )

    @property
    def dim(self) -> int:
        return 2 * self.n_sites


@dataclass(frozen=True)
class CrossModel:
    """Textbook data for the cross-picture check: ``Omega(t)``, ``h(t)``."""

    omega: list
    hamiltonian: list
    omega_dot: list | None = None

    def build(self) -> tuple[GeneratorFunction, GeneratorFunction]:
        f, n = compile_matrix(self.omega)
        d = compile_matrix(self.omega_dot)[0] if self.omega_dot is not None else None
        h, m = compile_matrix(self.hamiltonian)
        if m != n:
            raise ConfigError("model.hamiltonian", f"dimension {m} differs from omega dimension {n}")
        return GeneratorFunction(f, n, d, name="Omega"), GeneratorFunction(h, n, name="h")

    @property
    def dim(self) -> int:
        return len(self.omega)


Model = Union[MatrixModel, ChainModel, KgModel, CrossModel]


@dataclass(frozen=True)
class InitialSpec:
    basis: Any = "eigenbasis"
    state: Any = None
    observable: Any = "energy"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: Model
    grid: TimeGrid
    initial: InitialSpec = field(default_factory=InitialSpec)
    energies: tuple[float, ...] | None = None
    gauge: str = "identity_v"
    checks: dict[str, float] = field(default_factory=dict)
    prefix: str | None = None
    source: str | None = None

    @property
    def kind(self) -> str:
        return {
            MatrixModel: "matrix",
            ChainModel: "chain",
            KgModel: "kg_lattice",
            CrossModel: "cross",
        }[type(self.model)]

    def with_dt(self, dt: float) -> "ScenarioConfig":
        g = self.grid
        return replace(self, grid=_make_grid(g.t_start, g.t_end, dt, g.sample_stride))

    def with_model(self, model: Model) -> "ScenarioConfig":
        return replace(self, model=model)


def _make_grid(t_start, t_end, dt, stride) -> TimeGrid:
    return TimeGrid(float(t_start), float(t_end), float(dt), int(stride))


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
    return d[key]


def _number(value, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    return float(value)


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    extra = set(d) - allowed
    if extra:
        where = f"{path}.{sorted(extra)[0]}" if path else sorted(extra)[0]
        raise ConfigError(where, f"unknown field (allowed: {sorted(allowed)})")


def _parse_matrix(rows, path: str) -> list:
    try:
        compile_matrix(rows)
    except ExpressionError as exc:
        raise ConfigError(path, str(exc)) from None
    return rows


def _parse_model(d, path="model") -> Model:
    if not isinstance(d, dict):
        raise ConfigError(path, "must be a mapping")
    kind = _require(d, "kind", path)
    if kind in ("matrix", "toy2x2"):
        _check_keys(d, {"kind", "generator"}, path)
        rows = _parse_matrix(_require(d, "generator", path), f"{path}.generator")
        if kind == "toy2x2" and len(rows) != 2:
            raise ConfigError(f"{path}.generator", "toy2x2 requires a 2x2 matrix")
        return MatrixModel(rows)
    if kind == "chain":
        _check_keys(d, {"kind", "n", "hopping", "gamma0", "gamma1", "nu"}, path)
        n = _require(d, "n", path)
        if not isinstance(n, int) or n < 2:
            raise ConfigError(f"{path}.n", "must be an integer >= 2")
        kw = {k: _number(d[k], f"{path}.{k}") for k in ("hopping", "gamma0", "gamma1", "nu") if k in d}
        return ChainModel(n, **kw)
    if kind == "kg_lattice":
        _check_keys(d, {"kind", "n_sites", "dx", "mass_sq", "boundary"}, path)
        n = _require(d, "n_sites", path)
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{path}.n_sites", "must be a positive integer")
        dx = _number(_require(d, "dx", path), f"{path}.dx", positive=True)
        ms = _require(d, "mass_sq", path)
        mpath = f"{path}.mass_sq"
        if not isinstance(ms, dict):
            raise ConfigError(mpath, "must be a mapping with mu0, mu1, nu, profile")
        _check_keys(ms, {"mu0", "mu1", "nu", "profile", "gamma"}, mpath)
        profile = ms.get("profile", "uniform")
        if profile not in ("uniform", "gaussian", "linear"):
            raise ConfigError(f"{mpath}.profile", f"unknown profile {profile!r}")
        boundary = d.get("boundary", "dirichlet")
        if boundary not in ("dirichlet", "periodic"):
            raise ConfigError(f"{path}.boundary", f"unknown boundary {boundary!r}")
        return KgModel(
            n, dx,
            _number(_require(ms, "mu0", mpath), f"{mpath}.mu0"),
            _number(ms.get("mu1", 0.0), f"{mpath}.mu1"),
            _number(ms.get("nu", 0.0), f"{mpath}.nu"),
            profile,
            _number(ms.get("gamma", 0.0), f"{mpath}.gamma"),
            boundary,
        )
    if kind == "cross":
        _check_keys(d, {"kind", "omega", "omega_dot", "hamiltonian"}, path)
        om = _parse_matrix(_require(d, "omega", path), f"{path}.omega")
        h = _parse_matrix(_require(d, "hamiltonian", path), f"{path}.hamiltonian")
        od = d.get("omega_dot")
        if od is not None:
            _parse_matrix(od, f"{path}.omega_dot")
        return CrossModel(om, h, od)
    raise ConfigError(f"{path}.kind", f"unknown model kind {kind!r}")


def _complex_array(value, path: str, ndim: int) -> np.ndarray:
    try:
        a = np.array(
            value if ndim == 0 else _to_complex_nested(value), dtype=complex
        )
    except (TypeError, ValueError):
        raise ConfigError(path, f"cannot interpret {value!r} as numbers") from None
    if a.ndim != ndim or not np.all(np.isfinite(a)):
        raise ConfigError(path, f"expected a {ndim}-D numeric array")
    return a


def _to_complex_nested(value):
    if isinstance(value, list):
        return [_to_complex_nested(v) for v in value]
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return value


def parse_config(data: dict, source: str | None = None) -> ScenarioConfig:
    """Validate a parsed YAML mapping; raises :class:`ConfigError` with a field path."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _check_keys(data, {"name", "model", "grid", "initial", "energies", "gauge", "checks", "outputs"}, "")
    name = str(data.get("name", Path(source).stem if source else "scenario"))
    model = _parse_model(_require(data, "model", ""))
    n = model.dim

    g = _require(data, "grid", "")
    if not isinstance(g, dict):
        raise ConfigError("grid", "must be a mapping")
    _check_keys(g, {"t_start", "t_end", "dt", "sample_stride"}, "grid")
    stride = g.get("sample_stride", 1)
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError("grid.sample_stride", "must be a positive integer")
    grid = _make_grid(
        _number(g.get("t_start", 0.0), "grid.t_start"),
        _number(_require(g, "t_end", "grid"), "grid.t_end"),
        _number(_require(g, "dt", "grid"), "grid.dt", positive=True),
        stride,
    )

    ini = data.get("initial", {}) or {}
    if not isinstance(ini, dict):
        raise ConfigError("initial", "must be a mapping")
    _check_keys(ini, {"basis", "state", "observable"}, "initial")
    basis = ini.get("basis", "eigenbasis")
    if basis != "eigenbasis":
        if not isinstance(basis, dict) or set(basis) != {"kets"}:
            raise ConfigError("initial.basis", "must be 'eigenbasis' or a mapping {kets: matrix}")
        kets = _complex_array(basis["kets"], "initial.basis.kets", 2)
        if kets.shape != (n, n):
            raise ConfigError("initial.basis.kets", f"expected a {n}x{n} matrix (columns = kets)")
        basis = {"kets": kets}
    state = ini.get("state")
    if state is not None:
        if isinstance(state, dict):
            _check_keys(state, {"plane_wave"}, "initial.state")
            if not isinstance(model, KgModel):
                raise ConfigError("initial.state.plane_wave", "only available for kg_lattice models")
            mode = state["plane_wave"]
            if not isinstance(mode, int) or not 1 <= mode <= model.n_sites:
                raise ConfigError("initial.state.plane_wave", "mode index out of range")
        else:
            state = _complex_array(state, "initial.state", 1)
            if state.shape != (n,):
                raise ConfigError("initial.state", f"expected {n} entries")
    obs = ini.get("observable", "energy")
    if obs != "energy":
        obs = _complex_array(obs, "initial.observable", 2)
        if obs.shape != (n, n):
            raise ConfigError("initial.observable", f"expected a {n}x{n} matrix")
        if np.linalg.norm(obs - obs.conj().T) > 1e-12 * max(1.0, np.linalg.norm(obs)):
            raise ConfigError("initial.observable", "textbook observable must be Hermitian")

    energies = data.get("energies")
    if energies is not None:
        if not isinstance(energies, list) or len(energies) != n:
            raise ConfigError("energies", f"expected a list of {n} real numbers")
        energies = tuple(_number(e, f"energies[{i}]") for i, e in enumerate(energies))
    if basis != "eigenbasis" and energies is None and not isinstance(model, CrossModel):
        raise ConfigError("energies", "required when initial.basis is given explicitly")

    gauge = data.get("gauge", "identity_v")
    if gauge not in ("identity_v", "sqrt_theta"):
        raise ConfigError("gauge", "must be 'identity_v' or 'sqrt_theta'")

    checks_in = data.get("checks", {}) or {}
    if not isinstance(checks_in, dict):
        raise ConfigError("checks", "must be a mapping of check name to tolerance")
    known = _known_checks(model)
    checks = {}
    for key, tol in checks_in.items():
        if key not in known:
            raise ConfigError(f"checks.{key}", f"unknown check (known: {sorted(known)})")
        if tol is False or tol is None:
            continue
        checks[key] = known[key] if tol is True else _number(tol, f"checks.{key}", positive=True)

    out = data.get("outputs", {}) or {}
    if not isinstance(out, dict):
        raise ConfigError("outputs", "must be a mapping")
    _check_keys(out, {"prefix"}, "outputs")

    return ScenarioConfig(
        name=name,
        model=model,
        grid=grid,
        initial=InitialSpec(basis, state, obs),
        energies=energies,
        gauge=gauge,
        checks=checks,
        prefix=out.get("prefix"),
        source=source,
    )


def _known_checks(model: Model) -> dict[str, float]:
    if isinstance(model, CrossModel):
        return dict(CROSS_CHECKS)
    if isinstance(model, KgModel):
        return {**DEFAULT_CHECKS, **KG_CHECKS}
    return dict(DEFAULT_CHECKS)


def bundled_configs() -> list[str]:
    root = resources.files("niplab.scenarios") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(ref: str | Path) -> ScenarioConfig:
    """Load a config from a path, or by bundled name (e.g. ``toy2x2_driven``)."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
        source = str(path)
    else:
        res = resources.files("niplab.scenarios") / "configs" / f"{ref}.yaml"
        if not res.is_file():
            raise ConfigError("<config>", f"no such file or bundled config: {ref}")
        text = res.read_text()
        source = f"bundled:{ref}"
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<config>", f"YAML error: {exc}") from None
    return parse_config(data, source)
