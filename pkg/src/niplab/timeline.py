"""Time grids and the fixed-step RK4 machinery built on them."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import ConfigError, NonFiniteState

OperatorFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start + k*dt`` for ``k = 0..n_steps``.

    Samples are kept every ``sample_stride`` steps; the final time is always
    sampled.
    """

    t_start: float = 0.0
    t_end: float = 1.0
    dt: float = 1e-3
    sample_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("grid.dt", f"must be positive, got {self.dt}")
        if not self.t_end > self.t_start:
            raise ConfigError("grid.t_end", "must exceed grid.t_start")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ConfigError("grid.sample_stride", "must be a positive integer")
        q = (self.t_end - self.t_start) / self.dt
        n = round(q)
        if n < 1 or abs(q - n) > 1e-12 * max(1.0, n):
            raise ConfigError(
                "grid.dt",
                f"dt={self.dt!r} does not divide [{self.t_start}, {self.t_end}] "
                f"into an integer number of steps ({q!r})",
            )

    @property
    def n_steps(self) -> int:
        return round((self.t_end - self.t_start) / self.dt)

    def time(self, k: int) -> float:
        return self.t_start + k * self.dt

    def sample_indices(self) -> list[int]:
        idx = list(range(0, self.n_steps + 1, self.sample_stride))
        if idx[-1] != self.n_steps:
            idx.append(self.n_steps)
        return idx

    def sample_times(self) -> np.ndarray:
        return np.array([self.time(k) for k in self.sample_indices()])

    def refined(self, factor: int = 2) -> "TimeGrid":
        """Same interval and sample times with ``dt`` divided by ``factor``."""
        return TimeGrid(self.t_start, self.t_end, self.dt / factor, self.sample_stride * factor)


class GeneratorFunction:
    """Time-parameterized operator ``t -> A(t)`` of fixed dimension.

    Evaluations are memoized on ``t`` (RK4 evaluates the midpoint twice and
    consecutive steps share endpoints).  Returned arrays are read-only.
    """

    def __init__(
        self,
        evaluator: OperatorFn,
        dim: int,
        analytic_derivative: OperatorFn | None = None,
        name: str = "",
        cache_size: int = 16,
    ):
        self.evaluator = evaluator
        self.dim = int(dim)
        self.analytic_derivative = analytic_derivative
        self.name = name
        self._cached = functools.lru_cache(maxsize=cache_size)(self._evaluate)

    def _evaluate(self, t: float) -> np.ndarray:
        a = np.array(self.evaluator(t), dtype=complex)
        if a.shape != (self.dim, self.dim):
            raise ValueError(
                f"generator {self.name or '<anon>'} returned shape {a.shape} at t={t}, "
                f"expected {(self.dim, self.dim)}"
            )
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(f"generator {self.name or '<anon>'} is not finite", t)
        a.flags.writeable = False
        return a

    def __call__(self, t: float) -> np.ndarray:
        return self._cached(float(t))

    def derivative(self, t: float) -> np.ndarray | None:
        if self.analytic_derivative is None:
            return None
        return np.asarray(self.analytic_derivative(float(t)), dtype=complex)

    def adjoint(self) -> "GeneratorFunction":
        deriv = self.analytic_derivative
        return GeneratorFunction(
            lambda t: self(t).conj().T,
            self.dim,
            None if deriv is None else (lambda t: np.conj(deriv(t)).T),
            name=f"{self.name}^dagger",
        )

    def scaled(self, c: complex) -> "GeneratorFunction":
        deriv = self.analytic_derivative
        return GeneratorFunction(
            lambda t: c * self(t),
            self.dim,
            None if deriv is None else (lambda t: c * np.asarray(deriv(t))),
            name=f"{c}*{self.name}",
        )

    @classmethod
    def constant(cls, m, name: str = "") -> "GeneratorFunction":
        m = np.array(m, dtype=complex)
        zero = np.zeros_like(m)
        return cls(lambda t: m, m.shape[0], lambda t: zero, name=name)

    @classmethod
    def zero(cls, dim: int) -> "GeneratorFunction":
        return cls.constant(np.zeros((dim, dim)), name="0")


def central_derivative(fn: OperatorFn, t: float, h: float) -> np.ndarray:
    """Fourth-order central difference over ``{t +- h, t +- 2h}``."""
    # paired differences so constant inputs give an exact zero
    return (
        8 * (np.asarray(fn(t + h)) - np.asarray(fn(t - h)))
        - (np.asarray(fn(t + 2 * h)) - np.asarray(fn(t - 2 * h)))
    ) / (12 * h)


@dataclass
class Trajectory:
    """Sampled output of a propagation run.

    ``samples`` and ``residuals`` map names to arrays whose leading axis is
    aligned with ``times``.
    """

    grid: TimeGrid
    times: np.ndarray
    samples: dict[str, np.ndarray] = field(default_factory=dict)
    residuals: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.samples:
            return self.samples[name]
        return self.residuals[name]

    def final(self, name: str) -> np.ndarray:
        return self[name][-1]

    def max_residual(self, name: str) -> float:
        r = np.asarray(self.residuals[name], dtype=float)
        r = r[np.isfinite(r)]
        return float(r.max()) if r.size else 0.0

    def __len__(self) -> int:
        return len(self.times)


def rk4_steps(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    grid: TimeGrid,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Iterator[tuple[int, float, np.ndarray]]:
    """Yield ``(k, t_k, y_k)`` for every step of classic fixed-step RK4.

    ``project`` is applied to the state after each completed step.  The
    yielded array must not be mutated by the caller.
    """
    y = np.array(y0, dtype=complex)
    h = grid.dt
    yield 0, grid.time(0), y
    for k in range(grid.n_steps):
        t = grid.time(k)
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if project is not None:
            y = project(y)
        t_next = grid.time(k + 1)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"state became non-finite at t={t_next:.6g}", t_next)
        yield k + 1, t_next, y


def rk4_trajectory(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    grid: TimeGrid,
    name: str,
) -> Trajectory:
    keep = set(grid.sample_indices())
    times, states = [], []
    for k, t, y in rk4_steps(rhs, y0, grid):
        if k in keep:
            times.append(t)
            states.append(y.copy())
    return Trajectory(grid, np.array(times), {name: np.array(states)})


def isclose_time(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)
