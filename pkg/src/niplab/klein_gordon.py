"""1-D lattice Klein-Gordon model in the Feshbach-Villars representation.

The second-order equation ``(d^2/dt^2 + D(t)) psi = 0`` with
``D(t) = -Laplacian + m^2(x, t)`` becomes the first-order system
``i d/dt (i psi', psi) = [[0, D], [I, 0]] (i psi', psi)``.  Units are
``hbar = c = 1``; sites sit at ``x_j = j*dx`` for ``j = 1..n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InsufficientSamples, MetricDegenerated
from .evolution import nip_pipeline
from .metric import check_quasi_hermiticity
from .operator_core import (
    DEFAULT_TOL,
    Tolerances,
    as_operator,
    as_vector,
    biorthogonal_eig,
    fro,
    inverse,
    positive_sqrt,
)
from .timeline import GeneratorFunction, TimeGrid, Trajectory

MassSquared = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class LatticeModel:
    """Lattice geometry and the mass term ``m^2(x, t)``.

    ``mass_sq_fn(x, t)`` receives the array of site coordinates and returns
    one value per site.  Complex values are rejected unless
    ``allow_complex_mass`` is set.
    """

    n_sites: int
    dx: float
    mass_sq_fn: MassSquared
    boundary: str = "dirichlet"
    allow_complex_mass: bool = False
    x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "x", self.dx * np.arange(1, self.n_sites + 1))

    @property
    def length(self) -> float:
        """Distance between the two (virtual) wall sites ``x_0`` and ``x_{n+1}``."""
        return (self.n_sites + 1) * self.dx

    def mass_sq(self, t: float) -> np.ndarray:
        m2 = np.broadcast_to(np.asarray(self.mass_sq_fn(self.x, t)), (self.n_sites,))
        if np.iscomplexobj(m2) and np.any(m2.imag != 0):
            if not self.allow_complex_mass:
                raise ValueError("complex m^2 requires allow_complex_mass=True")
            return m2.astype(complex)
        return m2.real.astype(float)

    @classmethod
    def driven(
        cls,
        n_sites: int,
        dx: float,
        mu0: float,
        mu1: float = 0.0,
        nu: float = 0.0,
        profile: str = "uniform",
        gamma: float = 0.0,
        **kwargs,
    ) -> "LatticeModel":
        """``m^2(x, t) = mu0 + mu1 sin(nu t) f(x) + i gamma``.

        ``profile`` selects ``f``: ``"uniform"`` (1), ``"gaussian"`` (a bump
        centred in the box with width a quarter of its length) or
        ``"linear"`` (``x / L``).
        """
        length = (n_sites + 1) * dx
        if profile == "uniform":
            shape = lambda x: np.ones_like(x)  # noqa: E731
        elif profile == "gaussian":
            shape = lambda x: np.exp(-(((x - 0.5 * length) / (0.25 * length)) ** 2))  # noqa: E731
        elif profile == "linear":
            shape = lambda x: x / length  # noqa: E731
        else:
            raise ValueError(f"unknown mass profile {profile!r}")

        def m2(x, t):
            v = mu0 + mu1 * np.sin(nu * t) * shape(x)
            return v + 1j * gamma if gamma else v

        return cls(n_sites, dx, m2, allow_complex_mass=bool(gamma), **kwargs)


def laplacian_matrix(n: int, dx: float, boundary: str = "dirichlet") -> np.ndarray:
    """Three-point stencil for ``-d^2/dx^2``."""
    a = np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)
    if boundary == "periodic" and n > 2:
        a[0, -1] = a[-1, 0] = -1.0
    return a / dx**2


def build_lattice_d(model: LatticeModel, t: float) -> np.ndarray:
    """``D(t) = -Laplacian + diag(m^2(x, t))`` on the lattice."""
    d = laplacian_matrix(model.n_sites, model.dx, model.boundary).astype(complex)
    d[np.diag_indices(model.n_sites)] += model.mass_sq(t)
    return d


def build_fv_generator(d) -> np.ndarray:
    """Ket generator ``[[0, D], [I, 0]]``."""
    d = as_operator(d)
    n = d.shape[0]
    g = np.zeros((2 * n, 2 * n), dtype=complex)
    g[:n, n:] = d
    g[n:, :n] = np.eye(n)
    return g


def build_fv_bra_generator(d) -> np.ndarray:
    """Bra generator ``[[0, I], [D*, 0]]`` (entrywise complex conjugate)."""
    d = as_operator(d)
    n = d.shape[0]
    g = np.zeros((2 * n, 2 * n), dtype=complex)
    g[:n, n:] = np.eye(n)
    g[n:, :n] = d.conj()
    return g


def stationary_kg_metric(d, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Block metric ``diag(D^-1/2, D^1/2)`` for a Hermitian positive-definite ``D``.

    Raises
    ------
    NotPositiveDefinite
        When ``D`` has a zero or negative (tachyonic) mode.
    """
    root = positive_sqrt(d, tol)
    n = root.shape[0]
    theta = np.zeros((2 * n, 2 * n), dtype=complex)
    theta[:n, :n] = inverse(root, tol)
    theta[n:, n:] = root
    return theta


@dataclass(frozen=True)
class FvState:
    """Two-component state: ``upper = i dpsi/dt``, ``lower = psi``."""

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        up = as_vector(self.upper)
        lo = as_vector(self.lower)
        if up.shape != lo.shape:
            raise DimensionMismatch("FV components must have equal length")
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", lo)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.upper, self.lower))

    @classmethod
    def from_vector(cls, v) -> "FvState":
        v = as_vector(v)
        if v.shape[0] % 2:
            raise DimensionMismatch("FV vector length must be even")
        n = v.shape[0] // 2
        return cls(v[:n], v[n:])


def fv_pack(psi, dpsi_dt) -> FvState:
    psi = as_vector(psi)
    dpsi_dt = as_vector(dpsi_dt)
    if psi.shape != dpsi_dt.shape:
        raise DimensionMismatch("psi and dpsi/dt must have equal length")
    return FvState(1j * dpsi_dt, psi)


def fv_unpack(state: FvState) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(psi, dpsi/dt)``."""
    return state.lower.copy(), -1j * state.upper


def plane_wave_mode(model: LatticeModel, mode: int = 1, t: float = 0.0) -> tuple[FvState, float]:
    """Standing-wave eigenmode ``sin(k x_j)`` of a uniform-mass Dirichlet lattice.

    Returns the FV state with ``dpsi/dt = -i omega psi`` and the frequency
    ``omega`` from the lattice dispersion
    ``omega^2 = (2 - 2 cos(k dx)) / dx^2 + m^2``.
    """
    k = mode * np.pi / model.length
    m2 = model.mass_sq(t)
    if np.ptp(m2) != 0:
        raise ValueError("plane-wave modes need a uniform mass term")
    omega = np.sqrt((2 - 2 * np.cos(k * model.dx)) / model.dx**2 + m2[0])
    psi = np.sin(k * model.x)
    return fv_pack(psi, -1j * omega * psi), complex(omega).real


@dataclass(frozen=True)
class KreinStructure:
    """Indefinite Krein operator ``P = [[0, I], [I, 0]]``."""

    n_sites: int

    @property
    def p_matrix(self) -> np.ndarray:
        n = self.n_sites
        p = np.zeros((2 * n, 2 * n), dtype=complex)
        p[:n, n:] = np.eye(n)
        p[n:, :n] = np.eye(n)
        return p


def krein_product(k: KreinStructure, a, b) -> complex:
    """``<a|P|b> = upper_a^dagger lower_b + lower_a^dagger upper_b``."""
    a = a if isinstance(a, FvState) else FvState.from_vector(a)
    b = b if isinstance(b, FvState) else FvState.from_vector(b)
    if not (a.upper.shape[0] == b.upper.shape[0] == k.n_sites):
        raise DimensionMismatch("Krein product of states with different lattice sizes")
    return complex(a.upper.conj() @ b.lower + a.lower.conj() @ b.upper)


def kg_residual(trajectory: Trajectory, model: LatticeModel, key: str = "psi") -> float:
    """Relative defect of ``psi'' + D(t) psi = 0`` along an FV trajectory.

    The second time derivative of the lower component is taken with the
    three-point stencil over consecutive, equally spaced samples.
    """
    times = trajectory.times
    states = np.asarray(trajectory[key])
    if len(times) < 5:
        raise InsufficientSamples(f"need at least 5 samples, got {len(times)}")
    n = model.n_sites
    psi = states[:, n:]
    worst = 0.0
    for i in range(1, len(times) - 1):
        h_minus = times[i] - times[i - 1]
        h_plus = times[i + 1] - times[i]
        if not np.isclose(h_minus, h_plus, rtol=1e-9, atol=0.0):
            continue
        second = (psi[i + 1] - 2 * psi[i] + psi[i - 1]) / h_plus**2
        dpsi = build_lattice_d(model, times[i]) @ psi[i]
        num = np.linalg.norm(second + dpsi)
        den = np.linalg.norm(dpsi)
        if den == 0.0:
            if num == 0.0:
                continue
            return float("inf")
        worst = max(worst, num / den)
    return float(worst)


def kg_generator(model: LatticeModel, tol: Tolerances = DEFAULT_TOL, check_positivity: bool = True) -> GeneratorFunction:
    """FV ket generator ``G(t)`` of the lattice model.

    With ``check_positivity`` every evaluation verifies that ``D(t)`` is
    positive definite (Cholesky) and raises :class:`MetricDegenerated` with
    the offending time otherwise.
    """

    def g(t):
        d = build_lattice_d(model, t)
        if check_positivity and not model.allow_complex_mass:
            _require_positive_d(d, t, tol)
        return build_fv_generator(d)

    return GeneratorFunction(g, 2 * model.n_sites, name="G_FV")


def _require_positive_d(d: np.ndarray, t: float, tol: Tolerances) -> None:
    shift = tol.pd * np.abs(d).max()
    try:
        np.linalg.cholesky(d - shift * np.eye(d.shape[0]))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(d)
        raise MetricDegenerated(
            f"D(t) lost positivity at t={t:.6g} (lowest mode {w[0]:.3e}): tachyonic mode, "
            "no positive metric exists",
            t,
        ) from None


def kg_scenario(
    model: LatticeModel,
    initial: FvState,
    grid: TimeGrid,
    *,
    energies=None,
    q0=None,
    gauge="identity",
    tol: Tolerances = DEFAULT_TOL,
) -> Trajectory:
    """Full non-Hermitian interaction-picture run for the lattice model.

    The initial basis is the eigenbasis of ``G(t_start)``; ``energies``
    overrides its eigenvalues.  ``q0`` defaults to the initial energy
    operator.  Besides the pipeline diagnostics the trajectory carries the
    Krein product of the state, the quasi-Hermiticity of the generator and
    the drift of the metric.
    """
    g_fn = kg_generator(model, tol)
    t0 = grid.t_start
    g0 = np.array(g_fn(t0))
    eig = biorthogonal_eig(g0, tol)
    basis0 = eig.basis(energies)
    if q0 is None:
        q0 = (basis0.kets * basis0.energies[None, :]) @ basis0.bras.conj().T
    psi0 = initial.vector if isinstance(initial, FvState) else as_vector(initial)
    traj = nip_pipeline(g_fn, basis0, q0, grid, psi0=psi0, gauge=gauge, tol=tol)

    krein = KreinStructure(model.n_sites)
    kp = np.array([krein_product(krein, v, v) for v in traj["psi"]])
    traj.samples["krein_norm"] = kp
    traj.residuals["krein_drift"] = np.abs(kp - kp[0])
    traj.residuals["quasi_hermiticity_g"] = np.array(
        [check_quasi_hermiticity(g, th) for g, th in zip(traj["g"], traj["theta"])]
    )
    th0 = traj["theta"][0]
    traj.residuals["theta_drift"] = np.array([fro(th - th0) / fro(th0) for th in traj["theta"]])
    traj.samples["d_min_eigenvalue"] = np.array(
        [np.linalg.eigvalsh(build_lattice_d(model, t)).min() if not model.allow_complex_mass else np.nan
         for t in traj.times]
    )
    return traj
