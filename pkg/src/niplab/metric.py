"""Metric operators and Dyson maps.

The metric ``Theta`` turns the computational inner product into the physical
one, ``<a|Theta|b>``.  It can be rebuilt from a propagated family of bras,
factorized as ``Theta = Omega^dagger Omega``, and checked against its two
equivalent first-order flows::

    i dTheta/dt = Theta Sigma - Sigma^dagger Theta
    i dTheta/dt = G^dagger Theta - Theta G
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    MetricDegenerated,
    NotPositiveDefinite,
    NotUnitary,
    RankDeficient,
)
from .operator_core import (
    DEFAULT_TOL,
    BiorthogonalBasis,
    Tolerances,
    as_operator,
    fro,
    hermitian_eig,
    inverse,
    is_unitary,
)
from .timeline import GeneratorFunction, OperatorFn, TimeGrid, Trajectory, central_derivative, rk4_steps


def _columns(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return vectors.astype(complex)
    cols = [np.asarray(v, dtype=complex) for v in vectors]
    if not cols:
        raise DimensionMismatch("empty vector family")
    return np.stack(cols, axis=1)


def metric_from_basis(bras, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Sum of the outer products ``|b_n><b_n|`` over the bra family.

    ``bras`` is either a sequence of vectors or a matrix whose columns are
    the bras.  The result is Hermitian by construction.

    Raises
    ------
    RankDeficient
        If the bras do not span the space, i.e. the smallest eigenvalue of
        the sum is not above ``tol.pd`` times the largest.
    """
    b = _columns(bras)
    theta = b @ b.conj().T
    w = np.linalg.eigvalsh(theta)
    if w[0] <= tol.pd * max(abs(w[-1]), np.finfo(float).tiny):
        raise RankDeficient(
            f"metric is not positive definite (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})"
        )
    return theta


def check_quasi_hermiticity(a, theta) -> float:
    """Relative residual ``||A^dagger Theta - Theta A|| / ||Theta A||``."""
    a = as_operator(a)
    theta = as_operator(theta)
    if a.shape != theta.shape:
        raise DimensionMismatch(f"operator {a.shape} vs metric {theta.shape}")
    ta = theta @ a
    denom = fro(ta)
    if denom == 0.0:
        return 0.0
    return fro(a.conj().T @ theta - ta) / denom


@dataclass(frozen=True)
class MetricDecomposition:
    """``Theta = U^dagger theta^2 U`` and ``Omega = V^dagger theta U``."""

    theta_matrix: np.ndarray
    sqrt_diag: np.ndarray
    u_unitary: np.ndarray
    v_unitary: np.ndarray
    omega: np.ndarray

    def factorization_residual(self) -> float:
        o = self.omega
        return fro(o.conj().T @ o - self.theta_matrix) / fro(self.theta_matrix)


def dyson_factorize(theta, v_unitary=None, tol: Tolerances = DEFAULT_TOL) -> MetricDecomposition:
    """Factorize a metric into a Dyson map.

    Parameters
    ----------
    theta : array_like
        Hermitian positive-definite metric.
    v_unitary : array_like or {"identity", "sqrt"}, optional
        The free left unitary factor.  ``None``/``"identity"`` uses the
        identity; ``"sqrt"`` sets it equal to the diagonalizing unitary,
        which yields the Hermitian root ``Omega = sqrt(Theta)``.
    """
    theta = as_operator(theta)
    w, vecs = hermitian_eig(theta, tol)
    scale = abs(w[-1])
    if w[0] <= tol.pd * scale:
        raise NotPositiveDefinite(f"metric has non-positive eigenvalue {w[0]:.3e}")
    u = vecs.conj().T
    sqrt_diag = np.diag(np.sqrt(w)).astype(complex)
    n = theta.shape[0]
    if v_unitary is None or (isinstance(v_unitary, str) and v_unitary == "identity"):
        v = np.eye(n, dtype=complex)
    elif isinstance(v_unitary, str) and v_unitary == "sqrt":
        v = u
    else:
        v = as_operator(v_unitary, n)
        if not is_unitary(v):
            raise NotUnitary("v_unitary is not unitary")
    omega = v.conj().T @ sqrt_diag @ u
    return MetricDecomposition(theta, sqrt_diag, u, v, omega)


def gauge_unitary_for(omega, theta, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """The ``V`` for which ``dyson_factorize(theta, V).omega`` equals ``omega``.

    Requires ``omega^dagger omega == theta``; the result is then unitary.
    """
    omega = as_operator(omega)
    w, vecs = hermitian_eig(theta, tol)
    u = vecs.conj().T
    # Omega = V^dagger theta U  =>  V = theta^-1 U Omega^dagger
    v = (u @ omega.conj().T) / np.sqrt(w)[:, None]
    return v


def coriolis_from_dyson(omega_fn, t: float, dt_probe: float = 1e-3) -> np.ndarray:
    """``Sigma(t) = i Omega^-1(t) dOmega/dt``.

    Uses the analytic derivative when ``omega_fn`` carries one, otherwise a
    fourth-order central difference with step ``dt_probe``.
    """
    omega = np.asarray(omega_fn(t), dtype=complex)
    d_omega = None
    if isinstance(omega_fn, GeneratorFunction):
        d_omega = omega_fn.derivative(t)
    if d_omega is None:
        d_omega = central_derivative(omega_fn, t, dt_probe)
    inverse(omega)  # condition check only
    return 1j * np.linalg.solve(omega, d_omega)


def hamiltonian_from_spectral(basis: BiorthogonalBasis) -> np.ndarray:
    """``H = sum_n |psi_n> E_n <psi_n,Theta|``."""
    if basis.kets.shape != basis.bras.shape or basis.energies.shape != (basis.kets.shape[1],):
        raise DimensionMismatch("inconsistent basis shapes")
    return (basis.kets * basis.energies[None, :]) @ basis.bras.conj().T


def _theta_dot(theta_fn: OperatorFn, t: float, dt_probe: float) -> np.ndarray:
    if isinstance(theta_fn, GeneratorFunction):
        d = theta_fn.derivative(t)
        if d is not None:
            return d
    return central_derivative(theta_fn, t, dt_probe)


def metric_flow_residual_sigma(theta_fn, sigma_fn, t: float, dt_probe: float = 1e-3) -> float:
    """Relative residual of ``i Theta' = Theta Sigma - Sigma^dagger Theta``."""
    theta = np.asarray(theta_fn(t))
    sigma = np.asarray(sigma_fn(t))
    r = 1j * _theta_dot(theta_fn, t, dt_probe) - theta @ sigma + sigma.conj().T @ theta
    return fro(r) / fro(theta)


def metric_flow_residual_g(theta_fn, g_fn, t: float, dt_probe: float = 1e-3) -> float:
    """Relative residual of ``i Theta' = G^dagger Theta - Theta G``."""
    theta = np.asarray(theta_fn(t))
    g = np.asarray(g_fn(t))
    r = 1j * _theta_dot(theta_fn, t, dt_probe) - g.conj().T @ theta + theta @ g
    return fro(r) / fro(theta)


def solve_metric_ode(
    g_fn: GeneratorFunction,
    theta0,
    grid: TimeGrid,
    tol: Tolerances = DEFAULT_TOL,
) -> Trajectory:
    """Integrate the operator flow ``i Theta' = G^dagger Theta - Theta G`` by RK4.

    Hermiticity is restored after each step; positivity is only monitored.

    Raises
    ------
    MetricDegenerated
        At the first step where the smallest eigenvalue drops to
        ``tol.pd * ||Theta||`` or below.
    """
    theta0 = as_operator(theta0, g_fn.dim)
    w0 = hermitian_eig(theta0, tol).eigenvalues
    if w0[0] <= tol.pd * abs(w0[-1]):
        raise MetricDegenerated("initial metric is not positive definite", grid.t_start)

    def rhs(t, th):
        g = g_fn(t)
        return -1j * (g.conj().T @ th - th @ g)

    def symmetrize(th):
        return 0.5 * (th + th.conj().T)

    keep = set(grid.sample_indices())
    times, thetas, min_eigs = [], [], []
    for k, t, th in rk4_steps(rhs, theta0, grid, project=symmetrize):
        w = np.linalg.eigvalsh(th)
        if w[0] <= tol.pd * abs(w[-1]):
            raise MetricDegenerated(f"metric lost positivity at t={t:.6g} (min eig {w[0]:.3e})", t)
        if k in keep:
            times.append(t)
            thetas.append(th.copy())
            min_eigs.append(w[0])
    return Trajectory(
        grid,
        np.array(times),
        {"theta": np.array(thetas)},
        {"min_eig_theta": np.array(min_eigs)},
    )


def flow_gauge_omega(
    omega0: np.ndarray,
    basis0: BiorthogonalBasis,
    bras_t: np.ndarray,
    elapsed: float,
) -> np.ndarray:
    """Dyson map transported by ``i Omega' = Omega Sigma`` with ``Sigma = H - G``.

    For a basis whose kets obey ``i psi' = G psi``, whose bras obey
    ``i b' = G^dagger b`` and whose energies are conserved, the solution is
    ``Omega(t) = Omega(0) Psi(0) exp(-i E t) B(t)^dagger`` in closed form.
    Only ``Omega(0)`` is free; it fixes the gauge at the initial time.
    """
    phases = np.exp(-1j * basis0.energies * elapsed)
    return (omega0 @ basis0.kets) @ (phases[:, None] * bras_t.conj().T)
