"""Hermitian (textbook) representation used as ground truth.

Given a Dyson map ``Omega(t)`` and a Hermitian Hamiltonian ``h(t)``, the
non-Hermitian generator is built as

    G = Omega^-1 h Omega - i Omega^-1 dOmega/dt

and predictions from both pictures are compared sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonHermitianInput
from .evolution import expectation, propagate_bra, propagate_ket, propagate_observable
from .operator_core import DEFAULT_TOL, Tolerances, as_operator, as_vector, fro, hermiticity_residual, inverse
from .timeline import GeneratorFunction, TimeGrid, Trajectory, central_derivative


@dataclass(frozen=True)
class TextbookSnapshot:
    h_matrix: np.ndarray
    psi_t: np.ndarray
    q_t: np.ndarray

    def __post_init__(self):
        for name in ("h_matrix", "q_t"):
            m = as_operator(getattr(self, name))
            if hermiticity_residual(m) > DEFAULT_TOL.herm * max(fro(m), 1.0):
                raise NonHermitianInput(f"{name} is not Hermitian")
            object.__setattr__(self, name, m)
        object.__setattr__(self, "psi_t", as_vector(self.psi_t, self.h_matrix.shape[0]))


def lift_state(omega, psi) -> np.ndarray:
    """Map a computational-space ket to the textbook space: ``Omega psi``."""
    omega = as_operator(omega)
    psi = as_vector(psi)
    if omega.shape[1] != psi.shape[0]:
        raise DimensionMismatch(f"{omega.shape} applied to length {psi.shape[0]}")
    return omega @ psi


def lift_operator(omega, a, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``Omega A Omega^-1``; Hermitian exactly when ``A`` is quasi-Hermitian."""
    omega = as_operator(omega)
    a = as_operator(a, omega.shape[0])
    return omega @ a @ inverse(omega, tol)


def textbook_expectation(snapshot: TextbookSnapshot) -> float:
    psi = snapshot.psi_t
    value = complex(psi.conj() @ snapshot.q_t @ psi)
    if abs(value.imag) > 1e-10 * max(abs(value), 1e-300):
        raise ArithmeticError(f"textbook expectation is not real: {value}")
    return value.real


def _omega_dot(omega_fn: GeneratorFunction, t: float, dt_probe: float) -> np.ndarray:
    d = omega_fn.derivative(t)
    return d if d is not None else central_derivative(omega_fn, t, dt_probe)


def coriolis_generator(omega_fn: GeneratorFunction, dt_probe: float = 1e-3) -> GeneratorFunction:
    """``Sigma(t) = i Omega^-1 dOmega/dt`` as a generator function."""
    return GeneratorFunction(
        lambda t: 1j * np.linalg.solve(omega_fn(t), _omega_dot(omega_fn, t, dt_probe)),
        omega_fn.dim,
        name="sigma",
    )


def nip_generator(
    omega_fn: GeneratorFunction, h_fn: GeneratorFunction, dt_probe: float = 1e-3
) -> GeneratorFunction:
    """``G(t) = Omega^-1 h Omega - i Omega^-1 dOmega/dt``."""

    def g(t):
        om = omega_fn(t)
        return np.linalg.solve(om, h_fn(t) @ om - 1j * _omega_dot(omega_fn, t, dt_probe))

    return GeneratorFunction(g, omega_fn.dim, name="G")


def cross_picture_trajectory(
    omega_fn: GeneratorFunction,
    h_fn: GeneratorFunction,
    psi0,
    q_t,
    grid: TimeGrid,
    dt_probe: float = 1e-3,
) -> Trajectory:
    """Propagate both pictures and record their predictions.

    ``psi0`` is the textbook-space initial state; the computational pair is
    ``psi(0) = Omega(0)^-1 psi0`` and ``psi_Theta(0) = Omega(0)^dagger psi0``.
    The observable starts from ``Omega(0)^-1 q_t Omega(0)`` and follows the
    Coriolis flow with no source term.
    """
    if omega_fn.dim != h_fn.dim:
        raise DimensionMismatch("omega and h dimensions differ")
    psi0 = as_vector(psi0, omega_fn.dim)
    q_t = as_operator(q_t, omega_fn.dim)
    if hermiticity_residual(q_t) > DEFAULT_TOL.herm * max(fro(q_t), 1.0):
        raise NonHermitianInput("textbook observable must be Hermitian")

    t0 = grid.t_start
    om0 = omega_fn(t0)
    g_fn = nip_generator(omega_fn, h_fn, dt_probe)
    sigma_fn = coriolis_generator(omega_fn, dt_probe)

    kets = propagate_ket(g_fn, np.linalg.solve(om0, psi0), grid)["psi"]
    bras = propagate_bra(g_fn, om0.conj().T @ psi0, grid)["psi_theta"]
    qs = propagate_observable(sigma_fn, np.linalg.solve(om0, q_t @ om0), grid)["q"]
    textbook = propagate_ket(h_fn, psi0, grid)

    nip = np.array([expectation(b, q, k) for b, q, k in zip(bras, qs, kets)])
    tb = np.array([textbook_expectation(TextbookSnapshot(h_fn(t), p, q_t))
                   for t, p in zip(textbook.times, textbook["psi"])])
    psi_t = textbook["psi"]
    return Trajectory(
        grid,
        textbook.times,
        {
            "psi": kets,
            "psi_theta": bras,
            "q": qs,
            "psi_textbook": psi_t,
            "expectation_nip": nip,
            "expectation_textbook": tb,
        },
        {
            "deviation": np.abs(nip - tb),
            "textbook_norm_drift": np.abs(np.linalg.norm(psi_t, axis=1) - np.linalg.norm(psi0)),
        },
    )


def cross_picture_check(
    omega_fn: GeneratorFunction,
    h_fn: GeneratorFunction,
    psi0,
    q_t,
    grid: TimeGrid,
    dt_probe: float = 1e-3,
) -> float:
    """Maximum over samples of ``|<psi_Theta|Q|psi> - <psi_T|q|psi_T>|``."""
    traj = cross_picture_trajectory(omega_fn, h_fn, psi0, q_t, grid, dt_probe)
    return traj.max_residual("deviation")
