"""Dense complex linear algebra used by every other module.

Operators are plain ``numpy.ndarray`` objects of shape ``(n, n)`` and
dtype ``complex128``; state vectors are 1-D arrays of length ``n``.
Eigendecompositions follow one fixed phase convention (largest-magnitude
component of every eigenvector real and positive) so that repeated runs
produce bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DefectiveMatrix,
    DegenerateSpectrum,
    DimensionMismatch,
    NonHermitianInput,
    NotPositiveDefinite,
    SingularMatrix,
)


@dataclass(frozen=True)
class Tolerances:
    """Relative thresholds used for input validation.

    ``herm``, ``pd`` and ``deg`` are multiplied by the norm of the matrix
    under test; ``kappa_max`` is an absolute condition-number bound.
    """

    herm: float = 1e-10
    pd: float = 1e-12
    deg: float = 1e-8
    kappa_max: float = 1e10
    basis: float = 1e-6

    def with_(self, **changes) -> "Tolerances":
        return replace(self, **changes)


DEFAULT_TOL = Tolerances()


def as_operator(m, dim: int | None = None) -> np.ndarray:
    """Return ``m`` as a finite, square complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator has non-finite entries")
    return a


def as_vector(v, dim: int | None = None) -> np.ndarray:
    a = np.asarray(v, dtype=complex)
    if a.ndim != 1:
        raise DimensionMismatch(f"state vector must be 1-D, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("state vector has non-finite entries")
    return a


def fro(m) -> float:
    return float(np.linalg.norm(m))


def adjoint(m) -> np.ndarray:
    return as_operator(m).conj().T


def commutator(a, b) -> np.ndarray:
    a = as_operator(a)
    b = as_operator(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"commutator of {a.shape} and {b.shape}")
    return a @ b - b @ a


def hermiticity_residual(m) -> float:
    m = np.asarray(m)
    return fro(m - m.conj().T)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    cols = np.arange(vectors.shape[1])
    pivots = vectors[idx, cols]
    out = vectors * (np.abs(pivots) / pivots)[None, :]
    out[idx, cols] = np.abs(pivots)
    return out


class HermitianEig(NamedTuple):
    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues[None, :]) @ self.basis.conj().T


def hermitian_eig(m, tol: Tolerances = DEFAULT_TOL) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises
    ------
    NonHermitianInput
        If ``||M - M^dagger||_F`` exceeds ``tol.herm * ||M||_F``.
    """
    m = as_operator(m)
    scale = fro(m)
    if hermiticity_residual(m) > tol.herm * max(scale, np.finfo(float).tiny):
        raise NonHermitianInput(
            f"Hermiticity residual {hermiticity_residual(m):.3e} exceeds "
            f"{tol.herm:.1e} * ||M||"
        )
    try:
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    return HermitianEig(w, _fix_phases(v))


def positive_sqrt(t, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Unique Hermitian positive-definite square root of ``t``."""
    w, u = hermitian_eig(t, tol)
    _require_positive(w, tol)
    r = (u * np.sqrt(w)[None, :]) @ u.conj().T
    return 0.5 * (r + r.conj().T)


def _require_positive(w: np.ndarray, tol: Tolerances) -> None:
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size == 0 or w[0] <= tol.pd * scale:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0] if w.size else float('nan'):.3e} is not "
            f"above {tol.pd:.1e} * ||T||"
        )


def inverse(m, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    m = as_operator(m)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > tol.kappa_max:
        raise SingularMatrix(f"condition number {cond:.3e} exceeds {tol.kappa_max:.1e}")
    return np.linalg.solve(m, np.eye(m.shape[0], dtype=complex))


def is_unitary(u, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return fro(u.conj().T @ u - np.eye(u.shape[0])) <= atol * np.sqrt(u.shape[0])


@dataclass(frozen=True)
class BiorthogonalBasis:
    """Paired ket/bra N-plets (stored as matrix columns) with real energies.

    ``bras[:, m].conj() @ kets[:, n]`` is the bilinear overlap; for a valid
    basis it equals ``delta_mn`` and ``kets @ bras.conj().T`` is the identity.
    """

    kets: np.ndarray
    bras: np.ndarray
    energies: np.ndarray

    @property
    def dim(self) -> int:
        return self.kets.shape[0]

    def gram(self) -> np.ndarray:
        return self.bras.conj().T @ self.kets

    def gram_deviation(self) -> float:
        return fro(self.gram() - np.eye(self.dim))

    def completeness_deviation(self) -> float:
        return fro(self.kets @ self.bras.conj().T - np.eye(self.dim))


@dataclass(frozen=True)
class BiorthogonalEig:
    eigenvalues: np.ndarray
    kets: np.ndarray
    bras: np.ndarray

    @property
    def right_kets(self) -> list[np.ndarray]:
        return [self.kets[:, n] for n in range(self.kets.shape[1])]

    @property
    def left_bras(self) -> list[np.ndarray]:
        return [self.bras[:, n] for n in range(self.bras.shape[1])]

    def basis(self, energies=None) -> BiorthogonalBasis:
        """Package as a :class:`BiorthogonalBasis`.

        Without explicit ``energies`` the eigenvalues are used; they must
        then be real up to round-off.
        """
        if energies is None:
            ev = self.eigenvalues
            if np.max(np.abs(ev.imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(ev))):
                raise ValueError("complex eigenvalues cannot serve as observable energies")
            energies = ev.real
        energies = np.asarray(energies, dtype=float)
        if energies.shape != (self.kets.shape[1],):
            raise DimensionMismatch("one energy per basis element is required")
        return BiorthogonalBasis(self.kets.copy(), self.bras.copy(), energies)


def biorthogonal_eig(h, tol: Tolerances = DEFAULT_TOL) -> BiorthogonalEig:
    """Right eigenvectors and the dual (left) family of a diagonalizable matrix.

    Eigenvalues are sorted by real part, then imaginary part.  Right kets are
    normalized to unit length with the fixed phase convention; the bras are
    the columns of ``inv(R)^dagger``, which makes the Gram matrix and the
    resolution of identity exact up to round-off.
    """
    h = as_operator(h)
    scale = fro(h)
    try:
        w, r = scipy.linalg.eig(h)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceFailure(str(exc)) from exc
    w = np.asarray(w, dtype=complex)
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    r = r[:, order]

    if w.size > 1:
        gaps = np.abs(w[:, None] - w[None, :])
        gaps[np.diag_indices_from(gaps)] = np.inf
        if gaps.min() < tol.deg * scale:
            raise DegenerateSpectrum(
                f"eigenvalues closer than {tol.deg:.1e} * ||H|| (min gap {gaps.min():.3e})"
            )

    r = r / np.linalg.norm(r, axis=0)[None, :]
    r = _fix_phases(r)
    cond = np.linalg.cond(r)
    if not np.isfinite(cond) or cond > tol.kappa_max:
        raise DefectiveMatrix(f"eigenvector condition number {cond:.3e}")
    left = np.linalg.solve(r, np.eye(r.shape[0], dtype=complex)).conj().T
    return BiorthogonalEig(w, r, left)
