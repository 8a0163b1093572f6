"""Propagation of states and operators in the non-Hermitian interaction picture.

Every propagator uses the same fixed-step classic RK4 (``timeline.rk4_steps``)
so that order-of-convergence checks are clean and runs are reproducible.
Nothing is renormalized during a run; drift is reported, not hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasisDegenerated, DimensionMismatch, MetricDegenerated
from .metric import dyson_factorize, hamiltonian_from_spectral, metric_from_basis
from .operator_core import DEFAULT_TOL, BiorthogonalBasis, Tolerances, as_operator, as_vector, fro
from .timeline import GeneratorFunction, TimeGrid, Trajectory, rk4_steps, rk4_trajectory


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace (generally non-Hermitian) density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_operator(self.matrix)
        if abs(np.trace(m) - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace is {np.trace(m)}, expected 1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_dyad(cls, ket, bra) -> "DensityMatrix":
        """Projector ``|psi><psi_Theta| / <psi_Theta|psi>``."""
        ket = as_vector(ket)
        bra = as_vector(bra, ket.shape[0])
        return cls(np.outer(ket, bra.conj()) / (bra.conj() @ ket))

    @classmethod
    def mixture(cls, kets, bras, probabilities) -> "DensityMatrix":
        p = np.asarray(probabilities, dtype=float)
        if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
            raise ValueError("probabilities must be non-negative and sum to 1")
        m = sum(pk * cls.from_dyad(k, b).matrix for pk, k, b in zip(p, kets, bras))
        return cls(m)

    def idempotency_residual(self) -> float:
        return fro(self.matrix @ self.matrix - self.matrix)


def _check_dim(g_fn: GeneratorFunction, n: int) -> None:
    if g_fn.dim != n:
        raise DimensionMismatch(f"generator dim {g_fn.dim} vs state dim {n}")


def propagate_ket(g_fn: GeneratorFunction, psi0, grid: TimeGrid) -> Trajectory:
    """Solve ``i d|psi>/dt = G(t)|psi>``; samples under ``"psi"``."""
    psi0 = as_vector(psi0)
    _check_dim(g_fn, psi0.shape[0])
    return rk4_trajectory(lambda t, y: -1j * (g_fn(t) @ y), psi0, grid, "psi")


def propagate_bra(g_fn: GeneratorFunction, psi_theta0, grid: TimeGrid) -> Trajectory:
    """Solve ``i d|psi_Theta>/dt = G(t)^dagger |psi_Theta>``; samples under ``"psi_theta"``."""
    psi_theta0 = as_vector(psi_theta0)
    _check_dim(g_fn, psi_theta0.shape[0])
    return rk4_trajectory(lambda t, y: -1j * (g_fn(t).conj().T @ y), psi_theta0, grid, "psi_theta")


def propagate_observable(
    sigma_fn: GeneratorFunction,
    q0,
    grid: TimeGrid,
    k_fn: GeneratorFunction | None = None,
) -> Trajectory:
    """Heisenberg-type flow ``i dQ/dt = Q Sigma - Sigma Q + K``.

    Samples ``"q"`` and its eigenvalues ``"q_eigenvalues"`` (sorted by real
    part) for isospectrality monitoring.  ``k_fn`` defaults to zero.
    """
    q0 = as_operator(q0)
    _check_dim(sigma_fn, q0.shape[0])

    def rhs(t, q):
        s = sigma_fn(t)
        d = q @ s - s @ q
        if k_fn is not None:
            d = d + k_fn(t)
        return -1j * d

    traj = rk4_trajectory(rhs, q0, grid, "q")
    traj.samples["q_eigenvalues"] = np.array([_sorted_eigvals(q) for q in traj.samples["q"]])
    return traj


def _sorted_eigvals(m: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvals(m)
    return w[np.lexsort((w.imag, w.real))]


def propagate_density(g_fn: GeneratorFunction, rho0, grid: TimeGrid) -> Trajectory:
    """Non-Hermitian Liouville flow ``i drho/dt = G rho - rho G``."""
    m0 = rho0.matrix if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0).matrix
    _check_dim(g_fn, m0.shape[0])

    def rhs(t, r):
        g = g_fn(t)
        return -1j * (g @ r - r @ g)

    traj = rk4_trajectory(rhs, m0, grid, "rho")
    traces = np.trace(traj.samples["rho"], axis1=1, axis2=2)
    traj.samples["trace"] = traces
    traj.residuals["trace_drift"] = np.abs(traces - 1.0)
    return traj


def propagate_basis(
    g_fn: GeneratorFunction,
    basis0: BiorthogonalBasis,
    grid: TimeGrid,
    tol: Tolerances = DEFAULT_TOL,
) -> Trajectory:
    """Propagate all kets under ``G`` and all bras under ``G^dagger``.

    Gram and completeness deviations are logged per sample.  Raises
    :class:`BasisDegenerated` at the first sample where either exceeds
    ``tol.basis``.
    """
    n = basis0.dim
    _check_dim(g_fn, n)
    for name, dev in (("gram", basis0.gram_deviation()), ("completeness", basis0.completeness_deviation())):
        if dev > tol.basis:
            raise BasisDegenerated(f"initial basis {name} deviation {dev:.3e}", grid.t_start)

    def rhs(t, y):
        g = g_fn(t)
        return np.stack((-1j * (g @ y[0]), -1j * (g.conj().T @ y[1])))

    keep = set(grid.sample_indices())
    times, kets, bras, gram_dev, comp_dev = [], [], [], [], []
    eye = np.eye(n)
    for k, t, y in rk4_steps(rhs, np.stack((basis0.kets, basis0.bras)), grid):
        if k not in keep:
            continue
        gd = fro(y[1].conj().T @ y[0] - eye)
        cd = fro(y[0] @ y[1].conj().T - eye)
        if gd > tol.basis or cd > tol.basis:
            raise BasisDegenerated(
                f"basis degenerated at t={t:.6g} (gram {gd:.3e}, completeness {cd:.3e})", t
            )
        times.append(t)
        kets.append(y[0].copy())
        bras.append(y[1].copy())
        gram_dev.append(gd)
        comp_dev.append(cd)
    return Trajectory(
        grid,
        np.array(times),
        {"kets": np.array(kets), "bras": np.array(bras)},
        {"gram_deviation": np.array(gram_dev), "completeness_deviation": np.array(comp_dev)},
    )


def expectation(bra, q, ket) -> complex:
    """Bilinear form ``<bra|Q|ket>`` (unnormalized)."""
    ket = as_vector(ket)
    bra = as_vector(bra, ket.shape[0])
    q = as_operator(q, ket.shape[0])
    return complex(bra.conj() @ (q @ ket))


class SampledOperator:
    """Exact-time lookup into a sampled operator trajectory.

    Lets trajectory samples stand in for a ``t -> A(t)`` function in the
    finite-difference residual checks; asking for an unsampled time raises
    ``KeyError``.
    """

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.values = values
        self._atol = 1e-9 * max(1.0, float(np.max(np.abs(self.times))))

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t - self._atol))
        if i < len(self.times) and abs(self.times[i] - t) <= self._atol:
            return self.values[i]
        raise KeyError(t)

    def has_stencil(self, i: int, width: int = 2) -> bool:
        """Whether sample ``i`` has ``width`` equally spaced neighbours on each side."""
        if i < width or i + width >= len(self.times):
            return False
        seg = np.diff(self.times[i - width : i + width + 1])
        return bool(np.allclose(seg, seg[0], rtol=1e-9, atol=0.0))


def nip_pipeline(
    g_fn: GeneratorFunction,
    basis0: BiorthogonalBasis,
    q0,
    grid: TimeGrid,
    *,
    psi0=None,
    k_fn: GeneratorFunction | None = None,
    gauge="identity",
    tol: Tolerances = DEFAULT_TOL,
) -> Trajectory:
    """Run the full three-equation recipe and every consistency check.

    Kets and bras of the basis, a state pair ``(psi, psi_Theta)``, the
    observable ``Q`` and the Dyson map are integrated together in one RK4
    state.  The Coriolis generator driving ``Q`` and ``Omega`` is
    ``Sigma = H - G`` with ``H`` the spectral Hamiltonian of the propagated
    basis.  Per sample the metric is rebuilt from the bras, factorized in
    the gauge that follows ``i Omega' = Omega Sigma`` from the requested
    initial gauge, and ``Sigma`` is re-derived from that factorization by
    finite differences for the ``G + Sigma = H`` identity check.

    Parameters
    ----------
    g_fn : GeneratorFunction
        The (generally non-Hermitian) generator ``G(t)``.
    basis0 : BiorthogonalBasis
        Initial bi-orthonormal basis and conserved energies.
    q0 : array_like
        Initial observable, expected quasi-Hermitian w.r.t. the initial metric.
    psi0 : array_like, optional
        Initial ket; defaults to the normalized sum of the basis kets.  The
        initial bra is ``Theta(t_start) psi0``.
    k_fn : GeneratorFunction, optional
        Source term of the observable flow.
    gauge : {"identity", "sqrt"} or array_like
        Unitary ambiguity fixing ``Omega`` at the initial time.
    """
    n = basis0.dim
    _check_dim(g_fn, n)
    q0 = as_operator(q0, n)
    energies = basis0.energies.astype(float)
    theta0 = metric_from_basis(basis0.bras, tol)
    omega0 = dyson_factorize(theta0, gauge, tol).omega
    h0 = hamiltonian_from_spectral(basis0)
    if psi0 is None:
        psi0 = basis0.kets.sum(axis=1)
        psi0 = psi0 / np.linalg.norm(psi0)
    psi0 = as_vector(psi0, n)
    psi_theta0 = theta0 @ psi0

    # State blocks grouped by how they are multiplied, so each RK4 stage costs
    # a handful of matmuls:  A = [kets | H_G | psi] is left-multiplied by G,
    # B = [bras | psi_theta] by G^dagger, C = [Omega; Q; H_Sigma] right by Sigma.
    sa, sb = n * (2 * n + 1), n * (n + 1)
    y0 = np.concatenate(
        (
            np.hstack((basis0.kets, h0, psi0[:, None])).ravel(),
            np.hstack((basis0.bras, psi_theta0[:, None])).ravel(),
            np.vstack((omega0, q0, h0)).ravel(),
        )
    )

    def blocks(y):
        return (
            y[:sa].reshape(n, 2 * n + 1),
            y[sa : sa + sb].reshape(n, n + 1),
            y[sa + sb :].reshape(3 * n, n),
        )

    def rhs(t, y):
        a, b, c = blocks(y)
        g = g_fn(t)
        sigma = (a[:, :n] * energies) @ b[:, :n].conj().T - g
        out = np.empty_like(y)
        da, db, dc = blocks(out)
        np.matmul(g, a, out=da)
        da[:, n : 2 * n] -= a[:, n : 2 * n] @ g
        np.matmul(g.conj().T, b, out=db)
        np.matmul(c, sigma, out=dc)
        dc[n:] -= (sigma @ c[n:].reshape(2, n, n)).reshape(2 * n, n)
        if k_fn is not None:
            dc[n : 2 * n] += k_fn(t)
        out *= -1j
        return out

    keep = set(grid.sample_indices())
    times, mats, vecs = [], [], []
    for k, t, y in rk4_steps(rhs, y0, grid):
        if k in keep:
            a, b, c = blocks(y)
            times.append(t)
            mats.append((a[:, :n], b[:, :n], c[:n], c[n : 2 * n], c[2 * n :], a[:, n : 2 * n]))
            vecs.append((a[:, 2 * n], b[:, n]))
    times = np.array(times)
    mats = np.array(mats)
    vecs = np.array(vecs)
    return _pipeline_diagnostics(
        g_fn, grid, times, mats, vecs, basis0, energies, omega0, theta0, tol
    )


def _bfro(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("kij,kij->k", a.conj(), a).real)


def _dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _stencil_mask(times: np.ndarray) -> np.ndarray:
    """Samples with two equally spaced neighbours on each side."""
    mask = np.zeros(len(times), dtype=bool)
    if len(times) < 5:
        return mask
    d = np.diff(times)
    for i in range(2, len(times) - 2):
        seg = d[i - 2 : i + 2]
        mask[i] = np.allclose(seg, seg[0], rtol=1e-9, atol=0.0)
    return mask


def _central_diff_samples(values: np.ndarray, times: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full_like(values, np.nan)
    idx = np.nonzero(mask)[0]
    if idx.size:
        h = (times[idx + 1] - times[idx])[:, None, None]
        out[idx] = (8 * (values[idx + 1] - values[idx - 1]) - (values[idx + 2] - values[idx - 2])) / (12 * h)
    return out


def _pipeline_diagnostics(g_fn, grid, times, mats, vecs, basis0, energies, omega0, theta0, tol):
    n = basis0.dim
    eye = np.eye(n)
    kets, bras, omega_ode, q, h_sigma, h_g = (mats[:, j] for j in range(6))
    psi, psi_theta = vecs[:, 0], vecs[:, 1]
    bras_d = _dag(bras)
    res = {}

    res["gram_deviation"] = _bfro(bras_d @ kets - eye)
    res["completeness_deviation"] = _bfro(kets @ bras_d - eye)
    bad = np.nonzero(
        (res["gram_deviation"] > tol.basis) | (res["completeness_deviation"] > tol.basis)
    )[0]
    if bad.size:
        t = float(times[bad[0]])
        raise BasisDegenerated(f"basis degenerated at t={t:.6g}", t)

    # metric from the bras and its eigendecomposition
    thetas = bras @ bras_d
    thetas = 0.5 * (thetas + _dag(thetas))
    w, vecs_th = np.linalg.eigh(thetas)
    if np.any(w[:, 0] <= tol.pd * np.abs(w[:, -1])):
        k = int(np.argmax(w[:, 0] <= tol.pd * np.abs(w[:, -1])))
        raise MetricDegenerated(f"reconstructed metric lost positivity at t={times[k]:.6g}", times[k])
    h_spec = (kets * energies[None, None, :]) @ bras_d

    def qh(a):
        ta = thetas @ a
        return _bfro(_dag(a) @ thetas - ta) / _bfro(ta)

    res["quasi_hermiticity_h"] = qh(h_spec)
    res["quasi_hermiticity_q"] = qh(q)
    res["omega_flow"] = _bfro(_dag(omega_ode) @ omega_ode - thetas) / _bfro(thetas)

    # Dyson factorization Omega = V^dagger theta U in the flow gauge
    phases = np.exp(-1j * np.outer(times - times[0], energies))
    target = (omega0 @ basis0.kets)[None] @ (phases[:, :, None] * bras_d)
    u = _dag(vecs_th)
    sq = np.sqrt(w)
    v = (u @ _dag(target)) / sq[:, :, None]
    omega_fact = _dag(v) @ (sq[:, :, None] * u)
    res["omega_gauge"] = _bfro(omega_fact - omega_ode) / _bfro(omega_ode)
    res["gauge_unitarity"] = _bfro(_dag(v) @ v - eye)

    h_eigs = np.array([_sorted_eigvals(h) for h in h_spec])
    q_eigs = np.array([_sorted_eigvals(x) for x in q])
    res["h_eigen_drift"] = np.max(np.abs(h_eigs - np.sort(energies)[None, :]), axis=1)
    res["q_eigen_drift"] = np.max(np.abs(q_eigs - q_eigs[0][None, :]), axis=1)
    res["heisenberg_forms"] = _bfro(h_sigma - h_g) / _bfro(h_g)
    overlap = np.einsum("ki,ki->k", psi_theta.conj(), psi)
    raw = np.einsum("ki,kij,kj->k", psi_theta.conj(), q, psi)
    res["overlap_drift"] = np.abs(overlap - overlap[0])

    # finite-difference checks on interior samples
    mask = _stencil_mask(times)
    theta_dot = _central_diff_samples(thetas, times, mask)
    omega_dot = _central_diff_samples(omega_fact, times, mask)
    gs = np.array([g_fn(t) for t in times])
    sigma_dyson = np.full_like(thetas, np.nan)
    idx = np.nonzero(mask)[0]
    if idx.size:
        sigma_dyson[idx] = 1j * np.linalg.solve(omega_fact[idx], omega_dot[idx])
    norm_theta = _bfro(thetas)
    res["metric_flow_sigma"] = _bfro(
        1j * theta_dot - thetas @ sigma_dyson + _dag(sigma_dyson) @ thetas
    ) / norm_theta
    res["metric_flow_g"] = _bfro(1j * theta_dot - _dag(gs) @ thetas + thetas @ gs) / norm_theta
    res["h_tilde"] = _bfro(gs + sigma_dyson - h_spec) / _bfro(h_spec)
    res["min_eig_theta"] = w[:, 0]

    samples = {
        "kets": kets,
        "bras": bras,
        "theta": thetas,
        "h": h_spec,
        "h_sigma_form": h_sigma,
        "h_g_form": h_g,
        "g": gs,
        "omega": omega_fact,
        "omega_ode": omega_ode,
        "sigma_dyson": sigma_dyson,
        "q": q,
        "psi": psi,
        "psi_theta": psi_theta,
        "overlap": overlap,
        "expectation_raw": raw,
        "expectation_normalized": raw / overlap,
        "h_eigenvalues": h_eigs,
        "q_eigenvalues": q_eigs,
    }
    return Trajectory(grid, times, samples, res)
