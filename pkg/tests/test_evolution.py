import numpy as np
import pytest

from conftest import SX, expm_series, grid, random_hermitian, toy_g
from niplab import (
    BasisDegenerated,
    BiorthogonalBasis,
    ConfigError,
    DensityMatrix,
    DimensionMismatch,
    GeneratorFunction,
    NonFiniteState,
    TimeGrid,
    biorthogonal_eig,
    check_quasi_hermiticity,
    expectation,
    metric_from_basis,
    nip_pipeline,
    propagate_basis,
    propagate_bra,
    propagate_density,
    propagate_ket,
    propagate_observable,
)
from niplab.operator_core import fro


class TestTimeGrid:
    def test_divisibility(self):
        with pytest.raises(ConfigError) as info:
            TimeGrid(0.0, 1.0, 0.3)
        assert info.value.field == "grid.dt"

    def test_decimal_steps_accepted(self):
        assert TimeGrid(0.0, 5.0, 1e-3).n_steps == 5000

    def test_samples_include_end(self):
        g = TimeGrid(0.0, 1.0, 0.1, sample_stride=3)
        assert g.sample_indices()[-1] == 10
        assert g.sample_times()[-1] == pytest.approx(1.0)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            TimeGrid(1.0, 0.0, 0.1)
        with pytest.raises(ConfigError):
            TimeGrid(0.0, 1.0, -0.1)


class TestGeneratorFunction:
    def test_shape_checked(self):
        fn = GeneratorFunction(lambda t: np.eye(3), 2)
        with pytest.raises(ValueError):
            fn(0.0)

    def test_non_finite(self):
        fn = GeneratorFunction(lambda t: np.full((2, 2), np.inf), 2)
        with pytest.raises(NonFiniteState):
            fn(0.0)

    def test_memoized_read_only(self):
        calls = []
        fn = GeneratorFunction(lambda t: calls.append(t) or np.eye(2), 2)
        a = fn(0.5)
        fn(0.5)
        assert calls == [0.5]
        with pytest.raises(ValueError):
            a[0, 0] = 3


class TestPropagateKet:
    def test_zero_generator(self):
        psi0 = np.array([0.6, 0.8j])
        traj = propagate_ket(GeneratorFunction.zero(2), psi0, grid(1, 1e-2))
        for p in traj["psi"]:
            np.testing.assert_array_equal(p, psi0)

    def test_diagonal_phases(self):
        psi0 = np.array([1, 1]) / np.sqrt(2)
        traj = propagate_ket(GeneratorFunction.constant(np.diag([1.0, 2.0])), psi0, grid(1, 1e-3))
        exact = np.array([np.exp(-1j), np.exp(-2j)]) / np.sqrt(2)
        assert np.linalg.norm(traj.final("psi") - exact) < 1e-9

    def test_matrix_exponential(self):
        g = np.array([[0, 2], [1, 0]], dtype=complex)
        traj = propagate_ket(GeneratorFunction.constant(g), [1, 0], grid(2, 1e-3, 100))
        for t, p in zip(traj.times, traj["psi"]):
            assert np.linalg.norm(p - expm_series(-1j * g * t) @ [1, 0]) < 1e-9

    def test_rk4_order(self):
        g = np.array([[0.2j, 1.0], [1.0, -0.2j]])
        exact = expm_series(-2j * g) @ np.array([1.0, 0.0])
        errs = [
            np.linalg.norm(propagate_ket(GeneratorFunction.constant(g), [1, 0], grid(2, dt)).final("psi") - exact)
            for dt in (0.1, 0.05)
        ]
        assert 14 <= errs[0] / errs[1] <= 18

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            propagate_ket(GeneratorFunction.zero(2), [1, 0, 0], grid(1, 0.1))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blow_up(self):
        fn = GeneratorFunction.constant(np.diag([400j, 0]))
        with pytest.raises(NonFiniteState) as info:
            propagate_ket(fn, [1, 0], grid(10, 0.1))
        assert info.value.t > 0


class TestPropagateBra:
    def test_zero_generator(self):
        traj = propagate_bra(GeneratorFunction.zero(2), [1, 2j], grid(1, 0.1))
        np.testing.assert_array_equal(traj.final("psi_theta"), [1, 2j])

    def test_anti_hermitian(self, rng):
        a = random_hermitian(rng, 3)
        g = 1j * a
        b0 = rng.normal(size=3) + 0j
        bra = propagate_bra(GeneratorFunction.constant(g), b0, grid(1, 1e-2))["psi_theta"]
        ket = propagate_ket(GeneratorFunction.constant(-g), b0, grid(1, 1e-2))["psi"]
        np.testing.assert_allclose(bra, ket, atol=1e-15)

    def test_overlap_conserved(self, toy_fn):
        basis = biorthogonal_eig(toy_g(0.0)).basis()
        theta0 = metric_from_basis(basis.bras)
        psi0 = np.array([1.0, 0.3j])
        gr = grid(5, 1e-3, 10)
        kets = propagate_ket(toy_fn, psi0, gr)["psi"]
        bras = propagate_bra(toy_fn, theta0 @ psi0, gr)["psi_theta"]
        ov = np.einsum("ki,ki->k", bras.conj(), kets)
        assert np.max(np.abs(ov - ov[0])) <= 1e-9 * abs(ov[0])


class TestPropagateObservable:
    def test_zero_sigma(self, rng):
        q0 = random_hermitian(rng, 2)
        traj = propagate_observable(GeneratorFunction.zero(2), q0, grid(1, 0.1))
        np.testing.assert_array_equal(traj.final("q"), q0)

    def test_constant_sigma(self, rng):
        s = np.array([[0.5, 0.2j], [0.3, -0.1]])
        q0 = random_hermitian(rng, 2)
        traj = propagate_observable(GeneratorFunction.constant(s), q0, grid(2, 1e-3, 200))
        for t, q in zip(traj.times, traj["q"]):
            exact = expm_series(1j * s * t) @ q0 @ expm_series(-1j * s * t)
            assert fro(q - exact) < 1e-9

    def test_source_only(self, rng):
        c = random_hermitian(rng, 2)
        q0 = random_hermitian(rng, 2)
        traj = propagate_observable(GeneratorFunction.zero(2), q0, grid(1, 1e-2), k_fn=GeneratorFunction.constant(c))
        assert fro(traj.final("q") - (q0 - 1j * c)) < 1e-13

    def test_isospectral(self, toy_fn):
        traj = propagate_observable(toy_fn, SX, grid(5, 1e-3, 50))
        ev = traj["q_eigenvalues"]
        assert np.max(np.abs(ev - ev[0])) < 1e-8


class TestDensity:
    def test_trace_validation(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(2))

    def test_pure_dyad_idempotent(self):
        rho = DensityMatrix.from_dyad([1, 1j], [2, 0.5])
        assert rho.idempotency_residual() < 1e-15

    def test_zero_generator(self):
        rho0 = DensityMatrix.from_dyad([1, 0], [1, 1])
        traj = propagate_density(GeneratorFunction.zero(2), rho0, grid(1, 0.1))
        np.testing.assert_array_equal(traj.final("rho"), rho0.matrix)

    def test_dyad_consistency_and_trace(self, toy_fn):
        basis = biorthogonal_eig(toy_g(0.0)).basis()
        theta0 = metric_from_basis(basis.bras)
        psi0 = np.array([1.0, 0.5 - 0.2j])
        gr = grid(5, 1e-3, 50)
        rho = propagate_density(toy_fn, DensityMatrix.from_dyad(psi0, theta0 @ psi0), gr)
        kets = propagate_ket(toy_fn, psi0, gr)["psi"]
        bras = propagate_bra(toy_fn, theta0 @ psi0, gr)["psi_theta"]
        for r, k, b in zip(rho["rho"], kets, bras):
            assert fro(r - np.outer(k, b.conj()) / (b.conj() @ k)) < 1e-8
        assert np.max(rho.residuals["trace_drift"]) < 1e-10


class TestPropagateBasis:
    def test_zero_generator(self):
        e = biorthogonal_eig(toy_g(0.0))
        basis = BiorthogonalBasis(e.kets, e.bras, np.zeros(2))
        traj = propagate_basis(GeneratorFunction.zero(2), basis, grid(1, 0.1))
        np.testing.assert_array_equal(traj.final("kets"), e.kets)
        assert traj.max_residual("gram_deviation") < 1e-15

    def test_hermitian(self):
        g = GeneratorFunction(lambda t: SX + np.sin(t) * np.diag([1, -1]), 2)
        basis = BiorthogonalBasis(np.eye(2), np.eye(2), np.zeros(2))
        traj = propagate_basis(g, basis, grid(5, 1e-3, 100))
        np.testing.assert_allclose(traj["bras"], traj["kets"], atol=1e-12)
        assert traj.max_residual("gram_deviation") < 1e-9
        assert traj.max_residual("completeness_deviation") < 1e-9

    def test_toy(self, toy_fn):
        traj = propagate_basis(toy_fn, biorthogonal_eig(toy_g(0.0)).basis(), grid(5, 1e-3, 10))
        assert traj.max_residual("gram_deviation") < 1e-8
        assert traj.max_residual("completeness_deviation") < 1e-8

    def test_broken_initial_basis(self):
        basis = BiorthogonalBasis(np.eye(2), 2 * np.eye(2), np.zeros(2))
        with pytest.raises(BasisDegenerated):
            propagate_basis(GeneratorFunction.zero(2), basis, grid(1, 0.1))


class TestExpectation:
    def test_basis_vector(self):
        assert expectation([1, 0], np.diag([3, 4]), [1, 0]) == 3

    def test_bilinear(self):
        assert expectation([1, 1], np.eye(2), [1, 0]) == 1

    def test_real_for_quasi_hermitian(self):
        theta = np.diag([4.0, 1.0])
        q = np.array([[0, 1], [4, 0]])
        assert check_quasi_hermiticity(q, theta) == 0
        ket = np.array([0.3 + 0.1j, -0.7j])
        value = expectation(theta @ ket, q, ket)
        assert abs(value.imag) < 1e-10 * abs(value)


class TestPipeline:
    def test_heisenberg_picture(self):
        kets = np.array([[1, 1], [0, 1]], dtype=complex)
        basis = BiorthogonalBasis(kets, np.linalg.inv(kets).conj().T, np.array([1.0, 2.0]))
        traj = nip_pipeline(GeneratorFunction.zero(2), basis, np.diag([1.0, 2.0]) + 0j, grid(1, 0.01))
        for key in ("gram_deviation", "completeness_deviation", "quasi_hermiticity_h",
                    "overlap_drift", "heisenberg_forms", "metric_flow_g"):
            assert traj.max_residual(key) < 1e-13, key

    def test_toy_isospectral(self, toy_fn):
        basis = biorthogonal_eig(toy_g(0.0)).basis()
        traj = nip_pipeline(toy_fn, basis, toy_g(0.0), grid(5, 1e-3, 10))
        assert traj.max_residual("h_eigen_drift") < 1e-8
        assert traj.max_residual("q_eigen_drift") < 1e-8
        assert traj.max_residual("heisenberg_forms") < 1e-8
        # the two metric-flow forms agree within the finite-difference floor
        assert abs(traj.max_residual("metric_flow_sigma") - traj.max_residual("metric_flow_g")) < 1e-7

    def test_gauge_does_not_change_predictions(self, toy_fn):
        basis = biorthogonal_eig(toy_g(0.0)).basis()
        gr = grid(1, 1e-3, 50)
        a = nip_pipeline(toy_fn, basis, SX, gr, gauge="identity")
        b = nip_pipeline(toy_fn, basis, SX, gr, gauge="sqrt")
        np.testing.assert_allclose(a["theta"], b["theta"], atol=1e-13)
        # Q0 is shared here, so only the metric-mediated parts are compared
        np.testing.assert_allclose(a["expectation_raw"], b["expectation_raw"], atol=1e-13)
