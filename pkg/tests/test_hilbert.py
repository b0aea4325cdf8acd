import numpy as np
import pytest

from iongate.hilbert import (
    DensityMatrix,
    FockSpace,
    ID2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ladder_operators,
    partial_trace,
    pauli_phi,
    projector,
    tensor,
    thermal_state,
)


class TestLadderOperators:
    def test_smallest_ladder(self):
        a, ad = ladder_operators(2)
        assert np.array_equal(a, np.array([[0, 1], [0, 0]], dtype=complex))
        assert np.array_equal(ad, a.conj().T)

    def test_number_operator(self):
        a, ad = ladder_operators(FockSpace(4))
        assert np.allclose(ad @ a, np.diag([0.0, 1.0, 2.0, 3.0]))

    def test_truncated_commutator(self):
        # oracle: direct matrix computation of [a, a^dag]
        a, ad = ladder_operators(30)
        comm = a @ ad - ad @ a
        expected = np.eye(30, dtype=complex)
        expected[-1, -1] = 1.0 - 30.0
        assert np.allclose(comm, expected, atol=1e-12)

    def test_raising_is_exact_adjoint(self):
        for dim in (2, 5, 17):
            a, ad = ladder_operators(dim)
            assert np.array_equal(ad, a.conj().T)

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            ladder_operators(1)
        with pytest.raises(ValueError):
            FockSpace(1)


class TestPauliPhi:
    def test_axes(self):
        assert np.allclose(pauli_phi(0.0), SIGMA_X)
        assert np.allclose(pauli_phi(np.pi / 2), SIGMA_Y)

    def test_eigenvalues(self):
        # oracle: eigensolver
        vals = np.linalg.eigvalsh(pauli_phi(0.37))
        assert np.allclose(sorted(vals), [-1.0, 1.0], atol=1e-12)

    def test_squares_to_identity_and_antiperiod(self):
        rng = np.random.default_rng(7)
        for phi in rng.uniform(-np.pi, np.pi, 25):
            s = pauli_phi(phi)
            assert np.allclose(s @ s, ID2, atol=1e-12)
            assert np.allclose(pauli_phi(phi + np.pi), -s, atol=1e-12)
            assert abs(np.trace(s)) < 1e-12
            assert np.allclose(s, s.conj().T, atol=1e-15)


class TestTensor:
    def test_identity(self):
        assert np.allclose(tensor(ID2, ID2), np.eye(4))

    def test_theta1_basis_vector(self):
        assert np.allclose(tensor(SIGMA_Z, ID2), np.diag([1, 1, -1, -1]))

    def test_psi_basis_vector(self):
        assert np.allclose(tensor(SIGMA_Z, SIGMA_Z), np.diag([1, -1, -1, 1]))

    def test_associative(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        c = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert np.allclose(tensor(a, tensor(b, c)), tensor(tensor(a, b), c))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            tensor()


def _ptrace_index_sum(rho, dims, keep):
    """Independent oracle: explicit loop over traced indices."""
    dims = tuple(dims)
    keep = tuple(sorted(keep))
    traced = [i for i in range(len(dims)) if i not in keep]
    kept_dims = [dims[k] for k in keep]
    out = np.zeros((int(np.prod(kept_dims)), int(np.prod(kept_dims))), dtype=complex)
    full = rho.reshape(dims + dims)
    for ket in np.ndindex(*kept_dims):
        for bra in np.ndindex(*kept_dims):
            s = 0.0
            for tr in np.ndindex(*[dims[t] for t in traced]):
                idx_k = [0] * len(dims)
                idx_b = [0] * len(dims)
                for k, v in zip(keep, ket):
                    idx_k[k] = v
                for k, v in zip(keep, bra):
                    idx_b[k] = v
                for t, v in zip(traced, tr):
                    idx_k[t] = v
                    idx_b[t] = v
                s += full[tuple(idx_k) + tuple(idx_b)]
            out[np.ravel_multi_index(ket, kept_dims), np.ravel_multi_index(bra, kept_dims)] = s
    return out


class TestPartialTrace:
    def test_product_state(self):
        rho_q = projector(np.array([1.0, 1.0j]) / np.sqrt(2))
        rho_q = tensor(rho_q, projector(np.array([0.0, 1.0])))
        rho_m = thermal_state(5, 0.3)
        rho = tensor(rho_q, rho_m)
        red, dims = partial_trace(rho, (2, 2, 5), (0, 1))
        assert dims == (2, 2)
        assert np.allclose(red, rho_q, atol=1e-12)

    def test_bell_pair_reduces_to_mixed(self):
        # maximally entangled qubit-motion state
        psi = np.zeros(2 * 2, dtype=complex)
        psi[0] = psi[3] = 1 / np.sqrt(2)
        red, _ = partial_trace(projector(psi), (2, 2), (0,))
        assert np.allclose(red, 0.5 * ID2, atol=1e-12)

    def test_thermal_motion_kept(self):
        # oracle: index-sum implementation
        rho_m = thermal_state(6, 0.7)
        down = projector(np.array([0.0, 1.0]))
        rho = tensor(down, down, rho_m)
        red, dims = partial_trace(rho, (2, 2, 6), (2,))
        assert dims == (6,)
        assert np.allclose(red, rho_m, atol=1e-12)
        oracle = _ptrace_index_sum(rho, (2, 2, 6), (2,))
        assert np.allclose(red, oracle, atol=1e-12)

    def test_random_state_matches_index_sum(self):
        rng = np.random.default_rng(23)
        dims = (2, 2, 3)
        d = int(np.prod(dims))
        m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = m @ m.conj().T
        rho /= rho.trace()
        for keep in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]:
            red, _ = partial_trace(rho, dims, keep)
            assert np.allclose(red, _ptrace_index_sum(rho, dims, keep), atol=1e-12)
            assert abs(red.trace() - rho.trace()) < 1e-12
            assert np.allclose(red, red.conj().T, atol=1e-12)

    def test_invalid_index(self):
        rho = np.eye(4, dtype=complex) / 4
        with pytest.raises(ValueError):
            partial_trace(rho, (2, 2), (2,))


class TestDensityMatrix:
    def test_valid(self):
        rho = DensityMatrix(np.diag([0.5, 0.5, 0.0, 0.0]).astype(complex), (2, 2))
        rho.validate()

    def test_bad_trace(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(np.eye(4, dtype=complex), (2, 2)).validate()

    def test_not_hermitian(self):
        m = np.diag([1.0, 0, 0, 0]).astype(complex)
        m[0, 1] = 0.5
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(m, (2, 2)).validate()

    def test_negative_eigenvalue(self):
        m = np.diag([1.1, -0.1, 0.0, 0.0]).astype(complex)
        with pytest.raises(ValueError, match="negative"):
            DensityMatrix(m, (2, 2)).validate()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            DensityMatrix(np.eye(3, dtype=complex) / 3, (2, 2))
