import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdc_qpa.quantum_core import (
    BB84_LABELS,
    Basis,
    Bb84Label,
    CollapseError,
    DensityMatrix2,
    Qubit,
    TwoQubitState,
    apply_cnot,
    apply_flip,
    apply_h_control,
    basis_of,
    bb84_to_qubit,
    equal_up_to_phase,
    measure_qubit,
    measure_second_z,
    mixture_density,
    tensor,
)

S = 1 / math.sqrt(2)

# independent oracles: explicit matrices in the |00>,|01>,|10>,|11> basis
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * S
H_FIRST = np.kron(H, np.eye(2))


def random_two_qubit(rng):
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return TwoQubitState.from_array(v / np.linalg.norm(v))


unit_complex_pairs = st.tuples(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).filter(lambda t: sum(x * x for x in t) > 1e-6)


def qubit_from(t):
    n = math.sqrt(sum(x * x for x in t))
    return Qubit(complex(t[0], t[1]) / n, complex(t[2], t[3]) / n)


class TestTypes:
    def test_unnormalized_qubit_rejected(self):
        with pytest.raises(ValueError):
            Qubit(1, 1)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Qubit(float("nan"), 0)

    def test_unnormalized_two_qubit_rejected(self):
        with pytest.raises(ValueError):
            TwoQubitState(1, 1, 0, 0)

    def test_non_hermitian_density_rejected(self):
        with pytest.raises(ValueError):
            DensityMatrix2(0.5, 0.1, 0.2, 0.5)

    def test_negative_eigenvalue_density_rejected(self):
        with pytest.raises(ValueError):
            DensityMatrix2(0.5, 0.9, 0.9, 0.5)

    def test_bases(self):
        assert basis_of(Bb84Label.PLUS_Z) is Basis.Z
        assert basis_of(Bb84Label.MINUS_Z) is Basis.Z
        assert basis_of(Bb84Label.PLUS_X) is Basis.X
        assert basis_of(Bb84Label.MINUS_X) is Basis.X
        assert len(BB84_LABELS) == 4


class TestBb84ToQubit:
    def test_plus_z(self):
        q = bb84_to_qubit(Bb84Label.PLUS_Z)
        assert (q.a, q.b) == (1, 0)

    def test_plus_x(self):
        q = bb84_to_qubit(Bb84Label.PLUS_X)
        assert q.a == pytest.approx(S, abs=1e-15) and q.b == pytest.approx(S, abs=1e-15)

    def test_minus_x(self):
        q = bb84_to_qubit(Bb84Label.MINUS_X)
        assert q.a == pytest.approx(S, abs=1e-15) and q.b == pytest.approx(-S, abs=1e-15)

    @pytest.mark.parametrize("label", BB84_LABELS)
    def test_real_amplitudes(self, label):
        q = bb84_to_qubit(label)
        assert q.a.imag == 0 and q.b.imag == 0
        for amp in (q.a.real, q.b.real):
            assert min(abs(amp - v) for v in (0, 1, S, -S)) < 1e-15


class TestTensor:
    def test_basis_product(self):
        s = tensor(Qubit(1, 0), Qubit(1, 0))
        assert (s.c00, s.c01, s.c10, s.c11) == (1, 0, 0, 0)

    def test_plus_x_zero(self):
        s = tensor(bb84_to_qubit(Bb84Label.PLUS_X), Qubit(1, 0))
        assert s.c00 == pytest.approx(S) and s.c10 == pytest.approx(S)
        assert s.c01 == 0 and s.c11 == 0

    def test_direct_multiplication(self):
        s = tensor(Qubit(0.6, 0.8), Qubit(1, 0))
        assert s.c00 == pytest.approx(0.6, abs=1e-15)
        assert s.c10 == pytest.approx(0.8, abs=1e-15)
        assert s.c01 == 0 and s.c11 == 0

    @settings(max_examples=200)
    @given(unit_complex_pairs, unit_complex_pairs)
    def test_matches_kron(self, t1, t2):
        q1, q2 = qubit_from(t1), qubit_from(t2)
        np.testing.assert_allclose(tensor(q1, q2).to_array(), np.kron(q1.to_array(), q2.to_array()), atol=1e-15)


class TestGates:
    def test_cnot_truth_table(self):
        assert apply_cnot(TwoQubitState(0, 0, 1, 0)).c11 == 1
        assert apply_cnot(TwoQubitState(1, 0, 0, 0)).c00 == 1

    def test_cnot_uniform(self):
        s = TwoQubitState(0.5, 0.5, 0.5, 0.5)
        np.testing.assert_allclose(apply_cnot(s).to_array(), CNOT @ s.to_array(), atol=1e-15)
        np.testing.assert_allclose(apply_cnot(s).to_array(), [0.5] * 4, atol=1e-15)

    def test_h_on_zero_and_one(self):
        s = apply_h_control(TwoQubitState(1, 0, 0, 0))
        assert s.c00 == pytest.approx(S) and s.c10 == pytest.approx(S)
        s = apply_h_control(TwoQubitState(0, 0, 1, 0))
        assert s.c00 == pytest.approx(S) and s.c10 == pytest.approx(-S)

    def test_unitarity_oracle_1000(self):
        rng = np.random.default_rng(20240611)
        for _ in range(1000):
            s = random_two_qubit(rng)
            np.testing.assert_allclose(apply_cnot(s).to_array(), CNOT @ s.to_array(), rtol=0, atol=1e-13)
            np.testing.assert_allclose(apply_h_control(s).to_array(), H_FIRST @ s.to_array(), rtol=0, atol=1e-13)

    def test_involutions(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            s = random_two_qubit(rng)
            np.testing.assert_allclose(apply_h_control(apply_h_control(s)).to_array(), s.to_array(), atol=1e-12)
            assert apply_cnot(apply_cnot(s)) == s

    def test_per_gate_norm_drift(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            s = random_two_qubit(rng)
            for gate in (apply_cnot, apply_h_control):
                assert abs(gate(s).norm_squared() - s.norm_squared()) < 1e-14

    def test_long_sequence_norm_drift(self):
        rng = np.random.default_rng(12)
        s = random_two_qubit(rng)
        for i in range(10_000):
            s = apply_h_control(s) if i % 3 else apply_cnot(s)
        assert abs(s.norm_squared() - 1.0) < 1e-10


class TestFlip:
    def test_zero_to_one(self):
        q = apply_flip(Qubit(1, 0))
        assert (q.a, q.b) == (0, -1)
        assert equal_up_to_phase(q, Qubit(0, 1))

    def test_plus_x_to_minus_x(self):
        q = apply_flip(bb84_to_qubit(Bb84Label.PLUS_X))
        oracle = np.array([[0, 1], [-1, 0]]) @ np.array([S, S])
        np.testing.assert_allclose(q.to_array(), oracle, atol=1e-15)
        assert equal_up_to_phase(q, bb84_to_qubit(Bb84Label.MINUS_X))

    @pytest.mark.parametrize("label", BB84_LABELS)
    def test_flip_goes_to_orthogonal_in_basis(self, label):
        assert equal_up_to_phase(apply_flip(bb84_to_qubit(label)), bb84_to_qubit(label.orthogonal))

    @given(unit_complex_pairs)
    def test_flip_twice_is_minus_identity(self, t):
        q = qubit_from(t)
        twice = apply_flip(apply_flip(q))
        assert twice.a == -q.a and twice.b == -q.b
        assert equal_up_to_phase(twice, q)


class TestMeasureSecondZ:
    def test_bell_like(self):
        bit, q = measure_second_z(TwoQubitState(S, 0, 0, S), 0.3)
        assert bit == 0 and equal_up_to_phase(q, Qubit(1, 0))

    @pytest.mark.parametrize("u", [0.0, 0.5, 0.999])
    def test_deterministic_branch(self, u):
        bit, q = measure_second_z(TwoQubitState(0, 1, 0, 0), u)
        assert bit == 1 and equal_up_to_phase(q, Qubit(1, 0))

    def test_qpa_output_plus_z_plus_z(self):
        # (|00> + |11>)/sqrt2 is the circuit output for (+z, +z)
        bit, q = measure_second_z(TwoQubitState(S, 0, 0, S), 0.7)
        assert bit == 1 and equal_up_to_phase(q, Qubit(0, 1))

    def test_degenerate_branch(self):
        s = TwoQubitState(math.sqrt(1 - 1e-14), 1e-7, 0, 0)
        with pytest.raises(CollapseError):
            measure_second_z(s, 0.9999999999999999)

    @given(unit_complex_pairs, unit_complex_pairs, st.floats(0, 1, exclude_max=True))
    def test_retained_unit_norm(self, t1, t2, u):
        try:
            _, q = measure_second_z(tensor(qubit_from(t1), qubit_from(t2)), u)
        except CollapseError:
            return
        assert abs(q.norm_squared() - 1) < 1e-12


class TestMeasureQubit:
    @pytest.mark.parametrize("u", [0.0, 0.3, 0.999])
    def test_eigenstate(self, u):
        assert measure_qubit(bb84_to_qubit(Bb84Label.PLUS_X), Basis.X, u) is Bb84Label.PLUS_X
        assert measure_qubit(Qubit(0, 1), Basis.Z, u) is Bb84Label.MINUS_Z

    def test_zero_in_x_threshold(self):
        assert measure_qubit(Qubit(1, 0), Basis.X, 0.2) is Bb84Label.PLUS_X
        assert measure_qubit(Qubit(1, 0), Basis.X, 0.8) is Bb84Label.MINUS_X

    @pytest.mark.parametrize("label", BB84_LABELS)
    @pytest.mark.parametrize("u", [0, 0.25, 0.5, 0.75, 0.999])
    def test_basis_determinism(self, label, u):
        assert measure_qubit(bb84_to_qubit(label), basis_of(label), u) is label

    def test_born_rule_frequency(self):
        q = Qubit(0.6, 0.8)
        rng = np.random.default_rng(3)
        n = 100_000
        plus = sum(measure_qubit(q, Basis.Z, u) is Bb84Label.PLUS_Z for u in rng.random(n))
        sigma = math.sqrt(0.36 * 0.64 / n)
        assert abs(plus / n - 0.36) < 4 * sigma


class TestEqualUpToPhase:
    def test_minus_sign(self):
        q = bb84_to_qubit(Bb84Label.MINUS_X)
        assert equal_up_to_phase(q, Qubit(-q.a, -q.b))

    def test_complex_phase(self):
        q = Qubit(0.6, 0.8j)
        z = complex(math.cos(1.1), math.sin(1.1))
        assert equal_up_to_phase(q, Qubit(z * q.a, z * q.b))

    def test_orthogonal(self):
        assert not equal_up_to_phase(Qubit(1, 0), Qubit(0, 1))

    def test_close_but_different(self):
        # overlap 0.96
        assert not equal_up_to_phase(Qubit(0.6, 0.8), Qubit(0.8, 0.6), tol=1e-9)


class TestMixtureDensity:
    def test_four_bb84_states(self):
        rho = mixture_density((0.25, bb84_to_qubit(label)) for label in BB84_LABELS)
        np.testing.assert_allclose(rho.to_array(), 0.5 * np.eye(2), atol=1e-12)

    def test_pure(self):
        rho = mixture_density([(1.0, Qubit(1, 0))])
        np.testing.assert_allclose(rho.to_array(), np.diag([1, 0]), atol=1e-15)

    def test_z_mixture(self):
        rho = mixture_density([(0.5, Qubit(1, 0)), (0.5, Qubit(0, 1))])
        np.testing.assert_allclose(rho.to_array(), 0.5 * np.eye(2), atol=1e-15)

    def test_weight_sum_violation(self):
        with pytest.raises(ValueError):
            mixture_density([(0.5, Qubit(1, 0)), (0.4, Qubit(0, 1))])

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            mixture_density([(1.5, Qubit(1, 0)), (-0.5, Qubit(0, 1))])

    @given(st.lists(unit_complex_pairs, min_size=1, max_size=6))
    def test_matches_outer_product_oracle(self, ts):
        qs = [qubit_from(t) for t in ts]
        w = 1.0 / len(qs)
        rho = mixture_density((w, q) for q in qs)
        oracle = sum(w * np.outer(q.to_array(), q.to_array().conj()) for q in qs)
        np.testing.assert_allclose(rho.to_array(), oracle, atol=1e-12)
        lo, hi = rho.eigenvalues()
        np.testing.assert_allclose([lo, hi], np.linalg.eigvalsh(oracle), atol=1e-12)
