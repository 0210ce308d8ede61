import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stovex import xfer
from stovex.params import BaxterPoint, weights_from_baxter, weights_from_probabilities
from stovex.xfer import (
    BoundaryConfig,
    InvariantViolation,
    asep_generator,
    brute_force_transition,
    column_sum_constant,
    commutator_norm,
    markov_block,
    normalization_form,
    r_matrix,
    r_matrix_du,
    sector_basis,
    stochasticity_negative_control,
    transfer_block,
    transfer_lambda_dependence,
    transfer_max_entry,
    verify_asep_relation,
)

P_REF = BaxterPoint(0.5, 0.3, +1)
W_REF = weights_from_baxter(P_REF)

# frozen with an independent high-precision 4x4 sandwich multiplication
R_REF = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.79202831848354799, 0.56532564270024339, 0.0],
        [0.0, 0.20797168151645201, 0.43467435729975661, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)


def bf_as_matrix(M, m, w):
    basis = sector_basis(M, m)
    T = np.zeros((len(basis), len(basis)))
    for j, alpha in enumerate(basis):
        for beta, weight in brute_force_transition(alpha, w).items():
            T[basis.index(beta), j] = weight
    return T


class TestRMatrix:
    def test_reference_entries(self):
        assert np.abs(r_matrix(P_REF) - R_REF).max() < 1e-15

    def test_a_entry_is_one(self):
        R = r_matrix(BaxterPoint(0.8, 1.1))
        assert R[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert R[3, 3] == pytest.approx(1.0, abs=1e-15)

    def test_small_u_is_permutation(self):
        R = r_matrix(BaxterPoint(1e-9, 0.6))
        P = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], float)
        assert np.abs(R - P).max() < 1e-8

    def test_ice_rule_zero_pattern(self):
        R = r_matrix(P_REF)
        mask = R_REF != 0
        assert np.all(R[~mask] == 0.0)

    def test_derivative_against_central_difference(self):
        p = BaxterPoint(0.7, 0.4)
        h = 1e-6
        H = -p.eta / 2.0
        lam = math.exp(-p.u)
        Rp = xfer._sandwich(p.u + h, p.eta, H, lam)
        Rm = xfer._sandwich(p.u - h, p.eta, H, lam)
        fd = (Rp - Rm) / (2 * h)
        assert np.abs(r_matrix_du(p) - fd).max() < 1e-7

    def test_derivative_zero_pattern_and_c_entries(self):
        dR = r_matrix_du(P_REF)
        assert dR[0, 0] == pytest.approx(math.cosh(0.8), abs=1e-15)
        # the c positions hold sinh(eta), constant in u
        assert dR[1, 2] == 0.0 and dR[2, 1] == 0.0
        mask = R_REF != 0
        assert np.all(dR[~mask] == 0.0)


class TestBasis:
    def test_bitstring_order(self):
        basis = sector_basis(2, 1)
        assert [c.occupied for c in basis] == [(1,), (0,)]

    def test_sizes(self):
        assert len(sector_basis(6, 3)) == 20
        assert len(sector_basis(5, 0)) == 1

    def test_boundary_config_validation(self):
        with pytest.raises(ValueError):
            BoundaryConfig(4, (0, 0))
        with pytest.raises(ValueError):
            BoundaryConfig(4, (4,))


class TestTransferBlock:
    def test_single_site_sectors(self):
        w = W_REF
        t0 = transfer_block(1, 0, w).matrix
        t1 = transfer_block(1, 1, w).matrix
        assert t0[0, 0] == pytest.approx(1 + w.b1, abs=1e-15)
        assert t1[0, 0] == pytest.approx(1 + w.b2, abs=1e-15)

    def test_two_site_one_particle(self):
        w = W_REF
        T = transfer_block(2, 1, w).matrix
        expected = np.array(
            [[w.b1 + w.b2, w.c1 * w.c2], [w.c1 * w.c2, w.b1 + w.b2]]
        )
        assert np.abs(T - expected).max() < 1e-15
        sums = T.sum(axis=0)
        assert sums[0] == pytest.approx(sums[1], abs=1e-16)
        assert sums[0] == pytest.approx(1 + w.b1 * w.b2, abs=1e-15)

    def test_diagonal_without_adjacent_particles(self):
        w = W_REF
        M, alpha = 5, BoundaryConfig(5, (0, 2))
        blk = transfer_block(M, 2, w)
        i = blk.index(alpha)
        # all-stay plus the coherent full shift
        assert blk.matrix[i, i] == pytest.approx(w.b2**2 + w.b1**3, abs=1e-14)

    def test_block_structure_is_implicit(self):
        # masks with different particle number never appear in one block basis
        blk = transfer_block(5, 2, W_REF)
        assert all(c.m == 2 for c in blk.basis)

    @pytest.mark.parametrize("b1,b2", [(0.6, 0.2), (0.2, 0.6), (0.45, 0.45)])
    def test_matches_brute_force(self, b1, b2):
        w = weights_from_probabilities(b1, b2, allow_equal=True)
        for M in range(1, 7):
            for m in range(M + 1):
                T = transfer_block(M, m, w).matrix
                B = bf_as_matrix(M, m, w)
                assert np.abs(T - B).max() < 1e-12

    def test_baxter_and_probability_paths_agree(self):
        wb = W_REF
        wp = weights_from_probabilities(wb.b1, wb.b2)
        for m in range(5):
            Tb = transfer_block(4, m, wb).matrix
            Tp = transfer_block(4, m, wp).matrix
            assert np.abs(Tb - Tp).max() < 1e-14

    def test_size_guard(self):
        with pytest.raises(ValueError):
            transfer_block(15, 2, W_REF)


class TestBruteForce:
    def test_empty_sector(self):
        w = W_REF
        out = brute_force_transition(BoundaryConfig(4, ()), w)
        assert out == {BoundaryConfig(4, ()): pytest.approx(1 + w.b1**4)}

    def test_two_site_example(self):
        w = W_REF
        out = brute_force_transition(BoundaryConfig(2, (0,)), w)
        assert out[BoundaryConfig(2, (0,))] == pytest.approx(w.b2 + w.b1)
        assert out[BoundaryConfig(2, (1,))] == pytest.approx(w.c1 * w.c2)
        assert sum(out.values()) == pytest.approx(1 + w.b1 * w.b2, abs=1e-15)

    def test_enumeration_guard(self):
        w = W_REF
        with pytest.raises(ValueError):
            brute_force_transition(BoundaryConfig(24, (0,)), w)

    def test_sums_match_column_constant(self):
        w = weights_from_probabilities(0.7, 0.3)
        for M in (3, 5, 6):
            for m in range(M + 1):
                z = column_sum_constant(M, m, w)
                alpha = sector_basis(M, m)[0]
                total = sum(brute_force_transition(alpha, w).values())
                assert total == pytest.approx(z, rel=1e-13)


class TestStochasticity:
    def test_column_constants_closed_form(self):
        w = weights_from_probabilities(0.6, 0.2)
        for M in range(2, 9):
            assert column_sum_constant(M, 0, w) == pytest.approx(1 + w.b1**M, rel=1e-13)
            assert column_sum_constant(M, M, w) == pytest.approx(1 + w.b2**M, rel=1e-13)
        assert column_sum_constant(2, 1, w) == pytest.approx(1 + w.b1 * w.b2, rel=1e-14)

    def test_equal_b_kills_ambiguity(self):
        w = weights_from_probabilities(0.4, 0.4, allow_equal=True)
        for m in range(6):
            assert column_sum_constant(5, m, w) == pytest.approx(1 + 0.4**5, rel=1e-13)
            assert normalization_form(5, m, w) == "both"

    def test_matched_form_is_hole_particle_pattern(self):
        # the measured constant follows 1 + b1^(M-m) b2^m across the grid
        for b1 in (0.2, 0.5, 0.8):
            for b2 in (0.2, 0.5, 0.8):
                if b1 == b2:
                    continue
                w = weights_from_probabilities(b1, b2)
                for M in (3, 5, 7):
                    for m in range(1, M):
                        assert normalization_form(M, m, w) == "b1^(M-m) b2^m"

    def test_markov_block_properties(self):
        w = weights_from_probabilities(0.8, 0.3)
        for M in range(2, 9):
            for m in range(M + 1):
                P = markov_block(M, m, w).matrix
                assert np.abs(P.sum(axis=0) - 1).max() <= 1e-12
                assert P.min() >= -1e-15
                evals = np.linalg.eigvals(P)
                assert np.abs(evals).max() <= 1 + 1e-10
                assert np.abs(evals - 1).min() <= 1e-10

    def test_zero_b_gives_cyclic_shift(self):
        w = weights_from_probabilities(0.0, 0.0, allow_equal=True)
        M, m = 6, 3
        P = markov_block(M, m, w)
        for j, alpha in enumerate(P.basis):
            shifted = BoundaryConfig(M, tuple(sorted((s + 1) % M for s in alpha.occupied)))
            col = P.matrix[:, j]
            assert col[P.index(shifted)] == pytest.approx(1.0)
            assert col.sum() == pytest.approx(1.0)

    def test_negative_control_detects_corruption(self):
        assert stochasticity_negative_control(5, 2, weights_from_probabilities(0.6, 0.2))

    def test_uniform_vector_is_stationary(self):
        # measured fact (not required of the weights a priori): within a sector the
        # chain is doubly stochastic, so the uniform vector is invariant
        w = weights_from_probabilities(0.7, 0.25)
        for M in range(2, 8):
            for m in range(1, M):
                P = markov_block(M, m, w).matrix
                u = np.full(P.shape[0], 1.0 / P.shape[0])
                assert np.abs(P @ u - u).max() < 1e-13


class TestCommutingFamily:
    def test_equal_arguments(self):
        assert commutator_norm(4, 0.5, 0.5, 0.3) == 0.0

    def test_grid(self):
        us = np.linspace(0.2, 1.2, 5)
        for eta in (0.4, 0.9):
            scale = max(transfer_max_entry(6, u, eta) for u in us)
            for i in range(len(us)):
                for j in range(i + 1, len(us)):
                    assert commutator_norm(6, us[i], us[j], eta) <= 1e-10 * scale

    def test_lambda_independence(self):
        assert transfer_lambda_dependence(5, W_REF) < 1e-14


class TestGeneratorRelation:
    def test_column_sums_zero(self):
        W = asep_generator(4, 0.7)
        assert np.abs(W.sum(axis=0)).max() < 1e-12

    def test_two_site_structure(self):
        eta = 0.9
        p = math.exp(eta) / math.sinh(eta)
        q = math.exp(-eta) / math.sinh(eta)
        W = asep_generator(2, eta)
        # basis (00, 10, 01, 11) by site bitmask; both bonds contribute
        expected = np.zeros((4, 4))
        h = np.array([[0, 0, 0, 0], [0, q, -p, 0], [0, -q, p, 0], [0, 0, 0, 0]], float)
        # bond (0, 1): local (s0, s1); bond (1, 0): local (s1, s0)
        for a in range(4):
            s0, s1 = a & 1, (a >> 1) & 1
            for b in range(4):
                t0, t1 = b & 1, (b >> 1) & 1
                expected[b, a] += h[2 * t0 + t1, 2 * s0 + s1]
                expected[b, a] += h[2 * t1 + t0, 2 * s1 + s0]
        assert np.abs(W - expected).max() < 1e-14

    def test_sign_pattern(self):
        W = asep_generator(3, 0.5)
        off = W - np.diag(np.diag(W))
        assert off.max() <= 0.0
        assert np.diag(W).min() >= 0.0

    @pytest.mark.parametrize("M", [2, 3, 4])
    @pytest.mark.parametrize("eta", [0.3, 0.7, 1.2])
    def test_relation_residual(self, M, eta):
        assert verify_asep_relation(M, BaxterPoint(0.5, eta)) <= 1e-9

    def test_relation_u_independent(self):
        # only eta and branch enter; the relation is evaluated at u -> 0
        r1 = verify_asep_relation(3, BaxterPoint(0.2, 0.7))
        r2 = verify_asep_relation(3, BaxterPoint(1.5, 0.7))
        assert r1 == r2

    def test_relation_mirror_branch(self):
        assert verify_asep_relation(3, BaxterPoint(0.5, 0.8, -1)) <= 1e-9


def test_dump_matrix_roundtrip(tmp_path):
    blk = transfer_block(4, 2, W_REF)
    path = tmp_path / "block.txt"
    xfer.dump_matrix(path, blk)
    lines = path.read_text().splitlines()
    assert lines[0] == "# 4 2 6 6"
    data = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    assert np.abs(data - blk.matrix).max() < 1e-16
