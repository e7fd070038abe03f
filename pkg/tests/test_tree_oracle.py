"""Spanning-tree oracles: symbolic expansions and numeric cross-checks."""

import numpy as np
import pytest
import sympy

from mlpagerank import (
    ROW,
    TripletMMatrix,
    tree_oracle_adj,
    tree_oracle_det,
    tree_oracle_rs,
    triplet_weights,
)


def symbolic_weights(n):
    W = [[sympy.Integer(0)] * (n + 1) for _ in range(n)]
    for i in range(1, n + 1):
        for j in range(0, n + 1):
            if j != i:
                W[i - 1][j] = sympy.Symbol(f"w_{i}{j}")
    return W


def w(i, j):
    return sympy.Symbol(f"w_{i}{j}")


class TestSymbolicExpansions:
    def test_three_node_determinant_has_sixteen_monomials(self):
        W = symbolic_weights(3)
        det = sympy.expand(tree_oracle_det(W))
        expected = sympy.expand(
            w(1, 0) * w(2, 0) * w(3, 0)
            + w(1, 0) * w(2, 0) * w(3, 1)
            + w(1, 0) * w(2, 1) * w(3, 0)
            + w(1, 0) * w(2, 0) * w(3, 2)
            + w(1, 0) * w(2, 1) * w(3, 1)
            + w(1, 2) * w(2, 0) * w(3, 0)
            + w(1, 0) * w(2, 1) * w(3, 2)
            + w(1, 0) * w(2, 3) * w(3, 0)
            + w(1, 2) * w(2, 0) * w(3, 1)
            + w(1, 3) * w(2, 0) * w(3, 0)
            + w(1, 0) * w(2, 3) * w(3, 1)
            + w(1, 2) * w(2, 0) * w(3, 2)
            + w(1, 3) * w(2, 1) * w(3, 0)
            + w(1, 2) * w(2, 3) * w(3, 0)
            + w(1, 3) * w(2, 0) * w(3, 2)
            + w(1, 3) * w(2, 3) * w(3, 0)
        )
        assert len(det.args) == 16
        assert sympy.simplify(det - expected) == 0

    def test_three_node_adjugate_entry_21(self):
        W = symbolic_weights(3)
        adj = tree_oracle_adj(W)
        expected = (
            w(2, 1) * w(3, 0)
            + w(2, 1) * w(3, 1)
            + w(2, 1) * w(3, 2)
            + w(2, 3) * w(3, 1)
        )
        assert sympy.simplify(sympy.expand(adj[1, 0]) - expected) == 0

    def test_symbolic_det_matches_matrix_determinant(self):
        W = symbolic_weights(3)
        M = sympy.zeros(3, 3)
        for i in range(1, 4):
            M[i - 1, i - 1] = sum(W[i - 1][j] for j in range(4) if j != i)
            for j in range(1, 4):
                if j != i:
                    M[i - 1, j - 1] = -W[i - 1][j]
        assert sympy.simplify(tree_oracle_det(W) - M.det()) == 0


class TestNumericOracles:
    def test_two_node_all_ones(self):
        W = np.zeros((2, 3))
        W[0, [0, 2]] = 1.0
        W[1, [0, 1]] = 1.0
        # w10 w20 + w10 w21 + w12 w20 = 3, the determinant of [[2,-1],[-1,2]]
        assert tree_oracle_det(W) == 3.0
        M = np.array([[2.0, -1.0], [-1.0, 2.0]])
        assert tree_oracle_det(W) == pytest.approx(np.linalg.det(M))

    def test_det_matches_direct_determinant(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 5))
            T = TripletMMatrix(
                np.where(np.eye(n, dtype=bool), 0.0, rng.random((n, n)) + 0.1),
                rng.random(n) + 0.1,
                ROW,
            )
            det = tree_oracle_det(triplet_weights(T))
            direct = np.linalg.det(T.materialize())
            assert abs(det - direct) <= 1e-12 * abs(direct)

    def test_adjugate_matches_inverse(self, rng):
        T = TripletMMatrix(
            np.where(np.eye(4, dtype=bool), 0.0, rng.random((4, 4)) + 0.1),
            rng.random(4) + 0.1,
            ROW,
        )
        W = triplet_weights(T)
        adj = tree_oracle_adj(W).astype(np.float64)
        det = tree_oracle_det(W)
        minv = np.linalg.inv(T.materialize())
        assert np.max(np.abs(adj / det - minv)) <= 1e-11 * np.abs(minv).max()

    def test_rs_split_reconstructs_adjugate(self, rng):
        T = TripletMMatrix(
            np.where(np.eye(3, dtype=bool), 0.0, rng.random((3, 3)) + 0.2),
            rng.random(3) + 0.2,
            ROW,
        )
        pi = tree_oracle_rs(triplet_weights(T))
        minv = np.linalg.inv(T.materialize())
        assert np.max(np.abs(pi.inverse() - minv)) <= 1e-12

    def test_size_limit(self):
        with pytest.raises(ValueError, match="limited"):
            tree_oracle_det(np.ones((7, 8)))
