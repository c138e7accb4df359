import itertools

import numpy as np
import pytest

from lattice_echo.core import (ball_volume, dual_lattice, gauss_discrepancy, lattices_equivalent,
                               make_lattice, points_in_ball, predicted_count, reduce_basis)
from lattice_echo.exceptions import DimensionMismatch, SingularBasis, WindowTooLarge


L2_BASIS = [[2.0, 0.5], [0.0, 0.5]]


def sorted_rows(points, decimals=9):
    rows = np.round(np.array([p.position for p in points]), decimals)
    return rows[np.lexsort(rows.T[::-1])]


def shortest_vector(basis, bound=10):
    best = np.inf
    for coeffs in itertools.product(range(-bound, bound + 1), repeat=basis.shape[0]):
        if any(coeffs):
            best = min(best, np.linalg.norm(basis @ np.array(coeffs)))
    return best


class TestMakeLattice():
    def test_identity(self):
        lattice = make_lattice(np.eye(2))
        assert lattice.covolume == 1.0
        assert np.array_equal(lattice.dual_basis, np.eye(2))

    def test_skew_basis(self):
        lattice = make_lattice(L2_BASIS)
        assert lattice.covolume == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(lattice.dual_basis, [[0.5, 0.0], [-0.5, 2.0]], atol=1e-12)
        assert np.allclose(lattice.basis.T @ lattice.dual_basis, np.eye(2), atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularBasis):
            make_lattice([[1.0, 1.0], [1.0, 1.0]])

    def test_not_square(self):
        with pytest.raises(ValueError):
            make_lattice([[1.0, 0.0]])

    def test_coefficients_of_positions(self):
        lattice = make_lattice(L2_BASIS)
        coeffs = np.array([[3, -2], [0, 5]])
        assert np.allclose(lattice.coefficients(lattice.position(coeffs)), coeffs, atol=1e-12)


class TestDual():
    def test_diagonal(self):
        dual = dual_lattice(make_lattice([[2.0, 0.0], [0.0, 0.5]]))
        assert np.allclose(dual.basis, [[0.5, 0.0], [0.0, 2.0]], atol=1e-12)
        assert dual.covolume == pytest.approx(1.0)

    def test_involution(self):
        lattice = make_lattice(L2_BASIS)
        assert np.allclose(dual_lattice(dual_lattice(lattice)).basis, lattice.basis, atol=1e-12)

    def test_covolume_inverts(self):
        lattice = make_lattice([[3.0, 1.0], [0.0, 2.0]])
        assert lattice.dual().covolume == pytest.approx(1/6, rel=1e-12)


class TestPointsInBall():
    @pytest.mark.parametrize('radius, count', [(0, 1), (2, 13), (10, 317)])
    def test_z2_counts(self, radius, count):
        assert len(points_in_ball(make_lattice(np.eye(2)), radius)) == count

    def test_lexicographic_order(self):
        coeffs = [p.coeffs for p in points_in_ball(make_lattice(L2_BASIS), 5)]
        assert coeffs == sorted(coeffs)

    def test_all_within_radius(self):
        points = points_in_ball(make_lattice(L2_BASIS), 7.5)
        assert all(p.norm <= 7.5 for p in points)

    def test_nested_balls(self):
        lattice = make_lattice(L2_BASIS)
        small = {p.coeffs for p in points_in_ball(lattice, 4)}
        large = {p.coeffs for p in points_in_ball(lattice, 6)}
        assert small <= large

    def test_unimodular_change_of_basis(self):
        basis = np.array(L2_BASIS)
        unimodular = np.array([[1, 2], [0, 1]]) @ np.array([[1, 0], [-1, 1]])
        assert abs(np.linalg.det(unimodular)) == pytest.approx(1.0)

        before = sorted_rows(points_in_ball(make_lattice(basis), 10.3))
        after = sorted_rows(points_in_ball(make_lattice(basis @ unimodular), 10.3))
        assert np.array_equal(before, after)

    def test_cap(self):
        with pytest.raises(WindowTooLarge):
            points_in_ball(make_lattice(np.eye(2)), 100, cap=1000)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            points_in_ball(make_lattice(np.eye(2)), -1)


class TestGaussDiscrepancy():
    def test_z2(self):
        count, discrepancy = gauss_discrepancy(make_lattice(np.eye(2)), 10)
        assert count == 317
        assert discrepancy == pytest.approx(2.84, abs=0.01)

    def test_z1(self):
        count, discrepancy = gauss_discrepancy(make_lattice([[1.0]]), 5)
        assert count == 11
        assert discrepancy == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize('basis', [np.eye(2), L2_BASIS])
    def test_boundary_scaling(self, basis):
        lattice = make_lattice(basis)
        for radius in range(10, 201, 10):
            _, discrepancy = gauss_discrepancy(lattice, radius)
            assert discrepancy/radius <= 6

    def test_small_radius(self):
        with pytest.raises(ValueError):
            gauss_discrepancy(make_lattice(np.eye(2)), 0.5)

    def test_predicted_count(self):
        lattice = make_lattice(2*np.eye(3))
        assert predicted_count(lattice, 2.0) == pytest.approx(ball_volume(3, 2.0)/8)


class TestReduceBasis():
    def test_sheared_z2(self):
        reduced = reduce_basis(np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert np.allclose(np.linalg.norm(reduced, axis=0), 1.0)
        assert lattices_equivalent(reduced, np.eye(2))

    def test_skew_lattice_shortest_first(self):
        basis = np.array(L2_BASIS)
        reduced = reduce_basis(basis)
        assert lattices_equivalent(reduced, basis)
        assert np.linalg.norm(reduced[:, 0]) == pytest.approx(shortest_vector(basis), abs=1e-12)
        assert np.linalg.norm(reduced[:, 0]) <= np.linalg.norm(reduced[:, 1])

    def test_idempotent(self):
        basis = np.array([[5.0, 3.0], [1.0, 4.0]])
        once = reduce_basis(basis)
        twice = reduce_basis(once)
        assert lattices_equivalent(once, twice)
        assert np.allclose(np.linalg.norm(once, axis=0), np.linalg.norm(twice, axis=0))

    def test_accepts_lattice_spec(self):
        lattice = make_lattice(L2_BASIS)
        assert lattices_equivalent(reduce_basis(lattice), lattice.basis)

    def test_one_dimensional_sign(self):
        assert np.array_equal(reduce_basis(np.array([[-2.0]])), [[2.0]])

    def test_three_dimensional(self):
        basis = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 4.0], [0.0, 0.0, 1.0]])
        reduced = reduce_basis(basis)
        assert lattices_equivalent(reduced, np.eye(3))
        assert np.linalg.norm(reduced[:, 0]) <= 2.0

    def test_singular(self):
        with pytest.raises(SingularBasis):
            reduce_basis(np.array([[1.0, 2.0], [2.0, 4.0]]))


class TestEquivalence():
    def test_basis_change(self):
        assert lattices_equivalent([[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [0.0, 1.0]])

    def test_sublattice(self):
        assert not lattices_equivalent(np.eye(2), 2*np.eye(2))

    def test_tolerance(self):
        assert lattices_equivalent(np.eye(2), np.eye(2) + 1e-8)
        assert not lattices_equivalent(np.eye(2), 1.01*np.eye(2), tol=1e-3)

    def test_dimensions(self):
        with pytest.raises(DimensionMismatch):
            lattices_equivalent(np.eye(2), np.eye(3))


if __name__ == '__main__':
    import timeit

    lattice = make_lattice(L2_BASIS)
    for radius in (100, 300, 1000):
        t = timeit.timeit(lambda: points_in_ball(lattice, radius), number=1)
        print(f'time points_in_ball with R={radius} (in sec):', t)
