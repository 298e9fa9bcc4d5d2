import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affdim.affine import (
    E1,
    E2,
    AffineMap2,
    ProjectivePoint,
    affine_compose,
    affine_invert,
    invariant_distance,
    major_direction,
    norm_distance,
    projection_of_composition,
    rotation,
    rp1_distance,
    singular_values,
    svd2,
)
from affdim.exceptions import EqualSingularValues, SingularMatrix
from affdim.fixtures import parabola_map


def unit_circle(m=10_000):
    t = np.linspace(0, 2 * np.pi, m, endpoint=False)
    return np.stack([np.cos(t), np.sin(t)], axis=1)


class TestSvd2:
    def test_diag_power_of_two(self):
        s = svd2(np.diag([1.0, 2.0**-4]))
        assert (s.alpha1, s.alpha2) == (1.0, 0.0625)

    def test_rotation_is_isometry(self):
        s = svd2(rotation(0.7))
        assert s.alpha1 == pytest.approx(1.0, abs=1e-15)
        assert s.alpha2 == pytest.approx(1.0, abs=1e-15)

    def test_shear(self):
        # eigenvalues of A A^T = [[2,1],[1,1]] are (3 +- sqrt 5)/2
        lam = np.array([(3 + 5**0.5) / 2, (3 - 5**0.5) / 2])
        s = svd2(np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert s.alpha1 == pytest.approx(np.sqrt(lam[0]), rel=1e-14)
        assert s.alpha2 == pytest.approx(np.sqrt(lam[1]), rel=1e-14)
        assert s.alpha1 == pytest.approx((1 + 5**0.5) / 2, rel=1e-14)

    def test_singular_raises(self):
        with pytest.raises(SingularMatrix):
            svd2(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_random_invariants(self, rng):
        As = rng.normal(size=(10_000, 2, 2))
        alpha1, alpha2 = singular_values(As)
        det = np.abs(np.linalg.det(As))
        assert np.max(np.abs(alpha1 * alpha2 - det) / det) < 1e-10
        for A in As[:2000]:
            s = svd2(A)
            rec = s.reconstruct()
            assert np.linalg.norm(rec - A) / np.linalg.norm(A) < 1e-9
            assert np.allclose(s.V.T @ s.V, np.eye(2), atol=1e-12)
            assert np.allclose(s.U @ s.U.T, np.eye(2), atol=1e-12)
            assert np.linalg.det(s.V) > 0
            assert s.V[1, 0] >= 0

    def test_alpha1_matches_brute_force(self, rng):
        circle = unit_circle(1000)
        for A in rng.normal(size=(200, 2, 2)):
            brute = np.linalg.norm(circle @ A.T, axis=1).max()
            assert singular_values(A)[0] == pytest.approx(brute, abs=1e-4 * brute + 1e-6)
            assert singular_values(A)[0] >= brute - 1e-12

    def test_operator_norm_characterisation(self, rng):
        for A in rng.normal(size=(100, 2, 2)):
            a1, a2 = singular_values(A)
            assert a1 == pytest.approx(np.linalg.norm(A, 2), rel=1e-12)
            assert a2 == pytest.approx(1 / np.linalg.norm(np.linalg.inv(A), 2), rel=1e-10)


class TestMajorDirection:
    def test_axes(self):
        assert major_direction(np.diag([2.0, 1.0])).angle == 0.0
        assert major_direction(np.diag([1.0, 2.0])).angle == pytest.approx(np.pi / 2)

    def test_shear_matches_eigenvector(self):
        M = np.array([[2.0, 1.0], [1.0, 1.0]])
        w, v = np.linalg.eigh(M)
        expected = ProjectivePoint.from_vector(v[:, 1])
        got = major_direction(np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert got.angle == pytest.approx(np.arctan((5**0.5 - 1) / 2), abs=1e-14)
        assert rp1_distance(got, expected) < 1e-12

    def test_equal_singular_values(self):
        with pytest.raises(EqualSingularValues):
            major_direction(0.5 * rotation(1.1))

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-3, 3), min_size=4, max_size=4),
        st.floats(0.01, 100),
    )
    def test_scale_invariant(self, entries, c):
        A = np.array(entries).reshape(2, 2)
        a1, a2 = singular_values(A)
        if abs(np.linalg.det(A)) < 1e-3 or a1 - a2 < 1e-3 * a1:
            return
        assert rp1_distance(major_direction(A), major_direction(c * A)) < 1e-9


class TestRp1Distance:
    def test_examples(self):
        assert rp1_distance(E1, E1) == 0
        assert rp1_distance(E1, E2) == pytest.approx(1.0)
        assert rp1_distance(E1, ProjectivePoint(np.pi / 4)) == pytest.approx(2**0.5 / 2)

    def test_equals_projection_operator_norm(self, rng):
        for a, b in rng.uniform(0, np.pi, size=(10_000, 2)):
            V, W = ProjectivePoint(a), ProjectivePoint(b)
            d = rp1_distance(V, W)
            oracle = np.linalg.norm(V.projector() - W.projector(), 2)
            assert d == pytest.approx(oracle, abs=1e-10)
            assert 0 <= d <= 1 and d == rp1_distance(W, V)

    def test_angle_reduction(self):
        assert ProjectivePoint(np.pi + 0.25).angle == pytest.approx(0.25)
        assert ProjectivePoint(-0.25).angle == pytest.approx(np.pi - 0.25)


class TestProjectionOfComposition:
    def brute(self, W, phi):
        u = unit_circle()
        vals = u @ phi.A.T @ W.vector
        j = np.argmax(np.abs(vals))
        return np.abs(vals[j]), ProjectivePoint.from_vector(u[j]), W.vector @ phi.b

    def test_identity(self):
        assert projection_of_composition(E1, AffineMap2.identity()) == (1.0, E1, 0.0)

    def test_diagonal(self):
        scale, direction, offset = projection_of_composition(E1, AffineMap2(np.diag([2.0, 3.0])))
        assert (scale, direction.angle, offset) == (2.0, 0.0, 0.0)

    def test_shear_against_brute_force(self):
        phi = AffineMap2([[1.0, 1.0], [0.0, 1.0]], [0.0, 1.0])
        scale, direction, offset = projection_of_composition(E1, phi)
        b_scale, b_dir, b_off = self.brute(E1, phi)
        assert scale == pytest.approx(b_scale, abs=1e-7)
        assert scale == pytest.approx(2**0.5, abs=1e-12)
        assert rp1_distance(direction, b_dir) < 1e-3
        assert offset == b_off == 0.0

    def test_functional_identity_and_norm_lemma(self, rng):
        for _ in range(200):
            phi = AffineMap2(rng.normal(size=(2, 2)), rng.normal(size=2))
            W = ProjectivePoint(rng.uniform(0, np.pi))
            scale, direction, offset = projection_of_composition(W, phi)
            x = rng.normal(size=(5, 2))
            lhs = phi(x) @ W.vector
            # the line is unoriented; fix the sign using A^T w
            sign = np.sign(direction.vector @ (phi.A.T @ W.vector))
            rhs = sign * scale * (x @ direction.vector) + offset
            assert np.allclose(lhs, rhs, atol=1e-12)
            a1, a2 = singular_values(phi.A)
            if a1 - a2 > 1e-6 * a1:
                L = major_direction(phi.A)
                lower = a1 * abs(np.sin(L.angle - W.perp.angle))
                assert lower - 1e-12 <= scale <= a1 + 1e-12


class TestGroupOperations:
    def test_translations(self):
        f = AffineMap2.translation([1, 2])
        g = AffineMap2.translation([3, 4])
        assert affine_compose(f, g) == AffineMap2.translation([4, 6])

    def test_inverse(self, rng):
        for _ in range(100):
            f = AffineMap2(rng.normal(size=(2, 2)), rng.normal(size=2))
            h = affine_compose(f, affine_invert(f))
            assert np.allclose(h.A, np.eye(2), atol=1e-12 * np.linalg.cond(f.A))
            assert np.allclose(h.b, 0, atol=1e-12 * np.linalg.cond(f.A) * (1 + np.abs(f.b).max()))

    def test_composition_is_application(self, rng):
        f = AffineMap2(rng.normal(size=(2, 2)), rng.normal(size=2))
        g = AffineMap2(rng.normal(size=(2, 2)), rng.normal(size=2))
        x = rng.normal(size=(10, 2))
        assert np.allclose((f @ g)(x), f(g(x)))

    def test_parabola_parameter_law(self):
        for s1, t1, s2, t2 in [(0.5, 0.0, 0.5, 1.0), (0.5, 0.53, 0.5, 1.0), (0.25, 0.2, 0.5, 0.3)]:
            comp = affine_compose(parabola_map(s1, t1), parabola_map(s2, t2))
            expected = parabola_map(s1 * s2, s1 * t2 + t1)
            assert np.allclose(comp.A, expected.A, atol=1e-15)
            assert np.allclose(comp.b, expected.b, atol=1e-15)
        comp = affine_compose(parabola_map(0.5, 0.0), parabola_map(0.5, 1.0))
        assert comp.A[0, 0] == 0.25 and comp.A[1, 1] == 0.0625

    def test_singular_inverse(self):
        with pytest.raises(SingularMatrix):
            affine_invert(AffineMap2(np.zeros((2, 2))))


class TestDistances:
    def test_norm_distance(self):
        idm = AffineMap2.identity()
        assert norm_distance(idm, idm) == 0
        assert norm_distance(idm, AffineMap2.translation([3, 4])) == 5.0
        assert norm_distance(idm, AffineMap2(np.diag([2.0, 1.0]))) == 1.0

    def test_invariant_distance_value(self):
        d = invariant_distance(AffineMap2(np.diag([2.0, 2.0])), AffineMap2.identity())
        assert d == pytest.approx(2**0.5 + 2**0.5 / 2, abs=1e-14)
        f = AffineMap2([[1, 2], [3, 5]], [1, 1])
        assert invariant_distance(f, f) == 0

    def test_left_invariance(self, rng):
        worst = 0.0
        for _ in range(10_000):
            q, f, g = (
                AffineMap2(np.eye(2) + 0.4 * rng.normal(size=(2, 2)), rng.normal(size=2))
                for _ in range(3)
            )
            if min(abs(np.linalg.det(m.A)) for m in (q, f, g)) < 0.05:
                continue
            worst = max(worst, abs(invariant_distance(q @ f, q @ g) - invariant_distance(f, g)))
        assert worst < 1e-9

    def test_symmetric_and_positive(self, rng):
        for _ in range(500):
            f = AffineMap2(np.eye(2) + 0.3 * rng.normal(size=(2, 2)), rng.normal(size=2))
            g = AffineMap2(np.eye(2) + 0.3 * rng.normal(size=(2, 2)), rng.normal(size=2))
            assert invariant_distance(f, g) == pytest.approx(invariant_distance(g, f), rel=1e-9)
            assert invariant_distance(f, g) > 0

    def test_quasi_triangle_on_bounded_ball(self, rng):
        idm = AffineMap2.identity()
        pool = []
        while len(pool) < 3000:
            h = AffineMap2(np.eye(2) + 0.35 * rng.normal(size=(2, 2)), 0.35 * rng.normal(size=2))
            if abs(np.linalg.det(h.A)) > 0.1 and invariant_distance(h, idm) <= 2:
                pool.append(h)
        worst = 0.0
        idx = rng.integers(0, len(pool), size=(10_000, 3))
        for i, j, k in idx:
            f, g, h = pool[i], pool[j], pool[k]
            lhs = invariant_distance(f, h)
            rhs = invariant_distance(f, g) + invariant_distance(g, h)
            if rhs > 0:
                worst = max(worst, lhs / rhs)
        assert worst <= 4
