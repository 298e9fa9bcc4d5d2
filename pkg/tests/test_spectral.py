import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affdim import fixtures
from affdim.affine import E1, E2, ProjectivePoint, rotation, rp1_distance
from affdim.exceptions import DegenerateSystem, EqualSingularValues, NotTriangular
from affdim.ifs import IfsSystem, sample_words
from affdim.measures import EmpiricalMeasure
from affdim.spectral import (
    ProjectiveMeasure,
    apply_to_lines,
    check_nonconformality,
    check_total_irreducibility,
    circular_w1,
    direction_function,
    furstenberg_measure,
    l_descends_test,
    lyapunov_exponents,
    stationarity_residual,
    triangular_diagnostics,
)


def single_map_pair(A):
    # same linear part twice, distinct translations
    return IfsSystem.from_arrays([A, A], [[0, 0], [1, 0]])


def high_gap_system():
    # strongly non-conformal, symmetric positive linear parts (no rotation of the pieces)
    D = np.diag([0.4, 0.02])
    R = rotation(1.2)
    return IfsSystem.from_arrays([D, R @ D @ R.T], [[0, 0], [1, -0.5]])


def line_measure(angles, transpose=False):
    return ProjectiveMeasure(EmpiricalMeasure(np.asarray(angles, float), None, "projective-line"), transpose)


@pytest.fixture(scope="module")
def eta_f1(f1):
    return furstenberg_measure(f1, samples=100_000, seed=3)


class TestLyapunov:
    def test_single_map_exact(self):
        est = lyapunov_exponents(single_map_pair(np.diag([0.5, 1 / 3])), length=100)
        assert est.chi1 == -1.0
        assert est.chi2 == pytest.approx(-np.log2(3), abs=1e-14)
        assert est.stderr1 == 0 and est.exact

    def test_f2(self, f2):
        est = lyapunov_exponents(f2, length=100_000, seed=1)
        assert abs(est.chi1 + 1) < 0.02 and abs(est.chi2 + 2) < 0.02

    def test_sum_is_exact(self, f1, f2):
        for s in (f1, f2, fixtures.f5()):
            est = lyapunov_exponents(s, trials=4, length=500, seed=2)
            exact = float(s.probs @ np.log2(np.abs(np.linalg.det(s.linear))))
            assert est.chi1 + est.chi2 == pytest.approx(exact, abs=1e-12)
            assert est.sum_exact == pytest.approx(exact, abs=1e-15)
            assert est.chi1 >= est.chi2

    def test_reverse_order_agrees(self, f1):
        fwd = lyapunov_exponents(f1, trials=16, length=20_000, seed=5)
        rev = lyapunov_exponents(f1, trials=16, length=20_000, seed=5, reverse=True)
        assert abs(fwd.chi1 - rev.chi1) <= 3 * np.hypot(fwd.stderr1, rev.stderr1)

    def test_seeded(self, f1):
        a = lyapunov_exponents(f1, trials=3, length=300, seed=8)
        assert a == lyapunov_exponents(f1, trials=3, length=300, seed=8)

    def test_degenerate(self):
        s = IfsSystem.from_arrays([np.diag([0.5, 0.0]), np.eye(2) * 0.5], [[0, 0], [1, 0]])
        with pytest.raises(DegenerateSystem):
            lyapunov_exponents(s, length=100)

    def test_rejects_short(self, f1):
        with pytest.raises(ValueError):
            lyapunov_exponents(f1, length=10)


class TestFurstenberg:
    def test_triangular_transpose_collapses(self, f2):
        m = furstenberg_measure(f2, transpose=True, samples=10_000, seed=3)
        dist = np.abs(np.sin(m.angles - E1.angle))
        assert dist.max() < 1e-6
        assert m.transpose

    def test_triangular_forward_is_spread(self, f2):
        m = furstenberg_measure(f2, transpose=False, samples=10_000, seed=3)
        assert m.max_atom(1e-9) <= 0.2

    def test_f1_has_no_big_atom(self, eta_f1):
        assert eta_f1.max_atom(1e-9) <= 0.1

    def test_f1_residual(self, f1, eta_f1):
        assert stationarity_residual(f1, eta_f1) < 0.02

    def test_two_seeds_agree(self, f1, eta_f1):
        other = furstenberg_measure(f1, samples=100_000, seed=4)
        w = circular_w1(eta_f1.angles, None, other.angles, None)
        assert w < 2 * stationarity_residual(f1, eta_f1)

    def test_thread_invariance(self, f1):
        a = furstenberg_measure(f1, samples=70_000, burnin=20, seed=1, threads=1)
        b = furstenberg_measure(f1, samples=70_000, burnin=20, seed=1, threads=4)
        assert np.array_equal(a.angles, b.angles)

    def test_angles_in_range(self, eta_f1):
        assert eta_f1.angles.min() >= 0 and eta_f1.angles.max() < np.pi


class TestStationarity:
    def test_fixed_delta(self, f2):
        assert stationarity_residual(f2, line_measure([0.0], transpose=True)) < 1e-9

    def test_uniform_under_rotation(self):
        s = IfsSystem.from_arrays([0.5 * rotation(np.pi / 8)] * 2, [[0, 0], [1, 0]])
        grid = np.arange(64) * np.pi / 64
        assert stationarity_residual(s, line_measure(grid)) < 1e-12

    def test_w1_two_deltas(self):
        assert circular_w1([0.1], None, [0.4], None) == pytest.approx(0.3)
        # the short way round the circle of lines
        assert circular_w1([0.05], None, [np.pi - 0.05], None) == pytest.approx(0.1)

    def test_w1_against_grid_oracle(self, rng):
        a, b = rng.uniform(0, np.pi, 40), rng.uniform(0, np.pi, 60)
        wa, wb = rng.uniform(0.1, 1, 40), rng.uniform(0.1, 1, 60)
        x = (np.arange(200_000) + 0.5) * np.pi / 200_000
        F = (wa[None] * (a[None] <= x[:, None])).sum(1) / wa.sum()
        G = (wb[None] * (b[None] <= x[:, None])).sum(1) / wb.sum()
        D = F - G
        cs = np.linspace(D.min(), D.max(), 2001)
        oracle = min(np.abs(D - c).mean() * np.pi for c in cs)
        assert circular_w1(a, wa, b, wb) == pytest.approx(oracle, abs=2e-4)

    def test_w1_is_rotation_invariant(self, rng):
        a, b = rng.uniform(0, np.pi, 30), rng.uniform(0, np.pi, 30)
        base = circular_w1(a, None, b, None)
        for shift in (0.3, 1.7, 3.0):
            assert circular_w1(a + shift, None, b + shift, None) == pytest.approx(base, abs=1e-12)


class TestDirectionFunction:
    def test_single_map(self):
        s = single_map_pair(np.diag([0.5, 1 / 3]))
        for n in (1, 5, 20):
            assert direction_function(s, (0,) * n) == E1

    def test_rotation_only_raises(self):
        s = IfsSystem.from_arrays([0.5 * rotation(0.4), 0.5 * rotation(1.0)], [[0, 0], [1, 0]])
        with pytest.raises(EqualSingularValues):
            direction_function(s, (0, 1))

    def test_f2_converges(self, f2):
        w = sample_words(f2, "U", 64, 1, seed=4)[0]
        d = [rp1_distance(direction_function(f2, w[:n]), direction_function(f2, w[: 2 * n])) for n in (4, 8, 16, 32)]
        assert d[-1] < 1e-4
        assert all(x >= y for x, y in zip(d, d[1:]))

    def test_f1_geometric_decay(self, f1):
        est = lyapunov_exponents(f1, trials=8, length=20_000, seed=0)
        gap = est.chi2 - est.chi1
        w = sample_words(f1, "U", 400, 1, seed=6)[0]
        L = [direction_function(f1, w[:n]) for n in range(20, 401)]
        d = np.array([rp1_distance(a, b) for a, b in zip(L, L[1:])])
        ratio = (d[-20:].mean() / d[:20].mean()) ** (1 / (len(d) - 20))
        assert 2**gap / 4 <= ratio <= 4 * 2**gap


class TestLDescends:
    def test_single_map_zero_dispersion(self):
        rep = l_descends_test(single_map_pair(np.diag([0.5, 0.25])), N=5000, cluster_level=8, seed=1)
        assert rep.low_dispersion_mass == 1.0 and rep.median_dispersion == 0.0

    def test_large_gap_system(self):
        rep = l_descends_test(high_gap_system(), N=50_000, cluster_level=10, seed=2)
        assert rep.low_dispersion_mass >= 0.9
        assert rep.global_dispersion > 0.2

    def test_report_fields(self, f1):
        rep = l_descends_test(f1, N=20_000, cluster_level=8, seed=3)
        assert 0 <= rep.low_dispersion_mass <= 1
        assert rep.cells >= rep.cells_with_pairs


class TestConformality:
    def test_similarities(self):
        s = IfsSystem.from_arrays([0.5 * rotation(0.4), 0.3 * rotation(2.0)], [[0, 0], [1, 0]])
        v = check_nonconformality(s)
        assert v.conformal and np.allclose(v.Q, np.eye(2), atol=1e-9)

    def test_homothety(self):
        v = check_nonconformality(single_map_pair(np.diag([0.5, 0.5])))
        assert v.status == "Conformal"

    def test_f2_and_fixtures(self):
        for name in ("F1", "F2", "F3", "F4", "F5"):
            assert check_nonconformality(fixtures.get_fixture(name)).status == "NonConformal"

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(0.1, 0.8),
        st.floats(0.1, 0.8),
        st.floats(0, np.pi),
        st.floats(0, np.pi),
        st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    )
    def test_conjugated_similarities(self, r0, r1, t0, t1, p):
        P = np.eye(2) + 0.5 * np.array(p).reshape(2, 2)
        if abs(np.linalg.det(P)) < 0.2:
            return
        Pi = np.linalg.inv(P)
        A = [P @ (r0 * rotation(t0)) @ Pi, P @ (r1 * rotation(t1)) @ Pi]
        v = check_nonconformality(IfsSystem.from_arrays(A, [[0, 0], [1, 0]]))
        assert v.conformal
        for Ai in A:
            lhs = Ai.T @ v.Q @ Ai
            assert np.allclose(lhs, abs(np.linalg.det(Ai)) * v.Q, atol=1e-8)
        assert np.linalg.eigvalsh(v.Q)[0] > 0


class TestIrreducibility:
    def test_f3(self, f3):
        v = check_total_irreducibility(f3)
        assert v.status == "Reducible"
        assert sorted(v.witness) == [E1.angle, E2.angle]

    def test_f2(self, f2):
        v = check_total_irreducibility(f2)
        assert v.status == "Reducible" and v.witness == (E2.angle,)

    def test_f1(self, f1):
        assert check_total_irreducibility(f1).status == "TotallyIrreducible"

    def test_swapped_pair(self):
        s = IfsSystem.from_arrays([[[0, 0.5], [0.3, 0]], np.diag([0.4, 0.2])], [[0, 0], [1, 0]])
        v = check_total_irreducibility(s)
        assert v.status == "Reducible"
        assert len(v.witness) == 2
        assert sorted(v.witness) == pytest.approx([0.0, np.pi / 2], abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(
        st.lists(st.floats(0.1, 0.7), min_size=6, max_size=6),
        st.lists(st.floats(-1, 1), min_size=3, max_size=3),
        st.floats(0, np.pi),
    )
    def test_invariant_line_is_never_missed(self, diag, lower, angle):
        R = rotation(angle)
        A = [R @ np.array([[diag[2 * i], 0], [lower[i], diag[2 * i + 1]]]) @ R.T for i in range(3)]
        s = IfsSystem.from_arrays(A, [[0, 0], [1, 0], [0, 1]])
        v = check_total_irreducibility(s)
        assert v.status != "TotallyIrreducible"
        if v.status == "Reducible":
            for Ai in A:
                img = apply_to_lines(Ai, np.array(v.witness))
                d = np.abs(np.sin(img[:, None] - np.array(v.witness)[None])).min(axis=1)
                assert d.max() < 1e-9


class TestTriangular:
    def test_f2(self, f2):
        rep = triangular_diagnostics(f2)
        assert rp1_distance(ProjectivePoint(rep.direction), E2) < 1e-12
        assert rep.rate == pytest.approx(-2.0, abs=1e-14)
        assert rep.chi2 == pytest.approx(-2.0) and rep.chi1 == pytest.approx(-1.0)
        assert rep.contracted_at_chi2 and not rep.jointly_diagonalizable
        assert rep.induced_maps == ((0.5, 0.0), (0.5, 0.53), (0.5, 1.0))

    def test_f3_jointly_diagonal(self, f3):
        assert triangular_diagnostics(f3).jointly_diagonalizable

    def test_f1_not_triangular(self, f1):
        with pytest.raises(NotTriangular):
            triangular_diagnostics(f1)

    def test_rotated_triangular(self):
        R = rotation(0.8)
        A = [R @ np.array([[0.5, 0], [0.3, 0.2]]) @ R.T, R @ np.array([[0.6, 0], [-0.1, 0.25]]) @ R.T]
        rep = triangular_diagnostics(IfsSystem.from_arrays(A, [[0, 0], [1, 0]]))
        T = rep.rotation @ np.array(A) @ rep.rotation.T
        assert np.allclose(T[:, 0, 1], 0, atol=1e-12)
        assert rep.rate == pytest.approx(0.5 * (np.log2(0.2) + np.log2(0.25)), abs=1e-12)
