import numpy as np
import pytest

from affdim import fixtures
from affdim.affine import AffineMap2, rotation
from affdim.convolution import (
    AffineAtomMeasure,
    act_convolve,
    entropy_growth_experiment,
    fiber_decomposition,
    fiber_entropies,
    fiber_mixture_tv,
    histogram_tv,
    linearization_check,
    nonconformal_growth_experiment,
    pstar,
    random_translations,
    rotations_about,
    wrong_frame_demo,
)
from affdim.entropy import DyadicFrame, entropy
from affdim.exceptions import EmptyFiber, InvalidEccentricity, PreconditionViolated
from affdim.ifs import IfsSystem, sample_attractor
from affdim.measures import EmpiricalMeasure


@pytest.fixture(scope="module")
def mu_big():
    return sample_attractor(fixtures.f1(), 300_000, seed=31).points


class TestAtomMeasure:
    def test_weights_validated(self):
        with pytest.raises(ValueError):
            AffineAtomMeasure([np.eye(2)] * 2, [[0, 0], [1, 0]], [0.5, 0.6])

    def test_dedup_commuting(self):
        maps = (fixtures.parabola_map(0.5, 0.2), fixtures.parabola_map(0.25, 0.3))
        s = IfsSystem(maps, np.array([0.5, 0.5]))
        th = pstar(s, 2, dedup=True)
        assert len(th) == 3
        assert th.weights.sum() == pytest.approx(1.0)
        assert np.sort(th.weights)[-1] == pytest.approx(0.5)

    def test_pstar_one_is_system(self, f1):
        th = pstar(f1, 1)
        assert np.array_equal(th.A, f1.linear) and np.array_equal(th.weights, f1.probs)

    def test_convolve_matches_pstar(self, f1):
        a = pstar(f1, 1).convolve(pstar(f1, 2))
        b = pstar(f1, 3)
        assert np.allclose(a.vec6(), b.vec6(), atol=1e-15)
        assert np.allclose(a.weights, b.weights)


class TestActConvolve:
    def test_identity(self, f1_samples):
        out = act_convolve(AffineAtomMeasure.delta(), f1_samples.points)
        assert np.array_equal(out.points, f1_samples.points)

    def test_delta_is_pushforward(self, f1_samples):
        phi = AffineMap2(rotation(0.4) @ np.diag([0.7, 0.2]), [0.3, -1.0])
        out = act_convolve(AffineAtomMeasure.delta(phi), f1_samples.points)
        assert np.array_equal(out.points, phi(f1_samples.points))

    def test_translation_entropy(self, f1_samples):
        th = AffineAtomMeasure.delta(AffineMap2.translation([0.37, -0.11]))
        out = act_convolve(th, f1_samples.points)
        f = DyadicFrame.standard2d(8)
        assert abs(entropy(out, f).bits - entropy(f1_samples.points, f).bits) <= 2

    def test_two_atoms_on_point(self):
        th = AffineAtomMeasure.from_maps([AffineMap2.identity(), AffineMap2.translation([1.0, 0.0])])
        out = act_convolve(th, EmpiricalMeasure(np.zeros((1, 2))))
        assert np.allclose(out.points, [[0, 0], [1, 0]]) and np.allclose(out.w, 0.5)

    def test_thinning_deterministic(self, f1_samples):
        th = random_translations(9, 0.1, seed=0)
        a = act_convolve(th, f1_samples.points, seed=4, target=50_000)
        b = act_convolve(th, f1_samples.points, seed=4, target=50_000)
        assert len(a) == 50_000 and np.array_equal(a.points, b.points)

    def test_resampling_identity(self, f1, mu_big):
        out = act_convolve(pstar(f1, 3), mu_big, seed=2, target=300_000)
        assert histogram_tv(out, mu_big, 8) < 0.05

    def test_associativity(self, f1, mu_big):
        p = pstar(f1, 1)
        once = act_convolve(p, act_convolve(p, mu_big, seed=1, target=300_000), seed=2, target=300_000)
        twice = act_convolve(p.convolve(p), mu_big, seed=3, target=300_000)
        assert histogram_tv(once, twice, 8) < 0.05


class TestGrowth:
    def test_identity_gain(self, f1, mu_big):
        r = entropy_growth_experiment(f1, AffineAtomMeasure.delta(), 10, samples=mu_big)
        assert abs(r.gain) <= 2 / 10 and r.non_decrease_ok

    def test_translations_gain(self, f1, mu_big):
        th = random_translations(9, 0.25, seed=1)
        r = entropy_growth_experiment(f1, th, 10, samples=mu_big)
        assert r.theta_bits_per_level > 0.3
        assert r.gain > 0.02 and r.non_decrease_ok
        assert len(r.rows()) == 10

    def test_stabilizer_control(self, rng):
        # rotations about the centre of a rotation-invariant disc sample
        r = np.sqrt(rng.random(200_000))
        a = rng.random(200_000) * 2 * np.pi
        disc = np.c_[0.5 + 0.4 * r * np.cos(a), 0.5 + 0.4 * r * np.sin(a)]
        th = rotations_about([0.5, 0.5], 16, seed=0)
        rec = entropy_growth_experiment(None, th, 8, samples=disc)
        assert abs(rec.gain) <= 2 / 8

    def test_nonconformal_delta(self, f1, mu_big):
        g = AffineMap2(rotation(0.3) @ np.diag([2**-3, 2**-8]), [0.1, 0.2])
        rec = nonconformal_growth_experiment(f1, AffineAtomMeasure.delta(g), g, 10, samples=mu_big)
        assert abs(rec.growth.gain) <= 2 / 10
        assert rec.interpolation_gap < 0.15

    def test_eccentricity(self, f1, mu_big):
        g = AffineMap2(np.eye(2) * 0.5, [0, 0])
        with pytest.raises(InvalidEccentricity):
            nonconformal_growth_experiment(f1, AffineAtomMeasure.delta(g), g, 10, samples=mu_big)
        g = AffineMap2(np.diag([0.5, 0.4]), [0, 0])
        with pytest.raises(InvalidEccentricity):
            nonconformal_growth_experiment(f1, AffineAtomMeasure.delta(g), g, 10, R=1.5, samples=mu_big)

    def test_wrong_frame(self, mu_big):
        d = wrong_frame_demo(mu_big, 10)
        assert d.standard_bits <= 11
        assert d.g_frame_bits == pytest.approx(d.mu_bits)


class TestLinearization:
    def setup_method(self):
        self.delta = 2.0**-12
        self.x0 = np.array([0.3, 0.2])
        rng = np.random.default_rng(5)
        self.theta = AffineAtomMeasure(
            np.eye(2) + rng.uniform(-1, 1, (32, 2, 2)) * self.delta / 8, rng.uniform(-1, 1, (32, 2)) * self.delta / 8
        )
        mu = sample_attractor(fixtures.f1(), 2048, seed=2).points
        mu = mu - mu.mean(axis=0)
        self.nu = mu / np.linalg.norm(mu, axis=1).max() * self.delta * 0.999 + self.x0

    def test_random(self):
        d = linearization_check(self.theta, self.nu, AffineMap2.identity(), self.x0, 8, self.delta)
        assert d < 0.1

    def test_point_theta(self):
        psi0 = AffineMap2.identity()
        assert linearization_check(AffineAtomMeasure.delta(psi0), self.nu, psi0, self.x0, 8, self.delta) == 0

    def test_point_nu(self):
        nu = EmpiricalMeasure(self.x0[None])
        assert linearization_check(self.theta, nu, AffineMap2.identity(), self.x0, 8, self.delta) == 0

    def test_precondition(self):
        far = AffineAtomMeasure.delta(AffineMap2.translation([0.1, 0]))
        with pytest.raises(PreconditionViolated):
            linearization_check(far, self.nu, AffineMap2.identity(), self.x0, 8, self.delta)


class TestFibers:
    def test_single_map(self):
        s = IfsSystem.from_arrays([np.diag([0.5, 0.3])], [[0.1, 0.0]])
        x = s.maps[0].fixed_point()
        th = fiber_decomposition(s, x, 4, cell_level=6, N=256)
        assert len(th) == 1 and th.weights[0] == 1.0

    def test_separated_single_word(self, f1):
        x = sample_attractor(f1, 1, seed=9).points[0]
        th = fiber_decomposition(f1, x, 6, cell_level=14, N=2048, seed=1)
        assert th.entropy_bits() == 0.0

    def test_empty(self, f1):
        with pytest.raises(EmptyFiber):
            fiber_decomposition(f1, [5.0, 5.0], 4, cell_level=8, N=256)

    def test_overlapping_fibers_carry_entropy(self):
        st = fiber_entropies(fixtures.f5(), 3, fibers=40, N=1024, seed=2)
        assert st.fraction_above > 0.5

    def test_mixture(self, f1):
        assert fiber_mixture_tv(f1, 3, fibers=400, N=2048, seed=0) < 0.1
