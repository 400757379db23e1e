import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apen.errors import InvalidArgument
from apen.geom import (
    HardPartition,
    LabeledCloud,
    PiecewiseMotion,
    PointCloud,
    RigidMotion,
    SoftPartition,
    apply_piecewise,
    apply_rigid,
    compose,
    hard_from_soft,
    identity_motion,
    permute_parts,
    random_motion,
    refines,
)


def random_cloud(rng, n, d=3):
    pos = rng.standard_normal((n, d))
    nrm = rng.standard_normal((n, d))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(pos, nrm)


class TestTypes:
    def test_normal_norm_enforced(self):
        with pytest.raises(InvalidArgument):
            PointCloud(np.zeros((2, 3)), np.ones((2, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            PointCloud(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_rotation_orthogonality_enforced(self):
        with pytest.raises(InvalidArgument):
            RigidMotion(np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros(2))

    def test_reflections_allowed(self):
        RigidMotion(np.diag([1.0, -1.0]), np.zeros(2))

    def test_hard_partition_one_hot(self):
        with pytest.raises(InvalidArgument):
            HardPartition(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_soft_partition_rows(self):
        with pytest.raises(InvalidArgument):
            SoftPartition(np.array([[0.6, 0.3]]))
        with pytest.raises(InvalidArgument):
            SoftPartition(np.array([[1.2, -0.2]]))

    def test_labeled_cloud_rejects_empty_parts(self):
        rng = np.random.default_rng(0)
        x = random_cloud(rng, 4)
        z = HardPartition.from_labels([0, 0, 1, 1], k=3)
        with pytest.raises(InvalidArgument):
            LabeledCloud(x, z)


class TestApplyRigid:
    def test_identity(self):
        rng = np.random.default_rng(1)
        x = random_cloud(rng, 5)
        y = apply_rigid(identity_motion(3), x)
        np.testing.assert_array_equal(y.positions, x.positions)
        np.testing.assert_array_equal(y.normals, x.normals)

    def test_rotation_2d_quarter_turn(self):
        r = np.array([[0.0, -1.0], [1.0, 0.0]])
        g = RigidMotion(r, np.zeros(2))
        x = PointCloud(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        y = apply_rigid(g, x)
        np.testing.assert_allclose(y.positions, [[0.0, 1.0]], atol=1e-15)
        np.testing.assert_allclose(y.normals, [[-1.0, 0.0]], atol=1e-15)

    def test_translation_leaves_normals(self):
        g = RigidMotion(np.eye(3), np.array([1.0, 2.0, 3.0]))
        rng = np.random.default_rng(2)
        x = random_cloud(rng, 4)
        y = apply_rigid(g, x)
        np.testing.assert_array_equal(y.normals, x.normals)
        np.testing.assert_allclose(y.positions, x.positions + g.translation)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_composition_matches_sequencing(self, seed):
        rng = np.random.default_rng(seed)
        g1 = random_motion(0, 3, rng=rng)
        g2 = random_motion(0, 3, rng=rng)
        x = random_cloud(rng, 6)
        seq = apply_rigid(g2, apply_rigid(g1, x))
        comp = apply_rigid(compose(g2, g1), x)
        np.testing.assert_allclose(seq.positions, comp.positions, atol=1e-9)
        np.testing.assert_allclose(seq.normals, comp.normals, atol=1e-9)

    def test_preserves_distances_and_norms(self):
        rng = np.random.default_rng(3)
        x = random_cloud(rng, 8)
        g = random_motion(7, 3, translation_scale=2.0)
        y = apply_rigid(g, x)
        dx = np.linalg.norm(x.positions[:, None] - x.positions[None], axis=-1)
        dy = np.linalg.norm(y.positions[:, None] - y.positions[None], axis=-1)
        np.testing.assert_allclose(dx, dy, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(y.normals, axis=1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(InvalidArgument):
            apply_rigid(identity_motion(2), random_cloud(rng, 3, d=3))


class TestApplyPiecewise:
    def test_all_identity(self):
        rng = np.random.default_rng(5)
        x = random_cloud(rng, 6)
        z = HardPartition.from_labels([0, 1, 0, 1, 2, 2])
        g = PiecewiseMotion([identity_motion(3)] * 3)
        y = apply_piecewise(g, x, z)
        np.testing.assert_array_equal(y.positions, x.positions)

    def test_single_part_reduces_to_rigid(self):
        rng = np.random.default_rng(6)
        x = random_cloud(rng, 5)
        g1 = random_motion(11, 3)
        z = HardPartition.from_labels([0] * 5)
        y = apply_piecewise(PiecewiseMotion([g1]), x, z)
        y_ref = apply_rigid(g1, x)
        np.testing.assert_array_equal(y.positions, y_ref.positions)
        np.testing.assert_array_equal(y.normals, y_ref.normals)

    def test_masked_sum_equals_per_point_loop(self):
        rng = np.random.default_rng(7)
        x = random_cloud(rng, 4)
        z = HardPartition.from_labels([0, 1, 1, 0])
        g = PiecewiseMotion([random_motion(s, 3) for s in (1, 2)])
        y = apply_piecewise(g, x, z)
        # oracle: move each point individually by its part's motion
        for i, lab in enumerate(z.labels()):
            m = g.motions[lab]
            np.testing.assert_allclose(
                y.positions[i], m.rotation @ x.positions[i] + m.translation,
                atol=1e-12)
            np.testing.assert_allclose(
                y.normals[i], m.rotation @ x.normals[i], atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(8)
        x = random_cloud(rng, 4)
        z = HardPartition.from_labels([0, 1, 1, 0])
        with pytest.raises(InvalidArgument):
            apply_piecewise(PiecewiseMotion([identity_motion(3)] * 3), x, z)

    def test_refinement_lift(self):
        # motions defined per coarse part act identically when re-indexed
        # along a finer partition
        rng = np.random.default_rng(9)
        x = random_cloud(rng, 8)
        z_gt = HardPartition.from_labels([0, 0, 0, 0, 1, 1, 1, 1])
        z_fine = HardPartition.from_labels([0, 0, 1, 1, 2, 2, 3, 3])
        coarse = [random_motion(s, 3) for s in (21, 22)]
        lift = [coarse[0], coarse[0], coarse[1], coarse[1]]
        y1 = apply_piecewise(PiecewiseMotion(coarse), x, z_gt)
        y2 = apply_piecewise(PiecewiseMotion(lift), x, z_fine)
        np.testing.assert_allclose(y1.positions, y2.positions, atol=1e-12)


class TestHardFromSoft:
    def test_one_hot_unchanged(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = hard_from_soft(SoftPartition(z))
        np.testing.assert_array_equal(out.assignment, z)

    def test_unique_maximum(self):
        out = hard_from_soft(SoftPartition(np.array([[0.2, 0.5, 0.3]])))
        np.testing.assert_array_equal(out.assignment, [[0.0, 1.0, 0.0]])

    def test_tie_breaks_low(self):
        out = hard_from_soft(SoftPartition(np.array([[0.5, 0.5]])))
        np.testing.assert_array_equal(out.assignment, [[1.0, 0.0]])

    def test_monotone_rescale_invariance(self):
        rng = np.random.default_rng(10)
        w = rng.dirichlet(np.ones(4), size=6)
        q = SoftPartition(w)
        w2 = w ** 3
        w2 /= w2.sum(axis=1, keepdims=True)
        np.testing.assert_array_equal(
            hard_from_soft(q).assignment,
            hard_from_soft(SoftPartition(w2)).assignment)


class TestRefines:
    def test_reflexive(self):
        z = HardPartition.from_labels([0, 1, 2, 1])
        assert refines(z, z)

    def test_singletons_refine_everything(self):
        z = HardPartition.from_labels(np.arange(5))
        z_gt = HardPartition.from_labels([0, 0, 1, 1, 1])
        assert refines(z, z_gt)

    def test_mixed_part_is_bad(self):
        z = HardPartition.from_labels([0, 0, 1, 1])
        z_gt = HardPartition.from_labels([0, 1, 1, 1])
        assert not refines(z, z_gt)

    def test_one_part_only_refines_one_part(self):
        z = HardPartition.from_labels([0, 0, 0])
        assert refines(z, HardPartition.from_labels([0, 0, 0]))
        assert not refines(z, HardPartition.from_labels([0, 0, 1]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_transitive(self, seed):
        rng = np.random.default_rng(seed)
        n = 9
        coarse = rng.integers(0, 2, n)
        mid = coarse * 2 + rng.integers(0, 2, n)
        fine = mid * 2 + rng.integers(0, 2, n)
        za = HardPartition.from_labels(fine, k=8)
        zb = HardPartition.from_labels(mid, k=4)
        zc = HardPartition.from_labels(coarse, k=2)
        assert refines(za, zb) and refines(zb, zc) and refines(za, zc)


class TestPermuteParts:
    def test_identity(self):
        z = HardPartition.from_labels([0, 1, 2])
        np.testing.assert_array_equal(
            permute_parts(z, [0, 1, 2]).assignment, z.assignment)

    def test_swap_is_involution(self):
        z = HardPartition.from_labels([0, 1, 2, 0])
        p = [1, 0, 2]
        np.testing.assert_array_equal(
            permute_parts(permute_parts(z, p), p).assignment, z.assignment)

    def test_rejects_non_bijection(self):
        z = HardPartition.from_labels([0, 1])
        with pytest.raises(InvalidArgument):
            permute_parts(z, [0, 0])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_refinement_invariant_under_permutation(self, seed):
        rng = np.random.default_rng(seed)
        n, k = 8, 3
        z = HardPartition.from_labels(rng.integers(0, k, n), k=k)
        z_gt = HardPartition.from_labels(rng.integers(0, 2, n), k=2)
        perm = rng.permutation(k)
        assert refines(z, z_gt) == refines(permute_parts(z, perm), z_gt)


class TestRandomMotion:
    def test_deterministic(self):
        a = random_motion(42, 3)
        b = random_motion(42, 3)
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)

    def test_orthogonality_tight(self):
        for seed in range(20):
            g = random_motion(seed, 3)
            err = np.max(np.abs(g.rotation.T @ g.rotation - np.eye(3)))
            assert err <= 1e-12

    def test_reflection_fraction(self):
        dets = [np.linalg.det(random_motion(s, 3).rotation) for s in range(1000)]
        dets = np.array(dets)
        np.testing.assert_allclose(np.abs(dets), 1.0, atol=1e-9)
        frac_reflect = np.mean(dets < 0)
        assert abs(frac_reflect - 0.5) <= 0.05
