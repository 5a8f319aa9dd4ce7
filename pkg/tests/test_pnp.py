"""PnP solvers against ground truth and independent oracles."""

import numpy as np
import pytest

from coordpose.exceptions import InsufficientCorrespondencesError, PoseFailureError
from coordpose.geometry import CameraIntrinsics, Pose, project
from coordpose.pnp import (
    refine_pose_lm,
    reprojection_errors,
    solve_pnp_epnp,
    solve_pnp_ransac,
)
from helpers import random_rotation, rotation_angle_deg, solve_planar_homography, solve_pnp_dlt

K = CameraIntrinsics(fx=572.4, fy=573.6, cx=325.3, cy=242.0, width=640, height=480)


def make_pose(rng):
    return Pose(
        random_rotation(rng),
        [rng.uniform(-60, 60), rng.uniform(-40, 40), rng.uniform(400, 800)],
    )


def make_correspondences(rng, n, pose, coplanar=False):
    pts = rng.uniform(-1, 1, size=(n, 3)) * [50.0, 30.0, 20.0]
    if coplanar:
        pts[:, 2] = 0.0
    pix = project(pose.transform(pts), K)
    return pts, pix


class TestEPnP:
    def test_exact_recovery_various_sizes(self):
        rng = np.random.default_rng(100)
        for n in (6, 12, 60, 200):
            pose = make_pose(rng)
            pts, pix = make_correspondences(rng, n, pose)
            est = solve_pnp_epnp(pts, pix, K)
            assert np.linalg.norm(est.rotation - pose.rotation) < 1e-6
            assert np.linalg.norm(est.translation - pose.translation) < 1e-3

    def test_agrees_with_dlt_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(20):
            pose = make_pose(rng)
            pts, pix = make_correspondences(rng, rng.integers(6, 40), pose)
            epnp = solve_pnp_epnp(pts, pix, K)
            dlt = solve_pnp_dlt(pts, pix, K)
            assert np.linalg.norm(epnp.rotation - dlt.rotation) < 1e-6
            assert np.linalg.norm(epnp.translation - dlt.translation) < 1e-3

    def test_planar_exact_recovery(self):
        rng = np.random.default_rng(102)
        for n in (4, 10, 50):
            pose = make_pose(rng)
            pts, pix = make_correspondences(rng, n, pose, coplanar=True)
            est = solve_pnp_epnp(pts, pix, K)
            assert np.linalg.norm(est.rotation - pose.rotation) < 1e-6
            assert np.linalg.norm(est.translation - pose.translation) < 1e-3

    def test_planar_agrees_with_homography_oracle(self):
        rng = np.random.default_rng(103)
        for _ in range(10):
            pose = make_pose(rng)
            pts, pix = make_correspondences(rng, 4, pose, coplanar=True)
            epnp = solve_pnp_epnp(pts, pix, K)
            homog = solve_planar_homography(pts, pix, K)
            assert np.linalg.norm(epnp.rotation - homog.rotation) < 1e-6
            assert np.linalg.norm(epnp.translation - homog.translation) < 1e-3

    def test_minimal_nonplanar_good_enough_for_hypotheses(self):
        # the algebraic solver does not interpolate 4 arbitrary points exactly;
        # what RANSAC needs is that nearly all minimal samples reproject their
        # own points well below the inlier threshold
        rng = np.random.default_rng(104)
        errs = []
        for _ in range(50):
            pose = make_pose(rng)
            pts, pix = make_correspondences(rng, 4, pose)
            est = solve_pnp_epnp(pts, pix, K)
            errs.append(reprojection_errors(est, pts, pix, K).max())
        errs = np.sort(errs)
        assert errs[len(errs) // 2] < 1e-3
        assert (np.array(errs) < 1.0).mean() >= 0.9

    def test_too_few_points(self):
        rng = np.random.default_rng(105)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 3, pose)
        with pytest.raises(InsufficientCorrespondencesError):
            solve_pnp_epnp(pts, pix, K)

    def test_collinear_points_fail(self):
        pts = np.array([[i * 10.0, 0.0, 0.0] for i in range(6)])
        pix = project(Pose(np.eye(3), [0, 0, 500.0]).transform(pts), K)
        with pytest.raises(PoseFailureError):
            solve_pnp_epnp(pts, pix, K)


class TestLMRefine:
    def test_polishes_perturbed_pose(self):
        rng = np.random.default_rng(106)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 30, pose)
        rough = Pose(pose.rotation, pose.translation + [2.0, -1.5, 8.0])
        refined = refine_pose_lm(rough, pts, pix, K)
        assert np.linalg.norm(refined.translation - pose.translation) < 1e-6
        assert rotation_angle_deg(refined.rotation, pose.rotation) < 1e-6


class TestRansac:
    def test_exact_correspondences(self):
        rng = np.random.default_rng(107)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 200, pose)
        est = solve_pnp_ransac(pts, pix, K, rng=0)
        assert rotation_angle_deg(est.pose.rotation, pose.rotation) < 0.5
        rel = np.linalg.norm(est.pose.translation - pose.translation) / np.linalg.norm(
            pose.translation
        )
        assert rel < 0.01
        assert est.inlier_count == 200
        assert est.correspondence_count == 200

    def test_thirty_percent_outliers(self):
        rng = np.random.default_rng(108)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 200, pose)
        bad = rng.choice(200, size=60, replace=False)
        pts = pts.copy()
        pts[bad] = rng.uniform(-1, 1, size=(60, 3)) * [50.0, 30.0, 20.0]
        est = solve_pnp_ransac(pts, pix, K, rng=1)
        assert rotation_angle_deg(est.pose.rotation, pose.rotation) < 0.5
        rel = np.linalg.norm(est.pose.translation - pose.translation) / np.linalg.norm(
            pose.translation
        )
        assert rel < 0.01
        assert est.inlier_count >= 0.95 * 140

    def test_four_coplanar_exact(self):
        rng = np.random.default_rng(109)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 4, pose, coplanar=True)
        est = solve_pnp_ransac(pts, pix, K, rng=2)
        assert est.inlier_count == 4
        assert np.linalg.norm(est.pose.rotation - pose.rotation) < 1e-6
        assert np.linalg.norm(est.pose.translation - pose.translation) < 1e-3

    def test_deterministic(self):
        rng = np.random.default_rng(110)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 120, pose)
        bad = rng.choice(120, size=30, replace=False)
        pts[bad] = rng.uniform(-1, 1, size=(30, 3)) * [50.0, 30.0, 20.0]
        a = solve_pnp_ransac(pts, pix, K, rng=42)
        b = solve_pnp_ransac(pts, pix, K, rng=42)
        assert a.pose.rotation.tobytes() == b.pose.rotation.tobytes()
        assert a.pose.translation.tobytes() == b.pose.translation.tobytes()
        assert a.inlier_count == b.inlier_count
        assert a.mean_reproj_error == b.mean_reproj_error

    def test_inlier_consistency(self):
        rng = np.random.default_rng(111)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 80, pose)
        pix = pix + rng.normal(scale=0.5, size=pix.shape)
        est = solve_pnp_ransac(pts, pix, K, theta_re=3.0, rng=3)
        errs = reprojection_errors(est.pose, pts, pix, K)
        assert int((errs < 3.0).sum()) == est.inlier_count
        assert abs(errs[errs < 3.0].mean() - est.mean_reproj_error) < 1e-12

    def test_appending_exact_points_never_loses_inliers(self):
        rng = np.random.default_rng(112)
        pose = make_pose(rng)
        pts, pix = make_correspondences(rng, 50, pose)
        bad = rng.choice(50, size=15, replace=False)
        pts[bad] = rng.uniform(-1, 1, size=(15, 3)) * [50.0, 30.0, 20.0]
        extra_pts, extra_pix = make_correspondences(rng, 30, pose)
        base = solve_pnp_ransac(pts, pix, K, rng=7)
        grown = solve_pnp_ransac(
            np.concatenate([pts, extra_pts]),
            np.concatenate([pix, extra_pix]),
            K,
            rng=7,
            sample_from_first=50,
        )
        assert grown.inlier_count >= base.inlier_count

    def test_garbage_raises_pose_failure(self):
        # collinear 3D points make every minimal solve fail
        pts = np.array([[i * 5.0, 0.0, 0.0] for i in range(10)])
        pix = np.random.default_rng(113).uniform(0, 640, size=(10, 2))
        with pytest.raises(PoseFailureError):
            solve_pnp_ransac(pts, pix, K, iters=20, rng=4)

    def test_too_few(self):
        with pytest.raises(InsufficientCorrespondencesError):
            solve_pnp_ransac(np.zeros((3, 3)), np.zeros((3, 2)), K)
