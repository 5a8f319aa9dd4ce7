"""Pose from 2D-3D correspondences: EPnP, seeded RANSAC, reprojection refinement.

Points are object-frame mm, pixels are source-image coordinates. All solvers
are deterministic: RANSAC consumes a caller-provided generator (or seed) and
draws the same samples for the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientCorrespondencesError, PoseFailureError
from .geometry import CameraIntrinsics, Pose

_PAIRS4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_PAIRS3 = [(0, 1), (0, 2), (1, 2)]


@dataclass(frozen=True)
class PoseEstimate:
    """RANSAC result: pose plus inlier diagnostics under that final pose."""

    pose: Pose
    inlier_count: int
    mean_reproj_error: float
    correspondence_count: int


def reprojection_errors(
    pose: Pose, points: np.ndarray, pixels: np.ndarray, k: CameraIntrinsics
) -> np.ndarray:
    """Pixel distance between projections and observations; inf behind camera."""
    cam = points @ pose.rotation.T + pose.translation
    z = cam[:, 2]
    errs = np.full(len(points), np.inf)
    front = z > 1e-9
    u = k.fx * cam[front, 0] / z[front] + k.cx
    v = k.fy * cam[front, 1] / z[front] + k.cy
    errs[front] = np.hypot(u - pixels[front, 0], v - pixels[front, 1])
    return errs


def _control_points(points: np.ndarray):
    """Centroid plus principal directions; drops to 3 points for planar sets."""
    c = points.mean(axis=0)
    centered = points - c
    cov = centered.T @ centered / len(points)
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    scale = max(evals[0], 1e-12)
    if evals[1] / scale < 1e-12:
        raise PoseFailureError("correspondences are collinear")
    if evals[2] / scale < 1e-10:
        ctrl = np.stack(
            [c, c + np.sqrt(evals[0]) * evecs[:, 0], c + np.sqrt(evals[1]) * evecs[:, 1]]
        )
    else:
        ctrl = np.stack(
            [
                c,
                c + np.sqrt(evals[0]) * evecs[:, 0],
                c + np.sqrt(evals[1]) * evecs[:, 1],
                c + np.sqrt(evals[2]) * evecs[:, 2],
            ]
        )
    return ctrl


def _barycentric(points: np.ndarray, ctrl: np.ndarray) -> np.ndarray:
    basis = (ctrl[1:] - ctrl[0]).T  # 3 x (m-1)
    w, *_ = np.linalg.lstsq(basis, (points - ctrl[0]).T, rcond=None)
    return np.concatenate([1.0 - w.sum(axis=0, keepdims=True), w]).T  # n x m


def _kabsch(src: np.ndarray, dst: np.ndarray) -> Pose:
    """Rigid transform with dst ~ R src + t."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose(r, cd - r @ cs)


def _beta_system(vecs: list[np.ndarray], ctrl: np.ndarray):
    """Distance constraints between camera-frame control points.

    Returns per-pair difference vectors for each kernel vector and the squared
    world distances they must reproduce.
    """
    m = len(ctrl)
    pairs = _PAIRS4 if m == 4 else _PAIRS3
    dv = np.array([[v.reshape(m, 3)[a] - v.reshape(m, 3)[b] for a, b in pairs] for v in vecs])
    rho = np.array([np.sum((ctrl[a] - ctrl[b]) ** 2) for a, b in pairs])
    return dv, rho  # dv: (N, pairs, 3)


def _initial_betas(dv: np.ndarray, rho: np.ndarray, n_active: int) -> np.ndarray:
    """Linear-least-squares start for the first `n_active` kernel coefficients."""
    if n_active == 1:
        num = (np.linalg.norm(dv[0], axis=1) * np.sqrt(rho)).sum()
        den = (dv[0] ** 2).sum()
        return np.array([num / max(den, 1e-300)])
    if n_active == 2:
        rows = np.stack(
            [
                (dv[0] ** 2).sum(axis=1),
                2 * (dv[0] * dv[1]).sum(axis=1),
                (dv[1] ** 2).sum(axis=1),
            ],
            axis=1,
        )
        y, *_ = np.linalg.lstsq(rows, rho, rcond=None)
        b1 = np.sqrt(abs(y[0]))
        b2 = np.copysign(np.sqrt(abs(y[2])), y[1])
        return np.array([b1, b2])
    rows = np.stack(
        [
            (dv[0] ** 2).sum(axis=1),
            2 * (dv[0] * dv[1]).sum(axis=1),
            2 * (dv[0] * dv[2]).sum(axis=1),
            (dv[1] ** 2).sum(axis=1),
            2 * (dv[1] * dv[2]).sum(axis=1),
            (dv[2] ** 2).sum(axis=1),
        ],
        axis=1,
    )
    y, *_ = np.linalg.lstsq(rows, rho, rcond=None)
    b1 = np.sqrt(abs(y[0]))
    return np.array([b1, np.copysign(np.sqrt(abs(y[3])), y[1]), np.copysign(np.sqrt(abs(y[5])), y[2])])


def _rank_one_betas(dv: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Start from the products beta_1*beta_i, spanning the whole kernel at once."""
    dim = len(dv)
    rows = np.stack(
        [(dv[0] ** 2).sum(axis=1)]
        + [2 * (dv[0] * dv[i]).sum(axis=1) for i in range(1, dim)],
        axis=1,
    )
    y, *_ = np.linalg.lstsq(rows, rho, rcond=None)
    b1 = np.sqrt(abs(y[0]))
    if b1 < 1e-12:
        return np.zeros(dim)
    return np.concatenate([[b1], y[1:] / np.copysign(b1, y[0])])


def _refine_betas(betas: np.ndarray, dv: np.ndarray, rho: np.ndarray, iters: int = 10) -> np.ndarray:
    for _ in range(iters):
        combo = np.tensordot(betas, dv, axes=1)  # (pairs, 3)
        resid = (combo**2).sum(axis=1) - rho
        jac = 2.0 * np.einsum("pk,npk->pn", combo, dv)
        try:
            step = np.linalg.lstsq(jac, resid, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        betas = betas - step
    return betas


def solve_pnp_epnp(points: np.ndarray, pixels: np.ndarray, k: CameraIntrinsics) -> Pose:
    """EPnP: express points in control-point barycentrics, solve for the camera frame.

    Handles planar point sets with a 3-control-point parameterization. Returns
    the candidate (1, 2 or 3 kernel vectors) with the lowest reprojection error.
    """
    points = np.asarray(points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    if len(points) < 4:
        raise InsufficientCorrespondencesError("EPnP needs at least 4 correspondences")
    ctrl = _control_points(points)
    m = len(ctrl)
    alphas = _barycentric(points, ctrl)

    u = pixels[:, 0]
    v = pixels[:, 1]
    row_u = np.stack([np.full_like(u, k.fx), np.zeros_like(u), k.cx - u], axis=1)
    row_v = np.stack([np.zeros_like(v), np.full_like(v, k.fy), k.cy - v], axis=1)
    mat = np.empty((2 * len(points), 3 * m))
    mat[0::2] = (alphas[:, :, None] * row_u[:, None, :]).reshape(len(points), 3 * m)
    mat[1::2] = (alphas[:, :, None] * row_v[:, None, :]).reshape(len(points), 3 * m)

    _, eigvecs = np.linalg.eigh(mat.T @ mat)
    kernel_dim = 4 if m == 4 else 3
    kernel = [eigvecs[:, i] for i in range(kernel_dim)]

    # each candidate initializes a prefix of the kernel coefficients, then
    # Gauss-Newton refines over the full kernel: with minimal point counts the
    # null space is genuinely multi-dimensional and the restricted start alone
    # cannot represent the solution
    dv, rho = _beta_system(kernel, ctrl)
    starts = [_rank_one_betas(dv, rho)]
    max_active = 3 if m == 4 else 2
    for n_active in range(1, max_active + 1):
        start = np.zeros(kernel_dim)
        start[:n_active] = _initial_betas(dv[:n_active], rho, n_active)
        starts.append(start)
    best = None
    for start in starts:
        betas = _refine_betas(start, dv, rho, iters=15)
        x = sum(b * vec for b, vec in zip(betas, kernel))
        ctrl_cam = x.reshape(m, 3)
        cam_pts = alphas @ ctrl_cam
        if cam_pts[:, 2].mean() < 0:
            cam_pts = -cam_pts
        try:
            pose = _kabsch(points, cam_pts)
        except Exception:
            continue
        err = reprojection_errors(pose, points, pixels, k)
        score = err.mean() if np.isfinite(err).all() else np.inf
        if best is None or score < best[0]:
            best = (score, pose)
    if best is None or not np.isfinite(best[0]):
        raise PoseFailureError("EPnP produced no valid pose candidate")
    return best[1]


def refine_pose_lm(
    pose: Pose, points: np.ndarray, pixels: np.ndarray, k: CameraIntrinsics
) -> Pose:
    """Levenberg-Marquardt minimization of reprojection error from a given start."""
    from scipy.optimize import least_squares
    from scipy.spatial.transform import Rotation

    points = np.asarray(points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    x0 = np.concatenate([Rotation.from_matrix(pose.rotation).as_rotvec(), pose.translation])

    def residuals(x):
        r = Rotation.from_rotvec(x[:3]).as_matrix()
        cam = points @ r.T + x[3:]
        z = np.maximum(cam[:, 2], 1e-6)
        u = k.fx * cam[:, 0] / z + k.cx
        v = k.fy * cam[:, 1] / z + k.cy
        return np.concatenate([u - pixels[:, 0], v - pixels[:, 1]])

    res = least_squares(residuals, x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    return Pose(Rotation.from_rotvec(res.x[:3]).as_matrix(), res.x[3:])


def solve_pnp_ransac(
    points: np.ndarray,
    pixels: np.ndarray,
    k: CameraIntrinsics,
    theta_re: float = 3.0,
    iters: int = 300,
    rng=0,
    confidence: float = 0.99,
    sample_from_first: int | None = None,
) -> PoseEstimate:
    """Robust PnP: minimal 4-point EPnP hypotheses, inliers by reprojection error.

    The best hypothesis is the one with the most inliers, ties broken by lower
    mean inlier error, then earlier iteration. The final pose re-runs EPnP on
    every inlier and polishes with LM; the reported inlier statistics are
    recomputed under that final pose. `sample_from_first` restricts hypothesis
    sampling to a prefix of the correspondences, which keeps the drawn samples
    comparable when extra correspondences are appended.
    """
    points = np.asarray(points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    n = len(points)
    if n < 4 or len(pixels) != n:
        raise InsufficientCorrespondencesError("RANSAC needs at least 4 correspondences")
    pool = n if sample_from_first is None else sample_from_first
    if not 4 <= pool <= n:
        raise InsufficientCorrespondencesError("sampling prefix must cover at least 4 entries")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    best = None  # (count, mean inlier error, iteration, pose)
    for it in range(iters):
        idx = gen.choice(pool, size=4, replace=False)
        try:
            hyp = solve_pnp_epnp(points[idx], pixels[idx], k)
        except PoseFailureError:
            continue
        errs = reprojection_errors(hyp, points, pixels, k)
        inl = errs < theta_re
        count = int(inl.sum())
        if count >= 4:
            mean_err = float(errs[inl].mean())
            if best is None or (count, -mean_err, -it) > (best[0], -best[1], -best[2]):
                best = (count, mean_err, it, hyp)
        if best is not None:
            ratio = best[0] / n
            if ratio >= 1.0:
                break
            needed = np.log(1.0 - confidence) / np.log(1.0 - ratio**4)
            if it + 1 >= needed:
                break
    if best is None:
        raise PoseFailureError("no RANSAC hypothesis reached 4 inliers")

    inl = reprojection_errors(best[3], points, pixels, k) < theta_re
    pose = best[3]
    try:
        pose = solve_pnp_epnp(points[inl], pixels[inl], k)
    except PoseFailureError:
        pass
    pose = refine_pose_lm(pose, points[inl], pixels[inl], k)
    errs = reprojection_errors(pose, points, pixels, k)
    final_inl = errs < theta_re
    count = int(final_inl.sum())
    if count < 4:
        raise PoseFailureError("refined pose lost its inlier support")
    return PoseEstimate(
        pose=pose,
        inlier_count=count,
        mean_reproj_error=float(errs[final_inl].mean()),
        correspondence_count=n,
    )
