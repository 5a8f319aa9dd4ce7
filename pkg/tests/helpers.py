"""Independent reference implementations used to cross-check the package.

These deliberately use different algorithms than the library code: PnP via
direct linear transform plus orthogonalization, and planar PnP via homography
decomposition.
"""

import numpy as np

from coordpose.geometry import CameraIntrinsics, Pose


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_angle_deg(r1, r2):
    cos = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def solve_pnp_dlt(points, pixels, k: CameraIntrinsics) -> Pose:
    """12-parameter DLT followed by projection onto SO(3). Needs n >= 6."""
    points = np.asarray(points, dtype=np.float64)
    xn = (pixels[:, 0] - k.cx) / k.fx
    yn = (pixels[:, 1] - k.cy) / k.fy
    n = len(points)
    a = np.zeros((2 * n, 12))
    homo = np.concatenate([points, np.ones((n, 1))], axis=1)
    a[0::2, 0:4] = homo
    a[0::2, 8:12] = -xn[:, None] * homo
    a[1::2, 4:8] = homo
    a[1::2, 8:12] = -yn[:, None] * homo
    _, _, vt = np.linalg.svd(a)
    p = vt[-1].reshape(3, 4)
    p /= np.linalg.norm(p[2, :3])
    if p[2, :3] @ points[0] + p[2, 3] < 0:
        p = -p
    u, _, vt2 = np.linalg.svd(p[:, :3])
    r = u @ vt2
    if np.linalg.det(r) < 0:
        r = -r
    return Pose(r, p[:, 3])


def solve_planar_homography(points, pixels, k: CameraIntrinsics) -> Pose:
    """Pose of points lying in the object z=0 plane via homography decomposition."""
    points = np.asarray(points, dtype=np.float64)
    assert np.allclose(points[:, 2], 0.0), "oracle expects points on the z=0 plane"
    xn = (pixels[:, 0] - k.cx) / k.fx
    yn = (pixels[:, 1] - k.cy) / k.fy
    n = len(points)
    a = np.zeros((2 * n, 9))
    homo = np.stack([points[:, 0], points[:, 1], np.ones(n)], axis=1)
    a[0::2, 0:3] = homo
    a[0::2, 6:9] = -xn[:, None] * homo
    a[1::2, 3:6] = homo
    a[1::2, 6:9] = -yn[:, None] * homo
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    scale = 2.0 / (np.linalg.norm(h[:, 0]) + np.linalg.norm(h[:, 1]))
    h *= scale
    if h[2, 2] < 0:  # translation depth must be positive
        h = -h
    r1, r2 = h[:, 0], h[:, 1]
    r3 = np.cross(r1, r2)
    rough = np.stack([r1, r2, r3], axis=1)
    u, _, vt2 = np.linalg.svd(rough)
    r = u @ vt2
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt2
    return Pose(r, h[:, 2])
