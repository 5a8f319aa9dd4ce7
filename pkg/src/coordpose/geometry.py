"""Rigid transforms, pinhole projection, meshes, coordinate normalization and symmetry pools.

Conventions used throughout the package:
  - right-handed camera frame, +z forward, units in mm
  - pixel origin at the top-left corner, pixel centers at integer coordinates
  - rotations are 3x3 row-major matrices acting on column vectors
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BehindCameraError, ConfigurationError, InputError

_ORTHO_TOL = 1e-6


def _as_array(x, shape, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.shape != shape:
        raise InputError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def _check_rotation(r: np.ndarray, tol: float = _ORTHO_TOL) -> None:
    if not np.allclose(r.T @ r, np.eye(3), atol=tol):
        raise InputError("rotation is not orthonormal")
    if not abs(np.linalg.det(r) - 1.0) < tol:
        raise InputError("rotation determinant is not +1")


@dataclass(frozen=True)
class Pose:
    """Rigid transform of the object frame into the camera frame (R in SO(3), t in mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_array(self.rotation, (3, 3), "rotation")
        t = _as_array(self.translation, (3,), "translation")
        _check_rotation(r)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map object-frame points (n,3) or (3,) into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose_rotation(self, r: np.ndarray) -> "Pose":
        """Right-multiply the rotation by an object-frame rotation, keeping translation."""
        return Pose(self.rotation @ np.asarray(r, dtype=np.float64), self.translation)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigurationError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("image size must be at least 1x1")

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def _max_pairwise_distance(vertices: np.ndarray) -> float:
    """Brute-force max distance over all vertex pairs, chunked to bound memory."""
    n = len(vertices)
    best = 0.0
    step = max(1, int(2**22 // max(n, 1)))
    for i0 in range(0, n, step):
        block = vertices[i0 : i0 + step]
        d = np.linalg.norm(block[:, None, :] - vertices[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh in the object frame (mm). Diameter is cached at construction."""

    vertices: np.ndarray
    triangles: np.ndarray
    diameter: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) == 0:
            raise InputError("vertices must be a non-empty (n,3) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise InputError("triangles must be a (m,3) index array")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InputError("triangle indices out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        d = _max_pairwise_distance(v)
        if not d > 0:
            raise InputError("mesh diameter must be positive")
        object.__setattr__(self, "diameter", d)


@dataclass(frozen=True)
class NormalizationBox:
    """Axis-aligned bounds (mm) mapping object coordinates to the unit color cube."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = _as_array(self.min_corner, (3,), "min_corner")
        hi = _as_array(self.max_corner, (3,), "max_corner")
        if not np.all(hi > lo):
            raise ConfigurationError("max_corner must exceed min_corner on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "NormalizationBox":
        """Mesh bounding box expanded symmetrically about the origin.

        Kepping the box symmetric makes the object-frame origin map to the
        mid-gray color (0.5, 0.5, 0.5) and lets symmetry rotations act about
        the center of the color space.
        """
        m = np.maximum(np.abs(mesh.vertices.min(axis=0)), np.abs(mesh.vertices.max(axis=0)))
        if not np.all(m > 0):
            raise ConfigurationError("mesh is flat along an axis; pass an explicit box")
        return cls(-m, m)


def normalize_coord(point, box: NormalizationBox) -> np.ndarray:
    """Map object-frame mm coordinates into [0,1]^3; out-of-box points are clamped.

    Accepts a single (3,) point or an (..., 3) array.
    """
    p = np.asarray(point, dtype=np.float64)
    c = (p - box.min_corner) / box.extent
    return np.clip(c, 0.0, 1.0)


def denormalize_coord(coord, box: NormalizationBox) -> np.ndarray:
    """Inverse of normalize_coord for in-box points. Components must lie in [0,1]."""
    c = np.asarray(coord, dtype=np.float64)
    if c.min(initial=0.0) < -1e-6 or c.max(initial=1.0) > 1.0 + 1e-6:
        raise InputError("normalized coordinates must lie in [0,1]")
    return box.min_corner + np.clip(c, 0.0, 1.0) * box.extent


def project(point, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of camera-frame points (mm) to pixel coordinates.

    Accepts (3,) or (n,3); raises BehindCameraError if any depth is <= 0.
    """
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point has non-positive depth")
    return np.stack(
        [k.fx * p[..., 0] / z + k.cx, k.fy * p[..., 1] / z + k.cy], axis=-1
    )


def rotation_about_axis(axis: str, angle: float) -> np.ndarray:
    """Rotation matrix about a principal axis ('x' | 'y' | 'z').

    Sine/cosine values within 1e-12 of 0 or +-1 are snapped so that quarter-turn
    multiples are exact and exactly-symmetric meshes stay bitwise symmetric.
    """
    c, s = np.cos(angle), np.sin(angle)

    def snap(v):
        for target in (0.0, 1.0, -1.0):
            if abs(v - target) < 1e-12:
                return target
        return v

    c, s = snap(c), snap(s)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    raise ConfigurationError(f"unknown axis {axis!r}")


@dataclass(frozen=True)
class SymmetryPool:
    """Finite set of object-frame rotations mapping the object onto itself.

    The first entry is always the identity. A continuous rotational symmetry is
    carried as an axis tag plus the discretization count used when the pool has
    to be expanded to a finite set.
    """

    rotations: tuple = (np.eye(3),)
    continuous_axis: str | None = None
    discretization_count: int = 36

    def __post_init__(self):
        rots = []
        for r in self.rotations:
            a = _as_array(r, (3, 3), "pool rotation")
            _check_rotation(a)
            a.setflags(write=False)
            rots.append(a)
        if not rots or not np.allclose(rots[0], np.eye(3), atol=_ORTHO_TOL):
            raise ConfigurationError("pool must start with the identity rotation")
        if self.continuous_axis is not None and self.continuous_axis not in ("x", "y", "z"):
            raise ConfigurationError(f"unknown symmetry axis {self.continuous_axis!r}")
        object.__setattr__(self, "rotations", tuple(rots))

    @property
    def is_trivial(self) -> bool:
        return len(self.rotations) == 1 and self.continuous_axis is None

    @classmethod
    def identity(cls) -> "SymmetryPool":
        return cls()

    @classmethod
    def cyclic(cls, axis: str, order: int) -> "SymmetryPool":
        """Pool of `order` evenly spaced rotations about a principal axis."""
        if order < 1:
            raise ConfigurationError("cyclic order must be >= 1")
        rots = [rotation_about_axis(axis, 2.0 * np.pi * k / order) for k in range(order)]
        return cls(tuple(rots))

    @classmethod
    def continuous(cls, axis: str, discretization_count: int = 36) -> "SymmetryPool":
        return cls((np.eye(3),), axis, discretization_count)


def apply_symmetry(pose: Pose, r: np.ndarray) -> Pose:
    """Compose a pose with an object-frame symmetry rotation; translation is unchanged."""
    return pose.compose_rotation(r)


def expand_pool(pool: SymmetryPool) -> list[np.ndarray]:
    """Finite list of rotations represented by the pool.

    Discrete pools are returned verbatim. A continuous axis contributes K
    uniformly spaced rotations about the axis, composed with every discrete
    entry.
    """
    if pool.continuous_axis is None:
        return list(pool.rotations)
    k = pool.discretization_count
    if k < 2:
        raise ConfigurationError("discretization_count must be >= 2 for a continuous axis")
    steps = [rotation_about_axis(pool.continuous_axis, 2.0 * np.pi * i / k) for i in range(k)]
    return [r @ s for r in pool.rotations for s in steps]


def box_mesh(size_x: float, size_y: float, size_z: float) -> Mesh:
    """Axis-aligned box centered at the origin.

    The triangulation is chosen so the triangle set (as unordered vertex
    triples) is invariant under a half-turn about z, which keeps renders of
    z-flipped poses pixel-identical in mask and depth.
    """
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    verts = np.array(
        [
            [sx * hx, sy * hy, sz * hz]
            for sx in (-1, 1)
            for sy in (-1, 1)
            for sz in (-1, 1)
        ],
        dtype=np.float64,
    )
    # vertex index bits: (x sign)<<2 | (y sign)<<1 | (z sign)
    tris = np.array(
        [
            [1, 5, 7], [1, 7, 3],  # +z
            [0, 4, 6], [0, 6, 2],  # -z
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 1, 2], [1, 3, 2],  # -x
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 1, 4], [1, 5, 4],  # -y
        ],
        dtype=np.int64,
    )
    return Mesh(verts, tris)
