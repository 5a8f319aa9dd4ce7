"""Software rasterizer producing coordinate, depth and triangle-index images.

Rules the rasterizer commits to (tests depend on them):
  - a pixel is covered when its center (integer coordinates) passes the
    edge-function test with top-left fill on shared edges
  - no antialiasing, no back-face culling; degenerate triangles are skipped
  - depth test is strict less-than, so on exact ties the earlier triangle in
    submission order wins
  - triangles crossing the near plane are clipped before projection
  - attributes are interpolated perspective-correctly

Projected vertices are snapped to a 1/4096 px grid. Within +-8192 px of the
origin the edge functions are then exact in float64, so the two triangles
sharing an edge compute exactly opposite values and the top-left rule assigns
every boundary pixel to exactly one of them. Without the snap, pixels whose
center falls on a shared edge can be dropped by both triangles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .geometry import CameraIntrinsics, Mesh, NormalizationBox, Pose, normalize_coord


@dataclass
class RenderOutput:
    """Single-object render: coord in [0,1], depth in mm (0 = background)."""

    coord: np.ndarray  # (H,W,3) float64
    depth: np.ndarray  # (H,W) float64
    mask: np.ndarray  # (H,W) bool
    tri: np.ndarray  # (H,W) int32 triangle index, -1 = background


@dataclass
class SceneRender:
    """Joint render of several objects into one depth buffer."""

    depth: np.ndarray  # (H,W) float64
    owner: np.ndarray  # (H,W) int32 object index, -1 = background

    def visible_mask(self, index: int) -> np.ndarray:
        return self.owner == index


def _clip_near(cam: np.ndarray, attr: np.ndarray, near: float):
    """Sutherland-Hodgman clip of one triangle against z >= near.

    Attributes are interpolated linearly in camera space, which is exact
    because object-to-camera is affine. Yields (3,3) cam / (3,D) attr pairs.
    """
    inside = cam[:, 2] >= near
    if inside.all():
        yield cam, attr
        return
    if not inside.any():
        return
    out_cam, out_attr = [], []
    for i in range(3):
        j = (i + 1) % 3
        a, b = cam[i], cam[j]
        if inside[i]:
            out_cam.append(a)
            out_attr.append(attr[i])
        if inside[i] != inside[j]:
            t = (near - a[2]) / (b[2] - a[2])
            out_cam.append(a + t * (b - a))
            out_attr.append(attr[i] + t * (attr[j] - attr[i]))
    for i in range(1, len(out_cam) - 1):
        yield (
            np.stack([out_cam[0], out_cam[i], out_cam[i + 1]]),
            np.stack([out_attr[0], out_attr[i], out_attr[i + 1]]),
        )


_SUBPIX = 4096.0


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by) -> bool:
    # winding is normalized to positive area, so the interior lies where the
    # edge function is positive; under that convention a top edge runs +x and
    # a left edge runs -y
    if ay == by:
        return bx > ax
    return by < ay


def _rasterize(tri_stream, k: CameraIntrinsics, attr_dim: int, near: float):
    """Shared z-buffer pass over (owner, cam_tri, attr_tri) triples."""
    h, w = k.height, k.width
    depth = np.full((h, w), np.inf)
    tri_map = np.full((h, w), -1, dtype=np.int32)
    owner_map = np.full((h, w), -1, dtype=np.int32)
    attr_img = np.zeros((h, w, attr_dim)) if attr_dim else None

    for owner, tri_index, cam, attr in tri_stream:
        for ctri, cattr in _clip_near(cam, attr, near):
            z = ctri[:, 2]
            px = np.round((k.fx * ctri[:, 0] / z + k.cx) * _SUBPIX) / _SUBPIX
            py = np.round((k.fy * ctri[:, 1] / z + k.cy) * _SUBPIX) / _SUBPIX
            area = _edge(px[0], py[0], px[1], py[1], px[2], py[2])
            if area == 0.0:
                continue
            if area < 0.0:
                px, py, z = px[[0, 2, 1]], py[[0, 2, 1]], z[[0, 2, 1]]
                cattr = cattr[[0, 2, 1]]
                area = -area
            x0 = max(0, int(np.ceil(px.min())))
            x1 = min(w - 1, int(np.floor(px.max())))
            y0 = max(0, int(np.ceil(py.min())))
            y1 = min(h - 1, int(np.floor(py.max())))
            if x0 > x1 or y0 > y1:
                continue
            gx = np.arange(x0, x1 + 1, dtype=np.float64)
            gy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
            covered = None
            edges = []
            for i in range(3):
                j = (i + 1) % 3
                e = _edge(px[i], py[i], px[j], py[j], gx, gy)
                ok = (e > 0) | ((e == 0) & _top_left(px[i], py[i], px[j], py[j]))
                covered = ok if covered is None else (covered & ok)
                edges.append(e)
            if not covered.any():
                continue
            # barycentric weight of a vertex comes from the opposite edge
            w0 = edges[1][covered] / area
            w1 = edges[2][covered] / area
            w2 = edges[0][covered] / area
            inv_z = w0 / z[0] + w1 / z[1] + w2 / z[2]
            pix_z = 1.0 / inv_z
            sub = (slice(y0, y1 + 1), slice(x0, x1 + 1))
            closer = pix_z < depth[sub][covered]
            if not closer.any():
                continue
            yy, xx = np.nonzero(covered)
            yy, xx = yy[closer] + y0, xx[closer] + x0
            depth[yy, xx] = pix_z[closer]
            tri_map[yy, xx] = tri_index
            owner_map[yy, xx] = owner
            if attr_dim:
                over_z = (
                    np.outer(w0, cattr[0] / z[0])
                    + np.outer(w1, cattr[1] / z[1])
                    + np.outer(w2, cattr[2] / z[2])
                )
                attr_img[yy, xx] = over_z[closer] * pix_z[closer, None]

    depth[owner_map < 0] = 0.0
    return depth, tri_map, owner_map, attr_img


def _mesh_triangles(mesh: Mesh, pose: Pose, owner: int = 0):
    cam = pose.transform(mesh.vertices)
    for idx, tri in enumerate(mesh.triangles):
        yield owner, idx, cam[tri], mesh.vertices[tri]


def render(
    mesh: Mesh,
    pose: Pose,
    k: CameraIntrinsics,
    box: NormalizationBox | None = None,
    near: float = 1.0,
) -> RenderOutput:
    """Render normalized object coordinates and depth for one posed mesh."""
    if box is None:
        box = NormalizationBox.from_mesh(mesh)
    depth, tri_map, owner, attr = _rasterize(_mesh_triangles(mesh, pose), k, 3, near)
    mask = owner >= 0
    coord = np.zeros_like(attr)
    coord[mask] = normalize_coord(attr[mask], box)
    return RenderOutput(coord=coord, depth=depth, mask=mask, tri=tri_map)


def render_scene(
    objects: list[tuple[Mesh, Pose]], k: CameraIntrinsics, near: float = 1.0
) -> SceneRender:
    """Render several objects into one z-buffer to get per-object visibility."""
    if not objects:
        raise InputError("render_scene needs at least one object")

    def stream():
        for owner, (mesh, pose) in enumerate(objects):
            yield from _mesh_triangles(mesh, pose, owner)

    depth, _, owner_map, _ = _rasterize(stream(), k, 0, near)
    return SceneRender(depth=depth, owner=owner_map)


def shade_headlight(
    mesh: Mesh, pose: Pose, k: CameraIntrinsics, out: RenderOutput, ambient: float = 0.25
) -> np.ndarray:
    """Flat-shaded uint8 color image lit from the camera position.

    Shading depends only on face orientation relative to the viewing ray, so
    an object that maps onto itself under a symmetry rotation produces the
    same picture in symmetric poses. Used to synthesize input color images.
    """
    cam = pose.transform(mesh.vertices)
    tris = cam[mesh.triangles]
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0] = 1.0
    normals /= norms[:, None]
    centers = tris.mean(axis=1)
    to_cam = -centers / np.linalg.norm(centers, axis=1)[:, None]
    # two-sided: coverage has no back-face culling
    intensity = ambient + (1.0 - ambient) * np.abs(np.sum(normals * to_cam, axis=1))
    levels = np.round(np.clip(intensity, 0.0, 1.0) * 255).astype(np.uint8)
    img = np.zeros((k.height, k.width, 3), dtype=np.uint8)
    vis = out.tri >= 0
    img[vis] = levels[out.tri[vis], None]
    return img
