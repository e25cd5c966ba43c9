"""Flat orthographic rasterizer and OBJ mesh export.

Blocks are painted far-to-near as flat-colored rectangles or discs with a
one-pixel dark edge; highlighted blocks get a thicker red outline drawn inside
their silhouette, so silhouettes never grow. Output is bit-deterministic.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .statics import Scene

BACKGROUND = (255, 255, 255)
GROUND_FILL = (225, 225, 225)
GROUND_LINE = (90, 90, 90)
EDGE = (40, 40, 40)
HIGHLIGHT = (230, 0, 0)

COLORS = {
    "red": (200, 40, 40),
    "green": (60, 160, 60),
    "blue": (50, 90, 200),
    "yellow": (235, 200, 40),
    "orange": (240, 140, 30),
    "purple": (130, 60, 160),
    "pink": (235, 130, 170),
    "brown": (140, 90, 50),
    "black": (30, 30, 30),
    "white": (245, 245, 245),
    "gray": (150, 150, 150),
    "grey": (150, 150, 150),
    "cyan": (40, 190, 200),
    "tan": (210, 180, 140),
    "beige": (225, 210, 170),
}


def color_rgb(tag: str) -> tuple[int, int, int]:
    tag = (tag or "").strip().lower()
    if tag in COLORS:
        return COLORS[tag]
    if tag.startswith("#") and len(tag) == 7:
        try:
            return tuple(int(tag[k : k + 2], 16) for k in (1, 3, 5))
        except ValueError:
            pass
    h = hashlib.sha256(tag.encode()).digest()
    return (64 + h[0] % 160, 64 + h[1] % 160, 64 + h[2] % 160)


class Axis(str, Enum):
    FRONT = "front"  # camera on -y looking +y; image right = +x
    SIDE = "side"  # camera on +x looking -x; image right = +y
    TOP = "top"  # camera above looking down; image right = +x, up = +y


@dataclass(frozen=True)
class RenderConfig:
    width_px: int = 400
    height_px: int = 300
    mm_per_px: float = 1.0
    ground_px: int = 20  # rows below the ground line in front/side views


@dataclass
class OrthoView:
    axis: Axis
    image: np.ndarray
    highlights: frozenset = field(default_factory=frozenset)
    config: RenderConfig = RenderConfig()

    def to_ppm(self) -> bytes:
        h, w, _ = self.image.shape
        return b"P6\n%d %d\n255\n" % (w, h) + self.image.tobytes()

    def to_png(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.image, "RGB").save(buf, format="PNG", optimize=False)
        return buf.getvalue()

    def save(self, path) -> Path:
        path = Path(path)
        data = self.to_png() if path.suffix.lower() == ".png" else self.to_ppm()
        path.write_bytes(data)
        return path


def ppm_to_array(data: bytes) -> np.ndarray:
    header, rest = data.split(b"\n", 1)
    if header != b"P6":
        raise ValueError("not a binary PPM")
    dims, rest = rest.split(b"\n", 1)
    w, h = map(int, dims.split())
    _, pixels = rest.split(b"\n", 1)
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)


def ppm_to_png(data: bytes) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(ppm_to_array(data), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def _view_shape(block, axis: Axis):
    """(kind, params, depth) of ``block`` projected on ``axis``; depth grows toward the camera."""
    x, y, z = block.center_mm
    ex, ey, ez = block.extents_mm
    if axis is Axis.FRONT:
        if block.kind == "cyl_y":
            return "disc", (x, z, ex / 2), -y
        return "rect", (x - ex / 2, x + ex / 2, z - ez / 2, z + ez / 2), -y
    if axis is Axis.SIDE:
        if block.kind == "cyl_x":
            return "disc", (y, z, ey / 2), x
        return "rect", (y - ey / 2, y + ey / 2, z - ez / 2, z + ez / 2), x
    if block.kind == "cyl_z":
        return "disc", (x, y, ex / 2), block.top_z
    return "rect", (x - ex / 2, x + ex / 2, y - ey / 2, y + ey / 2), block.top_z


def _pixel_grid(axis: Axis, cfg: RenderConfig):
    s = cfg.mm_per_px
    cols = (np.arange(cfg.width_px) + 0.5 - cfg.width_px / 2) * s
    if axis is Axis.TOP:
        rows = (cfg.height_px / 2 - np.arange(cfg.height_px) - 0.5) * s
    else:
        rows = (cfg.height_px - cfg.ground_px - np.arange(cfg.height_px) - 0.5) * s
    return cols[None, :], rows[:, None]


def _mask(kind, params, U, V):
    if kind == "rect":
        u0, u1, v0, v1 = params
        return (U >= u0) & (U <= u1) & (V >= v0) & (V <= v1)
    cu, cv, r = params
    return (U - cu) ** 2 + (V - cv) ** 2 <= r * r


def _erode(mask, times=1):
    out = mask.copy()
    for _ in range(times):
        inner = out.copy()
        inner[1:, :] &= out[:-1, :]
        inner[:-1, :] &= out[1:, :]
        inner[:, 1:] &= out[:, :-1]
        inner[:, :-1] &= out[:, 1:]
        inner[0, :] = inner[-1, :] = False
        inner[:, 0] = inner[:, -1] = False
        out = inner
    return out


def render_ortho(scene: Scene, axis=Axis.FRONT, highlights=(), config: RenderConfig = RenderConfig()) -> OrthoView:
    axis = Axis(axis)
    highlights = frozenset(highlights)
    img = np.empty((config.height_px, config.width_px, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    U, V = _pixel_grid(axis, config)
    if axis is not Axis.TOP:
        ground_row = config.height_px - config.ground_px
        img[ground_row:, :] = GROUND_FILL
        img[ground_row, :] = GROUND_LINE
    shapes = [(_view_shape(b, axis), k) for k, b in enumerate(scene.blocks)]
    shapes.sort(key=lambda item: (item[0][2], item[1]))
    for (kind, params, _), k in shapes:
        m = _mask(kind, params, U, V)
        if not m.any():
            continue
        img[m] = color_rgb(scene.blocks[k].placement.color)
        img[m & ~_erode(m)] = EDGE
        if k in highlights:
            img[m & ~_erode(m, 3)] = HIGHLIGHT
    return OrthoView(axis, img, highlights, config)


def render_pair(scene: Scene, highlights=(), config: RenderConfig = RenderConfig(), axes=(Axis.FRONT, Axis.SIDE)):
    return [render_ortho(scene, a, highlights, config) for a in axes]


def projected_bbox(view: OrthoView, color=None):
    """Pixel bounding box ``(row0, row1, col0, col1)`` of non-background, non-ground pixels."""
    img = view.image
    mask = np.ones(img.shape[:2], dtype=bool)
    for c in (BACKGROUND, GROUND_FILL, GROUND_LINE):
        mask &= ~np.all(img == c, axis=-1)
    if color is not None:
        mask &= np.all(img == color, axis=-1)
    if not mask.any():
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


CYLINDER_SIDES = 24


def _box_mesh(b):
    x, y, z = b.center_mm
    hx, hy, hz = (e / 2 for e in b.extents_mm)
    verts = [(x + sx * hx, y + sy * hy, z + sz * hz) for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)]
    # vertex k = sx + 2*sy + 4*sz with bits 0/1
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = [t for a, b_, c, d in quads for t in ((a, b_, c), (a, c, d))]
    return verts, tris


def _cylinder_mesh(b):
    x, y, z = b.center_mm
    ex, ey, ez = b.extents_mm
    axis = {"cyl_z": 2, "cyl_x": 0, "cyl_y": 1}[b.kind]
    half = (ex, ey, ez)[axis] / 2
    r = (ex, ey, ez)[(axis + 1) % 3] / 2
    u_ax, v_ax = [a for a in range(3) if a != axis]
    center = (x, y, z)

    def point(t, u, v):
        p = list(center)
        p[axis] += t
        p[u_ax] += u
        p[v_ax] += v
        return tuple(p)

    n = CYLINDER_SIDES
    ring = [(r * math.cos(2 * math.pi * k / n), r * math.sin(2 * math.pi * k / n)) for k in range(n)]
    verts = [point(-half, u, v) for u, v in ring] + [point(half, u, v) for u, v in ring]
    verts += [point(-half, 0, 0), point(half, 0, 0)]
    bc, tc = 2 * n, 2 * n + 1
    tris = []
    for k in range(n):
        k2 = (k + 1) % n
        tris += [(k, k2, n + k2), (k, n + k2, n + k)]
        tris += [(bc, k2, k), (tc, n + k, n + k2)]
    return verts, tris


def mesh_text(scene: Scene) -> str:
    lines = ["# blockforge scene mesh", f"# objects {len(scene.blocks)}"]
    offset = 1
    for k, b in enumerate(scene.blocks):
        verts, tris = _box_mesh(b) if b.kind == "box" else _cylinder_mesh(b)
        lines.append(f"o block_{k}_{b.placement.block_id}")
        lines.extend("v %.4f %.4f %.4f" % tuple(v + 0.0 for v in p) for p in verts)
        lines.extend("f %d %d %d" % (a + offset, c + offset, d + offset) for a, c, d in tris)
        offset += len(verts)
    return "\n".join(lines) + "\n"


def export_mesh(scene: Scene, path) -> Path:
    path = Path(path)
    path.write_text(mesh_text(scene))
    return path
