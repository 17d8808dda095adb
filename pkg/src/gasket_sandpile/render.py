"""Dot pictures of vertex functions as binary PPM or SVG."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .integrals import ContinuationView

RGB = tuple[int, int, int]

DEFAULT_PALETTE: dict[int, RGB] = {
    0: (255, 255, 255),
    1: (128, 128, 128),
    2: (255, 0, 0),
    3: (0, 0, 255),
}
BACKGROUND: RGB = (0, 0, 0)
MAX_RASTER_LEVEL = 10


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    format: str = "ppm"
    palette: Mapping[int, RGB] = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    radius: int | None = None  # pixels; derived from the vertex spacing when None
    width: int = 512

    def __post_init__(self):
        if self.format not in ("ppm", "svg"):
            raise RenderError(f"unknown format {self.format!r}; expected ppm or svg")
        if self.width < 16:
            raise RenderError("image width must be at least 16 pixels")


def _geometry(level: int, keys: np.ndarray, spec: RenderSpec):
    side = 1 << level
    margin = max(4, spec.width // 32)
    span = spec.width - 2 * margin
    height = int(math.ceil(span * math.sqrt(3) / 2)) + 2 * margin
    spacing = span / side
    radius = spec.radius if spec.radius is not None else max(1, min(12, int(spacing / 3)))
    p, q = keys[:, 0].astype(float), keys[:, 1].astype(float)
    x = margin + (p + q / 2) * spacing
    y = height - margin - q * spacing * math.sqrt(3) / 2
    return height, radius, x, y


def _colors(values: np.ndarray, palette: Mapping[int, RGB]) -> list[RGB]:
    missing = sorted({int(v) for v in set(values.tolist())} - set(palette))
    if missing:
        raise RenderError(f"no palette entry for height(s) {', '.join(map(str, missing))}")
    return [tuple(palette[int(v)]) for v in values.tolist()]


def render(source, spec: RenderSpec | None = None) -> bytes:
    """Draw one dot per vertex of a config or value map; output is deterministic."""
    spec = spec or RenderSpec()
    view = ContinuationView.of(source)
    if view.values.dtype == object and any(v != int(v) for v in view.values.tolist()):
        raise RenderError("only integer-valued maps can be rendered")
    keys = view.lattice.keys
    colors = _colors(view.values, spec.palette)
    height, radius, xs, ys = _geometry(view.level, keys, spec)
    if spec.format == "svg":
        return _svg(spec.width, height, radius, xs, ys, colors)
    if view.level > MAX_RASTER_LEVEL:
        raise RenderError(f"raster output supports level <= {MAX_RASTER_LEVEL}")
    return _ppm(spec.width, height, radius, xs, ys, colors)


def _ppm(width, height, radius, xs, ys, colors) -> bytes:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    r = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    disk = dx * dx + dy * dy <= radius * radius
    offy, offx = dy[disk], dx[disk]
    for x, y, c in zip(xs, ys, colors):
        py = int(round(y)) + offy
        px = int(round(x)) + offx
        ok = (py >= 0) & (py < height) & (px >= 0) & (px < width)
        img[py[ok], px[ok]] = c
    return f"P6\n{width} {height}\n255\n".encode("ascii") + img.tobytes()


def _svg(width, height, radius, xs, ys, colors) -> bytes:
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#{_hex(BACKGROUND)}"/>',
    ]
    for x, y, c in zip(xs, ys, colors):
        lines.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{radius}" fill="#{_hex(c)}"/>')
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _hex(c: RGB) -> str:
    return "".join(f"{int(v):02x}" for v in c)


def read_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 image produced by :func:`render` into an (h, w, 3) array."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise RenderError("not a binary P6 image")
    w, h = map(int, parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


def colors_present(data: bytes) -> set[RGB]:
    """Distinct non-background colors in a rendered PPM."""
    img = read_ppm(data).reshape(-1, 3)
    found = {tuple(int(v) for v in row) for row in np.unique(img, axis=0)}
    found.discard(BACKGROUND)
    return found
