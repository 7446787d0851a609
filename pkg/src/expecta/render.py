"""Parametric shape simulator and auto-labeler.

``render`` maps an annotation to a grayscale image: the outline of a
circle inscribed in the bounding box, or the square equal to it, stroke
intensity y6 on a black background, no antialiasing.  The handdrawn style
displaces the stroke path with a smooth periodic wobble plus per-vertex
jitter (squares) and adds clipped Gaussian noise on stroke pixels.
``auto_label`` inverts the simulator up to raster error.
"""

from __future__ import annotations

import base64
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .annot import Annotation
from .exceptions import (
    FormatError,
    NoForegroundError,
    RenderDomainError,
    SpecificationError,
)
from .seeds import as_generator


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit grayscale image."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2:
            raise SpecificationError(f"image must be 2-d, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    @staticmethod
    def frombytes(width: int, height: int, data: bytes) -> "GrayImage":
        if len(data) != width * height:
            raise FormatError(
                f"image payload: expected {width * height} bytes, got {len(data)}"
            )
        return GrayImage(np.frombuffer(data, np.uint8).reshape(height, width))


@dataclass(frozen=True)
class RenderStyle:
    """Stroke parameters; kind is "clean" or "handdrawn"."""

    kind: str = "clean"
    stroke_thickness: int = 2
    jitter_amplitude: float = 2.0
    wobble_wavelength: float = 16.0
    noise_std: float = 4.0

    def __post_init__(self):
        if self.kind not in ("clean", "handdrawn"):
            raise SpecificationError(f"unknown render kind {self.kind!r}")
        if self.stroke_thickness < 1:
            raise SpecificationError("stroke_thickness must be >= 1")
        if self.jitter_amplitude < 0 or self.noise_std < 0:
            raise SpecificationError("amplitudes must be >= 0")
        if self.wobble_wavelength <= 0:
            raise SpecificationError("wobble_wavelength must be positive")

    @staticmethod
    def clean(stroke_thickness: int = 2) -> "RenderStyle":
        return RenderStyle("clean", stroke_thickness)

    @staticmethod
    def handdrawn(
        stroke_thickness: int = 2,
        jitter_amplitude: float = 2.0,
        wobble_wavelength: float = 16.0,
        noise_std: float = 4.0,
    ) -> "RenderStyle":
        return RenderStyle(
            "handdrawn", stroke_thickness, jitter_amplitude, wobble_wavelength, noise_std
        )

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "stroke_thickness": self.stroke_thickness,
            "jitter_amplitude": self.jitter_amplitude,
            "wobble_wavelength": self.wobble_wavelength,
            "noise_std": self.noise_std,
        }

    @staticmethod
    def from_jsonable(obj) -> "RenderStyle":
        if isinstance(obj, str):
            return RenderStyle(obj)
        defaults = RenderStyle(obj["kind"])
        return RenderStyle(
            obj["kind"],
            int(obj.get("stroke_thickness", defaults.stroke_thickness)),
            float(obj.get("jitter_amplitude", defaults.jitter_amplitude)),
            float(obj.get("wobble_wavelength", defaults.wobble_wavelength)),
            float(obj.get("noise_std", defaults.noise_std)),
        )


def _iround(x):
    # round half toward +inf; avoids numpy's half-to-even on .5 path samples
    return np.floor(np.asarray(x, np.float64) + 0.5).astype(np.int64)


def _midpoint_octant(r: int) -> list[tuple[int, int]]:
    pts = []
    x, y = r, 0
    d = 1 - r
    while y <= x:
        pts.append((x, y))
        y += 1
        if d < 0:
            d += 2 * y + 1
        else:
            x -= 1
            d += 2 * (y - x) + 1
    return pts


def _circle_ring(cx: int, cy: int, r: int, parity: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixels of one midpoint circle; parity 1 widens even-sized boxes."""
    xs, ys = [], []
    for a, b in _midpoint_octant(r):
        for da, db in ((a, b), (b, a)):
            for px in (cx - da, cx + da + parity):
                for py in (cy - db, cy + db + parity):
                    xs.append(px)
                    ys.append(py)
    return np.asarray(xs, np.int64), np.asarray(ys, np.int64)


def _wobble(theta_or_u, n1, n2, phi1, phi2, amplitude):
    # two seeded sinusoids, combined weight 1 so |w| <= amplitude
    return amplitude * (
        0.7 * np.sin(n1 * theta_or_u + phi1) + 0.3 * np.sin(n2 * theta_or_u + phi2)
    )


def _draw_clean_square(mask: np.ndarray, ann: Annotation, t: int) -> None:
    x0, y0, x1, y1 = ann.y2, ann.y3, ann.y4, ann.y5
    mask[y0 : min(y0 + t, y1), x0:x1] = True
    mask[max(y1 - t, y0) : y1, x0:x1] = True
    mask[y0:y1, x0 : min(x0 + t, x1)] = True
    mask[y0:y1, max(x1 - t, x0) : x1] = True


def _draw_clean_circle(mask: np.ndarray, ann: Annotation, t: int) -> None:
    s = ann.size()
    r_out = (s - 1) // 2
    parity = (s - 1) - 2 * r_out
    cx, cy = ann.y2 + r_out, ann.y3 + r_out
    for k in range(t):
        r = r_out - k
        if r < 0:
            break
        xs, ys = _circle_ring(cx, cy, r, parity)
        mask[ys, xs] = True


def _draw_handdrawn_circle(mask, ann, style, rng) -> None:
    h, w = mask.shape
    s = ann.size()
    t = style.stroke_thickness
    r_out = (s - 1) // 2
    parity = (s - 1) - 2 * r_out
    cx, cy = ann.y2 + r_out, ann.y3 + r_out
    cxf = ann.y2 + (s - 1) / 2.0
    cyf = ann.y3 + (s - 1) / 2.0
    # integer cycle counts keep the wobble periodic around the seam
    circumference = 2.0 * math.pi * max((s - 1) / 2.0, 1.0)
    n1 = max(1, round(circumference / style.wobble_wavelength))
    n2 = 2 * n1 + 1
    phi1, phi2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
    amp = style.jitter_amplitude / 2.0
    for k in range(t):
        r = r_out - k
        if r < 0:
            break
        xs, ys = _circle_ring(cx, cy, r, parity)
        dx = xs - cxf
        dy = ys - cyf
        theta = np.arctan2(dy, dx)
        wob = _wobble(theta, n1, n2, phi1, phi2, amp)
        norm = np.hypot(dx, dy)
        norm[norm == 0] = 1.0
        qx = _iround(xs + wob * dx / norm)
        qy = _iround(ys + wob * dy / norm)
        np.clip(qx, 0, w - 1, out=qx)
        np.clip(qy, 0, h - 1, out=qy)
        mask[qy, qx] = True


def _draw_handdrawn_square(mask, ann, style, rng) -> None:
    h, w = mask.shape
    x0, y0, x1, y1 = ann.y2, ann.y3, ann.y4, ann.y5
    s = ann.size()
    t = style.stroke_thickness
    if s <= 2:
        _draw_clean_square(mask, ann, t)
        return
    edge = float(s - 1)
    perimeter = 4.0 * edge
    corner_amp = style.jitter_amplitude / 4.0
    wob_amp = style.jitter_amplitude / 4.0
    jitter = rng.uniform(-corner_amp, corner_amp, size=(4, 2))
    n1 = max(1, round(perimeter / style.wobble_wavelength))
    n2 = 2 * n1 + 1
    phi1, phi2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
    corners = np.asarray(
        [[x0, y0], [x1 - 1, y0], [x1 - 1, y1 - 1], [x0, y1 - 1]], np.float64
    )
    corners = corners + jitter
    normals = np.asarray([[0, -1], [1, 0], [0, 1], [-1, 0]], np.float64)
    for e in range(4):
        p0 = corners[e]
        p1 = corners[(e + 1) % 4]
        nrm = normals[e]
        length = float(np.hypot(*(p1 - p0)))
        steps = max(2, int(math.ceil(length / 0.4)) + 1)
        tau = np.linspace(0.0, 1.0, steps)
        u = (e * edge + tau * edge) * (2.0 * math.pi / perimeter)
        wob = _wobble(u, n1, n2, phi1, phi2, wob_amp)
        base = p0[None, :] + tau[:, None] * (p1 - p0)[None, :]
        for k in range(t):
            q = base + (wob[:, None] - k) * nrm[None, :]
            qx = _iround(q[:, 0])
            qy = _iround(q[:, 1])
            np.clip(qx, 0, w - 1, out=qx)
            np.clip(qy, 0, h - 1, out=qy)
            mask[qy, qx] = True


def render(
    ann: Annotation,
    style: RenderStyle,
    seed=0,
    canvas: tuple[int, int] = (128, 128),
) -> GrayImage:
    """Rasterize one annotation.

    Handdrawn rendering consumes its generator in a fixed order (square
    corner jitter, wobble phases, stroke noise), so identical
    (annotation, style, seed) always give identical bytes.
    """
    w, h = int(canvas[0]), int(canvas[1])
    try:
        ann.validate_canvas((w, h))
    except SpecificationError as exc:
        raise RenderDomainError(str(exc)) from None
    mask = np.zeros((h, w), dtype=bool)
    rng = as_generator(seed) if style.kind == "handdrawn" else None
    if style.kind == "clean":
        if ann.y1 == 0:
            _draw_clean_circle(mask, ann, style.stroke_thickness)
        else:
            _draw_clean_square(mask, ann, style.stroke_thickness)
    else:
        if ann.y1 == 0:
            _draw_handdrawn_circle(mask, ann, style, rng)
        else:
            _draw_handdrawn_square(mask, ann, style, rng)
    img = np.zeros((h, w), dtype=np.uint8)
    img[mask] = ann.y6
    if style.kind == "handdrawn" and style.noise_std > 0:
        count = int(mask.sum())
        noise = rng.normal(0.0, style.noise_std, size=count)
        vals = np.clip(_iround(ann.y6 + noise), 1, 255).astype(np.uint8)
        img[mask] = vals
    return GrayImage(img)


def _square_up(lo: int, hi: int, need: int, limit: int) -> tuple[int, int]:
    # widen [lo, hi) by `need`, split evenly, shifted to stay inside [0, limit)
    lo2 = lo - need // 2
    hi2 = hi + (need - need // 2)
    if lo2 < 0:
        hi2 += -lo2
        lo2 = 0
    if hi2 > limit:
        lo2 -= hi2 - limit
        hi2 = limit
    if lo2 < 0:
        raise SpecificationError("bounding box cannot be squared within the canvas")
    return lo2, hi2


def auto_label(img: GrayImage, k: int) -> Annotation:
    """Tight nonzero extent squared up, plus rounded mean stroke brightness."""
    px = img.pixels
    nz = np.argwhere(px > 0)
    if nz.size == 0:
        raise NoForegroundError("cannot label an all-zero image")
    ymin, xmin = nz.min(axis=0)
    ymax, xmax = nz.max(axis=0)
    x0, x1 = int(xmin), int(xmax) + 1
    y0, y1 = int(ymin), int(ymax) + 1
    wd, ht = x1 - x0, y1 - y0
    if wd < ht:
        x0, x1 = _square_up(x0, x1, ht - wd, img.width)
    elif ht < wd:
        y0, y1 = _square_up(y0, y1, wd - ht, img.height)
    mean = float(px[px > 0].mean(dtype=np.float64))
    y6 = int(np.clip(math.floor(mean + 0.5), 1, 255))
    return Annotation(k, x0, y0, x1, y1, y6)


def rasterize_polylines(
    strokes: Sequence[tuple[Sequence[float], Sequence[float]]],
    canvas: tuple[int, int],
    thickness: int = 2,
    value: int = 255,
) -> GrayImage:
    """Stamp polyline strokes (canvas coordinates) onto a fresh image."""
    w, h = canvas
    mask = np.zeros((h, w), dtype=bool)
    offs = [(i, j) for i in range(thickness) for j in range(thickness)]
    for xs, ys in strokes:
        xs = np.asarray(xs, np.float64)
        ys = np.asarray(ys, np.float64)
        if xs.size == 0:
            continue
        if xs.size == 1:
            pts = np.stack([xs, ys], axis=1)
        else:
            segs = []
            for i in range(xs.size - 1):
                length = math.hypot(xs[i + 1] - xs[i], ys[i + 1] - ys[i])
                steps = max(2, int(math.ceil(length / 0.4)) + 1)
                tau = np.linspace(0.0, 1.0, steps)
                segs.append(
                    np.stack(
                        [xs[i] + tau * (xs[i + 1] - xs[i]), ys[i] + tau * (ys[i + 1] - ys[i])],
                        axis=1,
                    )
                )
            pts = np.concatenate(segs, axis=0)
        qx = _iround(pts[:, 0])
        qy = _iround(pts[:, 1])
        for di, dj in offs:
            px = np.clip(qx + di, 0, w - 1)
            py = np.clip(qy + dj, 0, h - 1)
            mask[py, px] = True
    img = np.zeros((h, w), dtype=np.uint8)
    img[mask] = value
    return GrayImage(img)


def write_pgm(img: GrayImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"not a P5 PGM file: {path}")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError as exc:
        raise FormatError(f"bad PGM header in {path}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    return GrayImage.frombytes(w, h, parts[3][: w * h])


def encode_png_gray(arr: np.ndarray) -> bytes:
    """Minimal 8-bit grayscale PNG encoder (filter 0, one IDAT chunk)."""
    arr = np.asarray(arr, np.uint8)
    if arr.ndim != 2:
        raise SpecificationError("PNG encoder expects a 2-d array")
    h, w = arr.shape

    def chunk(tag: bytes, payload: bytes) -> bytes:
        crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
        return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)

    raw = b"".join(b"\x00" + arr[row].tobytes() for row in range(h))
    out = b"\x89PNG\r\n\x1a\n"
    out += chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
    out += chunk(b"IDAT", zlib.compress(raw, 9))
    out += chunk(b"IEND", b"")
    return out


def contact_sheet(
    images: Sequence[GrayImage],
    cols: int = 8,
    cell: int = 96,
    captions: Sequence[str] | None = None,
    title: str | None = None,
) -> str:
    """SVG grid of images (embedded as PNG data URIs)."""
    if not images:
        raise SpecificationError("contact sheet needs at least one image")
    cols = max(1, min(cols, len(images)))
    rows = (len(images) + cols - 1) // cols
    pad = 8
    cap_h = 14 if captions is not None else 0
    top = 28 if title else 8
    width = pad + cols * (cell + pad)
    height = top + rows * (cell + cap_h + pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(
            f'<text x="{pad}" y="18" font-family="sans-serif" font-size="13">{title}</text>'
        )
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        x = pad + c * (cell + pad)
        y = top + r * (cell + cap_h + pad)
        uri = base64.b64encode(encode_png_gray(img.pixels)).decode("ascii")
        parts.append(
            f'<image x="{x}" y="{y}" width="{cell}" height="{cell}" '
            f'style="image-rendering:pixelated" href="data:image/png;base64,{uri}"/>'
        )
        if captions is not None and i < len(captions):
            parts.append(
                f'<text x="{x}" y="{y + cell + 11}" font-family="sans-serif" '
                f'font-size="9" fill="#444444">{captions[i]}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts)
