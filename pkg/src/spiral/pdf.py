"""Minimal PDF page reader and rasterizer.

Parses classic (non-object-stream) PDFs well enough to recover the page
tree, per-page geometry, and flat rectangle fills from content streams, then
renders each page to a PIL image at a requested DPI. That covers the PDFs
this service produces and consumes internally (synthetic corpora, converter
output); scanned or heavily compressed documents should be rasterized by a
full renderer plugged in behind ``render_pages``.

Coordinates follow PDF user space (points, origin bottom-left); rendering
flips to image space (pixels, origin top-left).
"""

from __future__ import annotations

import base64
import re
import zlib
from dataclasses import dataclass, field

from PIL import Image, ImageDraw

from .errors import RasterizationFailed

_OBJ = re.compile(rb"(\d+)\s+\d+\s+obj\b(.*?)endobj", re.S)
_MEDIABOX = re.compile(
    rb"/MediaBox\s*\[\s*([\d.+-]+)\s+([\d.+-]+)\s+([\d.+-]+)\s+([\d.+-]+)\s*\]"
)
_PAGES_REF = re.compile(rb"/Pages\s+(\d+)\s+\d+\s+R")
_PARENT_REF = re.compile(rb"/Parent\s+(\d+)\s+\d+\s+R")
_KIDS = re.compile(rb"/Kids\s*\[(.*?)\]", re.S)
_REF = re.compile(rb"(\d+)\s+\d+\s+R")
_CONTENTS = re.compile(rb"/Contents\s*(?:(\d+)\s+\d+\s+R|\[(.*?)\])", re.S)
_STREAM = re.compile(rb"stream\r?\n(.*?)endstream", re.S)
_NUMBER = re.compile(rb"^[+-]?(\d+\.?\d*|\.\d+)$")

LETTER_PT = (612.0, 792.0)


@dataclass(frozen=True)
class FilledRect:
    """Rectangle fill in PDF user space with a grayscale fill level."""

    x: float
    y: float
    width: float
    height: float
    gray: float


@dataclass(frozen=True)
class PdfPage:
    width_pt: float
    height_pt: float
    rects: tuple[FilledRect, ...] = field(default_factory=tuple)


def _object_map(data: bytes) -> dict[int, bytes]:
    return {int(num): body for num, body in _OBJ.findall(data)}


def _page_order(objects: dict[int, bytes]) -> list[int]:
    """Page object numbers in document order via the /Kids tree."""
    roots = [
        num
        for num, body in objects.items()
        if re.search(rb"/Type\s*/Catalog\b", body)
    ]
    order: list[int] = []

    def walk(num: int, depth: int = 0):
        if depth > 64:  # cyclic or absurd page trees
            return
        body = objects.get(num)
        if body is None:
            return
        if re.search(rb"/Type\s*/Page(?![a-zA-Z])", body):
            order.append(num)
            return
        kids = _KIDS.search(body)
        if kids:
            for ref in _REF.findall(kids.group(1)):
                walk(int(ref), depth + 1)

    for root in roots:
        pages_ref = _PAGES_REF.search(objects[root])
        if pages_ref:
            walk(int(pages_ref.group(1)))
    if order:
        return order
    # No catalog found; fall back to object-number order of /Type /Page objects.
    return sorted(
        num
        for num, body in objects.items()
        if re.search(rb"/Type\s*/Page(?![a-zA-Z])", body)
    )


def _media_box(objects: dict[int, bytes], num: int) -> tuple[float, float]:
    seen = set()
    cur = num
    while cur is not None and cur not in seen:
        seen.add(cur)
        body = objects.get(cur)
        if body is None:
            break
        box = _MEDIABOX.search(body)
        if box:
            x0, y0, x1, y1 = (float(v) for v in box.groups())
            return abs(x1 - x0), abs(y1 - y0)
        parent = _PARENT_REF.search(body)
        cur = int(parent.group(1)) if parent else None
    return LETTER_PT


_FILTER = re.compile(rb"/Filter\s*(?:\[([^\]]*)\]|/(\w+))")
_FILTER_NAME = re.compile(rb"/(\w+)")


def _stream_bytes(objects: dict[int, bytes], num: int) -> bytes:
    body = objects.get(num, b"")
    match = _STREAM.search(body)
    if not match:
        return b""
    raw = match.group(1)
    filt = _FILTER.search(body)
    names: list[bytes] = []
    if filt:
        names = _FILTER_NAME.findall(filt.group(1) or filt.group(2))
    for name in names:
        try:
            if name == b"ASCII85Decode":
                text = raw.strip()
                if text.startswith(b"<~"):
                    text = text[2:]
                if text.endswith(b"~>"):
                    text = text[:-2]
                raw = base64.a85decode(text)
            elif name == b"FlateDecode":
                raw = zlib.decompress(raw)
            else:
                return b""  # unsupported filter; skip drawing for this stream
        except (ValueError, zlib.error) as exc:
            raise RasterizationFailed(f"bad content stream in object {num}: {exc}")
    return raw


def _parse_rects(content: bytes) -> tuple[FilledRect, ...]:
    """Rect fills from a content stream, tracking gray/rgb fill color."""
    gray = 0.0
    pending: list[tuple[float, float, float, float]] = []
    rects: list[FilledRect] = []
    stack: list[float] = []
    for token in content.split():
        if _NUMBER.match(token):
            stack.append(float(token))
            continue
        op = token
        if op == b"g" and stack:
            gray = stack[-1]
        elif op == b"rg" and len(stack) >= 3:
            r, gch, b = stack[-3:]
            gray = 0.299 * r + 0.587 * gch + 0.114 * b
        elif op == b"re" and len(stack) >= 4:
            x, y, w, h = stack[-4:]
            pending.append((x, y, w, h))
        elif op in (b"f", b"F", b"f*", b"b", b"B", b"b*", b"B*"):
            for x, y, w, h in pending:
                rects.append(FilledRect(x, y, w, h, gray))
            pending = []
        elif op in (b"n", b"S", b"s", b"W", b"W*"):
            pending = []
        stack = []
    return tuple(rects)


def parse_pdf(data: bytes) -> list[PdfPage]:
    """Geometry and rect fills for every page, in document order."""
    if not data.startswith(b"%PDF-"):
        raise RasterizationFailed("not a PDF: missing %PDF header")
    objects = _object_map(data)
    page_nums = _page_order(objects)
    if not page_nums:
        raise RasterizationFailed("no pages found")
    pages = []
    for num in page_nums:
        width_pt, height_pt = _media_box(objects, num)
        if width_pt <= 0 or height_pt <= 0:
            raise RasterizationFailed(f"degenerate media box on page object {num}")
        body = objects[num]
        rects: list[FilledRect] = []
        contents = _CONTENTS.search(body)
        if contents:
            if contents.group(1):
                refs = [int(contents.group(1))]
            else:
                refs = [int(r) for r in _REF.findall(contents.group(2))]
            for ref in refs:
                rects.extend(_parse_rects(_stream_bytes(objects, ref)))
        pages.append(PdfPage(width_pt, height_pt, tuple(rects)))
    return pages


def render_page(page: PdfPage, dpi: int) -> Image.Image:
    scale = dpi / 72.0
    width_px = max(1, round(page.width_pt * scale))
    height_px = max(1, round(page.height_pt * scale))
    img = Image.new("L", (width_px, height_px), color=255)
    draw = ImageDraw.Draw(img)
    for rect in page.rects:
        left = rect.x * scale
        top = (page.height_pt - rect.y - rect.height) * scale
        right = (rect.x + rect.width) * scale
        bottom = (page.height_pt - rect.y) * scale
        level = int(round(max(0.0, min(1.0, rect.gray)) * 255))
        draw.rectangle([left, top, right, bottom], fill=level)
    return img


def render_pages(data: bytes, dpi: int) -> list[Image.Image]:
    """Rasterize every page of the PDF at the DPI."""
    return [render_page(p, dpi) for p in parse_pdf(data)]
