"""
Renderer Module

This module draws instances and candidate route sets as PNG rasters for the
vision agents. Output bytes are a pure function of (instance, route set, style):
figures are built with the object API on an Agg canvas, labels use the DejaVu
font bundled with matplotlib, and PNG metadata is stripped.
"""

import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.font_manager import FontProperties

from .errors import ConfigurationError
from .instance_model import Instance
from .solution_model import RouteSet

# A power of two keeps width / DPI exact, so the canvas is exactly width x height pixels.
DPI = 64
FONT_PATH = os.path.join(matplotlib.get_data_path(), "fonts", "ttf", "DejaVuSans.ttf")

DEFAULT_PALETTE = (
    "#1f77b4",  # blue
    "#d62728",  # red
    "#2ca02c",  # green
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)


@dataclass(frozen=True)
class RenderStyle:
    """
    Visual conventions of the rendered images.

    Attributes:
        width, height: Canvas size in pixels
        margin: Blank border in pixels on every side
        depot_size: Side of the black depot square in pixels
        node_size: Diameter of node circles in pixels
        node_color: Fill colour of node circles
        label_size: Font size of node labels in pixels
        palette: Route colours, one per salesman
        line_width: Route line width in pixels
        extent: World side length mapped onto the viewport
    """

    width: int = 1024
    height: int = 1024
    margin: int = 51
    depot_size: int = 18
    node_size: int = 14
    node_color: str = "#404040"
    label_size: int = 14
    palette: Tuple[str, ...] = DEFAULT_PALETTE
    line_width: float = 2.5
    extent: float = 5.0

    def fingerprint(self) -> str:
        """Stable digest of the style, recorded in manifests."""
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class RenderedImage:
    """An encoded raster plus its content digest."""

    data: bytes = field(repr=False)
    format: str = "png"
    content_hash: str = ""

    @classmethod
    def from_bytes(cls, data: bytes, fmt: str = "png") -> "RenderedImage":
        return cls(data=data, format=fmt, content_hash=hashlib.sha256(data).hexdigest())


class ViewportMap:
    """Affine map from world coordinates to pixel coordinates (origin top-left, y down)."""

    def __init__(self, style: RenderStyle):
        self.style = style
        self.scale_x = (style.width - 2 * style.margin) / style.extent
        self.scale_y = (style.height - 2 * style.margin) / style.extent

    def to_pixel(self, x: float, y: float) -> Tuple[float, float]:
        col = self.style.margin + x * self.scale_x
        row = self.style.height - (self.style.margin + y * self.scale_y)
        return col, row

    def to_world(self, col: float, row: float) -> Tuple[float, float]:
        x = (col - self.style.margin) / self.scale_x
        y = (self.style.height - row - self.style.margin) / self.scale_y
        return x, y

    def world_limits(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """Axis limits that realise this map on a full-canvas axes."""
        mx = self.style.margin / self.scale_x
        my = self.style.margin / self.scale_y
        return (-mx, self.style.extent + mx), (-my, self.style.extent + my)


def _pt(pixels: float) -> float:
    """Convert pixels to points at the canvas DPI."""
    return pixels * 72.0 / DPI


def _check_style(style: RenderStyle, m: int = 0):
    marker = max(style.depot_size, style.node_size)
    if style.width - 2 * style.margin < 2 * marker or style.height - 2 * style.margin < 2 * marker:
        raise ConfigurationError(
            f"Viewport {style.width}x{style.height} with margin {style.margin} is too small for {marker}px markers"
        )
    if style.extent <= 0:
        raise ConfigurationError(f"Render extent must be positive, got {style.extent}")
    if m > len(style.palette):
        raise ConfigurationError(f"Palette has {len(style.palette)} colours but {m} routes must be drawn")


def _new_axes(style: RenderStyle):
    figure = Figure(figsize=(style.width / DPI, style.height / DPI), dpi=DPI, facecolor="white")
    FigureCanvasAgg(figure)
    axes = figure.add_axes((0.0, 0.0, 1.0, 1.0))
    xlim, ylim = ViewportMap(style).world_limits()
    axes.set_xlim(*xlim)
    axes.set_ylim(*ylim)
    axes.set_axis_off()
    axes.set_facecolor("white")
    return figure, axes


def _draw_nodes(axes, inst: Instance, style: RenderStyle):
    font = FontProperties(fname=FONT_PATH, size=_pt(style.label_size))
    coords = inst.coordinates()
    axes.plot(
        coords[1:, 0], coords[1:, 1], linestyle="none", marker="o",
        markersize=_pt(style.node_size), markeredgewidth=0,
        markerfacecolor=style.node_color, zorder=3,
    )
    axes.plot(
        [coords[0, 0]], [coords[0, 1]], linestyle="none", marker="s",
        markersize=_pt(style.depot_size), markeredgewidth=0,
        markerfacecolor="black", zorder=4,
    )
    offset = _pt(max(style.depot_size, style.node_size) / 2 + 2)
    for index, (x, y) in enumerate(coords):
        axes.annotate(
            str(index), (x, y), xytext=(offset, offset), textcoords="offset points",
            fontproperties=font, color="black", zorder=5,
        )


def _encode(figure) -> RenderedImage:
    buffer = io.BytesIO()
    figure.savefig(buffer, format="png", dpi=DPI, facecolor="white", metadata={"Software": None})
    return RenderedImage.from_bytes(buffer.getvalue(), "png")


def render_instance(inst: Instance, style: Optional[RenderStyle] = None) -> RenderedImage:
    """
    Render the bare instance: every node labelled with its index, the depot as a black square.

    Args:
        inst: Instance to draw
        style: Render style (defaults to RenderStyle())

    Returns:
        PNG-encoded RenderedImage
    """
    style = style or RenderStyle()
    _check_style(style)
    figure, axes = _new_axes(style)
    _draw_nodes(axes, inst, style)
    return _encode(figure)


def render_solution(inst: Instance, rs: RouteSet, style: Optional[RenderStyle] = None) -> RenderedImage:
    """
    Render an instance with one polyline per route in palette order.

    Invalid route sets are drawn as far as their indices allow: out-of-range
    indices are skipped and unvisited nodes simply have no incident edge.
    """
    style = style or RenderStyle()
    _check_style(style, rs.m)
    figure, axes = _new_axes(style)
    coords = inst.coordinates()
    for index, route in enumerate(rs.routes):
        points = [v for v in route if 0 <= v < inst.n]
        if len(points) < 2:
            continue
        axes.plot(
            coords[points, 0], coords[points, 1], color=style.palette[index],
            linewidth=_pt(style.line_width), solid_capstyle="round", zorder=2,
        )
    _draw_nodes(axes, inst, style)
    return _encode(figure)
