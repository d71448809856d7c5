"""Uniform-grid scalar fields, level sets, interface extraction and
signed-distance reinitialization.

Conventions
-----------
Fields store node values in arrays of shape ``(ny, nx)`` indexed ``[j, i]``
with ``i`` the x-index and ``j`` the y-index.  The grid is a uniform box with
square cells; ``h`` is the common spacing.  The positive phase is
``{phi > 0}``, the negative phase ``{phi < 0}``; nodes with ``phi == 0`` sit
exactly on the interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInterfaceError,
    FieldError,
    GridError,
    UnderResolvedError,
)

logger = logging.getLogger(__name__)

_SQUARE_CELL_RTOL = 1e-12


@dataclass(frozen=True)
class Grid2:
    """Uniform 2-D node grid on the box [x0, x1] x [y0, y1]."""

    nx: int
    ny: int
    x0: float
    y0: float
    x1: float
    y1: float
    h: float

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys, indexing="xy")

    def node(self, i: int, j: int):
        return (self.x0 + i * self.h, self.y0 + j * self.h)

    def contains(self, x: float, y: float, pad: float = 0.0) -> bool:
        return (
            self.x0 + pad <= x <= self.x1 - pad
            and self.y0 + pad <= y <= self.y1 - pad
        )

    def cell_of(self, x: float, y: float):
        """Cell index (i, j) such that the point lies in cell
        [x_i, x_i+h] x [y_j, y_j+h], clamped to valid cells."""
        i = int(np.clip(np.floor((x - self.x0) / self.h), 0, self.nx - 2))
        j = int(np.clip(np.floor((y - self.y0) / self.h), 0, self.ny - 2))
        return i, j

    def same_layout(self, other: "Grid2") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and np.isclose(self.x0, other.x0, atol=1e-14)
            and np.isclose(self.y0, other.y0, atol=1e-14)
            and np.isclose(self.h, other.h, rtol=1e-14)
        )


def make_grid(nx: int, ny: int, box) -> Grid2:
    """Build a uniform square-cell grid.

    ``box`` is (x0, y0, x1, y1).  Raises GridError for counts < 8, inverted
    boxes, or non-square cells.
    """
    x0, y0, x1, y1 = (float(v) for v in box)
    if nx < 8 or ny < 8:
        raise GridError(f"node counts must be >= 8, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise GridError(f"degenerate box {box}")
    hx = (x1 - x0) / (nx - 1)
    hy = (y1 - y0) / (ny - 1)
    if abs(hx - hy) > _SQUARE_CELL_RTOL * max(abs(hx), abs(hy)):
        raise GridError(
            f"non-square cells: hx={hx!r} != hy={hy!r} for nx={nx}, ny={ny}"
        )
    return Grid2(nx=int(nx), ny=int(ny), x0=x0, y0=y0, x1=x1, y1=y1, h=hx)


def _check_values(grid: Grid2, values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise FieldError(
            f"{what} shape {values.shape} does not match grid {grid.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise FieldError(f"{what} contains non-finite values")
    return values


@dataclass
class ScalarField:
    """Node-indexed real values on a Grid2."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, "field values")

    @classmethod
    def from_function(cls, grid: Grid2, fn) -> "ScalarField":
        xx, yy = grid.meshgrid()
        return cls(grid, np.asarray(fn(xx, yy), dtype=float))

    @classmethod
    def constant(cls, grid: Grid2, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def sample(self, x, y):
        """Bilinear interpolation at point(s) (x, y)."""
        return bilinear_sample(self.grid, self.values, x, y)


@dataclass
class LevelSet:
    """Implicit interface: zero set of ``phi`` splits the box into phases."""

    grid: Grid2
    phi: np.ndarray

    def __post_init__(self):
        self.phi = _check_values(self.grid, self.phi, "phi")

    @classmethod
    def from_function(cls, grid: Grid2, fn) -> "LevelSet":
        xx, yy = grid.meshgrid()
        return cls(grid, np.asarray(fn(xx, yy), dtype=float))

    def has_both_signs(self) -> bool:
        return bool(np.any(self.phi > 0) and np.any(self.phi < 0))

    def copy(self) -> "LevelSet":
        return LevelSet(self.grid, self.phi.copy())

    def sample(self, x, y):
        return bilinear_sample(self.grid, self.phi, x, y)


@dataclass
class Polyline:
    """One connected interface component, ordered vertex list."""

    points: np.ndarray  # (m, 2)
    closed: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    @property
    def length(self) -> float:
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def segments(self) -> np.ndarray:
        """(m-1, 2, 2) array of segment endpoints (m, 2, 2 if closed)."""
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        return np.stack([pts[:-1], pts[1:]], axis=1)


def bilinear_sample(grid: Grid2, values: np.ndarray, x, y):
    """Bilinear interpolation of node values; points clamped to the box."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = np.clip((x - grid.x0) / grid.h, 0.0, grid.nx - 1 - 1e-12)
    fy = np.clip((y - grid.y0) / grid.h, 0.0, grid.ny - 1 - 1e-12)
    i = np.floor(fx).astype(int)
    j = np.floor(fy).astype(int)
    tx = fx - i
    ty = fy - j
    v00 = values[j, i]
    v10 = values[j, i + 1]
    v01 = values[j + 1, i]
    v11 = values[j + 1, i + 1]
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------

CENTERED = "centered"
INTO_POSITIVE = "one_sided_into_positive"
INTO_NEGATIVE = "one_sided_into_negative"


def _axis_derivative(values, j, i, dj, di, h, usable):
    """Derivative along one axis at node (i, j).

    ``usable(jj, ii)`` says whether a node may enter the stencil.  Prefers the
    centered second-order stencil, falls back to the second-order biased
    stencil on whichever side is available.
    """
    ny, nx = values.shape

    def ok(jj, ii):
        return 0 <= jj < ny and 0 <= ii < nx and usable(jj, ii)

    if ok(j - dj, i - di) and ok(j + dj, i + di):
        return (values[j + dj, i + di] - values[j - dj, i - di]) / (2.0 * h)
    if ok(j + dj, i + di) and ok(j + 2 * dj, i + 2 * di):
        return (
            -3.0 * values[j, i]
            + 4.0 * values[j + dj, i + di]
            - values[j + 2 * dj, i + 2 * di]
        ) / (2.0 * h)
    if ok(j - dj, i - di) and ok(j - 2 * dj, i - 2 * di):
        return (
            3.0 * values[j, i]
            - 4.0 * values[j - dj, i - di]
            + values[j - 2 * dj, i - 2 * di]
        ) / (2.0 * h)
    raise UnderResolvedError(
        f"no admissible 3-node stencil at node (i={i}, j={j}); "
        "phase sliver thinner than 3 cells"
    )


def gradient(field: ScalarField, node, side: str = CENTERED,
             phi: LevelSet | None = None) -> np.ndarray:
    """Gradient of ``field`` at a node.

    ``side`` selects the stencil: ``centered`` is the standard second-order
    difference; the one-sided modes restrict the stencil to nodes of the
    requested phase (``phi >= 0`` resp. ``phi <= 0``), using a second-order
    biased stencil when the centered one would cross the zero set.
    """
    i, j = node
    v = field.values
    ny, nx = v.shape
    if not (0 <= i < nx and 0 <= j < ny):
        raise FieldError(f"node {node} outside grid")
    h = field.grid.h

    if side == CENTERED:
        def usable(jj, ii):
            return True
    elif side in (INTO_POSITIVE, INTO_NEGATIVE):
        if phi is None:
            raise FieldError("one-sided gradient modes require phi")
        sgn = 1.0 if side == INTO_POSITIVE else -1.0
        p = phi.phi

        def usable(jj, ii):
            return sgn * p[jj, ii] >= 0.0
        if not usable(j, i):
            raise UnderResolvedError(
                f"node {node} is not on the requested side of the zero set"
            )
    else:
        raise FieldError(f"unknown gradient mode {side!r}")

    gx = _axis_derivative(v, j, i, 0, 1, h, usable)
    gy = _axis_derivative(v, j, i, 1, 0, h, usable)
    return np.array([gx, gy])


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

def _edge_crossing(pa, pb, a, b):
    """Zero of the linear interpolant between endpoint values pa, pb located
    at points a, b."""
    t = pa / (pa - pb)
    return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))


def interface_extract(phi: LevelSet) -> list[Polyline]:
    """Marching-squares zero contour of ``phi`` as ordered polylines.

    Saddle cells are disambiguated by the sign of the cell-center average.
    Returns an empty list (and logs) when phi is single-signed.
    """
    p = phi.phi
    g = phi.grid
    if not phi.has_both_signs():
        logger.warning("interface_extract: single-signed phi, empty interface")
        return []

    h = g.h
    inside = p > 0.0

    # segments[cell] -> list of (edge_key_a, point_a, edge_key_b, point_b)
    # edge keys: ('h', i, j) = horizontal edge from node (i,j) to (i+1,j)
    #            ('v', i, j) = vertical edge from node (i,j) to (i,j+1)
    seg_list = []
    for j in range(g.ny - 1):
        y = g.y0 + j * h
        for i in range(g.nx - 1):
            c = (
                (1 if inside[j, i] else 0)
                | (2 if inside[j, i + 1] else 0)
                | (4 if inside[j + 1, i + 1] else 0)
                | (8 if inside[j + 1, i] else 0)
            )
            if c == 0 or c == 15:
                continue
            x = g.x0 + i * h
            n00 = (x, y)
            n10 = (x + h, y)
            n11 = (x + h, y + h)
            n01 = (x, y + h)
            p00, p10 = p[j, i], p[j, i + 1]
            p11, p01 = p[j + 1, i + 1], p[j + 1, i]

            edge_key = {
                "b": ("h", i, j),
                "t": ("h", i, j + 1),
                "l": ("v", i, j),
                "r": ("v", i + 1, j),
            }
            edge_point = {
                "b": lambda: _edge_crossing(p00, p10, n00, n10),
                "t": lambda: _edge_crossing(p01, p11, n01, n11),
                "l": lambda: _edge_crossing(p00, p01, n00, n01),
                "r": lambda: _edge_crossing(p10, p11, n10, n11),
            }

            pairs = _MS_TABLE.get(c)
            if pairs is None:
                # saddle: 5 = corners 00 and 11 inside, 10 = corners 10 and 01
                center = 0.25 * (p00 + p10 + p11 + p01)
                if c == 5:
                    pairs = [("l", "b"), ("t", "r")] if center <= 0 else \
                        [("l", "t"), ("b", "r")]
                else:  # c == 10
                    pairs = [("b", "r"), ("l", "t")] if center <= 0 else \
                        [("l", "b"), ("t", "r")]
            for ea, ebb in pairs:
                seg_list.append((edge_key[ea], edge_point[ea](),
                                 edge_key[ebb], edge_point[ebb]()))

    return _stitch_segments(seg_list)


# Case table keyed by the inside-corner bitmask (1=00, 2=10, 4=11, 8=01);
# each entry lists crossed-edge pairs by short name.  Saddles (5, 10) are
# resolved at runtime.
_MS_TABLE = {
    1: [("l", "b")],
    2: [("b", "r")],
    3: [("l", "r")],
    4: [("r", "t")],
    6: [("b", "t")],
    7: [("l", "t")],
    8: [("t", "l")],
    9: [("t", "b")],
    11: [("t", "r")],
    12: [("r", "l")],
    13: [("r", "b")],
    14: [("b", "l")],
}


def _stitch_segments(seg_list) -> list[Polyline]:
    """Chain per-cell segments into ordered polylines by shared edge keys."""
    # adjacency: edge key -> list of (segment index, end 0/1)
    adj: dict = {}
    for k, (ea, _, eb, _) in enumerate(seg_list):
        adj.setdefault(ea, []).append((k, 0))
        adj.setdefault(eb, []).append((k, 1))

    used = [False] * len(seg_list)
    polylines = []

    def walk(start_seg, start_end):
        """Follow the chain starting by exiting segment start_seg through the
        end opposite to start_end.  Returns list of (edge_key, point)."""
        chain = []
        seg, entry = start_seg, start_end
        while True:
            used[seg] = True
            ea, pa, eb, pb = seg_list[seg]
            if entry == 0:
                chain.append((ea, pa))
                exit_key, exit_pt = eb, pb
            else:
                chain.append((eb, pb))
                exit_key, exit_pt = ea, pa
            nxt = [(k, e) for (k, e) in adj.get(exit_key, [])
                   if k != seg and not used[k]]
            if not nxt:
                chain.append((exit_key, exit_pt))
                return chain, exit_key
            seg, entry = nxt[0]

    # open curves first: start from edges of degree 1
    degree_one = [items[0] for key, items in adj.items() if len(items) == 1]
    for seg, end in degree_one:
        if used[seg]:
            continue
        chain, _ = walk(seg, end)
        polylines.append(Polyline(np.array([pt for _, pt in chain]),
                                  closed=False))
    # remaining are loops
    for k in range(len(seg_list)):
        if used[k]:
            continue
        chain, last_key = walk(k, 0)
        pts = [pt for _, pt in chain]
        closed = last_key == chain[0][0]
        if closed:
            pts = pts[:-1]
        polylines.append(Polyline(np.array(pts), closed=closed))
    return polylines


def all_interface_points(polylines) -> np.ndarray:
    """Concatenate polyline vertices into one (m, 2) array."""
    if not polylines:
        return np.zeros((0, 2))
    return np.vstack([pl.points for pl in polylines])


# ---------------------------------------------------------------------------
# reinitialization
# ---------------------------------------------------------------------------

def _centered_gradient_norm(grid: Grid2, values: np.ndarray) -> np.ndarray:
    gy, gx = np.gradient(values, grid.h)
    return np.hypot(gx, gy)


def reinitialize(phi: LevelSet, band_tol: float = 0.35) -> LevelSet:
    """Rebuild ``phi`` as an (approximate) signed distance to its zero set.

    Nodes incident to a sign-change edge are anchored with a first-order
    distance estimate ``|phi| / |grad phi|`` (kept as-is when the input is
    already unit-gradient, which makes the operation idempotent); all other
    nodes take the lower envelope ``min_a (d_a + |x - x_a|)`` over anchors.
    The zero set is preserved to within the anchor estimate, i.e. under h/2.
    """
    if not phi.has_both_signs():
        raise DegenerateInterfaceError("reinitialize requires a two-signed phi")
    g = phi.grid
    p = phi.phi
    h = g.h

    sign = np.sign(p)

    # anchor set: zero nodes plus endpoints of strict sign-change edges
    anchor = p == 0.0
    cross_x = p[:, :-1] * p[:, 1:] < 0.0
    anchor[:, :-1] |= cross_x
    anchor[:, 1:] |= cross_x
    cross_y = p[:-1, :] * p[1:, :] < 0.0
    anchor[:-1, :] |= cross_y
    anchor[1:, :] |= cross_y

    gn = _centered_gradient_norm(g, p)
    # treat near-unit gradients as exact distance so that reapplication is a
    # fixed point; otherwise rescale locally
    scale = np.where(np.abs(gn - 1.0) <= band_tol, 1.0, np.maximum(gn, 1e-12))
    d_anchor = np.abs(p) / scale

    jj, ii = np.nonzero(anchor)
    ax = g.x0 + ii * h
    ay = g.y0 + jj * h
    ad = d_anchor[jj, ii]

    xx, yy = g.meshgrid()
    d = np.empty(g.shape)
    d[anchor] = d_anchor[anchor]

    far_mask = ~anchor
    fx = xx[far_mask]
    fy = yy[far_mask]
    out = np.empty(fx.shape)
    chunk = max(1, int(4_000_000 // max(len(ax), 1)))
    for s in range(0, len(fx), chunk):
        e = min(s + chunk, len(fx))
        dist = np.hypot(fx[s:e, None] - ax[None, :],
                        fy[s:e, None] - ay[None, :])
        out[s:e] = np.min(dist + ad[None, :], axis=1)
    d[far_mask] = out

    return LevelSet(g, d * sign)


# ---------------------------------------------------------------------------
# point-to-polyline distance
# ---------------------------------------------------------------------------

def polyline_distance(points: np.ndarray, polylines) -> np.ndarray:
    """Distance from each query point to the nearest polyline segment."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not polylines:
        raise DegenerateInterfaceError("no polylines to measure against")
    segs = np.vstack([pl.segments() for pl in polylines])  # (S, 2, 2)
    a = segs[:, 0, :]
    b = segs[:, 1, :]
    ab = b - a
    denom = np.maximum(np.einsum("sk,sk->s", ab, ab), 1e-300)

    best = np.full(len(points), np.inf)
    chunk = max(1, int(2_000_000 // max(len(segs), 1)))
    for s in range(0, len(points), chunk):
        e = min(s + chunk, len(points))
        ap = points[s:e, None, :] - a[None, :, :]        # (c, S, 2)
        t = np.clip(np.einsum("csk,sk->cs", ap, ab) / denom, 0.0, 1.0)
        proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        dist = np.linalg.norm(points[s:e, None, :] - proj, axis=2)
        best[s:e] = dist.min(axis=1)
    return best


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def write_field(f: ScalarField | LevelSet, path) -> None:
    """Write a full-grid field as CSV ``x,y,value``, row-major by y then x."""
    values = f.values if isinstance(f, ScalarField) else f.phi
    g = f.grid
    xx, yy = g.meshgrid()
    data = np.column_stack([xx.ravel(), yy.ravel(), values.ravel()])
    np.savetxt(path, data, delimiter=",", header="x,y,value", comments="",
               fmt=_FMT)


def read_field(path) -> ScalarField:
    """Read a field written by :func:`write_field`, rebuilding its grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 3:
        raise FieldError(f"malformed field file {path}")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(data):
        raise FieldError(f"field file {path} is not a full grid")
    grid = make_grid(nx, ny, (xs[0], ys[0], xs[-1], ys[-1]))
    values = data[:, 2].reshape(ny, nx)
    return ScalarField(grid, values)


def read_levelset(path) -> LevelSet:
    f = read_field(path)
    return LevelSet(f.grid, f.values)


def write_polylines(polylines, path) -> None:
    """CSV ``component_id,vertex_id,x,y``."""
    rows = []
    for cid, pl in enumerate(polylines):
        for vid, (x, y) in enumerate(pl.points):
            rows.append((cid, vid, x, y))
    with open(path, "w") as fh:
        fh.write("component_id,vertex_id,x,y\n")
        for cid, vid, x, y in rows:
            fh.write(f"{cid},{vid},{x:.17g},{y:.17g}\n")
