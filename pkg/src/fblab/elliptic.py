"""Variable-coefficient divergence-form Dirichlet solver on one phase of a
level-set-partitioned box, plus one-sided interface gradient extraction.

Discretization: node-centered finite-volume fluxes with arithmetic face
averaging of the coefficient matrix.  Interface Dirichlet data is imposed by
ghost-value elimination at the linear-interpolation crossing of each cut edge
(locally first order, globally second order for Dirichlet data).  The cross
term ``a12`` uses a 9-point treatment and is dropped on rows whose stencil
crosses the interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FieldError, SolverError, UnderResolvedError
from .fields import (
    INTO_NEGATIVE,
    INTO_POSITIVE,
    Grid2,
    LevelSet,
    ScalarField,
    bilinear_sample,
    gradient,
)

# an interface crossing closer than this fraction of h to a node pins the
# node to the interface value instead of producing a huge ghost coefficient
_THETA_MIN = 1e-3


@dataclass
class CoefficientField:
    """Symmetric 2x2 coefficient matrix per node with ellipticity bounds."""

    grid: Grid2
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    lambda_min: float = 0.0
    lambda_max: float = 0.0

    def __post_init__(self):
        for name in ("a11", "a12", "a22"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise FieldError(f"{name} shape mismatch")
            if not np.all(np.isfinite(arr)):
                raise FieldError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        tr = self.a11 + self.a22
        disc = np.sqrt((self.a11 - self.a22) ** 2 + 4 * self.a12**2)
        lo = 0.5 * (tr - disc)
        hi = 0.5 * (tr + disc)
        self.lambda_min = float(lo.min())
        self.lambda_max = float(hi.max())
        if self.lambda_min <= 0:
            raise FieldError(
                f"coefficient matrix not uniformly elliptic "
                f"(lambda_min={self.lambda_min})"
            )

    @classmethod
    def identity(cls, grid: Grid2) -> "CoefficientField":
        one = np.ones(grid.shape)
        return cls(grid, one, np.zeros(grid.shape), one.copy())

    @classmethod
    def constant(cls, grid: Grid2, a11: float, a12: float,
                 a22: float) -> "CoefficientField":
        full = np.full
        return cls(grid, full(grid.shape, float(a11)),
                   full(grid.shape, float(a12)), full(grid.shape, float(a22)))

    @classmethod
    def from_functions(cls, grid: Grid2, f11, f12, f22) -> "CoefficientField":
        xx, yy = grid.meshgrid()
        return cls(grid, np.asarray(f11(xx, yy), dtype=float) + 0 * xx,
                   np.asarray(f12(xx, yy), dtype=float) + 0 * xx,
                   np.asarray(f22(xx, yy), dtype=float) + 0 * xx)

    def matrix_at(self, x: float, y: float) -> np.ndarray:
        g = self.grid
        m11 = bilinear_sample(g, self.a11, x, y)
        m12 = bilinear_sample(g, self.a12, x, y)
        m22 = bilinear_sample(g, self.a22, x, y)
        return np.array([[m11, m12], [m12, m22]])


def holder_seminorm_estimate(A: CoefficientField, gamma: float) -> float:
    """Discrete C^{0,gamma} seminorm estimate over axis-aligned node pairs at
    dyadic lags.  Reported, never enforced: grid sampling cannot certify
    Hoelder continuity of the underlying coefficients."""
    g = A.grid
    best = 0.0
    lag = 1
    while lag < max(g.nx, g.ny):
        dist = lag * g.h
        for arr in (A.a11, A.a12, A.a22):
            if lag < g.nx:
                best = max(best, np.max(np.abs(arr[:, lag:] - arr[:, :-lag]))
                           / dist**gamma)
            if lag < g.ny:
                best = max(best, np.max(np.abs(arr[lag:, :] - arr[:-lag, :]))
                           / dist**gamma)
        lag *= 2
    return float(best)


@dataclass
class PhaseRegion:
    """One phase of a level-set partition, with its Dirichlet data.

    ``sign`` is +1 for {phi > 0}, -1 for {phi < 0}.  ``pinned`` optionally
    marks nodes held at the outer data regardless of position (used for ball
    masks inside the box).
    """

    phi: LevelSet
    sign: int
    outer_data: ScalarField
    interface_value: float = 0.0
    pinned: np.ndarray | None = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise FieldError("region sign must be +1 or -1")
        if not self.phi.grid.same_layout(self.outer_data.grid):
            raise FieldError("phi and outer data live on different grids")
        if self.pinned is not None:
            self.pinned = np.asarray(self.pinned, dtype=bool)
            if self.pinned.shape != self.phi.grid.shape:
                raise FieldError("pinned mask shape mismatch")

    def interior_mask(self) -> np.ndarray:
        """Solvable nodes: strictly this phase, strictly inside the box, not
        pinned."""
        g = self.phi.grid
        m = self.sign * self.phi.phi > 0
        m[0, :] = m[-1, :] = False
        m[:, 0] = m[:, -1] = False
        if self.pinned is not None:
            m &= ~self.pinned
        return m

    def node_count(self) -> int:
        return int(np.count_nonzero(self.interior_mask()))


_UNKNOWN, _KNOWN, _OUTSIDE = 1, 2, 0


def _classify(region: PhaseRegion):
    """Node status arrays and the known-value field."""
    g = region.phi.grid
    phase = region.sign * region.phi.phi
    status = np.full(g.shape, _OUTSIDE, dtype=np.int8)
    known = np.zeros(g.shape)

    in_phase = phase > 0
    status[in_phase] = _UNKNOWN
    # box boundary and pinned nodes of this phase are Dirichlet
    boundary = np.zeros(g.shape, dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    if region.pinned is not None:
        boundary |= region.pinned
    dir_mask = in_phase & boundary
    status[dir_mask] = _KNOWN
    known[dir_mask] = region.outer_data.values[dir_mask]
    # nodes exactly on the zero set carry the interface value
    on_iface = region.phi.phi == 0.0
    status[on_iface] = _KNOWN
    known[on_iface] = region.interface_value
    return status, known


def solve_phase(A: CoefficientField, f: ScalarField, region: PhaseRegion,
                tol: float = 1e-8) -> ScalarField:
    """Solve div(A grad u) = f on one phase with interface value imposed at
    linear-interpolation crossings and outer data on the box boundary.

    Returns u on the region's nodes (Dirichlet trace included), zero
    elsewhere.  Raises SolverError when the discrete residual exceeds
    ``tol``, UnderResolvedError for an empty region.
    """
    if tol <= 0:
        raise FieldError("tol must be positive")
    g = region.phi.grid
    if not (g.same_layout(A.grid) and g.same_layout(f.grid)):
        raise FieldError("grid mismatch between A, f and region")
    h = g.h
    h2 = h * h
    phi = region.phi.phi
    sphase = region.sign * phi

    status, known = _classify(region)

    # pre-pass: pin nodes whose nearest crossing is too close
    unk = status == _UNKNOWN
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb_phase = np.roll(sphase, (-dj, -di), axis=(0, 1))
        nb_out = np.roll(status, (-dj, -di), axis=(0, 1)) == _OUTSIDE
        _kill_wrap(nb_out, dj, di)
        cut = unk & nb_out & (nb_phase < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(cut, sphase / (sphase - nb_phase), 1.0)
        tiny = cut & (theta < _THETA_MIN)
        status[tiny] = _KNOWN
        known[tiny] = region.interface_value
        unk = status == _UNKNOWN

    n_unknown = int(np.count_nonzero(unk))
    if n_unknown == 0:
        raise UnderResolvedError("region has no interior nodes")

    idx = -np.ones(g.shape, dtype=np.int64)
    idx[unk] = np.arange(n_unknown)

    rows, cols, vals = [], [], []
    diag = np.zeros(n_unknown)
    rhs = -f.values[unk].astype(float)

    row_of = idx[unk]

    def face_coeff(arr, dj, di):
        nb = np.roll(arr, (-dj, -di), axis=(0, 1))
        return 0.5 * (arr + nb)

    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        coeff_arr = A.a11 if dj == 0 else A.a22
        aF_full = face_coeff(coeff_arr, dj, di)
        aF = aF_full[unk]
        nb_status = np.roll(status, (-dj, -di), axis=(0, 1)).copy()
        edge = np.zeros(g.shape, dtype=bool)
        _mark_edge(edge, dj, di)
        nb_status[edge] = _KNOWN  # off-grid never happens: border is KNOWN
        nb_status_u = nb_status[unk]
        nb_idx = np.roll(idx, (-dj, -di), axis=(0, 1))[unk]
        nb_known = np.roll(known, (-dj, -di), axis=(0, 1))[unk]
        nb_phase = np.roll(sphase, (-dj, -di), axis=(0, 1))[unk]

        m_u = nb_status_u == _UNKNOWN
        diag[m_u] += aF[m_u] / h2
        rows.append(row_of[m_u])
        cols.append(nb_idx[m_u])
        vals.append(-aF[m_u] / h2)

        m_k = nb_status_u == _KNOWN
        diag[m_k] += aF[m_k] / h2
        rhs[m_k] += aF[m_k] * nb_known[m_k] / h2

        m_o = nb_status_u == _OUTSIDE
        if np.any(m_o):
            sp_u = sphase[unk][m_o]
            theta = np.clip(sp_u / (sp_u - nb_phase[m_o]), _THETA_MIN, 1.0)
            diag[m_o] += aF[m_o] / (theta * h2)
            rhs[m_o] += aF[m_o] * region.interface_value / (theta * h2)

    if np.any(A.a12 != 0.0):
        _assemble_cross_term(A, g, status, idx, known, unk, row_of,
                             rows, cols, vals, diag, rhs)

    rows.append(row_of)
    cols.append(row_of)
    vals.append(diag)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    )
    try:
        sol = spla.spsolve(M, rhs)
    except Exception as exc:  # pragma: no cover - singular systems
        raise SolverError(f"sparse solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("sparse solve produced non-finite values")

    resid = np.max(np.abs(M @ sol - rhs))
    scale = max(1.0, np.max(np.abs(rhs)) if rhs.size else 1.0)
    if resid > tol * scale:
        raise SolverError(
            f"residual {resid:.3e} exceeds tol {tol:.3e} (scale {scale:.3e})"
        )

    out = np.zeros(g.shape)
    out[unk] = sol
    keep = status == _KNOWN
    out[keep] = known[keep]
    return ScalarField(g, out)


def _kill_wrap(mask, dj, di):
    """Zero out entries whose np.roll neighbor wrapped around the grid."""
    if di == 1:
        mask[:, -1] = False
    elif di == -1:
        mask[:, 0] = False
    if dj == 1:
        mask[-1, :] = False
    elif dj == -1:
        mask[0, :] = False


def _mark_edge(mask, dj, di):
    if di == 1:
        mask[:, -1] = True
    elif di == -1:
        mask[:, 0] = True
    if dj == 1:
        mask[-1, :] = True
    elif dj == -1:
        mask[0, :] = True


def _assemble_cross_term(A, g, status, idx, known, unk, row_of,
                         rows, cols, vals, diag, rhs):
    """9-point discretization of d/dx(a12 du/dy) + d/dy(a12 du/dx).

    Applied only on rows whose full 3x3 neighborhood stays inside the phase
    (no interface crossing); near the interface the cross flux is dropped,
    which is locally first order.
    """
    h2 = g.h * g.h
    # eligible rows: all 8 neighbors not OUTSIDE and not on the grid border
    elig = unk.copy()
    elig[0, :] = elig[-1, :] = False
    elig[:, 0] = elig[:, -1] = False
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            nb = np.roll(status, (-dj, -di), axis=(0, 1))
            elig &= nb != _OUTSIDE
    if not np.any(elig):
        return

    b = A.a12
    bE = 0.5 * (b + np.roll(b, -1, axis=1))
    bW = 0.5 * (b + np.roll(b, 1, axis=1))
    bN = 0.5 * (b + np.roll(b, -1, axis=0))
    bS = 0.5 * (b + np.roll(b, 1, axis=0))

    # each entry: (di, dj, weight array); the assembled operator is -div, so
    # cross-flux contributions enter with a minus sign
    entries: dict[tuple[int, int], np.ndarray] = {}

    def add(di, dj, w):
        key = (di, dj)
        entries[key] = entries.get(key, 0.0) + w

    q = 1.0 / (4.0 * h2)
    # d/dx (a12 du/dy): east face minus west face
    for sgn, bf, di0 in ((+1.0, bE, 0), (-1.0, bW, -1)):
        # du/dy at the face averages the centered dy-differences of the two
        # face nodes (i+di0 and i+di0+1)
        for ii in (di0, di0 + 1):
            add(ii, 1, -sgn * bf * q)
            add(ii, -1, +sgn * bf * q)
    # d/dy (a12 du/dx): north face minus south face
    for sgn, bf, dj0 in ((+1.0, bN, 0), (-1.0, bS, -1)):
        for jj in (dj0, dj0 + 1):
            add(1, jj, -sgn * bf * q)
            add(-1, jj, +sgn * bf * q)

    row_elig = idx[elig]
    for (di, dj), w in entries.items():
        wv = (w if isinstance(w, np.ndarray) else np.full(g.shape, w))[elig]
        nb_status = np.roll(status, (-dj, -di), axis=(0, 1))[elig]
        nb_idx = np.roll(idx, (-dj, -di), axis=(0, 1))[elig]
        nb_known = np.roll(known, (-dj, -di), axis=(0, 1))[elig]
        m_u = nb_status == _UNKNOWN
        rows.append(row_elig[m_u])
        cols.append(nb_idx[m_u])
        vals.append(wv[m_u])
        m_k = nb_status == _KNOWN
        np.add.at(rhs, row_elig[m_k], -wv[m_k] * nb_known[m_k])


# ---------------------------------------------------------------------------
# one-sided interface gradients
# ---------------------------------------------------------------------------

_PROBE_OFFSETS = (1.5, 2.5)  # in units of h, Richardson-extrapolated to 0


def _node_gradient_cached(u: ScalarField, phi: LevelSet, side: int, cache):
    mode = INTO_POSITIVE if side > 0 else INTO_NEGATIVE

    def get(i, j):
        key = (i, j)
        if key not in cache:
            cache[key] = gradient(u, (i, j), mode, phi)
        return cache[key]

    return get


def _gradient_at_point(u: ScalarField, phi: LevelSet, side: int,
                       x: float, y: float, cache) -> np.ndarray:
    """One-sided gradient at an off-grid point: bilinear blend of one-sided
    node gradients over the corners of the containing cell that lie on the
    requested side."""
    g = u.grid
    i, j = g.cell_of(x, y)
    tx = (x - (g.x0 + i * g.h)) / g.h
    ty = (y - (g.y0 + j * g.h)) / g.h
    weights = {
        (i, j): (1 - tx) * (1 - ty),
        (i + 1, j): tx * (1 - ty),
        (i, j + 1): (1 - tx) * ty,
        (i + 1, j + 1): tx * ty,
    }
    getter = _node_gradient_cached(u, phi, side, cache)
    total = 0.0
    acc = np.zeros(2)
    for (ci, cj), w in weights.items():
        if side * phi.phi[cj, ci] < 0:
            continue
        if w <= 0:
            continue
        try:
            gv = getter(ci, cj)
        except UnderResolvedError:
            continue
        acc += w * gv
        total += w
    if total <= 0:
        raise UnderResolvedError(
            f"no usable corner for one-sided gradient near ({x:.4f}, {y:.4f})"
        )
    return acc / total


def interface_normal_gradient(u: ScalarField, A: CoefficientField,
                              phi: LevelSet, point, side: int,
                              _cache=None):
    """One-sided gradient of u at an interface point and its A-energy.

    The gradient is evaluated at probe points offset 1.5h and 2.5h along the
    interface normal into the requested side and extrapolated linearly back
    to the interface.  Returns ``(grad, q_A)`` with
    ``q_A = <A grad, grad>``.
    """
    if side not in (1, -1):
        raise FieldError("side must be +1 or -1")
    x, y = float(point[0]), float(point[1])
    g = u.grid
    h = g.h
    # normal from phi, oriented into the requested side
    eps = h
    gx = (phi.sample(x + eps, y) - phi.sample(x - eps, y)) / (2 * eps)
    gy = (phi.sample(x, y + eps) - phi.sample(x, y - eps)) / (2 * eps)
    nrm = float(np.hypot(gx, gy))
    if nrm < 1e-14:
        raise UnderResolvedError(f"vanishing level-set gradient at {point}")
    nhat = np.array([gx, gy]) / nrm * side

    cache = _cache if _cache is not None else {}
    grads = []
    for off in _PROBE_OFFSETS:
        px, py = x + off * h * nhat[0], y + off * h * nhat[1]
        px = float(np.clip(px, g.x0, g.x1))
        py = float(np.clip(py, g.y0, g.y1))
        grads.append(_gradient_at_point(u, phi, side, px, py, cache))
    d1, d2 = _PROBE_OFFSETS
    grad0 = (d2 * grads[0] - d1 * grads[1]) / (d2 - d1)
    Am = A.matrix_at(x, y)
    q_A = float(grad0 @ Am @ grad0)
    return grad0, q_A
