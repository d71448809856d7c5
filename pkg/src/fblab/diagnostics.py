"""Monitor quantities for discrete two-phase fields: weighted energy and its
scale-normalized combination, slab flatness, two-plane fitting, Hölder
modulus estimation, non-degeneracy ratios, trapping-offset decay, and the
two-phase energy product.

All routines are pure functions of (u, phi) pairs.  Quadrature is cell-wise
with linear-cut area fractions; cells crossed by the ball boundary are
subdivided with exact signed distances at subcell corners so that constancy
checks are not polluted by staircase noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import FblabError, GridError, UnderResolvedError
from .fields import (
    INTO_NEGATIVE,
    INTO_POSITIVE,
    LevelSet,
    ScalarField,
    all_interface_points,
    gradient,
    interface_extract,
    polyline_distance,
)

_BOUNDARY_SAMPLES = 512
_BALL_SUBDIV = 8
_MONOTONE_SLACK = 1e-3


@dataclass(frozen=True)
class TwoPlane:
    """Piecewise-linear profile alpha*t+ - beta*t- along direction ``nu``
    with offset ``c``; the positive slope is always derived from beta so
    alpha^2 - beta^2 = 1 holds exactly."""

    beta: float
    nu: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        nu = np.asarray(self.nu, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise ValueError("nu must be a unit vector")
        object.__setattr__(self, "nu", nu)

    @property
    def alpha(self) -> float:
        return math.sqrt(1.0 + self.beta**2)

    def height(self, t):
        """Profile value at signed coordinate t (offset already applied)."""
        t = np.asarray(t, dtype=float) + self.c
        return self.alpha * np.maximum(t, 0.0) + self.beta * np.minimum(t, 0.0)

    def evaluate(self, points, center):
        """Evaluate at absolute points (m, 2) relative to ``center``."""
        pts = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
        return self.height(pts @ self.nu)


@dataclass(frozen=True)
class WeissSeries:
    """Scale-normalized energy values over an increasing list of radii,
    with the raw energy and shell terms kept for re-derivation."""

    center: np.ndarray
    radii: np.ndarray
    E_values: np.ndarray
    boundary_terms: np.ndarray
    phi_values: np.ndarray
    alpha: float
    beta: float
    monotone: bool
    first_violation: Optional[tuple] = None

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        recomputed = self.E_values / r**2 - self.boundary_terms / r**3
        if np.max(np.abs(recomputed - self.phi_values)) > 1e-12:
            raise ValueError("phi values inconsistent with stored parts")


@dataclass(frozen=True)
class FlatnessTable:
    """Per-radius slab direction and minimal half-width."""

    radii: np.ndarray
    directions: np.ndarray  # (m, 2)
    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if np.any(d < 0) or np.any(d > r + 1e-12):
            raise ValueError("slab half-widths must lie in [0, r]")


@dataclass(frozen=True)
class ACFSeries:
    """Product-of-phases monitor values over increasing radii."""

    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    monotone: bool
    first_violation: Optional[tuple] = None


def _check_ball(grid, center, r):
    cx, cy = float(center[0]), float(center[1])
    margin = min(cx - grid.x0, grid.x1 - cx, cy - grid.y0, grid.y1 - cy)
    if r > margin + 1e-12:
        raise GridError(f"ball of radius {r} at {center} exits the domain")


def _positive_fraction(v00, v10, v11, v01):
    """Area fraction of the unit square where the bilinear interpolant of
    the given corner values is positive, using linear edge cuts."""
    corners = ((0.0, 0.0, v00), (1.0, 0.0, v10), (1.0, 1.0, v11),
               (0.0, 1.0, v01))
    if v00 >= 0 and v10 >= 0 and v11 >= 0 and v01 >= 0:
        return 1.0
    if v00 < 0 and v10 < 0 and v11 < 0 and v01 < 0:
        return 0.0
    poly = []
    for k in range(4):
        xa, ya, va = corners[k]
        xb, yb, vb = corners[(k + 1) % 4]
        if va >= 0:
            poly.append((xa, ya))
        if (va >= 0) != (vb >= 0):
            t = va / (va - vb)
            poly.append((xa + t * (xb - xa), ya + t * (yb - ya)))
    area = 0.0
    m = len(poly)
    for k in range(m):
        xa, ya = poly[k]
        xb, yb = poly[(k + 1) % m]
        area += xa * yb - xb * ya
    return min(max(0.5 * abs(area), 0.0), 1.0)


def _ball_fraction(grid, i, j, center, r):
    """Fraction of cell (i, j) covered by the ball, subdividing crossed
    cells with exact signed distances at subcell corners."""
    xs = grid.x0 + (i + np.arange(_BALL_SUBDIV + 1) / _BALL_SUBDIV) * grid.h
    ys = grid.y0 + (j + np.arange(_BALL_SUBDIV + 1) / _BALL_SUBDIV) * grid.h
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    s = r - np.hypot(xx - center[0], yy - center[1])
    total = 0.0
    for a in range(_BALL_SUBDIV):
        for b in range(_BALL_SUBDIV):
            total += _positive_fraction(s[a, b], s[a + 1, b],
                                        s[a + 1, b + 1], s[a, b + 1])
    return total / _BALL_SUBDIV**2


def _one_sided_cell_gradient(u, phi, corners, side):
    """Average one-sided node gradient over the cell corners lying on the
    requested side of the interface; falls back to the centered stencil."""
    mode = INTO_POSITIVE if side > 0 else INTO_NEGATIVE
    acc = np.zeros(2)
    count = 0
    for (i, j) in corners:
        if side * phi.phi[j, i] < 0:
            continue
        try:
            acc += gradient(u, (i, j), mode, phi)
            count += 1
        except UnderResolvedError:
            continue
    if count == 0:
        return None
    return acc / count


def _cell_quadrature(u, phi, center, r):
    """Per-cell contributions inside B_r(center): returns the arrays
    (grad_plus, grad_minus, area_plus, area_minus) summed over cells, where
    grad_* are phase-restricted Dirichlet energies and area_* phase areas."""
    grid = u.grid
    h = grid.h
    vals = u.values
    pv = phi.phi

    i_lo = max(int((center[0] - r - grid.x0) / h) - 1, 0)
    i_hi = min(int((center[0] + r - grid.x0) / h) + 1, grid.nx - 2)
    j_lo = max(int((center[1] - r - grid.y0) / h) - 1, 0)
    j_hi = min(int((center[1] + r - grid.y0) / h) + 1, grid.ny - 2)

    grad_p = grad_m = area_p = area_m = 0.0
    for j in range(j_lo, j_hi + 1):
        y0c = grid.y0 + j * h
        for i in range(i_lo, i_hi + 1):
            x0c = grid.x0 + i * h
            # ball clipping via exact corner distances
            dx = np.array([x0c, x0c + h, x0c + h, x0c]) - center[0]
            dy = np.array([y0c, y0c, y0c + h, y0c + h]) - center[1]
            s = r - np.hypot(dx, dy)
            if np.all(s <= 0):
                continue
            if np.any(s <= 0):
                w_ball = _ball_fraction(grid, i, j, center, r)
                if w_ball == 0.0:
                    continue
            else:
                w_ball = 1.0

            corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            pc = np.array([pv[jj, ii] for (ii, jj) in corners])
            f_pos = _positive_fraction(*pc)
            cell = w_ball * h * h

            if f_pos == 1.0 or f_pos == 0.0:
                ux = ((vals[j, i + 1] + vals[j + 1, i + 1])
                      - (vals[j, i] + vals[j + 1, i])) / (2 * h)
                uy = ((vals[j + 1, i] + vals[j + 1, i + 1])
                      - (vals[j, i] + vals[j, i + 1])) / (2 * h)
                g2 = ux * ux + uy * uy
                if f_pos == 1.0:
                    grad_p += cell * g2
                    area_p += cell
                else:
                    grad_m += cell * g2
                    area_m += cell
            else:
                gp = _one_sided_cell_gradient(u, phi, corners, +1)
                gm = _one_sided_cell_gradient(u, phi, corners, -1)
                if gp is not None:
                    grad_p += cell * f_pos * float(gp @ gp)
                if gm is not None:
                    grad_m += cell * (1.0 - f_pos) * float(gm @ gm)
                area_p += cell * f_pos
                area_m += cell * (1.0 - f_pos)
    return grad_p, grad_m, area_p, area_m


def weiss_energy(u: ScalarField, phi: LevelSet, center, r: float,
                 alpha: float, beta: float) -> float:
    """Weighted energy over B_r(center): Dirichlet part plus alpha^2 times
    the positive-phase area plus beta^2 times the negative-phase area."""
    if abs(alpha**2 - beta**2 - 1.0) > 1e-10:
        raise ValueError("weights must satisfy alpha^2 - beta^2 = 1")
    _check_ball(u.grid, center, r)
    grad_p, grad_m, area_p, area_m = _cell_quadrature(u, phi, center, r)
    return grad_p + grad_m + alpha**2 * area_p + beta**2 * area_m


def boundary_square_integral(u: ScalarField, center, r: float,
                             samples: int = _BOUNDARY_SAMPLES) -> float:
    """Integral of u^2 over the circle of radius r by the midpoint angular
    rule with bilinear sampling."""
    _check_ball(u.grid, center, r)
    theta = (np.arange(samples) + 0.5) * (2 * np.pi / samples)
    vals = u.sample(center[0] + r * np.cos(theta),
                    center[1] + r * np.sin(theta))
    return float(np.sum(vals**2) * r * (2 * np.pi / samples))


def weiss_phi(u: ScalarField, phi: LevelSet, center, r: float,
              alpha: float, beta: float, n: int = 2):
    """Scale-normalized energy r^-n E - r^(-1-n) * shell integral of u^2.
    Returns (value, E, shell integral)."""
    E = weiss_energy(u, phi, center, r, alpha, beta)
    bterm = boundary_square_integral(u, center, r)
    return E / r**n - bterm / r**(n + 1), E, bterm


def _monotone_verdict(radii, values):
    slack = _MONOTONE_SLACK * np.max(np.abs(values)) if len(values) else 0.0
    for k in range(len(values) - 1):
        if values[k + 1] < values[k] - slack:
            return False, (float(radii[k]), float(radii[k + 1]))
    return True, None


def weiss_series(u: ScalarField, phi: LevelSet, center, radii,
                 alpha: float, beta: float) -> WeissSeries:
    """Evaluate the normalized energy on an increasing list of radii and
    report whether it is non-decreasing up to quadrature slack."""
    radii = np.asarray(radii, dtype=float)
    Es, bts, phis = [], [], []
    for r in radii:
        val, E, bt = weiss_phi(u, phi, center, r, alpha, beta)
        Es.append(E)
        bts.append(bt)
        phis.append(val)
    phis = np.asarray(phis)
    monotone, violation = _monotone_verdict(radii, phis)
    return WeissSeries(center=np.asarray(center, dtype=float), radii=radii,
                       E_values=np.asarray(Es),
                       boundary_terms=np.asarray(bts), phi_values=phis,
                       alpha=alpha, beta=beta, monotone=monotone,
                       first_violation=violation)


def rescale(u: ScalarField, lam: float, center) -> ScalarField:
    """Zoomed field X -> u(center + lam*(X - center)) / lam on the same
    grid, resampled bilinearly."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    grid = u.grid
    if not grid.contains(center[0], center[1]):
        raise GridError("center outside domain")
    if lam == 1.0:
        return ScalarField(grid, u.values.copy())
    xx, yy = grid.meshgrid()
    vals = u.sample(center[0] + lam * (xx - center[0]),
                    center[1] + lam * (yy - center[1])) / lam
    return ScalarField(grid, vals)


def _fit_objective(points, uvals, theta, betas, cs):
    """Max-node deviation over a (beta, c) grid at one angle; returns the
    (len(betas), len(cs)) residual table."""
    nu = np.array([-math.sin(theta), math.cos(theta)])
    t = points @ nu
    tc = t[:, None, None] + cs[None, None, :]
    alphas = np.sqrt(1.0 + betas**2)
    prof = (alphas[None, :, None] * np.maximum(tc, 0.0)
            + betas[None, :, None] * np.minimum(tc, 0.0))
    return np.max(np.abs(prof - uvals[:, None, None]), axis=0)


def two_plane_fit(u: ScalarField, phi: LevelSet, center, r: float):
    """Best L-infinity fit of a two-plane profile over nodes in B_r(center).

    Coarse grid search (64 angles x 32 betas x 32 offsets) with three
    10x zoom rounds, then a simplex polish.  Ties prefer smaller beta, then
    smaller |c|, then direction closest to (0, 1).  Returns
    (TwoPlane, residual).
    """
    grid = u.grid
    _check_ball(grid, center, r)
    xx, yy = grid.meshgrid()
    mask = (xx - center[0])**2 + (yy - center[1])**2 <= r**2
    points = np.column_stack([xx[mask] - center[0], yy[mask] - center[1]])
    uvals = u.values[mask]

    # the coarse grid search only needs enough nodes to land near the
    # optimum; the simplex polish below uses the full node set
    if len(points) > 4096:
        stride = int(np.ceil(len(points) / 4096))
        cpoints, cvals = points[::stride], uvals[::stride]
    else:
        cpoints, cvals = points, uvals

    n_theta, n_beta, n_c = 64, 32, 32
    theta0, theta_span = 0.0, np.pi  # full circle: nu and -nu are distinct
    beta_lo, beta_hi = 0.0, 10.0
    c_lo, c_hi = -r / 2, r / 2
    best = (np.inf, 0.0, 0.0, 0.0)

    for _round in range(4):
        thetas = theta0 + np.linspace(-theta_span, theta_span, n_theta)
        # tie-break ordering: smallest angular distance from (0, 1) first
        thetas = thetas[np.argsort(np.abs(thetas - 0.0), kind="stable")]
        betas = np.linspace(max(beta_lo, 0.0), min(beta_hi, 10.0), n_beta)
        cs = np.linspace(max(c_lo, -r / 2), min(c_hi, r / 2), n_c)
        cs = cs[np.argsort(np.abs(cs), kind="stable")]
        found = (np.inf, 0.0, 0.0, 0.0)
        for theta in thetas:
            table = _fit_objective(cpoints, cvals, theta, betas, cs)
            k = int(np.argmin(table))
            bi, ci = divmod(k, n_c)
            if table[bi, ci] < found[0] - 1e-15:
                found = (float(table[bi, ci]), float(theta),
                         float(betas[bi]), float(cs[ci]))
        if found[0] < best[0]:
            best = found
        # zoom on the incumbent
        theta0 = best[1]
        theta_span /= 10.0
        beta_lo, beta_hi = best[2] - 10.0 / 10**(_round + 1), \
            best[2] + 10.0 / 10**(_round + 1)
        half_c = (r / 2) / 10**(_round + 1)
        c_lo, c_hi = best[3] - half_c, best[3] + half_c

    def objective(z):
        theta, beta, c = z
        beta = min(max(beta, 0.0), 10.0)
        c = min(max(c, -r / 2), r / 2)
        nu = np.array([-math.sin(theta), math.cos(theta)])
        t = points @ nu + c
        prof = math.sqrt(1 + beta**2) * np.maximum(t, 0.0) \
            + beta * np.minimum(t, 0.0)
        return float(np.max(np.abs(prof - uvals)))

    # the simplex can stall on the non-smooth max objective; restart from
    # the incumbent until it stops improving
    res = minimize(objective, x0=[best[1], best[2], best[3]],
                   method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 2000})
    for _ in range(5):
        if res.fun < 1e-15:
            break
        nxt = minimize(objective, x0=res.x, method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-16,
                                "maxiter": 2000})
        if nxt.fun >= res.fun * (1 - 1e-3):
            res = nxt if nxt.fun < res.fun else res
            break
        res = nxt
    if res.fun <= best[0]:
        theta, beta, c = res.x
        beta = min(max(float(beta), 0.0), 10.0)
        c = min(max(float(c), -r / 2), r / 2)
        best = (float(res.fun), float(theta), beta, c)

    theta = best[1]
    nu = np.array([-math.sin(theta), math.cos(theta)])
    nu /= np.linalg.norm(nu)
    return TwoPlane(beta=best[2], nu=nu, c=best[3]), best[0]


def flatness_slab(phi: LevelSet, center, r: float, nu):
    """Minimal half-width of a slab orthogonal to ``nu`` containing the
    interface inside B_r(center); None if no interface point lies in the
    ball."""
    _check_ball(phi.grid, center, r)
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    pts = all_interface_points(interface_extract(phi))
    if pts.size == 0:
        return None
    rel = pts - np.asarray(center, dtype=float)
    inside = np.einsum("ij,ij->i", rel, rel) <= r**2
    if not np.any(inside):
        return None
    return float(np.max(np.abs(rel[inside] @ nu)))


def flatness_table(phi: LevelSet, center, radii) -> FlatnessTable:
    """Best-direction slab half-widths over a list of radii; the direction
    per radius comes from the principal normal of the contained interface
    points (smallest-variance axis)."""
    dirs, deltas, kept = [], [], []
    pts = all_interface_points(interface_extract(phi))
    for r in radii:
        _check_ball(phi.grid, center, r)
        rel = pts - np.asarray(center, dtype=float)
        inside = np.einsum("ij,ij->i", rel, rel) <= r**2
        if not np.any(inside):
            continue
        sel = rel[inside]
        cov = (sel - sel.mean(axis=0)).T @ (sel - sel.mean(axis=0))
        w, v = np.linalg.eigh(cov)
        nu = v[:, 0]  # smallest-variance direction
        if nu[1] < 0:
            nu = -nu
        dirs.append(nu)
        deltas.append(float(np.max(np.abs(sel @ nu))))
        kept.append(r)
    return FlatnessTable(radii=np.asarray(kept),
                         directions=np.asarray(dirs),
                         deltas=np.asarray(deltas))


def holder_exponent(u: ScalarField, phi: LevelSet, center, alpha: float,
                    beta: float, epsilon: float, radii):
    """Slope of log-deviation vs log-distance around an interface point.

    The deviation is (u - fitted two-plane) / (alpha * epsilon); the fit
    frame comes from :func:`two_plane_fit` at the largest radius.  Returns
    the string 'exact plane' when all deviations vanish to 1e-12.
    """
    radii = np.asarray(radii, dtype=float)
    r_in, r_out = float(radii[0]), float(radii[-1])
    if r_in < epsilon / 0.1:
        raise ValueError("inner radius must be at least epsilon / 0.1")
    # fit at the innermost radius: the reference frame is the tangent plane
    # at the center, and a wide-window fit would tilt toward a global
    # compromise and inflate the measured deviations
    fitted, _ = two_plane_fit(u, phi, center, r_in)
    # the center sits on the interface, so the reference plane passes
    # through it; keeping the fitted offset would shift only the positive
    # side and bias the modulus
    plane = TwoPlane(beta=fitted.beta, nu=fitted.nu, c=0.0)
    grid = u.grid
    xx, yy = grid.meshgrid()
    dist = np.hypot(xx - center[0], yy - center[1])
    mask = (dist >= r_in) & (dist <= r_out)
    pts = np.column_stack([xx[mask], yy[mask]])
    diffs = np.abs(u.values[mask] - plane.evaluate(pts, center)) \
        / (alpha * epsilon)
    if np.max(diffs) < 1e-12:
        return "exact plane"
    # modulus of continuity: regress the per-shell supremum, which is
    # immune to nodes where the deviation happens to change sign
    edges = np.geomspace(r_in, r_out, 13)
    logs_r, logs_d = [], []
    dm = dist[mask]
    for a, b in zip(edges[:-1], edges[1:]):
        shell = (dm >= a) & (dm <= b)
        if not np.any(shell):
            continue
        top = float(np.max(diffs[shell]))
        if top > 1e-14:
            logs_r.append(math.log(math.sqrt(a * b)))
            logs_d.append(math.log(top))
    if len(logs_r) < 3:
        raise FblabError("too few usable shells for a modulus fit")
    return float(np.polyfit(logs_r, logs_d, 1)[0])


def nondegeneracy(u: ScalarField, phi: LevelSet, delta_band: float) -> float:
    """Minimal ratio u / distance-to-interface over positive-phase nodes at
    distance at least 2 * delta_band from the interface."""
    polylines = interface_extract(phi)
    if not polylines:
        raise FblabError("no interface to measure against")
    grid = u.grid
    xx, yy = grid.meshgrid()
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    dist = polyline_distance(pts, polylines).reshape(grid.shape)
    mask = (phi.phi > 0) & (dist >= 2 * delta_band)
    if not np.any(mask):
        raise FblabError("no qualifying nodes beyond the band")
    return float(np.min(u.values[mask] / dist[mask]))


def oscillation_decay(u: ScalarField, phi: LevelSet, x0, r0: float,
                      levels: int, alpha: float, beta: float):
    """Tightest two-plane trapping offsets (a_k, b_k) at the shrinking
    scales r_k = r0 / 20^k, k = 0..levels, in the frame fitted at r0."""
    grid = u.grid
    _check_ball(grid, x0, r0)
    if r0 / 20**levels < 4 * grid.h:
        raise UnderResolvedError(
            "deepest level is under-resolved: r0/20^levels < 4h")
    plane, _ = two_plane_fit(u, phi, x0, r0)
    nu = plane.nu
    xx, yy = grid.meshgrid()
    relx = xx - x0[0]
    rely = yy - x0[1]
    dist = np.hypot(relx, rely)
    s = relx * nu[0] + rely * nu[1]

    out = []
    for k in range(levels + 1):
        rk = r0 / 20**k
        mask = dist <= rk
        uv = u.values[mask]
        sv = s[mask]
        t = np.full(uv.shape, np.nan)
        t[uv > 0] = uv[uv > 0] / alpha
        if beta > 0:
            # profile value is beta * t on t < 0, so u < 0 inverts to u/beta;
            # with beta = 0 the negative side carries no information
            t[uv < 0] = uv[uv < 0] / beta
            t[uv == 0] = 0.0
        offs = t - sv
        offs = offs[np.isfinite(offs)]
        if offs.size == 0:
            raise UnderResolvedError(f"no usable nodes at level {k}")
        out.append((float(np.min(offs)), float(np.max(offs))))
    return out


def acf_product(u: ScalarField, phi: LevelSet, center, radii) -> ACFSeries:
    """Product monitor r^-4 * (positive-phase Dirichlet energy) *
    (negative-phase Dirichlet energy) over B_r(center), with the cell
    containing the center excluded."""
    grid = u.grid
    radii = np.asarray(radii, dtype=float)
    ci, cj = grid.cell_of(center[0], center[1])
    vals = []
    for r in radii:
        _check_ball(grid, center, r)
        grad_p, grad_m, _, _ = _cell_quadrature(u, phi, center, r)
        # remove the center cell's contribution from both factors
        sub_p, sub_m = _center_cell_energy(u, phi, ci, cj)
        grad_p = max(grad_p - sub_p, 0.0)
        grad_m = max(grad_m - sub_m, 0.0)
        vals.append(grad_p * grad_m / r**4)
    vals = np.asarray(vals)
    monotone, violation = _monotone_verdict(radii, vals)
    return ACFSeries(center=np.asarray(center, dtype=float), radii=radii,
                     values=vals, monotone=monotone,
                     first_violation=violation)


def _center_cell_energy(u, phi, i, j):
    grid = u.grid
    h = grid.h
    vals = u.values
    corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
    pc = np.array([phi.phi[jj, ii] for (ii, jj) in corners])
    f_pos = _positive_fraction(*pc)
    cell = h * h
    if f_pos in (0.0, 1.0):
        ux = ((vals[j, i + 1] + vals[j + 1, i + 1])
              - (vals[j, i] + vals[j + 1, i])) / (2 * h)
        uy = ((vals[j + 1, i] + vals[j + 1, i + 1])
              - (vals[j, i] + vals[j, i + 1])) / (2 * h)
        g2 = (ux * ux + uy * uy) * cell
        return (g2, 0.0) if f_pos == 1.0 else (0.0, g2)
    gp = _one_sided_cell_gradient(u, phi, corners, +1)
    gm = _one_sided_cell_gradient(u, phi, corners, -1)
    ep = cell * f_pos * float(gp @ gp) if gp is not None else 0.0
    em = cell * (1 - f_pos) * float(gm @ gm) if gm is not None else 0.0
    return ep, em
