"""Topological pressure, Bowen roots and derivatives of the pressure curve."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse, NoSignChange, PreconditionError
from .skew import PRUNE_DEPTH, PruneOpts, enumerate_tree, tree_weight_sum

K_AVG = 3
TAU_MONO = 1e-3
TAU_CONV = 1e-3
TOL_T = 1e-3
T_CEILING = 64.0


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    spread: float
    increments: tuple


def _prune_for(n, t, prune):
    if prune is not None:
        if prune.enabled and prune.t_ref is None:
            return PruneOpts(True, t, prune.threshold)
        return prune
    if n > PRUNE_DEPTH and t > 0:
        return PruneOpts(True, float(t))
    return PruneOpts()


def pressure_increments(spec, xi, t, n, k_avg=K_AVG, prune=None):
    """Pressure estimate with the spread of the averaged increments.

    The estimate is the mean of ``S_j(t) - S_{j-1}(t)`` over the last
    ``k_avg`` levels, where ``S_j`` is the log weight sum at level ``j``.
    """
    tree = enumerate_tree(spec, xi, n, _prune_for(n, t, prune))
    k_avg = max(1, min(k_avg, n))
    sums = [tree_weight_sum(tree, t, j) for j in range(n - k_avg, n + 1)]
    inc = np.diff(sums)
    return PressureEstimate(float(np.mean(inc)), float(np.ptp(inc)), tuple(float(x) for x in inc))


def estimate_pressure(spec, xi, t, n, k_avg=K_AVG, prune=None):
    """Estimate ``P(t)`` from the depth-``n`` preimage tree of ``xi``."""
    return pressure_increments(spec, xi, t, n, k_avg, prune).value


@dataclass
class PressureCurve:
    t_grid: list
    depth: int
    estimates: list
    increments: list
    spreads: list
    base_point: complex
    base_point_alt: complex
    alt_estimates: list
    cross_check_gap: float
    monotonicity_violations: list = field(default_factory=list)
    convexity_violations: list = field(default_factory=list)
    lower_bound_violation: bool = False

    @property
    def ok(self):
        return not (
            self.monotonicity_violations
            or self.convexity_violations
            or self.lower_bound_violation
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# depth={self.depth}\n")
            fh.write(f"# base_point={_fmt_c(self.base_point)}\n")
            fh.write(f"# base_point_alt={_fmt_c(self.base_point_alt)}\n")
            fh.write(f"# cross_check_gap={self.cross_check_gap:.17g}\n")
            fh.write(f"# monotonicity_violations={len(self.monotonicity_violations)}\n")
            fh.write(f"# convexity_violations={len(self.convexity_violations)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "pressure", "increment_spread", "depth"])
            for t, p, s in zip(self.t_grid, self.estimates, self.spreads):
                w.writerow([f"{t:.17g}", f"{p:.17g}", f"{s:.17g}", self.depth])


def _fmt_c(z):
    z = complex(z)
    return f"{z.real:.17g}{z.imag:+.17g}j"


def second_differences(t_grid, values):
    """Second differences scaled to a uniform-grid convention.

    For a uniform grid this is ``P(t+h) - 2P(t) + P(t-h)``; otherwise the
    change of slope is multiplied by the mean local spacing.
    """
    t = np.asarray(t_grid, dtype=float)
    p = np.asarray(values, dtype=float)
    if t.size < 3:
        return np.zeros(0)
    slopes = np.diff(p) / np.diff(t)
    h = 0.5 * (t[2:] - t[:-2])
    return np.diff(slopes) * h


def shape_violations(t_grid, values, tau_mono=TAU_MONO, tau_conv=TAU_CONV):
    """Pairs breaking monotonicity and triples breaking convexity."""
    t = np.asarray(t_grid, dtype=float)
    p = np.asarray(values, dtype=float)
    order = np.argsort(t)
    t, p = t[order], p[order]
    mono = [
        (float(t[i]), float(t[j]))
        for i in range(len(t))
        for j in range(i + 1, len(t))
        if p[j] > p[i] + tau_mono
    ]
    d2 = second_differences(t, p)
    conv = [float(t[k + 1]) for k in np.nonzero(d2 < -tau_conv)[0]]
    return mono, conv


def pressure_curve(spec, xi, xi_alt, t_grid, n, k_avg=K_AVG):
    """Pressure on a grid at two base points, with shape checks.

    Shape problems are recorded on the returned curve, never corrected.
    """
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid):
        raise PreconditionError("pressure is defined for t >= 0")
    main = [pressure_increments(spec, xi, t, n, k_avg) for t in t_grid]
    alt = [pressure_increments(spec, xi_alt, t, n, k_avg) for t in t_grid]
    est = [e.value for e in main]
    alt_est = [e.value for e in alt]
    gap = max(abs(a - b) for a, b in zip(est, alt_est)) if est else 0.0
    mono, conv = shape_violations(t_grid, est)
    low = any(t == 0 and p < np.log(2) - 1e-9 for t, p in zip(t_grid, est))
    return PressureCurve(
        t_grid=t_grid,
        depth=n,
        estimates=est,
        increments=[e.increments for e in main],
        spreads=[e.spread for e in main],
        base_point=complex(xi),
        base_point_alt=complex(xi_alt),
        alt_estimates=alt_est,
        cross_check_gap=float(gap),
        monotonicity_violations=mono,
        convexity_violations=conv,
        lower_bound_violation=low,
    )


@dataclass(frozen=True)
class BowenResult:
    h: float
    bracket: tuple
    residual: float
    depth: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "bracket_lo", "bracket_hi", "residual", "depth"])
            w.writerow(
                [f"{self.h:.17g}", f"{self.bracket[0]:.17g}", f"{self.bracket[1]:.17g}",
                 f"{self.residual:.17g}", self.depth]
            )


def decreasing_root(func, lo, hi, tol, ceiling=T_CEILING, what="root"):
    """Zero of a decreasing function by bracketing and bisection.

    The upper end starts at ``hi`` and doubles while ``func`` stays positive.
    Once the bracket is narrower than ``tol`` the returned point is the
    linear interpolant between its ends, which stays inside the bracket.

    Returns ``(root, (lo, hi), f_lo, f_hi)``.
    """
    f_lo = func(lo)
    if f_lo <= 0:
        if f_lo == 0:
            return lo, (lo, lo), f_lo, f_lo
        raise NoSignChange(f"{what}: value at {lo} is already negative ({f_lo:.3g})")
    f_hi = func(hi)
    while f_hi > 0:
        if hi >= ceiling:
            raise NoSignChange(f"{what}: no sign change up to t = {ceiling:g}")
        lo, f_lo = hi, f_hi
        hi = min(2 * hi, ceiling)
        f_hi = func(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if f_mid == 0:
            return mid, (mid, mid), 0.0, 0.0
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    root = lo + (hi - lo) * f_lo / (f_lo - f_hi)
    return root, (lo, hi), f_lo, f_hi


def bowen_root(spec, xi, n, tol_t=TOL_T, k_avg=K_AVG):
    """Solve ``P(h) = 0`` on the depth-``n`` estimator."""

    def p(t):
        return estimate_pressure(spec, xi, t, n, k_avg)

    h, bracket, _, _ = decreasing_root(p, 0.0, 2.0, tol_t, what="Bowen equation")
    return BowenResult(float(h), bracket, abs(p(h)), n)


def _locate(curve, t):
    grid = np.asarray(curve.t_grid, dtype=float)
    hits = np.nonzero(np.abs(grid - t) <= 1e-9 * max(1.0, abs(t)))[0]
    if hits.size == 0 or hits[0] == 0 or hits[0] == grid.size - 1:
        raise GridTooCoarse(f"t = {t} needs grid neighbours on both sides")
    return grid, int(hits[0])


def lyapunov_from_slope(curve, t):
    """``-P'(t)`` by a central difference on the curve grid."""
    if len(curve.t_grid) < 3:
        raise GridTooCoarse("need at least three grid points")
    grid, k = _locate(curve, t)
    p = curve.estimates
    return -(p[k + 1] - p[k - 1]) / (grid[k + 1] - grid[k - 1])


def variance_from_curvature(curve, t, tau_conv=TAU_CONV):
    """``P''(t)`` by a second central difference on a uniform stencil.

    Values in ``[-tau_conv, 0)`` are reported as 0; anything more negative is
    returned unchanged so the convexity failure stays visible.
    """
    if len(curve.t_grid) < 3:
        raise GridTooCoarse("need at least three grid points")
    grid, k = _locate(curve, t)
    h1 = grid[k] - grid[k - 1]
    h2 = grid[k + 1] - grid[k]
    if abs(h1 - h2) > 1e-9 * max(h1, h2):
        raise GridTooCoarse("second difference needs uniform spacing around t")
    p = curve.estimates
    d2 = p[k + 1] - 2 * p[k] + p[k - 1]
    val = d2 / h1**2
    if -tau_conv <= d2 < 0:
        return 0.0
    return float(val)
