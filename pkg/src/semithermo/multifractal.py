"""Temperature function and the Lyapunov-level dimension spectrum."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .thermo import K_AVG, TOL_T, bowen_root, decreasing_root, estimate_pressure

CHI_STEP = 1e-2
DEGENERACY_SPREAD = 1e-3


def temperature(spec, xi, t, q, n, tol_t=TOL_T, k_avg=K_AVG, with_residual=False):
    """Unique ``T >= 0`` with ``P(T + q t) = q P(t)``, for ``q`` in [0, 1].

    Solved by the same bracketing bisection as the Bowen root, so ``q = 0``
    reproduces :func:`~semithermo.thermo.bowen_root` exactly.
    """
    if t < 0:
        raise PreconditionError("t must be >= 0")
    if not 0.0 <= q <= 1.0:
        raise PreconditionError(f"q = {q} outside [0, 1]")
    target = q * estimate_pressure(spec, xi, t, n, k_avg)

    def g(temp):
        return estimate_pressure(spec, xi, temp + q * t, n, k_avg) - target

    root, _, _, _ = decreasing_root(g, 0.0, 2.0, tol_t, what="temperature equation")
    root = max(0.0, float(root))
    if with_residual:
        return root, abs(g(root))
    return root


def lyapunov_at(spec, xi, s, n, step=CHI_STEP, k_avg=K_AVG):
    """``-P'(s)`` from fresh pressure evaluations around ``s``.

    Uses a central difference; when ``s - step`` would be negative it
    switches to the second-order one-sided stencil.
    """

    def p(x):
        return estimate_pressure(spec, xi, x, n, k_avg)

    if s - step >= 0:
        return -(p(s + step) - p(s - step)) / (2 * step)
    return -(-3 * p(s) + 4 * p(s + step) - p(s + 2 * step)) / (2 * step)


@dataclass(frozen=True)
class SpectrumRow:
    q: float
    T: float
    chi: float
    alpha: float
    dim: float
    residual: float = 0.0


def spectrum_row(spec, xi, t, q, n, tol_t=TOL_T, k_avg=K_AVG):
    T, res = temperature(spec, xi, t, q, n, tol_t, k_avg, with_residual=True)
    chi = lyapunov_at(spec, xi, T + q * t, n, k_avg=k_avg)
    alpha = t + estimate_pressure(spec, xi, t, n, k_avg) / chi
    return SpectrumRow(q, T, chi, alpha, T + q * alpha, res)


@dataclass
class SpectrumTable:
    t: float
    rows: list
    h_ref: float
    depth: int = 0
    seed: int = 0
    degenerate: bool = False
    violations: list = field(default_factory=list)

    @property
    def chi_spread(self):
        chis = [r.chi for r in self.rows]
        return max(chis) - min(chis)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# t={self.t:.17g}\n")
            fh.write(f"# n={self.depth}\n")
            fh.write(f"# h_ref={self.h_ref:.17g}\n")
            fh.write(f"# seed={self.seed}\n")
            fh.write(f"# degenerate={str(self.degenerate).lower()}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "T", "chi", "alpha", "dim"])
            for r in self.rows:
                w.writerow([f"{v:.17g}" for v in (r.q, r.T, r.chi, r.alpha, r.dim)])


def spectrum_table(spec, xi, t, q_grid, n, tol_t=TOL_T, k_avg=K_AVG, seed=0):
    """Spectrum rows over ``q_grid``, which must lie in [0, 1] and hold both ends."""
    q_grid = sorted(float(q) for q in q_grid)
    if not q_grid or q_grid[0] != 0.0 or q_grid[-1] != 1.0:
        raise PreconditionError("q grid must include both endpoints 0 and 1")
    if any(not 0.0 <= q <= 1.0 for q in q_grid):
        raise PreconditionError("q grid must lie inside [0, 1]")
    h = bowen_root(spec, xi, n, tol_t, k_avg).h
    rows = [spectrum_row(spec, xi, t, q, n, tol_t, k_avg) for q in q_grid]
    table = SpectrumTable(t, rows, h, n, seed)
    table.degenerate = table.chi_spread < DEGENERACY_SPREAD
    for r in rows:
        if r.q == 0.0 and abs(r.T - h) > 2 * tol_t:
            table.violations.append(f"T(0) = {r.T:.6g} differs from h = {h:.6g}")
        if r.q == 1.0 and abs(r.T) > 2 * tol_t:
            table.violations.append(f"T(1) = {r.T:.6g} is not 0")
        if r.chi <= 0:
            table.violations.append(f"chi <= 0 at q = {r.q}")
        if not 0.0 <= r.dim <= 2.0:
            table.violations.append(f"dim = {r.dim:.6g} outside [0, 2] at q = {r.q}")
    return table


def hd_of_measure(spec, xi, t, n, k_avg=K_AVG):
    """Dimension of the projected equilibrium state: ``t + P(t)/chi(t)``."""
    chi = lyapunov_at(spec, xi, t, n, k_avg=k_avg)
    return t + estimate_pressure(spec, xi, t, n, k_avg) / chi


def affine_defect(spec, xi, t_grid, n, k_avg=K_AVG):
    """Largest ``|second difference|`` of the pressure over ``t_grid``."""
    p = np.array([estimate_pressure(spec, xi, t, n, k_avg) for t in t_grid])
    if p.size < 3:
        return 0.0
    return float(np.max(np.abs(p[2:] - 2 * p[1:-1] + p[:-2])))
