"""Rational maps on the Riemann sphere.

Points are python ``complex`` numbers, or the :data:`INF` sentinel for the
point at infinity.  Values near a pole are never represented by large
finite numbers: every formula that has to work at a pole or at infinity
goes through the chart swap ``w -> 1/w`` instead.

Polynomial coefficients are stored in ascending order of degree.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DegenerateEquation, NonConvergence, ValidationError

EPS_ROOT = 1e-12
EPS_CLUSTER = 1e-7
EPS_LEAD = 1e-12
EPS_RES = 1e-12
MAX_ITER = 200

_MACHINE_EPS = np.finfo(float).eps


class _Infinity:
    """The point at infinity of the Riemann sphere."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_inf(z):
    return z is INF


def chordal(z, w):
    """Chordal distance on the Riemann sphere (diameter 2).

    Uses ``hypot`` and divides twice so huge finite points do not overflow.
    """
    if z is INF and w is INF:
        return 0.0
    if z is INF:
        return 2.0 / float(np.hypot(1.0, abs(w)))
    if w is INF:
        return 2.0 / float(np.hypot(1.0, abs(z)))
    return float(2.0 * abs(z - w) / np.hypot(1.0, abs(z)) / np.hypot(1.0, abs(w)))


def chordal_array(z, w):
    """Vectorised chordal distance between finite points (broadcasts)."""
    z = np.asarray(z)
    w = np.asarray(w)
    return 2.0 * np.abs(z - w) / np.hypot(1.0, np.abs(z)) / np.hypot(1.0, np.abs(w))


def _trim(coeffs):
    c = np.asarray(coeffs, dtype=complex).ravel()
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1, dtype=complex)
    keep = np.nonzero(np.abs(c) > EPS_LEAD * scale)[0]
    return c[: keep[-1] + 1].copy()


def _pad(c, n):
    out = np.zeros(n, dtype=complex)
    out[: len(c)] = c
    return out


def horner(coeffs, z):
    """Evaluate ascending coefficients ``coeffs`` at ``z`` (any shape)."""
    z = np.asarray(z, dtype=complex)
    p = np.full(z.shape, coeffs[-1], dtype=complex)
    for c in coeffs[-2::-1]:
        p = p * z + c
    return p


# ---------------------------------------------------------------------------
# Simultaneous root finding


def _horner_rows(c, z):
    """Value and derivative of each row polynomial of ``c`` at row points ``z``."""
    p = np.repeat(c[:, -1:], z.shape[1], axis=1)
    dp = np.zeros_like(p)
    for k in range(c.shape[1] - 2, -1, -1):
        dp = dp * z + p
        p = p * z + c[:, k : k + 1]
    return p, dp


def _abs_horner_rows(a, r):
    s = np.repeat(a[:, -1:], r.shape[1], axis=1)
    for k in range(a.shape[1] - 2, -1, -1):
        s = s * r + a[:, k : k + 1]
    return s


def aberth(coeffs, max_iter=MAX_ITER, tol=EPS_ROOT):
    """All roots of a batch of polynomials by Aberth-Ehrlich iteration.

    Parameters
    ----------
    coeffs : array_like, shape (B, d+1) or (d+1,)
        Ascending coefficients, one polynomial per row.  All rows share the
        degree ``d``; the leading column must be nonzero.
    max_iter : int
        Iteration cap.
    tol : float
        Accepted backward error, relative to the coefficient scale
        ``sum |c_k| max(1, |z|)^k``.

    Returns
    -------
    ndarray, shape (B, d) or (d,)
        Roots, in no particular order.

    Raises
    ------
    DegenerateEquation
        If ``d == 0``.
    NonConvergence
        If some root misses the backward-error tolerance after ``max_iter``
        sweeps.
    """
    c = np.asarray(coeffs, dtype=complex)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    n_rows, m = c.shape
    d = m - 1
    if d < 1:
        raise DegenerateEquation("polynomial has degree 0")
    lead = c[:, -1]
    if np.any(lead == 0):
        raise DegenerateEquation("leading coefficient vanishes")
    mono = c / lead[:, None]
    amono = np.abs(mono)

    radius = 1.0 + np.max(amono[:, :-1], axis=1)
    angles = 2.0 * np.pi * np.arange(d) / d + 0.4
    z = radius[:, None] * np.exp(1j * angles)[None, :]

    active = np.arange(n_rows)
    eye = np.eye(d, dtype=bool)
    for _ in range(max_iter):
        if active.size == 0:
            break
        zi = z[active]
        ci = mono[active]
        p, dp = _horner_rows(ci, zi)
        if d > 1:
            diff = zi[:, :, None] - zi[:, None, :]
            diff[:, eye] = 1.0
            inv = 1.0 / diff
            inv[:, eye] = 0.0
            s = inv.sum(axis=2)
        else:
            s = np.zeros_like(zi)
        denom = dp - p * s
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(p == 0, 0.0, p / denom)
        bad = ~np.isfinite(w)
        if np.any(bad):
            # exact collision of two iterates: nudge instead of dividing by 0
            w[bad] = 1e-8 * (1.0 + np.abs(zi[bad]))
        zi = zi - w
        z[active] = zi

        tiny_step = np.abs(w) <= 4.0 * _MACHINE_EPS * np.maximum(1.0, np.abs(zi))
        pn, _ = _horner_rows(ci, zi)
        tight = np.abs(pn) <= 4.0 * _MACHINE_EPS * _abs_horner_rows(amono[active], np.abs(zi))
        done = np.all(tiny_step | tight, axis=1)
        active = active[~done]

    p, _ = _horner_rows(mono, z)
    scale = _abs_horner_rows(amono, np.maximum(1.0, np.abs(z)))
    backward = np.abs(p) / scale
    if not np.all(backward <= tol):
        worst = float(np.max(backward))
        raise NonConvergence(
            f"Aberth iteration left backward error {worst:.3g} > {tol:g} "
            f"after {max_iter} sweeps"
        )
    return z[0] if single else z


def cluster_roots(roots, eps=EPS_CLUSTER):
    """Group roots closer than ``eps`` (relative to ``max(1, |z|)``).

    Returns a list of ``(mean_point, multiplicity)`` in the order the clusters
    are first met when scanning by real then imaginary part.
    """
    roots = [complex(r) for r in np.ravel(roots)]
    roots.sort(key=lambda r: (r.real, r.imag))
    clusters = []
    for r in roots:
        for cl in clusters:
            centre = cl[0] / cl[1]
            if abs(r - centre) <= eps * max(1.0, abs(centre)):
                cl[0] += r
                cl[1] += 1
                break
        else:
            clusters.append([r, 1])
    return [(s / k, k) for s, k in clusters]


# ---------------------------------------------------------------------------
# Rational maps


@dataclass(frozen=True)
class PreimageSet:
    roots: tuple
    residual: float

    @property
    def total_multiplicity(self):
        return sum(m for _, m in self.roots)


@dataclass(frozen=True)
class RationalMap:
    """A rational map ``numerator / denominator`` with coprime parts.

    Coefficients are ascending.  Leading coefficients below ``EPS_LEAD``
    times the largest coefficient are dropped on construction.
    """

    numerator: tuple
    denominator: tuple = (1.0 + 0j,)
    degree: int = field(init=False, compare=False)

    def __post_init__(self):
        num = _trim(self.numerator)
        den = _trim(self.denominator)
        if np.all(den == 0):
            raise ValidationError("denominator is identically zero")
        if np.all(num == 0):
            raise ValidationError("numerator is identically zero (constant map)")
        object.__setattr__(self, "numerator", tuple(complex(c) for c in num))
        object.__setattr__(self, "denominator", tuple(complex(c) for c in den))
        degree = max(len(num), len(den)) - 1
        if degree < 1:
            raise ValidationError("map is constant (degree 0)")
        object.__setattr__(self, "degree", degree)
        if len(den) > 1 and len(num) > 1:
            gap = self.coprimality_gap()
            if gap <= EPS_RES:
                raise ValidationError(
                    f"numerator and denominator share a root (common factor, gap {gap:.3g})"
                )

    @classmethod
    def polynomial(cls, coeffs):
        return cls(tuple(complex(c) for c in coeffs))

    @property
    def is_polynomial(self):
        return len(self.denominator) == 1

    @cached_property
    def num(self):
        return np.array(self.numerator, dtype=complex)

    @cached_property
    def den(self):
        return np.array(self.denominator, dtype=complex)

    @cached_property
    def wronskian(self):
        """Ascending coefficients of ``N' D - N D'`` (trimmed)."""
        w = npoly.polysub(
            npoly.polymul(npoly.polyder(self.num), self.den),
            npoly.polymul(self.num, npoly.polyder(self.den)),
        )
        return _trim(w)

    def coprimality_gap(self):
        """Smallest relative size of ``|N|`` at a root of ``D``.

        Zero exactly when numerator and denominator have a common root.
        """
        den_roots = aberth(self.den)
        aw = np.abs(self.num)
        vals = np.abs(horner(self.num, den_roots))
        scale = horner(aw, np.maximum(1.0, np.abs(den_roots))).real
        return float(np.min(vals / scale))

    def _swapped(self):
        """Numerator and denominator of ``u -> f(1/u)`` (chart at infinity)."""
        d = self.degree
        return _pad(self.num, d + 1)[::-1], _pad(self.den, d + 1)[::-1]

    # -- pointwise ---------------------------------------------------------

    def __call__(self, z):
        return evaluate(self, z)

    def sderiv_array(self, z):
        """Spherical derivative at an array of finite points."""
        z = np.asarray(z, dtype=complex)
        n = horner(self.num, z)
        dd = horner(self.den, z)
        w = horner(self.wronskian, z)
        return np.abs(w) * (1.0 + np.abs(z) ** 2) / (np.abs(n) ** 2 + np.abs(dd) ** 2)

    def eval_array(self, z):
        """``f`` on an array of finite, non-pole points."""
        z = np.asarray(z, dtype=complex)
        if self.is_polynomial:
            return horner(self.num / self.den[0], z)
        return horner(self.num, z) / horner(self.den, z)

    def preimage_array(self, w):
        """All ``degree`` preimages of each finite value in ``w``.

        Returns an array of shape ``w.shape + (degree,)``.  Raises
        :class:`DegenerateEquation` if some ``w`` has a preimage at infinity.
        """
        w = np.asarray(w, dtype=complex)
        d = self.degree
        flat = w.ravel()
        rows = _pad(self.num, d + 1)[None, :] - flat[:, None] * _pad(self.den, d + 1)[None, :]
        lead = np.abs(rows[:, -1])
        if np.any(lead <= EPS_LEAD * np.max(np.abs(rows), axis=1)):
            raise DegenerateEquation("a value in the batch has a preimage at infinity")
        roots = aberth(rows)
        return roots.reshape(w.shape + (d,))

    def compose(self, inner):
        """The map ``self o inner``."""
        d = self.degree
        a = _pad(self.num, d + 1)
        b = _pad(self.den, d + 1)
        ng, dg = inner.num, inner.den
        num = np.zeros(1, dtype=complex)
        den = np.zeros(1, dtype=complex)
        for k in range(d + 1):
            term = npoly.polymul(npoly.polypow(ng, k), npoly.polypow(dg, d - k))
            num = npoly.polyadd(num, a[k] * term)
            den = npoly.polyadd(den, b[k] * term)
        if len(_trim(den)) == 1:
            num = num / _trim(den)[0]
            den = np.ones(1, dtype=complex)
        return RationalMap(tuple(num), tuple(den))

    @cached_property
    def critical_points(self):
        return critical_points(self)


def evaluate(fmap, z):
    """``f(z)`` on the Riemann sphere."""
    if z is INF:
        dn = len(fmap.numerator) - 1
        dd = len(fmap.denominator) - 1
        if dn > dd:
            return INF
        if dn < dd:
            return 0j
        return fmap.numerator[-1] / fmap.denominator[-1]
    z = complex(z)
    dval = complex(horner(fmap.den, z))
    nval = complex(horner(fmap.num, z))
    if dval == 0:
        return INF
    return nval / dval


def spherical_derivative(fmap, z):
    """``|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2)``, continuous on the whole sphere."""
    if z is INF:
        n, d = fmap._swapped()
        w = npoly.polysub(
            npoly.polymul(npoly.polyder(n), d), npoly.polymul(n, npoly.polyder(d))
        )
        w0 = w[0] if len(w) else 0.0
        return float(abs(w0) / (abs(n[0]) ** 2 + abs(d[0]) ** 2))
    return float(fmap.sderiv_array(complex(z)))


def preimages(fmap, w, eps_cluster=EPS_CLUSTER):
    """All solutions of ``f(z) = w`` with multiplicity.

    Solves ``N(z) - w D(z) = 0`` by Aberth iteration.  A drop in degree of
    that polynomial is reported as a root at :data:`INF` with the missing
    multiplicity.
    """
    d = fmap.degree
    if w is INF:
        poly = _pad(fmap.den, d + 1)
    else:
        poly = _pad(fmap.num, d + 1) - complex(w) * _pad(fmap.den, d + 1)
    trimmed = _trim(poly)
    if len(trimmed) == 1 and trimmed[0] == 0:
        raise DegenerateEquation(f"f(z) = {w!r} is satisfied identically")
    roots = cluster_roots(aberth(trimmed), eps_cluster) if len(trimmed) > 1 else []
    drop = d - (len(trimmed) - 1)
    if drop > 0:
        roots.append((INF, drop))
    residual = 0.0
    for r, _ in roots:
        residual = max(residual, chordal(evaluate(fmap, r), w))
    return PreimageSet(tuple(roots), float(residual))


def critical_points(fmap):
    """Critical points with multiplicity, including infinity when critical."""
    if fmap.degree < 2:
        raise ValidationError("critical points requested for a degree-1 map")
    w = fmap.wronskian
    out = []
    if len(w) > 1:
        out = cluster_roots(aberth(w))
    at_inf = 2 * fmap.degree - 2 - (len(w) - 1)
    if at_inf > 0:
        out.append((INF, at_inf))
    return out


def fixed_points(fmap):
    """Finite fixed points, i.e. roots of ``N(z) - z D(z)``."""
    poly = _trim(npoly.polysub(fmap.num, npoly.polymulx(fmap.den)))
    if len(poly) < 2:
        return []
    return [r for r, _ in cluster_roots(aberth(poly))]
