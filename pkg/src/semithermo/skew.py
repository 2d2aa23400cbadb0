"""Skew product bookkeeping: semigroup specs, words and preimage trees.

A word ``(w_1, ..., w_n)`` acts as ``f_{w_n} o ... o f_{w_1}``.  Going one
level deeper in a preimage tree prepends the new symbol, so a node
``(word, x)`` always satisfies ``f_word(x) == base_point``.
"""

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    BasePointTooClose,
    CriticalBranch,
    DepthExceeded,
    PreconditionError,
    ValidationError,
)
from .rational import INF, RationalMap, chordal_array

DELTA_PCV = 1e-6
DELTA_CRIT = 1e-6
PCV_DEPTH = 6
MAX_COMPOSE_DEPTH = 8
PRUNE_DEPTH = 8
PRUNE_THRESHOLD = 1e-14
NONPOLY_BOUND = 1e6


def escape_radius(generators):
    """Radius beyond which every generator at least doubles ``|z|``.

    ``max(4, 1 + max_i sum|c|)`` for monic-like generators, widened when a
    small leading coefficient needs more room: for ``|z| > R >= 1`` we have
    ``|p(z)| >= |z| (|a_d| R - sum_{k<d} |a_k|)``.
    """
    r = 4.0
    for g in generators:
        c = np.abs(g.num / g.den[0])
        r = max(r, 1.0 + float(c.sum()), (2.0 + float(c[:-1].sum())) / float(c[-1]))
    return r


@dataclass(frozen=True)
class SemigroupSpec:
    """Generators of a rational semigroup plus derived sample sets.

    Build with :meth:`from_generators`; the derived fields are excluded from
    equality and hashing so specs can key caches cheaply.
    """

    generators: tuple
    name: str = ""
    escape_radius: float = field(default=None, compare=False)
    crit_samples: tuple = field(default=(), compare=False, repr=False)
    pcv_samples: tuple = field(default=(), compare=False, repr=False)

    @classmethod
    def from_generators(cls, generators, name="", pcv_depth=PCV_DEPTH):
        gens = tuple(generators)
        if not gens:
            raise ValidationError("generator list is empty")
        for i, g in enumerate(gens, 1):
            if not isinstance(g, RationalMap):
                raise ValidationError(f"generator {i} is not a RationalMap")
            if g.degree < 2:
                raise ValidationError(
                    f"generator {i} has degree 1; degree-1 generators are not supported"
                )
        polynomial = all(g.is_polynomial for g in gens)
        radius = escape_radius(gens) if polynomial else None
        crit = []
        values = []
        for g in gens:
            for c, _ in g.critical_points:
                if c is INF:
                    continue
                crit.append(c)
                v = g(c)
                if v is not INF:
                    values.append(v)
        bound = radius if polynomial else NONPOLY_BOUND
        pcv = _forward_orbits(gens, np.array(values, dtype=complex), pcv_depth, bound)
        return cls(gens, name, radius, tuple(crit), tuple(complex(z) for z in pcv))

    @property
    def u(self):
        return len(self.generators)

    @property
    def degrees(self):
        return tuple(g.degree for g in self.generators)

    @property
    def is_polynomial(self):
        return all(g.is_polynomial for g in self.generators)

    def base_check(self, xi):
        """Chordal distance from ``xi`` to the postcritical samples."""
        if not self.pcv_samples:
            return 2.0
        return float(np.min(chordal_array(np.array(self.pcv_samples), complex(xi))))


def _forward_orbits(gens, values, depth, bound):
    """Images of ``values`` under all words of length ``0..depth``."""
    out = [values[np.abs(values) <= bound]]
    level = out[0]
    for _ in range(depth):
        nxt = []
        for g in gens:
            with np.errstate(all="ignore"):
                img = g.eval_array(level)
            keep = np.isfinite(img) & (np.abs(img) <= bound)
            nxt.append(img[keep])
        level = np.concatenate(nxt) if nxt else level[:0]
        if level.size > 20000:
            level = np.unique(np.round(level, 12))
        out.append(level)
    return np.concatenate(out)


def semihyperbolic_family(f1, b, d, lam, name=""):
    """The pair ``(f1, lam (z - b)^d + b)``.

    For a semi-hyperbolic ``f1`` with connected Julia set, ``b`` interior to
    its filled Julia set and small nonzero ``lam`` this family yields
    semi-hyperbolic semigroups with the open set condition (see README).
    """
    from numpy.polynomial import polynomial as npoly

    g = npoly.polypow(np.array([-b, 1.0], dtype=complex), d) * lam
    g[0] += b
    return SemigroupSpec.from_generators(
        (f1, RationalMap.polynomial(g)), name=name or f"family(lam={lam})"
    )


Word = tuple


def compose_word(spec, word, max_depth=MAX_COMPOSE_DEPTH):
    """Coefficients of ``f_word = f_{w_n} o ... o f_{w_1}``.

    Symbols are 1-based as in the generator list.
    """
    word = tuple(word)
    if not word:
        raise PreconditionError("the empty word has no composition")
    if len(word) > max_depth:
        raise DepthExceeded(f"word length {len(word)} exceeds {max_depth}")
    result = spec.generators[word[0] - 1]
    for s in word[1:]:
        result = spec.generators[s - 1].compose(result)
    return result


@dataclass(frozen=True)
class PruneOpts:
    enabled: bool = False
    t_ref: float = None
    threshold: float = PRUNE_THRESHOLD


@dataclass
class TreeLevel:
    """One level of a preimage tree, stored as parallel arrays.

    ``symbol[k]`` is the symbol prepended when node ``k`` was created and
    ``parent[k]`` indexes the node one level up.
    """

    points: np.ndarray
    log_sderiv: np.ndarray
    symbol: np.ndarray
    parent: np.ndarray
    step_log_sderiv: np.ndarray

    def __len__(self):
        return self.points.shape[0]


@dataclass
class PreimageTree:
    base_point: complex
    base_check: float
    depth: int
    levels: list
    pruned_mass: float = 0.0
    pruned_count: int = 0

    def words(self, level):
        """Integer array ``(N, level)`` of the words at ``level``."""
        n = len(self.levels[level])
        out = np.zeros((n, level), dtype=np.int16)
        idx = np.arange(n)
        for k in range(level, 0, -1):
            lv = self.levels[k]
            out[:, level - k] = lv.symbol[idx]
            idx = lv.parent[idx]
        return out

    def nodes(self, level):
        """List of ``(word, point, log_sderiv)`` at ``level``."""
        lv = self.levels[level]
        words = self.words(level)
        return [
            (tuple(int(s) for s in words[k]), complex(lv.points[k]), float(lv.log_sderiv[k]))
            for k in range(len(lv))
        ]

    def level_sizes(self):
        return [len(lv) for lv in self.levels]

    @property
    def max_step_log_sderiv(self):
        return max(float(np.max(lv.step_log_sderiv)) for lv in self.levels[1:])


def _check_critical(spec, points, level):
    if not spec.crit_samples or points.size == 0:
        return
    crit = np.array(spec.crit_samples, dtype=complex)
    dist = chordal_array(points[:, None], crit[None, :])
    if np.min(dist) <= DELTA_CRIT:
        k = int(np.argmin(np.min(dist, axis=1)))
        raise CriticalBranch(
            f"tree point {points[k]:.6g} at level {level} lies within "
            f"{DELTA_CRIT:g} of a critical point"
        )


def _expand(spec, level_points, level_log):
    """Children of one level: (points, log_sderiv, symbol, parent, step)."""
    pts, logs, syms, parents, steps = [], [], [], [], []
    idx = np.arange(level_points.shape[0])
    for i, g in enumerate(spec.generators, 1):
        roots = g.preimage_array(level_points)
        child = roots.reshape(-1)
        with np.errstate(divide="ignore"):
            step = np.log(g.sderiv_array(child))
        pts.append(child)
        steps.append(step)
        logs.append(np.repeat(level_log, g.degree) + step)
        syms.append(np.full(child.shape, i, dtype=np.int16))
        parents.append(np.repeat(idx, g.degree))
    # order: parent-major, then generator, then branch
    pts = np.concatenate(pts)
    logs = np.concatenate(logs)
    syms = np.concatenate(syms)
    parents = np.concatenate(parents)
    steps = np.concatenate(steps)
    order = np.argsort(parents * (spec.u + 1) + syms, kind="stable")
    return pts[order], logs[order], syms[order], parents[order], steps[order]


def enumerate_tree(spec, xi, n, prune=None):
    """Preimage tree of depth ``n`` rooted at ``xi``.

    Trees are cached by ``(spec, xi, n, prune)``; treat the result as
    read-only.
    """
    if prune is None:
        prune = PruneOpts()
    if n < 1:
        raise PreconditionError("tree depth must be >= 1")
    if xi is INF:
        raise PreconditionError("base point must be finite")
    return _enumerate_cached(spec, complex(xi), int(n), prune)


@lru_cache(maxsize=24)
def _enumerate_cached(spec, xi, n, prune):
    check = spec.base_check(xi)
    if check <= DELTA_PCV:
        raise BasePointTooClose(
            f"base point {xi} is within {check:.3g} (chordal) of the postcritical set"
        )
    if prune.enabled and prune.t_ref is None:
        raise PreconditionError("pruning needs a reference parameter t_ref")
    root = TreeLevel(
        points=np.array([xi]),
        log_sderiv=np.zeros(1),
        symbol=np.zeros(1, dtype=np.int16),
        parent=np.zeros(1, dtype=np.int64),
        step_log_sderiv=np.zeros(1),
    )
    levels = [root]
    pruned_mass = 0.0
    pruned_count = 0
    for k in range(1, n + 1):
        prev = levels[-1]
        pts, logs, syms, parents, steps = _expand(spec, prev.points, prev.log_sderiv)
        _check_critical(spec, pts, k)
        if prune.enabled and prune.t_ref > 0:
            logw = -prune.t_ref * logs
            top = np.max(logw)
            keep = logw >= top + np.log(prune.threshold)
            if not np.all(keep):
                w = np.exp(logw - top)
                pruned_mass += float(w[~keep].sum() / w.sum())
                pruned_count += int(np.count_nonzero(~keep))
                pts, logs, syms, parents, steps = (
                    a[keep] for a in (pts, logs, syms, parents, steps)
                )
        levels.append(TreeLevel(pts, logs, syms, parents, steps))
    return PreimageTree(xi, check, n, levels, pruned_mass, pruned_count)


def logsumexp(a):
    """``log(sum(exp(a)))`` with a max shift.

    ``np.sum`` uses pairwise summation over the contiguous array, so the
    reduction order, and hence the result, depends only on the input order.
    """
    a = np.ascontiguousarray(a, dtype=float)
    if a.size == 0:
        return -np.inf
    top = float(np.max(a))
    if not np.isfinite(top):
        return top
    return top + float(np.log(np.sum(np.exp(a - top))))


def tree_weight_sum(tree, t, level):
    """``log sum_x |(f^n)'(x)|^{-t}`` over the nodes at ``level``."""
    if level > tree.depth or level < 0:
        raise PreconditionError(f"level {level} outside 0..{tree.depth}")
    return logsumexp(-t * tree.levels[level].log_sderiv)


def all_words(u, n):
    """Every word of length ``n`` over ``1..u`` in lexicographic order."""
    return list(itertools.product(range(1, u + 1), repeat=n))


BASE_CANDIDATES = (1.0, -1.0, 1.3, 1.5, 0.7, 1.1 + 0.4j, 0.3 + 1.2j, -0.6 + 0.9j, 2.5)


def default_base_points(spec, count=2, margin=1e-2):
    """First ``count`` candidates that keep ``margin`` (chordal) from the
    postcritical and critical samples."""
    crit = np.array(spec.crit_samples, dtype=complex)
    out = []
    for z in BASE_CANDIDATES:
        if spec.base_check(z) <= margin:
            continue
        if crit.size and np.min(chordal_array(crit, complex(z))) <= margin:
            continue
        out.append(complex(z))
        if len(out) == count:
            return out
    raise BasePointTooClose("no default base point clears the postcritical samples")
