"""Atomic conformal measures, weighted backward sampling and transfer checks."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BasePointTooClose, CriticalBranch, PreconditionError, SeriesNotSummable
from .rational import chordal_array
from .rng import StreamBank
from .skew import DELTA_CRIT, DELTA_PCV, enumerate_tree, logsumexp
from .thermo import K_AVG, pressure_increments

SUMMABILITY_MARGIN = 1e-9


@dataclass
class AtomMeasure:
    """Normalised atoms of the measure built from the weighted preimage series.

    Flat arrays, ordered by depth then tree order.  ``parent`` indexes the
    atom one level up (-1 for depth 1) and ``symbol`` is the first letter of
    the atom's word.
    """

    words: list
    points: np.ndarray
    weights: np.ndarray
    depth: np.ndarray
    parent: np.ndarray
    symbol: np.ndarray
    t: float
    s: float
    base_point: complex
    n_max: int
    normalizer: float
    log_normalizer: float
    pressure: float
    tail_bound: float

    def level_mass(self, k):
        return float(self.weights[self.depth == k].sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# t={self.t:.17g}\n# s={self.s:.17g}\n# n_max={self.n_max}\n")
            fh.write(f"# log_normalizer={self.log_normalizer:.17g}\n")
            fh.write(f"# tail_bound={self.tail_bound:.17g}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["word", "re", "im", "weight"])
            for word, z, wt in zip(self.words, self.points, self.weights):
                w.writerow([".".join(str(s) for s in word), f"{z.real:.17g}",
                            f"{z.imag:.17g}", f"{wt:.17g}"])


def conformal_atoms(spec, xi, t, s, n_max, k_avg=K_AVG, margin=SUMMABILITY_MARGIN):
    """Atoms at every preimage up to depth ``n_max``.

    Each depth-``n`` atom ``x`` gets weight ``e^{-s n} |(f^n)'(x)|^{-t}``
    before normalisation; ``s`` must exceed the pressure estimate.
    """
    est = pressure_increments(spec, xi, t, n_max, k_avg)
    if s <= est.value + margin:
        raise SeriesNotSummable(
            f"s = {s} does not exceed the pressure estimate {est.value:.6g}"
        )
    tree = enumerate_tree(spec, xi, n_max)
    logw, pts, depth, symbol, words = [], [], [], [], []
    for k in range(1, n_max + 1):
        lv = tree.levels[k]
        logw.append(-s * k - t * lv.log_sderiv)
        pts.append(lv.points)
        depth.append(np.full(len(lv), k))
        symbol.append(lv.symbol)
        words.extend(tuple(int(c) for c in row) for row in tree.words(k))
    logw = np.concatenate(logw)
    log_norm = logsumexp(logw)
    weights = np.exp(logw - log_norm)
    ratio = np.exp(est.value - s)
    tail = ratio**n_max / (1.0 - ratio)
    parent = _flat_parents(tree, n_max)
    return AtomMeasure(
        words=words,
        points=np.concatenate(pts),
        weights=weights,
        depth=np.concatenate(depth),
        parent=parent,
        symbol=np.concatenate(symbol),
        t=float(t),
        s=float(s),
        base_point=complex(xi),
        n_max=n_max,
        normalizer=float(np.exp(log_norm)),
        log_normalizer=float(log_norm),
        pressure=est.value,
        tail_bound=float(tail),
    )


def _flat_parents(tree, n_max):
    """Parent of each atom as an index into the flat arrays (-1 at depth 1)."""
    out = [np.full(len(tree.levels[1]), -1)]
    start = 0
    for k in range(2, n_max + 1):
        out.append(tree.levels[k].parent + start)
        start += len(tree.levels[k - 1])
    return np.concatenate(out)


def quasi_invariance_defect(spec, measure):
    """Worst relative mismatch of the one-step reweighting identity.

    A depth-``k+1`` atom ``y`` whose word starts with ``i`` maps to its parent
    ``x = f_i(y)``; reweighting its mass by ``e^s |f_i'(y)|^t`` (spherical)
    must give back the parent's mass.
    """
    worst = 0.0
    child = np.nonzero(measure.parent >= 0)[0]
    for i, g in enumerate(spec.generators, 1):
        sel = child[measure.symbol[child] == i]
        if sel.size == 0:
            continue
        y = measure.points[sel]
        pushed = g.eval_array(y)
        par = measure.parent[sel]
        if np.max(chordal_array(pushed, measure.points[par])) > 1e-9:
            raise AssertionError("pushforward does not land on the parent atom")
        rew = measure.weights[sel] * np.exp(measure.s) * g.sderiv_array(y) ** measure.t
        rel = np.abs(rew - measure.weights[par]) / measure.weights[par]
        worst = max(worst, float(np.max(rel)))
    return worst


# ---------------------------------------------------------------------------
# Backward sampling


@dataclass
class OrbitSample:
    points: list
    words: list
    log_weights: list
    seed: int
    log_sderivs: list = field(default_factory=list)


def _crit_array(spec):
    return np.array(spec.crit_samples, dtype=complex)


def _sample_orbits(spec, starts, t, length, bank):
    """Vectorised weighted backward walks; one stream of ``bank`` per orbit.

    Returns ``(points, symbols, log_prob, log_sderiv)`` with shapes
    ``(M, length+1)``, ``(M, length)``, ``(M, length)``, ``(M, length)``.
    """
    m = starts.shape[0]
    crit = _crit_array(spec)
    pts = np.empty((m, length + 1), dtype=complex)
    syms = np.empty((m, length), dtype=np.int16)
    logp = np.empty((m, length))
    logd = np.empty((m, length))
    pts[:, 0] = starts
    gen_of = np.concatenate([np.full(g.degree, i) for i, g in enumerate(spec.generators, 1)])
    for k in range(length):
        z = pts[:, k]
        cand = np.concatenate([g.preimage_array(z) for g in spec.generators], axis=1)
        if crit.size:
            near = chordal_array(cand[:, :, None], crit[None, None, :]).min(axis=2)
            if np.min(near) <= DELTA_CRIT:
                raise CriticalBranch(f"backward step {k} passes within {DELTA_CRIT:g} of a critical point")
        ls = np.concatenate(
            [np.log(g.sderiv_array(cand[:, off:off + g.degree]))
             for g, off in zip(spec.generators, np.cumsum([0] + list(spec.degrees[:-1])))],
            axis=1,
        )
        lw = -t * ls
        lw -= lw.max(axis=1, keepdims=True)
        prob = np.exp(lw)
        prob /= prob.sum(axis=1, keepdims=True)
        cdf = np.cumsum(prob, axis=1)
        u = bank.random()
        pick = np.minimum((cdf < u[:, None]).sum(axis=1), cand.shape[1] - 1)
        rows = np.arange(m)
        pts[:, k + 1] = cand[rows, pick]
        syms[:, k] = gen_of[pick]
        logp[:, k] = np.log(prob[rows, pick])
        logd[:, k] = ls[rows, pick]
    return pts, syms, logp, logd


def sample_backward_orbit(spec, start, t, length, seed):
    """One backward orbit, branch probabilities proportional to ``|f'|^{-t}``."""
    start = complex(start)
    if spec.crit_samples and np.min(chordal_array(_crit_array(spec), start)) <= DELTA_CRIT:
        raise CriticalBranch("start point is within the critical margin")
    bank = StreamBank(seed, 1)
    pts, syms, logp, logd = _sample_orbits(spec, np.array([start]), t, length, bank)
    return OrbitSample(
        points=[complex(z) for z in pts[0]],
        words=[int(s) for s in syms[0]],
        log_weights=[float(v) for v in logp[0]],
        seed=int(seed),
        log_sderivs=[float(v) for v in logd[0]],
    )


# ---------------------------------------------------------------------------
# Transfer operator


def transfer_log_powers(spec, t, points, n):
    """``log L_t^j 1`` at ``points`` for ``j = 0..n``, shape ``(n+1, len(points))``.

    ``L_t g(y) = sum_i sum_{f_i(x) = y} |f_i'(x)|^{-t} g(x)`` is unrolled
    recursively: the powers at ``y`` come from the powers at its one-step
    preimages.
    """
    points = np.asarray(points, dtype=complex)
    out = np.zeros((n + 1, points.size))
    if n == 0:
        return out
    children, logw = [], []
    for g in spec.generators:
        x = g.preimage_array(points)
        children.append(x)
        logw.append(-t * np.log(g.sderiv_array(x)))
    children = np.concatenate(children, axis=1)
    logw = np.concatenate(logw, axis=1)
    fan = children.shape[1]
    sub = transfer_log_powers(spec, t, children.ravel(), n - 1)
    for j in range(1, n + 1):
        a = logw + sub[j - 1].reshape(points.size, fan)
        top = a.max(axis=1, keepdims=True)
        out[j] = top[:, 0] + np.log(np.exp(a - top).sum(axis=1))
    return out


@dataclass(frozen=True)
class TransferEstimate:
    value: float
    spread: float
    per_point: tuple


def transfer_operator_estimate(spec, xi_grid, t, n_power, k_avg=K_AVG):
    """Mean per-step log growth of ``L_t^j 1`` over a grid of base points."""
    grid = np.array([complex(z) for z in xi_grid])
    if grid.size < 32:
        raise PreconditionError("transfer check needs at least 32 base points")
    checks = np.array([spec.base_check(z) for z in grid])
    if np.any(checks <= DELTA_PCV):
        raise BasePointTooClose("a grid point is within the postcritical margin")
    logs = transfer_log_powers(spec, t, grid, n_power)
    k_avg = max(1, min(k_avg, n_power))
    inc = np.diff(logs[n_power - k_avg:], axis=0)
    per_point = inc.mean(axis=0)
    spread = float(np.ptp(per_point) + np.max(np.ptp(inc, axis=0)))
    return TransferEstimate(float(per_point.mean()), spread, tuple(float(v) for v in per_point))


def transfer_operator_check(spec, xi_grid, t, n_power, k_avg=K_AVG):
    return transfer_operator_estimate(spec, xi_grid, t, n_power, k_avg).value


# ---------------------------------------------------------------------------
# Birkhoff sums along sampled orbits

BURN_IN = 20


@dataclass
class CltReport:
    t: float
    n_block: int
    n_samples: int
    seed: int
    mean_rate: float
    sigma2: float
    skewness: float
    excess_kurtosis: float
    variance_ratio: float
    degenerate: bool

    def to_text(self):
        lines = []
        for k, v in self.__dict__.items():
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = f"{v:.17g}"
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def birkhoff_diagnostics(spec, t, n_block, n_samples, seed, start=None, burn_in=BURN_IN):
    """Block sums of ``log|f'|`` along weighted backward orbits.

    Orbits start at ``start`` (default: the first repelling fixed point of
    the generators) and discard ``burn_in`` steps.  Nothing here is
    thresholded.
    """
    if n_samples < 2:
        raise PreconditionError("need at least two samples")
    if n_block < 2:
        raise PreconditionError("block length must be at least 2")
    if start is None:
        from .geometry import repelling_seed

        start = repelling_seed(spec)
    bank = StreamBank(seed, n_samples)
    starts = np.full(n_samples, complex(start))
    _, _, _, logd = _sample_orbits(spec, starts, t, burn_in + n_block, bank)
    obs = logd[:, burn_in:]
    full = obs.sum(axis=1)
    half = obs[:, : n_block // 2].sum(axis=1)
    var_full = float(np.var(full))
    var_half = float(np.var(half))
    degenerate = var_full <= 1e-20 * max(1.0, float(np.mean(full)) ** 2)
    if degenerate:
        skew = kurt = ratio = 0.0
    else:
        skew = float(stats.skew(full))
        kurt = float(stats.kurtosis(full))
        ratio = (var_full / n_block) / (var_half / (n_block // 2)) - 1.0
    return CltReport(
        t=float(t),
        n_block=n_block,
        n_samples=n_samples,
        seed=int(seed),
        mean_rate=float(np.mean(full) / n_block),
        sigma2=var_full / n_block,
        skewness=skew,
        excess_kurtosis=kurt,
        variance_ratio=float(ratio),
        degenerate=bool(degenerate),
    )
