"""Julia set renders, box counting, open set condition checks, shrink rates."""

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import stats
from scipy.spatial import cKDTree

from .errors import (
    NoRepellingSeed,
    NotPolynomial,
    PreconditionError,
    ScaleRangeSaturated,
)
from .rational import fixed_points, horner, spherical_derivative
from .rng import SplitMix64, StreamBank

BURN_IN = 100
WALKERS = 1024
DE_BAILOUT = 1e8
TOUCH_TOL = 1e-4


@dataclass
class GridImage:
    """Pixel grid over ``bbox = (re_min, re_max, im_min, im_max)``.

    Row 0 is the top (largest imaginary part).  ``escape`` is only set for
    fiber renders.
    """

    bbox: tuple
    width: int
    height: int
    occupancy: np.ndarray
    escape: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise PreconditionError("grid must be at least 16x16 pixels")
        a, b, c, d = self.bbox
        if not (b > a and d > c):
            raise PreconditionError(f"degenerate bounding box {self.bbox}")

    @property
    def pixel_size(self):
        a, b, c, d = self.bbox
        return max((b - a) / self.width, (d - c) / self.height)

    def pixel_centres(self, rows=None, cols=None):
        a, b, c, d = self.bbox
        rows = np.arange(self.height) if rows is None else np.asarray(rows)
        cols = np.arange(self.width) if cols is None else np.asarray(cols)
        re = a + (cols + 0.5) * (b - a) / self.width
        im = d - (rows + 0.5) * (d - c) / self.height
        return re, im

    def occupied_points(self):
        rows, cols = np.nonzero(self.occupancy)
        re, im = self.pixel_centres(rows, cols)
        return re + 1j * im

    def to_pixel(self, z):
        """Row and column indices of points (may fall outside the grid)."""
        a, b, c, d = self.bbox
        z = np.asarray(z)
        col = np.floor((z.real - a) / (b - a) * self.width).astype(np.int64)
        row = np.floor((d - z.imag) / (d - c) * self.height).astype(np.int64)
        return row, col

    def pgm_bytes(self, values=None):
        """Binary PGM (P5); occupied pixels are black unless ``values`` given."""
        if values is None:
            values = np.where(self.occupancy, 0, 255).astype(np.uint8)
        bbox = ",".join(f"{v:.17g}" for v in self.bbox)
        header = f"P5\n# bbox {bbox}\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + np.ascontiguousarray(values, dtype=np.uint8).tobytes()

    def escape_pgm_bytes(self):
        if self.escape is None:
            raise PreconditionError("image carries no escape times")
        top = max(1, int(self.escape.max()))
        shade = 255 - np.round(255.0 * self.escape / top).astype(np.int64)
        shade = np.where(self.occupancy, 0, np.clip(shade, 1, 255))
        return self.pgm_bytes(shade.astype(np.uint8))

    def write_pgm(self, path):
        with open(path, "wb") as fh:
            fh.write(self.pgm_bytes())

    def write_png(self, path):
        from PIL import Image

        Image.fromarray(np.where(self.occupancy, 0, 255).astype(np.uint8)).save(path)


def read_pgm(path):
    """Read a P5 file written by :meth:`GridImage.pgm_bytes`."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    bbox = None
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise PreconditionError(f"{path}: truncated PGM header")
        tok = m.group(1)
        pos = m.end()
        if tok.startswith(b"#"):
            parts = tok[1:].split()
            if parts and parts[0] == b"bbox":
                bbox = tuple(float(v) for v in parts[1].split(b","))
            continue
        tokens.append(tok)
    if tokens[0] != b"P5":
        raise PreconditionError(f"{path}: not a binary PGM")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1: pos + 1 + width * height], dtype=np.uint8)
    pixels = pixels.reshape(height, width)
    if bbox is None:
        bbox = (0.0, float(width), 0.0, float(height))
    return GridImage(bbox, width, height, pixels == 0)


# ---------------------------------------------------------------------------
# Global Julia set by inverse iteration


def repelling_seed(spec):
    """First repelling fixed point, scanning generators in order."""
    for g in spec.generators:
        pts = sorted(fixed_points(g), key=lambda z: (z.real, z.imag))
        for z in pts:
            if spherical_derivative(g, z) > 1.0 + 1e-9:
                return z
    raise NoRepellingSeed("no generator has a repelling fixed point")


def chaos_game(spec, n_points, seed, walkers=WALKERS, burn_in=BURN_IN):
    """Points of the global Julia set by random inverse iteration.

    ``walkers`` independent chains start at the repelling seed; each step
    picks a generator and then one of its preimage branches uniformly.  The
    first ``burn_in`` steps of every chain are discarded.  Output order is
    step-major, walker-minor.
    """
    z0 = repelling_seed(spec)
    walkers = max(1, min(walkers, n_points))
    steps = math.ceil(n_points / walkers)
    bank = StreamBank(seed, walkers)
    z = np.full(walkers, complex(z0))
    out = np.empty((steps, walkers), dtype=complex)
    u = spec.u
    for k in range(burn_in + steps):
        gen = np.minimum((bank.random() * u).astype(np.int64), u - 1)
        branch_u = bank.random()
        nxt = np.empty_like(z)
        for i, g in enumerate(spec.generators):
            sel = np.nonzero(gen == i)[0]
            if sel.size == 0:
                continue
            roots = g.preimage_array(z[sel])
            b = np.minimum((branch_u[sel] * g.degree).astype(np.int64), g.degree - 1)
            nxt[sel] = roots[np.arange(sel.size), b]
        z = nxt
        if k >= burn_in:
            out[k - burn_in] = z
    return out.ravel()[:n_points]


def julia_base_points(spec, count, seed, margin=1e-3):
    """``count`` chaos-game points of J(G) clearing the postcritical margin."""
    pts = chaos_game(spec, 4 * count, seed)
    ok = [complex(z) for z in pts if spec.base_check(z) > margin]
    if len(ok) < count:
        raise PreconditionError("too few render points clear the postcritical margin")
    return ok[:count]


def auto_bbox(points, pad=0.05):
    re, im = points.real, points.imag
    cx, cy = 0.5 * (re.max() + re.min()), 0.5 * (im.max() + im.min())
    half = 0.5 * max(re.max() - re.min(), im.max() - im.min()) * (1 + 2 * pad)
    half = max(half, 1e-6)
    return (cx - half, cx + half, cy - half, cy + half)


def rasterise(points, bbox, width, height):
    img = GridImage(tuple(bbox), width, height, np.zeros((height, width), dtype=bool))
    row, col = img.to_pixel(points)
    ok = (row >= 0) & (row < height) & (col >= 0) & (col < width)
    img.occupancy[row[ok], col[ok]] = True
    return img


def render_global(spec, iterations, seed, grid=(512, 512), bbox=None):
    """Occupancy image of the global Julia set from ``iterations`` plotted points."""
    pts = chaos_game(spec, iterations, seed)
    if bbox is None:
        bbox = auto_bbox(pts)
    img = rasterise(pts, bbox, grid[0], grid[1])
    img.meta.update(kind="global", iterations=iterations, seed=int(seed))
    return img


# ---------------------------------------------------------------------------
# Fiber Julia sets by escape time


class WordRule:
    """Infinite word prescribing which generator acts at each step.

    ``const:i``, ``periodic:1212`` (digits, or comma separated symbols) or
    ``random`` (uniform symbols from a SplitMix64 stream seeded by ``seed``).
    """

    def __init__(self, kind, pattern=(), seed=0):
        self.kind = kind
        self.pattern = tuple(pattern)
        self.seed = int(seed)

    @classmethod
    def parse(cls, text, seed=0):
        text = text.strip()
        if text == "random" or text.startswith("random:"):
            s = text.split(":", 1)[1] if ":" in text else seed
            return cls("random", (), int(s))
        kind, _, body = text.partition(":")
        if kind in ("const", "constant"):
            return cls("periodic", (int(body),))
        if kind == "periodic":
            syms = body.split(",") if "," in body else list(body)
            return cls("periodic", tuple(int(s) for s in syms))
        raise PreconditionError(f"unknown word rule {text!r}")

    def symbols(self, n, u):
        if self.kind == "random":
            r = SplitMix64(self.seed).random_array(n)
            return 1 + np.minimum((r * u).astype(np.int64), u - 1)
        if not self.pattern or any(not 1 <= s <= u for s in self.pattern):
            raise PreconditionError(f"word rule symbols must lie in 1..{u}")
        reps = math.ceil(n / len(self.pattern))
        return np.tile(np.array(self.pattern, dtype=np.int64), reps)[:n]

    def __repr__(self):
        if self.kind == "random":
            return f"random:{self.seed}"
        return "periodic:" + ",".join(str(s) for s in self.pattern)


def _default_threads():
    env = os.environ.get("SEMITHERMO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _fiber_chunk(polys, derivs, symbols, z, radius, max_iter, pixel):
    n = z.size
    escape = np.full(n, max_iter, dtype=np.int64)
    dz = np.ones(n, dtype=complex)
    live = np.arange(n)
    de = np.full(n, np.inf)
    zl = z.copy()
    for k in range(max_iter):
        if live.size == 0:
            break
        s = symbols[k] - 1
        dz[live] = horner(derivs[s], zl[live]) * dz[live]
        zl[live] = horner(polys[s], zl[live])
        mag = np.abs(zl[live])
        new_esc = (mag > radius) & (escape[live] == max_iter)
        escape[live[new_esc]] = k + 1
        done = mag > DE_BAILOUT
        if np.any(done):
            idx = live[done]
            m = mag[done]
            de[idx] = m * np.log(m) / np.abs(dz[idx])
            live = live[~done]
    # escaped but not yet at the bailout: use the current iterate
    tail = live[escape[live] < max_iter]
    if tail.size:
        m = np.abs(zl[tail])
        de[tail] = m * np.log(m) / np.abs(dz[tail])
    occupied = (escape == max_iter) | (de < pixel)
    return escape, occupied


def render_fiber(spec, word_rule, grid=(512, 512), bbox=None, max_iter=200, threads=None):
    """Escape-time image of the fiber Julia set for one infinite word.

    A pixel is occupied when its centre never leaves the escape disc, or
    when the Green-function distance estimate ``|z_n| log|z_n| / |z_n'|``
    is below one pixel.
    """
    if not spec.is_polynomial:
        raise NotPolynomial("fiber renders need polynomial generators")
    if isinstance(word_rule, str):
        word_rule = WordRule.parse(word_rule)
    radius = spec.escape_radius
    if bbox is None:
        r = min(radius, 2.5)
        bbox = (-r, r, -r, r)
    width, height = grid
    img = GridImage(tuple(bbox), width, height, np.zeros((height, width), dtype=bool))
    polys = [g.num / g.den[0] for g in spec.generators]
    derivs = [npoly.polyder(p) for p in polys]
    symbols = word_rule.symbols(max_iter, spec.u)
    threads = threads or _default_threads()
    chunks = np.array_split(np.arange(height), max(1, min(threads * 4, height)))

    def work(rows):
        re, im = img.pixel_centres(rows, None)
        z = (re[None, :] + 1j * im[:, None]).ravel()
        return _fiber_chunk(polys, derivs, symbols, z, radius, max_iter, img.pixel_size)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(work, chunks))
    escape = np.empty((height, width), dtype=np.int64)
    for rows, (esc, occ) in zip(chunks, results):
        escape[rows] = esc.reshape(rows.size, width)
        img.occupancy[rows] = occ.reshape(rows.size, width)
    img.escape = escape
    img.meta.update(kind="fiber", word_rule=repr(word_rule), max_iter=max_iter)
    return img


def non_escaping(img):
    return img.escape == img.meta.get("max_iter", img.escape.max())


# ---------------------------------------------------------------------------
# Box counting


@dataclass(frozen=True)
class BoxFit:
    slope: float
    r2: float
    scales: tuple
    counts: tuple

    def __iter__(self):
        return iter((self.slope, self.r2))


IMAGE_FINEST_PIXELS = 4
GRID_SHIFTS = ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5))


def _default_k_range(extent, finest):
    # the coarsest box may exceed extent / 8 by a few percent, so a set
    # of extent just under a power of two keeps its coarsest scale
    k_lo = math.ceil(math.log2(8.0 / extent) - 0.07)
    k_hi = math.floor(math.log2(1.0 / finest) + 1e-9)
    return range(k_lo, k_hi + 1)


def box_counts(pts, origin, k, shifts=GRID_SHIFTS):
    """Occupied ``2^-k`` boxes, averaged over half-box grid shifts."""
    eps = 2.0 ** (-k)
    x = (pts.real - origin.real) / eps
    y = (pts.imag - origin.imag) / eps
    total = 0
    for sx, sy in shifts:
        cells = np.stack([np.floor(x + sx), np.floor(y + sy)], axis=1).astype(np.int64)
        total += np.unique(cells, axis=0).shape[0]
    return total / len(shifts)


def box_dimension(cloud, k_range=None, origin=None, shifts=GRID_SHIFTS):
    """Least-squares slope of ``log N(2^-k)`` against ``k log 2``.

    ``cloud`` is a :class:`GridImage` (occupied pixel centres) or an array of
    complex points.  Box grids are anchored at ``origin`` (the bounding box
    corner for images) and ``N`` is averaged over the grid ``shifts``, which
    damps the staircase that a fixed grid produces on Cantor-like sets.
    When the count grows by less than 5% between the two finest scales,
    both are dropped.

    The default scales run from an eighth of the extent down to four
    pixels; finer boxes mostly measure how thick the rasterised set is.
    For point clouds the finest box is ``extent / min(1024, sqrt(N) / 2)``
    so that a uniform planar sample still fills it.
    """
    if isinstance(cloud, GridImage):
        pts = cloud.occupied_points()
        a, b, c, d = cloud.bbox
        if origin is None:
            origin = complex(a, c)
        if k_range is None:
            k_range = _default_k_range(max(b - a, d - c), IMAGE_FINEST_PIXELS * cloud.pixel_size)
    else:
        pts = np.asarray(cloud, dtype=complex).ravel()
        if pts.size == 0:
            raise ScaleRangeSaturated("empty point cloud")
        if origin is None:
            origin = complex(pts.real.min(), pts.imag.min())
        if k_range is None:
            extent = max(np.ptp(pts.real), np.ptp(pts.imag), 1e-12)
            cells = min(2.0**10, 0.5 * math.sqrt(pts.size))
            k_range = _default_k_range(extent, extent / cells)
    ks = sorted(int(k) for k in k_range)
    if pts.size == 0:
        raise ScaleRangeSaturated("no occupied pixels")
    counts = [box_counts(pts, complex(origin), k, shifts) for k in ks]
    if len(counts) >= 2 and counts[-1] < 1.05 * counts[-2]:
        ks, counts = ks[:-2], counts[:-2]
    if len(ks) < 4:
        raise ScaleRangeSaturated(f"only {len(ks)} usable dyadic scales (need 4)")
    if any(c2 <= c1 for c1, c2 in zip(counts, counts[1:])):
        raise ScaleRangeSaturated(f"box counts do not grow across scales: {counts}")
    x = np.array(ks, dtype=float) * math.log(2.0)
    y = np.log(np.array(counts, dtype=float))
    fit = stats.linregress(x, y)
    return BoxFit(float(fit.slope), float(fit.rvalue**2), tuple(ks), tuple(counts))


# ---------------------------------------------------------------------------
# Open set condition


def _sphere(z):
    z = np.asarray(z, dtype=complex).ravel()
    r2 = np.abs(z) ** 2
    return np.stack([2 * z.real, 2 * z.imag, r2 - 1.0], axis=1) / (1.0 + r2)[:, None]


def _closest_pair(a, b):
    """Indices and chordal distance of the closest pair between two clouds."""
    tree = cKDTree(_sphere(b))
    dist, j = tree.query(_sphere(a))
    i = int(np.argmin(dist))
    # sphere of radius 1 has chordal diameter 2, matching the chordal metric
    return i, int(j[i]), float(dist[i])


@dataclass
class OscReport:
    containment_margin: float
    disjointness_margin: float
    closure_touch_points: list
    verdict: str
    overlap_depth: float = 0.0
    min_separation: float = 0.0
    density_condition: str = "automatic for round discs"
    disc: tuple = ()

    def to_text(self):
        pts = ";".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in self.closure_touch_points)
        lines = [
            f"verdict={self.verdict}",
            f"containment_margin={self.containment_margin:.17g}",
            f"disjointness_margin={self.disjointness_margin:.17g}",
            f"overlap_depth={self.overlap_depth:.17g}",
            f"min_separation={self.min_separation:.17g}",
            f"closure_touch_points={pts}",
            f"density_condition={self.density_condition}",
            "disc=" + ",".join(f"{v:.17g}" for v in self.disc),
        ]
        return "\n".join(lines) + "\n"


def _refine_touch(g1, g2, centre, radius, th1, th2, step, rounds=60, m=33):
    """Zoom on boundary angles to locate where two preimage curves meet."""
    best = None
    for _ in range(rounds):
        a1 = th1 + step * np.linspace(-2, 2, m)
        a2 = th2 + step * np.linspace(-2, 2, m)
        p1 = g1.preimage_array(centre + radius * np.exp(1j * a1))
        p2 = g2.preimage_array(centre + radius * np.exp(1j * a2))
        i, j, dist = _closest_pair(p1.ravel(), p2.ravel())
        best = (p1.ravel()[i], p2.ravel()[j], dist)
        th1 = a1[i // p1.shape[1]]
        th2 = a2[j // p2.shape[1]]
        step *= 4.0 / (m - 1)
        if step < 1e-16 or dist == 0.0:
            break
    return best


def osc_check(spec, centre, radius, n_boundary=1024, n_interior=4096, seed=0):
    """Numerical check of the first two open set conditions for a round disc.

    * containment: every sampled preimage of the disc lies strictly inside
      it (signed distance to the circle, positive inside);
    * disjointness: no interior sample of ``f_i^{-1}(U)`` is mapped into
      ``U`` by another generator.  If one is, the margin is minus the deepest
      such overlap; otherwise it is the smallest chordal separation between
      the preimage clouds after zooming in on the closest boundary pair.

    The density condition holds for any disc and is not sampled.
    """
    centre = complex(centre)
    radius = float(radius)
    if radius <= 0:
        raise PreconditionError("disc radius must be positive")
    theta = 2 * np.pi * (np.arange(n_boundary) + 0.5) / n_boundary
    bnd = centre + radius * np.exp(1j * theta)
    rng = SplitMix64(seed)
    u = rng.random_array(2 * n_interior)
    inner = centre + radius * np.sqrt(u[:n_interior]) * np.exp(2j * np.pi * u[n_interior:])

    pre_b = [g.preimage_array(bnd) for g in spec.generators]
    pre_i = [g.preimage_array(inner) for g in spec.generators]
    containment = min(
        float(np.min(radius - np.abs(np.concatenate([pb.ravel(), pi.ravel()]) - centre)))
        for pb, pi in zip(pre_b, pre_i)
    )

    overlap = 0.0
    for i, pi in enumerate(pre_i):
        for j, g in enumerate(spec.generators):
            if i == j:
                continue
            depth = radius - np.abs(g.eval_array(pi.ravel()) - centre)
            overlap = max(overlap, float(np.max(depth)))

    touches = []
    separation = math.inf
    step = 2 * np.pi / n_boundary
    for i in range(spec.u):
        for j in range(i + 1, spec.u):
            ci = np.concatenate([pre_b[i].ravel(), pre_i[i].ravel()])
            cj = np.concatenate([pre_b[j].ravel(), pre_i[j].ravel()])
            sep = _closest_pair(ci, cj)[2]
            bi, bj, _ = _closest_pair(pre_b[i].ravel(), pre_b[j].ravel())
            z1, z2, d = _refine_touch(
                spec.generators[i], spec.generators[j], centre, radius,
                theta[bi // pre_b[i].shape[1]], theta[bj // pre_b[j].shape[1]], step,
            )
            sep = min(sep, d)
            separation = min(separation, sep)
            if d < TOUCH_TOL:
                touches.append(0.5 * (z1 + z2))
    if spec.u == 1:
        separation = math.inf
    disjoint = -overlap if overlap > 0 else separation
    verdict = "pass" if containment > 0 and disjoint >= 0 else "fail"
    return OscReport(
        containment_margin=containment,
        disjointness_margin=disjoint,
        closure_touch_points=touches,
        verdict=verdict,
        overlap_depth=overlap,
        min_separation=separation,
        disc=(centre.real, centre.imag, radius),
    )


# ---------------------------------------------------------------------------
# Exponential shrinking


@dataclass(frozen=True)
class ShrinkFit:
    alpha_hat: float
    c_hat: float
    r2: float
    diameters: tuple

    def __iter__(self):
        return iter((self.alpha_hat, self.c_hat, self.r2))


def shrink_rate(spec, xi, radius_r, n_max, n_samples=64):
    """Fit ``diam <= C exp(-alpha k)`` for pulled-back discs around ``xi``.

    Each pulled-back component is represented by the preimage of the disc
    centre and a ring of boundary samples; every boundary sample follows the
    branch whose centre preimage is nearest.
    """
    if n_max < 2:
        raise ScaleRangeSaturated("need at least two depths to fit a rate")
    xi = complex(xi)
    if spec.pcv_samples:
        gap = float(np.min(np.abs(np.array(spec.pcv_samples) - xi)))
        if gap <= 4 * radius_r:
            raise PreconditionError(
                f"base point is {gap:.3g} from the postcritical samples; need > 4r"
            )
    centres = np.array([xi])
    ring = xi + radius_r * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)[None, :]
    diams = []
    for _ in range(n_max):
        new_c, new_r = [], []
        for g in spec.generators:
            cr = g.preimage_array(centres)            # (N, d)
            rr = g.preimage_array(ring)               # (N, M, d)
            dist = np.abs(rr[:, :, None, :] - cr[:, None, :, None])  # (N, M, d_c, d_r)
            pick = np.argmin(dist, axis=3)            # (N, M, d_c)
            follow = np.take_along_axis(rr, pick, axis=2)  # (N, M, d_c)
            new_c.append(cr.reshape(-1))
            new_r.append(np.transpose(follow, (0, 2, 1)).reshape(-1, ring.shape[1]))
        centres = np.concatenate(new_c)
        ring = np.concatenate(new_r, axis=0)
        span = np.abs(ring[:, :, None] - ring[:, None, :]).max(axis=(1, 2))
        diams.append(float(span.max()))
    k = np.arange(1, n_max + 1, dtype=float)
    fit = stats.linregress(k, np.log(diams))
    return ShrinkFit(float(-fit.slope), float(math.exp(fit.intercept)), float(fit.rvalue**2), tuple(diams))
