"""Command-line front end.

Every subcommand writes its artifacts plus ``manifest.json`` into ``--out``.
The manifest lists the inputs, seed, tool version and the SHA-256 of each
artifact, and carries no timestamps, so equal inputs give equal bytes.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry, measures, multifractal, thermo
from .errors import ParseError, PreconditionError, SemithermoError, ValidationError
from .rational import RationalMap
from .skew import SemigroupSpec, default_base_points

MANIFEST = "manifest.json"
DEFAULT_T_GRID = "0:2.4:13"
DEFAULT_Q_GRID = "0,0.25,0.5,0.75,1"
TOLERANCE_KEYS = {"tol_t", "k_avg"}


# ---------------------------------------------------------------------------
# Spec files


def _coeff(value, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        return complex(value[0], value[1])
    raise ValidationError(f"{where}: coefficient must be a number or [re, im], got {value!r}")


def spec_from_dict(data):
    """Build a :class:`SemigroupSpec` from the decoded JSON object."""
    if not isinstance(data, dict):
        raise ValidationError("spec must be a JSON object")
    gens = data.get("generators")
    if not isinstance(gens, list):
        raise ValidationError("spec needs a 'generators' list")
    if not gens:
        raise ValidationError("generator list is empty")
    maps = []
    for i, g in enumerate(gens, 1):
        if not isinstance(g, dict) or "num" not in g:
            raise ValidationError(f"generator {i} needs a 'num' coefficient list")
        num = [_coeff(c, f"generator {i} num") for c in g["num"]]
        den = [_coeff(c, f"generator {i} den") for c in g.get("den", [1])]
        try:
            maps.append(RationalMap(num, den))
        except ValueError as exc:
            raise ValidationError(f"generator {i}: {exc}") from None
    return SemigroupSpec.from_generators(maps, name=str(data.get("name", "")))


def parse_spec(path):
    """Read and validate a JSON semigroup spec file."""
    text = Path(path).read_bytes()
    try:
        text = text.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc.reason})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None
    return spec_from_dict(data)


# ---------------------------------------------------------------------------
# Argument helpers


def parse_complex(text):
    text = text.strip().replace(" ", "").replace("i", "j")
    return complex(text)


def parse_grid(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 512x512, got {text!r}")


def parse_floats(text, count=None):
    vals = [float(v) for v in text.split(",") if v.strip()]
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma separated numbers")
    return vals


def parse_range_list(text):
    """``a:b:n`` (inclusive linspace) or a comma separated list."""
    if ":" in text:
        a, b, n = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(n))]
    return parse_floats(text)


def parse_tolerance(text):
    key, sep, val = text.partition("=")
    if not sep or key not in TOLERANCE_KEYS:
        raise argparse.ArgumentTypeError(
            f"tolerance must be KEY=VALUE with KEY in {sorted(TOLERANCE_KEYS)}"
        )
    return key, float(val)


def fmt(v):
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunConfig:
    subcommand: str
    spec_path: str
    output_dir: Path
    seed: int
    depth: int
    threads: int
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def tol_t(self):
        return self.tolerances.get("tol_t", thermo.TOL_T)

    @property
    def k_avg(self):
        return int(self.tolerances.get("k_avg", thermo.K_AVG))


def _threads(arg):
    if arg:
        return arg
    env = os.environ.get("SEMITHERMO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _base_points(spec, cfg):
    xi = cfg.params.get("xi")
    xi_alt = cfg.params.get("xi_alt")
    auto = default_base_points(spec, 2)
    return (auto[0] if xi is None else xi), (auto[1] if xi_alt is None else xi_alt)


# ---------------------------------------------------------------------------
# Subcommands; each returns the list of artifact file names it wrote


def cmd_pressure(spec, cfg):
    xi, xi_alt = _base_points(spec, cfg)
    curve = thermo.pressure_curve(spec, xi, xi_alt, cfg.params["t_grid"], cfg.depth, cfg.k_avg)
    curve.to_csv(cfg.output_dir / "pressure.csv")
    return ["pressure.csv"]


def cmd_dimension(spec, cfg):
    xi, _ = _base_points(spec, cfg)
    res = thermo.bowen_root(spec, xi, cfg.depth, cfg.tol_t, cfg.k_avg)
    res.to_csv(cfg.output_dir / "bowen.csv")
    return ["bowen.csv"]


def cmd_spectrum(spec, cfg):
    xi, _ = _base_points(spec, cfg)
    table = multifractal.spectrum_table(
        spec, xi, cfg.params["t"], cfg.params["q_grid"], cfg.depth, cfg.tol_t, cfg.k_avg, cfg.seed
    )
    table.to_csv(cfg.output_dir / "spectrum.csv")
    return ["spectrum.csv"]


def _write_image(img, cfg, stem):
    names = [f"{stem}.pgm"]
    img.write_pgm(cfg.output_dir / names[0])
    if cfg.params.get("png"):
        img.write_png(cfg.output_dir / f"{stem}.png")
        names.append(f"{stem}.png")
    return names


def cmd_render_global(spec, cfg):
    img = geometry.render_global(
        spec, cfg.params["iterations"], cfg.seed, cfg.params["grid"], cfg.params.get("bbox")
    )
    return _write_image(img, cfg, "global")


def cmd_render_fiber(spec, cfg):
    rule = geometry.WordRule.parse(cfg.params["word_rule"], seed=cfg.seed)
    img = geometry.render_fiber(
        spec, rule, cfg.params["grid"], cfg.params.get("bbox"), cfg.params["max_iter"], cfg.threads
    )
    names = _write_image(img, cfg, "fiber")
    with open(cfg.output_dir / "fiber_escape.pgm", "wb") as fh:
        fh.write(img.escape_pgm_bytes())
    return names + ["fiber_escape.pgm"]


def _read_points_csv(path):
    pts = []
    with open(path, newline="") as fh:
        rows = (r for r in csv.reader(line for line in fh if not line.startswith("#")))
        for row in rows:
            try:
                pts.append(complex(float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                continue
    return np.array(pts, dtype=complex)


def cmd_boxdim(spec, cfg):
    src = cfg.params["input"]
    if src is None:
        raise PreconditionError("boxdim needs --input (PGM image or re,im CSV)")
    cloud = geometry.read_pgm(src) if str(src).endswith(".pgm") else _read_points_csv(src)
    k_range = cfg.params.get("k_range")
    if k_range is not None:
        k_range = range(int(k_range[0]), int(k_range[1]) + 1)
    fit = geometry.box_dimension(cloud, k_range)
    with open(cfg.output_dir / "boxdim.csv", "w", newline="") as fh:
        fh.write(f"# slope={fit.slope:.17g}\n# r2={fit.r2:.17g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "eps", "count"])
        for k, c in zip(fit.scales, fit.counts):
            w.writerow([k, f"{2.0 ** -k:.17g}", f"{c:.17g}"])
    return ["boxdim.csv"]


def cmd_osc_check(spec, cfg):
    cx, cy, r = cfg.params["disc"]
    rep = geometry.osc_check(
        spec, complex(cx, cy), r, cfg.params["n_boundary"], cfg.params["n_interior"], cfg.seed
    )
    (cfg.output_dir / "osc.txt").write_text(rep.to_text())
    return ["osc.txt"]


def cmd_shrink_rate(spec, cfg):
    xi, _ = _base_points(spec, cfg)
    fit = geometry.shrink_rate(spec, xi, cfg.params["radius"], cfg.params["n_max"])
    with open(cfg.output_dir / "shrink.csv", "w", newline="") as fh:
        fh.write(f"# alpha_hat={fit.alpha_hat:.17g}\n# c_hat={fit.c_hat:.17g}\n")
        fh.write(f"# r2={fit.r2:.17g}\n# xi={fmt(complex(xi))}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "diameter"])
        for k, d in enumerate(fit.diameters, 1):
            w.writerow([k, f"{d:.17g}"])
    return ["shrink.csv"]


def cmd_conformal(spec, cfg):
    xi, _ = _base_points(spec, cfg)
    m = measures.conformal_atoms(spec, xi, cfg.params["t"], cfg.params["s"], cfg.depth, cfg.k_avg)
    m.to_csv(cfg.output_dir / "atoms.csv")
    return ["atoms.csv"]


def cmd_diagnose_clt(spec, cfg):
    t = cfg.params["t"]
    rep = measures.birkhoff_diagnostics(
        spec, t, cfg.params["n_block"], cfg.params["n_samples"], cfg.seed
    )
    (cfg.output_dir / "clt.txt").write_text(rep.to_text())
    return ["clt.txt"]


COMMANDS = {
    "pressure": cmd_pressure,
    "dimension": cmd_dimension,
    "spectrum": cmd_spectrum,
    "render-global": cmd_render_global,
    "render-fiber": cmd_render_fiber,
    "boxdim": cmd_boxdim,
    "osc-check": cmd_osc_check,
    "shrink-rate": cmd_shrink_rate,
    "conformal": cmd_conformal,
    "diagnose-clt": cmd_diagnose_clt,
}


# ---------------------------------------------------------------------------
# Manifests


def write_manifest(cfg, artifacts):
    inputs = {
        "spec": os.path.basename(cfg.spec_path) if cfg.spec_path else None,
        "spec_sha256": sha256(cfg.spec_path) if cfg.spec_path else None,
        "depth": cfg.depth,
        "tolerances": {k: cfg.tolerances[k] for k in sorted(cfg.tolerances)},
        "params": {k: _jsonable(v) for k, v in sorted(cfg.params.items())},
    }
    doc = {
        "tool": "semithermo",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "inputs": inputs,
        "artifacts": [
            {"path": name, "sha256": sha256(cfg.output_dir / name)} for name in artifacts
        ],
    }
    path = cfg.output_dir / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return os.path.basename(v)
    return v


def verify_manifest(out_dir):
    """Names of artifacts that are missing or whose hash no longer matches."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / MANIFEST).read_text())
    bad = []
    for item in doc["artifacts"]:
        p = out_dir / item["path"]
        if not p.exists() or sha256(p) != item["sha256"]:
            bad.append(item["path"])
    return bad


# ---------------------------------------------------------------------------
# Parser


def _common(p):
    p.add_argument("--spec", help="JSON semigroup spec")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    p.add_argument("--depth", type=int, default=8, help="preimage tree depth n")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: $SEMITHERMO_THREADS or all cores)")
    p.add_argument("--tol", type=parse_tolerance, action="append", default=[],
                   metavar="KEY=VALUE", help="override a module tolerance (tol_t, k_avg)")
    p.add_argument("--xi", type=parse_complex, default=None, help="base point")
    p.add_argument("--xi-alt", type=parse_complex, default=None, help="second base point")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semithermo",
        description="Pressure, dimension and Julia set tools for rational semigroups.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("pressure", help="pressure curve on a t grid")
    _common(p)
    p.add_argument("--t-grid", type=parse_range_list, default=parse_range_list(DEFAULT_T_GRID),
                   help="a:b:n or comma list (default 0:2.4:13)")

    p = sub.add_parser("dimension", help="Bowen root of the pressure")
    _common(p)

    p = sub.add_parser("spectrum", help="temperature function and dimension spectrum")
    _common(p)
    p.add_argument("--t", type=float, default=0.8)
    p.add_argument("--q-grid", type=parse_range_list, default=parse_range_list(DEFAULT_Q_GRID))

    p = sub.add_parser("render-global", help="chaos-game render of J(G)")
    _common(p)
    p.add_argument("--iterations", type=int, default=1_000_000)
    p.add_argument("--grid", type=parse_grid, default=(512, 512), help="WxH")
    p.add_argument("--bbox", type=lambda s: tuple(parse_floats(s, 4)), default=None,
                   help="re_min,re_max,im_min,im_max")
    p.add_argument("--png", action="store_true", help="also write a PNG")

    p = sub.add_parser("render-fiber", help="escape-time render of a fiber Julia set")
    _common(p)
    p.add_argument("--word-rule", default="const:1", help="const:i | periodic:p1p2... | random")
    p.add_argument("--grid", type=parse_grid, default=(512, 512), help="WxH")
    p.add_argument("--bbox", type=lambda s: tuple(parse_floats(s, 4)), default=None)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("boxdim", help="box-counting dimension of a PGM or point CSV")
    _common(p)
    p.add_argument("--input", default=None, help="PGM (with bbox comment) or re,im CSV")
    p.add_argument("--k-range", type=lambda s: parse_floats(s, 2), default=None,
                   metavar="KLO,KHI")

    p = sub.add_parser("osc-check", help="open set condition on a round disc")
    _common(p)
    p.add_argument("--disc", type=lambda s: parse_floats(s, 3), default=[0.0, 0.0, 2.0],
                   metavar="CX,CY,R")
    p.add_argument("--n-boundary", type=int, default=1024)
    p.add_argument("--n-interior", type=int, default=4096)

    p = sub.add_parser("shrink-rate", help="exponential shrinking of pulled-back discs")
    _common(p)
    p.add_argument("--radius", type=float, default=0.05)
    p.add_argument("--n-max", type=int, default=6)

    p = sub.add_parser("conformal", help="atomic approximation of the conformal measure")
    _common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--s", type=float, required=True)

    p = sub.add_parser("diagnose-clt", help="Birkhoff sum diagnostics")
    _common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--n-block", type=int, default=50)
    p.add_argument("--n-samples", type=int, default=10_000)
    return parser


_SKIP = {"command", "spec", "out", "seed", "depth", "threads", "tol"}


def config_from_args(args):
    if not 0 <= args.seed < 2**64:
        raise PreconditionError("seed must be an unsigned 64-bit integer")
    params = {k: v for k, v in vars(args).items() if k not in _SKIP}
    return RunConfig(
        subcommand=args.command,
        spec_path=args.spec,
        output_dir=Path(args.out),
        seed=args.seed,
        depth=args.depth,
        threads=_threads(args.threads),
        tolerances=dict(args.tol),
        params=params,
    )


def run_subcommand(cfg):
    """Run one subcommand and write its manifest; returns the manifest path."""
    if cfg.spec_path is None:
        raise PreconditionError("--spec is required")
    spec = parse_spec(cfg.spec_path)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    artifacts = COMMANDS[cfg.subcommand](spec, cfg)
    return write_manifest(cfg, artifacts)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        path = run_subcommand(cfg)
    except (SemithermoError, OSError) as exc:
        print(f"semithermo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
