import csv
import json

import pytest

from helpers import SPECS
from semithermo.cli import (
    build_parser,
    config_from_args,
    main,
    parse_range_list,
    parse_spec,
    verify_manifest,
)
from semithermo.errors import ParseError, ValidationError


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(l for l in fh if not l.startswith("#")))


class TestParseSpec:
    def test_corpus(self):
        spec = parse_spec(SPECS / "z2pm2.json")
        assert spec.degrees == (2, 2)
        assert spec.name == "z^2+2, z^2-2"

    def test_real_coefficients_and_denominator(self, tmp_path):
        p = write_json(tmp_path / "r.json", {"generators": [{"num": [0, 0, 1], "den": [2, 0, 0.5]}]})
        assert parse_spec(p).degrees == (2,)

    def test_empty_generators(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_spec(write_json(tmp_path / "e.json", {"generators": []}))

    def test_common_factor(self, tmp_path):
        gen = {"num": [-2, 1, 1], "den": [-3, 2, 1]}
        with pytest.raises(ValidationError, match="common factor"):
            parse_spec(write_json(tmp_path / "c.json", {"generators": [gen]}))

    def test_bad_coefficient(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_spec(write_json(tmp_path / "b.json", {"generators": [{"num": ["x", 1]}]}))

    def test_syntax_error_location(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text('{\n  "generators": [\n    {"num": [1, 0, 1],}\n  ]\n}\n')
        with pytest.raises(ParseError) as info:
            parse_spec(p)
        assert info.value.line == 3
        assert info.value.column is not None

    def test_not_utf8(self, tmp_path):
        p = tmp_path / "u.json"
        p.write_bytes(b'{"generators": "\xff"}')
        with pytest.raises(ParseError):
            parse_spec(p)


class TestArguments:
    def test_range_list(self):
        assert parse_range_list("0:1:5") == [0, 0.25, 0.5, 0.75, 1]
        assert parse_range_list("0.5, 1.5") == [0.5, 1.5]

    def test_tolerance_override(self):
        args = build_parser().parse_args(["dimension", "--spec", "x", "--tol", "tol_t=1e-4"])
        assert config_from_args(args).tol_t == 1e-4

    def test_unknown_tolerance_key(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["dimension", "--tol", "nope=1"])

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("SEMITHERMO_THREADS", "3")
        args = build_parser().parse_args(["render-fiber", "--spec", "x"])
        assert config_from_args(args).threads == 3
        args = build_parser().parse_args(["render-fiber", "--spec", "x", "--threads", "2"])
        assert config_from_args(args).threads == 2


class TestSubcommands:
    def test_dimension(self, tmp_path):
        assert run("dimension", "--spec", SPECS / "z2.json", "--out", tmp_path) == 0
        header, row = read_csv(tmp_path / "bowen.csv")
        assert header[0] == "h"
        assert float(row[0]) == pytest.approx(1.0, abs=1e-6)
        assert verify_manifest(tmp_path) == []

    def test_pressure(self, tmp_path):
        assert run("pressure", "--spec", SPECS / "z2pm2.json", "--out", tmp_path,
                   "--depth", 6, "--t-grid", "0:2:5") == 0
        rows = read_csv(tmp_path / "pressure.csv")
        assert len(rows) == 6

    def test_osc_check(self, tmp_path):
        assert run("osc-check", "--spec", SPECS / "z2pm2.json", "--out", tmp_path,
                   "--n-boundary", 256, "--n-interior", 512) == 0
        assert (tmp_path / "osc.txt").read_text().startswith("verdict=pass")

    def test_render_fiber_and_boxdim(self, tmp_path):
        assert run("render-fiber", "--spec", SPECS / "z2pm2.json", "--out", tmp_path,
                   "--word-rule", "const:2", "--grid", "512x512",
                   "--bbox=-2.2,2.2,-2.2,2.2") == 0
        out = tmp_path / "box"
        assert run("boxdim", "--spec", SPECS / "z2pm2.json", "--out", out,
                   "--input", tmp_path / "fiber.pgm") == 0
        slope = float((out / "boxdim.csv").read_text().splitlines()[0].split("=")[1])
        assert slope == pytest.approx(1.0, abs=0.15)

    def test_conformal_guard_exits_one(self, tmp_path, capsys):
        code = run("conformal", "--spec", SPECS / "z2pm2.json", "--out", tmp_path,
                   "--depth", 5, "--t", 0, "--s", 1.0)
        assert code == 1
        assert "SeriesNotSummable" in capsys.readouterr().err

    def test_invalid_spec_exits_one(self, tmp_path, capsys):
        p = write_json(tmp_path / "e.json", {"generators": []})
        assert run("dimension", "--spec", p, "--out", tmp_path / "o") == 1
        assert "ValidationError" in capsys.readouterr().err

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2


class TestManifest:
    ARGS = ("render-global", "--spec", SPECS / "z2pm2.json", "--iterations", 20_000,
            "--grid", "128x128", "--seed", 5)

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(*self.ARGS, "--out", a) == 0
        assert run(*self.ARGS, "--out", b) == 0
        assert (a / "global.pgm").read_bytes() == (b / "global.pgm").read_bytes()
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()

    def test_contents(self, tmp_path):
        run(*self.ARGS, "--out", tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["seed"] == 5 and doc["subcommand"] == "render-global"
        assert doc["inputs"]["spec"] == "z2pm2.json"
        assert [a["path"] for a in doc["artifacts"]] == ["global.pgm"]

    def test_detects_tampering(self, tmp_path):
        run(*self.ARGS, "--out", tmp_path)
        with open(tmp_path / "global.pgm", "ab") as fh:
            fh.write(b"\0")
        assert verify_manifest(tmp_path) == ["global.pgm"]
