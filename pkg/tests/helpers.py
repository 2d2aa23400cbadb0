"""Shared helpers and independent oracles for the test suite."""

import json
from pathlib import Path

import numpy as np

from semithermo.cli import parse_spec
from semithermo.rational import RationalMap
from semithermo.skew import SemigroupSpec

ROOT = Path(__file__).resolve().parent.parent
SPECS = ROOT / "specs"
DATA = Path(__file__).resolve().parent / "data"


def poly(*coeffs):
    return RationalMap.polynomial(coeffs)


def make_spec(*gens, name=""):
    return SemigroupSpec.from_generators(gens, name=name)


def companion_roots(coeffs):
    """Eigenvalues of the companion matrix of an ascending coefficient list.

    Written independently of the library root-finder to serve as its oracle.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    d = len(c) - 1
    m = np.zeros((d, d), dtype=complex)
    m[1:, :-1] = np.eye(d - 1)
    m[:, -1] = -c[:-1] / c[-1]
    return np.linalg.eigvals(m)


def match_multisets(a, b):
    """Largest distance in the optimal pairing of two equal-size root sets."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].max())


def load_json(name):
    return json.loads((DATA / name).read_text())


def load_spec(name):
    return parse_spec(SPECS / name)
