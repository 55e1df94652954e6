"""Symmetric quadrature rules on the reference triangle.

Points are stored as barycentric triples; weights are scaled to the
reference-triangle area 1/2. The generator/weight literals are the Dunavant
families polished to 22 digits (see ``tools/refine_quadrature.py``).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import UnsupportedDegreeError

# degree -> list of (orbit generator, weight per point); weights sum to 1
_TABLE = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((0.5, 0.5, 0.0), 1 / 3)],
    4: [((0.4459484909159648863183, 0.4459484909159648863183, 0.1081030181680702273634), 0.223381589678011465695),
        ((0.09157621350977074345957, 0.09157621350977074345957, 0.8168475729804585130809), 0.1099517436553218676383)],
    5: [((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.4701420641051150897704, 0.4701420641051150897704, 0.05971587178976982045911), 0.1323941527885061807376),
        ((0.101286507323456338801, 0.101286507323456338801, 0.797426985353087322398), 0.1259391805448271525957)],
    6: [((0.2492867451709104212916, 0.2492867451709104212916, 0.5014265096581791574168), 0.1167862757263793660253),
        ((0.06308901449150222834033, 0.06308901449150222834033, 0.8738219710169955433193), 0.05084490637020681692094),
        ((0.05314504984481694735325, 0.3103524510337844054166, 0.6365024991213986472302), 0.08285107561837357519355)],
    8: [((1 / 3, 1 / 3, 1 / 3), 0.1443156076777871682511),
        ((0.4592925882927231560288, 0.4592925882927231560288, 0.08141482341455368794240), 0.0950916342672846247939),
        ((0.1705693077517602066223, 0.1705693077517602066223, 0.6588613844964795867554), 0.1032173705347182502818),
        ((0.05054722831703097545842, 0.05054722831703097545842, 0.8989055433659380490832), 0.03245849762319808031093),
        ((0.008394777409957605337214, 0.2631128296346381134218, 0.7284923929554042812410), 0.02723031417443499426484)],
}

MAX_DEGREE = max(_TABLE)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum 1/2
    exact_degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def ref_points(self) -> np.ndarray:
        """Points as (xi, eta) on the triangle {xi, eta >= 0, xi + eta <= 1}."""
        return self.points[:, 1:]


def _orbit(gen):
    a, b, c = gen
    perms = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(perms, reverse=True)


def _build(degree):
    pts, wts = [], []
    for gen, w in _TABLE[degree]:
        orbit = _orbit(gen)
        pts += orbit
        wts += [w] * len(orbit)
    points = np.array(pts)
    points.setflags(write=False)
    weights = 0.5 * np.array(wts)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


_RULES = {d: _build(d) for d in _TABLE}


def rule_for_degree(d: int) -> QuadratureRule:
    """Smallest tabulated rule integrating all polynomials of degree ``d`` exactly."""
    if d < 0 or d > MAX_DEGREE:
        raise UnsupportedDegreeError(f"no rule of exactness degree {d}; supported range is 0..{MAX_DEGREE}")
    return _RULES[min(k for k in _RULES if k >= max(d, 1))]


DEFAULT_RULE = rule_for_degree(MAX_DEGREE)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)
