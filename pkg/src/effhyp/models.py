"""Bundled worked models.

The worked effective model is ``a2 = xi^2``, ``alpha = x^2 xi^2``,
``b3 = xi^3``.  At eps = 1 its symbol stays hyperbolic only for
``t <= 4/27`` near ``x = 0``, so unscaled runs use ``T = 1/8``; energy and
frequency runs use the eps-scaled operator on ``[0, 1/4]`` in the scaled
time, which lies well inside that window.
"""
from __future__ import annotations

import copy

DEMO_EPS = 0.02
DEMO_T = 0.125
SCALED_T = 0.25

# general cubic form tau^3 + q1 tau^2 + q2 tau + q3 of the worked model
DEMO_OPERATOR = {
    "q1": "0",
    "q2": "-(t*xi^2 + x^2*xi^2)",
    "q3": "t^2*xi^3",
    "p2_re": "0",
    "p2_im": "0",
    "domain": {"T": DEMO_T, "X": [-1.0, 1.0]},
}

DEMO_REDUCED = {
    "a2": "xi^2",
    "alpha": "x^2*xi^2",
    "b3": "xi^3",
    "domain": {"T": DEMO_T, "X": [-1.0, 1.0]},
}

DEMO_SCALED = dict(DEMO_REDUCED, scale=DEMO_EPS)

# alpha = 0: the factorizable companion of the worked model
FACTORIZABLE = {"a2": "xi^2", "b3": "xi^3", "domain": {"T": DEMO_T, "X": [-1.0, 1.0]}}

# strictly hyperbolic control: tau^3 - xi^2 tau has simple roots 0, +-|xi|
HYPERBOLIC = {"a2": "0", "alpha": "xi^2", "domain": {"T": SCALED_T, "X": [-1.0, 1.0]}}

# tau^3 - t^2 xi^2 tau: vanishing fundamental matrix, outside the effective class
CONTRAST = {"a2": "t*xi^2", "domain": {"T": SCALED_T, "X": [-1.0, 1.0]}}

NON_HYPERBOLIC = {"q1": "0", "q2": "xi^2", "q3": "0", "domain": {"T": 0.5, "X": [-1.0, 1.0]}}

_BUNDLE = {
    "demo-operator": DEMO_OPERATOR,
    "demo": DEMO_REDUCED,
    "demo-scaled": DEMO_SCALED,
    "factorizable": FACTORIZABLE,
    "hyperbolic": HYPERBOLIC,
    "contrast": CONTRAST,
    "non-hyperbolic": NON_HYPERBOLIC,
}


def get(name: str) -> dict:
    """A fresh copy of a bundled model document."""
    try:
        return copy.deepcopy(_BUNDLE[name])
    except KeyError:
        raise KeyError(f"unknown bundled model {name!r}; known: {', '.join(sorted(_BUNDLE))}") from None


def names() -> list[str]:
    return sorted(_BUNDLE)
