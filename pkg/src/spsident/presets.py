"""Canned experiment configurations.

The demo family is the package's canonical fixture: a first-order system
with parameters (-0.7, 1.0), Laplacian noise of variance 0.1, and a
first-order filtered Gaussian input, at three sample sizes. Confidence is
95% realized as m = 100, q = 5.
"""

from __future__ import annotations

import copy

from .errors import ConfigError

__all__ = ["PRESETS", "preset_config"]

_DEMO_COMMON = {
    "system": {"a": [-0.7], "b": [1.0]},
    "input": {"kind": "ar1", "coeff": 0.75, "variance": 1.0, "seed": 20107},
    "noise": {"kind": "laplacian", "variance": 0.1},
    "m": 100,
    "q": 5,
    "trials": 10000,
    "master_seed": 61407,
}

PRESETS: dict[str, dict] = {
    "demo-n40": {
        **_DEMO_COMMON,
        "n": 40,
        "grid": {"lower": [-1.0, 0.4], "upper": [-0.4, 1.6], "points": [61, 61]},
    },
    "demo-n400": {
        **_DEMO_COMMON,
        "n": 400,
        "grid": {"lower": [-0.85, 0.8], "upper": [-0.55, 1.2], "points": [61, 61]},
    },
    "demo-n4000": {
        **_DEMO_COMMON,
        "n": 4000,
        "grid": {"lower": [-0.75, 0.93], "upper": [-0.65, 1.07], "points": [61, 61]},
    },
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
