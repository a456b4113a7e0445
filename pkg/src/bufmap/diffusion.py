"""Stochastic buffer-filling model.

A diffusion curve ``S`` gives the probability that a chunk is filled once
it has sat ``x`` slots in the buffer; the newest covered chunk has age 0.
Curves are evaluated at integer ages, are nondecreasing, and are clamped
to 1 at and beyond the buffer width: nothing survives unfilled past the
playout point.

The sampler draws one integer fill age per chunk by inverse transform, so
a chunk is filled at exactly the ages ``>=`` its draw.  That construction
makes filling monotone per chunk, reproduces the curve as the marginal
fill probability, and gives conditional fill probabilities matching
:func:`cond_download_prob` without further assumptions.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DegenerateCondition, InvalidParameters

__all__ = [
    "SCurve",
    "two_segment_curve",
    "logistic_curve",
    "table_curve",
    "curve_from_spec",
    "not_fetched_prob",
    "cond_download_prob",
    "FillAgeSampler",
]


class SCurve:
    """Monotone fill-probability curve over integer ages ``0..width``."""

    __slots__ = ("width", "_table", "spec")

    def __init__(self, width: int, table: Sequence[float], spec: dict | None = None):
        if width <= 0:
            raise InvalidParameters("width must be positive")
        if len(table) != width + 1:
            raise InvalidParameters(f"need {width + 1} values, got {len(table)}")
        vals = tuple(float(v) for v in table)
        for v in vals:
            if not 0.0 <= v <= 1.0 or math.isnan(v):
                raise InvalidParameters(f"probability {v} outside [0, 1]")
        for a, b in zip(vals, vals[1:]):
            if a > b + 1e-12:
                raise InvalidParameters("curve must be nondecreasing")
        if vals[-1] != 1.0:
            raise InvalidParameters("curve must reach 1 at the buffer width")
        self.width = width
        self._table = vals
        self.spec = spec or {"family": "table", "values": list(vals[:-1])}

    def __call__(self, age: int) -> float:
        if age < 0:
            raise ValueError("age must be non-negative")
        return self._table[age] if age <= self.width else 1.0

    @property
    def table(self) -> tuple[float, ...]:
        return self._table

    def cdf_array(self) -> np.ndarray:
        return np.asarray(self._table, dtype=np.float64)

    def __repr__(self) -> str:
        return f"SCurve(width={self.width}, spec={self.spec})"


def two_segment_curve(width: int, knee_x: float, knee_y: float,
                      end_x: float | None = None, start_y: float = 0.0,
                      lift_x: float = 0.0) -> SCurve:
    """Two linear segments between a flat head and full saturation.

    The curve sits at ``start_y`` up to the lift-off age ``lift_x``, rises
    linearly to ``(knee_x, knee_y)``, then to ``(end_x, 1)``, and stays at
    1 afterwards.  With the default head (``lift_x = 0``, ``start_y = 0``)
    this is a plain polyline through the origin.
    """
    if end_x is None:
        end_x = width - 1
    if not 0 <= start_y <= knee_y <= 1:
        raise InvalidParameters("need 0 <= start_y <= knee_y <= 1")
    if not 0 <= lift_x < knee_x <= end_x:
        raise InvalidParameters("need 0 <= lift_x < knee_x <= end_x")
    table = []
    for x in range(width):
        if x <= lift_x:
            v = start_y
        elif x <= knee_x:
            v = start_y + (knee_y - start_y) * (x - lift_x) / (knee_x - lift_x)
        elif x < end_x:
            v = knee_y + (1.0 - knee_y) * (x - knee_x) / (end_x - knee_x)
        else:
            v = 1.0
        table.append(min(1.0, v))
    table.append(1.0)
    spec = {"family": "two_segment", "knee_x": knee_x, "knee_y": knee_y,
            "end_x": end_x, "start_y": start_y, "lift_x": lift_x}
    return SCurve(width, table, spec)


def logistic_curve(width: int, midpoint: float, scale: float) -> SCurve:
    if scale <= 0:
        raise InvalidParameters("scale must be positive")
    table = [1.0 / (1.0 + math.exp(-(x - midpoint) / scale)) for x in range(width)]
    table.append(1.0)
    return SCurve(width, table, {"family": "logistic", "midpoint": midpoint, "scale": scale})


def table_curve(values: Sequence[float], width: int | None = None) -> SCurve:
    """Curve read directly from ``width`` probabilities; age ``width`` is 1."""
    if width is None:
        width = len(values)
    if len(values) != width:
        raise InvalidParameters(f"need {width} values, got {len(values)}")
    return SCurve(width, tuple(values) + (1.0,), {"family": "table", "values": list(values)})


def curve_from_spec(spec: dict, width: int) -> SCurve:
    """Build a curve from its JSON form; raises InvalidParameters when malformed."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidParameters("curve spec must be an object with a 'family' key")
    params = {k: v for k, v in spec.items() if k != "family"}
    family = spec["family"]
    try:
        if family == "two_segment":
            return two_segment_curve(width, **params)
        if family == "logistic":
            return logistic_curve(width, **params)
        if family == "table":
            return table_curve(params.pop("values"), width=width, **params)
    except TypeError as exc:
        raise InvalidParameters(f"bad parameters for {family!r} curve: {exc}") from exc
    except KeyError as exc:
        raise InvalidParameters(f"missing parameter for {family!r} curve: {exc}") from exc
    raise InvalidParameters(f"unknown curve family {family!r}")


def not_fetched_prob(curve: SCurve, chunk: int, newest: int) -> float:
    """Probability the chunk is still missing when ``newest`` is the top id."""
    if chunk > newest:
        return 1.0
    if chunk < newest - curve.width:
        return 0.0
    return 1.0 - curve(newest - chunk)


def cond_download_prob(curve: SCurve, age_lo: int, age_hi: int) -> float:
    """Probability a chunk unfilled at ``age_lo`` is filled by ``age_hi``."""
    if not 0 <= age_lo <= age_hi:
        raise ValueError("need 0 <= age_lo <= age_hi")
    s_lo = curve(age_lo)
    if s_lo >= 1.0:
        raise DegenerateCondition(f"S({age_lo}) = 1: nothing is ever unfilled there")
    return min(1.0, (curve(age_hi) - s_lo) / (1.0 - s_lo))


class FillAgeSampler:
    """Seeded inverse-transform sampler of integer fill ages."""

    def __init__(self, curve: SCurve, rng: np.random.Generator):
        self._cdf = curve.cdf_array()
        self._rng = rng

    def sample(self) -> int:
        return int(np.searchsorted(self._cdf, self._rng.random(), side="left"))

    def sample_array(self, count: int) -> np.ndarray:
        u = self._rng.random(count)
        return np.searchsorted(self._cdf, u, side="left").astype(np.int64)
