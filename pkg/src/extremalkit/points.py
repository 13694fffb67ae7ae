"""Pseudorandom rational sample points.

Angles are returned as exact ``(cos, sin)`` pairs on the unit circle, built
from Pythagorean triples, so evaluation at these points stays exact.
"""
from __future__ import annotations

import os
import random
from fractions import Fraction

from .expr import VariableRegistry

SEED_ENV = "EXTREMALKIT_SEED"
DEFAULT_SEED = 20011


def default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else DEFAULT_SEED


def rational_circle_point(rng: random.Random) -> tuple:
    """Exact point ``((1-t^2)/(1+t^2), 2t/(1+t^2))`` for a random rational t."""
    t = Fraction(rng.randint(-12, 12), rng.randint(1, 7))
    d = 1 + t * t
    return ((1 - t * t) / d, 2 * t / d)


def random_rational(rng: random.Random, bound: int = 4, den: int = 6) -> Fraction:
    return Fraction(rng.randint(-bound * den, bound * den), rng.randint(1, den))


def random_rational_point(registry: VariableRegistry, rng: random.Random) -> list:
    return [
        rational_circle_point(rng) if registry.is_angle(i) else random_rational(rng)
        for i in range(registry.n)
    ]


def random_float_point(registry: VariableRegistry, rng: random.Random, scale: float = 2.0) -> list:
    """Float point; angles in radians."""
    import math

    return [
        rng.uniform(-math.pi, math.pi) if registry.is_angle(i) else rng.uniform(-scale, scale)
        for i in range(registry.n)
    ]


def witness_point(registry: VariableRegistry, seed: int | None = None) -> list:
    return random_rational_point(registry, random.Random(default_seed() if seed is None else seed))


def to_float_state(registry: VariableRegistry, values) -> list:
    """Positional values -> floats; (cos, sin) pairs become radians."""
    import math

    out = []
    for i, v in enumerate(values):
        if registry.is_angle(i) and isinstance(v, (tuple, list)):
            out.append(math.atan2(float(v[1]), float(v[0])))
        else:
            out.append(float(v))
    return out
