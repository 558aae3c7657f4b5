"""Initial-data profile constructors shared by the solvers, CLI and demos."""

from __future__ import annotations

import numpy as np

from .transport import Profile

__all__ = ["constant", "flattened_sine", "cosine_bump", "from_samples", "build"]


def _smoothstep(z):
    z = np.clip(z, 0.0, 1.0)
    return z * z * (3.0 - 2.0 * z)


def constant(value: float, length: float = 1.0) -> Profile:
    return Profile(func=lambda x: np.full_like(np.asarray(x, float), value), sup=abs(value), lip=0.0)


def flattened_sine(amplitude: float, length: float = 1.0, frequency: int = 1, margin: float = 0.2) -> Profile:
    """Sine arch with value and slope forced to zero at both endpoints.

    The smoothstep windows keep the profile compatible with any boundary
    trace starting from zero and bound the slope independently of the window.
    """
    m = margin * length

    def func(x):
        x = np.asarray(x, float)
        w = _smoothstep(x / m) * _smoothstep((length - x) / m)
        return amplitude * np.sin(frequency * np.pi * x / length) * w

    return Profile.from_callable(func, length)


def cosine_bump(amplitude: float, length: float = 1.0, frequency: int = 1) -> Profile:
    """Cosine profile; nonzero at the endpoints, so the boundary feedback engages."""

    def func(x):
        return amplitude * np.cos(frequency * np.pi * np.asarray(x, float) / length)

    return Profile(func=func, sup=abs(amplitude), lip=abs(amplitude) * frequency * np.pi / length)


def from_samples(x_samples, values) -> Profile:
    x_samples = np.asarray(x_samples, float)
    values = np.asarray(values, float)
    lip = float(np.abs(np.diff(values) / np.diff(x_samples)).max()) if x_samples.size > 1 else 0.0
    return Profile(
        func=lambda x, xs=x_samples, vv=values: np.interp(x, xs, vv),
        sup=float(np.abs(values).max()),
        lip=lip,
    )


def build(spec: dict, length: float = 1.0) -> Profile:
    """Profile from a scenario-file dictionary."""
    kind = spec.get("type", "constant")
    if kind == "constant":
        return constant(float(spec.get("value", 0.0)), length)
    if kind == "flattened_sine":
        return flattened_sine(
            float(spec["amplitude"]),
            length,
            int(spec.get("frequency", 1)),
            float(spec.get("margin", 0.2)),
        )
    if kind == "cosine":
        return cosine_bump(float(spec["amplitude"]), length, int(spec.get("frequency", 1)))
    if kind == "samples":
        return from_samples(spec["x"], spec["values"])
    raise ValueError(f"unknown profile type {kind!r}")
