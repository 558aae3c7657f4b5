"""Finite-time stable boundary dynamics dw/dt = -K sgn(w) |w|^gamma.

For gain K > 0 and exponent gamma in (0, 1) the solution from w(0) = w0
reaches zero exactly at t = |w0|^(1-gamma) / ((1-gamma) K) and stays there.
The closed form is used everywhere in the solvers; numerical integration of
the (non-Lipschitz at 0) ODE exists only as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import BoundaryTrace

__all__ = ["PowerFeedback", "FeedbackTrace", "eval_trace", "extinction_time", "trace_bounds"]


@dataclass(frozen=True)
class PowerFeedback:
    """Signed-power feedback parameters: gain K > 0, exponent gamma in (0, 1)."""

    gain: float
    exponent: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if not 0.0 < self.exponent < 1.0:
            raise ValueError("exponent must lie strictly between 0 and 1")


@dataclass(frozen=True)
class FeedbackTrace:
    """Closed-loop boundary trace starting from w0 under a PowerFeedback."""

    initial: float
    params: PowerFeedback

    @property
    def extinction(self) -> float:
        return extinction_time(self)

    def __call__(self, t):
        return eval_trace(self, t)

    def as_boundary_trace(self) -> BoundaryTrace:
        k, g = self.params.gain, self.params.exponent
        return BoundaryTrace(func=self.__call__, lip=k * abs(self.initial) ** g)


def eval_trace(trace: FeedbackTrace, t):
    """Closed-form trace value; vectorized over t, identically 0 past extinction."""
    t = np.asarray(t, float)
    w0 = trace.initial
    if w0 == 0.0:
        return np.zeros_like(t) if t.ndim else 0.0
    k, g = trace.params.gain, trace.params.exponent
    core = np.maximum(abs(w0) ** (1.0 - g) - (1.0 - g) * k * t, 0.0)
    out = np.sign(w0) * core ** (1.0 / (1.0 - g))
    return out if t.ndim else float(out)


def extinction_time(trace: FeedbackTrace) -> float:
    """Time at which the trace reaches zero: |w0|^(1-gamma) / ((1-gamma) K)."""
    g = trace.params.exponent
    return abs(trace.initial) ** (1.0 - g) / ((1.0 - g) * trace.params.gain)


def trace_bounds(trace: FeedbackTrace, amp: float | None = None) -> tuple[float, float]:
    """Sup and derivative bounds (amp, K * amp^gamma) valid whenever |w0| <= amp."""
    if amp is None:
        amp = abs(trace.initial)
    if abs(trace.initial) > amp:
        raise ValueError("initial value exceeds the declared amplitude bound")
    k, g = trace.params.gain, trace.params.exponent
    return amp, k * amp**g
