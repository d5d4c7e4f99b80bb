"""Signal conditioning used by the feedback pipeline.

Stateless transfer functions (coercion, deadband) are pure; the stream
filters (weighted line of best fit, exponentially weighted integrator,
mean filter) keep internal state and expect exclusive access per tick.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import ParameterError, StateError

__all__ = [
    "SoftBounds",
    "soft_coerce",
    "hard_coerce",
    "smooth_deadband",
    "sharp_deadband",
    "WlbfFilter",
    "EwIntegrator",
    "alpha_from_half_life",
    "MeanFilter",
]


@dataclass(frozen=True)
class SoftBounds:
    """Saturation range (lo, hi) with a smoothing buffer of width ``buffer``.

    The buffer must fit inside the range: 0 < buffer <= (hi - lo) / 2.
    """

    lo: float
    hi: float
    buffer: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ParameterError(f"soft bounds need lo < hi, got [{self.lo}, {self.hi}]")
        if not (0.0 < self.buffer <= 0.5 * (self.hi - self.lo)):
            raise ParameterError(
                f"buffer {self.buffer} outside (0, {(self.hi - self.lo) / 2}]"
            )


def soft_coerce(x: float, bounds: SoftBounds) -> float:
    """C1 saturation of ``x`` into the open interval (lo, hi).

    Identity on [lo + b, hi - b]; exponential approach to the bounds in the
    buffer zones, so the output never reaches lo or hi exactly.
    """
    lo, hi, b = bounds.lo, bounds.hi, bounds.buffer
    if x > hi - b:
        out = hi - b * math.exp(-(x - (hi - b)) / b)
        # keep strictly interior even when the exponential underflows
        return out if out < hi else math.nextafter(hi, lo)
    if x < lo + b:
        out = lo + b * math.exp((x - (lo + b)) / b)
        return out if out > lo else math.nextafter(lo, hi)
    return x


def hard_coerce(x: float, lo: float, hi: float) -> float:
    """Plain saturation of ``x`` to [lo, hi]."""
    if lo > hi:
        raise ParameterError(f"coercion range empty: lo {lo} > hi {hi}")
    return min(hi, max(lo, x))


def smooth_deadband(x: float, radius: float) -> float:
    """C1 deadband: quadratic for |x| < 2*radius, affine |x| - radius outside.

    radius = 0 degenerates to the identity.
    """
    if radius < 0.0:
        raise ParameterError(f"deadband radius must be >= 0, got {radius}")
    if radius == 0.0:
        return x
    ax = abs(x)
    if ax < 2.0 * radius:
        return math.copysign(ax * ax / (4.0 * radius), x)
    return math.copysign(ax - radius, x)


def sharp_deadband(x: float, radius: float) -> float:
    """Classic deadband: zero inside |x| <= radius, shifted identity outside."""
    if radius < 0.0:
        raise ParameterError(f"deadband radius must be >= 0, got {radius}")
    ax = abs(x)
    if ax <= radius:
        return 0.0
    return math.copysign(ax - radius, x)


class WlbfFilter:
    """Weighted line of best fit over a sliding window of timestamped samples.

    Fits y = a + b*t by weighted linear least squares; evaluating the fit at
    the current time smooths the signal, and the slope b is a smoothed
    derivative estimate. Robust to uneven sample spacing: if the weighted
    variance of the stored timestamps degenerates (all samples effectively
    simultaneous), the slope is reported as 0 and the value as the weighted
    mean.
    """

    #: weighted timestamp variance below this is treated as degenerate [s^2]
    DEGENERATE_VARIANCE = 1e-12

    def __init__(self, capacity: int = 10):
        if capacity < 1:
            raise ParameterError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._points: deque[tuple[float, float, float]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._points)

    def reset(self) -> None:
        self._points.clear()

    def update(self, t: float, y: float, weight: float = 1.0) -> None:
        """Append a sample; the oldest one is evicted beyond capacity."""
        if weight < 0.0:
            raise ParameterError(f"weight must be >= 0, got {weight}")
        if self._points and t < self._points[-1][0]:
            raise ParameterError(
                f"timestamps must be nondecreasing: {t} < {self._points[-1][0]}"
            )
        self._points.append((t, y, weight))

    def evaluate(self, t_now: float) -> tuple[float, float]:
        """Return (value, slope) of the weighted LS line evaluated at t_now."""
        if not self._points:
            raise StateError("WLBF filter is empty")
        w_sum = sum(w for _, _, w in self._points)
        if w_sum <= 0.0:
            raise StateError("WLBF filter holds no positive-weight samples")
        t_bar = sum(w * t for t, _, w in self._points) / w_sum
        y_bar = sum(w * y for _, y, w in self._points) / w_sum
        s_tt = sum(w * (t - t_bar) ** 2 for t, _, w in self._points)
        if s_tt / w_sum < self.DEGENERATE_VARIANCE:
            return y_bar, 0.0
        s_ty = sum(w * (t - t_bar) * (y - y_bar) for t, y, w in self._points)
        slope = s_ty / s_tt
        return y_bar + slope * (t_now - t_bar), slope


class EwIntegrator:
    """Exponentially weighted (leaky) integrator I[n] = x[n] + alpha*I[n-1].

    alpha = 0 passes the last sample through; alpha = 1 is a classical
    integrator; values in between trade settling time against memory.
    """

    def __init__(self, alpha: float):
        if not (0.0 <= alpha <= 1.0):
            raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = alpha
        self.value = 0.0

    def reset(self) -> None:
        self.value = 0.0

    def update(self, x: float) -> float:
        self.value = x + self.alpha * self.value
        return self.value


def alpha_from_half_life(half_life: float, dt: float) -> float:
    """History constant alpha = 0.5**(dt / half_life) for an EW integrator."""
    if half_life <= 0.0 or dt <= 0.0:
        raise ParameterError(f"half_life and dt must be > 0, got {half_life}, {dt}")
    return 0.5 ** (dt / half_life)


class MeanFilter:
    """Arithmetic mean over the last ``window`` samples (fewer while filling)."""

    def __init__(self, window: int):
        if window < 1:
            raise ParameterError(f"window must be >= 1, got {window}")
        self.window = window
        self._buf: deque[float] = deque(maxlen=window)

    def __len__(self) -> int:
        return len(self._buf)

    def reset(self) -> None:
        self._buf.clear()

    def update(self, x: float) -> float:
        self._buf.append(x)
        return sum(self._buf) / len(self._buf)
