"""Desk-scale plants for the closed-loop scenarios.

Sagittal: the identified second-order response model, driven by the
sagittal mix of the corrective-action activations, integrated with the
trapezoidal rule. Its output is the fused pitch deviation; a constant
output offset models walking onto a step change in floor height.

Lateral: a linear inverted pendulum rocking between two fixed support
points. Within a support interval the solution is the exact
hyperbolic-function propagation; support exchanges happen instantaneously
at the commanded touchdown phases (right leg at mu = 0, left at mu = pi).
Walking in place follows the closed-form periodic orbit through
(y, dy) = (0, -/+ w*omega*tanh(omega/(2*f)) ) at the touchdowns; pushes
toward the support foot make a fixed-schedule exchange divergent, which
is exactly the failure mode the timing feedback prevents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cpg import update_phase
from .errors import ParameterError
from .rotations import wrap_angle
from .tuning import StateSpaceModel, identified_sagittal_model


class SagittalPlant:
    """Trapezoidal integration of the sagittal deviation model."""

    def __init__(self, model: StateSpaceModel | None = None, dt: float = 0.01):
        if dt <= 0.0 or dt > 0.01:
            raise ParameterError(f"sagittal plant requires 0 < dt <= 0.01, got {dt}")
        self.model = model or identified_sagittal_model()
        self.dt = dt
        left = np.linalg.inv(np.eye(2) - 0.5 * dt * self.model.a)
        self._step_x = left @ (np.eye(2) + 0.5 * dt * self.model.a)
        self._step_u = left @ (dt * self.model.b[:, 0])
        self.x = np.zeros(2)
        self.output_offset = 0.0

    def output(self) -> float:
        """Measured fused pitch deviation, including the offset disturbance."""
        return float(self.model.c[0] @ self.x) + self.output_offset

    def step(self, u: float) -> None:
        self.x = self._step_x @ self.x + self._step_u * u

    def rate_impulse(self, magnitude: float) -> None:
        """State impulse that kicks the output rate without moving the output."""
        stack = np.vstack([self.model.c, self.model.c @ self.model.a])
        direction = np.linalg.solve(stack, np.array([0.0, 1.0]))
        self.x = self.x + magnitude * direction


@dataclass
class LateralPlant:
    """Inverted-pendulum lateral rocking with phase-commanded exchanges."""

    pendulum_constant: float = 4.0  # omega^2 [1/s^2]
    support_halfwidth: float = 0.06  # [m]
    com_height: float = 0.22  # [m], converts CoM offset to fused roll
    y: float = 0.0  # CoM lateral offset [m], positive left
    ydot: float = 0.0
    support: int = -1  # +1 left foot, -1 right foot

    def __post_init__(self):
        if self.pendulum_constant <= 0.0 or self.support_halfwidth <= 0.0:
            raise ParameterError("pendulum constant and support half-width must be > 0")
        if self.com_height <= 0.0:
            raise ParameterError("CoM height must be > 0")
        if self.support not in (-1, 1):
            raise ParameterError("support indicator must be +1 or -1")

    @property
    def omega(self) -> float:
        return math.sqrt(self.pendulum_constant)

    @property
    def support_point(self) -> float:
        return self.support * self.support_halfwidth

    def roll(self) -> float:
        """Fused roll of the trunk; positive = leaning right (CoM at -y)."""
        return -math.asin(min(1.0, max(-1.0, self.y / self.com_height)))

    def roll_rate(self) -> float:
        arg = min(1.0, max(-1.0, self.y / self.com_height))
        return -self.ydot / (self.com_height * math.sqrt(max(1e-12, 1.0 - arg * arg)))

    def rate_impulse(self, roll_rate: float) -> None:
        """Push expressed as a fused-roll rate change [rad/s]."""
        self.ydot += -roll_rate * self.com_height

    def step(self, dt: float) -> None:
        """Exact hyperbolic propagation about the current support point."""
        w = self.omega
        c, s = math.cosh(w * dt), math.sinh(w * dt)
        rel = self.y - self.support_point
        self.y = self.support_point + rel * c + (self.ydot / w) * s
        self.ydot = rel * w * s + self.ydot * c

    def exchange(self, new_support: int) -> None:
        if new_support not in (-1, 1):
            raise ParameterError("support indicator must be +1 or -1")
        self.support = new_support

    def place_on_orbit(self, step_frequency: float) -> None:
        """Initialize on the closed-form in-place rocking orbit at a right
        touchdown (y = 0, moving toward the right foot)."""
        if step_frequency <= 0.0:
            raise ParameterError("step frequency must be > 0")
        w = self.omega
        period = 1.0 / step_frequency
        self.y = 0.0
        self.ydot = -self.support_halfwidth * w * math.tanh(0.5 * w * period)
        self.support = -1


def touchdown_events(mu_prev: float, mu_new: float) -> list[tuple[float, int]]:
    """Support exchanges crossed while advancing mu_prev -> mu_new.

    The phase advances by less than pi per tick; crossing 0 is the right
    touchdown (-1), wrapping past pi the left touchdown (+1). Each event
    carries the fraction of the tick at which the crossing occurs, so the
    exchange can be applied at the exact commanded phase.
    """
    if mu_new < mu_prev:  # wrapped through +pi
        advance = (mu_new + 2.0 * math.pi) - mu_prev
        return [((math.pi - mu_prev) / advance, 1)]
    if mu_prev < 0.0 <= mu_new and mu_new > mu_prev:
        return [((0.0 - mu_prev) / (mu_new - mu_prev), -1)]
    return []


@dataclass
class SimState:
    """Mutable closed-loop state advanced by step_plants."""

    sagittal: SagittalPlant
    lateral: LateralPlant
    mu: float = 0.0
    time: float = 0.0
    fallen: bool = False
    fall_threshold: float = 0.6  # [rad]
    sagittal_mix: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    )

    def pitch_deviation(self) -> float:
        return self.sagittal.output()

    def roll(self) -> float:
        return self.lateral.roll()


def step_plants(state: SimState, u_a, f_g: float, dt: float) -> SimState:
    """Advance gait phase and both plants by one tick.

    The sagittal plant input is the configured mix of the activation
    vector; the lateral plant runs autonomously apart from the
    phase-commanded support exchanges. After a fall the state freezes.
    """
    if dt <= 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if state.fallen:
        state.time += dt
        return state
    u = float(np.dot(state.sagittal_mix, np.asarray(u_a, dtype=float).reshape(5)))
    state.sagittal.step(u)
    mu_new = update_phase(state.mu, f_g, dt)
    elapsed = 0.0
    for fraction, side in touchdown_events(state.mu, mu_new):
        state.lateral.step(fraction * dt - elapsed)
        state.lateral.exchange(side)
        elapsed = fraction * dt
    state.lateral.step(dt - elapsed)
    state.mu = mu_new
    state.time += dt
    if abs(state.roll()) > state.fall_threshold or abs(
        state.pitch_deviation()
    ) > state.fall_threshold:
        state.fallen = True
    return state
