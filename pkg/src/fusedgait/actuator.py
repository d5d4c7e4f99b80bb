"""Feed-forward setpoint computation for proportional-control servos.

A servo under pure proportional position control produces a torque
proportional to bus voltage and position error, so a desired feed-forward
torque (plus viscous/Coulomb/static friction compensation along the
Stribeck curve) can be injected by offsetting the commanded position.

Desired torques come from gravity-compensation inverse dynamics over a
set of single support models: the same rigid-body tree re-rooted at the
trunk and at each support foot, with gravity assumed fixed in the trunk
frame, weighted by the commanded support coefficients. The trunk-rooted
model additionally contributes the inertial torques of the commanded
motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, ParameterError
from .rotations import rot_axis_angle


def _cross(a, b):
    # np.cross carries high per-call overhead for single 3-vectors
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


@dataclass(frozen=True)
class ServoModel:
    """Proportional-control servo with learned feed-forward constants.

    ff_torque, ff_viscous, ff_coulomb, ff_static scale the desired torque,
    the joint velocity, and the two Stribeck-blended friction terms.
    """

    kp: float = 10.0
    ff_torque: float = 1.0  # alpha_0
    ff_viscous: float = 0.0  # alpha_1
    ff_coulomb: float = 0.0  # alpha_2
    ff_static: float = 0.0  # alpha_3
    stribeck_velocity: float = 0.1  # [rad/s]

    def __post_init__(self):
        if self.kp <= 0.0:
            raise ParameterError(f"servo gain must be > 0, got {self.kp}")
        if min(self.ff_torque, self.ff_viscous, self.ff_coulomb, self.ff_static) < 0.0:
            raise ParameterError("feed-forward constants must be >= 0")
        if self.stribeck_velocity <= 0.0:
            raise ParameterError("Stribeck velocity must be > 0")


def stribeck_weight(qd, v_s: float):
    """Blend weight between static and Coulomb friction, exp(-(qd/v_s)^2)."""
    if v_s <= 0.0:
        raise ParameterError(f"Stribeck velocity must be > 0, got {v_s}")
    qd = np.asarray(qd, dtype=float)
    out = np.exp(-((qd / v_s) ** 2))
    return float(out) if out.ndim == 0 else out


def feedforward_setpoint(q, qd, tau_d, v_bus: float, servo: ServoModel):
    """Position setpoint producing tau_d plus friction/voltage compensation.

    q_d = q + (a0*tau + a1*qd + a2*sgn(qd)*(1-beta) + a3*sgn(qd)*beta)
              / (v_bus * kp)
    """
    if v_bus <= 0.0:
        raise ParameterError(f"bus voltage must be > 0, got {v_bus}")
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    tau_d = np.asarray(tau_d, dtype=float)
    sign = np.sign(qd)
    beta = stribeck_weight(qd, servo.stribeck_velocity)
    offset = (
        servo.ff_torque * tau_d
        + servo.ff_viscous * qd
        + servo.ff_coulomb * sign * (1.0 - beta)
        + servo.ff_static * sign * beta
    ) / (v_bus * servo.kp)
    out = q + offset
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# rigid body tree and recursive Newton-Euler inverse dynamics


@dataclass(frozen=True)
class Link:
    """One link of a rigid-body tree, connected by a revolute joint.

    The transform from the parent frame to this link's frame is
    Trans(origin) * Rot(axis, sign * q) * Trans(tip); `origin` locates the
    joint in the parent frame and `tip` offsets the link frame from the
    joint (zero for ordinary chains; nonzero appears when a tree is
    re-rooted). `com` and `inertia` (about the CoM) are in the link frame.
    `joint` names the generalized coordinate; the root link has no joint.
    """

    name: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    parent: str | None = None
    joint: str | None = None
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tip: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sign: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float).reshape(3))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "tip", np.asarray(self.tip, dtype=float).reshape(3))
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        if inertia.shape != (3, 3):
            raise ModelError(f"link {self.name}: inertia must be 3 diagonal values or 3x3")
        object.__setattr__(self, "inertia", inertia)
        if self.mass <= 0.0:
            raise ModelError(f"link {self.name}: mass must be > 0")
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ModelError(f"link {self.name}: inertia tensor must be symmetric")
        if np.any(np.linalg.eigvalsh(inertia) < -1e-12):
            raise ModelError(f"link {self.name}: inertia tensor must be PSD")
        if self.parent is not None:
            if self.joint is None:
                object.__setattr__(self, "joint", self.name)
            if np.linalg.norm(self.axis) <= 0.0:
                raise ModelError(f"link {self.name}: joint axis must be nonzero")


class RigidBodyModel:
    """Tree of links with a designated root fixed in free space."""

    def __init__(self, links):
        by_name = {}
        for link in links:
            if link.name in by_name:
                raise ModelError(f"duplicate link name {link.name!r}")
            by_name[link.name] = link
        roots = [l.name for l in links if l.parent is None]
        if len(roots) != 1:
            raise ModelError(f"model needs exactly one root link, found {roots}")
        self.root = roots[0]
        self.links = by_name
        self.children: dict[str, list[str]] = {name: [] for name in by_name}
        for link in links:
            if link.parent is not None:
                if link.parent not in by_name:
                    raise ModelError(f"link {link.name!r} references unknown parent {link.parent!r}")
                self.children[link.parent].append(link.name)
        # topological order; also detects cycles / unreachable links
        self.order: list[str] = []
        stack = [self.root]
        while stack:
            name = stack.pop()
            self.order.append(name)
            stack.extend(reversed(self.children[name]))
        if len(self.order) != len(by_name):
            raise ModelError("model tree contains a cycle or disconnected links")

    @property
    def joint_names(self) -> list[str]:
        return [self.links[n].joint for n in self.order if self.links[n].parent is not None]

    def _joint_value(self, table, link: Link) -> float:
        return link.sign * float(table.get(link.joint, 0.0)) if table else 0.0

    def link_rotation(self, q, name: str) -> np.ndarray:
        """Rotation mapping `name` link coordinates into root coordinates."""
        rot = np.eye(3)
        chain = []
        node = name
        while node != self.root:
            link = self.links[node]
            chain.append(link)
            node = link.parent
        for link in reversed(chain):
            rot = rot @ rot_axis_angle(link.axis, self._joint_value(q, link))
        return rot

    def rerooted(self, new_root: str) -> "RigidBodyModel":
        """The same physical tree with `new_root` fixed in free space.

        Edges along the path to the old root are reversed; a reversed
        revolute edge keeps its axis and joint name, flips its sign, and
        swaps/negates the origin and tip offsets.
        """
        if new_root not in self.links:
            raise ModelError(f"unknown link {new_root!r}")
        path = [new_root]
        while path[-1] != self.root:
            path.append(self.links[path[-1]].parent)
        flipped = set()
        new_links = []
        for child, parent in zip(path[:-1], path[1:]):
            old = self.links[child]
            new_links.append(
                Link(
                    name=parent,
                    parent=child,
                    joint=old.joint,
                    axis=old.axis,
                    origin=-old.tip,
                    tip=-old.origin,
                    sign=-old.sign,
                    mass=self.links[parent].mass,
                    com=self.links[parent].com,
                    inertia=self.links[parent].inertia,
                )
            )
            flipped.add(parent)
        for name, link in self.links.items():
            if name == new_root:
                new_links.append(
                    Link(name=name, parent=None, mass=link.mass, com=link.com,
                         inertia=link.inertia)
                )
            elif name not in flipped:
                new_links.append(link)
        return RigidBodyModel(new_links)


def inverse_dynamics(model: RigidBodyModel, q, qd, qdd, gravity) -> dict[str, float]:
    """Recursive Newton-Euler joint torques for the commanded motion.

    q/qd/qdd map joint names to values (missing entries are zero);
    `gravity` is the gravitational acceleration vector in the root frame.
    A gravity-only call (qd = qdd = None) yields the static
    gravity-compensation torques.
    """
    gravity = np.asarray(gravity, dtype=float).reshape(3)
    omega: dict[str, np.ndarray] = {}
    alpha: dict[str, np.ndarray] = {}
    acc: dict[str, np.ndarray] = {}
    rot: dict[str, np.ndarray] = {}
    force: dict[str, np.ndarray] = {}
    moment: dict[str, np.ndarray] = {}

    omega[model.root] = np.zeros(3)
    alpha[model.root] = np.zeros(3)
    acc[model.root] = -gravity

    for name in model.order[1:]:
        link = model.links[name]
        qi = model._joint_value(q, link)
        qdi = model._joint_value(qd, link)
        qddi = model._joint_value(qdd, link)
        r = rot_axis_angle(link.axis, qi)
        rot[name] = r
        w_parent = r.T @ omega[link.parent]
        w = w_parent + qdi * link.axis
        a_ang = r.T @ alpha[link.parent] + qddi * link.axis + _cross(w_parent, qdi * link.axis)
        a_joint = r.T @ (
            acc[link.parent]
            + _cross(alpha[link.parent], link.origin)
            + _cross(omega[link.parent], _cross(omega[link.parent], link.origin))
        )
        a_origin = a_joint + _cross(a_ang, link.tip) + _cross(w, _cross(w, link.tip))
        omega[name], alpha[name], acc[name] = w, a_ang, a_origin

    torques: dict[str, float] = {}
    for name in reversed(model.order):
        link = model.links[name]
        a_com = (
            acc[name]
            + _cross(alpha[name], link.com)
            + _cross(omega[name], _cross(omega[name], link.com))
        )
        f = link.mass * a_com
        n = (
            link.inertia @ alpha[name]
            + _cross(omega[name], link.inertia @ omega[name])
            + _cross(link.com, f)
        )
        for child in model.children[name]:
            child_link = model.links[child]
            r_child = child_link.origin + rot[child] @ child_link.tip
            f_child = rot[child] @ force[child]
            f = f + f_child
            n = n + rot[child] @ moment[child] + _cross(r_child, f_child)
        force[name], moment[name] = f, n
        if link.parent is not None:
            n_joint = n + _cross(link.tip, f)
            torques[link.joint] = link.sign * float(np.dot(link.axis, n_joint))
    return torques


def superpose_feedforward(
    trunk_model: RigidBodyModel,
    support_models,
    coefficients,
    q,
    qd,
    qdd,
    trunk_gravity=(0.0, 0.0, -9.81),
    trunk_link: str | None = None,
) -> dict[str, float]:
    """Desired feed-forward torques from weighted single support models.

    The trunk-rooted model contributes the inertial torques of the
    commanded motion (no gravity); each support model contributes its
    gravity-compensation torques, weighted by its support coefficient.
    Gravity points in a fixed direction relative to the trunk, re-expressed
    in each support model's root frame through the commanded pose.
    """
    support_models = list(support_models)
    coefficients = [float(c) for c in coefficients]
    if len(coefficients) != len(support_models):
        raise ParameterError("one coefficient per support model required")
    if abs(sum(coefficients) - 1.0) > 1e-9:
        raise ParameterError(f"support coefficients sum to {sum(coefficients)}, expected 1")
    trunk_gravity = np.asarray(trunk_gravity, dtype=float).reshape(3)
    trunk_link = trunk_link or trunk_model.root

    torques = inverse_dynamics(trunk_model, q, qd, qdd, gravity=np.zeros(3))
    for model, coeff in zip(support_models, coefficients):
        g_root = model.link_rotation(q, trunk_link) @ trunk_gravity
        static = inverse_dynamics(model, q, None, None, gravity=g_root)
        for joint, tau in static.items():
            torques[joint] = torques.get(joint, 0.0) + coeff * tau
    return torques


# ---------------------------------------------------------------------------
# model file loading


def model_from_dict(data: dict) -> RigidBodyModel:
    links = []
    for entry in data.get("links", []):
        try:
            links.append(
                Link(
                    name=entry["name"],
                    parent=entry.get("parent"),
                    joint=entry.get("joint"),
                    axis=entry.get("axis", (0.0, 1.0, 0.0)),
                    origin=entry.get("origin", (0.0, 0.0, 0.0)),
                    tip=entry.get("tip", (0.0, 0.0, 0.0)),
                    sign=entry.get("sign", 1.0),
                    mass=entry["mass"],
                    com=entry.get("com", (0.0, 0.0, 0.0)),
                    inertia=entry.get("inertia", (0.0, 0.0, 0.0)),
                )
            )
        except KeyError as exc:
            raise ModelError(f"link entry missing required field {exc}") from exc
    return RigidBodyModel(links)
