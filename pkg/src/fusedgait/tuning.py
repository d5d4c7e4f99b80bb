"""LQR-based sagittal PD gain computation.

The transient sagittal response is modelled by an identified second-order
state-space system (input: corrective-action activation, output: fused
pitch deviation). A PD law u = -Kp*y - Kd*dy/dt is equivalent to state
feedback u = -Kx with

    K = (I + Kd C B)^-1 (Kp C + Kd C A),

so LQR state-feedback gains can be converted to PD gains by inverting
that relation. The continuous algebraic Riccati equation is solved by the
Hamiltonian eigenvector method with a Newton-Kleinman fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError

#: second-order sagittal response model identified on hardware: input is
#: the corrective-action activation, output the fused pitch deviation
IDENTIFIED_SAGITTAL_A = np.array([[-31.82, 14.83], [207.5, -221.3]])
IDENTIFIED_SAGITTAL_B = np.array([[-51.67], [720.2]])
IDENTIFIED_SAGITTAL_C = np.array([[1.185, 0.1683]])

CARE_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class StateSpaceModel:
    """x' = Ax + Bu, y = Cx + Du with 2 states, 1 input, 1 output."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(2, 2))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(2, 1))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(1, 2))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(1, 1))


def identified_sagittal_model() -> StateSpaceModel:
    return StateSpaceModel(
        IDENTIFIED_SAGITTAL_A, IDENTIFIED_SAGITTAL_B, IDENTIFIED_SAGITTAL_C
    )


@dataclass(frozen=True)
class LqrWeights:
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(2, 2)
        r = np.asarray(self.r, dtype=float).reshape(1, 1)
        if not np.allclose(q, q.T, atol=1e-12):
            raise ParameterError("Q must be symmetric")
        if np.any(np.linalg.eigvalsh(q) < -1e-12):
            raise ParameterError("Q must be positive semidefinite")
        if r[0, 0] <= 0.0:
            raise ParameterError("R must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)


def bryson_weights(x_max, u_max: float) -> LqrWeights:
    """Initial LQR weights from maximum acceptable state/input magnitudes."""
    x_max = np.asarray(x_max, dtype=float).reshape(2)
    if np.any(x_max <= 0.0) or u_max <= 0.0:
        raise ParameterError("maximum magnitudes must be > 0")
    return LqrWeights(q=np.diag(1.0 / x_max**2), r=np.array([[1.0 / u_max**2]]))


def model_poles(model: StateSpaceModel) -> np.ndarray:
    """Eigenvalues of the system matrix, sorted by magnitude."""
    eig = np.linalg.eigvals(model.a)
    return eig[np.argsort(np.abs(eig))]


def care_residual(model: StateSpaceModel, weights: LqrWeights, p: np.ndarray) -> float:
    a, b = model.a, model.b
    r_inv = np.linalg.inv(weights.r)
    res = a.T @ p + p @ a - p @ b @ r_inv @ b.T @ p + weights.q
    return float(np.linalg.norm(res))


def _check_stabilizable(a: np.ndarray, b: np.ndarray) -> None:
    # PBH test on eigenvalues in the closed right half plane
    for lam in np.linalg.eigvals(a):
        if lam.real >= -1e-12:
            m = np.hstack([lam * np.eye(a.shape[0]) - a, b])
            if np.linalg.matrix_rank(m, tol=1e-10) < a.shape[0]:
                raise NumericError(f"(A, B) not stabilizable: uncontrollable mode at {lam}")


def _care_hamiltonian(model: StateSpaceModel, weights: LqrWeights) -> np.ndarray:
    a, b = model.a, model.b
    r_inv = np.linalg.inv(weights.r)
    n = a.shape[0]
    h = np.block([[a, -b @ r_inv @ b.T], [-weights.q, -a.T]])
    eigvals, eigvecs = np.linalg.eig(h)
    stable = np.where(eigvals.real < 0.0)[0]
    if len(stable) != n:
        raise NumericError(
            f"Hamiltonian has {len(stable)} stable eigenvalues, expected {n}"
        )
    basis = eigvecs[:, stable]
    x1, x2 = basis[:n, :], basis[n:, :]
    if abs(np.linalg.det(x1)) < 1e-14:
        raise NumericError("stable invariant subspace is singular in x1")
    p = np.real(x2 @ np.linalg.inv(x1))
    return 0.5 * (p + p.T)


def _lyapunov_solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = rhs via the Kronecker form (small systems)."""
    n = a.shape[0]
    eye = np.eye(n)
    coeff = np.kron(eye, a.T) + np.kron(a.T, eye)
    p = np.linalg.solve(coeff, rhs.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (p + p.T)


def _care_newton_kleinman(
    model: StateSpaceModel, weights: LqrWeights, p0: np.ndarray, iters: int = 50
) -> np.ndarray:
    a, b = model.a, model.b
    r_inv = np.linalg.inv(weights.r)
    p = p0
    for _ in range(iters):
        k = r_inv @ b.T @ p
        a_cl = a - b @ k
        rhs = -(weights.q + k.T @ weights.r @ k)
        p = _lyapunov_solve(a_cl, rhs)
        if care_residual(model, weights, p) < CARE_RESIDUAL_TOL:
            return p
    return p


def lqr_gain(model: StateSpaceModel, weights: LqrWeights) -> np.ndarray:
    """State feedback gain K = R^-1 B^T P minimizing the quadratic cost.

    P solves the continuous algebraic Riccati equation; the closed loop
    A - BK is verified to be Hurwitz.
    """
    _check_stabilizable(model.a, model.b)
    try:
        p = _care_hamiltonian(model, weights)
    except NumericError:
        p = np.eye(2)
    if care_residual(model, weights, p) >= CARE_RESIDUAL_TOL:
        p = _care_newton_kleinman(model, weights, p)
    residual = care_residual(model, weights, p)
    if residual >= CARE_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(p))):
        raise NumericError(f"Riccati solve did not converge: residual {residual}")
    if np.any(np.linalg.eigvalsh(p) < -1e-9):
        raise NumericError("Riccati solution is not positive semidefinite")
    k = np.linalg.inv(weights.r) @ model.b.T @ p
    closed = np.linalg.eigvals(model.a - model.b @ k)
    if np.any(closed.real >= 0.0):
        raise NumericError(f"closed loop not Hurwitz: eigenvalues {closed}")
    return k


def gain_from_pd(kp: float, kd: float, model: StateSpaceModel) -> np.ndarray:
    """State-feedback gain equivalent to the PD law u = -kp*y - kd*dy."""
    cb = float((model.c @ model.b)[0, 0])
    denom = 1.0 + kd * cb
    if abs(denom) < 1e-12:
        raise NumericError("1 + Kd*C*B is singular; PD law has no state-space equivalent")
    return (kp * model.c + kd * model.c @ model.a) / denom


def pd_from_gain(k, model: StateSpaceModel) -> tuple[float, float]:
    """Recover (kp, kd) from a state-feedback gain, by inversion."""
    k = np.asarray(k, dtype=float).reshape(1, 2)
    stack = np.vstack([model.c, model.c @ model.a - model.c @ model.b @ k])
    if abs(np.linalg.det(stack)) < 1e-12:
        raise NumericError("output/output-rate stack is singular; gains unrecoverable")
    kp_kd = k @ np.linalg.inv(stack)
    return float(kp_kd[0, 0]), float(kp_kd[0, 1])


def simulate_pd_response(
    model: StateSpaceModel,
    kp: float,
    kd: float,
    x0,
    dt: float = 0.001,
    duration: float = 2.0,
) -> np.ndarray:
    """Closed-loop rollout under u = -kp*y - kd*dy from initial state x0.

    Since D = 0, dy = C(Ax + Bu); the algebraic loop is resolved exactly by
    the equivalent state feedback. Returns rows (t, x1, x2, y, u).
    """
    if dt <= 0.0 or duration <= 0.0:
        raise ParameterError("dt and duration must be > 0")
    k = gain_from_pd(kp, kd, model)
    a_cl = model.a - model.b @ k
    # trapezoidal (Tustin) discretization, exact enough for gain checks
    n = int(round(duration / dt))
    left = np.linalg.inv(np.eye(2) - 0.5 * dt * a_cl)
    step = left @ (np.eye(2) + 0.5 * dt * a_cl)
    x = np.asarray(x0, dtype=float).reshape(2)
    rows = np.empty((n + 1, 5))
    c_row, k_row = model.c[0], k[0]
    for i in range(n + 1):
        rows[i] = (i * dt, x[0], x[1], c_row @ x, -(k_row @ x))
        x = step @ x
    return rows
