"""Baseline controller: integral-augmented LQR plus steady-state Kalman
filter, commanding through the virtual shape basis.

The regulator is designed on an identified model (the truth perturbed by
a configured multiplicative error), not on the twin itself: this
controller needs the full state-space model, and the comparison is only
meaningful when that model is imperfect.  There is no constrained
allocation on this path; commands are clamped to position limits at the
end and the saturation is flagged.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotDetectable, NotStabilizable, NoStabilizingSolution
from .numerics import hurwitz_margin, integrate_step, solve_care


@dataclass
class DesignModel:
    """State-space quadruple plus gust column used for control design."""

    A: np.ndarray
    B: np.ndarray
    B_g: np.ndarray
    C: np.ndarray
    D: np.ndarray


def perturb_model(model, rel=0.1, seed=0):
    """Identified-model stand-in: truth with multiplicative entry noise."""
    rng = np.random.default_rng(seed)

    def p(M):
        M = np.asarray(M, dtype=float)
        return M * (1.0 + rel * rng.uniform(-1.0, 1.0, size=M.shape))

    return DesignModel(A=p(model.A), B=p(model.B), B_g=p(model.B_g),
                       C=p(model.C), D=p(model.D))


def exact_model(model):
    """Design model equal to the truth (the idealized comparison case)."""
    return DesignModel(A=model.A.copy(), B=model.B.copy(), B_g=model.B_g.copy(),
                       C=model.C.copy(), D=model.D.copy())


@dataclass
class LqrDesign:
    A_aug: np.ndarray
    B_aug: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    K_X: np.ndarray
    K_r: np.ndarray


def design_lqr(design_model, Phi, Q=None, R=None, q_int_weight=10.0, r_weight=260.0):
    """Integral-augmented regulator over the virtual input coefficients.

    The plant state is augmented with the integral of the load tracking
    error; the default weights penalize the load outputs, the integral
    states, and the virtual inputs.
    """
    A, B = design_model.A, design_model.B
    C_b, D_b = design_model.C, design_model.D
    Phi = np.asarray(Phi, dtype=float)
    n = A.shape[0]
    p = C_b.shape[0]
    q = Phi.shape[1]
    A_aug = np.block([[A, np.zeros((n, p))], [C_b, np.zeros((p, p))]])
    B_aug = np.vstack([B, D_b]) @ Phi
    if Q is None:
        Q = np.zeros((n + p, n + p))
        Q[:n, :n] = C_b.T @ C_b
        Q[n:, n:] = q_int_weight * np.eye(p)
    if R is None:
        R = r_weight * np.eye(q)
    try:
        S = solve_care(A_aug, B_aug, Q, R)
    except NoStabilizingSolution as exc:
        raise NotStabilizable(str(exc)) from exc
    K_X = -np.linalg.solve(R, B_aug.T @ S)
    if hurwitz_margin(A_aug + B_aug @ K_X) >= 0.0:
        raise NotStabilizable("regulator failed to stabilize the augmented system")
    M = S @ B_aug @ np.linalg.solve(R, B_aug.T) - A_aug.T
    K_r = -np.linalg.solve(R, B_aug.T @ np.linalg.solve(M, S))
    return LqrDesign(A_aug=A_aug, B_aug=B_aug, Q=Q, R=R, S=S, K_X=K_X, K_r=K_r)


@dataclass
class KalmanDesign:
    L: np.ndarray
    Q_k: np.ndarray
    R_k: np.ndarray
    N_k: np.ndarray


def design_kalman(design_model, Q_k, R_k, N_k):
    """Steady-state filter gain with process/measurement noise cross term.

    The scalar process noise enters through the gust column.  The cross
    covariance N_k is handled by the standard shift of the filter
    Riccati data; the gain is L = (P C' + G N_k) R_k^-1.
    """
    A, C = design_model.A, design_model.C
    G = design_model.B_g.reshape(-1, 1)
    Q_k = np.atleast_2d(np.asarray(Q_k, dtype=float))
    R_k = np.atleast_2d(np.asarray(R_k, dtype=float))
    N_k = np.asarray(N_k, dtype=float).reshape(1, -1)
    Rinv_N = np.linalg.solve(R_k, N_k.T)      # p x 1
    A_s = A - G @ Rinv_N.T @ C
    Q_s = G @ (Q_k - N_k @ Rinv_N) @ G.T
    # guard: the shifted process covariance must stay PSD
    Q_s = 0.5 * (Q_s + Q_s.T)
    w = np.linalg.eigvalsh(Q_s)
    if w[0] < -1e-12 * max(1.0, float(w[-1])):
        raise NotDetectable("cross covariance exceeds process covariance; filter data invalid")
    Q_s = Q_s - min(w[0], 0.0) * np.eye(A.shape[0])
    try:
        P = solve_care(A_s.T, C.T, Q_s, R_k)
    except NoStabilizingSolution as exc:
        raise NotDetectable(str(exc)) from exc
    L = (P @ C.T + G @ N_k) @ np.linalg.inv(R_k)
    if hurwitz_margin(A - L @ C) >= 0.0:
        raise NotDetectable("estimator dynamics not stable")
    return KalmanDesign(L=L, Q_k=Q_k, R_k=R_k, N_k=N_k)


class LqgController:
    """Closed-loop composition of the regulator and the state source.

    With a KalmanDesign the internal estimate feeds the regulator; with
    kalman=None the caller must supply the true plant state each step
    (the idealized full-information case).  Commands are servo angles
    after the shape mapping, clamped to the position limits.
    """

    def __init__(self, lqr, design_model, Phi, limits, dt, kalman=None):
        self.lqr = lqr
        self.model = design_model
        self.Phi = np.asarray(Phi, dtype=float)
        self.limits = limits
        self.dt = dt
        self.kalman = kalman
        # the estimator can be much faster than the controller tick, so
        # integrate it with enough substeps to keep fixed-step RK4 stable
        if kalman is not None:
            lam = np.max(np.abs(np.linalg.eigvals(design_model.A - kalman.L @ design_model.C)))
            self.n_sub = max(1, int(np.ceil(dt * float(lam) / 2.0)))
        else:
            self.n_sub = 1
        n = design_model.A.shape[0]
        p = design_model.C.shape[0]
        self.x_hat = np.zeros(n)
        self.z_int = np.zeros(p)
        self._prev_integrand = np.zeros(p)
        self.u_prev = np.zeros(self.Phi.shape[0])
        self.last = {}

    def step(self, y_meas, y_ref, x_true=None):
        """One controller tick: measurement (or true state) in, servo command out."""
        y_meas = np.asarray(y_meas, dtype=float)
        y_ref = np.asarray(y_ref, dtype=float)
        A, B, C, D = self.model.A, self.model.B, self.model.C, self.model.D
        if self.kalman is not None:
            L = self.kalman.L
            u = self.u_prev

            def f(xh, _):
                return A @ xh + B @ u + L @ (y_meas - C @ xh - D @ u)

            h = self.dt / self.n_sub
            for _ in range(self.n_sub):
                self.x_hat = integrate_step(f, self.x_hat, None, h)
        else:
            if x_true is None:
                raise ValueError("full-information mode needs the true state")
            self.x_hat = np.asarray(x_true, dtype=float)

        integrand = C @ self.x_hat + D @ self.u_prev - y_ref
        self.z_int = self.z_int + 0.5 * self.dt * (integrand + self._prev_integrand)
        self._prev_integrand = integrand

        X = np.concatenate([self.x_hat, self.z_int])
        y_r_aug = np.concatenate([np.zeros(A.shape[0]), -y_ref])
        u_v = self.lqr.K_X @ X + self.lqr.K_r @ y_r_aug
        u = self.Phi @ u_v
        u_clamped = np.clip(u, self.limits.u_min, self.limits.u_max)
        saturated = bool(np.any(np.abs(u - u_clamped) > 0.0))
        self.u_prev = u_clamped
        self.last = {"u_v": u_v, "saturated": saturated, "x_hat": self.x_hat.copy()}
        return u_clamped
