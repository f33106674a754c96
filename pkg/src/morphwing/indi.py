"""Incremental load controller and its boundedness certificates.

The controller output is the pair of integrated wing-root loads, so the
output derivative is the measured loads themselves — no numerical
differentiation appears anywhere in the loop.  Each tick the controller
forms a pseudo-control from the load references and the integral
tracking error, subtracts the current measured loads, and asks an
allocator for a command increment realizing the difference.

Measured loads lag the issued commands (servo dynamics, transport
delay, measurement low pass).  A lag model of that chain runs on the
commanded-load signal so the controller can subtract the response it
has already commanded but not yet seen; without this correction the
pure incremental loop at 66.7 Hz is unstable against the combined lag.
The increment itself is still taken from the last issued command, so
the compiled position/rate/relative constraints remain exact.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .allocator import AllocationProblem, allocate_qp, allocate_qp_virtual
from .constraints import assemble, rate_box
from .errors import GainNotContractive, InfeasibleCurrentState, NotHurwitz
from .numerics import (
    LeadLagFilter,
    SecondOrderFilter,
    hurwitz_margin,
    pseudo_inverse,
    solve_lyapunov,
)


def pseudo_control(e, y_r_dot, K):
    """nu_c = y_r_dot - K e."""
    return np.asarray(y_r_dot, dtype=float) - np.asarray(K, dtype=float) @ np.asarray(e, dtype=float)


class LagModel:
    """Discrete model of the command-to-measurement lag chain.

    A cascade of second-order sections plus an integer-tick transport
    delay, run on the commanded-load vector.  Feeding the commanded
    loads through this model yields the part of the command history the
    measurement has already caught up with.
    """

    def __init__(self, filters, delay_ticks, channels=2):
        self.filters = list(filters)
        self.delay = deque(
            [np.zeros(channels) for _ in range(delay_ticks)]
        ) if delay_ticks > 0 else None
        self.last_output = np.zeros(channels)

    def step(self, v):
        v = np.asarray(v, dtype=float)
        if self.delay is not None:
            out = self.delay.popleft()
            self.delay.append(v.copy())
            v = out
        for f in self.filters:
            v = f.step(v)
        self.last_output = np.asarray(v, dtype=float)
        return self.last_output


def default_lag_model(dt, channels=2, with_measurement_filter=True, lead=None):
    """Lag model of the command-to-measurement chain.

    Servo section, one controller tick of transport delay, the
    measurement low pass when it is in the loop, and an optional lead
    section (a, b, gain) shaping the effective loop compensator.
    """
    filters = [SecondOrderFilter(0.71, 16.52, dt, channels=channels)]
    if with_measurement_filter:
        filters.append(SecondOrderFilter(0.8, 10.0, dt, channels=channels))
    if lead is not None:
        a, b, gain = lead
        filters.append(LeadLagFilter(a, b, dt, gain=gain, channels=channels))
    return LagModel(filters, delay_ticks=1, channels=channels)


class IndiController:
    """Incremental controller with constrained allocation.

    mode selects the allocation route: "pi" (pseudo-inverse, no
    constraints), "qp" (servo-space QP), "qp-v" (QP over virtual shape
    coefficients; requires basis).
    """

    def __init__(self, B_eff, K, limits, dt, mode="qp-v", basis=None,
                 sigma=1e-3, W1=None, W2=None, lag_model="default"):
        self.B_eff = np.atleast_2d(np.asarray(B_eff, dtype=float))
        p, m = self.B_eff.shape
        self.K = np.asarray(K, dtype=float)
        if hurwitz_margin(-self.K) >= 0.0:
            raise NotHurwitz("error-feedback gain must make -K Hurwitz")
        self.limits = limits
        self.dt = dt
        self.mode = mode
        self.basis = basis
        if mode == "qp-v" and basis is None:
            raise ValueError("virtual-shape mode needs a basis")
        self.sigma = sigma
        self.W1 = np.eye(p) if W1 is None else np.asarray(W1, dtype=float)
        if W2 is None:
            self.W2 = np.eye(basis.q) if (mode == "qp-v" and basis is not None) else np.eye(m)
        else:
            self.W2 = np.asarray(W2, dtype=float)
        if lag_model == "default":
            self.lag = default_lag_model(dt, channels=p)
        else:
            self.lag = lag_model  # LagModel instance or None
        self.u_prev = np.zeros(m)
        self.e = np.zeros(p)
        self._warm = ()
        self.last = {}

    def step(self, y_meas, y_ref):
        """One controller tick: measured loads in, total command out.

        y_meas are the filtered load measurements, y_ref the load
        references (which are also the derivative of the integrated-load
        reference, so they enter the pseudo-control directly).
        """
        y_meas = np.asarray(y_meas, dtype=float)
        y_ref = np.asarray(y_ref, dtype=float)
        self.e = self.e + self.dt * (y_meas - y_ref)
        nu_c = pseudo_control(self.e, y_ref, self.K)

        v_cmd = self.B_eff @ self.u_prev
        if self.lag is not None:
            hedge = v_cmd - self.lag.last_output
        else:
            hedge = np.zeros_like(v_cmd)
        # estimated current loads = measurement + commanded-but-unseen part
        target = nu_c - y_meas - hedge

        delta_u_virtual = None
        if self.mode == "pi":
            delta_u = pseudo_inverse(self.B_eff) @ target
            u = np.clip(self.u_prev + delta_u, self.limits.u_min, self.limits.u_max)
            eps_ca = self.B_eff @ (u - self.u_prev) - target
            iterations, active, status = 0, (), "Optimal"
        else:
            try:
                ineq = assemble(self.limits, self.u_prev)
            except InfeasibleCurrentState:
                ineq = rate_box(self.limits)
            problem = AllocationProblem(
                B_eff=self.B_eff, target=target, W1=self.W1, W2=self.W2,
                sigma=self.sigma, u0=self.u_prev, u_star=self.u_prev, ineq=ineq,
            )
            if self.mode == "qp-v":
                res = allocate_qp_virtual(problem, self.basis, warm_start=self._warm)
            else:
                res = allocate_qp(problem, warm_start=self._warm)
            self._warm = res.active_set
            if res.status == "Infeasible":
                u, eps_ca = self.u_prev.copy(), -target
            else:
                u = self.u_prev + res.delta_u
                eps_ca = res.eps_ca
            iterations, active, status = res.iterations, res.active_set, res.status
            delta_u_virtual = res.delta_u_virtual

        self.u_prev = u
        if self.lag is not None:
            self.lag.step(self.B_eff @ u)
        self.last = {
            "nu_c": nu_c, "target": target, "hedge": hedge, "eps_ca": eps_ca,
            "iterations": iterations, "active_set": active, "status": status,
            "e": self.e.copy(), "delta_u_virtual": delta_u_virtual,
        }
        return u


@dataclass
class BoundCertificate:
    """Numerical boundedness certificate evaluated on a logged run."""

    P: np.ndarray
    mu1: float
    b_bar: float
    eps_bar_estimate: float
    ultimate_bound: float
    recursion_bound: float
    dnu_bar: float
    eps_ca_bar: float
    residual_bar: float
    eps_tail_max: float
    e_tail_max: float
    recursion_ok: bool
    ultimate_ok: bool
    max_identity_residual: float = field(default=np.nan)


def recursion_terms(nu_c, eps_ca, y_true, B_true, B_model):
    """Per-tick pieces of the incremental-error recursion.

    eps(k) = y_true(k) - nu_c(k-1) is the realized pseudo-control error;
    the recursion predicts eps(k+1) = E (eps(k) - dnu_c(k)) + K_B
    eps_ca(k) + r(k) with E = I - K_B, K_B = B_true B_model^+, and r(k)
    absorbing linearization remainder plus disturbance increments.
    Returns (eps, dnu, residual r).
    """
    nu_c = np.asarray(nu_c, dtype=float)
    eps_ca = np.asarray(eps_ca, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    K_B = np.atleast_2d(B_true) @ pseudo_inverse(np.atleast_2d(B_model))
    E = np.eye(K_B.shape[0]) - K_B
    eps = y_true[1:] - nu_c[:-1]          # eps[j] is eps(k=j+1)
    dnu = np.diff(nu_c, axis=0)           # dnu[j] = nu_c(j+1) - nu_c(j)
    # residual r(k) for k = 1..N-2: eps(k+1) - E(eps(k) - dnu(k-1)) - K_B eps_ca(k),
    # with eps(k) - dnu(k-1) = y(k) - nu_c(k) the pre-increment error
    pred = (eps[:-1] - dnu[:-1]) @ E.T + eps_ca[1:-1] @ K_B.T
    residual = eps[1:] - pred
    return eps, dnu, residual


def certify_bounds(K, B_true, B_model, nu_c, eps_ca, y_true, e_log, theta1=0.5):
    """Evaluate the ultimate-bound and recursion-bound certificates.

    Inputs are tick-rate logs: nu_c and eps_ca as issued, y_true the
    noise-free plant loads sampled at the ticks, e_log the integral
    tracking error.  Raises GainNotContractive when the effectiveness
    mismatch gain b_bar reaches 1.
    """
    K = np.asarray(K, dtype=float)
    K_B = np.atleast_2d(B_true) @ pseudo_inverse(np.atleast_2d(B_model))
    b_bar = float(np.linalg.norm(np.eye(K_B.shape[0]) - K_B, 2))
    if b_bar >= 1.0:
        raise GainNotContractive(f"effectiveness mismatch gain {b_bar:.3f} >= 1")

    P = solve_lyapunov(-K, np.eye(K.shape[0]))
    mu1 = 2.0 * float(np.linalg.norm(P, 2)) / (1.0 - theta1)
    eigs = np.linalg.eigvalsh(P)
    cond_sqrt = float(np.sqrt(eigs[-1] / eigs[0]))

    eps, dnu, residual = recursion_terms(nu_c, eps_ca, y_true, B_true, B_model)
    eps_norm = np.linalg.norm(eps, axis=1)
    eps_bar = float(np.max(eps_norm))
    dnu_bar = float(np.max(np.linalg.norm(dnu, axis=1)))
    eps_ca_bar = float(np.max(np.linalg.norm(np.asarray(eps_ca), axis=1)))
    residual_bar = float(np.max(np.linalg.norm(residual, axis=1))) if len(residual) else 0.0

    recursion_bound = (dnu_bar * b_bar + residual_bar + (b_bar + 1.0) * eps_ca_bar) / (1.0 - b_bar)
    ultimate_bound = cond_sqrt * mu1 * eps_bar

    half = len(eps_norm) // 2
    eps_tail = float(np.max(eps_norm[half:]))
    e_norm = np.linalg.norm(np.asarray(e_log, dtype=float), axis=1)
    e_tail = float(np.max(e_norm[len(e_norm) // 2:]))

    return BoundCertificate(
        P=P, mu1=mu1, b_bar=b_bar, eps_bar_estimate=eps_bar,
        ultimate_bound=ultimate_bound, recursion_bound=recursion_bound,
        dnu_bar=dnu_bar, eps_ca_bar=eps_ca_bar, residual_bar=residual_bar,
        eps_tail_max=eps_tail, e_tail_max=e_tail,
        recursion_ok=eps_tail <= recursion_bound + 1e-12,
        ultimate_ok=e_tail <= ultimate_bound + 1e-12,
    )
