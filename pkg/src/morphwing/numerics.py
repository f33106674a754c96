"""Dense linear-algebra and integration kernel.

Everything in here is a pure function of its inputs; matrices are plain
numpy arrays.  The solvers are deliberately simple direct methods sized
for the small systems the rest of the toolkit produces (n <= ~30).
"""

import numpy as np

from .errors import (
    BadSampling,
    NoStabilizingSolution,
    NonFiniteState,
    NotHurwitz,
    RankDeficient,
)

# Pivot below this fraction of the largest entry counts as singular.
_SINGULAR_RTOL = 1e-12


def _solve(A, b, rtol=_SINGULAR_RTOL):
    """Partial-pivot LU solve with an explicit singularity check."""
    A = np.asarray(A, dtype=float)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise RankDeficient("all-zero matrix")
    # LAPACK's getrf does the pivoting; detect near-singularity via rcond.
    if rtol > 0.0 and 1.0 / np.linalg.cond(A, 1) < rtol:
        raise RankDeficient(f"matrix numerically singular (cond={np.linalg.cond(A, 1):.3e})")
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(str(exc)) from exc


def pseudo_inverse(B):
    """Right pseudo-inverse B^T (B B^T)^-1 of a full-row-rank p x m matrix.

    Raises RankDeficient when B B^T is numerically singular.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    gram = B @ B.T
    try:
        return B.T @ _solve(gram, np.eye(B.shape[0]))
    except RankDeficient as exc:
        raise RankDeficient(f"row rank of B below {B.shape[0]}: {exc}") from exc


def hurwitz_margin(A):
    """Largest eigenvalue real part (negative for a Hurwitz matrix)."""
    return float(np.max(np.linalg.eigvals(np.asarray(A, dtype=float)).real))


def solve_lyapunov(A, Q, rtol=_SINGULAR_RTOL):
    """Solve P A + A^T P = -Q for symmetric P > 0.

    Uses the Kronecker-product linear system, which is fine at the sizes
    this toolkit ever sees.  A must be Hurwitz and Q symmetric PD.
    rtol=0 skips the conditioning gate (used by iterative callers that
    validate their final residual independently).
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if hurwitz_margin(A) >= -1e-12:
        raise NotHurwitz(f"eigenvalue real part {hurwitz_margin(A):.3e} >= -1e-12")
    # vec(PA + A^T P) = (A^T (x) I + I (x) A^T) vec(P)
    K = np.kron(A.T, np.eye(n)) + np.kron(np.eye(n), A.T)
    P = _solve(K, -Q.reshape(-1), rtol=rtol).reshape(n, n)
    return 0.5 * (P + P.T)


def _stabilizing_gain(A, B, R):
    """Initial stabilizing gain via Bass's eigenvalue-shift construction."""
    n = A.shape[0]
    if hurwitz_margin(A) < -1e-9:
        return np.zeros((B.shape[1], n))
    beta = 2.0 * max(np.max(np.abs(np.linalg.eigvals(A))), 1.0)
    # (A + beta I) Z + Z (A + beta I)^T = 2 B R^-1 B^T, K0 = R^-1 B^T Z^-1
    As = A + beta * np.eye(n)
    Z = solve_lyapunov(-As.T, 2.0 * B @ np.linalg.solve(R, B.T), rtol=0.0)
    try:
        K0 = np.linalg.solve(R, B.T) @ _solve(Z, np.eye(n))
    except RankDeficient as exc:
        raise NoStabilizingSolution(f"could not seed a stabilizing gain: {exc}") from exc
    if hurwitz_margin(A - B @ K0) >= 0.0:
        raise NoStabilizingSolution("Bass seed gain failed to stabilize")
    return K0


def care_residual(A, B, Q, R, S):
    """Infinity norm of A^T S + S A - S B R^-1 B^T S + Q."""
    res = A.T @ S + S @ A - S @ B @ np.linalg.solve(R, B.T @ S) + Q
    return float(np.max(np.abs(res)))


def solve_care(A, B, Q, R, max_iter=200, tol=1e-10):
    """Stabilizing solution of A^T S + S A - S B R^-1 B^T S + Q = 0.

    Newton-Kleinman iteration: each step solves one Lyapunov equation for
    the current closed-loop matrix.  Seeded with a stabilizing gain from
    eigenvalue shifting when A itself is unstable.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.reshape(A.shape[0], -1)
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))

    try:
        K = _stabilizing_gain(A, B, R)
    except NotHurwitz as exc:
        raise NoStabilizingSolution(str(exc)) from exc
    S = np.zeros_like(A)
    for _ in range(max_iter):
        Ak = A - B @ K
        Qk = Q + K.T @ R @ K
        # Qk may be only PSD; shift by a tiny multiple of I keeps the
        # Lyapunov solve well posed without moving the fixed point.
        try:
            S_new = solve_lyapunov(Ak, Qk + 1e-14 * np.eye(A.shape[0]), rtol=0.0)
        except NotHurwitz as exc:
            raise NoStabilizingSolution(f"iterate lost stability: {exc}") from exc
        K = np.linalg.solve(R, B.T @ S_new)
        if np.max(np.abs(S_new - S)) < tol * max(1.0, np.max(np.abs(S_new))):
            S = S_new
            break
        S = S_new
    else:
        raise NoStabilizingSolution(f"no convergence in {max_iter} iterations")
    if care_residual(A, B, Q, R, S) > 1e-8 * max(1.0, float(np.max(np.abs(Q))), float(np.max(np.abs(S))) ** 2):
        raise NoStabilizingSolution("converged iterate does not satisfy the Riccati equation")
    return 0.5 * (S + S.T)


class SecondOrderFilter:
    """Discrete unit-DC-gain second-order low pass w^2 / (s^2 + 2 z w s + w^2).

    Discretized with the bilinear (trapezoidal) map, which preserves the
    DC gain and stability exactly.  Holds two states; step() advances one
    sample.  Vector-valued states are supported so one instance can
    filter a bank of identical channels.
    """

    def __init__(self, zeta, omega, dt, channels=1):
        if not (zeta > 0.0 and omega > 0.0 and dt > 0.0):
            raise BadSampling("zeta, omega, dt must all be positive")
        if omega * dt >= 1.0:
            raise BadSampling(f"omega*dt = {omega * dt:.3f} >= 1; sample faster or slow the filter")
        self.zeta = zeta
        self.omega = omega
        self.dt = dt
        k = 2.0 / dt
        a0 = k * k + 2.0 * zeta * omega * k + omega * omega
        self.b = omega * omega / a0 * np.array([1.0, 2.0, 1.0])
        self.a = np.array([
            (2.0 * omega * omega - 2.0 * k * k) / a0,
            (k * k - 2.0 * zeta * omega * k + omega * omega) / a0,
        ])
        self.state = np.zeros((2, channels)) if channels > 1 else np.zeros(2)

    def step(self, x):
        """Advance one sample (direct form II transposed)."""
        y = self.b[0] * x + self.state[0]
        self.state[0] = self.b[1] * x - self.a[0] * y + self.state[1]
        self.state[1] = self.b[2] * x - self.a[1] * y
        return y

    def reset(self):
        self.state = np.zeros_like(self.state)

    def continuous_magnitude(self, w):
        """|H(jw)| of the underlying continuous-time filter."""
        num = self.omega ** 2
        den = complex(self.omega ** 2 - w ** 2, 2.0 * self.zeta * self.omega * w)
        return abs(num / den)


class LeadLagFilter:
    """Bilinear-discretized first-order section g (1 + s/a) / (1 + s/b).

    a < b gives phase lead between the corner frequencies, a > b phase
    lag; DC gain is g.  Supports vector channels like SecondOrderFilter.
    """

    def __init__(self, a, b, dt, gain=1.0, channels=1):
        if not (a > 0.0 and b > 0.0 and dt > 0.0):
            raise BadSampling("a, b, dt must all be positive")
        k = 2.0 / dt
        self.a_z = a
        self.b_z = b
        self.gain = gain
        scale = gain * b / a
        d0 = b + k
        self.num = scale * np.array([a + k, a - k]) / d0
        self.den = (b - k) / d0
        self.state = np.zeros(channels) if channels > 1 else 0.0

    def step(self, x):
        y = self.num[0] * x + self.state
        self.state = self.num[1] * x - self.den * y
        return y

    def reset(self):
        self.state = np.zeros_like(self.state) if np.ndim(self.state) else 0.0


def discretize_filter(zeta, omega, dt, channels=1):
    """Build a bilinear-discretized second-order low-pass filter."""
    return SecondOrderFilter(zeta, omega, dt, channels=channels)


def integrate_step(f, x, u, dt):
    """One fixed-step RK4 update of x' = f(x, u)."""
    if dt <= 0.0:
        raise BadSampling("dt must be positive")
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState("RK4 step produced non-finite state")
    return x_next
