"""Per-step incremental control allocation.

Three routes to split a pseudo-control demand over the servos:

* pseudo-inverse — exact, unconstrained, minimum-norm;
* constrained QP — weighted tracking objective plus a small secondary
  term pulling toward a preferred command, subject to the compiled
  servo-limit inequality;
* the same QP posed in virtual-shape coordinates, which shrinks the
  decision space to q < m and keeps the spanwise profile smooth.

The QP solver is a primal active-set method sized for dense problems
with a few dozen rows, with warm starting between consecutive steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .constraints import LinearInequality
from .errors import DimensionMismatch, RankDeficient
from .numerics import pseudo_inverse
from .shapes import ShapeBasis

_FEAS_TOL = 1e-9
_ITER_CAP = 50


@dataclass
class AllocationProblem:
    """One time-step's allocation data.

    B_eff maps command increments to pseudo-control (load-units per
    deg), target is the demanded pseudo-control increment, W1/W2 weight
    the tracking and secondary objectives, sigma trades them off, u0 is
    the current command and u_star the preferred one.
    """

    B_eff: np.ndarray
    target: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    sigma: float
    u0: np.ndarray
    u_star: np.ndarray
    ineq: LinearInequality

    def __post_init__(self):
        self.B_eff = np.atleast_2d(np.asarray(self.B_eff, dtype=float))
        self.target = np.asarray(self.target, dtype=float)
        self.u0 = np.asarray(self.u0, dtype=float)
        self.u_star = np.asarray(self.u_star, dtype=float)
        self.W1 = np.asarray(self.W1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        if self.B_eff.shape[0] != self.target.size:
            raise DimensionMismatch("B_eff rows must match target length")
        if not (0.0 < self.sigma < 1.0):
            raise DimensionMismatch(f"sigma must be in (0, 1), got {self.sigma}")


@dataclass
class AllocationResult:
    delta_u: np.ndarray
    eps_ca: np.ndarray
    iterations: int
    active_set: tuple
    status: str  # Optimal | IterationCap | Infeasible
    delta_u_virtual: np.ndarray = field(default=None, repr=False)


def allocate_pseudo_inverse(B_eff, target):
    """Minimum-norm exact increment delta_u = B+ target."""
    return pseudo_inverse(B_eff) @ np.asarray(target, dtype=float)


def _hessian_chol(H):
    """Cholesky factor of H, with a tiny jitter retry if H is only PSD."""
    try:
        return np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(H + 1e-12 * np.eye(H.shape[0]))


class ActiveSetQP:
    """Primal active-set solver for min 0.5 x'Hx + g'x s.t. A x <= b.

    One constraint is added or dropped per iteration; each equality
    subproblem is solved through the KKT system.  The start point is
    x = 0, which the constraint compiler guarantees feasible.  The
    working set from the previous solve can seed the next one.
    """

    def __init__(self, tol=_FEAS_TOL, max_iter=_ITER_CAP):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, H, g, A, b, warm_start=()):
        n = g.size
        L = _hessian_chol(H)
        x = np.zeros(n)
        # keep only warm-start rows active at x = 0; drop the rest
        working = [i for i in warm_start if b[i] <= self.tol]
        # guard against a degenerate (rank-deficient) warm working set
        while working and np.linalg.matrix_rank(A[working], tol=1e-10) < len(working):
            working.pop()

        iterations = 0
        for _ in range(self.max_iter):
            iterations += 1
            x_eq, lam = self._kkt_solve(H, L, g, A, b, x, working)
            step = x_eq - x
            if np.max(np.abs(step)) <= 1e-12:
                # at the working-set minimizer: optimal unless a
                # negative multiplier says a constraint should leave
                if len(working) == 0 or np.min(lam) >= -self.tol:
                    return x, iterations, tuple(sorted(working)), "Optimal"
                worst = np.min(lam)
                candidates = [working[j] for j in range(len(working)) if lam[j] <= worst + 1e-14]
                drop_row = min(candidates)
                working.remove(drop_row)
                continue
            # longest feasible step toward x_eq; blocking-row ties go to
            # the lowest row index
            alpha, block = 1.0, -1
            Astep = A @ step
            slack = b - A @ x
            for i in range(A.shape[0]):
                if i in working or Astep[i] <= 1e-14:
                    continue
                a_i = slack[i] / Astep[i]
                if a_i < alpha - 1e-12:
                    alpha, block = a_i, i
            x = x + max(alpha, 0.0) * step
            if block >= 0:
                working.append(block)
            elif alpha >= 1.0:
                # full step with no blocker: loop once more to read the
                # multipliers at the subproblem minimizer
                continue
        return x, iterations, tuple(sorted(working)), "IterationCap"

    @staticmethod
    def _kkt_solve(H, L, g, A, b, x, working):
        """Minimize over the affine set where the working rows are tight.

        Solves [H A_w'; A_w 0][x; lam] = [-g; b_w] for the full working
        set; the current iterate already satisfies A_w x = b_w.
        """
        if not working:
            y = np.linalg.solve(L, -g)
            return np.linalg.solve(L.T, y), np.empty(0)
        Aw = A[working]
        k = len(working)
        KKT = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]])
        rhs = np.concatenate([-g, b[working]])
        try:
            sol = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            # dependent working rows (possible after projection into
            # virtual space): the primal part is still unique because H
            # is positive definite; take the minimum-norm multipliers
            sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        return sol[: H.shape[0]], sol[H.shape[0]:]


def _solve_problem(problem, B, A, b, warm_start, solver, du_pref):
    """Assemble the QP data and run the active-set solver.

    du_pref is the preferred increment the secondary term pulls toward
    (u_star - u0 expressed in the decision space).
    """
    H = B.T @ problem.W1 @ B + problem.sigma * problem.W2
    g = -B.T @ problem.W1 @ problem.target - problem.sigma * problem.W2 @ du_pref
    return solver.solve(H, g, A, b, warm_start=warm_start)


def allocate_qp(problem, solver=None, warm_start=()):
    """Constrained allocation in servo space."""
    solver = solver or ActiveSetQP()
    A, b = problem.ineq.A, problem.ineq.b
    x, iterations, active, status = _solve_problem(
        problem, problem.B_eff, A, b, warm_start, solver,
        du_pref=problem.u_star - problem.u0,
    )
    eps = problem.B_eff @ x - problem.target
    return AllocationResult(
        delta_u=x, eps_ca=eps, iterations=iterations, active_set=active, status=status,
    )


def allocate_qp_virtual(problem, basis, solver=None, warm_start=()):
    """Constrained allocation over virtual-shape coefficients.

    The effectiveness and inequality are both composed with Phi so the
    QP searches only q coefficients; the returned increment is mapped
    back to servo space and satisfies the original inequality by
    construction.  The preferred-command pull u_star - u0 is projected
    into virtual space by least squares.
    """
    solver = solver or ActiveSetQP()
    Phi = basis.Phi if isinstance(basis, ShapeBasis) else np.asarray(basis, dtype=float)
    q = Phi.shape[1]
    B_v = problem.B_eff @ Phi
    if np.linalg.matrix_rank(B_v, tol=1e-10) < problem.B_eff.shape[0]:
        raise RankDeficient("effectiveness composed with the shape basis lost row rank")
    A_v = problem.ineq.A @ Phi
    W2_v = problem.W2 if problem.W2.shape[0] == q else np.eye(q)
    du_pref_v, *_ = np.linalg.lstsq(Phi, problem.u_star - problem.u0, rcond=None)
    virtual = AllocationProblem(
        B_eff=B_v, target=problem.target, W1=problem.W1, W2=W2_v,
        sigma=problem.sigma, u0=np.zeros(q), u_star=du_pref_v,
        ineq=LinearInequality(A=A_v, b=problem.ineq.b, row_labels=problem.ineq.row_labels),
    )
    x_v, iterations, active, status = _solve_problem(
        virtual, B_v, A_v, problem.ineq.b, warm_start, solver, du_pref=du_pref_v,
    )
    delta_u = Phi @ x_v
    eps = problem.B_eff @ delta_u - problem.target
    return AllocationResult(
        delta_u=delta_u, eps_ca=eps, iterations=iterations, active_set=active,
        status=status, delta_u_virtual=x_v,
    )
