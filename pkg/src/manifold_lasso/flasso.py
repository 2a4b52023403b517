"""Functional (group) lasso on per-point gradient designs.

The problem is

    J(beta) = 1/2 sum_i sum_k ||Y[i,:,k] - X[i] beta[i,:,k]||^2
              + lam / sqrt(m n) * sum_j ||beta[:, j, :]||_F

with ``X`` of shape ``(n, d, p)``, ``Y`` of shape ``(n, d, m)`` and ``beta``
of shape ``(n, p, m)``. For ``m = 1`` the penalty weight is ``lam / sqrt(n)``.
Group ``j`` collects the ``n m`` coefficients of dictionary entry ``j``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, ValidationError

MAX_SWEEPS = 100_000
SUPPORT_RTOL = 1e-8
# groups whose correlation norm is within rounding of tau stay exactly zero
ZERO_SLACK = 1e-13


@dataclass(frozen=True)
class LassoProblem:
    X: np.ndarray
    Y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 2:
            Y = Y[:, :, None]
        if X.ndim != 3 or Y.ndim != 3 or X.shape[:2] != Y.shape[:2]:
            raise ValidationError(f"inconsistent shapes X{X.shape}, Y{Y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValidationError("design and response must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        names = tuple(self.names) if self.names else tuple(f"g{j + 1}" for j in range(X.shape[2]))
        if len(names) != X.shape[2]:
            raise ValidationError("one name per dictionary entry is required")
        object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def p(self):
        return self.X.shape[2]

    @property
    def m(self):
        return self.Y.shape[2]

    def penalty_weight(self, lam):
        """Coefficient of the sum of group norms for regularization ``lam``."""
        return lam / math.sqrt(self.m * self.n)

    def predict(self, beta):
        return np.einsum("idp,ipm->idm", self.X, beta)


@dataclass
class LassoSolution:
    beta: np.ndarray
    lam: float
    objective: float
    duality_gap: float
    iterations: int
    group_norms: np.ndarray = field(init=False)
    support: tuple = field(init=False)
    objective_history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.group_norms = np.sqrt(np.einsum("ipm,ipm->p", self.beta, self.beta))
        self.support = support_of(self.group_norms)

    def coordinate_norms(self):
        """``||beta[:, j, k]||`` as a ``(p, m)`` array."""
        return np.sqrt(np.einsum("ipm,ipm->pm", self.beta, self.beta))


def support_of(group_norms, rtol=SUPPORT_RTOL):
    top = float(np.max(group_norms)) if len(group_norms) else 0.0
    if top == 0.0:
        return ()
    return tuple(int(j) for j in np.flatnonzero(group_norms > rtol * top))


def objective(problem, beta, lam):
    R = problem.Y - problem.predict(beta)
    norms = np.sqrt(np.einsum("ipm,ipm->p", beta, beta))
    return 0.5 * float(np.sum(R * R)) + problem.penalty_weight(lam) * float(norms.sum())


def _correlations(problem, R):
    """``X_j^T R`` for every group, shape ``(n, p, m)``."""
    return np.einsum("idp,idm->ipm", problem.X, R)


def dual_gap(problem, beta, lam, R=None):
    """Primal objective, dual objective and their gap for ``beta``.

    The dual point is the residual scaled into the feasible set
    ``max_j ||X_j^T theta|| <= tau``.
    """
    tau = problem.penalty_weight(lam)
    if R is None:
        R = problem.Y - problem.predict(beta)
    norms = np.sqrt(np.einsum("ipm,ipm->p", beta, beta))
    primal = 0.5 * float(np.sum(R * R)) + tau * float(norms.sum())
    C = _correlations(problem, R)
    worst = float(np.sqrt(np.einsum("ipm,ipm->p", C, C)).max())
    scale = 1.0 if worst <= tau else tau / worst
    Y = problem.Y
    diff = Y - scale * R
    dual = 0.5 * float(np.sum(Y * Y)) - 0.5 * float(np.sum(diff * diff))
    return primal, dual, primal - dual


def kkt_violation(problem, beta, lam, R=None):
    """Largest optimality violation over groups.

    Zero groups: ``max(0, ||X_j^T R|| / tau - 1)`` (relative excess of the
    dual norm). Active groups: ``||X_j^T R - tau beta_j / ||beta_j|| ||``.
    """
    tau = problem.penalty_weight(lam)
    if R is None:
        R = problem.Y - problem.predict(beta)
    C = _correlations(problem, R)
    worst = 0.0
    for j in range(problem.p):
        b = beta[:, j, :]
        nb = math.sqrt(float(np.sum(b * b)))
        c = C[:, j, :]
        if nb == 0.0:
            nc = math.sqrt(float(np.sum(c * c)))
            excess = nc - tau if tau == 0 else nc / tau - 1.0
            worst = max(worst, excess)
        else:
            worst = max(worst, float(np.linalg.norm(c - tau * b / nb)))
    return worst


@njit(cache=True)
def _secular(csq, a, tau, rho):
    S = 0.0
    dS = 0.0
    for i in range(csq.shape[0]):
        inv = 1.0 / (a[i] * rho + tau)
        q = csq[i] * inv * inv
        S += q
        dS -= 2.0 * q * inv * a[i]
    return S, dS


@njit(cache=True)
def _prox_radius(csq, a, tau, tol, max_iter):
    """Root ``rho`` of ``sum_i csq_i / (a_i rho + tau)^2 = 1``; -1 on failure.

    Starts from ``(||c|| - tau) / max a``, where every ``a_i rho + tau`` is at
    most ``||c||`` so ``S >= 1``: a point below the root that avoids the
    overflow of ``S(0) = ||c||^2 / tau^2`` when ``tau`` is tiny.
    """
    total = 0.0
    amax = 0.0
    for i in range(csq.shape[0]):
        total += csq[i]
        amax = max(amax, a[i])
    rho = 0.0
    if amax > 0.0:
        rho = max(0.0, (math.sqrt(total) - tau) / amax)
    S, dS = _secular(csq, a, tau, rho)
    transformed = True
    for _ in range(max_iter):
        if dS == 0.0:
            return rho
        if transformed:
            # h / h' with h = S^-1/2 - 1, h' = -S^-3/2 dS / 2
            step = 2.0 * (S ** -0.5 - 1.0) * S ** 1.5 / dS
        else:
            step = (1.0 - S) / dS
        if step <= tol * rho:
            return rho
        S_new, dS_new = _secular(csq, a, tau, rho + step)
        if S_new < 1.0 and transformed:
            # overshoot: h is not concave here, fall back to the plain
            # Newton iteration on the convex S - 1, which stays below the root
            transformed = False
            continue
        rho += step
        S, dS = S_new, dS_new
    return -1.0


def group_prox(c, a, tau, tol=1e-15, max_iter=200):
    """Exact minimizer of ``sum_i (a_i/2 ||b_i||^2 - c_i.b_i) + tau ||b||``.

    ``c`` is ``(n, m)`` and ``a`` ``(n,)`` nonnegative. For ``||c|| > tau`` the
    solution is ``b_i = rho c_i / (a_i rho + tau)`` where ``rho = ||b||`` solves
    ``S(rho) = sum_i ||c_i||^2 / (a_i rho + tau)^2 = 1``. Newton runs on
    ``h = S^(-1/2) - 1``, which is concave and increasing whenever ``c_i = 0``
    for every ``a_i = 0`` (linear when all ``a_i`` agree), so the iterates
    increase monotonically from ``rho = 0``; if a step overshoots, the plain
    Newton iteration on ``S - 1`` takes over.
    """
    c = np.asarray(c, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    csq = np.einsum("im,im->i", c, c)
    if float(csq.sum()) <= tau * tau * (1.0 + ZERO_SLACK):
        return np.zeros_like(c)
    if tau == 0.0:
        safe = np.where(a > 0, a, 1.0)
        return np.where((a > 0)[:, None], c / safe[:, None], 0.0)
    rho = _prox_radius(csq, a, float(tau), tol, max_iter)
    if rho < 0:
        raise ConvergenceError("group update did not converge")
    return rho * c / (a * rho + tau)[:, None]


@njit(cache=True)
def _sweep_kernel(Xg, colsq, beta, R, tau, tol, max_iter):
    """One cyclic pass over the groups, updating ``beta`` and ``R`` in place.

    ``Xg`` is the design in group-major layout ``(p, n, d)`` and ``colsq``
    its squared column norms ``(p, n)``. Returns False if a group update
    failed to converge.
    """
    p, n, d = Xg.shape
    m = R.shape[2]
    c = np.empty((n, m))
    csq = np.empty(n)
    for j in range(p):
        total = 0.0
        for i in range(n):
            acc = 0.0
            for k in range(m):
                b = beta[i, j, k]
                if b != 0.0:
                    for r in range(d):
                        R[i, r, k] += Xg[j, i, r] * b
                v = 0.0
                for r in range(d):
                    v += Xg[j, i, r] * R[i, r, k]
                c[i, k] = v
                acc += v * v
            csq[i] = acc
            total += acc
        if total <= tau * tau * (1.0 + ZERO_SLACK):
            for i in range(n):
                for k in range(m):
                    beta[i, j, k] = 0.0
            continue
        if tau == 0.0:
            rho = 0.0
        else:
            rho = _prox_radius(csq, colsq[j], tau, tol, max_iter)
            if rho < 0:
                return False
        for i in range(n):
            a = colsq[j, i]
            for k in range(m):
                if tau == 0.0:
                    b = c[i, k] / a if a > 0 else 0.0
                else:
                    b = rho * c[i, k] / (a * rho + tau)
                beta[i, j, k] = b
                if b != 0.0:
                    for r in range(d):
                        R[i, r, k] -= Xg[j, i, r] * b
    return True


def _sweep(Xg, colsq, beta, R, tau):
    if not _sweep_kernel(Xg, colsq, beta, R, float(tau), 1e-15, 200):
        raise ConvergenceError("group update did not converge")


def lambda_max(problem):
    """Smallest ``lam`` for which ``beta = 0`` is optimal.

    At zero, optimality needs ``||X_j^T Y|| <= lam / sqrt(m n)`` for all j.
    """
    C = _correlations(problem, problem.Y)
    top = float(np.sqrt(np.einsum("ipm,ipm->p", C, C)).max())
    return top * math.sqrt(problem.m * problem.n)


def _anderson(iterates):
    """Extrapolate a list of flattened iterates from their successive differences."""
    B = np.stack(iterates, axis=1)
    U = np.diff(B, axis=1)
    try:
        z = np.linalg.solve(U.T @ U, np.ones(U.shape[1]))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(z)) or z.sum() == 0:
        return None
    c = z / z.sum()
    return B[:, 1:] @ c


@njit(cache=True)
def _residual(Xg, Y, beta):
    p, n, d = Xg.shape
    m = Y.shape[2]
    R = Y.copy()
    for j in range(p):
        for i in range(n):
            for k in range(m):
                b = beta[i, j, k]
                if b != 0.0:
                    for r in range(d):
                        R[i, r, k] -= Xg[j, i, r] * b
    return R


@njit(cache=True)
def _gap_terms(Xg, Y, beta, R):
    """``||R||^2``, ``<Y, R>``, ``sum_j ||beta_j||`` and ``max_j ||X_j^T R||``."""
    p, n, d = Xg.shape
    m = Y.shape[2]
    rr = 0.0
    yr = 0.0
    for i in range(n):
        for r in range(d):
            for k in range(m):
                rr += R[i, r, k] * R[i, r, k]
                yr += Y[i, r, k] * R[i, r, k]
    norms = 0.0
    worst = 0.0
    for j in range(p):
        bb = 0.0
        cc = 0.0
        for i in range(n):
            for k in range(m):
                bb += beta[i, j, k] * beta[i, j, k]
                v = 0.0
                for r in range(d):
                    v += Xg[j, i, r] * R[i, r, k]
                cc += v * v
        norms += math.sqrt(bb)
        worst = max(worst, math.sqrt(cc))
    return rr, yr, norms, worst


def _fast_gap(Xg, Y, yy, beta, R, tau):
    """Primal value, gap and ``max_j ||X_j^T R||`` as in :func:`dual_gap`."""
    rr, yr, norms, worst = _gap_terms(Xg, Y, beta, R)
    primal = 0.5 * rr + tau * norms
    scale = 1.0 if worst <= tau else tau / worst
    # ||Y - s R||^2 = ||Y||^2 - 2 s <Y, R> + s^2 ||R||^2
    dual = scale * yr - 0.5 * scale * scale * rr
    return primal, primal - dual, worst


def solve(problem, lam, tol=1e-10, beta0=None, max_sweeps=MAX_SWEEPS, accelerate=5):
    """Cyclic block coordinate descent with exact group updates.

    Every ``accelerate`` sweeps the last iterates are combined by Anderson
    extrapolation; the extrapolated point replaces the current one only if
    it has a lower objective, so the objective never increases between
    sweeps. ``accelerate=0`` gives plain coordinate descent.

    Stops once the duality gap is at most ``tol * (1 + |J|)`` and the KKT
    violation (see :func:`kkt_violation`) is at most ``tol``.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    X, Y = problem.X, problem.Y
    n, d, p = X.shape
    m = problem.m
    tau = problem.penalty_weight(lam)
    beta = np.zeros((n, p, m)) if beta0 is None else np.array(beta0, dtype=float, copy=True)
    if beta.shape != (n, p, m):
        raise ValidationError(f"warm start has shape {beta.shape}, expected {(n, p, m)}")
    Xg = np.ascontiguousarray(X.transpose(2, 0, 1))
    colsq = np.einsum("pid,pid->pi", Xg, Xg)
    yy = float(np.sum(Y * Y))
    R = _residual(Xg, Y, beta)
    history = []
    stored = []
    gap = math.inf
    for sweep in range(1, max_sweeps + 1):
        _sweep(Xg, colsq, beta, R, tau)
        # refresh the residual to stop drift from the incremental updates
        R = _residual(Xg, Y, beta)
        primal, gap, worst = _fast_gap(Xg, Y, yy, beta, R, tau)
        if accelerate:
            stored.append(beta.ravel().copy())
            if len(stored) == accelerate + 1:
                guess = _anderson(stored)
                stored = []
                if guess is not None:
                    trial = guess.reshape(beta.shape)
                    R_trial = _residual(Xg, Y, trial)
                    p_trial, g_trial, w_trial = _fast_gap(Xg, Y, yy, trial, R_trial, tau)
                    if p_trial < primal:
                        beta, R, primal, gap, worst = trial, R_trial, p_trial, g_trial, w_trial
        history.append(primal)
        scale = 1.0 + abs(primal)
        if tau == 0.0:
            done = worst <= tol * scale
        else:
            done = gap <= tol * scale and kkt_violation(problem, beta, lam, R) <= tol
        if done:
            return LassoSolution(beta=beta, lam=float(lam), objective=primal,
                                 duality_gap=max(gap, 0.0), iterations=sweep,
                                 objective_history=history)
    raise ConvergenceError(
        f"block coordinate descent did not converge in {max_sweeps} sweeps (gap {gap:.3e})",
        attained=gap,
    )


def lambda_grid(problem, n_lambdas=50, ratio=1e-3):
    """Geometric grid from ``lambda_max`` down to ``ratio * lambda_max``."""
    top = lambda_max(problem)
    if top == 0.0:
        return np.zeros(1)
    return np.geomspace(top, ratio * top, n_lambdas)


@dataclass
class RegularizationPath:
    lambdas: np.ndarray
    solutions: list
    names: tuple

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, k):
        return self.solutions[k]

    @property
    def group_norms(self):
        return np.stack([s.group_norms for s in self.solutions])

    @property
    def supports(self):
        return [s.support for s in self.solutions]

    def table(self):
        """Rows ``(lambda, j, name, ||beta_j||, ||beta_j1||, ..., ||beta_jm||)``."""
        rows = []
        for lam, sol in zip(self.lambdas, self.solutions):
            coord = sol.coordinate_norms()
            for j, name in enumerate(self.names):
                rows.append((float(lam), j, name, float(sol.group_norms[j]),
                             *(float(v) for v in coord[j])))
        return rows


def regularization_path(problem, lambdas=None, tol=1e-10, max_sweeps=MAX_SWEEPS):
    """Solve along a strictly descending ``lambdas`` grid with warm starts."""
    if lambdas is None:
        lambdas = lambda_grid(problem)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValidationError("lambda grid must be a nonempty list")
    if lambdas.size > 1 and np.any(np.diff(lambdas) >= 0):
        raise ValidationError("lambda grid must be strictly descending")
    if np.any(lambdas < 0) or (lambdas.size > 1 and np.any(lambdas <= 0)):
        raise ValidationError("lambda grid must be positive")
    beta = None
    solutions = []
    for lam in lambdas:
        sol = solve(problem, lam, tol=tol, beta0=beta, max_sweeps=max_sweeps)
        beta = sol.beta
        solutions.append(sol)
    return RegularizationPath(lambdas=lambdas, solutions=solutions, names=problem.names)


def select_support(path, d):
    """Pick the support whose size matches the intrinsic dimension ``d``.

    Returns ``(support, index)``: the largest lambda with exactly ``d``
    active groups if any, otherwise the largest lambda with more than ``d``.
    """
    sizes = [len(s.support) for s in path]
    exact = [k for k, s in enumerate(sizes) if s == d]
    if exact:
        k = min(exact, key=lambda idx: -path.lambdas[idx])
        return path[k].support, k
    larger = [k for k, s in enumerate(sizes) if s > d]
    if larger:
        k = min(larger, key=lambda idx: -path.lambdas[idx])
        return path[k].support, k
    summary = ", ".join(f"{lam:.3g}:{s}" for lam, s in zip(path.lambdas, sizes))
    raise ValidationError(f"no lambda on the path reaches {d} active groups ({summary})")
