"""Recovery-theory quantities for the functional lasso.

The guarantees are stated for a penalty ``tau * sum_j ||beta_j||``; with the
``lam / sqrt(m n)`` scaling of :mod:`flasso` the certificate therefore uses
``tau = problem.penalty_weight(lam)`` wherever the bound has a penalty.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import RankDeficiencyError, ValidationError
from .flasso import solve, support_of

UNIT_TOL = 1e-8


def _check_support(problem, S):
    S = sorted({int(j) for j in S})
    if not S:
        raise ValidationError("support is empty")
    if S[0] < 0 or S[-1] >= problem.p:
        raise ValidationError(f"support {S} out of range for p={problem.p}")
    return S


def _check_unit_columns(problem):
    norms = np.linalg.norm(problem.X, axis=1)
    ok = (np.abs(norms - 1.0) <= UNIT_TOL) | (norms == 0.0)
    if not ok.all():
        i, j = np.argwhere(~ok)[0]
        raise ValidationError(
            f"column x_ij is not unit-normalized at point {i}, entry {j} (norm {norms[i, j]:.6g})"
        )


def incoherence(problem, S):
    """``mu = max |x_ij^T x_ij'|`` over points ``i``, ``j`` in ``S``, ``j'`` outside."""
    S = _check_support(problem, S)
    out = [j for j in range(problem.p) if j not in S]
    if not out:
        raise ValidationError("support covers every dictionary entry; incoherence undefined")
    _check_unit_columns(problem)
    XS = problem.X[:, :, S]
    Xo = problem.X[:, :, out]
    return float(np.abs(np.einsum("ids,ido->iso", XS, Xo)).max())


def support_grams(problem, S):
    """Per-point Gram matrices ``Sigma_i = X_iS^T X_iS``, shape ``(n, s, s)``."""
    S = _check_support(problem, S)
    XS = problem.X[:, :, S]
    return np.einsum("ids,idt->ist", XS, XS)


def internal_colinearity(problem, S, rtol=1e-12):
    """``nu = 1 / min_i lambda_min(Sigma_i)``, the top eigenvalue of ``Sigma^-1``.

    Raises :class:`RankDeficiencyError` naming the first point whose Gram
    matrix is singular (relative to ``rtol``).
    """
    grams = support_grams(problem, S)
    vals = np.linalg.eigvalsh(grams)
    low = vals[:, 0]
    bad = low <= rtol * np.maximum(vals[:, -1], 1e-300)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise RankDeficiencyError(i, vals[i].tolist())
    return float(1.0 / low.min())


@dataclass
class RecoveryCertificate:
    """Numerical check of the support-recovery and error-bound guarantees.

    ``condition_value`` is ``mu nu sqrt(s) + ||E|| / tau`` and
    ``condition_value_strict`` replaces ``sqrt(s)`` by ``s``. The strict form
    bounds every off-support dual block (``|x_ij^T X_iS v_i| <= mu sqrt(s)
    ||v_i||``) and is a sufficient condition; the first form is reported
    for comparison and is not sufficient on its own when ``s > 1``.
    ``||E|| = sigma sqrt(n d m)``, which is ``sigma sqrt(n d)`` for ``m = 1``.
    """

    mu: float
    nu: float
    sigma: float
    sigma_source: str
    s: int
    lam: float
    penalty_weight: float
    condition_value: float
    theorem2_holds: bool
    theorem2_margin: float
    condition_value_strict: float
    theorem2_strict_holds: bool
    theorem3_c: float
    theorem3_c_required: float
    theorem3_lambda: float
    beta_min_required: float
    theorem3_conditions: dict | None = None
    error_bound: dict | None = None

    def to_dict(self):
        return asdict(self)


def check_recovery_conditions(problem, S, lam, beta_true=None, solution=None, tol=1e-10):
    """Evaluate the recovery conditions for support ``S`` at ``lam``.

    ``sigma`` comes from ``Y - X beta_true`` when ``beta_true`` is given and
    otherwise from the residual of ``solution`` (solved at ``lam`` if not
    given); the latter is an estimate, not the true noise level.

    With ``beta_true`` the three hypotheses of the error-bound theorem are
    reported with margins together with the bound itself
    ``||beta_hat_j - beta*_j|| < c sigma sqrt(d n)(1 + sqrt(s))`` for ``j`` in
    ``S``. In these formulas the penalty ``tau`` plays the role of the
    regularization weight. Nothing is enforced: the result only reports.
    """
    S = _check_support(problem, S)
    n, d, m = problem.n, problem.d, problem.m
    s = len(S)
    tau = problem.penalty_weight(lam)
    mu = incoherence(problem, S)
    nu = internal_colinearity(problem, S)

    if beta_true is not None:
        beta_true = np.asarray(beta_true, dtype=float)
        if beta_true.ndim == 2:
            beta_true = beta_true[:, :, None]
        if beta_true.shape != (n, problem.p, m):
            raise ValidationError(f"beta_true has shape {beta_true.shape}")
        E = problem.Y - problem.predict(beta_true)
        source = "true"
    else:
        if solution is None:
            solution = solve(problem, lam, tol=tol)
        E = problem.Y - problem.predict(solution.beta)
        source = "residual"
    noise = float(np.linalg.norm(E))
    sigma = noise / math.sqrt(n * d * m)
    scale = math.sqrt(n * d * m)

    noise_term = noise / tau if tau > 0 else (0.0 if noise == 0 else math.inf)
    coh = mu * nu * math.sqrt(s)
    value = coh + noise_term
    strict = mu * nu * s + noise_term

    c = tau / (sigma * scale) + 1.0 if sigma > 0 else math.inf
    c_req = 1.0 + 1.0 / (1.0 - coh) if coh < 1 else math.inf
    lam3 = (c_req - 1.0) * sigma * scale
    bmin = c * sigma * scale * (1.0 + math.sqrt(s)) if sigma > 0 else 0.0

    cert = RecoveryCertificate(
        mu=mu, nu=nu, sigma=sigma, sigma_source=source, s=s, lam=float(lam),
        penalty_weight=tau, condition_value=value, theorem2_holds=bool(value < 1),
        theorem2_margin=1.0 - value, condition_value_strict=strict,
        theorem2_strict_holds=bool(strict < 1), theorem3_c=c, theorem3_c_required=c_req,
        theorem3_lambda=lam3, beta_min_required=bmin,
    )
    if beta_true is None:
        return cert

    true_norms = np.sqrt(np.einsum("ipm,ipm->p", beta_true, beta_true))
    weakest = float(true_norms[S].min())
    cert.theorem3_conditions = {
        "incoherence": {"holds": bool(coh < 1), "margin": 1.0 - coh},
        "lambda": {"holds": bool(c > c_req), "margin": c - c_req},
        "beta_min": {"holds": bool(weakest > bmin), "margin": weakest - bmin},
    }
    if solution is None:
        solution = solve(problem, lam, tol=tol)
    diff = solution.beta - beta_true
    errors = np.sqrt(np.einsum("ipm,ipm->p", diff, diff))
    cert.error_bound = {
        "bound": bmin,
        "errors": {int(j): float(errors[j]) for j in S},
        "holds": bool(np.all(errors[S] < bmin)),
        "support": list(support_of(solution.group_norms)),
    }
    return cert


def has_unit_columns(problem):
    norms = np.linalg.norm(problem.X, axis=1)
    return bool(np.all((np.abs(norms - 1.0) <= UNIT_TOL) | (norms == 0.0)))


def normalized_columns(problem):
    """Copy of ``problem`` with every nonzero ``x_ij`` scaled to unit norm."""
    from .flasso import LassoProblem
    norms = np.linalg.norm(problem.X, axis=1, keepdims=True)
    X = problem.X / np.where(norms > 0, norms, 1.0)
    return LassoProblem(X, problem.Y, names=problem.names)


def geometry_summary(problem, S):
    """Incoherence and internal colinearity of the column directions.

    Usable on any design; the recovery guarantees additionally need unit
    columns, which ``unit_columns`` reports.
    """
    unit = normalized_columns(problem)
    out = {"unit_columns": has_unit_columns(problem), "s": len(set(S))}
    try:
        out["mu"] = incoherence(unit, S)
    except ValidationError as exc:
        out["mu"] = None
        out["mu_error"] = str(exc)
    try:
        out["nu"] = internal_colinearity(unit, S)
    except RankDeficiencyError as exc:
        out["nu"] = None
        out["nu_error"] = str(exc)
    return out


def rank_dependency_check(gradients, S, S_prime, rtol=1e-8):
    """Compare ``rank [Dg_S; Dg_S']`` with ``rank Dg_S'`` at every point.

    ``gradients`` is ``(n, p, D)`` (or ``(n, p, d)`` tangent gradients);
    ``S`` and ``S_prime`` index its second axis. Repeated entries are used
    once. Numerical rank counts singular values above ``rtol`` times the
    largest. Returns ``(holds, fraction)`` with a boolean per point.
    """
    G = np.asarray(gradients, dtype=float)
    Sp = sorted({int(j) for j in S_prime})
    both = sorted({int(j) for j in S} | set(Sp))
    if not Sp:
        raise ValidationError("S' must be nonempty")

    def ranks(idx):
        sv = np.linalg.svd(G[:, idx, :], compute_uv=False)
        top = sv[:, :1]
        return np.sum(sv > rtol * np.where(top > 0, top, np.inf), axis=1)

    holds = ranks(both) == ranks(Sp)
    return holds, float(holds.mean())
