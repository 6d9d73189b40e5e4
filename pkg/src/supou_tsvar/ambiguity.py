"""Worst-case Radon-Nikodym derivatives and the ambiguity-scenario workflow.

On a discrete measure with nodes ``r_i`` and uniform weights, the inner
problems dual to the TsVaR objectives are

* lower:  ``min_phi  lam0 * mean(phi**q / r) + H_q(phi)``   (``q >= 1``)
* upper:  ``max_phi  lam0 * mean(phi**q / r) - H_q(phi)``   (``0 < q < 1``)

subject to ``phi > 0`` and ``mean(phi) = 1``. Writing the objective as
``mean(w_i phi_i**q)`` up to a constant, with ``w_i = lam0/r_i + 1/|q-1|``,
stationarity gives ``phi_i`` as an explicit function of the normalization
multiplier ``mu``; ``mu`` is then found by monotone bisection. The optima are
``-ln_q(mean exp_q(-lam0/r))`` and ``ln_q(mean exp_q(lam0/r))``, and the
optimizers are proportional to ``exp_q(-lam0/r)`` and ``exp_q(lam0/r)``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DomainError, FeasibilityError
from .parallel import map_ordered
from .qcalc import _check_q, check_density, q_exp, q_log, tsallis_divergence
from .reversion import DiscreteMeasure, inverse_moment
from .solver import TsVaRProblem, descend, feasible_q_interval, objective
from .supou import distorted_inverse_moment

__all__ = [
    "AmbiguityScenario",
    "worst_case_phi",
    "closed_form_phi",
    "inner_objective",
    "inner_optimum",
    "accuracy_from_phi",
    "duality_gap",
    "scenario",
    "scenario_sweep",
    "lambda0_grid",
    "mass_above_median",
]

log = logging.getLogger(__name__)

_BISECT_TOL = 1e-12
_CROSS_CHECK_TOL = 1e-6


def _nodes(d):
    if isinstance(d, DiscreteMeasure):
        return d.nodes
    return DiscreteMeasure(d).nodes


def _check_side(side, q, d):
    if side not in ("upper", "lower"):
        raise DomainError(f"side must be 'upper' or 'lower', got {side!r}")
    _check_q(q)
    measure = d if isinstance(d, DiscreteMeasure) else DiscreteMeasure(d)
    interval = feasible_q_interval(side, measure)
    if q not in interval:
        raise FeasibilityError(f"{side} side needs q in {interval}, got q={q!r}", interval=interval)


def _log_phi(side, lambda0, q, r, log_mu):
    # stationarity of the Lagrangian, solved for log(phi_i)
    if side == "lower":
        if q == 1:
            return log_mu - 1.0 - lambda0 / r
        w = lambda0 / r + 1.0 / (q - 1.0)
        return (log_mu - math.log(q) - np.log(w)) / (q - 1.0)
    w = lambda0 / r + 1.0 / (1.0 - q)
    return (math.log(q) + np.log(w) - log_mu) / (1.0 - q)


def _bisect_multiplier(side, lambda0, q, r):
    n = r.size
    increasing = side == "lower"  # mean(phi) increases with mu on the lower side

    def resid(log_mu):
        # log of mean(phi(mu)); zero at the normalized multiplier
        return logsumexp(_log_phi(side, lambda0, q, r, log_mu)) - math.log(n)

    # start around the multiplier of the undistorted density phi = 1
    if side == "lower":
        centre = 1.0 if q == 1 else math.log(q) + math.log(lambda0 / float(np.median(r)) + 1.0 / (q - 1.0))
    else:
        centre = math.log(q) + math.log(lambda0 / float(np.median(r)) + 1.0 / (1.0 - q))
    step = math.log(4.0)
    lo, hi = centre - step, centre + step

    def sign(x):
        v = resid(x)
        return v if increasing else -v

    for _ in range(2000):
        if sign(lo) <= 0:
            break
        lo -= step
    else:
        raise ConvergenceError("could not bracket the normalization multiplier from below")
    for _ in range(2000):
        if sign(hi) >= 0:
            break
        hi += step
    else:
        raise ConvergenceError("could not bracket the normalization multiplier from above")
    for _ in range(400):
        if hi - lo <= _BISECT_TOL * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if sign(mid) >= 0:
            hi = mid
        else:
            lo = mid
    else:
        raise ConvergenceError("multiplier bisection did not converge")
    return 0.5 * (lo + hi)


def closed_form_phi(side, lambda0, q, d):
    """Optimizer in closed form: ``exp_q(-+lam0/r)`` normalized to mean one."""
    r = _nodes(d)
    sign = -1.0 if side == "lower" else 1.0
    if q == 1:
        x = sign * lambda0 / r
        return np.exp(x - logsumexp(x) + math.log(r.size))
    logs = np.log1p((1.0 - q) * sign * lambda0 / r) / (1.0 - q)
    return np.exp(logs - logsumexp(logs) + math.log(r.size))


def worst_case_phi(side, lambda0, q, d):
    """Worst-case density of the discretized inner problem.

    Parameters
    ----------
    side : {"lower", "upper"}
    lambda0 : float
        Ambiguity-aversion parameter, positive.
    q : float
        Shape parameter in the side's admissible interval.
    d : DiscreteMeasure

    Returns
    -------
    ndarray
        Positive values with mean one, aligned with ``d.nodes``.

    Raises
    ------
    FeasibilityError
        If ``q`` is outside the side's interval.
    ConvergenceError
        If the multiplier cannot be bracketed or bisected.
    """
    _check_side(side, q, d)
    if not (lambda0 > 0 and math.isfinite(lambda0)):
        raise DomainError(f"lambda0 must be positive and finite, got {lambda0!r}")
    r = _nodes(d)
    log_mu = _bisect_multiplier(side, lambda0, q, r)
    phi = np.exp(_log_phi(side, lambda0, q, r, log_mu))
    phi = phi / np.mean(phi)
    if not np.all(phi > 0):
        raise ConvergenceError("worst-case density underflowed to zero at some nodes")
    closed = closed_form_phi(side, lambda0, q, r)
    gap = float(np.max(np.abs(phi - closed) / closed))
    if gap > _CROSS_CHECK_TOL:
        log.warning("worst-case density differs from the closed form by %.3g (relative)", gap)
    return phi


def inner_objective(side, lambda0, q, d, phi):
    """Inner bracket ``lam0 mean(phi**q / r) +- H_q(phi)`` (``+`` lower, ``-`` upper)."""
    r = _nodes(d)
    phi = check_density(phi, tol=1e-8)
    if phi.shape != r.shape:
        raise DomainError("density and nodes differ in length")
    drift = lambda0 * float(np.mean(phi ** q / r))
    h = tsallis_divergence(phi, q, tol=1e-8)
    return drift + h if side == "lower" else drift - h


def inner_optimum(side, lambda0, q, d):
    """Quadrature of the optimum: ``-ln_q(mean exp_q(-lam0/r))`` or ``ln_q(mean exp_q(lam0/r))``."""
    r = _nodes(d)
    if side == "lower":
        return -q_log(float(np.mean(q_exp(-lambda0 / r, q))), q)
    return q_log(float(np.mean(q_exp(lambda0 / r, q))), q)


def accuracy_from_phi(phi, q):
    """Accuracy parameter ``exp_q(-H_q(phi))`` implied by a density.

    Raises
    ------
    DomainError
        If ``-H_q(phi)`` leaves the domain of ``exp_q`` (divergence too large).
    """
    return q_exp(-tsallis_divergence(phi, q, tol=1e-8), q)


def duality_gap(side, lam, q, d):
    """Relative gap between the quadrature optimum and the inner problem at its optimizer."""
    phi = worst_case_phi(side, lam, q, d)
    lhs = inner_optimum(side, lam, q, d)
    rhs = inner_objective(side, lam, q, d, phi)
    return abs(lhs - rhs) / abs(lhs)


def mass_above_median(phi, d):
    """``mean(phi * 1{r > median(r)})``: distorted mass on the fast-reversion half."""
    r = _nodes(d)
    return float(np.mean(np.where(r > np.median(r), phi, 0.0)))


@dataclass(frozen=True, eq=False)
class AmbiguityScenario:
    """One worst-case scenario: density, implied accuracy and the matching TsVaR."""

    side: str
    q: float
    lambda0: float
    phi_star: np.ndarray
    a_star: float
    lambda_star: float
    tsvar: float
    normalized: float
    iterations: int = 0


def scenario(side, lambda0, q, d, m=None, warm_start=True):
    """Run the full workflow for one ambiguity-aversion parameter.

    1. ``phi*`` from :func:`worst_case_phi`;
    2. ``a* = exp_q(-H_q(phi*))``;
    3. descend on the TsVaR problem over the same nodes at ``a = a*``;
    4. ``tsvar`` is the objective there and ``normalized = tsvar / R``.

    ``R`` is the closed form of ``m`` if given, else of the Gamma law ``d``
    was drawn from, else the quadrature. Descent uses the plain rule on ``d``
    so that the discrete duality holds exactly.

    With ``warm_start`` the descent starts from ``1/lambda0``, where duality
    places the optimum, instead of the default 500; far from 500 the cold
    start needs of order ``lambda*^2`` iterations.
    """
    phi = worst_case_phi(side, lambda0, q, d)
    a_star = accuracy_from_phi(phi, q)
    problem = TsVaRProblem(d, side, q, a_star, scheme="plain")
    sol = descend(problem, lambda0=1.0 / lambda0) if warm_start else descend(problem)
    R = inverse_moment(m) if m is not None else problem.R
    return AmbiguityScenario(
        side=side,
        q=q,
        lambda0=float(lambda0),
        phi_star=phi,
        a_star=float(a_star),
        lambda_star=sol.lambda_star,
        tsvar=sol.value,
        normalized=sol.value / R,
        iterations=sol.iterations,
    )


def lambda0_grid(start=1e-3, stop=1e3, per_decade=40):
    """Logarithmic grid with ``per_decade`` points per decade, endpoints included."""
    if not (0 < start < stop):
        raise DomainError("grid needs 0 < start < stop")
    points = int(round(per_decade * math.log10(stop / start))) + 1
    return np.logspace(math.log10(start), math.log10(stop), points)


@dataclass(frozen=True)
class ScenarioRow:
    lambda0: float
    scenario: AmbiguityScenario = None
    reason: str = ""

    @property
    def feasible(self):
        return self.scenario is not None


def scenario_sweep(side, q, d, grid, m=None, workers=None):
    """Scenarios along a ``lambda0`` grid, truncated after the first infeasible point.

    Returns a list of :class:`ScenarioRow`; the last row is flagged
    (``scenario=None``) if the sweep stopped early.
    """
    _check_side(side, q, d)

    def run(lam0):
        try:
            return ScenarioRow(float(lam0), scenario(side, lam0, q, d, m))
        except (DomainError, ConvergenceError) as exc:
            return ScenarioRow(float(lam0), None, f"{exc.category}: {exc}")

    rows = map_ordered(run, list(grid), workers)
    for i, row in enumerate(rows):
        if not row.feasible:
            return rows[: i + 1]
    return rows


def scenario_consistency(s, d):
    """``a*^(q-1) * (1/N) sum phi*^q / r`` -- equals the TsVaR when the dual is attained."""
    return s.a_star ** (s.q - 1.0) * distorted_inverse_moment(d, s.phi_star, s.q)


def objective_at(s, d):
    """Re-evaluate the TsVaR objective of a scenario at its optimal ``lambda``."""
    return objective(TsVaRProblem(d, s.side, s.q, s.a_star, scheme="plain"), s.lambda_star)
