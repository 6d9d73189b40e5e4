"""Upper/lower Tsallis Value-at-Risk of the inverse moment and their descent.

With ``F(s) = int exp_q(+-s/r) pi(dr)`` the two objectives are

* upper:  ``g(lam) =  lam * ln_q(F(1/lam) / a)``, minimized over ``lam > 0``;
* lower:  ``g(lam) = -lam * ln_q(F(1/lam) / a)``, maximized over ``lam > 0``.

Both optima are found by the semi-implicit gradient flow

    lam_{n+1} = (T2 du + lam_n) / (1 + T1 du / lam_n),

where ``T1, T2 > 0`` are the implicit (negative) and explicit (positive) parts
of the velocity ``d lam / du = T2 - T1``. The update is positivity preserving
for every step size ``du``.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, DomainError, FeasibilityError
from .parallel import map_ordered
from .qcalc import _check_q, q_log
from .reversion import (
    DiscreteMeasure,
    GammaReversionMeasure,
    Quadrature,
    inverse_moment,
    tilt,
)

__all__ = [
    "Interval",
    "TsVaRProblem",
    "TsVaRSolution",
    "feasible_q_interval",
    "upper_objective",
    "lower_objective",
    "objective",
    "gradient_terms_upper",
    "gradient_terms_lower",
    "gradient_terms",
    "curvature_integrals",
    "descend",
    "accuracy_sweep",
    "reference_R",
    "LAMBDA0",
    "DU",
    "TOL",
    "DEFAULT_N",
]

LAMBDA0 = 500.0
DU = 1e4
TOL = 1e-12
DEFAULT_N = 2 ** 15
MAX_ITER = 10 ** 6
STALL_WINDOW = 10 ** 4
FLOOR_FRACTION = 1e-6
VELOCITY_RTOL = 1e-13


@dataclass(frozen=True)
class Interval:
    """Real interval with explicit open/closed ends."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def __contains__(self, x):
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return bool(above and below)

    def __iter__(self):
        return iter((self.lo, self.hi))

    def __str__(self):
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:.4f}"
        return f"{left}{self.lo:g}, {hi}{right}"


def _alpha_of(measure):
    if isinstance(measure, GammaReversionMeasure):
        return measure.alpha
    return measure.shape  # None for hand-made atoms


def feasible_q_interval(side, m):
    """Admissible ``q`` for a side: upper ``(0, 1 - 1/alpha)``, lower ``[1, inf)``.

    For a :class:`DiscreteMeasure` without a source Gamma law the upper side
    only needs the integrand to exist, ``(0, 1)``.
    """
    if side == "upper":
        alpha = _alpha_of(m)
        hi = 1.0 if alpha is None else 1.0 - 1.0 / alpha
        return Interval(0.0, hi)
    if side == "lower":
        return Interval(1.0, math.inf, lo_closed=True)
    raise DomainError(f"side must be 'upper' or 'lower', got {side!r}")


def reference_R(measure):
    """Denominator of the normalized ratio: closed-form ``R`` when the Gamma law is known."""
    if isinstance(measure, GammaReversionMeasure):
        return inverse_moment(measure)
    if measure.shape is not None and measure.shape > 1:
        return 1.0 / (measure.scale * (measure.shape - 1.0))
    return measure.inverse_moment()


@dataclass(frozen=True, eq=False)
class TsVaRProblem:
    """A TsVaR evaluation, validated eagerly on construction.

    Parameters
    ----------
    measure : GammaReversionMeasure or DiscreteMeasure
        Reversion measure, or ready-made atoms (plain rule only).
    side : {"upper", "lower"}
    q : float
        Shape parameter inside the side's admissible interval.
    a : float
        Accuracy parameter in ``(0, 1]``.
    N : int
        Number of quadrature nodes (ignored for a DiscreteMeasure).
    scheme : {"tilted", "plain"}, optional
        Quadrature rule; defaults to ``"tilted"`` for the upper side of a
        Gamma measure and ``"plain"`` otherwise.
    """

    measure: object
    side: str
    q: float
    a: float
    N: int = DEFAULT_N
    scheme: str = None

    def __post_init__(self):
        if self.side not in ("upper", "lower"):
            raise DomainError(f"side must be 'upper' or 'lower', got {self.side!r}")
        _check_q(self.q)
        interval = feasible_q_interval(self.side, self.measure)
        if self.q not in interval:
            raise FeasibilityError(
                f"{self.side} side needs q in {interval}, got q={self.q!r}",
                interval=interval,
            )
        if not (0 < self.a <= 1):
            raise DomainError(f"accuracy parameter a must lie in (0, 1], got {self.a!r}")
        if int(self.N) < 1:
            raise DomainError("N must be at least 1")
        discrete = isinstance(self.measure, DiscreteMeasure)
        scheme = self.scheme
        if scheme is None:
            scheme = "tilted" if (self.side == "upper" and not discrete) else "plain"
        if scheme not in ("tilted", "plain"):
            raise DomainError(f"scheme must be 'tilted' or 'plain', got {scheme!r}")
        if scheme == "tilted" and (self.side != "upper" or discrete):
            raise DomainError("the tilted rule applies only to the upper side of a Gamma measure")
        if scheme == "tilted":
            tilt(self.measure, self.q)
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "N", int(self.N))

    @property
    def sign(self):
        return 1 if self.side == "upper" else -1

    @cached_property
    def quadrature(self):
        if self.scheme == "tilted":
            return Quadrature.tilted_rule(self.measure, self.q, self.N)
        return Quadrature.plain(self.measure, self.q, self.N)

    @cached_property
    def R(self):
        return reference_R(self.measure)

    def with_a(self, a):
        """Same problem at a different accuracy parameter (shares the node cache)."""
        return TsVaRProblem(self.measure, self.side, self.q, a, self.N, self.scheme)


@dataclass(frozen=True)
class TsVaRSolution:
    """Result of a descent.

    ``normalized`` is ``value / R`` with the closed-form inverse moment.
    ``converged`` is False for limit evaluations (``a = 1``) and partial results.
    """

    value: float
    lambda_star: float
    iterations: int
    converged: bool
    normalized: float
    a: float = field(default=None)


def _check_lambda(lam):
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be positive and finite, got {lam!r}")


def _require(p, side):
    if p.side != side:
        raise DomainError(f"expected a {side}-side problem, got {p.side!r}")


def upper_objective(p, lam):
    """``lam * ln_q(F(1/lam) / a)`` with ``F = int exp_q(s/r) pi(dr)``."""
    _require(p, "upper")
    _check_lambda(lam)
    f1 = p.quadrature.family(1.0 / lam, +1, 1)
    return lam * q_log(f1 / p.a, p.q)


def lower_objective(p, lam):
    """``-lam * ln_q(F(1/lam) / a)`` with ``F = int exp_q(-s/r) pi(dr)``."""
    _require(p, "lower")
    _check_lambda(lam)
    f1 = p.quadrature.family(1.0 / lam, -1, 1)
    return -lam * q_log(f1 / p.a, p.q)


def objective(p, lam):
    return upper_objective(p, lam) if p.side == "upper" else lower_objective(p, lam)


def gradient_terms_upper(p, lam):
    """Implicit and explicit parts ``(I1, I2)`` of the upper velocity ``I2 - I1``.

    ``I1 = ln_q(F1 / a)`` and ``I2 = F2 / (a lam) * (F1 / a)**-q`` with
    ``F1 = int exp_q(1/(lam r))`` and ``F2 = int r**-1 exp_q(1/(lam r))**q``;
    the objective derivative is ``I1 - I2``. Both are positive for ``lam > 0``.
    """
    _require(p, "upper")
    _check_lambda(lam)
    q, a = p.q, p.a
    f1, f2 = p.quadrature.pair(1.0 / lam, +1)
    x = f1 / a
    return q_log(x, q), f2 / (a * lam) * x ** (-q)


def gradient_terms_lower(p, lam):
    """Implicit and explicit parts ``(T1, T2)`` of the lower velocity ``T2 - T1``.

    Using ``ln_q(J/a) = a**(q-1) (ln_q J - ln_q a)`` the derivative of the
    lower objective splits into

    * ``T1 = -a**(q-1) ln_q(a) + F2 / (a lam) * (J / a)**-q``  (positive),
    * ``T2 = -a**(q-1) ln_q(J)``                                (positive, as ``J < 1``),

    with ``J = int exp_q(-1/(lam r))`` and ``F2 = int r**-1 exp_q(-1/(lam r))**q``;
    the objective derivative is ``T2 - T1``.
    """
    _require(p, "lower")
    _check_lambda(lam)
    q, a = p.q, p.a
    j, f2 = p.quadrature.pair(1.0 / lam, -1)
    if not j > 0:
        raise DomainError(f"lower-side integrand underflows to zero at lambda={lam!r}")
    scale = a ** (q - 1.0)
    t1 = -scale * q_log(a, q) + f2 / (a * lam) * (j / a) ** (-q)
    t2 = -scale * q_log(j, q)
    return t1, t2


def gradient_terms(p, lam):
    if p.side == "upper":
        return gradient_terms_upper(p, lam)
    return gradient_terms_lower(p, lam)


def curvature_integrals(p, lam):
    """``(I1, I2, I3)`` with ``I_k = int r**-(k-1) exp_q(+-1/(lam r))**(1-(k-1)(1-q))``.

    The second derivative of either objective has the sign of
    ``+-(I1 I3 - I2**2)``, which is positive by Cauchy-Schwarz.
    """
    _check_lambda(lam)
    s = 1.0 / lam
    return tuple(p.quadrature.family(s, p.sign, k) for k in (1, 2, 3))


def _solution(p, lam, iterations, converged):
    value = objective(p, lam)
    return TsVaRSolution(value, lam, iterations, converged, value / p.R, p.a)


def _check_floor(p):
    # With a convex (upper) or concave (lower) objective, a negative velocity
    # at a tiny lambda means the optimum runs off to lambda -> 0: the accuracy
    # parameter is below its numerical feasibility floor.
    lam = FLOOR_FRACTION * p.R
    try:
        with np.errstate(under="ignore"):
            t1, t2 = gradient_terms(p, lam)
    except DomainError:
        return  # integrand underflow at the floor; the in-loop guard takes over
    if t2 - t1 < -1e-12 * max(abs(t1), abs(t2)):
        raise DomainError(
            f"a={p.a!r} is below the feasibility floor of the {p.side} side: "
            "the optimum runs off to lambda -> 0"
        )


def _is_flat(p, lam):
    t1, t2 = gradient_terms(p, lam)
    return abs(t2 - t1) <= 1e-12 * max(abs(t1), abs(t2), 1e-300)


def descend(p, lambda0=LAMBDA0, du=DU, tol=TOL, max_iter=MAX_ITER, stall_window=STALL_WINDOW):
    """Semi-implicit gradient descent for the optimal ``lam``.

    Stops when the successive difference falls below ``tol`` (or below four
    units in the last place of ``lam``, whichever is larger), or when the
    velocity ``T2 - T1`` is below ``1e-13 * max(T1, T2)``, i.e. at the level
    of rounding noise, which for large ``lam`` times ``du`` exceeds ``tol``.

    Raises
    ------
    DomainError
        If ``a`` lies below the feasibility floor (the optimum runs off to
        ``lam -> 0``) or ``a = 1`` for a non-degenerate measure (the optimum is
        the limit ``lam -> inf``; see :func:`accuracy_sweep`).
    ConvergenceError
        If the cap is hit or ``|d lam|`` stops decreasing for ``stall_window``
        steps. The partial solution is attached as ``partial``.
    """
    _check_lambda(lambda0)
    if not du > 0:
        raise DomainError("step size must be positive")
    terms = gradient_terms_upper if p.side == "upper" else gradient_terms_lower
    if p.a == 1:
        if not _is_flat(p, lambda0):
            raise DomainError("at a = 1 the optimum is the limit lambda -> inf (value R)")
        # constant objective (degenerate measure): every lambda is optimal
        return _solution(p, float(lambda0), 0, True)
    _check_floor(p)
    floor = FLOOR_FRACTION * p.R
    lam = float(lambda0)
    best = math.inf
    since_best = 0
    for n in range(1, max_iter + 1):
        t1, t2 = terms(p, lam)
        if abs(t2 - t1) <= VELOCITY_RTOL * max(t1, t2):
            # stationary to rounding: further steps only replay the noise
            return _solution(p, lam, n - 1, True)
        new = (t2 * du + lam) / (1.0 + t1 * du / lam)
        if not (new > 0 and math.isfinite(new)):
            raise ConvergenceError(f"iterate left (0, inf): {new!r}")
        step = abs(new - lam)
        prev, lam = lam, new
        if step < tol or step <= 4.0 * math.ulp(prev):
            return _solution(p, lam, n, True)
        if lam < floor:
            raise DomainError(
                f"a={p.a!r} is below the feasibility floor of the {p.side} side"
            )
        if step < best:
            best, since_best = step, 0
        else:
            since_best += 1
            if since_best >= stall_window:
                raise ConvergenceError(
                    f"descent stalled after {n} iterations",
                    partial=_solution(p, lam, n, False),
                )
    raise ConvergenceError(
        f"no convergence within {max_iter} iterations",
        partial=_solution(p, lam, max_iter, False),
    )


def _limit_search(p, points=400):
    # Dense log-lambda search; used at a = 1 where the optimum is lambda -> inf.
    # The tilted rule integrates the constant 1 only to about 1e-3, which the
    # factor lambda amplifies without bound, so the limit uses the plain rule.
    if p.scheme == "tilted":
        p = TsVaRProblem(p.measure, p.side, p.q, p.a, p.N, "plain")
    lams = p.R * np.logspace(-2, 6, points)
    vals = np.array([objective(p, lam) for lam in lams])
    i = int(np.argmin(vals)) if p.side == "upper" else int(np.argmax(vals))
    return TsVaRSolution(float(vals[i]), float(lams[i]), 0, False, float(vals[i]) / p.R, p.a)


@dataclass(frozen=True)
class SweepPoint:
    """One accuracy-sweep row; ``solution`` is None when ``a`` is infeasible."""

    a: float
    solution: TsVaRSolution = None
    reason: str = ""

    @property
    def feasible(self):
        return self.solution is not None


def accuracy_sweep(template, a_grid, workers=None):
    """Descend once per accuracy parameter.

    Points below the numerical feasibility floor are recorded with
    ``solution=None`` instead of raising. ``a = 1`` is evaluated as the
    ``lam -> inf`` limit by a dense search over ``lam``.

    Returns
    -------
    list of SweepPoint
        In the order of ``a_grid``.
    """
    a_grid = [float(a) for a in a_grid]
    for a in a_grid:
        if not (0 < a <= 1):
            raise DomainError(f"accuracy parameter a must lie in (0, 1], got {a!r}")
    template.quadrature  # build nodes once, before fanning out

    def run(a):
        p = template.with_a(a)
        try:
            if a == 1 and not _is_flat(p, LAMBDA0):
                return SweepPoint(a, _limit_search(p))
            return SweepPoint(a, descend(p))
        except DomainError as exc:
            return SweepPoint(a, None, str(exc))

    return map_ordered(run, a_grid, workers)
