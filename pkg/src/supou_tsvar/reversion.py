"""Gamma reversion measure, quantile discretization and quadrature rules.

The reversion measure ``pi(dr) = r**(alpha-1) exp(-r/beta) / (Gamma(alpha) beta**alpha) dr``
is a Gamma law with shape ``alpha`` and scale ``beta``. Integrals against it
are approximated on the midpoint-quantile grid ``r_i = F^{-1}((2i-1)/(2N))``
with uniform weights.

Two rules are provided for integrands of the form ``exp_q(s/r)``:

* ``plain``  -- average the integrand over the quantiles of ``pi``;
* ``tilted`` -- absorb the ``r**(-1/(1-q))`` singularity into a Gamma law of
  shape ``alpha - 1/(1-q)`` and average a bounded integrand over its
  quantiles instead.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError, FeasibilityError
from .qcalc import q_exp

__all__ = [
    "GammaReversionMeasure",
    "DiscreteMeasure",
    "TiltedMeasure",
    "Quadrature",
    "inverse_moment",
    "acf_theoretical",
    "regularized_gamma",
    "gamma_quantile",
    "discretize",
    "tilt",
    "integrate_qexp_upper",
    "integrate_qexp_lower",
]

_EPS = np.finfo(float).eps
_FPMIN = 1e-300
_MAX_TERMS = 2000


@dataclass(frozen=True)
class GammaReversionMeasure:
    """Gamma reversion measure with shape ``alpha > 1`` and scale ``beta > 0`` (1/hour)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 1):
            raise DomainError(f"alpha must exceed 1, got {self.alpha!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise DomainError(f"beta must be positive, got {self.beta!r}")

    @property
    def shape(self):
        return self.alpha

    @property
    def scale(self):
        return self.beta


@dataclass(frozen=True)
class TiltedMeasure:
    """Gamma law of shape ``alpha - 1/(1-q)`` used by the tilted rule.

    ``prefactor`` is ``Gamma(shape)/Gamma(alpha) * beta**(-1/(1-q))`` so that
    ``int f dpi = prefactor * int r**(1/(1-q)) f dpi_tilde``.
    """

    shape: float
    scale: float
    prefactor: float
    q: float


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Uniformly weighted atoms ``r_i`` (1/hour), strictly increasing.

    ``shape`` and ``scale`` record the Gamma law the nodes were drawn from,
    or are ``None`` for hand-made atoms.
    """

    nodes: np.ndarray
    shape: float = None
    scale: float = None

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size == 0:
            raise DomainError("a discrete measure needs at least one node")
        if np.any(~(nodes > 0)) or not np.all(np.isfinite(nodes)):
            raise DomainError("nodes must be positive and finite")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_atoms(cls, atoms):
        return cls(np.sort(np.asarray(atoms, dtype=float)))

    @property
    def count(self):
        return self.nodes.size

    def __len__(self):
        return self.nodes.size

    def inverse_moment(self):
        """Quadrature of ``int r**-1 pi(dr)``."""
        return float(np.mean(1.0 / self.nodes))


def inverse_moment(m):
    """Closed-form inverse moment ``R = 1 / (beta (alpha - 1))`` in hours."""
    return 1.0 / (m.beta * (m.alpha - 1.0))


def acf_theoretical(m, tau):
    """Autocorrelation ``(1 + beta tau) ** -(alpha - 1)`` at lag ``tau >= 0`` hours."""
    scalar = np.ndim(tau) == 0
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("lag must be non-negative")
    out = (1.0 + m.beta * tau) ** (1.0 - m.alpha)
    return float(out) if scalar else out


# --------------------------------------------------------------------------
# incomplete gamma function and its inverse


def _series(a, x, lgam):
    # P(a, x) by the power series, valid for x < a + 1
    ap = np.full_like(x, a)
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    active = np.ones(x.shape, dtype=bool)
    for _ in range(_MAX_TERMS):
        ap[active] += 1.0
        term[active] *= x[active] / ap[active]
        total[active] += term[active]
        active &= np.abs(term) >= np.abs(total) * _EPS
        if not active.any():
            break
    else:
        raise ConvergenceError("incomplete gamma series did not converge")
    with np.errstate(divide="ignore"):
        logpre = a * np.log(x) - x - lgam
    return total * np.exp(logpre)


def _contfrac(a, x, lgam):
    # Q(a, x) by the Lentz continued fraction, valid for x >= a + 1
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _EPS
        if not active.any():
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge")
    return np.exp(a * np.log(x) - x - lgam) * h


def regularized_gamma(a, x):
    """Regularized incomplete gamma functions ``(P(a, x), Q(a, x))``.

    Uses the power series below ``x = a + 1`` and a continued fraction above,
    so whichever tail is small is computed without cancellation.
    """
    if not a > 0:
        raise DomainError("shape must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise DomainError("incomplete gamma needs x >= 0")
    lgam = math.lgamma(a)
    p = np.zeros_like(x)
    qc = np.ones_like(x)
    low = (x < a + 1.0) & (x > 0)
    high = x >= a + 1.0
    if low.any():
        p[low] = _series(a, x[low], lgam)
        qc[low] = 1.0 - p[low]
    if high.any():
        qc[high] = _contfrac(a, x[high], lgam)
        p[high] = 1.0 - qc[high]
    return p, qc


def _quantile_std(a, p, upper):
    """Unit-scale Gamma quantiles.

    ``p`` holds lower-tail targets; where ``upper`` is set the matching entry
    of ``p`` is the upper-tail target ``1 - p`` and ``Q`` is inverted
    instead. Works in ``t = ln x``; bisection to width 1e-3, then Newton.
    """
    lgam = math.lgamma(a)
    lgam1 = math.lgamma(a + 1.0)

    def resid(t, idx):
        x = np.exp(t)
        pl, qu = regularized_gamma(a, x)
        return np.where(upper[idx], p[idx] - qu, pl - p[idx])

    n = p.size
    everything = np.arange(n)
    # P(a, x) <= x**a / Gamma(a+1) gives a lower bound on the lower-tail quantile
    plow = np.where(upper, 1.0 - p, p)
    lo = (np.log(plow) + lgam1) / a
    hi = np.maximum(np.log(50.0 * a), lo + math.log(2.0))
    if not (np.all(np.isfinite(lo)) and np.all(lo > -700)):
        raise ConvergenceError(f"quantile bracket underflows for shape {a!r}")

    for _ in range(400):
        f_lo = resid(lo, everything)
        bad = f_lo > 0
        if not bad.any():
            break
        lo[bad] -= math.log(4.0)
    else:
        raise ConvergenceError("could not bracket gamma quantile from below")
    for _ in range(400):
        f_hi = resid(hi, everything)
        bad = f_hi < 0
        if not bad.any():
            break
        hi[bad] += math.log(4.0)
    else:
        raise ConvergenceError("could not bracket gamma quantile from above")

    active = everything[(hi - lo) > 1e-3]
    while active.size:
        mid = 0.5 * (lo[active] + hi[active])
        f = resid(mid, active)
        pos = f >= 0
        hi[active[pos]] = mid[pos]
        lo[active[~pos]] = mid[~pos]
        active = active[(hi[active] - lo[active]) > 1e-3]

    t = 0.5 * (lo + hi)
    active = everything
    for _ in range(100):
        f = resid(t[active], active)
        ta = t[active]
        pos = f >= 0
        hi[active[pos]] = ta[pos]
        lo[active[~pos]] = ta[~pos]
        deriv = np.exp(a * ta - np.exp(ta) - lgam)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / deriv
        tn = ta - step
        outside = ~((tn >= lo[active]) & (tn <= hi[active])) | ~np.isfinite(tn)
        tn = np.where(outside, 0.5 * (lo[active] + hi[active]), tn)
        tn = np.where(f == 0, ta, tn)
        done = np.abs(tn - ta) <= 1e-13 * np.maximum(1.0, np.abs(ta))
        t[active] = tn
        active = active[~done]
        if not active.size:
            break
    else:
        raise ConvergenceError("Newton polish of gamma quantile did not converge")
    return np.exp(t)


def gamma_quantile(shape, scale, p):
    """Quantile ``r`` with ``P(shape, r/scale) = p`` to relative accuracy 1e-10.

    Parameters
    ----------
    shape, scale : float
        Gamma parameters, both positive.
    p : float or array_like
        Probabilities in ``(0, 1)``.

    Raises
    ------
    ConvergenceError
        If the root cannot be bracketed or polished, which happens for
        pathological shapes (below about 1e-8).
    """
    if not (shape > 0 and scale > 0):
        raise DomainError("shape and scale must be positive")
    if shape < 1e-8:
        raise ConvergenceError(f"shape {shape!r} too small for quantile inversion")
    scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("probabilities must lie in (0, 1)")
    upper = p > 0.5
    target = np.where(upper, 1.0 - p, p)
    x = _quantile_std(shape, target, upper) * scale
    return float(x[0]) if scalar else x


@lru_cache(maxsize=64)
def _nodes(shape, scale, n):
    # dyadic numerators keep the upper-tail targets 1 - p exact
    i = np.arange(1, n + 1, dtype=float)
    lower = (2.0 * i - 1.0) / (2.0 * n)
    upper_tail = (2.0 * (n - i) + 1.0) / (2.0 * n)
    is_upper = lower > 0.5
    target = np.where(is_upper, upper_tail, lower)
    nodes = _quantile_std(shape, target, is_upper) * scale
    nodes.setflags(write=False)
    return nodes


def discretize(m, n):
    """Midpoint-quantile discretization with ``n`` uniformly weighted nodes.

    ``m`` is a :class:`GammaReversionMeasure` or a :class:`TiltedMeasure`.
    Nodes are cached per ``(shape, scale, n)``; the cache is lock-protected.
    """
    n = int(n)
    if n < 1:
        raise DomainError("number of nodes must be at least 1")
    nodes = _nodes(float(m.shape), float(m.scale), n)
    return DiscreteMeasure(nodes, shape=float(m.shape), scale=float(m.scale))


def upper_q_interval(alpha):
    return (0.0, 1.0 - 1.0 / alpha)


def tilt(m, q):
    """Tilted Gamma law absorbing the ``r**(-1/(1-q))`` singularity.

    Raises
    ------
    FeasibilityError
        Unless ``0 < q < 1 - 1/alpha``.
    """
    lo, hi = upper_q_interval(m.alpha)
    if not (lo < q < hi):
        raise FeasibilityError(
            f"upper side needs q in ({lo:g}, {hi:.4f}) for alpha={m.alpha!r}, got q={q!r}",
            interval=(lo, hi),
        )
    p = 1.0 / (1.0 - q)
    shape = m.alpha - p
    prefactor = math.exp(math.lgamma(shape) - math.lgamma(m.alpha) - p * math.log(m.beta))
    return TiltedMeasure(shape=shape, scale=m.beta, prefactor=prefactor, q=q)


class Quadrature:
    """Averages of deformed-exponential families over a node set.

    For argument scale ``s > 0`` and ``sign = +1`` (upper) or ``-1`` (lower),
    the ``k``-th family is ``int r**-(k-1) exp_q(sign s / r)**d_k pi(dr)`` with
    ``d_k = 1 - (k-1)(1-q)``; ``k = 1, 2, 3`` give the integrals entering the
    objective, its gradient and its curvature.

    With a ``prefactor`` the nodes are quantiles of the tilted law and the
    bounded integrand ``prefactor * (r + (1-q) s)**(d_k/(1-q))`` is averaged.
    """

    def __init__(self, nodes, q, prefactor=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.q = q
        self.prefactor = prefactor

    @property
    def tilted(self):
        return self.prefactor is not None

    @classmethod
    def plain(cls, measure, q, n=None):
        if isinstance(measure, DiscreteMeasure):
            return cls(measure.nodes, q)
        return cls(discretize(measure, n).nodes, q)

    @classmethod
    def tilted_rule(cls, measure, q, n):
        t = tilt(measure, q)
        return cls(discretize(t, n).nodes, q, prefactor=t.prefactor)

    def family(self, s, sign, k):
        q, r = self.q, self.nodes
        d = 1.0 - (k - 1) * (1.0 - q)
        if self.tilted:
            if sign < 0:
                raise DomainError("the tilted rule only applies to the upper side")
            return self.prefactor * float(np.mean((r + (1.0 - q) * s) ** (d / (1.0 - q))))
        if q == 1:
            return float(np.mean(np.exp(sign * s / r) / r ** (k - 1)))
        base = 1.0 + (1.0 - q) * sign * s / r
        if np.any(base <= 0):
            raise DomainError("exp_q argument out of domain in quadrature")
        return float(np.mean(base ** (d / (1.0 - q)) / r ** (k - 1)))

    def pair(self, s, sign):
        """First two families at once, sharing the power evaluation."""
        q, r = self.q, self.nodes
        if self.tilted:
            if sign < 0:
                raise DomainError("the tilted rule only applies to the upper side")
            base = r + (1.0 - q) * s
            t = base ** (q / (1.0 - q))
            return (self.prefactor * float(np.mean(t * base)),
                    self.prefactor * float(np.mean(t)))
        if q == 1:
            e = np.exp(sign * s / r)
            return float(np.mean(e)), float(np.mean(e / r))
        base = 1.0 + (1.0 - q) * sign * s / r
        if np.any(base <= 0):
            raise DomainError("exp_q argument out of domain in quadrature")
        t = base ** (q / (1.0 - q))
        # r**-1 exp_q**q for the plain rule
        return float(np.mean(t * base)), float(np.mean(t / r))


def integrate_qexp_upper(m, q, lam, n, scheme="tilted"):
    """Approximate ``int exp_q(lam / r) pi(dr)`` for ``0 < q < 1 - 1/alpha``."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    tilt(m, q)  # eager feasibility check for both schemes
    if scheme == "plain":
        d = discretize(m, n)
        return float(np.mean(q_exp(lam / d.nodes, q)))
    if scheme == "tilted":
        return Quadrature.tilted_rule(m, q, n).family(lam, +1, 1)
    raise ValueError(f"unknown scheme {scheme!r}")


def integrate_qexp_lower(m, q, lam, n):
    """Approximate ``int exp_q(-lam / r) pi(dr)`` for ``q >= 1`` with the plain rule."""
    if not q >= 1:
        raise FeasibilityError(f"lower side needs q >= 1, got q={q!r}", interval=(1.0, math.inf))
    if not lam > 0:
        raise DomainError("lambda must be positive")
    d = discretize(m, n)
    return float(np.mean(q_exp(-lam / d.nodes, q)))
