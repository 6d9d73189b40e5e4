"""Deformed exponential and logarithm, and the Tsallis divergence.

All functions accept scalars or numpy arrays. Scalars in give Python floats
out. The classical case ``q == 1`` is dispatched by exact comparison, never by
a closeness threshold.
"""

import numpy as np

from .errors import DomainError

__all__ = ["q_exp", "q_log", "tsallis_divergence", "check_density"]


def _check_q(q):
    if not q > 0:
        raise DomainError(f"shape parameter q must be positive, got {q!r}")


def _out(x, scalar):
    return float(x) if scalar else x


def q_exp(x, q):
    """Deformed exponential ``exp_q(x)``.

    Parameters
    ----------
    x : float or array_like
        Argument. For ``q != 1`` it must satisfy ``1 + (1 - q) x > 0``.
    q : float
        Shape parameter, ``q > 0``.

    Returns
    -------
    float or ndarray
        ``(1 + (1 - q) x) ** (1 / (1 - q))``, or ``exp(x)`` when ``q == 1``.

    Raises
    ------
    DomainError
        If any argument leaves the domain of ``exp_q``.
    """
    _check_q(q)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if q == 1:
        return _out(np.exp(x), scalar)
    base = 1.0 + (1.0 - q) * x
    if np.any(base <= 0) or np.any(np.isnan(base)):
        raise DomainError(
            f"exp_q undefined: 1 + (1 - q) x <= 0 for q={q!r}"
        )
    return _out(base ** (1.0 / (1.0 - q)), scalar)


def q_log(x, q):
    """Deformed logarithm ``ln_q(x)``, the inverse of :func:`q_exp`.

    Raises
    ------
    DomainError
        If any ``x <= 0``.
    """
    _check_q(q)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(np.isnan(x)):
        raise DomainError("ln_q undefined for non-positive arguments")
    if q == 1:
        return _out(np.log(x), scalar)
    return _out((x ** (1.0 - q) - 1.0) / (1.0 - q), scalar)


def check_density(phi, tol=1e-10):
    """Validate a discrete Radon-Nikodym density against uniform weights.

    Returns ``phi`` as a float array. Raises :class:`DomainError` if any value
    is non-positive or the mean differs from one by more than ``tol``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or phi.size == 0:
        raise DomainError("density must be a non-empty 1-d sequence")
    if np.any(~(phi > 0)):
        raise DomainError("density values must be strictly positive")
    mean = np.mean(phi)
    if abs(mean - 1.0) > tol:
        raise DomainError(f"density must have mean 1, got {mean!r}")
    return phi


def tsallis_divergence(phi, q, tol=1e-10):
    """Tsallis divergence of a density against the uniform discrete measure.

    ``H_q(phi) = (1 - mean(phi**q)) / (1 - q)``; at ``q == 1`` the
    Kullback-Leibler form ``mean(phi * ln(phi))`` is used.

    Parameters
    ----------
    phi : array_like
        Positive values with mean one (uniform weights ``1/N``).
    q : float
        Shape parameter.
    tol : float
        Allowed deviation of ``mean(phi)`` from one.
    """
    _check_q(q)
    phi = check_density(phi, tol)
    if q == 1:
        return float(np.mean(phi * np.log(phi)))
    return float((1.0 - np.mean(phi ** q)) / (1.0 - q))
