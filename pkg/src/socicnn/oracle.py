"""Model-agnostic numerical oracles.

These deliberately know nothing about the package's own derivative formulas;
they only evaluate caller-supplied callables.  Every analytic quantity in the
library is cross-checked against one of these routes somewhere in the test
suite, so keep them boring and independent.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError


def fd_gradient(f, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar field ``f`` at ``x``."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = f(xp)
        fm = f(xm)
        if not np.isfinite(fp) or not np.isfinite(fm):
            raise NonFiniteError(f"non-finite evaluation near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * step)
    return g


def fd_directional(f, x, d, step: float = 1e-7) -> float:
    """One-sided difference quotient ``(f(x + step d) - f(x)) / step``.

    The direction must be unit length; one-sided quotients are the only
    consistent estimate at a kink, where the two-sided ones average the
    branches away.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if not np.isclose(np.linalg.norm(d), 1.0, rtol=1e-8, atol=0.0):
        raise ValueError("direction must be unit length")
    f0 = f(x)
    f1 = f(x + step * d)
    if not np.isfinite(f0) or not np.isfinite(f1):
        raise NonFiniteError("non-finite evaluation in directional quotient")
    return float((f1 - f0) / step)


def fd_hessian(grad, x, step: float = 1e-5) -> np.ndarray:
    """Central differences of a gradient field, symmetrized.

    ``grad`` maps a point to a gradient vector; it may itself be analytic or
    a finite-difference composition.  The raw column estimate is averaged
    with its transpose before returning.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        gp = np.asarray(grad(xp), dtype=np.float64)
        gm = np.asarray(grad(xm), dtype=np.float64)
        if not np.all(np.isfinite(gp)) or not np.all(np.isfinite(gm)):
            raise NonFiniteError(f"non-finite gradient evaluation near coordinate {i}")
        H[:, i] = (gp - gm) / (2.0 * step)
    return 0.5 * (H + H.T)


def convexity_probe(
    f, dim: int, n_triples: int = 1000, seed: int = 0, scale: float = 1.0
) -> float:
    """Largest observed midpoint-convexity violation, clamped at zero.

    Samples ``(x, y, t)`` with Gaussian endpoints of the given scale and
    uniform ``t``, and returns ``max(0, max_t f(t x + (1-t) y)
    - t f(x) - (1-t) f(y))``.  A convex ``f`` yields a value at rounding
    level; a clearly positive value certifies nonconvexity.
    """
    if n_triples <= 0:
        raise ValueError("n_triples must be positive")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_triples):
        x = scale * rng.standard_normal(dim)
        y = scale * rng.standard_normal(dim)
        t = rng.uniform()
        viol = f(t * x + (1.0 - t) * y) - (t * f(x) + (1.0 - t) * f(y))
        if viol > worst:
            worst = float(viol)
    return worst
