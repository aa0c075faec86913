"""Second-order structure on a fixed activation branch.

With the ReLU pattern frozen, the backbone is affine in ``x``, so all the
curvature lives in the quadratic and conic modules: the Hessian is
``sum_h alpha_h B_h.T B_h`` plus, for each conic module with a nonzero
residual, ``(lam_g / ||u_g||) * A_g.T (I - uhat uhat^T) A_g``.  No backbone
weight appears, and every term is positive semidefinite by construction.
The projector term is assembled as ``S.T @ S`` with ``S = P @ A`` so the
result is symmetric to the bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import DegenerateInputError
from .model import DEFAULT_TAU, ForwardTrace, SocIcnnParams, degeneracy_report, forward


@dataclass(frozen=True, eq=False)
class CurvatureModel:
    """Local quadratic model at an anchor point.

    ``signature`` identifies the activation branch; the model is exact up to
    third-order conic terms while the perturbed point keeps that signature.
    """

    anchor: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    signature: tuple
    min_eigenvalue: float

    def predict(self, x) -> float:
        """Value of the quadratic model at ``x`` given the anchor value is
        added by the caller: returns the first- plus second-order part."""
        delta = np.asarray(x, dtype=np.float64) - self.anchor
        return float(self.grad @ delta) + 0.5 * float(delta @ (self.hess @ delta))


def branch_signature(trace: ForwardTrace, tol: float = DEFAULT_TAU) -> tuple:
    """Hashable identifier of the activation branch at this trace: packed
    strict-positivity bits per layer plus a nonzero flag per conic module."""
    relu_bits = b"".join(np.packbits(a > tol).tobytes() for a in trace.a)
    cone_flags = tuple(un > tol for un in trace.u_norms)
    return (relu_bits, cone_flags)


def curvature_matrix(
    params: SocIcnnParams,
    trace: ForwardTrace,
    tol: float = DEFAULT_TAU,
    skip_tip_modules: bool = False,
) -> np.ndarray:
    """Branch Hessian of the model at this trace.

    At a cone tip the conic term is undefined; ``skip_tip_modules`` drops
    such modules (the second-order solver's fallback) instead of raising.
    """
    n = params.input_dim
    H = np.zeros((n, n))
    for al, B in zip(params.alpha, params.B):
        H += al * (B.T @ B)
    for lg, A, ug, un in zip(params.lam, params.A, trace.u, trace.u_norms):
        if un <= tol:
            if skip_tip_modules:
                continue
            raise DegenerateInputError("conic residual at the cone tip; Hessian undefined")
        uhat = ug / un
        S = A - np.outer(uhat, uhat @ A)
        H += (lg / un) * (S.T @ S)
    return H


def hessian(params: SocIcnnParams, x, tol: float = DEFAULT_TAU) -> CurvatureModel:
    """Closed-form local model at a nondegenerate point.

    The gradient is the canonical readout; the Hessian is the module
    curvature sum above.  ``min_eigenvalue`` comes from the symmetric
    eigensolver after a defensive symmetrization.
    """
    trace = forward(params, x)
    report = degeneracy_report(trace, tol)
    if not report.is_nondegenerate:
        raise DegenerateInputError("Hessian requested on a kink")
    H = curvature_matrix(params, trace, tol)
    Hs = 0.5 * (H + H.T)
    grad = dual.readout(params, dual.canonical(params, trace, tol))
    return CurvatureModel(
        anchor=trace.x,
        grad=grad,
        hess=Hs,
        signature=branch_signature(trace, tol),
        min_eigenvalue=float(np.linalg.eigvalsh(Hs)[0]),
    )


def local_affine_constants(params: SocIcnnParams, x, tol: float = DEFAULT_TAU):
    """Slope and offset of the frozen-pattern backbone readout.

    Composes the per-layer affine maps under the activation masks of ``x``
    and returns ``(slope, offset)`` with ``slope = v + M_L.T @ c`` and
    ``offset = b0 + c @ m_L``.  This is an independent route to the backbone
    part of the gradient; it agrees with the canonical readout to rounding.
    """
    trace = forward(params, x)
    report = degeneracy_report(trace, tol)
    if not report.is_nondegenerate:
        raise DegenerateInputError("affine constants requested on a kink")
    d0 = params.input_dim
    M = np.zeros((0, d0))
    m = np.zeros(0)
    for a, W, U, b in zip(trace.a, params.W, params.U, params.b):
        mask = (a > tol).astype(np.float64)
        M = mask[:, None] * (W + U @ M)
        m = mask * (U @ m + b)
    slope = params.v + M.T @ params.c
    offset = params.b0 + float(params.c @ m)
    return slope, offset


def local_gradient(params: SocIcnnParams, x, tol: float = DEFAULT_TAU) -> np.ndarray:
    """Gradient assembled from the affine-composition route plus the smooth
    module slopes; an arithmetic path independent of the multiplier readout."""
    trace = forward(params, x)
    report = degeneracy_report(trace, tol)
    if not report.is_nondegenerate:
        raise DegenerateInputError("gradient requested on a kink")
    slope, _ = local_affine_constants(params, x, tol)
    g = slope.copy()
    for al, B, qh in zip(params.alpha, params.B, trace.q):
        g += al * (B.T @ qh)
    for lg, A, ug, un in zip(params.lam, params.A, trace.u, trace.u_norms):
        g += (lg / un) * (A.T @ ug)
    return g


def quadratic_model_residual(
    params: SocIcnnParams,
    anchor,
    radius: float,
    trials: int = 500,
    tol: float = DEFAULT_TAU,
    seed: int = 0,
):
    """Accuracy of the local quadratic model on a sphere around the anchor.

    Draws ``trials`` uniformly random directions, steps ``radius`` along
    each, keeps the points whose branch signature matches the anchor's (and
    that are nondegenerate), and measures ``|f(x) - f(anchor) - model|``
    there.  Returns ``(retained_rate, mean_abs_residual)``; the mean is NaN
    when nothing is retained.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if trials <= 0:
        raise ValueError("trials must be positive")
    anchor = np.asarray(anchor, dtype=np.float64)
    cm = hessian(params, anchor, tol)
    f0 = forward(params, anchor).value
    rng = np.random.default_rng(seed)
    kept = 0
    residuals = 0.0
    for _ in range(trials):
        step = rng.standard_normal(anchor.size)
        nrm = np.linalg.norm(step)
        while nrm == 0.0:
            step = rng.standard_normal(anchor.size)
            nrm = np.linalg.norm(step)
        x = anchor + (radius / nrm) * step
        trace = forward(params, x)
        if not degeneracy_report(trace, tol).is_nondegenerate:
            continue
        if branch_signature(trace, tol) != cm.signature:
            continue
        kept += 1
        residuals += abs(trace.value - f0 - cm.predict(x))
    rate = kept / trials
    mean = residuals / kept if kept else float("nan")
    return rate, mean
