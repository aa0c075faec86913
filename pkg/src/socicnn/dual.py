"""Multiplier branches of the support representation and their samplers.

The model value admits an exact representation as a maximum of affine
minorants indexed by a multiplier triple: per-layer ReLU multipliers living
in a box recursion, quadratic multipliers (unconstrained, with a concave
penalty), and conic multipliers confined to balls of radius ``lam_g``.  At a
fixed input the optimal triples form a product set: an interval box over the
ReLU coordinates whose preactivation sits at zero, times a ball for every
conic module whose residual sits at the cone tip, times singletons elsewhere.
Everything in this module manipulates that set: evaluating the minorant,
reading out its input slope, selecting the minimum-norm element, and
enumerating or sampling the rest.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBranchError, TooManyDegeneraciesError
from .model import DEFAULT_TAU, ForwardTrace, SocIcnnParams

FORCED_ZERO = 0
FORCED_UPPER = 1
FREE_INTERVAL = 2

# Hard cap on interval coordinates for exact corner enumeration: 2**16 ReLU
# corner assignments is the most the exhaustive routines will materialize.
MAX_FREE_COORDS = 16


@dataclass(frozen=True, eq=False)
class DualBranch:
    """One multiplier triple.

    ``relu`` holds one nonnegative vector per layer, ``quad`` one vector per
    quadratic module, ``cone`` one vector per conic module.  ``source``
    records provenance: ``canonical``, ``sampled``, or ``extreme``.
    """

    relu: tuple
    quad: tuple
    cone: tuple
    source: str = "sampled"

    def norm(self) -> float:
        """Euclidean norm of the stacked multiplier vector."""
        total = 0.0
        for group in (self.relu, self.quad, self.cone):
            for vec in group:
                total += float(vec @ vec)
        return float(np.sqrt(total))


@dataclass(frozen=True, eq=False)
class ReluBranchBox:
    """Per-coordinate classification of the optimal ReLU multiplier set.

    ``status`` holds one int8 array per layer with values ``FORCED_ZERO``
    (preactivation below ``-tol``), ``FORCED_UPPER`` (above ``tol``), or
    ``FREE_INTERVAL`` (within ``tol`` of the kink).  ``free_coords`` lists
    the interval coordinates as ``(layer, index)`` pairs.
    """

    status: tuple
    free_coords: tuple


def branch_box(params: SocIcnnParams, trace: ForwardTrace, tol: float = DEFAULT_TAU) -> ReluBranchBox:
    """Classify every ReLU coordinate of the optimal set at this trace."""
    status = []
    free = []
    for l, a in enumerate(trace.a):
        s = np.full(a.shape, FORCED_ZERO, dtype=np.int8)
        s[a > tol] = FORCED_UPPER
        on_kink = np.abs(a) <= tol
        s[on_kink] = FREE_INTERVAL
        status.append(s)
        for i in np.flatnonzero(on_kink):
            free.append((l, int(i)))
    return ReluBranchBox(status=tuple(status), free_coords=tuple(free))


def upper_bounds(params: SocIcnnParams, relu: tuple) -> list:
    """Box upper bounds per layer implied by the multipliers one layer up.

    The last layer is bounded by ``c``; layer ``l`` is bounded by
    ``U[l+1].T @ relu[l+1]``.  Nonnegativity of ``U`` and ``c`` keeps every
    bound nonnegative.
    """
    L = params.n_layers
    ub = [None] * L
    ub[L - 1] = params.c
    for l in range(L - 2, -1, -1):
        ub[l] = params.U[l + 1].T @ relu[l + 1]
    return ub


def masked_relu_multipliers(params: SocIcnnParams, masks) -> tuple:
    """Backward recursion pinning each coordinate to its bound or to zero.

    ``masks[l]`` is boolean per coordinate; True takes the upper bound,
    False takes zero.  This is the closed form of the optimal multipliers
    for a frozen activation pattern.
    """
    L = params.n_layers
    relu = [None] * L
    bound = params.c
    for l in range(L - 1, -1, -1):
        relu[l] = np.where(masks[l], bound, 0.0)
        if l > 0:
            bound = params.U[l].T @ relu[l]
    return tuple(relu)


def canonical(params: SocIcnnParams, trace: ForwardTrace, tol: float = DEFAULT_TAU) -> DualBranch:
    """Minimum-norm optimal branch at this trace.

    ReLU multipliers take their bound strictly above the kink and zero
    elsewhere (interval coordinates included); quadratic multipliers are
    ``alpha_h * q_h``; conic multipliers point along the residual with
    length ``lam_g``, or vanish at the cone tip.
    """
    masks = tuple(a > tol for a in trace.a)
    relu = masked_relu_multipliers(params, masks)
    quad = tuple(al * qh for al, qh in zip(params.alpha, trace.q))
    cone = []
    for lg, ug, un in zip(params.lam, trace.u, trace.u_norms):
        if un > tol:
            cone.append((lg / un) * ug)
        else:
            cone.append(np.zeros_like(ug))
    return DualBranch(relu=relu, quad=quad, cone=tuple(cone), source="canonical")


def feasibility_violation(params: SocIcnnParams, branch: DualBranch) -> float:
    """Largest constraint violation of the branch; nonpositive means feasible.

    Covers the box constraints on every ReLU layer and the ball constraints
    on every conic module.  Quadratic multipliers are unconstrained.
    """
    worst = -np.inf
    ub = upper_bounds(params, branch.relu)
    for nu, bound in zip(branch.relu, ub):
        if nu.size:
            worst = max(worst, float(np.max(-nu)), float(np.max(nu - bound)))
    for lg, r in zip(params.lam, branch.cone):
        worst = max(worst, float(np.linalg.norm(r)) - lg)
    if worst == -np.inf:
        worst = 0.0
    return worst


def dual_value(
    params: SocIcnnParams,
    x,
    branch: DualBranch,
    check_feasible: bool = True,
    feas_tol: float = 1e-9,
) -> float:
    """Value of the affine minorant indexed by ``branch`` at the point ``x``.

    For any feasible branch this lower-bounds the model value everywhere,
    with equality exactly on the optimal set of ``x``.
    """
    if check_feasible:
        viol = feasibility_violation(params, branch)
        if viol > feas_tol:
            raise InfeasibleBranchError(f"branch violates constraints by {viol:.3e}")
    x = np.asarray(x, dtype=np.float64)
    total = float(params.v @ x) + params.b0
    for W, b, nu in zip(params.W, params.b, branch.relu):
        total += float(nu @ (W @ x + b))
    for al, B, e, p in zip(params.alpha, params.B, params.e, branch.quad):
        q = B @ x + e
        total += float(p @ q) - float(p @ p) / (2.0 * al)
    for A, d, r in zip(params.A, params.d, branch.cone):
        total += float(r @ (A @ x + d))
    return total


def readout(params: SocIcnnParams, branch: DualBranch) -> np.ndarray:
    """Input slope of the branch's affine minorant.

    ``v + sum_l W_l.T nu_l + sum_h B_h.T p_h + sum_g A_g.T r_g``; on the
    optimal set this enumerates exactly the subgradients of the model.
    """
    g = params.v.copy()
    for W, nu in zip(params.W, branch.relu):
        g += W.T @ nu
    for B, p in zip(params.B, branch.quad):
        g += B.T @ p
    for A, r in zip(params.A, branch.cone):
        g += A.T @ r
    return g


def _check_optimal(params, trace, branch) -> DualBranch:
    value = dual_value(params, trace.x, branch, check_feasible=False)
    if abs(value - trace.value) > 1e-10 * (1.0 + abs(trace.value)):
        raise RuntimeError(
            f"constructed branch is not optimal: minorant {value!r} vs value {trace.value!r}"
        )
    return branch


def _ball_point(rng, radius: float, dim: int) -> np.ndarray:
    if radius == 0.0 or dim == 0:
        return np.zeros(dim)
    direction = rng.standard_normal(dim)
    nrm = np.linalg.norm(direction)
    while nrm == 0.0:
        direction = rng.standard_normal(dim)
        nrm = np.linalg.norm(direction)
    return (radius * rng.uniform() ** (1.0 / dim) / nrm) * direction


def sample_optimal_branches(
    params: SocIcnnParams,
    trace: ForwardTrace,
    tol: float = DEFAULT_TAU,
    n: int = 1,
    seed: int = 0,
) -> list:
    """Draw ``n`` optimal branches at this trace, canonical included as a case.

    Free interval coordinates are resampled uniformly on ``[0, bound]``
    top-down (the bound of a lower layer is recomputed from the draws above
    it), and each cone-tip module draws uniformly from its ball.  Sample
    ``k`` uses the child generator ``default_rng([seed, k])`` so any prefix
    of the list is reproducible.  Every returned branch is verified to
    attain the model value at the trace point.
    """
    box = branch_box(params, trace, tol)
    quad = tuple(al * qh for al, qh in zip(params.alpha, trace.q))
    smooth_cone = []
    for lg, ug, un in zip(params.lam, trace.u, trace.u_norms):
        smooth_cone.append((lg / un) * ug if un > tol else None)
    L = params.n_layers
    out = []
    for k in range(n):
        rng = np.random.default_rng([seed, k])
        relu = [None] * L
        bound = params.c
        for l in range(L - 1, -1, -1):
            st = box.status[l]
            nu = np.where(st == FORCED_UPPER, bound, 0.0)
            for i in np.flatnonzero(st == FREE_INTERVAL):
                nu[i] = rng.uniform(0.0, bound[i])
            relu[l] = nu
            if l > 0:
                bound = params.U[l].T @ nu
        cone = []
        for g, fixed in enumerate(smooth_cone):
            if fixed is not None:
                cone.append(fixed)
            else:
                cone.append(_ball_point(rng, params.lam[g], params.A[g].shape[0]))
        branch = DualBranch(relu=tuple(relu), quad=quad, cone=tuple(cone), source="sampled")
        out.append(_check_optimal(params, trace, branch))
    return out


def _sphere_directions(dim: int, count: int, rng) -> list:
    """Spread of unit vectors: exact endpoints in 1-d, an equispaced fan with
    a random phase in 2-d, normalized Gaussians above."""
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if dim == 2:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        angles = phase + 2.0 * np.pi * np.arange(count) / count
        return [np.array([np.cos(t), np.sin(t)]) for t in angles]
    dirs = []
    for _ in range(count):
        vec = rng.standard_normal(dim)
        nrm = np.linalg.norm(vec)
        while nrm == 0.0:
            vec = rng.standard_normal(dim)
            nrm = np.linalg.norm(vec)
        dirs.append(vec / nrm)
    return dirs


def relu_corner_assignments(params: SocIcnnParams, box: ReluBranchBox):
    """Yield the ReLU multiplier stacks at every corner of the interval box.

    Each free coordinate independently takes zero or its bound; bounds of
    lower layers are recomputed under each assignment, so corners remain
    feasible.  Raises when more than ``MAX_FREE_COORDS`` coordinates are
    free.
    """
    free = box.free_coords
    if len(free) > MAX_FREE_COORDS:
        raise TooManyDegeneraciesError(
            f"{len(free)} interval coordinates; corner enumeration caps at {MAX_FREE_COORDS}"
        )
    L = params.n_layers
    for bits in itertools.product((False, True), repeat=len(free)):
        choice = dict(zip(free, bits))
        relu = [None] * L
        bound = params.c
        for l in range(L - 1, -1, -1):
            st = box.status[l]
            nu = np.where(st == FORCED_UPPER, bound, 0.0)
            for i in np.flatnonzero(st == FREE_INTERVAL):
                if choice[(l, int(i))]:
                    nu[i] = bound[i]
            relu[l] = nu
            if l > 0:
                bound = params.U[l].T @ nu
        yield tuple(relu)


def extreme_branches(
    params: SocIcnnParams,
    trace: ForwardTrace,
    tol: float = DEFAULT_TAU,
    sphere_samples: int = 64,
    seed: int = 0,
    extra_cone_dirs: dict | None = None,
) -> list:
    """Extreme points of the optimal set, up to sphere discretization.

    ReLU corners are enumerated exactly.  Each cone-tip module contributes
    multipliers of full length ``lam_g`` along a direction spread
    (``sphere_samples`` of them, exact in one and two dimensions up to the
    fan density), optionally augmented with caller-supplied directions and
    their negations via ``extra_cone_dirs[g]``.  With no degeneracy the
    result is the single canonical branch.
    """
    box = branch_box(params, trace, tol)
    tip_modules = [g for g, un in enumerate(trace.u_norms) if un <= tol]
    if not box.free_coords and not tip_modules:
        base = canonical(params, trace, tol)
        return [DualBranch(relu=base.relu, quad=base.quad, cone=base.cone, source="extreme")]
    rng = np.random.default_rng(seed)
    quad = tuple(al * qh for al, qh in zip(params.alpha, trace.q))
    smooth_cone = {
        g: (params.lam[g] / un) * trace.u[g]
        for g, un in enumerate(trace.u_norms)
        if un > tol
    }
    tip_choices = []
    for g in tip_modules:
        dim = params.A[g].shape[0]
        dirs = _sphere_directions(dim, sphere_samples, rng)
        if extra_cone_dirs and g in extra_cone_dirs:
            for vec in extra_cone_dirs[g]:
                vec = np.asarray(vec, dtype=np.float64)
                nrm = np.linalg.norm(vec)
                if nrm > 0.0:
                    dirs.append(vec / nrm)
                    dirs.append(-vec / nrm)
        tip_choices.append([params.lam[g] * u for u in dirs])
    corners = list(relu_corner_assignments(params, box))
    out = []
    for relu in corners:
        for combo in itertools.product(*tip_choices):
            cone = []
            pick = dict(zip(tip_modules, combo))
            for g in range(params.n_cone):
                cone.append(pick[g] if g in pick else smooth_cone[g])
            branch = DualBranch(relu=relu, quad=quad, cone=tuple(cone), source="extreme")
            out.append(_check_optimal(params, trace, branch))
    return out
