"""Optimal multiplier branches: canonical selection, sampling, extremes."""

import numpy as np
import pytest

from socicnn import (
    DualBranch,
    InfeasibleBranchError,
    SocIcnnParams,
    TooManyDegeneraciesError,
    branch_box,
    canonical,
    dual_value,
    extreme_branches,
    feasibility_violation,
    forward,
    masked_relu_multipliers,
    readout,
    sample_optimal_branches,
    upper_bounds,
)
from socicnn.dual import FORCED_UPPER, FORCED_ZERO, FREE_INTERVAL, relu_corner_assignments

from conftest import cone_only_params, gaussian_points, quad_only_params


def single_layer_params(b_value):
    """Two-unit, one-layer net z = relu(x + b) read out with c = (0.9, 0.4)."""
    return SocIcnnParams(
        W=(np.eye(2),),
        U=(np.zeros((2, 0)),),
        b=(np.array([b_value, b_value]),),
        c=np.array([0.9, 0.4]),
        v=np.array([0.1, -0.2]),
        b0=0.25,
    )


def zero_preact_pair():
    """f(x) = relu(x) + relu(-x) = |x| with both preactivations zero at 0."""
    return SocIcnnParams(
        W=(np.array([[1.0], [-1.0]]),),
        U=(np.zeros((2, 0)),),
        b=(np.zeros(2),),
        c=np.array([1.0, 1.0]),
        v=np.array([0.0]),
        b0=0.0,
    )


def wide_zero_net(width=17):
    """A single layer of ``width`` exactly-zero preactivations at x = 0."""
    return SocIcnnParams(
        W=(np.zeros((width, 1)),),
        U=(np.zeros((width, 0)),),
        b=(np.zeros(width),),
        c=np.ones(width),
        v=np.array([0.0]),
        b0=0.0,
    )


class TestCanonical:
    def test_all_active_layer_takes_readout_bound(self):
        params = single_layer_params(5.0)
        tr = forward(params, [0.0, 0.0])
        br = canonical(params, tr)
        assert np.array_equal(br.relu[0], params.c)
        assert br.source == "canonical"

    def test_all_inactive_layer_takes_zero(self):
        params = single_layer_params(-5.0)
        tr = forward(params, [0.0, 0.0])
        br = canonical(params, tr)
        assert np.array_equal(br.relu[0], np.zeros(2))
        assert np.array_equal(readout(params, br), params.v)

    def test_quadratic_multiplier_is_curvature_times_residual(self):
        params = quad_only_params(alpha=2.0)
        x = np.array([1.0, -2.0])
        br = canonical(params, forward(params, x))
        assert np.allclose(br.quad[0], 2.0 * x, rtol=0, atol=0)

    def test_conic_multiplier_points_along_residual(self):
        params = cone_only_params(lam=0.8)
        x = np.array([3.0, 4.0])
        br = canonical(params, forward(params, x))
        assert np.allclose(br.cone[0], 0.8 * x / 5.0, atol=1e-15)

    def test_conic_multiplier_vanishes_at_tip(self):
        params = cone_only_params(lam=0.8)
        br = canonical(params, forward(params, [0.0, 0.0]))
        assert np.array_equal(br.cone[0], np.zeros(2))

    def test_interval_coordinate_pinned_to_zero(self, degenerate_model):
        params, x0 = degenerate_model
        br = canonical(params, forward(params, x0))
        assert br.relu[1][0] == 0.0
        assert np.array_equal(br.cone[0], np.zeros(2))

    def test_canonical_attains_forward_value(self, medium_model):
        """The minimum-norm branch is tight: its minorant equals the model
        value at the anchor, degenerate or not."""
        for x in gaussian_points(21, 20, medium_model.input_dim):
            tr = forward(medium_model, x)
            psi = dual_value(medium_model, x, canonical(medium_model, tr))
            assert psi == pytest.approx(tr.value, rel=1e-12)

    def test_canonical_attains_value_at_kink(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        psi = dual_value(params, x0, canonical(params, tr))
        assert psi == pytest.approx(tr.value, rel=1e-12)


class TestDualValue:
    def test_all_zero_branch_gives_affine_part(self, medium_model):
        p = medium_model
        br = DualBranch(
            relu=tuple(np.zeros(w) for w in p.widths),
            quad=tuple(np.zeros(B.shape[0]) for B in p.B),
            cone=tuple(np.zeros(A.shape[0]) for A in p.A),
        )
        x = np.array([0.2, -0.4, 0.1, 0.0, 1.0, -0.3])
        assert dual_value(p, x, br) == pytest.approx(float(p.v @ x + p.b0), rel=1e-15)
        assert np.array_equal(readout(p, br), p.v)

    def test_minorant_lower_bounds_model_everywhere(self, degenerate_model):
        """Weak duality: every feasible branch built at x0 stays below the
        model at fresh probe points."""
        params, x0 = degenerate_model
        tr = forward(params, x0)
        branches = sample_optimal_branches(params, tr, n=20, seed=4)
        for y in x0 + gaussian_points(5, 25, 2):
            fy = forward(params, y).value
            for br in branches:
                assert dual_value(params, y, br) <= fy + 1e-10

    def test_infeasible_relu_branch_rejected(self):
        params = single_layer_params(5.0)
        tr = forward(params, [0.0, 0.0])
        base = canonical(params, tr)
        too_big = DualBranch(relu=(1.5 * base.relu[0],), quad=(), cone=())
        with pytest.raises(InfeasibleBranchError):
            dual_value(params, [0.0, 0.0], too_big)
        val = dual_value(params, [0.0, 0.0], too_big, check_feasible=False)
        assert np.isfinite(val)

    def test_infeasible_cone_branch_rejected(self):
        params = cone_only_params(lam=0.5)
        x = np.array([1.0, 1.0])
        too_long = DualBranch(relu=(np.zeros(1),), quad=(), cone=(np.array([0.8, 0.0]),))
        with pytest.raises(InfeasibleBranchError):
            dual_value(params, x, too_long)

    def test_negative_relu_branch_rejected(self):
        params = single_layer_params(5.0)
        bad = DualBranch(relu=(np.array([-0.1, 0.0]),), quad=(), cone=())
        with pytest.raises(InfeasibleBranchError):
            dual_value(params, [0.0, 0.0], bad)


class TestFeasibility:
    def test_canonical_is_feasible(self, medium_model, degenerate_model):
        for params, x in (
            (medium_model, gaussian_points(3, 1, medium_model.input_dim)[0]),
            degenerate_model,
        ):
            br = canonical(params, forward(params, x))
            assert feasibility_violation(params, br) <= 1e-12

    def test_violation_is_signed(self):
        params = single_layer_params(5.0)
        tr = forward(params, [0.0, 0.0])
        base = canonical(params, tr)
        assert feasibility_violation(params, base) <= 0.0
        bigger = DualBranch(relu=(base.relu[0] + 0.25,), quad=(), cone=())
        assert feasibility_violation(params, bigger) == pytest.approx(0.25, abs=1e-12)

    def test_sampled_branches_feasible(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        for br in sample_optimal_branches(params, tr, n=50, seed=0):
            assert feasibility_violation(params, br) <= 1e-12


class TestBranchBox:
    def test_nondegenerate_has_no_free_coords(self, medium_model):
        x = gaussian_points(8, 1, medium_model.input_dim)[0]
        box = branch_box(medium_model, forward(medium_model, x))
        assert box.free_coords == ()
        for st in box.status:
            assert np.all((st == FORCED_ZERO) | (st == FORCED_UPPER))

    def test_degenerate_flags_exactly_one_interval(self, degenerate_model):
        params, x0 = degenerate_model
        box = branch_box(params, forward(params, x0))
        assert box.free_coords == ((1, 0),)
        assert box.status[1][0] == FREE_INTERVAL

    def test_status_matches_preactivation_signs(self, medium_model):
        x = gaussian_points(12, 1, medium_model.input_dim)[0]
        tr = forward(medium_model, x)
        box = branch_box(medium_model, tr)
        for a, st in zip(tr.a, box.status):
            assert np.array_equal(st == FORCED_UPPER, a > 1e-9)
            assert np.array_equal(st == FORCED_ZERO, a < -1e-9)

    def test_canonical_sits_on_box_faces(self, degenerate_model):
        """Forced-upper coordinates take the recomputed bound; forced-zero
        and interval coordinates take zero."""
        params, x0 = degenerate_model
        tr = forward(params, x0)
        box = branch_box(params, tr)
        br = canonical(params, tr)
        ub = upper_bounds(params, br.relu)
        for nu, bound, st in zip(br.relu, ub, box.status):
            assert np.array_equal(nu[st == FORCED_UPPER], bound[st == FORCED_UPPER])
            assert np.all(nu[st != FORCED_UPPER] == 0.0)


class TestSampling:
    def test_nondegenerate_samples_collapse_to_canonical(self, medium_model):
        x = gaussian_points(30, 1, medium_model.input_dim)[0]
        tr = forward(medium_model, x)
        base = canonical(medium_model, tr)
        for br in sample_optimal_branches(medium_model, tr, n=6, seed=9):
            for a, b in zip(br.relu, base.relu):
                assert np.array_equal(a, b)
            for a, b in zip(br.cone, base.cone):
                assert np.array_equal(a, b)

    def test_samples_attain_value(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        for br in sample_optimal_branches(params, tr, n=100, seed=1):
            psi = dual_value(params, x0, br)
            assert abs(psi - tr.value) <= 1e-10 * (1 + abs(tr.value))

    def test_canonical_is_strictly_shortest(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        base_norm = canonical(params, tr).norm()
        for br in sample_optimal_branches(params, tr, n=100, seed=2):
            assert br.norm() > base_norm

    def test_prefix_reproducibility(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        first = sample_optimal_branches(params, tr, n=4, seed=11)
        longer = sample_optimal_branches(params, tr, n=9, seed=11)
        for a, b in zip(first, longer):
            assert a.norm() == b.norm()
            assert np.array_equal(a.relu[1], b.relu[1])
            assert np.array_equal(a.cone[0], b.cone[0])

    def test_sampled_readouts_are_subgradients(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        gs = [readout(params, br) for br in sample_optimal_branches(params, tr, n=30, seed=3)]
        probes = x0 + gaussian_points(14, 40, 2)
        for g in gs:
            for y in probes:
                assert forward(params, y).value >= tr.value + g @ (y - x0) - 1e-10


class TestCornersAndExtremes:
    def test_nondegenerate_single_extreme(self, medium_model):
        x = gaussian_points(40, 1, medium_model.input_dim)[0]
        tr = forward(medium_model, x)
        branches = extreme_branches(medium_model, tr)
        assert len(branches) == 1
        assert branches[0].source == "extreme"
        base = canonical(medium_model, tr)
        for a, b in zip(branches[0].relu, base.relu):
            assert np.array_equal(a, b)

    def test_corner_and_sphere_counts(self, degenerate_model):
        """One interval coordinate and one 2D tip module with an 8-point fan
        give exactly 2 * 8 extreme branches."""
        params, x0 = degenerate_model
        tr = forward(params, x0)
        branches = extreme_branches(params, tr, sphere_samples=8)
        assert len(branches) == 16
        free_vals = sorted({float(br.relu[1][0]) for br in branches})
        assert free_vals[0] == 0.0 and free_vals[1] > 0.0
        for br in branches:
            assert np.linalg.norm(br.cone[0]) == pytest.approx(params.lam[0], rel=1e-12)

    def test_extremes_attain_value(self, degenerate_model):
        params, x0 = degenerate_model
        tr = forward(params, x0)
        for br in extreme_branches(params, tr, sphere_samples=16):
            psi = dual_value(params, x0, br)
            assert abs(psi - tr.value) <= 1e-10 * (1 + abs(tr.value))

    def test_absolute_value_corners(self):
        """relu(x) + relu(-x) at 0 has corner readouts {-1, 0, 0, 1}."""
        params = zero_preact_pair()
        tr = forward(params, [0.0])
        branches = extreme_branches(params, tr)
        assert len(branches) == 4
        outs = sorted(float(readout(params, br)[0]) for br in branches)
        assert outs == pytest.approx([-1.0, 0.0, 0.0, 1.0], abs=0)

    def test_corner_enumeration_guard(self):
        params = wide_zero_net(17)
        tr = forward(params, [0.0])
        box = branch_box(params, tr)
        assert len(box.free_coords) == 17
        with pytest.raises(TooManyDegeneraciesError):
            list(relu_corner_assignments(params, box))
        with pytest.raises(TooManyDegeneraciesError):
            extreme_branches(params, tr)

    def test_sixteen_free_coords_still_enumerable(self):
        params = wide_zero_net(16)
        tr = forward(params, [0.0])
        corners = list(relu_corner_assignments(params, branch_box(params, tr)))
        assert len(corners) == 2 ** 16


class TestMixing:
    def test_blockwise_mixing_stays_optimal(self, degenerate_model):
        """The optimal set is a product over blocks, so swapping the conic
        part of one optimal branch into another preserves optimality."""
        params, x0 = degenerate_model
        tr = forward(params, x0)
        branches = sample_optimal_branches(params, tr, n=12, seed=6)
        for i in range(0, 12, 3):
            for j in range(1, 12, 4):
                mixed = DualBranch(
                    relu=branches[i].relu,
                    quad=branches[i].quad,
                    cone=branches[j].cone,
                )
                psi = dual_value(params, x0, mixed)
                assert abs(psi - tr.value) <= 1e-10 * (1 + abs(tr.value))

    def test_masked_multipliers_reproduce_canonical(self, medium_model):
        x = gaussian_points(50, 1, medium_model.input_dim)[0]
        tr = forward(medium_model, x)
        masks = tuple(a > 1e-9 for a in tr.a)
        relu = masked_relu_multipliers(medium_model, masks)
        base = canonical(medium_model, tr)
        for a, b in zip(relu, base.relu):
            assert np.array_equal(a, b)

    def test_upper_bounds_chain(self, medium_model):
        """The last bound is the readout weight; earlier bounds flow through
        the transposed skip weights."""
        x = gaussian_points(51, 1, medium_model.input_dim)[0]
        tr = forward(medium_model, x)
        br = canonical(medium_model, tr)
        ub = upper_bounds(medium_model, br.relu)
        assert np.array_equal(ub[-1], medium_model.c)
        assert np.array_equal(ub[0], medium_model.U[1].T @ br.relu[1])
