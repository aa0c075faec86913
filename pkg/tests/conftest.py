"""Shared fixtures: hand-built models whose values are known in closed form."""

import numpy as np
import pytest

from socicnn import ArchSpec, SocIcnnParams, build_degenerate_2d, build_random


def inert_backbone(input_dim):
    """Backbone contributing exactly zero: one unit, frozen inactive.

    The single preactivation is the constant -1, so the unit is off with
    margin 1 at every input and the readout reduces to the module terms.
    """
    return dict(
        W=(np.zeros((1, input_dim)),),
        U=(np.zeros((1, 0)),),
        b=(np.array([-1.0]),),
        c=np.array([0.0]),
        v=np.zeros(input_dim),
        b0=0.0,
    )


def quad_only_params(alpha=2.0, dim=2):
    """f(x) = (alpha / 2) * ||x||^2 through a single identity quadratic module."""
    return SocIcnnParams(
        alpha=(alpha,),
        B=(np.eye(dim),),
        e=(np.zeros(dim),),
        **inert_backbone(dim),
    )


def cone_only_params(lam=0.8, A=None, shift=None, dim=2):
    """f(x) = lam * ||A x + shift|| through a single conic module."""
    if A is None:
        A = np.eye(dim)
    A = np.asarray(A, dtype=float)
    if shift is None:
        shift = np.zeros(A.shape[0])
    return SocIcnnParams(
        lam=(lam,),
        A=(A,),
        d=(np.asarray(shift, dtype=float),),
        **inert_backbone(dim),
    )


def constant_params(b0=3.5, dim=2):
    """f(x) = b0 for every x: zero weights everywhere."""
    base = inert_backbone(dim)
    base["b0"] = b0
    return SocIcnnParams(**base)


@pytest.fixture(scope="session")
def degenerate_model():
    """The hand-built 2D model with one ReLU kink and one conic tip at x0."""
    return build_degenerate_2d()


@pytest.fixture(scope="session")
def small_model():
    """A small random model used where the architecture does not matter."""
    return build_random(3, ArchSpec(4, (6, 5), quad_dims=(3,), cone_dims=(3,)))


@pytest.fixture(scope="session")
def medium_model():
    """A mid-sized random model for oracle comparisons."""
    return build_random(11, ArchSpec(6, (12, 10, 8), quad_dims=(5,), cone_dims=(4, 4)))


def gaussian_points(seed, n, dim, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((n, dim))
