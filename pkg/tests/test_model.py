import math

import pytest
from hypothesis import given, strategies as st

from nambd.errors import InvalidConfig, NonPositiveDiffusion, OrderingViolation
from nambd.model import (AdaptiveStep, DetectorKind, EndState, FixedStep, NamGeometry, RngKind,
                         SimulatorConfig, Vec3, make_geometry, stepsize_from_dict)


def test_reference_geometry_accepted():
    g = make_geometry(10, 50, 100, 1, 4)
    assert (g.a, g.b, g.q, g.D, g.particle_radius) == (10, 50, 100, 1, 4)


@pytest.mark.parametrize("args", [(50, 50, 100, 1), (10, 100, 100, 1), (0, 50, 100, 1),
                                  (60, 50, 100, 1), (10, 50, 40, 1), (-1, 50, 100, 1)])
def test_ordering_violations(args):
    with pytest.raises(OrderingViolation):
        make_geometry(*args, 4)


@pytest.mark.parametrize("D", [0.0, -1.0])
def test_nonpositive_diffusion(D):
    with pytest.raises(NonPositiveDiffusion):
        make_geometry(10, 50, 100, D, 4)


def test_nonfinite_inputs_are_named_errors():
    with pytest.raises(ValueError):
        make_geometry(10, 50, math.inf, 1)
    with pytest.raises(ValueError):
        make_geometry(math.nan, 50, 100, 1)


pos = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False, allow_infinity=False)


@given(pos, pos, pos, pos)
def test_construction_total(x, y, z, D):
    a, b, q = sorted((x, y, z))
    if a < b < q:
        g = make_geometry(a, b, q, D)
        assert g.a < g.b < g.q
    else:
        with pytest.raises(OrderingViolation):
            make_geometry(a, b, q, D)


def test_vec3_rejects_nonfinite():
    with pytest.raises(ValueError):
        Vec3(0.0, math.nan, 1.0)
    with pytest.raises(ValueError):
        Vec3(math.inf, 0.0, 1.0)


def test_vec3_norm_definition():
    v = Vec3(1.0, 2.0, 2.0)
    assert v.norm2() == 9.0
    assert v.norm() == 3.0
    assert (v + v).as_tuple() == (2.0, 4.0, 4.0)
    assert (v - v).norm() == 0.0


comp = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@given(comp, comp, comp, st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_vec3_norm_scales(x, y, z, s):
    v = Vec3(x, y, z)
    lhs = v.scale(s).norm()
    rhs = abs(s) * v.norm()
    assert lhs == pytest.approx(rhs, rel=4e-16 * 8, abs=1e-300)


def test_end_state_has_two_variants():
    assert {e.value for e in EndState} == {"Reacted", "Escaped"}


def test_config_roundtrip_and_validation():
    cfg = SimulatorConfig(RngKind.BASELINE_LCG, DetectorKind.TIME_STEPPED,
                          AdaptiveStep(0.1, 0.01, 0.1), seed=2**64 - 1)
    assert SimulatorConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.adaptive
    assert cfg.label() == "stepped/adaptive(0.1..0.01)/lcg"
    # event-triggered keeps the base dt and ignores adaptivity
    ev = SimulatorConfig(detector_kind=DetectorKind.EVENT_TRIGGERED, stepsize=AdaptiveStep())
    assert not ev.adaptive and ev.stepsize.base_dt == 0.1
    with pytest.raises(InvalidConfig):
        SimulatorConfig(seed=2**64)
    with pytest.raises(InvalidConfig):
        FixedStep(0.0)
    with pytest.raises(InvalidConfig):
        AdaptiveStep(dt_max=0.01, dt_min=0.1)
    with pytest.raises(InvalidConfig):
        AdaptiveStep(safety_fraction=1.0)
    with pytest.raises(InvalidConfig):
        stepsize_from_dict({"kind": "Wobbly"})


def test_geometry_is_immutable():
    g = NamGeometry(10, 50, 100, 1)
    with pytest.raises(Exception):
        g.a = 5
