import math
import random

import pytest

from tcadloop.errors import ConfigError, SchemaError, UnrepairableParams
from tcadloop.params import (
    DEFAULT_BOUNDS,
    FIELD_ORDER,
    REFERENCE_DESIGN,
    Bound,
    DesignParams,
    ParamSpace,
    SpecTargets,
    clamp,
    validate,
)


def _at_lower_bounds(space):
    return DesignParams(**{name: space.bounds[name].lower for name in FIELD_ORDER})


def _random_raw(rng, space):
    """Anything from well inside to well outside the bounds."""
    values = {}
    for name in FIELD_ORDER:
        u = rng.uniform(-0.3, 1.3)
        b = space.bounds[name]
        values[name] = space.denormalize(name, u) if b.scale == "log10" else b.lower + u * (b.upper - b.lower)
    values["num_sheets"] = round(values["num_sheets"], 2)
    return DesignParams(**values)


def test_all_lower_bounds_are_in_bounds(space):
    assert validate(_at_lower_bounds(space), space).in_bounds


def test_just_below_lower_bound_is_reported(space):
    p = REFERENCE_DESIGN.replace(gate_length=space.bounds["gate_length"].lower - 1e-9)
    result = validate(p, space)
    assert not result.in_bounds
    assert result.fields() == ("gate_length",)
    v = result.violations[0]
    assert (v.lower, v.upper) == (8.0, 30.0)


def test_collapsed_sheet_stack_is_reported(space):
    p = REFERENCE_DESIGN.replace(vertical_pitch=REFERENCE_DESIGN.sheet_thickness)
    assert "vertical_pitch" in validate(p, space).fields()


def test_source_drain_doping_must_exceed_channel(space):
    bounds = dict(DEFAULT_BOUNDS)
    bounds["sd_doping"] = Bound(1e17, 1e21, scale="log10")
    p = REFERENCE_DESIGN.replace(channel_doping=1e18, sd_doping=1e18)
    result = validate(p, ParamSpace(bounds))
    assert result.fields() == ("sd_doping",)
    assert "must exceed channel_doping" in str(result.violations[0])


def test_clamp_is_identity_in_bounds(r1, space):
    assert clamp(r1, space) == r1


def test_clamp_projects_only_the_offending_field(r1, space):
    out = clamp(r1.replace(gate_length=45.0), space)
    assert out.gate_length == 30.0
    assert out.replace(gate_length=r1.gate_length) == r1


def test_clamp_rounds_integer_axis(r1, space):
    assert clamp(r1.replace(num_sheets=3.7), space).num_sheets == 4
    assert clamp(r1.replace(num_sheets=2.5), space).num_sheets == 3
    assert clamp(r1.replace(num_sheets=9.2), space).num_sheets == 5
    assert isinstance(clamp(r1.replace(num_sheets=3.7), space).num_sheets, int)


def test_clamp_is_idempotent_and_lands_in_bounds(space):
    rng = random.Random(11)
    for _ in range(300):
        once = clamp(_random_raw(rng, space), space)
        assert validate(once, space).in_bounds
        assert clamp(once, space) == once


def test_clamp_repairs_collapsed_stack():
    bounds = dict(DEFAULT_BOUNDS)
    bounds["vertical_pitch"] = Bound(4.0, 20.0)
    space = ParamSpace(bounds)
    out = clamp(REFERENCE_DESIGN.replace(sheet_thickness=6.0, vertical_pitch=5.0), space)
    assert out.vertical_pitch == 7.0


def test_clamp_repairs_weak_source_drain_doping():
    bounds = dict(DEFAULT_BOUNDS)
    bounds["sd_doping"] = Bound(1e15, 1e21, scale="log10")
    space = ParamSpace(bounds)
    out = clamp(REFERENCE_DESIGN.replace(channel_doping=1e17, sd_doping=1e16), space)
    assert out.sd_doping == pytest.approx(1e18)


def test_clamp_raises_when_bounds_leave_no_repair():
    bounds = dict(DEFAULT_BOUNDS)
    bounds["vertical_pitch"] = Bound(5.0, 6.0)
    bounds["sheet_thickness"] = Bound(6.5, 8.0)
    space = ParamSpace(bounds)
    with pytest.raises(UnrepairableParams):
        clamp(REFERENCE_DESIGN, space)


def test_clamp_rejects_non_finite(r1, space):
    with pytest.raises(UnrepairableParams):
        clamp(r1.replace(eot=math.nan), space)


def test_from_dict_rejects_bad_input(r1):
    data = r1.to_dict()
    assert DesignParams.from_dict(data) == r1

    with pytest.raises(SchemaError, match="missing fields: eot"):
        DesignParams.from_dict({k: v for k, v in data.items() if k != "eot"})
    with pytest.raises(SchemaError, match="unknown fields: colour"):
        DesignParams.from_dict({**data, "colour": 1})
    with pytest.raises(SchemaError):
        DesignParams.from_dict({**data, "gate_length": "14 nm"})
    with pytest.raises(SchemaError):
        DesignParams.from_dict({**data, "num_sheets": True})
    with pytest.raises(SchemaError):
        DesignParams.from_dict({**data, "vdd": math.inf})
    with pytest.raises(SchemaError):
        DesignParams.from_dict([1, 2, 3])


def test_effective_width_is_gate_all_around_perimeter(r1):
    assert r1.w_eff_um == pytest.approx(3 * 2 * (25.0 + 5.0) * 1e-3)


def test_default_targets_are_consistent():
    t = SpecTargets()
    assert (t.ss_max, t.ioff_max, t.ion_min, t.onoff_min, t.vdd, t.temperature) == (72.0, 1.0e-8, 7.87e-4, 4.90, 0.65, 300.0)
    ceiling = math.log10(t.ion_min / t.ioff_max)
    assert round(ceiling, 3) == 4.896
    assert ceiling >= t.onoff_min - 0.01


def test_targets_reject_bad_values():
    with pytest.raises(ConfigError, match="unreachable"):
        SpecTargets(onoff_min=5.5)
    with pytest.raises(ConfigError):
        SpecTargets(ss_max=-1.0)
    with pytest.raises(ConfigError, match="unknown spec target"):
        SpecTargets.from_dict({"ss_max": 70, "dibl_max": 0.1})
    assert SpecTargets.from_dict(None) == SpecTargets()


def test_space_rejects_bad_bounds():
    with pytest.raises(ConfigError):
        ParamSpace({**DEFAULT_BOUNDS, "eot": Bound(1.5, 0.5)})
    with pytest.raises(ConfigError):
        ParamSpace({k: v for k, v in DEFAULT_BOUNDS.items() if k != "vdd"})
    with pytest.raises(ConfigError):
        ParamSpace.from_dict({**ParamSpace.default().to_dict(), "eot": {"lower": 0.5}})


def test_log_axis_normalizes_in_decades(space):
    assert space.normalize("channel_doping", 1e16) == pytest.approx(1.0 / 3.0)
    assert space.denormalize("channel_doping", 2.0 / 3.0) == pytest.approx(1e17)
    assert space.normalize("gate_length", 19.0) == pytest.approx(0.5)


def test_space_survives_its_own_dict(space):
    assert ParamSpace.from_dict(space.to_dict()) == space
