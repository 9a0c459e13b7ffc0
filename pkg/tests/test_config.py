import pytest

from opbw.config import (
    CapacityLaw,
    ConfigError,
    SimConfig,
    config_from_mapping,
    default_offsets,
    parse_offsets,
    two_neighbor_offsets,
)


def test_default_offsets_d1():
    assert default_offsets(1) == ((-1,), (0,), (1,))


def test_default_offsets_d2_count():
    assert len(default_offsets(2)) == 9


def test_p_zero_rejected():
    with pytest.raises(ConfigError):
        SimConfig(d=1, p=0.0)


def test_p_above_one_rejected():
    with pytest.raises(ConfigError):
        SimConfig(d=1, p=1.5)


def test_asymmetric_offsets_rejected():
    with pytest.raises(ConfigError):
        SimConfig(d=1, U_offsets=((0,), (1,)))


def test_two_neighbor_ok():
    cfg = SimConfig(d=1, U_offsets=two_neighbor_offsets())
    assert cfg.radius == 1


def test_cone_sufficiency():
    cfg = SimConfig(d=1, p=0.8, H=64, L=64, walk_steps=64)
    with pytest.raises(ConfigError):
        cfg.require_cone_sufficient()
    ok = SimConfig(d=1, p=0.8, H=64, L=128, walk_steps=64)
    ok.require_cone_sufficient()


def test_parse_offsets():
    assert parse_offsets("box:1", 1) == ((-1,), (0,), (1,))
    assert parse_offsets("pm1", 1) == ((-1,), (1,))
    assert parse_offsets("(-1),(0),(1)", 1) == ((-1,), (0,), (1,))
    offs = parse_offsets("(0,1),(0,-1),(1,0),(-1,0)", 2)
    assert len(offs) == 4
    with pytest.raises(ConfigError):
        parse_offsets("(0,1)", 1)


def test_capacity_law_parse_and_sample():
    law = CapacityLaw.parse("const:2")
    assert law.values == (2,) and law.is_trivial is False
    law = CapacityLaw.parse("uniform:1..3")
    assert law.values == (1, 2, 3)
    law = CapacityLaw.parse("pmf:1:0.5,3:0.5")
    assert law.sample(0) == 1
    assert law.sample(2 ** 64 - 1) == 3
    with pytest.raises(ConfigError):
        CapacityLaw.parse("magic:1")
    with pytest.raises(ConfigError):
        CapacityLaw(values=(0,), probs=(1.0,))


def test_config_from_mapping():
    cfg = config_from_mapping({
        "d": "1", "p": "0.75", "horizon": "32", "steps": "16",
        "neighborhood": "pm1", "base_seed": "9",
    })
    assert cfg.p == 0.75 and cfg.H == 32 and cfg.U_offsets == ((-1,), (1,))
