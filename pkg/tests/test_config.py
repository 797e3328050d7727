import pytest
from hypothesis import given, strategies as st

from blankopt.config import Config, ConfigError, format_floats, parse_floats

TEXT = """
[a]
x = 1.5
n = 7
flag = yes
name = hello  # trailing comment
vec = 1, 2.5, -3
multi =
    1 2
    3 4
"""


@pytest.fixture
def cfg():
    return Config.from_text(TEXT)


def test_typed_getters(cfg):
    assert cfg.get_float("a", "x") == 1.5
    assert cfg.get_int("a", "n") == 7
    assert cfg.get_bool("a", "flag") is True
    assert cfg.get_str("a", "name") == "hello"
    assert cfg.get_floats("a", "vec") == [1.0, 2.5, -3.0]
    assert cfg.get_floats("a", "multi") == [1, 2, 3, 4]


def test_defaults_and_missing(cfg):
    assert cfg.get_float("a", "missing", 2.0) == 2.0
    assert cfg.get_int("b", "missing", 3) == 3
    with pytest.raises(ConfigError, match=r"missing key \[a\] missing"):
        cfg.get_float("a", "missing")
    with pytest.raises(ConfigError, match=r"missing section \[zzz\]"):
        cfg.keys("zzz")


@pytest.mark.parametrize("getter,key", [("get_float", "name"), ("get_int", "x"), ("get_bool", "x")])
def test_type_errors_name_the_key(cfg, getter, key):
    with pytest.raises(ConfigError, match=rf"\[a\] {key}"):
        getattr(cfg, getter)("a", key)


def test_key_case_is_preserved():
    c = Config.from_text("[s]\nP0 = 3\n")
    assert c.keys("s") == ["P0"]


def test_malformed_text():
    with pytest.raises(ConfigError):
        Config.from_text("no section header\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        Config.from_path(tmp_path / "nope.cfg")


def test_hash_is_order_and_whitespace_insensitive():
    a = Config.from_text("[s]\nx = 1\ny = 2\n[t]\nz = 3\n")
    b = Config.from_text("[t]\nz =   3\n\n[s]\ny = 2\nx = 1\n")
    c = Config.from_text("[s]\nx = 1\ny = 2\n[t]\nz = 4\n")
    assert a.hash() == b.hash() != c.hash()
    assert len(a.hash()) == 16 and int(a.hash(), 16) >= 0


def test_set_updates_text_and_hash(cfg):
    before = cfg.hash()
    cfg.set("a", "x", 2.5)
    assert cfg.get_float("a", "x") == 2.5
    assert "x = 2.5" in cfg.text
    assert cfg.hash() != before
    cfg.set("new", "k", "v")
    assert cfg.get_str("new", "k") == "v"


def test_dumps_round_trips_multiline_values(config):
    again = Config.from_text(config.dumps())
    assert again.hash() == config.hash()
    assert again.raw("outline", "vertices") == config.raw("outline", "vertices")


def test_default_config_sections(config):
    for section in ("outline", "region_1", "grid", "oracle", "reference_design",
                    "sampling", "autodecoder", "iaism", "saism", "optimizer"):
        assert config.has_section(section), section


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=10))
def test_float_lists_round_trip(values):
    assert parse_floats(format_floats(values)) == values


def test_parse_floats_error():
    with pytest.raises(ConfigError, match="expected numbers"):
        parse_floats("1, two", "[s] k")
