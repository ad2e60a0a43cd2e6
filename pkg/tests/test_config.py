import pytest

from cauchytime.config import SchemaError, load_config, parse_config


def base(**extra):
    d = {"model": {"family": "Minkowski2d", "resolution": [11, 11], "t_range": [-1.0, 1.0]}}
    for k, v in extra.items():
        d.setdefault(k, {}).update(v)
    return d


def test_minimal():
    cfg = parse_config(base())
    assert cfg.model.resolution == (11, 11)
    assert cfg.radius == 2
    assert not cfg.has_group


@pytest.mark.parametrize("data, path", [
    (base(model={"colour": "red"}), "model.colour"),
    (base(steep={"bump": 2}), "steep.bump"),
    (base(nonsense={}), "nonsense"),
    (base(graph={"radius": 0}), "graph.radius"),
    (base(graph={"radius": 2.5}), "graph.radius"),
    (base(model={"resolution": [2, 11]}), "model.resolution"),
    (base(model={"t_range": [1.0, -1.0]}), "model.t_range"),
    (base(model={"family": "Kerr"}), "model.family"),
    (base(group={"reflection": 1}), "group.reflection"),
    (base(steep={"separation": "euclid"}), "steep.separation"),
    (base(surfaces={"levels": [{"u": 0.0, "value": 0.0, "w": 1}]}), "surfaces.levels[0].w"),
    (base(surfaces={"levels": [{"u": 0.0}]}), "surfaces.levels[0].value"),
    (base(export={"fields": ["geroch", "bogus"]}), "export.fields[1]"),
    ({"graph": {}}, "model.family"),
])
def test_schema_errors_carry_path(data, path):
    with pytest.raises(SchemaError) as exc:
        parse_config(data)
    assert exc.value.path == path
    assert path in str(exc.value)


def test_bool_is_not_a_number():
    with pytest.raises(SchemaError):
        parse_config(base(geroch={"cauchy_threshold": True}))


def test_shipped_configs_load():
    from pathlib import Path

    for p in sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.toml")):
        load_config(p)


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[model\nfamily=")
    with pytest.raises(SchemaError):
        load_config(p)


def test_surface_expression():
    from cauchytime.spacetime import build_model

    cfg = parse_config(base(surfaces={"levels": [{"u": "0.2*sin(x)", "value": 0}]}))
    st = build_model(cfg.model)
    s = cfg.surface(st, cfg.levels[0][0])
    assert s(0.0) == pytest.approx(0.0)
