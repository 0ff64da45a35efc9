import json
from pathlib import Path

import pytest

from engine import config_hash, run_config_from_dict
from geometry import DiskDomain, StripDomain
from run_config import (
    OUT_DIR_ENV,
    RECIPES_DIR,
    ConfigParseError,
    ConfigValidationError,
    RecipeUsageError,
    accumulator_path,
    dump_run_config,
    find_recipe,
    list_recipes,
    load_defaults,
    load_recipe,
    read_json,
    recipe_from_payload,
    resolve_domain,
    resolve_output_dir,
)

SHIPPED = ["a1_sweep", "b1_sweep", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "shape", "table1", "table1_smoke"]


def ladder_payload(**analysis):
    payload = {
        "name": "ladder",
        "defaults": {"domain": "D1", "table": {"a1": 0.9, "a2": 0.05, "a3": 0.05}, "n_samples": 1000},
        "runs": [{"id": "coarse", "spacing": 0.04}, {"id": "fine", "spacing": 0.02}],
        "analyses": [dict({"name": "collapse", "kind": "collapse", "runs": ["coarse", "fine"]}, **analysis)],
    }
    return payload


def test_defaults_define_the_two_study_domains():
    defaults = load_defaults()

    assert resolve_domain("D1", defaults) == DiskDomain(0.3, -0.25, 1.0)
    assert resolve_domain("D2", defaults) == StripDomain(0.6, -0.4)
    assert defaults["oracle"]["calibrated_bound"] == 0.004


def test_unknown_preset_is_a_validation_error():
    with pytest.raises(ConfigValidationError):
        resolve_domain("D3", load_defaults())


def test_recipe_merges_defaults_into_every_run():
    recipe = recipe_from_payload(ladder_payload(), load_defaults())

    coarse = recipe.run("coarse")
    assert coarse.domain == DiskDomain(0.3, -0.25, 1.0)
    assert coarse.table.a1 == 0.9
    assert coarse.table.b1 == 0.5
    assert coarse.n_samples == 1000
    assert coarse.n_bins == 1000
    assert coarse.master_seed == 20170101
    assert recipe.output_dir.endswith("ladder")


def test_single_run_config_is_accepted():
    payload = {"domain": {"kind": "disk", "center_x": 0.0, "center_y": 0.0, "radius": 1.0}, "spacing": 0.04,
               "n_samples": 10_000}
    recipe = recipe_from_payload(payload, load_defaults())

    assert len(recipe.runs) == 1
    assert recipe.runs[0].spacing == 0.04


def test_empty_configs_are_usage_errors():
    with pytest.raises(RecipeUsageError):
        recipe_from_payload({}, load_defaults())
    with pytest.raises(RecipeUsageError):
        recipe_from_payload({"name": "nothing", "runs": []}, load_defaults())


def test_invalid_table_is_a_validation_error():
    payload = {"domain": "D1", "spacing": 0.04, "table": {"a1": 0.5, "a2": 0.3, "a3": 0.3}}

    with pytest.raises(ConfigValidationError):
        recipe_from_payload(payload, load_defaults())


def test_inadmissible_spacing_is_a_validation_error():
    with pytest.raises(ConfigValidationError):
        recipe_from_payload({"domain": "D2", "spacing": 0.5}, load_defaults())


def test_collapse_ladder_needs_distinct_spacings_and_one_table():
    payload = ladder_payload()
    payload["runs"][1]["spacing"] = 0.04
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(payload, load_defaults())

    payload = ladder_payload()
    payload["runs"][1]["table"] = {"a1": 0.1, "a2": 0.45, "a3": 0.45}
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(payload, load_defaults())


def test_analysis_must_reference_known_runs():
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(ladder_payload(runs=["coarse", "missing"]), load_defaults())
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(ladder_payload(kind="histogram"), load_defaults())


def test_ratio_pairs_must_be_a_mapping_of_run_id_lists():
    listed = ladder_payload(kind="ratio", pairs=[["coarse", "fine"]])
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(listed, load_defaults())

    scalar = ladder_payload(kind="ratio", pairs={"D1": "coarse", "D2": "fine"})
    with pytest.raises(ConfigValidationError):
        recipe_from_payload(scalar, load_defaults())

    with pytest.raises(ConfigValidationError):
        recipe_from_payload(ladder_payload(runs="coarse"), load_defaults())


def test_run_config_dump_is_byte_stable():
    recipe = recipe_from_payload(ladder_payload(), load_defaults())
    text = dump_run_config(recipe.run("fine"))

    assert dump_run_config(run_config_from_dict(json.loads(text))) == text
    assert text.endswith("\n")


def test_read_json_reports_parse_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"runs": [')

    with pytest.raises(ConfigParseError):
        read_json(broken)


def test_read_json_reports_non_utf8_files_as_parse_errors(tmp_path):
    latin = tmp_path / "latin.json"
    latin.write_bytes(b"\xff\xfe{\"name\": \"caf\xe9\"}")

    with pytest.raises(ConfigParseError):
        read_json(latin)


def test_output_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert resolve_output_dir("outputs/fig4") == Path("outputs/fig4")

    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert resolve_output_dir("outputs/fig4") == tmp_path / "env"
    assert resolve_output_dir("outputs/fig4", tmp_path / "cli") == tmp_path / "cli"


def test_accumulator_files_are_named_by_config_hash(tmp_path):
    cfg = recipe_from_payload(ladder_payload(), load_defaults()).run("coarse")

    assert accumulator_path(tmp_path, cfg) == tmp_path / "accumulators" / f"{config_hash(cfg)}.json"


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_recipes_load_and_validate(name):
    recipe = load_recipe(name)

    assert recipe.name == name
    assert recipe.runs
    assert recipe.analyses


def test_figure_recipes_share_accumulators():
    fig3 = load_recipe("fig3")
    fig4 = load_recipe("fig4")

    assert fig3.output_dir == fig4.output_dir
    assert [config_hash(cfg) for cfg in fig3.runs] == [config_hash(cfg) for cfg in fig4.runs]


def test_list_recipes_and_find_recipe():
    listing = list_recipes()

    assert sorted(listing["recipe"].tolist()) == SHIPPED
    assert find_recipe("fig7") == RECIPES_DIR / "fig7.json"
    with pytest.raises(FileNotFoundError):
        find_recipe("fig99")
