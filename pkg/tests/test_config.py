"""Config loading: strict schema, defaults, provenance hash, derived knobs."""

import copy

import numpy as np
import pytest

from ctxrisk.config import (
    DEFAULTS,
    ConfigError,
    ExperimentConfig,
    ParseError,
    UnknownKey,
    ValidationError,
    config_hash,
    from_effective,
    load_config,
    set_by_path,
)
from ctxrisk.identify import EdgeShrunkOptions, KinkOptions


def _write(tmp_path, text: str) -> str:
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


class TestLoading:
    def test_defaults_build(self):
        cfg = from_effective(copy.deepcopy(DEFAULTS))
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.scenario.prices.x_i == 2.0
        assert cfg.scenario.mix.alpha == 0.3
        assert len(cfg.config_hash) == 64

    def test_empty_file_equals_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, "# nothing but comments\n"))
        assert cfg.config_hash == config_hash(copy.deepcopy(DEFAULTS))

    def test_partial_file_merges_over_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, "scenario:\n  mixture:\n    alpha: 0.1\n"))
        assert cfg.scenario.mix.alpha == 0.1
        assert cfg.scenario.mix.beta == 0.5  # untouched default

    def test_overrides_enter_effective_tree_and_hash(self, tmp_path):
        path = _write(tmp_path, "")
        base = load_config(path)
        seeded = load_config(path, overrides={"run.seed": 7})
        assert seeded.run.seed == 7
        assert seeded.effective["run"]["seed"] == 7
        assert seeded.config_hash != base.config_hash

    def test_missing_file_is_parse_error(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read"):
            load_config(str(tmp_path / "absent.yaml"))

    def test_malformed_yaml_reports_position(self, tmp_path):
        with pytest.raises(ParseError, match=r"line \d+"):
            load_config(_write(tmp_path, "scenario:\n  prices: [unclosed\n"))

    def test_non_mapping_root_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="mapping"):
            load_config(_write(tmp_path, "- 1\n- 2\n"))


class TestStrictSchema:
    def test_misspelled_key_is_fatal(self, tmp_path):
        with pytest.raises(UnknownKey, match="copulla"):
            load_config(
                _write(tmp_path, "scenario:\n  mixture:\n    copulla:\n      family: fgm\n")
            )

    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(UnknownKey, match="outputs"):
            load_config(_write(tmp_path, "outputs: out\n"))

    def test_string_float_gets_dot_hint(self, tmp_path):
        # YAML reads 1e-4 (no dot) as a string; the error should say how to fix it.
        with pytest.raises(ValidationError, match="1.0e-4"):
            load_config(_write(tmp_path, 'numeric:\n  eps_frac: "1e-4"\n'))


class TestSemanticValidation:
    def _reject(self, mutate, match):
        tree = copy.deepcopy(DEFAULTS)
        mutate(tree)
        with pytest.raises(ValidationError, match=match):
            from_effective(tree)

    def test_consideration_must_sum_to_one(self):
        self._reject(
            lambda t: set_by_path(t, "scenario.consideration.both_both", 0.98),
            "consideration",
        )

    def test_mixture_mass_cannot_exceed_one(self):
        self._reject(lambda t: set_by_path(t, "scenario.mixture.alpha", 0.6), "exceeds 1")

    def test_price_box_must_be_ordered(self):
        def flip(t):
            set_by_path(t, "scenario.x_min", 4.0)
            set_by_path(t, "scenario.x_max", 1.0)
            set_by_path(t, "scenario.prices.x_i", 2.0)

        self._reject(flip, "x_min < x_max")

    def test_scenario_prices_must_sit_in_box(self):
        self._reject(lambda t: set_by_path(t, "scenario.prices.x_i", 9.0), "outside")

    def test_price_range_shape(self):
        self._reject(
            lambda t: set_by_path(t, "run.simulate.x_i_range", [2.0]), "low, high"
        )

    def test_price_range_ordered(self):
        self._reject(
            lambda t: set_by_path(t, "run.simulate.x_i_range", [3.0, 1.0]), "low < high"
        )

    def test_price_range_inside_box(self):
        self._reject(
            lambda t: set_by_path(t, "run.simulate.x_i_range", [0.1, 4.5]),
            "admissible box",
        )

    def test_file_mode_requires_price_file(self):
        self._reject(
            lambda t: set_by_path(t, "run.simulate.price_mode", "file"), "price_file"
        )

    def test_unknown_stage(self):
        self._reject(
            lambda t: set_by_path(t, "run.identify.stages", ["cara_side", "kink"]),
            "unknown stage",
        )

    def test_duplicate_stage(self):
        self._reject(
            lambda t: set_by_path(t, "run.identify.stages", ["copula", "copula"]),
            "duplicate",
        )

    def test_empty_stages(self):
        self._reject(lambda t: set_by_path(t, "run.identify.stages", []), "non-empty")

    def test_stages_canonical_order(self):
        tree = copy.deepcopy(DEFAULTS)
        set_by_path(tree, "run.identify.stages", ["copula", "cara_side"])
        cfg = from_effective(tree)
        assert cfg.run.identify.stages == ("cara_side", "copula")

    def test_bool_leaf_rejects_number(self):
        self._reject(
            lambda t: set_by_path(t, "numeric.shrink_eps_at_edges", 1), "true/false"
        )

    def test_negative_agent_count(self):
        self._reject(lambda t: set_by_path(t, "run.simulate.n_agents", 0), ">= 1")

    def test_several_problems_reported_together(self):
        tree = copy.deepcopy(DEFAULTS)
        set_by_path(tree, "scenario.mixture.alpha", 0.9)
        set_by_path(tree, "scenario.consideration.both_both", 0.5)
        with pytest.raises(ValidationError) as err:
            from_effective(tree)
        assert "exceeds 1" in str(err.value) and "consideration" in str(err.value)

    def test_config_error_is_common_base(self):
        assert issubclass(UnknownKey, ConfigError)
        assert issubclass(ValidationError, ConfigError)
        assert issubclass(ParseError, ConfigError)


class TestSetByPath:
    def test_sets_nested_leaf(self):
        tree = copy.deepcopy(DEFAULTS)
        set_by_path(tree, "run.identify.grid_size", 11)
        assert tree["run"]["identify"]["grid_size"] == 11

    def test_rejects_path_off_schema(self):
        tree = copy.deepcopy(DEFAULTS)
        with pytest.raises(ValidationError, match="does not resolve"):
            set_by_path(tree, "run.identify.gridsize", 11)

    def test_rejects_path_through_leaf(self):
        tree = copy.deepcopy(DEFAULTS)
        with pytest.raises(ValidationError, match="does not resolve"):
            set_by_path(tree, "run.seed.extra", 1)


class TestProvenanceHash:
    def test_stable_across_calls(self):
        tree = copy.deepcopy(DEFAULTS)
        assert config_hash(tree) == config_hash(tree)

    def test_execution_context_excluded(self):
        # Worker count and output directory cannot change results, so they
        # must not change the provenance identity either.
        base = copy.deepcopy(DEFAULTS)
        moved = copy.deepcopy(DEFAULTS)
        set_by_path(moved, "run.workers", 8)
        set_by_path(moved, "run.out_dir", "elsewhere")
        assert config_hash(base) == config_hash(moved)

    def test_seed_included(self):
        base = copy.deepcopy(DEFAULTS)
        reseeded = copy.deepcopy(DEFAULTS)
        set_by_path(reseeded, "run.seed", 1)
        assert config_hash(base) != config_hash(reseeded)

    def test_hashing_does_not_mutate_input(self):
        tree = copy.deepcopy(DEFAULTS)
        config_hash(tree)
        assert tree["run"]["workers"] == DEFAULTS["run"]["workers"]

    def test_from_effective_detaches_from_input(self):
        tree = copy.deepcopy(DEFAULTS)
        cfg = from_effective(tree)
        set_by_path(tree, "run.seed", 999)
        assert cfg.effective["run"]["seed"] == DEFAULTS["run"]["seed"]


class TestDerivedKnobs:
    def test_kink_options_scale_with_bounds(self):
        cfg = from_effective(copy.deepcopy(DEFAULTS))
        opts = cfg.kink_options("eu")
        assert isinstance(opts, EdgeShrunkOptions)  # shrink_eps_at_edges default
        base = opts.base
        assert base.eps == pytest.approx(1.0e-4 * cfg.scenario.ts.nu_bar)
        assert base.fd_step == pytest.approx(
            5.0e-7 * (cfg.scenario.ts.x_max - cfg.scenario.ts.x_min)
        )

    def test_kink_options_plain_when_shrink_disabled(self):
        tree = copy.deepcopy(DEFAULTS)
        set_by_path(tree, "numeric.shrink_eps_at_edges", False)
        opts = from_effective(tree).kink_options("dual")
        assert isinstance(opts, KinkOptions)

    def test_identify_grid_geometry(self):
        cfg = from_effective(copy.deepcopy(DEFAULTS))
        grid = cfg.identify_grid("eu")
        bar = cfg.scenario.ts.nu_bar
        frac = cfg.run.identify.grid_margin_frac
        assert len(grid) == cfg.run.identify.grid_size
        assert grid[0] == pytest.approx(frac * bar)
        assert grid[-1] == pytest.approx((1.0 - frac) * bar)
        assert np.all(np.diff(grid) > 0)
