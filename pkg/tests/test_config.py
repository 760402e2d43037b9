import dataclasses

import pytest

from claimgate.config import (
    ConfigError,
    GateConfig,
    apply_overrides,
    dumps_toml,
    load_config,
    save_config,
)
from claimgate.model import ClaimType


class TestDefaults:
    def test_loop_defaults(self, cfg):
        assert cfg.max_rounds == 3
        assert cfg.stable_supported_rounds == 2

    def test_grounding_defaults(self, cfg):
        assert cfg.ground_conf == 0.5
        assert cfg.ground_recheck_conf == 0.35
        assert cfg.max_instances == 16
        assert cfg.crop_margin == 0.15
        assert cfg.crop_min_side == 224

    def test_gate_defaults(self, cfg):
        assert cfg.gate_threshold == {
            ClaimType.EXISTENCE: 0.82,
            ClaimType.COUNT: 0.85,
            ClaimType.COLOR: 0.87,
            ClaimType.POSITION: 0.90,
        }

    def test_update_and_ablation_defaults(self, cfg):
        assert cfg.require_citations_for_flip is True
        assert cfg.enable_yes_guard is True
        assert cfg.use_grounding and cfg.use_claim_verification
        assert cfg.use_gating and cfg.use_history
        assert all(cfg.use_textual_evidence[ct] for ct in ClaimType)

    def test_defaults_validate(self, cfg):
        cfg.validate()


class TestValidation:
    @pytest.mark.parametrize(
        "field,value,needle",
        [
            ("max_rounds", 0, "max_rounds"),
            ("stable_supported_rounds", 0, "stable_supported_rounds"),
            ("ground_conf", 1.5, "ground_conf"),
            ("ground_recheck_conf", -0.1, "ground_recheck_conf"),
            ("crop_margin", -0.2, "crop_margin"),
            ("crop_min_side", 0, "crop_min_side"),
            ("max_instances", 0, "max_instances"),
        ],
    )
    def test_field_diagnostics(self, cfg, field, value, needle):
        bad = dataclasses.replace(cfg, **{field: value})
        with pytest.raises(ConfigError) as err:
            bad.validate()
        assert any(needle in p for p in err.value.problems)

    def test_recheck_above_strict_rejected(self, cfg):
        bad = dataclasses.replace(cfg, ground_conf=0.3, ground_recheck_conf=0.4)
        with pytest.raises(ConfigError):
            bad.validate()

    def test_gate_out_of_range(self, cfg):
        bad = cfg.with_gate(ClaimType.COLOR, 1.2)
        with pytest.raises(ConfigError) as err:
            bad.validate()
        assert any("color" in p for p in err.value.problems)

    def test_multiple_problems_reported_together(self, cfg):
        bad = dataclasses.replace(cfg, max_rounds=0, ground_conf=2.0)
        with pytest.raises(ConfigError) as err:
            bad.validate()
        assert len(err.value.problems) >= 2


class TestRoundTrips:
    def test_dict_round_trip(self, cfg):
        tweaked = dataclasses.replace(cfg, max_rounds=5).with_gate(ClaimType.COUNT, 0.9)
        assert GateConfig.from_dict(tweaked.to_dict()) == tweaked

    def test_from_dict_rejects_unknown_section(self):
        with pytest.raises(ConfigError) as err:
            GateConfig.from_dict({"mystery": {}})
        assert any("mystery" in p for p in err.value.problems)

    def test_from_dict_rejects_unknown_key(self, cfg):
        data = cfg.to_dict()
        data["loop"]["bogus"] = 1
        with pytest.raises(ConfigError) as err:
            GateConfig.from_dict(data)
        assert any("bogus" in p for p in err.value.problems)

    def test_toml_round_trip(self, cfg, tmp_path):
        tweaked = dataclasses.replace(cfg, use_history=False).with_gate(
            ClaimType.POSITION, 0.95
        )
        path = tmp_path / "cfg.toml"
        save_config(tweaked, path)
        assert load_config(path) == tweaked

    def test_toml_text_has_sections(self, cfg):
        text = dumps_toml(cfg)
        for section in ("[loop]", "[grounding]", "[gates]", "[update]", "[ablation]"):
            assert section in text

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.toml")

    def test_load_config_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[loop\nmax_rounds = 3")
        with pytest.raises(ConfigError):
            load_config(path)


class TestHash:
    def test_stable_across_instances(self):
        assert GateConfig().config_hash() == GateConfig().config_hash()

    def test_sensitive_to_any_field(self, cfg):
        seen = {cfg.config_hash()}
        for variant in (
            dataclasses.replace(cfg, max_rounds=4),
            dataclasses.replace(cfg, ground_conf=0.6),
            cfg.with_gate(ClaimType.EXISTENCE, 0.83),
            dataclasses.replace(cfg, use_gating=False),
        ):
            h = variant.config_hash()
            assert h not in seen
            seen.add(h)


class TestOverrides:
    def test_gate_and_rounds(self, cfg):
        out = apply_overrides(cfg, max_rounds=5, gates={"position": 0.95})
        assert out.max_rounds == 5
        assert out.gate_threshold[ClaimType.POSITION] == 0.95
        assert out.gate_threshold[ClaimType.EXISTENCE] == 0.82

    def test_unknown_gate_type(self, cfg):
        with pytest.raises(ConfigError):
            apply_overrides(cfg, gates={"texture": 0.8})

    def test_ablate_switches(self, cfg):
        out = apply_overrides(cfg, ablate={"use_grounding": False, "use_history": False})
        assert not out.use_grounding and not out.use_history

    def test_ablate_textual_evidence_masks(self, cfg):
        out = apply_overrides(cfg, ablate={"use_textual_evidence.color": False})
        assert out.use_textual_evidence[ClaimType.COLOR] is False
        assert out.use_textual_evidence[ClaimType.COUNT] is True
        out = apply_overrides(cfg, ablate={"use_textual_evidence": False})
        assert not any(out.use_textual_evidence.values())

    def test_unknown_switch(self, cfg):
        with pytest.raises(ConfigError):
            apply_overrides(cfg, ablate={"use_magic": True})

    def test_invalid_result_rejected(self, cfg):
        with pytest.raises(ConfigError):
            apply_overrides(cfg, max_rounds=0)
