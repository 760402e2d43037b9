"""Run configuration: thresholds, loop limits, ablation switches.

The config file is TOML with fixed sections mapping 1:1 onto GateConfig.
Parsing uses tomli; emission is a small local writer because the schema is
flat (scalar values plus one string list).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import tomli

from .model import ClaimType


class ConfigError(ValueError):
    """Invalid configuration; carries per-field diagnostics."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(problems))


def _default_gates() -> dict[ClaimType, float]:
    return {
        ClaimType.EXISTENCE: 0.82,
        ClaimType.COUNT: 0.85,
        ClaimType.COLOR: 0.87,
        ClaimType.POSITION: 0.90,
    }


def _default_evidence_mask() -> dict[ClaimType, bool]:
    return {ct: True for ct in ClaimType}


@dataclass(frozen=True)
class GateConfig:
    """All tunable knobs of the verification loop."""

    max_rounds: int = 3
    stable_supported_rounds: int = 2
    ground_conf: float = 0.5
    ground_recheck_conf: float = 0.35
    gate_threshold: dict[ClaimType, float] = field(default_factory=_default_gates)
    require_citations_for_flip: bool = True
    enable_yes_guard: bool = True
    # Ablation switches.
    use_grounding: bool = True
    use_textual_evidence: dict[ClaimType, bool] = field(default_factory=_default_evidence_mask)
    use_claim_verification: bool = True
    use_gating: bool = True
    use_history: bool = True
    # Grounding / artifact constants.
    max_instances: int = 16
    crop_margin: float = 0.15
    crop_min_side: int = 224
    # Extra stop-words for claim target validation.
    extra_target_stopwords: tuple[str, ...] = ()

    def validate(self) -> None:
        problems: list[str] = []
        if self.max_rounds < 1:
            problems.append(f"loop.max_rounds: must be >= 1, got {self.max_rounds}")
        if self.stable_supported_rounds < 1:
            problems.append(
                "loop.stable_supported_rounds: must be >= 1, "
                f"got {self.stable_supported_rounds}"
            )
        if not 0.0 <= self.ground_recheck_conf <= self.ground_conf <= 1.0:
            problems.append(
                "grounding: need 0 <= ground_recheck_conf <= ground_conf <= 1, "
                f"got recheck={self.ground_recheck_conf} conf={self.ground_conf}"
            )
        for ct in ClaimType:
            if ct not in self.gate_threshold:
                problems.append(f"gates.{ct.value}: missing")
            elif not 0.0 <= self.gate_threshold[ct] <= 1.0:
                problems.append(
                    f"gates.{ct.value}: must be in [0,1], got {self.gate_threshold[ct]}"
                )
            if ct not in self.use_textual_evidence:
                problems.append(f"ablation.textual_evidence.{ct.value}: missing")
        if self.max_instances < 1:
            problems.append(f"grounding.max_instances: must be >= 1, got {self.max_instances}")
        if self.crop_margin < 0:
            problems.append(f"grounding.crop_margin: must be >= 0, got {self.crop_margin}")
        if self.crop_min_side < 1:
            problems.append(f"grounding.crop_min_side: must be >= 1, got {self.crop_min_side}")
        if problems:
            raise ConfigError(problems)

    def with_gate(self, ctype: ClaimType, value: float) -> "GateConfig":
        gates = dict(self.gate_threshold)
        gates[ctype] = value
        return replace(self, gate_threshold=gates)

    def to_dict(self) -> dict:
        return {
            "loop": {
                "max_rounds": self.max_rounds,
                "stable_supported_rounds": self.stable_supported_rounds,
            },
            "grounding": {
                "ground_conf": self.ground_conf,
                "ground_recheck_conf": self.ground_recheck_conf,
                "max_instances": self.max_instances,
                "crop_margin": self.crop_margin,
                "crop_min_side": self.crop_min_side,
            },
            "gates": {ct.value: self.gate_threshold[ct] for ct in ClaimType},
            "update": {
                "require_citations_for_flip": self.require_citations_for_flip,
                "enable_yes_guard": self.enable_yes_guard,
            },
            "ablation": {
                "use_grounding": self.use_grounding,
                "use_claim_verification": self.use_claim_verification,
                "use_gating": self.use_gating,
                "use_history": self.use_history,
                "textual_evidence": {
                    ct.value: self.use_textual_evidence[ct] for ct in ClaimType
                },
            },
            "validation": {
                "extra_target_stopwords": list(self.extra_target_stopwords),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateConfig":
        base = cls()
        loop = d.get("loop", {})
        grounding = d.get("grounding", {})
        gates_sec = d.get("gates", {})
        update = d.get("update", {})
        ablation = d.get("ablation", {})
        ev_mask = ablation.get("textual_evidence", {})
        validation = d.get("validation", {})

        known = {
            "loop": {"max_rounds", "stable_supported_rounds"},
            "grounding": {
                "ground_conf",
                "ground_recheck_conf",
                "max_instances",
                "crop_margin",
                "crop_min_side",
            },
            "gates": {ct.value for ct in ClaimType},
            "update": {"require_citations_for_flip", "enable_yes_guard"},
            "ablation": {
                "use_grounding",
                "use_claim_verification",
                "use_gating",
                "use_history",
                "textual_evidence",
            },
            "validation": {"extra_target_stopwords"},
        }
        problems = [
            f"unknown section [{sec}]" for sec in d if sec not in known
        ]
        for sec, keys in known.items():
            for key in d.get(sec, {}):
                if key not in keys:
                    problems.append(f"unknown key {sec}.{key}")
        for key in ev_mask:
            if key not in known["gates"]:
                problems.append(f"unknown key ablation.textual_evidence.{key}")
        if problems:
            raise ConfigError(problems)

        gates = dict(base.gate_threshold)
        for ct in ClaimType:
            if ct.value in gates_sec:
                gates[ct] = float(gates_sec[ct.value])
        mask = dict(base.use_textual_evidence)
        for ct in ClaimType:
            if ct.value in ev_mask:
                mask[ct] = bool(ev_mask[ct.value])

        cfg = cls(
            max_rounds=int(loop.get("max_rounds", base.max_rounds)),
            stable_supported_rounds=int(
                loop.get("stable_supported_rounds", base.stable_supported_rounds)
            ),
            ground_conf=float(grounding.get("ground_conf", base.ground_conf)),
            ground_recheck_conf=float(
                grounding.get("ground_recheck_conf", base.ground_recheck_conf)
            ),
            gate_threshold=gates,
            require_citations_for_flip=bool(
                update.get("require_citations_for_flip", base.require_citations_for_flip)
            ),
            enable_yes_guard=bool(update.get("enable_yes_guard", base.enable_yes_guard)),
            use_grounding=bool(ablation.get("use_grounding", base.use_grounding)),
            use_textual_evidence=mask,
            use_claim_verification=bool(
                ablation.get("use_claim_verification", base.use_claim_verification)
            ),
            use_gating=bool(ablation.get("use_gating", base.use_gating)),
            use_history=bool(ablation.get("use_history", base.use_history)),
            max_instances=int(grounding.get("max_instances", base.max_instances)),
            crop_margin=float(grounding.get("crop_margin", base.crop_margin)),
            crop_min_side=int(grounding.get("crop_min_side", base.crop_min_side)),
            extra_target_stopwords=tuple(
                validation.get("extra_target_stopwords", ())
            ),
        )
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"unsupported TOML value: {value!r}")


def dumps_toml(cfg: GateConfig) -> str:
    """Emit the fixed config schema as TOML text."""
    lines: list[str] = []

    def emit(name: str, table: dict) -> None:
        nested = {k: v for k, v in table.items() if isinstance(v, dict)}
        flat = {k: v for k, v in table.items() if not isinstance(v, dict)}
        lines.append(f"[{name}]")
        for key, value in flat.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
        for key, sub in nested.items():
            emit(f"{name}.{key}", sub)

    for section, table in cfg.to_dict().items():
        emit(section, table)
    return "\n".join(lines)


def save_config(cfg: GateConfig, path: Union[str, Path]) -> None:
    cfg.validate()
    Path(path).write_text(dumps_toml(cfg), encoding="utf-8")


def load_config(path: Union[str, Path]) -> GateConfig:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc}"]) from exc
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError([f"invalid TOML in {path}: {exc}"]) from exc
    return GateConfig.from_dict(data)


def apply_overrides(
    cfg: GateConfig,
    *,
    max_rounds: int | None = None,
    gates: dict[str, float] | None = None,
    ablate: dict[str, bool] | None = None,
    ground_conf: float | None = None,
) -> GateConfig:
    """CLI flag overrides on top of a loaded config."""
    problems: list[str] = []
    if max_rounds is not None:
        cfg = replace(cfg, max_rounds=max_rounds)
    if ground_conf is not None:
        cfg = replace(cfg, ground_conf=ground_conf)
    if gates:
        table = dict(cfg.gate_threshold)
        for name, value in gates.items():
            try:
                table[ClaimType(name)] = value
            except ValueError:
                problems.append(f"--gate: unknown claim type {name!r}")
        cfg = replace(cfg, gate_threshold=table)
    if ablate:
        mask = dict(cfg.use_textual_evidence)
        for name, on in ablate.items():
            if name in ("use_grounding", "use_claim_verification", "use_gating", "use_history"):
                cfg = replace(cfg, **{name: on})
            elif name == "use_textual_evidence":
                mask = {ct: on for ct in ClaimType}
                cfg = replace(cfg, use_textual_evidence=mask)
            elif name.startswith("use_textual_evidence."):
                sub = name.split(".", 1)[1]
                try:
                    mask[ClaimType(sub)] = on
                except ValueError:
                    problems.append(f"--ablate: unknown claim type {sub!r}")
                cfg = replace(cfg, use_textual_evidence=mask)
            else:
                problems.append(f"--ablate: unknown switch {name!r}")
    if problems:
        raise ConfigError(problems)
    cfg.validate()
    return cfg
