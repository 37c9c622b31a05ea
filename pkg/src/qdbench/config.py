"""Fleet configuration files: flat key-value text with per-source sections.

Format example::

    [setup]
    rep_rate_mhz = 81
    eta_setup = 0.40
    eta_det = 0.30

    [source:S7]
    kind = exciton
    tau_ps = 252.0
    delta_fss_uev = 8.58
    theta_deg = 45.0
    brightness_first_lens = 0.136
    p_two_photon = 0.0002

Unknown keys are rejected with their line number; all validation problems
across the whole file are aggregated into one error.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .model import (
    ExcitonParams,
    SetupParams,
    SourceParams,
    TransitionKind,
    TrionParams,
    setup_violations,
    source_violations,
)

_SETUP_KEYS = {
    "rep_rate_mhz": float,
    "pulse_fwhm_ps": float,
    "eta_setup": float,
    "eta_det": float,
    "jitter_fwhm_ps": float,
    "laser_leak_per_pulse": float,
    "hom_delay_ps": float,
    "dark_rate_cps": float,
}

_SOURCE_KEYS = {
    "kind": str,
    "tau_ps": float,
    "delta_fss_uev": float,
    "theta_deg": float,
    "e_mean_uev": float,
    "brightness_first_lens": float,
    "p_two_photon": float,
    "wavelength_nm": float,
    "dephasing": float,
}

_SOURCE_DEFAULTS = {
    "delta_fss_uev": 0.0,
    "theta_deg": 45.0,
    "e_mean_uev": 0.0,
    "brightness_first_lens": 0.0,
    "p_two_photon": 0.0,
    "wavelength_nm": 924.7,
    "dephasing": 0.0,
}


class ConfigError(ValueError):
    """All parse and validation problems of one config, line-tagged."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class FleetConfig:
    sources: tuple[SourceParams, ...]
    setup: SetupParams
    config_hash: str

    @staticmethod
    def from_parts(sources, setup: SetupParams) -> "FleetConfig":
        src = tuple(sources)
        return FleetConfig(src, setup, _hash_canonical(src, setup))


def _hash_canonical(sources, setup: SetupParams) -> str:
    """Hash a canonical text dump so files and in-memory configs agree."""
    return hashlib.sha256(dump_config(sources, setup).encode()).hexdigest()[:16]


def dump_config(sources, setup: SetupParams) -> str:
    lines = ["[setup]"]
    for key in _SETUP_KEYS:
        lines.append(f"{key} = {getattr(setup, key)!r}")
    for s in sources:
        lines.append("")
        lines.append(f"[source:{s.label}]")
        lines.append(f"kind = {s.kind.value}")
        lines.append(f"tau_ps = {s.tau_ps!r}")
        if s.kind is TransitionKind.EXCITON:
            lines.append(f"delta_fss_uev = {s.exciton.delta_fss_uev!r}")
            lines.append(f"theta_deg = {math.degrees(s.exciton.theta_rad)!r}")
            lines.append(f"e_mean_uev = {s.exciton.e_mean_uev!r}")
        lines.append(f"brightness_first_lens = {s.brightness_first_lens!r}")
        lines.append(f"p_two_photon = {s.p_two_photon!r}")
        lines.append(f"wavelength_nm = {s.wavelength_nm!r}")
        lines.append(f"dephasing = {s.dephasing!r}")
    return "\n".join(lines) + "\n"


def _parse_sections(text: str, errors: list[str]):
    sections: list[tuple[str, int, dict[str, tuple[str, int]]]] = []
    current: dict[str, tuple[str, int]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: unterminated section header {raw.strip()!r}")
                current = None
                continue
            name = line[1:-1].strip()
            current = {}
            sections.append((name, lineno, current))
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            errors.append(f"line {lineno}, col {col}: expected 'key = value', got {raw.strip()!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside of any [section]")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in current:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        current[key] = (value, lineno)
    return sections


def _coerce(key, value, lineno, expected, errors):
    if expected is float:
        try:
            return float(value)
        except ValueError:
            errors.append(f"line {lineno}: {key} must be a number, got {value!r}")
            return None
    return value


def _build_setup(entries, errors) -> SetupParams:
    kwargs = {}
    for key, (value, lineno) in entries.items():
        if key not in _SETUP_KEYS:
            errors.append(f"line {lineno}: unknown setup key {key!r}")
            continue
        v = _coerce(key, value, lineno, _SETUP_KEYS[key], errors)
        if v is not None:
            kwargs[key] = v
    setup = SetupParams(**kwargs)
    errors.extend(setup_violations(setup))
    return setup


def _build_source(label, header_line, entries, errors) -> SourceParams | None:
    values = dict(_SOURCE_DEFAULTS)
    seen = {}
    for key, (value, lineno) in entries.items():
        if key not in _SOURCE_KEYS:
            errors.append(f"line {lineno}: unknown source key {key!r}")
            continue
        v = _coerce(key, value, lineno, _SOURCE_KEYS[key], errors)
        if v is not None:
            values[key] = v
            seen[key] = lineno
    missing = [k for k in ("kind", "tau_ps") if k not in seen]
    if missing:
        errors.append(f"line {header_line}: source {label!r} missing required keys {missing}")
        return None
    kind_text = str(values["kind"]).lower()
    if kind_text not in ("exciton", "trion"):
        errors.append(f"line {seen['kind']}: kind must be 'exciton' or 'trion', got {values['kind']!r}")
        return None
    kind = TransitionKind(kind_text)
    if kind is TransitionKind.TRION:
        for key in ("delta_fss_uev", "theta_deg", "e_mean_uev"):
            if key in seen:
                errors.append(f"line {seen[key]}: {key} is not valid for a trion source")
    common = dict(
        brightness_first_lens=values["brightness_first_lens"],
        p_two_photon=values["p_two_photon"],
        wavelength_nm=values["wavelength_nm"],
        dephasing=values["dephasing"],
        label=label,
    )
    if kind is TransitionKind.EXCITON:
        source = SourceParams(
            kind=kind,
            exciton=ExcitonParams(
                tau_ps=values["tau_ps"],
                delta_fss_uev=values["delta_fss_uev"],
                theta_rad=math.radians(values["theta_deg"]),
                e_mean_uev=values["e_mean_uev"],
            ),
            **common,
        )
    else:
        source = SourceParams(kind=kind, trion=TrionParams(tau_ps=values["tau_ps"]), **common)
    errors.extend(source_violations(source))
    return source


def parse_config(text: str) -> FleetConfig:
    errors: list[str] = []
    sections = _parse_sections(text, errors)

    setup_entries: dict = {}
    source_sections = []
    for name, lineno, entries in sections:
        if name == "setup":
            setup_entries.update(entries)
        elif name.startswith("source:"):
            label = name.split(":", 1)[1].strip()
            if not label:
                errors.append(f"line {lineno}: source section needs a label, e.g. [source:S1]")
            source_sections.append((label, lineno, entries))
        else:
            errors.append(f"line {lineno}: unknown section [{name}]")

    setup = _build_setup(setup_entries, errors)
    sources = []
    labels = set()
    for label, lineno, entries in source_sections:
        if label in labels:
            errors.append(f"line {lineno}: duplicate source label {label!r}")
        labels.add(label)
        src = _build_source(label, lineno, entries, errors)
        if src is not None:
            sources.append(src)
    if not source_sections:
        errors.append("config defines no [source:...] sections")
    if errors:
        raise ConfigError(errors)
    return FleetConfig.from_parts(sources, setup)


def load_config(path) -> FleetConfig:
    """Parse and fully validate a fleet configuration file."""
    with open(path) as f:
        return parse_config(f.read())


def write_config(config: FleetConfig, path):
    with open(path, "w") as f:
        f.write(dump_config(config.sources, config.setup))
