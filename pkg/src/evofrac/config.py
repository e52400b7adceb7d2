"""Strict ``key = value`` experiment configuration.

Top-level keys precede any ``[section]`` header.  Every problem in the text
is collected (with its line number) before :class:`ConfigError` is raised.

Example::

    kind = solve
    [grid]
    t_start = -2
    t_stop = 6
    n_steps = 4096
    rho = 5
    [law]
    builder = fokker_planck
    alpha = 0.5
    [spatial]
    spec = grad1d:32:0.03125
    [rhs]
    waveform = bump
    start = 0
    stop = 2
    [output]
    solution = sol.csv
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import ConfigError

__all__ = ["ExperimentConfig", "KINDS", "SCHEMA", "parse_config", "format_config", "load_config"]

KINDS = ("solve", "check", "fracapply", "compare-kernels", "ivp")


def _positive_int(v: str) -> int:
    n = int(v)
    if n <= 0:
        raise ValueError(f"expected a positive integer, got {v}")
    return n


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise ValueError(f"expected a positive number, got {v}")
    return x


def _choice(*options: str) -> Callable[[str], str]:
    def conv(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return conv


def _vector(v: str) -> tuple[complex, ...]:
    return tuple(complex(x) for x in v.replace(",", " ").split())


# section -> key -> converter
SCHEMA: dict[str, dict[str, Callable[[str], object]]] = {
    "": {"kind": _choice(*KINDS)},
    "grid": {
        "t_start": float,
        "t_stop": float,
        "n_steps": _positive_int,
        "rho": _positive,
        "damping": _positive,
    },
    "law": {
        "file": str,
        "builder": _choice("fokker_planck", "kelvin_voigt"),
        "alpha": float,
        "kappa": _positive,
        "mu00": float,
        "mu11": _positive,
        "eta": _positive,
        "c": float,
        "d": float,
        "tail_terms": int,
    },
    "spatial": {"spec": str},
    "rhs": {
        "file": str,
        "waveform": _choice("step", "bump", "impulse"),
        "amplitude": float,
        "start": float,
        "stop": float,
        "component": int,
    },
    "ivp": {
        "mode": _choice("delta", "history"),
        "node": int,
        "vector": _vector,
    },
    "check": {"projectors": str, "rho_min": _positive, "rho_max": _positive},
    "frac": {"gamma": float, "alpha": float, "input": str},
    "output": {"solution": str, "oracle": str, "path": str},
}

# keys that must be present for each kind, as (section, key)
REQUIRED: dict[str, list[tuple[str, str]]] = {
    "solve": [("grid", "rho"), ("spatial", "spec"), ("output", "solution")],
    "ivp": [("grid", "rho"), ("spatial", "spec"), ("output", "solution"),
            ("ivp", "mode"), ("ivp", "node"), ("ivp", "vector")],
    "check": [("check", "projectors"), ("check", "rho_min"), ("check", "rho_max")],
    "fracapply": [("frac", "gamma"), ("frac", "input"), ("grid", "rho"), ("output", "path")],
    "compare-kernels": [("frac", "alpha"), ("frac", "input")],
}


@dataclass
class ExperimentConfig:
    kind: str
    sections: dict[str, dict[str, object]] = field(default_factory=dict)
    raw: dict[str, dict[str, str]] = field(default_factory=dict, compare=False, repr=False)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})


def _cross_checks(cfg: ExperimentConfig, problems: list[str]) -> None:
    kind = cfg.kind
    for section, key in REQUIRED.get(kind, []):
        if not cfg.has(section, key):
            problems.append(f"missing [{section}] {key} for kind {kind}")
    if kind in ("solve", "ivp", "check"):
        has_file, has_builder = cfg.has("law", "file"), cfg.has("law", "builder")
        if has_file == has_builder:
            problems.append("[law] needs exactly one of file or builder")
        if has_builder and not cfg.has("law", "alpha"):
            problems.append("[law] builder needs alpha")
        if has_builder and kind == "check":
            problems.append("[law] builder is not supported for kind check; use file")
    if kind in ("solve", "ivp"):
        has_file, has_wave = cfg.has("rhs", "file"), cfg.has("rhs", "waveform")
        if has_file == has_wave:
            problems.append("[rhs] needs exactly one of file or waveform")
        if has_wave:
            for key in ("t_start", "t_stop", "n_steps"):
                if not cfg.has("grid", key):
                    problems.append(f"[grid] waveform right-hand sides need {key}")
            if not cfg.has("rhs", "start"):
                problems.append("[rhs] waveform needs start")
            if cfg.get("rhs", "waveform") == "bump" and not cfg.has("rhs", "stop"):
                problems.append("[rhs] bump needs stop")
        ts, te = cfg.get("grid", "t_start"), cfg.get("grid", "t_stop")
        if ts is not None and te is not None and not te > ts:
            problems.append("[grid] t_stop must exceed t_start")
        n = cfg.get("grid", "n_steps")
        if n is not None and n & (n - 1):
            problems.append(f"[grid] n_steps must be a power of two, got {n}")
    if kind == "check":
        lo, hi = cfg.get("check", "rho_min"), cfg.get("check", "rho_max")
        if lo is not None and hi is not None and not hi >= lo:
            problems.append("[check] rho_max must be >= rho_min")
    for section, key in (("law", "file"), ("rhs", "file"), ("check", "projectors"), ("frac", "input")):
        path = cfg.get(section, key)
        if path is not None and not Path(str(path)).is_file():
            problems.append(f"[{section}] {key}: file not found: {path}")


def parse_config(text: str, check_files: bool = True) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    problems: list[str] = []
    raw: dict[str, dict[str, str]] = {}
    sections: dict[str, dict[str, object]] = {}
    seen: dict[tuple[str, str], int] = {}
    current = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                problems.append(f"line {lineno}: malformed section header {stripped!r}")
                continue
            name = stripped[1:-1].strip()
            if name not in SCHEMA or name == "":
                problems.append(f"line {lineno}: unknown section [{name}]")
            current = name
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, value = (x.strip() for x in stripped.split("=", 1))
        if current not in SCHEMA:
            continue
        where = f"[{current}] " if current else ""
        if key not in SCHEMA[current]:
            problems.append(f"line {lineno}: unknown key {where}{key!r}")
            continue
        if (current, key) in seen:
            problems.append(
                f"line {lineno}: duplicate key {where}{key!r} (first set on line {seen[current, key]})"
            )
            continue
        seen[current, key] = lineno
        if value == "":
            problems.append(f"line {lineno}: empty value for {where}{key!r}")
            continue
        try:
            conv = SCHEMA[current][key](value)
        except ValueError as exc:
            problems.append(f"line {lineno}: {where}{key}: {exc}")
            continue
        raw.setdefault(current, {})[key] = value
        sections.setdefault(current, {})[key] = conv
    kind = sections.get("", {}).get("kind")
    if kind is None:
        if not any(p.startswith("line") and "kind" in p for p in problems):
            problems.insert(0, "missing experiment kind")
        raise ConfigError(problems)
    sections.pop("", None)
    raw.pop("", None)
    cfg = ExperimentConfig(str(kind), sections, raw)
    if check_files:
        _cross_checks(cfg, problems)
    else:
        cross: list[str] = []
        _cross_checks(cfg, cross)
        problems.extend(p for p in cross if "file not found" not in p)
    if problems:
        raise ConfigError(problems)
    return cfg


def _fmt_value(v: object) -> str:
    if isinstance(v, tuple):
        return " ".join(_fmt_complex(z) for z in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _fmt_complex(z: complex) -> str:
    if z.imag == 0:
        return format(z.real, ".17g")
    return f"{format(z.real, '.17g')}{format(z.imag, '+.17g')}j"


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text; ``parse_config(format_config(c))`` reproduces ``c``."""
    lines = [f"kind = {cfg.kind}"]
    for section in SCHEMA:
        if section == "" or section not in cfg.sections:
            continue
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in cfg.sections[section]:
                lines.append(f"{key} = {_fmt_value(cfg.sections[section][key])}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
