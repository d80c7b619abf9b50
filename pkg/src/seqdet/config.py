"""Key-value run configuration with line-numbered validation errors.

The file is INI-style: one ``key = value`` per line, grouped into sections::

    [system]
    preset = headline
    gamma_c = 0.1

    [probe]
    n_traj = 2000

    [run]
    n_cut = 30
    output_dir = out

Sections ``wigner``, ``trajectories``, ``optimize`` and ``sweep`` hold
subcommand settings.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .params import (
    ProbeParams,
    SystemParams,
    dephasing_rate_from_tphi,
    headline_params,
    readout_params,
    kappa0_comparison_params,
    resonator_rate_from_t1,
)

__all__ = ["RunConfig", "load_config", "parse_config", "PRESETS"]

PRESETS = {
    "headline": headline_params,
    "kappa0_comparison": kappa0_comparison_params,
    "readout": readout_params,
    "default": SystemParams,
}

# names accepted by seqdet.optimize.configure
_CONFIG_NAMES = ("full", "full_kappa0", "full_ideal", "dispersive_ideal")

_SYSTEM_KEYS = {f.name for f in fields(SystemParams)} - {"probe"}
_PROBE_KEYS = {f.name for f in fields(ProbeParams)}

_SECTIONS = {
    "system": _SYSTEM_KEYS | {"preset", "t_phi_si", "t1_resonator_si"},
    "probe": _PROBE_KEYS,
    "run": {"n_cut", "hamiltonian", "output_dir", "method", "step"},
    "wigner": {"x_min", "x_max", "p_min", "p_max", "resolution", "displaced"},
    "trajectories": {"scheme", "chunk", "bins", "backend"},
    "optimize": {"config", "delta1_min", "delta1_max", "delta2_min", "delta2_max", "restarts", "max_evals", "n_cut_search"},
    "sweep": {"gamma_c", "configurations"},
}

_DEFAULTS = {
    "run": {"n_cut": 30, "hamiltonian": "full", "output_dir": ".", "method": "sector", "step": 0.25},
    "wigner": {"x_min": -4.5, "x_max": 4.5, "p_min": -4.5, "p_max": 4.5, "resolution": 151, "displaced": False},
    "trajectories": {"scheme": "kraus", "chunk": 64, "bins": 60, "backend": None},
    "optimize": {
        "config": "full", "delta1_min": -5.0, "delta1_max": 0.0, "delta2_min": -150.0, "delta2_max": -5.0,
        "restarts": 4, "max_evals": 200, "n_cut_search": 15,
    },
    "sweep": {"gamma_c": [0.2, 0.1, 0.05, 0.02], "configurations": ["full", "full_kappa0", "full_ideal", "dispersive_ideal"]},
}

_INT_KEYS = {"n_cut", "resolution", "chunk", "bins", "restarts", "max_evals", "n_cut_search", "n_traj", "base_seed"}
_BOOL_KEYS = {"photon_present", "override_gamma22", "displaced"}
_STR_KEYS = {"preset", "hamiltonian", "output_dir", "method", "scheme", "backend", "config"}
_LIST_KEYS = {"gamma_c@sweep": float, "configurations@sweep": str}


@dataclass
class RunConfig:
    """Validated run settings."""

    system: SystemParams
    settings: dict
    source: str = ""
    lines: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.settings[name]

    @property
    def n_cut(self) -> int:
        return self.settings["run"]["n_cut"]

    def resolved_text(self) -> str:
        """Canonical dump of every resolved value, suitable for a file header."""
        out = ["[system]"]
        for f in fields(SystemParams):
            if f.name != "probe":
                out.append(f"{f.name} = {_fmt(getattr(self.system, f.name))}")
        out.append("[probe]")
        for f in fields(ProbeParams):
            out.append(f"{f.name} = {_fmt(getattr(self.system.probe, f.name))}")
        for sec in ("run", "wigner", "trajectories", "optimize", "sweep"):
            out.append(f"[{sec}]")
            for k, v in self.settings[sec].items():
                out.append(f"{k} = {_fmt(v)}")
        return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower()
    # round-trip precision so the echoed config reproduces the run exactly
    if isinstance(v, complex):
        return repr(v.real) if v.imag == 0 else f"{v.real!r}{v.imag:+}j"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _line_numbers(text: str) -> dict:
    """Map (section, key) to the 1-based line that defines it."""
    where = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = i
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            where[(section, m.group(1).strip())] = i
    return where


def _convert(section: str, key: str, value: str):
    v = value.strip()
    if f"{key}@{section}" in _LIST_KEYS:
        typ = _LIST_KEYS[f"{key}@{section}"]
        items = [x.strip() for x in v.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return [typ(x) for x in items]
    if key in _BOOL_KEYS:
        low = v.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {v!r}")
    if key in _STR_KEYS:
        return None if v.lower() in ("", "none", "auto") and key == "backend" else v
    if key in _INT_KEYS:
        f = float(v)
        if f != int(f):
            raise ValueError(f"expected an integer, got {v!r}")
        return int(f)
    if key == "alpha":
        return complex(v.replace(" ", "").replace("i", "j"))
    return float(v)


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    """Parse and validate configuration text."""
    where = _line_numbers(text)

    def fail(msg, section=None, key=None):
        ln = where.get((section, key)) or where.get((section, None))
        loc = f"{name}:{ln}: " if ln else f"{name}: "
        raise ConfigError(loc + msg)

    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        loc = f"{name}:{ln}: " if ln else f"{name}: "
        raise ConfigError(loc + str(exc).splitlines()[0]) from None

    values = {s: {} for s in _SECTIONS}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            fail(f"unknown section [{sec}]", sec)
        for key, raw in cp.items(sec):
            if key not in _SECTIONS[sec]:
                fail(f"unknown key {key!r} in [{sec}]", sec, key)
            try:
                values[sec][key] = _convert(sec, key, raw)
            except ValueError as exc:
                fail(f"bad value for {key!r}: {exc}", sec, key)

    sysv = dict(values["system"])
    preset = sysv.pop("preset", "headline")
    if preset not in PRESETS:
        fail(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "system", "preset")
    if "t_phi_si" in sysv:
        t = sysv.pop("t_phi_si")
        if "gamma11" in sysv:
            fail("give either gamma11 or t_phi_si, not both", "system", "t_phi_si")
        sysv["gamma11"] = dephasing_rate_from_tphi(t)
    if "t1_resonator_si" in sysv:
        t = sysv.pop("t1_resonator_si")
        if "kappa" in sysv:
            fail("give either kappa or t1_resonator_si, not both", "system", "t1_resonator_si")
        sysv["kappa"] = resonator_rate_from_t1(t)
    base = PRESETS[preset]()
    try:
        probe = ProbeParams(**{**{f.name: getattr(base.probe, f.name) for f in fields(ProbeParams)}, **values["probe"]})
    except ValueError as exc:
        key = next(iter(values["probe"]), None)
        fail(f"invalid probe settings: {exc}", "probe", key)
    try:
        system = base.replace(probe=probe, **sysv)
    except (ValueError, TypeError) as exc:
        key = next(iter(values["system"]), None)
        fail(f"invalid system settings: {exc}", "system", key)

    settings = {}
    for sec, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        merged.update(values[sec])
        settings[sec] = merged
    run = settings["run"]
    if run["n_cut"] < 2:
        fail("n_cut must be at least 2", "run", "n_cut")
    if run["hamiltonian"] not in ("full", "dispersive"):
        fail(f"hamiltonian must be 'full' or 'dispersive', got {run['hamiltonian']!r}", "run", "hamiltonian")
    if run["method"] not in ("sector", "dense"):
        fail(f"method must be 'sector' or 'dense', got {run['method']!r}", "run", "method")
    if not run["step"] > 0:
        fail("step must be positive", "run", "step")
    tr = settings["trajectories"]
    if tr["scheme"] not in ("kraus", "euler"):
        fail(f"scheme must be 'kraus' or 'euler', got {tr['scheme']!r}", "trajectories", "scheme")
    if tr["chunk"] < 1:
        fail("chunk must be positive", "trajectories", "chunk")
    if tr["backend"] not in (None, "python", "compiled"):
        fail(f"backend must be 'python', 'compiled' or 'auto', got {tr['backend']!r}", "trajectories", "backend")
    if settings["optimize"]["config"] not in _CONFIG_NAMES:
        fail(f"unknown optimizer configuration {settings['optimize']['config']!r}", "optimize", "config")
    bad = [c for c in settings["sweep"]["configurations"] if c not in _CONFIG_NAMES]
    if bad:
        fail(f"unknown sweep configuration {bad[0]!r}", "sweep", "configurations")
    if settings["wigner"]["resolution"] < 2:
        fail("resolution must be at least 2", "wigner", "resolution")
    if any(g <= 0 for g in settings["sweep"]["gamma_c"]):
        fail("gamma_c values must be positive", "sweep", "gamma_c")
    return RunConfig(system, settings, text, where)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
