"""Config file: ``key = value`` lines under ``[run]``, ``[model]`` and ``[analyze]``.

Command-line flags override file values. Unknown sections or keys are errors.
"""

import configparser
from dataclasses import fields

from flipbench.errors import ConfigError
from flipbench.flipmodel import PowerModel

RUN_KEYS = {
    "order", "calls", "cores", "scheme", "schemes", "seed", "kernel", "block",
    "warmup_seconds", "monitor_interval", "noise", "output", "node", "active_cores",
    "trace_cores", "duration", "use_stress", "provider", "pairs",
}
MODEL_KEYS = {f.name for f in fields(PowerModel)}
ANALYZE_KEYS = {"group_by", "monotonicity_threshold", "coupling_threshold", "cores_per_package"}
SECTIONS = {"run": RUN_KEYS, "model": MODEL_KEYS, "analyze": ANALYZE_KEYS}


def load_config(path):
    """Return ``{section: {key: raw string}}``."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        items = dict(parser.items(section))
        bad = sorted(set(items) - SECTIONS[section])
        if bad:
            raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(bad)}")
        out[section] = items
    return out
