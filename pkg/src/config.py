"""Loading of the root ``config.json``."""

import json
import os

from src.errors import InputError

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_PATH = os.path.join(ROOT_DIR, "config.json")
ENV_VAR = "CONDMEDIAN_CONFIG"


def load_config(path: str | None = None) -> dict:
    """Read the config file; a missing default file yields an empty dict.

    An explicit ``path`` (or the ``CONDMEDIAN_CONFIG`` variable) must exist.
    """
    explicit = path or os.environ.get(ENV_VAR)
    path = explicit or DEFAULT_PATH
    if not os.path.exists(path):
        if explicit:
            raise InputError(f"Config file not found: {path}")
        return {}
    with open(path) as f:
        return json.load(f)


def section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    return value if isinstance(value, dict) else {}
