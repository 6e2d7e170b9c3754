# ===================================
# utils/config_file.py
# ===================================
"""
Flat run configuration files:

    # comment
    mesh.n = 64
    model.potential = harmonic(0.9, 1.2)
    policy.mode = fixed
    policy.tau = 1.0
"""
import logging
from pathlib import Path
from typing import Dict, Union

from gpe_solver.core.exceptions import ConfigError
from gpe_solver.utils.validators import strip_comment, validate_config_key

logger = logging.getLogger(__name__)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Dict[str, str]]:
    sections: Dict[str, Dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not validate_config_key(key):
            raise ConfigError(f"{source}:{lineno}: invalid key '{key}' (expected section.key)")
        section, name = key.split(".", 1)
        if name in sections.get(section, {}):
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        sections.setdefault(section, {})[name] = value
    return sections


def load_config_file(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist")
    logger.info(f"Reading run configuration from {path}")
    return parse_config_text(path.read_text(), str(path))


def merge_overrides(base: Dict[str, Dict[str, str]], overrides: Dict[str, object]) -> Dict[str, Dict[str, object]]:
    """Apply `section.key -> value` overrides (CLI flags) on top of file values."""
    merged = {section: dict(values) for section, values in base.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        section, name = key.split(".", 1)
        merged.setdefault(section, {})[name] = value
    return merged
