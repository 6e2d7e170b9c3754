# ===================================
# utils/validators.py
# ===================================
import re
from typing import Optional

import numpy as np

_KEY = re.compile(r"^[a-z_][a-z0-9_]*\.[A-Za-z_][A-Za-z0-9_]*$")


def validate_config_key(key: str) -> bool:
    """Keys are `section.key` with a lower-case section."""
    return bool(_KEY.match(key))


def strip_comment(line: str) -> str:
    # '#' starts a comment
    return line.split("#", 1)[0].strip()


def all_finite(values: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(values)))


def longest_plateau(energies, threshold: float = 1e-6, tail: int = 5) -> Optional[tuple]:
    """
    Longest run of consecutive steps with |E(n+1) - E(n)| < threshold that ends
    at least `tail` steps before the end of the series; None when there is none.
    """
    diffs = np.abs(np.diff(np.asarray(energies, dtype=float)))
    best = None
    start = None
    for i, flat in enumerate(np.append(diffs < threshold, False)):
        if flat and start is None:
            start = i
        elif not flat and start is not None:
            if i <= len(diffs) - tail and (best is None or i - start > best[1] - best[0]):
                best = (start, i)
            start = None
    return best
