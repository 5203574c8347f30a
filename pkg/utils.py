"""
Utility functions shared by the pipeline and the CLI.
"""

import hashlib
import re
from typing import List

from logger import get_logger

logger = get_logger(__name__)

_UNIT_SCALE = {'m': 1.0, 'cm': 0.01, 'mm': 0.001}


def significant(value: float, digits: int = 9) -> float:
    """Round a float to the given number of significant digits."""
    return float(f"{value:.{digits}g}")


def round_floats(obj, digits: int = 9):
    """Recursively round every float in nested lists/dicts/tuples."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return significant(obj, digits)
    if isinstance(obj, dict):
        return {key: round_floats(value, digits) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(value, digits) for value in obj]
    return obj


def parse_lengths(text: str, default_unit: str = 'm') -> List[float]:
    """
    Parse a comma-separated length list with an optional trailing unit.

    "6,8,10cm" -> [0.06, 0.08, 0.10]; units may also follow each value.

    Raises:
        ValueError: On empty input or an unknown unit
    """
    match = re.fullmatch(r'\s*(.*?)\s*(mm|cm|m)?\s*', text)
    body, unit = match.group(1), match.group(2) or default_unit
    values = []
    for part in body.split(','):
        part = part.strip()
        if not part:
            continue
        item = re.fullmatch(r'([-+0-9.eE]+)\s*(mm|cm|m)?', part)
        if not item:
            raise ValueError(f"Cannot parse length: {part!r}")
        scale = _UNIT_SCALE[item.group(2) or unit]
        values.append(significant(float(item.group(1)) * scale, 12))
    if not values:
        raise ValueError(f"No lengths in {text!r}")
    return values


def parse_id_ranges(text: str) -> List[int]:
    """
    Parse "1-6,10" into [1, 2, 3, 4, 5, 6, 10].

    Raises:
        ValueError: On malformed ranges
    """
    ids = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        if '-' in part:
            first, last = (int(x) for x in part.split('-', 1))
            if last < first:
                raise ValueError(f"Empty range: {part}")
            ids.extend(range(first, last + 1))
        else:
            ids.append(int(part))
    return sorted(set(ids))


def generate_content_hash(content: bytes) -> str:
    """
    SHA-256 of file content, logged to make run-to-run determinism checkable.

    Args:
        content: Bytes to hash

    Returns:
        Hex digest string
    """
    return hashlib.sha256(content).hexdigest()


def format_elapsed(seconds: float) -> str:
    """
    Format a processing time: milliseconds below one second, seconds below
    a minute, minutes and seconds above.

    Args:
        seconds: Elapsed wall-clock time

    Returns:
        e.g. "412 ms", "3.2 s" or "4 min 05 s"
    """
    if seconds < 1.0:
        return f"{seconds * 1000:.0f} ms"
    if seconds < 60.0:
        return f"{seconds:.1f} s"
    minutes, rest = divmod(int(round(seconds)), 60)
    return f"{minutes} min {rest:02d} s"
