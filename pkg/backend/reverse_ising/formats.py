"""
Flat ``key = value`` text files used for run configs, manifests and reports.

One pair per line, ``#`` starts a comment, keys are kept in insertion order
when writing so the same inputs always give the same bytes.
"""
from typing import Dict, Mapping


def format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ','.join(format_value(v) for v in value)
    if value is None:
        return ''
    return str(value)


def dump_key_values(pairs: Mapping[str, object], header: str = '') -> str:
    lines = [f"# {header}"] if header else []
    lines.extend(f"{key} = {format_value(value)}" for key, value in pairs.items())
    return '\n'.join(lines) + '\n'


def parse_key_values(text: str) -> Dict[str, str]:
    pairs = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValueError(f"line {number}: expected 'key = value', got {raw!r}")
        key, value = line.split('=', 1)
        pairs[key.strip()] = value.strip()
    return pairs


def parse_bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off', ''):
        return False
    raise ValueError(f"not a boolean: {value!r}")
