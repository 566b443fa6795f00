"""Helper functions for the fmpinn package."""

import hashlib
import json
import re
from collections.abc import MutableMapping

from .constants import NAME_DELIMITER
from .exceptions import ConversionError


def flatten(value, key=None, delim=NAME_DELIMITER):
    """Walk nested dicts and yield flattened key and value pairs.

    Flattened keys are generated by concatenating the keys of the nested
    dictionaries with the delimiter: the key 'training.beta' corresponds to the
    value of the key 'beta' in the dictionary 'training'. Lists are leaf values
    (scale vectors, hidden widths) and are yielded as they are.

    Args:
        value (any): Nested configuration to flatten.
        key (str, optional): Flattened key of the current value. Defaults to None.
        delim (str, optional): Delimiter to use to flatten keys. Defaults to '.'.

    Returns:
        generator: Generator of tuples (key, value).
    """
    if isinstance(value, MutableMapping):
        for subkey, item in value.items():
            yield from flatten(item, f"{key}{delim}{subkey}" if key else subkey, delim)
    elif value is not None:
        yield (key, value)


def unflatten(items, delim=NAME_DELIMITER):
    """Unflatten (key, value) tuples into a nested dictionary.

    Caveats:
    - Keys may not contain the delimiter.
    - A later item with the same key replaces an earlier one.

    Args:
        items (iterable): Tuples (key, value) with flattened keys.
        delim (str, optional): Delimiter used in the flattened keys. Defaults to '.'.

    Returns:
        dict: Nested dictionary.
    """
    root = {}
    for key, value in items:
        parts = [part for part in re.split(re.escape(delim), key) if part]
        node = root
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, MutableMapping):
                child = node[part] = {}
            node = child
        node[parts[-1]] = value
    return root


def merge(base: MutableMapping, overrides: MutableMapping) -> dict:
    """Recursively merge overrides into a copy of base."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, MutableMapping) and isinstance(merged.get(key), MutableMapping):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(text: str):
    """Split a 'section.key=value' override into its flattened key and value.

    Raises:
        ConversionError: If the text has no '=' or no section.
    """
    if "=" not in text:
        raise ConversionError(f"Override '{text}' must look like section.key=value", value=text)
    key, value = (part.strip() for part in text.split("=", 1))
    if NAME_DELIMITER not in key:
        raise ConversionError(f"Override key '{key}' must name a section", field=key, value=value)
    return key, value


def canonical_json(data) -> str:
    """JSON text with sorted keys and no insignificant whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def canonical_hash(data) -> str:
    """SHA-256 hex digest of the canonical JSON form of data."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def bold(string: str) -> str:
    """Return the string in bold. Useful for printing."""
    return f"\033[1m{string}\033[0m"

