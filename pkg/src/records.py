"""
Line-delimited key=value log records.

Progress of training, distillation, sampling and benchmarks is logged as
``event=<name> key=value ...`` so the output can be scraped by tools.
"""

import json
import math
from typing import Any

import numpy as np


def _render(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return f"{value:.6g}"
    if value is None:
        return "null"
    text = str(value)
    if not text or any(ch.isspace() for ch in text) or "=" in text or '"' in text:
        return json.dumps(text)
    return text


def format_record(event: str, **fields: Any) -> str:
    """
    Render a structured record as a single key=value line.

    Args:
        event: Event name (e.g. ``train_step``)
        **fields: Record fields, rendered in insertion order

    Returns:
        A single line such as ``event=train_step step=10 loss=0.0123``
    """
    parts = [f"event={_render(event)}"]
    parts.extend(f"{key}={_render(value)}" for key, value in fields.items())
    return " ".join(parts)


def parse_record(line: str) -> dict[str, str]:
    """Parse a line produced by :func:`format_record` back into raw strings."""
    record: dict[str, str] = {}
    i = 0
    n = len(line)
    while i < n:
        while i < n and line[i] == " ":
            i += 1
        if i >= n:
            break
        eq = line.index("=", i)
        key = line[i:eq]
        i = eq + 1
        if i < n and line[i] == '"':
            decoder = json.JSONDecoder()
            value, end = decoder.raw_decode(line, i)
            i = end
        else:
            end = line.find(" ", i)
            end = n if end == -1 else end
            value = line[i:end]
            i = end
        record[key] = value
    return record
