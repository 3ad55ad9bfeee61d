"""Deterministic JSON emission for dataset files.

Floats are written with 9 significant digits so that rebuilt datasets are
byte-identical; key order follows dict insertion order.
"""

from __future__ import annotations

import json


def dumps(obj) -> str:
    return "".join(_emit(obj))


def _emit(obj):
    if obj is None or obj is True or obj is False:
        yield json.dumps(obj)
    elif isinstance(obj, bool):  # pragma: no cover - caught above
        yield json.dumps(obj)
    elif isinstance(obj, int):
        yield str(obj)
    elif isinstance(obj, float):
        yield format(obj, ".9g")
    elif isinstance(obj, str):
        yield json.dumps(obj, ensure_ascii=False)
    elif isinstance(obj, dict):
        yield "{"
        for i, (k, v) in enumerate(obj.items()):
            if i:
                yield ", "
            yield json.dumps(str(k), ensure_ascii=False)
            yield ": "
            yield from _emit(v)
        yield "}"
    elif isinstance(obj, (list, tuple)):
        yield "["
        for i, v in enumerate(obj):
            if i:
                yield ", "
            yield from _emit(v)
        yield "]"
    else:
        raise TypeError(f"not JSON-serializable: {type(obj)!r}")
