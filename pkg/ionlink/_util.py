"""Utility functions used throughout the project."""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

import numpy as np
from pydantic import BaseModel

T = TypeVar("T")
R = TypeVar("R")

# Substream tags of the seeding scheme: (tag, *indices) is the spawn key.
STREAM_TAGS = {
    "dataset": 1,
    "bootstrap": 2,
    "monte-carlo": 3,
}


def rng_for(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent random stream for one unit of work.

    :param seed: Master seed.
    :param tag: Kind of work, a key of `STREAM_TAGS`.
    :param indices: Position of the unit, e.g. (setting, pass).
    :return: A PCG64 generator.
    """
    key = (STREAM_TAGS[tag], *indices)
    sequence = np.random.SeedSequence(seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(sequence))


def thread_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Map in input order, on a thread pool when `threads` > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return json.loads(value.json())
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(value: Any, indent: int = 2, _level: int = 0) -> str:
    """Serialize to JSON with every float written to 17 significant digits."""
    value = _plain(value)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return "null"
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        body = ",\n".join(
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}: "
            f"{dumps(v, indent, _level + 1)}"
            for k, v in value.items()
        )
        return "{\n" + body + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(not isinstance(_plain(v), (dict, list, tuple)) for v in value):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in value) + "]"
        body = ",\n".join(f"{pad}{dumps(v, indent, _level + 1)}" for v in value)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"Cannot serialize {type(value).__name__}.")


def write_json(path: Path, value: Any) -> None:
    """Write UTF-8 JSON with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(value) + "\n")


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    """Write a CSV table with floats to 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in row)
        )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
