"""Deterministic train/val/test assignment."""

from __future__ import annotations

import random
from pathlib import Path
from typing import Dict, Sequence, Tuple

from pelvimark.core.records import Split
from pelvimark.errors import ConfigurationError


def split_dataset(
    ids: Sequence[str], counts: Tuple[int, int, int], seed: int
) -> Dict[str, Split]:
    """Assign each id to train/val/test by seeded shuffle of document order."""
    n_train, n_val, n_test = counts
    if min(counts) < 0:
        raise ConfigurationError(f"split counts must be non-negative, got {counts}")
    if n_train + n_val + n_test != len(ids):
        raise ConfigurationError(
            f"split counts {counts} sum to {n_train + n_val + n_test}, but there are {len(ids)} ids"
        )
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate image ids in split input")

    order = list(ids)
    random.Random(seed).shuffle(order)
    assignment: Dict[str, Split] = {}
    for i, image_id in enumerate(order):
        if i < n_train:
            assignment[image_id] = Split.TRAIN
        elif i < n_train + n_val:
            assignment[image_id] = Split.VAL
        else:
            assignment[image_id] = Split.TEST
    return assignment


def save_split_manifest(
    assignment: Dict[str, Split], path, seed: int, counts: Tuple[int, int, int]
) -> None:
    lines = [
        f"# seed: {seed}",
        f"# counts: train={counts[0]} val={counts[1]} test={counts[2]}",
    ]
    for image_id in sorted(assignment):
        lines.append(f"{image_id}\t{assignment[image_id].value}")
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def load_split_manifest(path) -> Tuple[Dict[str, Split], int, Tuple[int, int, int]]:
    seed = 0
    counts = (0, 0, 0)
    assignment: Dict[str, Split] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("# seed:"):
            seed = int(line.split(":", 1)[1])
        elif line.startswith("# counts:"):
            parts = dict(kv.split("=") for kv in line.split(":", 1)[1].split())
            counts = (int(parts["train"]), int(parts["val"]), int(parts["test"]))
        elif line.startswith("#"):
            continue
        else:
            fields = line.split("\t")
            if len(fields) != 2:
                raise ConfigurationError(f"{path}:{lineno}: malformed manifest line {line!r}")
            try:
                assignment[fields[0]] = Split(fields[1])
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: unknown split {fields[1]!r}") from None
    return assignment, seed, counts
