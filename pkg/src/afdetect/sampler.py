"""Balanced branch datasets carved from an imbalanced training set.

Negatives (Normal, the majority) are shuffled once and dealt round-robin into
``N_b`` disjoint subsets; every branch dataset is one subset plus all
positives (AF).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoPositives, TooFewNegatives

MAX_BRANCHES = 16


@dataclass(frozen=True)
class MbTrainingSet:
    positives: tuple
    negative_subsets: tuple

    @property
    def n_branches(self) -> int:
        return len(self.negative_subsets)

    @property
    def negatives(self) -> tuple:
        return tuple(i for subset in self.negative_subsets for i in subset)

    def branch_dataset(self, i: int) -> tuple:
        return tuple(self.negative_subsets[i]) + tuple(self.positives)

    def membership(self, ids) -> np.ndarray:
        """Boolean ``(len(ids), N_b)`` matrix of ``id in D_i``."""
        branch_of = {sid: b for b, subset in enumerate(self.negative_subsets) for sid in subset}
        pos = set(self.positives)
        out = np.zeros((len(ids), self.n_branches), dtype=bool)
        for row, sid in enumerate(ids):
            if sid in pos:
                out[row] = True
            elif sid in branch_of:
                out[row, branch_of[sid]] = True
        return out


def default_branch_count(n_neg: int, n_pos: int) -> int:
    """Nearest integer to the class ratio, at least 1 and at most 16."""
    if n_pos < 1:
        raise NoPositives("need at least one positive sample")
    return min(MAX_BRANCHES, max(1, int(math.floor(n_neg / n_pos + 0.5))))


def partition(ids, labels, n_branches: int, seed: int = 0) -> MbTrainingSet:
    ids = list(ids)
    labels = np.asarray(labels).astype(int)
    if len(ids) != labels.size:
        raise ValueError("ids and labels differ in length")
    positives = tuple(i for i, y in zip(ids, labels) if y == 1)
    negatives = [i for i, y in zip(ids, labels) if y == 0]
    if not positives:
        raise NoPositives("no positive (AF) samples to share across branches")
    if n_branches < 1 or len(negatives) < n_branches:
        raise TooFewNegatives(f"{len(negatives)} negatives cannot fill {n_branches} branches")
    rng = np.random.default_rng(seed)
    shuffled = [negatives[k] for k in rng.permutation(len(negatives))]
    subsets = tuple(tuple(shuffled[b::n_branches]) for b in range(n_branches))
    mbset = MbTrainingSet(positives, subsets)

    ratio = len(negatives) / len(positives)
    if n_branches == default_branch_count(len(negatives), len(positives)) and 0.5 <= ratio <= MAX_BRANCHES:
        for subset in subsets:
            if not 0.5 <= len(subset) / len(positives) <= 2.0:
                raise AssertionError(f"branch balance violated: {len(subset)} negatives vs {len(positives)} positives")
    return mbset


def branch_batches(mbset: MbTrainingSet, batch_size: int, epoch_seed: int = 0):
    """Yield ``(batch_ids, branch_index)``, one branch dataset at a time.

    A trailing single-sample batch is folded into the batch before it, since
    batch statistics are undefined for one sample.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(epoch_seed)
    for b in range(mbset.n_branches):
        data = mbset.branch_dataset(b)
        order = rng.permutation(len(data))
        starts = list(range(0, len(data), batch_size))
        if batch_size > 1 and len(starts) > 1 and len(data) - starts[-1] == 1:
            starts.pop()
        bounds = starts[1:] + [len(data)]
        for start, stop in zip(starts, bounds):
            yield [data[k] for k in order[start:stop]], b


def dump_partition(path, mbset: MbTrainingSet) -> None:
    """One ``sample_id,label,branch`` row per branch membership."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", "branch"])
        for b, subset in enumerate(mbset.negative_subsets):
            for sid in subset:
                writer.writerow([sid, 0, b])
            for sid in mbset.positives:
                writer.writerow([sid, 1, b])


def load_partition(path) -> MbTrainingSet:
    positives, subsets = [], {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            b = int(row["branch"])
            subsets.setdefault(b, [])
            if int(row["label"]) == 1:
                if b == 0:
                    positives.append(row["sample_id"])
            else:
                subsets[b].append(row["sample_id"])
    return MbTrainingSet(tuple(positives), tuple(tuple(subsets[b]) for b in sorted(subsets)))
