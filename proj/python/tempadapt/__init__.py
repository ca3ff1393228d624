# Copyright 2026 The tempadapt Authors
# SPDX-License-Identifier: Apache-2.0
"""Temporal adaptation experiments for masked language models."""

from __future__ import annotations

import json
import os
from typing import Any, Mapping, Sequence

from ._core import (
    ConfigError,
    DataError,
    Error,
    IntegrityError,
    IoError,
    Vocabulary,
    jaccard_similarity,
    macro_f1,
    numerics_fingerprint,
    pseudo_perplexity,
    relative_difference,
    spearman,
    train_vocabulary,
)
from . import _core

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IntegrityError",
    "IoError",
    "Vocabulary",
    "default_spec",
    "generate_corpus",
    "jaccard_similarity",
    "macro_f1",
    "numerics_fingerprint",
    "plan_hash",
    "pseudo_perplexity",
    "relative_difference",
    "run_plan",
    "spearman",
    "train_vocabulary",
    "wilcoxon_signed_rank",
]


def wilcoxon_signed_rank(differences: Sequence[float], alternative: str = "greater") -> dict[str, Any]:
    """One-sided signed-rank test; exact for up to 25 non-zero differences."""
    return json.loads(_core._wilcoxon(list(differences), alternative))


def default_spec(seed: int = 1) -> dict[str, Any]:
    return json.loads(_core._default_spec(seed))


def generate_corpus(spec: Mapping[str, Any], out_dir: str | os.PathLike[str], discriminative: bool = False) -> dict[str, Any]:
    """Writes a synthetic corpus to out_dir and returns its manifest."""
    return json.loads(_core._generate(json.dumps(dict(spec)), os.fspath(out_dir), discriminative))


def _plan_text(plan: Mapping[str, Any] | str | os.PathLike[str]) -> str:
    if isinstance(plan, Mapping):
        return json.dumps(dict(plan))
    with open(plan, encoding="utf-8") as f:
        return f.read()


def plan_hash(plan: Mapping[str, Any] | str | os.PathLike[str]) -> str:
    return _core._plan_hash(_plan_text(plan))


def run_plan(plan: Mapping[str, Any] | str | os.PathLike[str]) -> dict[str, Any]:
    """Runs an experiment plan (dict or JSON file) and returns its run record."""
    return json.loads(_core._run_plan(_plan_text(plan)))
