"""Versioned prompt templates.

Templates live as plain text under ``quoteremix/templates`` and use literal
``{Placeholder}`` markers, substituted by exact string replacement so that
braces elsewhere in a card are left alone.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources
from typing import Mapping

REMIX = "remix_v1"
FAITHFULNESS = "faithfulness_v1"
FLUENCY = "fluency_v1"
HOOK = "hook_v1"
BASELINE = "baseline_v1"
REFINE = "refine_v1"

ALL = (REMIX, FAITHFULNESS, FLUENCY, HOOK, BASELINE, REFINE)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("quoteremix.templates").joinpath(f"{name}.txt").read_text("utf-8")


def render(name: str, values: Mapping[str, str]) -> str:
    text = load_template(name)
    for key, value in values.items():
        marker = "{" + key + "}"
        if marker not in text:
            raise KeyError(f"template {name} has no placeholder {marker}")
        text = text.replace(marker, value)
    return text


def versions() -> dict[str, str]:
    """Template name to a short content hash, for run manifests."""
    return {name: hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()[:12]
            for name in ALL}
