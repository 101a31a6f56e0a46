"""Versioned prompt assets. The texts are the method: edits change results,
so runs record a content hash of every prompt they used."""

from __future__ import annotations

import hashlib
from importlib import resources

PROMPT_NAMES = (
    "system",
    "step1_split",
    "step2_online",
    "step3_related",
    "step4a_harm",
    "step4b_interpersonal",
    "step4c_activity",
    "step4d_source",
)


def load_prompt(name: str) -> str:
    if name not in PROMPT_NAMES:
        raise KeyError(f"unknown prompt asset: {name!r}")
    ref = resources.files(__name__).joinpath(f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def render(template: str, **values) -> str:
    """Fill {placeholders} by literal replacement (templates contain raw braces)."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def prompt_hashes() -> dict:
    return {
        name: hashlib.sha256(load_prompt(name).encode("utf-8")).hexdigest()
        for name in PROMPT_NAMES
    }
