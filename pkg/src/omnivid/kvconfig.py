"""Flat ``key = value`` config files (no sections, ``#`` comments)."""

from __future__ import annotations

import configparser
from pathlib import Path


def parse(text: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep case: task names are case-sensitive
    cp.read_string("[_]\n" + text)
    return dict(cp["_"])


def load(path) -> dict[str, str]:
    return parse(Path(path).read_text(encoding="utf-8"))


def dump(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
