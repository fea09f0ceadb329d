"""Bundled prompt templates and few-shot data, with ``{{name}}`` substitution."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .errors import InvalidConfig

LANGUAGES = ("en", "es")

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def check_language(language: str) -> None:
    if language not in LANGUAGES:
        raise InvalidConfig(f"unsupported language {language!r}; choose from {LANGUAGES}")


def read_data(name: str) -> str:
    return resources.files("derivare").joinpath("data", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_template(name: str, language: str = "en") -> str:
    check_language(language)
    return read_data(f"{language}/{name}.txt")


def fill_template(template: str, **values: str) -> str:
    """Substitute ``{{name}}`` placeholders in a single pass.

    Substituted values are not rescanned, so chunk text that happens to
    contain ``{{...}}`` is left alone.
    """

    def sub(m: re.Match) -> str:
        try:
            return values[m.group(1)]
        except KeyError:
            raise KeyError(f"template placeholder {{{{{m.group(1)}}}}} has no value") from None

    return _PLACEHOLDER.sub(sub, template)
