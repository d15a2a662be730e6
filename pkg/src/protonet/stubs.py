"""Stub host functions so scenarios can bind protocol actions without native code.

Specs: ``pick-first`` (first ``|``-separated item), ``echo``, ``const:<v>``,
``concat:<suffix>``, ``int-add:<n>``.
"""

from __future__ import annotations

from typing import Callable

from .errors import ConfigError


def pick_first(arg: str) -> str:
    return arg.split("|", 1)[0]


def echo(arg: str) -> str:
    return arg


def make_stub(spec: str) -> Callable[[str], str]:
    name, _, param = spec.partition(":")
    if name == "pick-first" and not param:
        return pick_first
    if name == "echo" and not param:
        return echo
    if name == "const" and _:
        return lambda arg: param
    if name == "concat" and _:
        return lambda arg: arg + param
    if name == "int-add":
        try:
            n = int(param)
        except ValueError:
            raise ConfigError(f"int-add needs an integer, got {param!r}") from None

        def int_add(arg: str) -> str:
            try:
                return str(int(arg) + n)
            except ValueError:
                raise ValueError(f"not an integer: {arg!r}") from None

        return int_add
    raise ConfigError(f"unknown stub {spec!r}")
