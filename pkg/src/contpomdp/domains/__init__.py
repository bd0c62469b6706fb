"""Benchmark domains, registered by name for the harness and CLI."""

from __future__ import annotations

import inspect

from contpomdp.core import ConfigurationError, GenerativePomdp
from contpomdp.domains.lightdark import LightDark
from contpomdp.domains.subhunt import SubHunt
from contpomdp.domains.tabular import TabularPomdp
from contpomdp.domains.vdptag import VdpTag

SMALL_SUBHUNT_SIZE = 10

REGISTRY = {
    "lightdark": LightDark,
    "subhunt": SubHunt,
    "vdptag": VdpTag,
}

# steps before an unfinished episode is cut off
EPISODE_CAPS = {"lightdark": 60, "subhunt": 50, "vdptag": 100}


def domain_parameters(name: str) -> dict:
    """Constructor keywords of a registered domain and their defaults."""
    cls = _lookup(name)
    return {
        k: p.default
        for k, p in inspect.signature(cls.__init__).parameters.items()
        if k != "self"
    }


def _lookup(name: str):
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"unknown domain {name!r}; registered: {', '.join(REGISTRY)}") from None


def make_domain(name: str, small: bool = False, **overrides) -> GenerativePomdp:
    """Build a registered domain.  ``small`` selects the reduced Sub Hunt grid."""
    cls = _lookup(name)
    known = domain_parameters(name)
    unknown = set(overrides) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown {name} parameter(s): {', '.join(sorted(unknown))}")
    if small and name == "subhunt":
        overrides.setdefault("size", SMALL_SUBHUNT_SIZE)
    return cls(**overrides)


__all__ = [
    "EPISODE_CAPS", "REGISTRY", "LightDark", "SubHunt", "TabularPomdp", "VdpTag",
    "domain_parameters", "make_domain",
]
