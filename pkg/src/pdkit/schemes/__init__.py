"""Scheme registry keyed by string id."""
from __future__ import annotations

from ..errors import ConfigError
from .hidden_volume import HiddenVolume
from .hive import Hive
from .leaky import LeakyHiddenVolume
from .pd_dm import PdDm
from .pearl import Pearl


def _hive_b(**opts):
    return Hive(variant="hive_b", **opts)


REGISTRY = {
    "hidden_volume": HiddenVolume,
    "hive": Hive,
    "hive_b": _hive_b,
    "pd_dm": PdDm,
    "pearl": Pearl,
    # broken on purpose: proves the game harness can see a real leak
    "leaky": LeakyHiddenVolume,
}


def make_scheme(scheme_id: str, **opts):
    try:
        factory = REGISTRY[scheme_id]
    except KeyError:
        raise ConfigError(f"unknown scheme {scheme_id!r}; choose from {sorted(REGISTRY)}") from None
    try:
        return factory(**opts)
    except TypeError as exc:
        raise ConfigError(f"bad options for {scheme_id}: {exc}") from None


__all__ = ["REGISTRY", "make_scheme", "HiddenVolume", "Hive", "PdDm", "Pearl", "LeakyHiddenVolume"]
