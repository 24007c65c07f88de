"""Controller registry with lazy entry-point discovery.

Controllers are registered in the ``resetlab.controllers`` entry-point group and
imported only when first requested. The built-in kinds resolve from this package
even when the distribution metadata is unavailable (e.g. running from a source
checkout).

This module exposes:
- create_controller(kind, **options)
  loads and instantiates a controller

- discover_entry_points()
  finds controllers registered via entry points
"""

from __future__ import annotations

import importlib
import logging
from importlib.metadata import entry_points
from typing import Any, Callable, Dict

_BUILTIN = {
    "risc": "resetlab.controllers.risc:RiscController",
    "fbrl": "resetlab.controllers.risc:ForwardBackwardController",
    "reverse_curriculum": (
        "resetlab.controllers.reverse_curriculum:ReverseCurriculumController"
    ),
    "naive": "resetlab.controllers.naive:NaiveController",
    "episodic_oracle": "resetlab.controllers.naive:EpisodicOracleController",
}

GROUP = "resetlab.controllers"

_entry_points_discovered = False
_entry_point_controllers: Dict[str, Callable[..., Any]] = {}


def discover_entry_points() -> Dict[str, Callable[..., Any]]:
    """Discover controllers registered via entry points.

    Returns a dict mapping controller kinds to their classes.
    """
    discovered = {}
    try:
        eps = entry_points(group=GROUP)
    except TypeError:
        # Python 3.9: entry_points() returns SelectableGroups
        all_eps = entry_points()
        eps = all_eps[GROUP] if GROUP in all_eps else []  # type: ignore
    for ep in eps:
        try:
            discovered[ep.name] = ep.load()
        except Exception as e:
            logging.getLogger(__name__).warning(
                "failed to load controller '%s': %s", ep.name, e
            )
    return discovered


def _load_builtin(kind: str) -> Callable[..., Any]:
    module_name, attr = _BUILTIN[kind].split(":")
    return getattr(importlib.import_module(module_name), attr)


def available_controllers() -> list:
    _discover_once()
    return sorted(set(_entry_point_controllers) | set(_BUILTIN))


def _discover_once() -> None:
    global _entry_points_discovered
    if not _entry_points_discovered:
        _entry_point_controllers.update(discover_entry_points())
        _entry_points_discovered = True


def create_controller(kind: str, **options: Any):
    """Create an instance of the named controller."""
    _discover_once()
    if kind in _entry_point_controllers:
        return _entry_point_controllers[kind](**options)
    if kind in _BUILTIN:
        return _load_builtin(kind)(**options)
    available = ", ".join(available_controllers())
    raise ImportError(
        f"Unknown controller kind '{kind}'. Available controllers: {available}"
    )


__all__ = ["available_controllers", "create_controller", "discover_entry_points"]
