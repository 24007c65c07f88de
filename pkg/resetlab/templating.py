from __future__ import annotations

from typing import Any, Dict

import jmespath
from jinja2 import Environment, PackageLoader, StrictUndefined, select_autoescape

_jinja = Environment(
    loader=PackageLoader("resetlab", "templates"),
    undefined=StrictUndefined,
    autoescape=select_autoescape(["svg"]),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


def render_template(name: str, context: Dict[str, Any]) -> str:
    """Render a bundled template (``learning_curve.svg``, ``heatmap.svg``, ...)."""
    return _jinja.get_template(name).render(**(context or {}))


def extract_jmespath(expr: str, data: Any):
    try:
        return jmespath.search(expr, data)
    except Exception:
        return None
