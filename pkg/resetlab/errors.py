from __future__ import annotations

from typing import Iterable, List


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` holds one line per field."""

    def __init__(self, problems: Iterable[str], header: str = "Invalid configuration"):
        self.problems: List[str] = list(problems)
        super().__init__(header + ":\n" + "\n".join(f"  - {p}" for p in self.problems))
