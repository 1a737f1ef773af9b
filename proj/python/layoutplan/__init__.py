"""LLM layout planning: layouts, prompts, metrics and the example sampler."""

from ._layoutplan import *  # noqa: F401,F403
from ._layoutplan import __version__


def layout(rows):
    """Build a Layout from ``[(label, x, y, w, h), ...]``."""
    return Layout([LayoutItem(label, BoundingBox(x, y, w, h)) for label, x, y, w, h in rows])  # noqa: F405
