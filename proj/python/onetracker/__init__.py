"""Python surface for the onetracker core library."""

from onetracker._core import (
    generate_clip,
    giou,
    hanning_window,
    run_cli,
    success_auc,
    tokenize,
)

__all__ = [
    "generate_clip",
    "giou",
    "hanning_window",
    "run_cli",
    "success_auc",
    "tokenize",
]
