from __future__ import annotations

import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import MofNCompleteColumn, Progress, SpinnerColumn

# Diagnostics and progress go to stderr; stdout is reserved for results.
stderr_console = Console(stderr=True)


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[
            RichHandler(console=stderr_console, show_path=verbose, markup=False)
        ],
        force=True,
    )


def progress_bar(*, transient: bool = True) -> Progress:
    return Progress(
        SpinnerColumn(),
        *Progress.get_default_columns(),
        MofNCompleteColumn(),
        console=stderr_console,
        transient=transient,
    )
