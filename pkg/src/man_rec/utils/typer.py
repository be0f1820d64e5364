#
# Helpers for the `typer` package.
#
import sys
import traceback
from typing import Any

import typer
from rich.markup import escape

from man_rec.errors import ManRecError
from man_rec.utils.logging import stderr_console


def run_typer_app_as_main(app: typer.Typer, *args: Any, **kwargs: Any) -> Any | None:
    """Run a typer app as the main function.

    Library errors are reported as a single line on stderr, anything else with its
    traceback. Either way the process exits with status 1.
    """
    try:
        return app(*args, **kwargs)
    except typer.Exit as e:
        sys.exit(e.exit_code)
    except ManRecError as e:
        stderr_console.print(
            f"[bold red]Error:[/bold red] {escape(str(e))}", highlight=False
        )
        sys.exit(1)
    except Exception:
        traceback.print_exc()
        sys.exit(1)
