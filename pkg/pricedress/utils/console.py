import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from rich import box

console = Console(highlight=False)
err_console = Console(stderr=True)


def setup_logging(verbosity: int = 0) -> None:
    """Route library logging through a rich handler on stderr"""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=False, markup=False)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)


def frame_table(frame, title: str = "", float_format: str = "{:.4f}") -> Table:
    """Render a small pandas table for the terminal"""
    table = Table(title=title or None, show_header=True, header_style="bold", border_style="dim",
                  box=box.ROUNDED, padding=(0, 1))
    for column in frame.columns:
        table.add_column(str(column), justify="right" if frame[column].dtype.kind in "fiu" else "left")
    for row in frame.itertuples(index=False):
        table.add_row(*(float_format.format(v) if isinstance(v, float) else str(v) for v in row))
    return table
