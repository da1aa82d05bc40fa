"""
Utility functions for file input and table output.
"""
import logging
import math
import os
from typing import Any, Dict, Iterable, List, Sequence

from .exceptions import IWPairsError

logger = logging.getLogger(__name__)

DEFAULT_PRECISION = 17


def read_file_content(file_path: str, encoding: str = "utf-8") -> str:
    """
    Read content from a file with proper error handling.

    Args:
        file_path: Path to the file
        encoding: Character encoding (default utf-8)

    Returns:
        Content of the file as string

    Raises:
        IWPairsError: If the file cannot be read
    """
    try:
        with open(file_path, "r", encoding=encoding) as f:
            return f.read()
    except OSError as e:
        logger.error(f"Error reading file {file_path}: {str(e)}")
        raise IWPairsError(f"Failed to read file {file_path}: {str(e)}", rule="config files must be readable")


def version_header() -> str:
    from . import __version__

    return f"# iwpairs {__version__}"


def format_number(value: Any, precision: int = DEFAULT_PRECISION) -> str:
    """Shortest round-trip-safe text at ``precision`` significant digits; inf and nan spelled out."""
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{precision}g}"


def format_table(columns: Sequence[str], rows: Iterable[Dict[str, Any]], precision: int = DEFAULT_PRECISION) -> str:
    lines: List[str] = [version_header(), ",".join(columns)]
    for row in rows:
        cells = []
        for name in columns:
            value = row.get(name, "")
            if isinstance(value, str):
                cells.append(value)
            else:
                cells.append(format_number(value, precision))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_table(
    path: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]], precision: int = DEFAULT_PRECISION
) -> str:
    """
    Write rows as CSV preceded by a version header line.

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    text = format_table(columns, rows, precision)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        logger.error(f"Error writing table {path}: {str(e)}")
        raise IWPairsError(f"Failed to write {path}: {str(e)}", rule="output directory must be writable")
    logger.debug(f"Wrote {path}")
    return path
