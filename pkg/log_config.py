# log_config.py
import logging
from pathlib import Path
from typing import Optional, Union

from pythonjsonlogger.json import JsonFormatter
from rich.logging import RichHandler

_CONSOLE_FORMAT = "%(message)s"
_JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(level: Union[int, str] = "INFO", json_path: Optional[Path] = None) -> None:
    """
    Installs the console handler (rich) on the root logger and, when json_path
    is given, a JSON-lines file handler next to the run outputs.
    Calling it again replaces the previously installed handlers.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_sem_handler", False):
            root.removeHandler(handler)
            handler.close()

    console = RichHandler(show_path=False, rich_tracebacks=False)
    console.setFormatter(logging.Formatter(_CONSOLE_FORMAT))
    console._sem_handler = True
    root.addHandler(console)

    if json_path is not None:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(json_path, mode="w", encoding="utf-8")
        file_handler.setFormatter(JsonFormatter(_JSON_FORMAT))
        file_handler._sem_handler = True
        root.addHandler(file_handler)

    root.setLevel(level)
