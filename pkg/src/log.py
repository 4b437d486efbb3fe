"""Stderr logging with an optional timestamped log file."""

import sys
import time

PREFIX = "[cond-median]"

_settings = {"file": None, "quiet": False}


def configure(log_file: str | None = None, quiet: bool = False):
    """Set the log file (appended to) and whether stderr output is silenced."""
    _settings["file"] = log_file or None
    _settings["quiet"] = bool(quiet)


def log(msg: str):
    if not _settings["quiet"]:
        print(f"{PREFIX} {msg}", file=sys.stderr, flush=True)
    path = _settings["file"]
    if path:
        line = f"[{time.strftime('%H:%M:%S')}] {msg}"
        try:
            with open(path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
        except OSError:
            pass


class WarningCounter:
    """Counts a repeated warning, logging only the first few occurrences."""

    def __init__(self, what: str, limit: int = 5):
        self.what = what
        self.limit = limit
        self.count = 0

    def warn(self, detail: str):
        self.count += 1
        if self.count <= self.limit:
            log(f"Skipped {self.what}: {detail}")
        elif self.count == self.limit + 1:
            log(f"Further skipped {self.what} are counted but not logged")

    def summary(self):
        if self.count:
            log(f"Skipped {self.count} {self.what} in total")
