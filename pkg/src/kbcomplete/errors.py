"""Exception types shared across the package."""


class DataError(ValueError):
    """Invalid or inconsistent user-supplied data (files, labels, queries)."""


class ParseError(DataError):
    """An input file was rejected at a specific line."""

    def __init__(self, path, lineno: int, message: str) -> None:
        self.path = str(path)
        self.lineno = lineno
        self.message = message
        super().__init__(f"{self.path}:{lineno}: {message}")
