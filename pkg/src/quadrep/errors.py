"""Exceptions shared across the package."""


class ResourceLimitError(RuntimeError):
    """An enumeration or search hit its configured cap before deciding.

    Never a verdict: callers must surface this as Undecided, not as a guess.
    """

    def __init__(self, what: str, scanned: int, cap: int):
        super().__init__(f"{what}: scanned {scanned} residue classes, cap {cap}")
        self.what = what
        self.scanned = scanned
        self.cap = cap


class DegenerateTransporterError(RuntimeError):
    """Every sign pattern in the transporter recipe degenerated."""


class InternalCheckError(AssertionError):
    """An identity that must hold by construction failed to verify."""
