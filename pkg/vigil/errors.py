"""Exception hierarchy. Each class carries the category the CLI reports."""
from __future__ import annotations


class VigilError(Exception):
    category = "error"


class ShapeError(VigilError, ValueError):
    category = "shape"


class ConfigError(VigilError, ValueError):
    category = "config"


class NonDifferentiableError(VigilError):
    category = "autodiff"

    def __init__(self, op: str):
        super().__init__(f"op {op!r} is not differentiable; wrap its input in stop_gradient()")
        self.op = op


class FormatError(VigilError):
    category = "format"

    def __init__(self, message: str, path: str = "", offset: int | None = None):
        where = path or "<stream>"
        if offset is not None:
            where += f" @ byte {offset}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.offset = offset


class WeightImportError(VigilError):
    category = "weights"

    def __init__(self, mismatches: list[str]):
        listing = "; ".join(mismatches)
        super().__init__(f"{len(mismatches)} weight mismatch(es): {listing}")
        self.mismatches = mismatches


class DataError(VigilError):
    category = "data"


class GradcheckFailure(VigilError):
    category = "gradcheck"
