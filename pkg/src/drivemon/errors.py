"""Exception hierarchy; the CLI maps these onto stable exit codes."""

from __future__ import annotations


class DrivemonError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(DrivemonError):
    """Invalid or unparsable experiment configuration (CLI exit code 2)."""


class DataError(DrivemonError):
    """Bad input data: banks, manifests, views, prompt sets (CLI exit code 3)."""


class BankFormatError(DataError):
    """Malformed embedding-bank file."""


class ManifestError(DataError):
    """Malformed manifest file or inconsistent rows."""


class TrainError(DrivemonError):
    """Optimization failure."""


class NonFiniteError(TrainError):
    """Objective returned a non-finite loss or gradient at an iterate."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class LineSearchError(TrainError):
    """Backtracking line search exhausted its budget without descent."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
