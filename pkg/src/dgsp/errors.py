"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class DGSPError(Exception):
    exit_code = 1


class ParseError(DGSPError, ValueError):
    """Malformed input file, flag, or configuration."""

    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DimensionError(DGSPError, ValueError):
    exit_code = 3


class NumericalError(DGSPError, ArithmeticError):
    exit_code = 4


class CertificateError(NumericalError):
    """Sampling bound cannot be certified (lambda_j == 1 or singular G_j)."""

    exit_code = 5
