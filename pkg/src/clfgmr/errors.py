"""Exception hierarchy shared by the pipeline stages and mapped to CLI exit codes."""


class ClfgmrError(Exception):
    exit_code = 1


class DataError(ClfgmrError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, row, message):
        super().__init__(f"row {row}: {message}")
        self.row = row


class SchemaError(DataError):
    pass


class NumericalError(ClfgmrError, ArithmeticError):
    exit_code = 4


class SingularControlError(NumericalError):
    def __init__(self, x):
        super().__init__(f"|grad V|^2 below guard with a + rho > 0 at x={list(map(float, x))}")
        self.x = x


class RolloutDivergence(NumericalError):
    def __init__(self, step, message="state blew up"):
        super().__init__(f"step {step}: {message}")
        self.step = step
