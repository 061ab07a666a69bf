# app/errors.py
"""Exception types raised by the simulator library. The CLI maps them to exit codes."""


class CoverageSimError(ValueError):
    """Base class for all simulator errors."""


class CellIndexError(CoverageSimError, IndexError):
    def __init__(self, cell_index, n_cells: int):
        super().__init__(f"Cell index {cell_index} out of range for a grid of {n_cells} cells.")
        self.cell_index = cell_index
        self.n_cells = n_cells


class InfeasibleClusteringError(CoverageSimError):
    pass


class UndefinedDistanceError(CoverageSimError):
    pass


class PathTooLargeError(CoverageSimError):
    pass


class NonPositiveSpeedError(CoverageSimError):
    pass


class UnknownRobotError(CoverageSimError, KeyError):
    def __init__(self, robot_id):
        super().__init__(f"Unknown robot id: {robot_id}")
        self.robot_id = robot_id

    def __str__(self):
        return self.args[0]


class ScenarioParseError(CoverageSimError):
    def __init__(self, path, message: str, line=None, column=None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"Could not parse scenario file {path}{location}: {message}")
        self.path = path
        self.line = line
        self.column = column


class ScenarioValidationError(CoverageSimError):
    def __init__(self, field: str, message: str):
        super().__init__(f"Invalid scenario field '{field}': {message}")
        self.field = field


class RunDirectoryExistsError(CoverageSimError):
    pass


class UnknownPlotKindError(CoverageSimError):
    pass
