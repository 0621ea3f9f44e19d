"""Exception types. Each carries a short machine-readable ``code``."""


class WaveguideError(Exception):
    code = "runtime_error"


class GridError(WaveguideError, ValueError):
    code = "grid_error"


class CFLError(GridError):
    code = "cfl_violation"


class GridMismatchError(WaveguideError, ValueError):
    code = "grid_mismatch"


class RegionError(WaveguideError, ValueError):
    code = "empty_region"


class ParameterError(WaveguideError, ValueError):
    code = "invalid_parameters"


class SelectionError(WaveguideError, ValueError):
    code = "selection_failed"


class SamplingError(WaveguideError, ValueError):
    code = "empty_sample"


class MembershipError(WaveguideError, ValueError):
    code = "not_in_test_space"


class SolverError(WaveguideError, RuntimeError):
    code = "solver_failure"


class ReconstructionError(WaveguideError, RuntimeError):
    code = "reconstruction_failure"


class AdmissibilityError(WaveguideError, ValueError):
    code = "not_admissible"


class ConfigError(WaveguideError, ValueError):
    code = "config_error"
