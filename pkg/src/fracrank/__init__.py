"""Low-rank matrix recovery by iterative singular value thresholding with
the fraction penalty ``rho_a(t) = a|t| / (a|t| + 1)``."""
from ._kernels import BACKEND
from .errors import (ConvergenceError, DegenerateError, DomainError, FormatError, FracRankError,
                     NonFiniteError, PreconditionError, ShapeError)
from .frac import (FractionParams, Regime, ThresholdSpec, g_lambda, penalty, prox, prox_array,
                   rho, threshold_values)
from .linops import (DenseMap, LinearMap, SampleSet, SamplingMap, dense_map, power_iteration,
                     sampling_map)
from .solver import (AdaptiveLambda, ExplicitStep, FixedLambda, LambdaFormula, SafeStep,
                     SolverConfig, SolverResult, SolverTrace, adaptive_lambda, isvta_solve,
                     ita_solve_vector, lambda_bar, objective, sup_singular_bound)
from .svthresh import svd, svt_operator

__version__ = "0.1.0"
