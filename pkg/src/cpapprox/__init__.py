"""Cut-and-project point sets, their periodic approximants, and spectral estimators."""
from .algebra import (
    Kernel,
    PEFunction,
    SchrodingerSpec,
    build_schrodinger,
    kernel_add,
    kernel_adjoint,
    kernel_convolve,
    kernel_generator_s,
    kernel_identity,
    kernel_multiplication,
    kernel_scale,
)
from .cutproject import (
    RationalScheme,
    Scheme,
    Window,
    WindowFn,
    fibonacci_scheme,
    generate_model_set,
    integer_lattice_scheme,
    internal_cell,
    nonsingularity_margin,
    periodicity_lattice,
    rational_approximant,
    sample_model_set,
)
from .estimators import Autocorrelation, DensityOfStates, ModelSetSampler
from .harness import ExperimentPlan, ConvergenceReport, hull_proxy_distance, run_autocorr_convergence, run_dos_convergence
from .operators import OperatorMatrix, PeriodicBoundary, SamplingWeight, eigensolve, local_spectral_weights, represent
from .pointset import PointSet, check_delone, local_distance, translate
from .spectra import (
    EmpiricalMeasure,
    TestFunction,
    autocorrelation,
    dos_estimate,
    ids,
    pair_measure_apply,
    periodize,
    weak_star_distance,
)

__version__ = "0.1.0"
