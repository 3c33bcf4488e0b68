"""Kinetic mean-field Langevin particle simulator and experiment harness."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    DynamicsParams,
    NoiseStream,
    ParticleState,
    normalize_params,
    simulate,
    simulate_overdamped,
    step_overdamped,
    step_underdamped,
)
from .functionals import (  # noqa: F401
    CurieWeissQuadratic,
    FunctionalMeta,
    MeanFieldFunctional,
    RescaledDriftFunctional,
    TwoLayerNetFunctional,
    neuron_output,
)
from .gaussian import (  # noqa: F401
    GaussianMoments,
    free_energy_gap,
    gaussian_relative_entropy,
    gaussian_relative_fisher,
    gaussian_w2,
    herau_functional,
    invariant_moments,
    propagate_moments,
)
from .measures import (  # noqa: F401
    EmpiricalMeasure,
    concentration_check,
    leave_one_out_w1_bound,
    variance,
    w1_exact_1d,
    w2_exact,
)
from .series import ObservableSeries  # noqa: F401
