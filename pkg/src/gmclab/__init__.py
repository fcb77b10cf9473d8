"""Simulation toolkit for log-correlated Gaussian fields, their chaos measures and near-maximum clusters."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, CoverageError, DomainError, GmcLabError,  # noqa: E402
                     PartialResultError, ResourceError, SamplerError, StatisticsError)
from .rng import RandomStream  # noqa: E402
from .kernel import SeedKernel, build_seed_kernel  # noqa: E402
from .field import FieldSample, GridSpec, sample_field_batch, sample_layers  # noqa: E402
from .gmc import DiscreteMeasure, GmcPhase, gmc_measure, lebesgue_measure  # noqa: E402
from .atoms import AtomicMeasure, sample_eta  # noqa: E402
from .bridge import p_stay_positive, sample_bridge  # noqa: E402
from .extremes import sample_psi, sample_tilde_upsilon, sample_upsilon  # noqa: E402
from .harness import McEstimate, TestReport, acceptance_suite, run_replicates  # noqa: E402
