"""Built-in fine-scale truth models."""
from .analytic import (
    ARGON_MASS,
    DEUTERIUM_MASS,
    RosenbrockTruth,
    SyntheticClosureTruth,
    icf_domain,
    rosenbrock,
    rosenbrock_batch,
    rosenbrock_domain,
    rosenbrock_grad,
    synthetic_closure,
)
from .greenkubo import (
    GreenKuboResult,
    LjDiffusionTruth,
    MsdResult,
    VacfSeries,
    einstein_msd_diffusion,
    green_kubo_diffusion,
    ou_velocity_series,
    vacf,
)
from .md import IntegrationBlowup, MdConfig, Trajectory, lj_md_run
