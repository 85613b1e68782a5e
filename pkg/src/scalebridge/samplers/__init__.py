"""Space-filling designs, optimizer-directed sampling and the validity loop."""
from .designs import ball_unit, latin_hypercube, lhs_unit, sparsity_sample, uniform_random
from .directed import OptimizerDirectedSampler, SparsitySampler, UniformSampler, optimizer_directed_draw
from .neldermead import NelderMead, NelderMeadConfig, NelderMeadResult, nelder_mead_run
from .validity import IterationRecord, ValidityConfig, ValidityHistory, ValidityResult, validity_loop
