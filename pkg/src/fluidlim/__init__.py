"""Fluid limits of rescaled pure jump Markov processes.

Simulate scaled chains on exponential clocks, integrate their limiting ODEs,
and check by Monte Carlo how fast the former approach the latter.
"""
from .bounds import (
    BoundInputs,
    gamma_tail_cdf,
    gronwall_envelope,
    hydrodynamic_bound,
    maximal_inequality_bound,
)
from .fluid import FluidSolution, VectorField, detect_exit, eval_solution, integrate
from .lab import exit_time_convergence, run_ladder, sup_deviation, wilson_interval, wlln_check
from .model import (
    DomainError,
    HalfSpace,
    InvariantError,
    JumpModel,
    ScalingAssumptions,
    drift,
    restrict,
    validate_scaling,
)
from .models import (
    ParticleSystemParams,
    particle_closed_form,
    particle_limit_field,
    particle_model,
    random_walk_model,
    reconstruct_counts,
)
from .simulate import (
    SimConfig,
    Trajectory,
    compensator_path,
    exit_time,
    martingale_path,
    replicate_rng,
)

__version__ = "0.1.0"
