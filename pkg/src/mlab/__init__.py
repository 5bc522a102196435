"""Metastability lab: clipped heavy-tailed SGD on multi-well landscapes.

The package simulates the truncated recursion
``X_{n+1} = phi_L(X_n - phi_b(eta * (f'(X_n) - Z_n)))``, builds the typical
transition graph of its attraction fields, estimates the rate constants of
the limiting continuous-time Markov chain, and ships the heavy-tail noise
injection optimizer built on the same mechanism.
"""

__version__ = "0.1.0"

from .errors import (AllCensored, Assumption3Violation, BatchTooLarge,
                     ConfigError, DegenerateCritical, InsufficientPoints,
                     InsufficientSamples, IntegratorFailure,
                     InterleavingViolation, MlabError, NoConvergence,
                     NonFiniteGradient, NumericalError, SingularSystem,
                     TruncationUnstable, UnsupportedKind, ZeroExitRate)
from .landscape import (SADDLE, AttractionField, CriticalPointSet, Landscape1D,
                        Landscape2D, builtin_himmelblau2d, builtin_multiwell1d,
                        classify_basin_2d, field_of, find_critical_points,
                        from_critical_points, from_polynomial)
from .noise import Gaussian, IsotropicPareto2D, SignedPareto, hill_tail_index
from .sgd import (ExitRecord, OccupancyHistogram, SgdConfig, run_occupancy,
                  run_trace, run_until_exit, step, truncate)
from .graph import (JumpProfile, TransitionGraph, build_graph, jump_profile,
                    lambda_large, require_assumption3, scaling_exponent)
from .limit import (CEMETERY, AbsorptionProbs, CtmcModel, CtmcPath, DtmcModel,
                    JumpVector, RateEstimate, RateTable, absorption_probs,
                    ctmc_generator, dtmc, estimate_table, jump_ode,
                    mc_estimate_rates, sample_ctmc_path)
from .injection import (InjectionConfig, OptimizerTrace, draw_batches,
                        expected_sharpness, heavy_step, make_problem,
                        plain_sb_step, run_plain_sb, run_two_phase)
from .harness import (ExperimentConfig, ExitScalingResult, PowerlawFit,
                      ScalingFit, fit_powerlaw, ks_exponential, load_config,
                      run_injection_demo, run_study, study_ctmc,
                      study_ctmc_compare, study_exit_scaling, study_graph,
                      study_occupancy, study_r2, study_rates)
