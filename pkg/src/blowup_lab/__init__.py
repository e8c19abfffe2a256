"""Numerical laboratory for the energy-critical semilinear heat equation.

Radial solver, weighted-density diagnostics, orthogonal bubble
decomposition, and rescaling views for u_t - Lap u = |u|^{p-1} u at the
critical power p = (n+2)/(n-2), aimed at the supercritical dimensions
n >= 7.
"""

__version__ = "0.1.0"

from .dimension import Dimension
from .kernel import (BubbleParams, SpectralData, bubble_energy,
                     bubble_gradient, bubble_laplacian, bubble_profile,
                     bubble_value, dilation_kernel_profile, ground_state,
                     kernel_Z, linearized_potential, scaled_kernel)
from .quadrature import radial_integral
from .solver import (BlowupFit, RadialField, RadialGrid, RunConfig,
                     StepControls, Trajectory, discrete_laplacian,
                     energy_identity_residual, estimate_blowup_time,
                     load_trajectory, run_until_blowup, save_trajectory, step)
from .diagnostics import (ClassificationResult, CutoffSpec,
                          MonotonicityReport, ThetaSample, classify,
                          default_eps_star, epsilon_regularity_flag, pohozaev,
                          pohozaev_identity_residual, theta,
                          theta_monotonicity_report, type_i_density,
                          type_ii_density, write_classification_json,
                          write_theta_csv)
from .decomposition import (BubbleTree, DecompositionResult, FieldSampler,
                            ParameterTrack, bubble_tree, default_guess,
                            fit_orthogonal, quantized_energy,
                            snapshot_sampler, synthetic_bubble_field,
                            track_parameters, write_parameter_track_csv)
from .tangent import (RescaledView, SelfSimilarProfile, liouville_distance,
                      rescale, self_similar_profile, write_profile_csv)
from .scenario import (Scenario, ScenarioError, load_scenario,
                       normalize_scenario, parse_scenario,
                       serialize_scenario)
from .runner import RunManifest, batch, build_initial, run

__all__ = [name for name in dir() if not name.startswith("_")]
