"""chaoscast: short-horizon linear prediction of large chaotic systems.

Builds libraries of stationary attractor estimates at fixed tuning
parameters, fits many small subset regressions on random delay maps,
combines them by mean or majority-vote with shrinkage and calibration,
scores the forecasts, and inverts the procedure to estimate the tuning
parameter from anomaly patterns.
"""

from .config import PipelineConfig, load_config, save_config
from .dynamics import (AttractorEstimate, RunConfig, Trajectory, TuningParameter,
                       build_attractor_library, detect_steady_state,
                       estimate_correlation_dimension, integrate_lorenz96,
                       seasonal_aggregate, synth_index)
from .embedding import (DelayMap, WindowSchedule, build_design_matrix,
                        sample_delay_maps, split_windows)
from .ensemble import (EnsembleForecast, ModelGroup, PredictorKey, Station,
                       choose_combiner, combine_mean, combine_vote, form_keys,
                       median_combine, rank_models, retain_predictors,
                       take_top_percent)
from .ground import load_panel, make_ground_panel, standardize_anomalies
from .inversion import (InversionResult, estimate_parameter, invert_parameter,
                        key_significance_counts, smooth_counts)
from .metrics import (SkillReport, adjusted_dof, benjamini_hochberg, box_ljung,
                      correlation_pvalue, heidke_skill, pearson_r, running_skill,
                      tercile_boundaries)
from .panel import Panel
from .pipeline import PipelineResult, emit_plot_data, run_pipeline
from .shrinkage import (ShrinkageReport, apply_bias_correction,
                        bootstrap_shrinkage, calibrate, james_stein)
from .subset import SubsetModel, best_subsets, mallows_cp, ols_fit, select_model

__version__ = "0.1.0"
