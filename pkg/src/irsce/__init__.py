"""Cascaded channel estimation for IRS-assisted uplink.

Library + CLI implementing a two-phase training protocol that estimates the
antenna scaling structure of the cascaded user-IRS-BS channels first and
the typical antenna's reflected rows second, with exact noiseless recovery,
LMMSE estimation under noise, and a Monte Carlo NMSE harness comparing
against the user-correlation baseline.
"""

from .channels import (CascadedChannels, ChannelRealization, CorrelationSpec,
                       SystemDims, build_exponential_corr_sqrt,
                       derive_cascaded, sample_channels)
from .errors import (DegenerateChannelError, IdentifiabilityError,
                     InsufficientDurationError, RankDeficientError,
                     WrongRegimeError)
from .harness import (ExperimentConfig, ResultRow, allocate_pilots,
                      load_config, nmse, run_proposed_trial, run_sweep)
from .lmmse import (CovarianceModel, LmmseResult, assemble_full_channel,
                    build_covariances, lmmse_phase1_gains, lmmse_typical,
                    run_lmmse_pipeline)
from .benchmark import (BenchmarkSchedule, benchmark_min_duration,
                        build_benchmark_schedule, run_benchmark_trial)
from .recovery import (build_phase2_system, build_stacked_observations,
                       rank_check, recover_antenna_ratios,
                       recover_phase1_gains, recover_typical_by_instant,
                       recover_typical_pinv)
from .schedules import (ObservationSet, TrainingSchedule, build_phase1_schedule,
                        build_phase2_schedule_dft, build_phase2_schedule_random,
                        build_schedule, min_durations, synthesize_observations)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSchedule", "CascadedChannels", "ChannelRealization",
    "CorrelationSpec", "CovarianceModel", "DegenerateChannelError",
    "ExperimentConfig", "IdentifiabilityError", "InsufficientDurationError",
    "LmmseResult", "ObservationSet", "RankDeficientError", "ResultRow",
    "SystemDims", "TrainingSchedule", "WrongRegimeError", "allocate_pilots",
    "assemble_full_channel", "benchmark_min_duration",
    "build_benchmark_schedule", "build_covariances",
    "build_exponential_corr_sqrt", "build_phase1_schedule",
    "build_phase2_schedule_dft", "build_phase2_schedule_random",
    "build_phase2_system", "build_schedule", "build_stacked_observations",
    "derive_cascaded", "lmmse_phase1_gains", "lmmse_typical", "load_config",
    "min_durations", "nmse", "rank_check", "recover_antenna_ratios",
    "recover_phase1_gains", "recover_typical_by_instant",
    "recover_typical_pinv", "run_benchmark_trial", "run_lmmse_pipeline",
    "run_proposed_trial", "run_sweep", "sample_channels",
    "synthesize_observations",
]
