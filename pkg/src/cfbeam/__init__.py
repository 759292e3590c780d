"""Channel-fingerprint-aided mmWave beam tracking on a discrete grid."""

from .codebook import CodebookConfig, beam_steering_angles, steering_gain
from .fingerprint import (Cell, FingerprintDatabase, GridMap, SceneConfig, Scatterer,
                          default_street_database, gain_at, generate_synthetic, gradient_at,
                          load, save)
from .mobility import (BlockageModel, ChannelRealization, MobilityModel, TransitionKernel,
                       build_transition_kernel, realize_channel, step_true_location)
from .rbe import LocationPmf, RbeTracker
from .ekf import EkfState, EkfTracker
from .baselines import ExhaustiveSweep, SweepAroundCurrent
from .harness import (EpisodeRecord, MetricsRecord, SimConfig, coverage_ratio, gain_gap,
                      monte_carlo, run_episode, sweep_experiment, write_csv)

__version__ = "0.1.0"
