"""Map- and neighbor-aware variational trajectory forecasting."""

from .baselines import constant_velocity_predict, kalman_predict
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import (SceneRecord, SyntheticConfig, downsample, export_scenes,
                   generate_scenarios, ingest_external, make_dataset, make_windows)
from .encoder import EncoderMode, ObservationEncoder
from .geometry import (AgentState, AgentType, LocalFrame, NeighborView,
                       SocialFeatures, build_local_frame, compute_social_features,
                       finite_difference_states, query_neighbors,
                       reconstruct_trajectory, to_displacements)
from .metrics import EvaluationReport, evaluate, min_ade, min_fde
from .semantic_map import (ANCHOR_COL, ANCHOR_ROW, MapEncoder, MapFeatures,
                           RasterMap, VectorMap, extract_map_features,
                           map_saliency, rasterize)
from .training import train
from .vae import (DiagonalGaussian, ModelConfig, PredictionSet, TrajectoryVAE,
                  kl_diagonal_gaussian, sample_predictions)
from .windows import FutureTruth, NeighborSet, ObservationWindow, collate

__version__ = "0.1.0"
