"""Vessel trajectory forecasting with a spatio-temporal graph conditional diffusion model.

The package covers the full pipeline: AIS-style record ingestion and scene
extraction (:mod:`stgdpm.data_pipeline`), dynamic interaction graphs
(:mod:`stgdpm.graph`), the conditional DDPM forward/reverse processes
(:mod:`stgdpm.diffusion`), the graph U-net denoiser (:mod:`stgdpm.denoiser`),
SGD training with a one-cycle schedule (:mod:`stgdpm.training`), and
best-of-N displacement-error evaluation (:mod:`stgdpm.evaluation`).
"""

from stgdpm.data_pipeline import (
    RawAisRecord,
    Trajectory,
    Scene,
    SceneDataset,
    SyntheticSpec,
    parse_ais_csv,
    resample_trajectory,
    clean_anomalies,
    to_local_coords,
    to_latlon,
    extract_scenes,
    generate_synthetic_scenes,
)
from stgdpm.graph import (
    DynamicAdjacency,
    NormalizedAdjacency,
    edge_weight,
    build_adjacency,
    normalize_adjacency,
)
from stgdpm.diffusion import (
    NoiseSchedule,
    make_noise_schedule,
    q_sample,
    p_sample_step,
    sample_trajectories,
)
from stgdpm.denoiser import DenoiserConfig, TrajUGnet, step_embedding, graph_conv
from stgdpm.training import (
    TrainConfig,
    Checkpoint,
    one_cycle_lr,
    train,
    training_loss,
    save_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
)
from stgdpm.evaluation import (
    Prediction,
    MetricReport,
    ade,
    fde,
    best_of_n_evaluate,
    constant_velocity_baseline,
    export_results,
)

__version__ = "0.1.0"
