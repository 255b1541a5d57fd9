"""Dynamic-network embeddings from a windowed recurrent autoencoder."""

from .config import RunConfig, load_config, save_config
from .dynamics import PerturbationConfig, perturb_series, synth_community_graph
from .evaluation import (
    F1Report,
    RankedPairList,
    classification_sweep,
    f1_scores,
    hide_edges,
    link_prediction_eval,
    precision_at_k,
    rank_pairs,
    train_classifier,
)
from .exceptions import (
    CapacityError,
    ConfigError,
    CorruptionError,
    GenerationError,
    ParseError,
    RnneError,
    SequencingError,
    TrainingError,
    ValidationError,
)
from .graphs import (
    GraphSnapshot,
    NodeIndexMap,
    align_series,
    load_edge_list,
    load_labels,
    load_snapshot_series,
    write_edge_list,
    write_labels,
    write_snapshot_series,
)
from .grubbs import grubbs_critical_value, grubbs_outliers, student_t_upper_quantile
from .model import (
    EmbeddingSet,
    Hyperparams,
    ModelParams,
    decode,
    encode,
    first_order_loss,
    gradients,
    load_checkpoint,
    reconstruction_loss,
    sample_batch,
    save_checkpoint,
    sgd_step,
    stability_loss,
    total_loss,
    train_window,
)
from .pipeline import SeriesResult, run_eval, run_generation, run_sweep, run_training, train_series
from .pretreatment import (
    NodeState,
    PaddedSnapshot,
    TrainingWindow,
    feature_matrix,
    mark_states,
    row_diff_scores,
    row_normalize,
)

__version__ = "0.1.0"
