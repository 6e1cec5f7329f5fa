"""Consensus-based saliency map fusion with ROAD faithfulness evaluation."""

from .adaptive import (
    DEFAULT_K_GRID,
    FULL_K_GRID,
    ThresholdSweep,
    adaptive_threshold,
    adaptive_threshold_single,
)
from .bundle import ExperimentBundle, load_bundle, load_campaign_manifest
from .core import (
    ActivationMap,
    ImageTensor,
    PixelIndex,
    is_valid,
    normalize,
    top_k_mask,
)
from .cre import CreReport, aggregate_cre, compute_cre
from .ensemble import (
    CamGroup,
    CamSetId,
    CampaignResult,
    default_groups,
    enumerate_camsets,
    run_campaign,
)
from .fusion import (
    ConsensusMap,
    FusionWeights,
    compute_weights,
    fuse_average,
    fuse_consensus,
    fuse_weighted,
    random_cam,
    threshold_single,
)
from .oracle import ConstantOracle, ModelOracle, RegionOracle
from .road import (
    DEFAULT_PERCENTILES,
    ImputationConfig,
    RoadScore,
    impute,
    perturb_and_score,
    road_score,
)

__version__ = "0.1.0"
