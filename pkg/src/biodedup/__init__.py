"""Multi-modal biometric de-duplication engine.

Fixed-length concatenated templates, weighted score fusion, sharded exact
inner-product 1:N search, FPIR/FNIR decisioning with a human adjudication
loop, and a calibrated synthetic-data harness for desk-scale evaluation.
"""

__version__ = "0.1.0"

from .template import (  # noqa: F401
    MultiBiometricTemplate,
    ModalitySegment,
    SEGMENT_NAMES,
    TEMPLATE_DIM,
    assemble_template,
    deserialize_template,
    normalize_segment,
    segment_layout,
    serialize_template,
)
from .fusion import (  # noqa: F401
    Decision,
    DecisionThreshold,
    FusedScore,
    decide,
    default_weights,
    fused_score,
    probe_prescale,
    quality_adapted_weights,
)
from .gallery import (  # noqa: F401
    Candidate,
    CandidateList,
    Gallery,
    GalleryShard,
    capacity_estimate,
    load_gallery,
    merge_topk,
    rescore_candidates,
    save_gallery,
    shard_search_topk,
)
