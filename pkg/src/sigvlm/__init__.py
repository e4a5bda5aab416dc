"""Zero-shot signature verification with vision-language models.

Online signatures are rendered to pressure-encoded images, judged by a VLM
through a two-verdict prompt, turned into similarity scores from token
log-probabilities and stated certainty, and evaluated with EER/DET metrics
next to a DTW baseline.
"""

from .baseline_dtw import DtwResult, FeatureSeries, derive_features, dtw_distance, dtw_score
from .evaluation import EvalReport, LabeledScore, Scenario, breakdown, compute_det, compute_eer, emit_report
from .render import PairMode, RenderConfig, RenderedImage, compose_pair, encode_png, render_signature
from .scoring import (
    ScoreTriple,
    TokenClass,
    TokenClassSets,
    assemble_scores,
    classify_token,
    score_from_certainty,
    score_from_logprob,
)
from .signal_model import (
    InputKind,
    NormalizedRecord,
    SamplePoint,
    SignatureRecord,
    StrokeGapPolicy,
    normalize,
    normalize_pressure,
    normalize_spatial,
    segment_strokes,
)
from .svc_ingest import (
    Column,
    ColumnSchema,
    ComparisonPair,
    Dataset,
    Label,
    Task,
    parse_comparison_list,
    parse_signature_file,
    synth_dataset,
)

__version__ = "0.1.0"
