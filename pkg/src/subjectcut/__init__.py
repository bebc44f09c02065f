"""Subject masks and discrete-alpha cutouts from diffusion attention dumps.

The pipeline: read a cross-attention dump, fuse the per-step/per-layer
maps with inverse-entropy weights, pick out keyword token rows, threshold
the upsampled map into a trimap, refine it with an iterated graph-cut
segmenter, and composite a binary-alpha RGBA cutout. A scripted agent
loop can expand raw keywords into a prompt and concrete subject nouns
first. The `subjectcut` command wires all stages together.
"""
from .agents import (
    DEFAULT_STOPLIST,
    AgentSession,
    Role,
    SessionCaps,
    TemplateSet,
    expand,
    extract_nouns,
    filter_abstract,
    optimize,
    run_session,
)
from .backends import ChatBackend, OpenAIChatBackend, SamplingConfig, ScriptedBackend
from .compositor import checkerboard, compose, flatten
from .dumpio import (
    AttentionRecord,
    DumpHeader,
    Layout,
    PatternSpec,
    SyntheticSpec,
    TokenTable,
    generate_synthetic_dump,
    read_dump,
    read_dump_file,
    write_dump,
    write_dump_file,
    write_synthetic,
)
from .errors import (
    BackendError,
    DegenerateRegionError,
    DumpFormatError,
    DumpTruncatedError,
    EmptyForegroundError,
    InvalidValuesError,
    KeywordMissingError,
    MalformedResponseError,
    RecordOrderError,
    ShapeMismatchError,
    SubjectCutError,
    UnmatchedKeywordError,
)
from .fusion import (
    CrossAttentionMap,
    EntropyScore,
    FusedMap,
    KeywordMap,
    WeightConfig,
    entropy_of_map,
    extract_cross,
    fuse,
    keyword_maps,
    match_keyword_tokens,
    weight_of,
)
from .grabcut import (
    GaussianMixture,
    GrabCutConfig,
    PixelGraph,
    SegmentResult,
    assign_components,
    estimate_beta,
    init_gmms,
    learn_gmms,
    segment,
    segmentation_energy,
)
from .maxflow import FlowNetwork
from .trimap import Label, ThresholdConfig, Trimap, build_trimap, upsample

__version__ = "0.1.0"
