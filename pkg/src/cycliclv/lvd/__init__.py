"""Video-description pipeline: frame sequencing, describer client,
response parsing, covariate distillation and spatial rasters."""

from .client import (
    AuthError,
    BadRequestError,
    BudgetExceededError,
    DescribedWindow,
    HttpChatTransport,
    LvdRequest,
    MockTransport,
    NetworkError,
    RateLimitError,
    ServerError,
    TransportError,
    TransportResponse,
    UsageBudget,
    describe_sequence,
    describe_windows,
)
from .covariates import DEFAULT_RULES, record_covariates, to_covariates
from .heatmap import HeatmapError, heatmap_export, heatmap_grid
from .prompt import PROMPT
from .records import (
    LvdRecord,
    ParseDiagnostic,
    ParseOutcome,
    ParserConfig,
    parse_response,
    render_record,
)
from .sequences import FrameSequence, extract_sequences, load_frame_index

__all__ = [name for name in dir() if not name.startswith("_")]
