"""Vision-language model client: prompt, transports, parsing."""

from .client import send
from .parsing import extract_verdict_token, locate_verdict_token, parse_verdict_json
from .prompt import JSON_KEYS, PromptConfig, build_prompt
from .transports import (
    LiveConfig,
    LiveTransport,
    MockReply,
    MockTransport,
    RecordingTransport,
    ReplayTransport,
    Transport,
    seeded_script,
)
from .types import (
    Completion,
    Decoding,
    ImageLabel,
    PromptBundle,
    TokenLogProb,
    Verdict,
    VerdictJson,
    VerdictPosition,
    VerificationExchange,
)
