"""fullstream: a full-stream speech-token synthesis engine with monotonic
alignment, distribution-matching speaking-rate control, multi-conditioning
classifier-free guidance, and a latency benchmark harness."""

__version__ = "0.1.0"

from .alignment import (
    AlignmentState,
    DurationToken,
    Phoneme,
    PhonemeStream,
    PromptSpec,
    duration_decode,
    duration_encode,
)
from .backends import ModelDims, ScriptedBackend, ScriptedProgram, SpeakerEmbedding, ToyBackend
from .engine import CostModel, EngineConfig, Session, run
from .events import StreamEvent, event_from_json, event_to_json, read_events, write_events
from .rate import AccumulatorWindow, RateSchedule, RateTargetTable, SpsCurve, default_rate_table
from .sampling import (
    DurationDistribution,
    GuidanceConfig,
    JointLogits,
    SamplerConfig,
    WeightVector,
)
