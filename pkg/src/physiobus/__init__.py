"""Typed publish/subscribe middleware for physiological time-series.

Raw signals, device-reported features, and derived features travel as
schema-tagged binary envelopes under a standardized topic hierarchy;
drivers acquire, interpreters derive, a fusion node estimates affective
state, and sessions can be recorded and replayed byte-exactly.
"""

from .bus import Broker, NodeHandle, Subscription, TopicPattern
from .errors import PhysioBusError
from .messages import (
    AffectiveState,
    BeatTruth,
    DeviceFeature,
    EcgFeatures,
    ExpressionEvent,
    Header,
    PhysioRaw,
    PhysioRawChannel,
    PpgFeatures,
    decode_envelope,
    encode_envelope,
)
from .registry import modality_indicators
from .runtime import RealRuntime, SimRuntime
from .topics import TopicName, format_topic, parse_topic

__version__ = "0.1.0"

__all__ = [
    "AffectiveState", "BeatTruth", "Broker", "DeviceFeature", "EcgFeatures",
    "ExpressionEvent", "Header", "NodeHandle", "PhysioBusError", "PhysioRaw",
    "PhysioRawChannel", "PpgFeatures", "RealRuntime", "SimRuntime",
    "Subscription", "TopicName", "TopicPattern", "decode_envelope",
    "encode_envelope", "format_topic", "modality_indicators", "parse_topic",
]
