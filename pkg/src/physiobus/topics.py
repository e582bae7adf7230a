"""Topic-name grammar for physiological data streams.

Canonical form::

    /humans/physiological/<human_id>/<sensor_type>/<sensor_id>/<field>

Tokens are ``[a-z0-9_]{1,64}``; ``sensor_type`` and ``field`` come from
fixed vocabularies. A handful of non-physiological namespaces (expressions,
fused affective state, experiment event markers) are whitelisted for
publishing without parsing under this grammar — see :func:`publishable`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import InvalidTopic, InvariantViolation

SENSOR_TYPES = (
    "eeg", "ppg", "ecg", "eda", "emg", "eye_tracking", "eog",
    "pupillometry", "respiration",
)

FIELDS = ("raw", "device", "features", "truth")

PREFIX = "/humans/physiological"

EXPRESSIONS_NAMESPACE = "/humans/expressions"
AFFECTIVE_STATE_NAMESPACE = "/humans/affective_state"
EXPERIMENT_EVENTS_TOPIC = "/experiment/events"

_TOKEN_RE = re.compile(r"[a-z0-9_]{1,64}\Z")


def valid_token(token: str) -> bool:
    return isinstance(token, str) and bool(_TOKEN_RE.match(token))


@dataclass(frozen=True)
class TopicName:
    human_id: str
    sensor_type: str
    sensor_id: str
    field: str


def parse_topic(s: str) -> TopicName:
    """Parse a canonical topic string; InvalidTopic names the bad segment."""
    if not isinstance(s, str) or not s.startswith("/"):
        raise InvalidTopic(f"topic must start with '/': {s!r}",
                           segment="leading_slash")
    parts = s.split("/")
    # parts[0] is the empty string before the leading slash
    if len(parts) != 7:
        raise InvalidTopic(
            f"expected 6 segments, got {len(parts) - 1}: {s!r}",
            segment="segment_count")
    _, humans, physiological, human_id, sensor_type, sensor_id, fld = parts
    if humans != "humans":
        raise InvalidTopic(f"first segment must be 'humans': {s!r}",
                           segment="humans")
    if physiological != "physiological":
        raise InvalidTopic(
            f"second segment must be 'physiological': {s!r}",
            segment="physiological")
    if not valid_token(human_id):
        raise InvalidTopic(f"bad human_id {human_id!r}", segment="human_id")
    if not valid_token(sensor_type) or sensor_type not in SENSOR_TYPES:
        raise InvalidTopic(f"bad sensor_type {sensor_type!r}",
                           segment="sensor_type")
    if not valid_token(sensor_id):
        raise InvalidTopic(f"bad sensor_id {sensor_id!r}", segment="sensor_id")
    if not valid_token(fld) or fld not in FIELDS:
        raise InvalidTopic(f"bad field {fld!r}", segment="field")
    return TopicName(human_id, sensor_type, sensor_id, fld)


def format_topic(t: TopicName) -> str:
    """Canonical string form; inverse of parse_topic on valid names."""
    if not valid_token(t.human_id):
        raise InvariantViolation(f"bad human_id token {t.human_id!r}")
    if t.sensor_type not in SENSOR_TYPES:
        raise InvariantViolation(f"bad sensor_type token {t.sensor_type!r}")
    if not valid_token(t.sensor_id):
        raise InvariantViolation(f"bad sensor_id token {t.sensor_id!r}")
    if t.field not in FIELDS:
        raise InvariantViolation(f"bad field token {t.field!r}")
    return f"{PREFIX}/{t.human_id}/{t.sensor_type}/{t.sensor_id}/{t.field}"


def sensor_topic(human_id: str, sensor_type: str, sensor_id: str,
                 field: str) -> str:
    return format_topic(TopicName(human_id, sensor_type, sensor_id, field))


def expression_topic(human_id: str) -> str:
    return f"{EXPRESSIONS_NAMESPACE}/{human_id}"


def affective_state_topic(human_id: str) -> str:
    return f"{AFFECTIVE_STATE_NAMESPACE}/{human_id}"


def publishable(topic: str) -> bool:
    """True if `topic` may carry traffic on the bus.

    Either it parses under the sensor grammar, or it lives in one of the
    whitelisted non-physiological namespaces.
    """
    try:
        parse_topic(topic)
        return True
    except InvalidTopic:
        pass
    if topic == EXPERIMENT_EVENTS_TOPIC:
        return True
    for namespace in (EXPRESSIONS_NAMESPACE, AFFECTIVE_STATE_NAMESPACE):
        if topic.startswith(namespace + "/"):
            rest = topic[len(namespace) + 1:]
            if rest and all(valid_token(seg) for seg in rest.split("/")):
                return True
    return False
