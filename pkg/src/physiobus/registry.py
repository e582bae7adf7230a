"""Static sensor-modality → indicator-category registry.

The mapping is non-exclusive: one modality may inform several indicator
categories and one category may be supported by several modalities.
``INDICATOR_TABLE`` keeps the authoring order (used for printing);
:func:`modality_indicators` exposes the set view.
"""

from __future__ import annotations

from .errors import UnknownModality
from .topics import SENSOR_TYPES

INDICATOR_TABLE: dict[str, tuple[str, ...]] = {
    "eeg": ("workload", "stress"),
    "ppg": ("anxiety", "cognitive_effort"),
    "ecg": ("mental_emotional_stress", "physical_effort"),
    "eda": ("emotional_arousal", "mental_load"),
    "emg": ("motor_control", "motor_intention"),
    "eye_tracking": ("attention", "engagement", "intention"),
    "eog": ("eye_movement", "blink", "gaze_direction"),
    "pupillometry": ("workload", "emotional_arousal", "trust"),
    "respiration": ("arousal", "workload", "effort"),
}

assert set(INDICATOR_TABLE) == set(SENSOR_TYPES)


def modality_indicators(sensor_type: str) -> frozenset[str]:
    """Indicator categories a sensor modality can provide evidence for."""
    try:
        return frozenset(INDICATOR_TABLE[sensor_type])
    except KeyError:
        raise UnknownModality(f"unknown sensor type {sensor_type!r}") from None
