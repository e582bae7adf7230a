"""Modality indicator registry."""

import pytest

from physiobus.errors import UnknownModality
from physiobus.registry import INDICATOR_TABLE, modality_indicators
from physiobus.topics import SENSOR_TYPES


def test_ecg_indicators():
    assert modality_indicators("ecg") == {"mental_emotional_stress",
                                          "physical_effort"}


def test_pupillometry_indicators():
    assert modality_indicators("pupillometry") == {"workload",
                                                   "emotional_arousal",
                                                   "trust"}


def test_unknown_modality():
    with pytest.raises(UnknownModality):
        modality_indicators("fnirs")


def test_registry_covers_exactly_the_nine_sensor_types():
    assert set(INDICATOR_TABLE) == set(SENSOR_TYPES)
    assert len(INDICATOR_TABLE) == 9


def test_mapping_is_non_exclusive():
    # one category may be supported by several modalities
    assert "workload" in modality_indicators("eeg")
    assert "workload" in modality_indicators("pupillometry")
    assert "workload" in modality_indicators("respiration")


def test_every_modality_has_indicators():
    for sensor_type in SENSOR_TYPES:
        assert modality_indicators(sensor_type)
