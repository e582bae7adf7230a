"""Shared test helpers: seeded random message generators."""

from __future__ import annotations

import random
import string

import pytest

from physiobus import messages as m

_NAME_ALPHABET = string.ascii_lowercase + string.digits + "_"
_TEXT_ALPHABET = string.ascii_letters + string.digits + " _-/αβµ≥"


def random_token(rng: random.Random, max_len: int = 12) -> str:
    n = rng.randint(1, max_len)
    return "".join(rng.choice(_NAME_ALPHABET) for _ in range(n))


def random_text(rng: random.Random, max_len: int = 20,
                allow_empty: bool = True) -> str:
    n = rng.randint(0 if allow_empty else 1, max_len)
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(n))


def random_header(rng: random.Random) -> m.Header:
    return m.Header(seq=rng.randrange(0, 1 << 64),
                    stamp_ns=rng.randrange(0, 1 << 62),
                    source=random_text(rng))


def random_physio_raw(rng: random.Random) -> m.PhysioRaw:
    n_channels = rng.randint(0, 4)
    n_samples = rng.randint(0, 50)
    names = set()
    while len(names) < n_channels:
        names.add(random_token(rng))
    channels = tuple(
        m.PhysioRawChannel(name, tuple(rng.uniform(-5.0, 5.0)
                                       for _ in range(n_samples)))
        for name in sorted(names))
    return m.PhysioRaw(header=random_header(rng),
                       device_timestamp_ns=rng.randrange(-(1 << 62), 1 << 62),
                       channels=channels)


def random_device_feature(rng: random.Random) -> m.DeviceFeature:
    return m.DeviceFeature(header=random_header(rng),
                           device_timestamp_ns=rng.randrange(0, 1 << 62),
                           name=random_text(rng, allow_empty=False),
                           value=rng.uniform(-1e6, 1e6))


def _random_features(rng: random.Random, cls):
    return cls(header=random_header(rng),
               device_timestamp_ns=rng.randrange(0, 1 << 62),
               rr_ms=rng.uniform(300.0, 2000.0),
               peak_count=rng.randrange(0, 1 << 16),
               sdnn_ms=rng.uniform(0.0, 300.0),
               rmssd_ms=rng.uniform(0.0, 300.0),
               pnn50_pct=rng.uniform(0.0, 100.0),
               heart_rate_bpm=rng.uniform(30.0, 200.0),
               window_s=rng.uniform(10.0, 120.0))


def random_ecg_features(rng: random.Random) -> m.EcgFeatures:
    return _random_features(rng, m.EcgFeatures)


def random_ppg_features(rng: random.Random) -> m.PpgFeatures:
    return _random_features(rng, m.PpgFeatures)


def random_expression_event(rng: random.Random) -> m.ExpressionEvent:
    return m.ExpressionEvent(header=random_header(rng),
                             human_id=random_token(rng),
                             expression=rng.choice(m.EXPRESSIONS),
                             confidence=rng.uniform(0.0, 1.0))


def random_affective_state(rng: random.Random) -> m.AffectiveState:
    return m.AffectiveState(header=random_header(rng),
                            human_id=random_token(rng),
                            state=rng.choice(m.AFFECTIVE_STATES),
                            heart_rate_bpm=rng.uniform(30.0, 200.0),
                            expression=rng.choice(m.EXPRESSIONS))


def random_beat_truth(rng: random.Random) -> m.BeatTruth:
    return m.BeatTruth(header=random_header(rng),
                       beat_time_ns=rng.randrange(-(1 << 62), 1 << 62))


MESSAGE_GENERATORS = {
    m.SCHEMA_PHYSIO_RAW: random_physio_raw,
    m.SCHEMA_DEVICE_FEATURE: random_device_feature,
    m.SCHEMA_ECG_FEATURES: random_ecg_features,
    m.SCHEMA_PPG_FEATURES: random_ppg_features,
    m.SCHEMA_EXPRESSION_EVENT: random_expression_event,
    m.SCHEMA_AFFECTIVE_STATE: random_affective_state,
    m.SCHEMA_BEAT_TRUTH: random_beat_truth,
}


def random_message(rng: random.Random):
    schema = rng.choice(list(MESSAGE_GENERATORS))
    return MESSAGE_GENERATORS[schema](rng)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
