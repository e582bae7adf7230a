"""Decision-tree fusion of facial expression and heart rate.

The tree branches on expression valence first, then on a single heart-rate
threshold (default 90 bpm, inclusive on the high side):

==============  ===============  ================
expression      hr < threshold   hr >= threshold
==============  ===============  ================
positive group  calm_relaxed     alert_active
negative group  alert_active     stressed_anxious
==============  ===============  ================

Positive group: happy, neutral, surprise. Negative group: sad, angry,
fear, disgust. Threshold and grouping are configuration, not claims — the
defaults exist so studies have a starting point to recalibrate from.

Heart rate is the mean of whichever ECG/PPG feature streams are fresh
(age at most `staleness_s`); the node publishes only when both a fused
heart rate and a fresh expression exist, and counts skipped ticks
otherwise (`skipped_ticks` parameter snapshot).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import InvalidConfig
from .messages import AffectiveState
from .topics import affective_state_topic, expression_topic, sensor_topic

_NS = 1_000_000_000

POSITIVE_EXPRESSIONS = frozenset({"happy", "neutral", "surprise"})
NEGATIVE_EXPRESSIONS = frozenset({"sad", "angry", "fear", "disgust"})


@dataclass
class FusionConfig:
    human_id: str
    ecg_features_topic: str
    ppg_features_topic: str
    expression_topic: str
    hr_threshold_bpm: float = 90.0
    staleness_s: float = 5.0
    publish_hz: float = 1.0

    def validate(self) -> None:
        if self.hr_threshold_bpm <= 0:
            raise InvalidConfig("hr_threshold_bpm must be > 0")
        if self.staleness_s <= 0:
            raise InvalidConfig("staleness_s must be > 0")
        if self.publish_hz <= 0:
            raise InvalidConfig("publish_hz must be > 0")

    @classmethod
    def for_sensors(cls, human_id: str, ecg_sensor_id: str,
                    ppg_sensor_id: str, **kwargs) -> "FusionConfig":
        return cls(
            human_id=human_id,
            ecg_features_topic=sensor_topic(human_id, "ecg", ecg_sensor_id,
                                            "features"),
            ppg_features_topic=sensor_topic(human_id, "ppg", ppg_sensor_id,
                                            "features"),
            expression_topic=expression_topic(human_id),
            **kwargs)


def classify(expression: str, hr_bpm: float, config: FusionConfig) -> str:
    """Affective-state label for one (expression, heart rate) pair."""
    elevated = hr_bpm >= config.hr_threshold_bpm
    if expression in POSITIVE_EXPRESSIONS:
        return "alert_active" if elevated else "calm_relaxed"
    return "stressed_anxious" if elevated else "alert_active"


def fuse_hr(entries, staleness_s: float) -> float | None:
    """Mean of the fresh heart rates among `entries` = [(hr, age_s), ...]."""
    fresh = [hr for hr, age_s in entries
             if hr is not None and age_s is not None and age_s <= staleness_s]
    if not fresh:
        return None
    return sum(fresh) / len(fresh)


@dataclass
class _Cached:
    value: float | str | None = None
    recv_ns: int | None = None

    def age_s(self, now_ns: int) -> float | None:
        if self.recv_ns is None:
            return None
        return (now_ns - self.recv_ns) / 1e9


class FusionNode:
    def __init__(self, bus, config: FusionConfig):
        config.validate()
        self.bus = bus
        self.config = config
        self.output_topic = affective_state_topic(config.human_id)
        self.node = bus.create_node(
            f"fusion_{config.human_id}",
            {"hr_threshold_bpm": config.hr_threshold_bpm,
             "staleness_s": config.staleness_s,
             "skipped_ticks": 0})
        self.skipped_ticks = 0
        self._lock = threading.Lock()
        self._ecg = _Cached()
        self._ppg = _Cached()
        self._expr = _Cached()
        self._subs = [
            self.node.subscribe(config.ecg_features_topic,
                                self._cache_hr(self._ecg)),
            self.node.subscribe(config.ppg_features_topic,
                                self._cache_hr(self._ppg)),
            self.node.subscribe(config.expression_topic, self._on_expression),
        ]
        self._task = bus.runtime.schedule_periodic(
            int(_NS / config.publish_hz), self._tick)

    def _cache_hr(self, slot: _Cached):
        def callback(delivery):
            with self._lock:
                slot.value = delivery.message.heart_rate_bpm
                slot.recv_ns = delivery.recv_time_ns
        return callback

    def _on_expression(self, delivery) -> None:
        with self._lock:
            self._expr.value = delivery.message.expression
            self._expr.recv_ns = delivery.recv_time_ns

    def _tick(self) -> None:
        now = self.bus.runtime.now_ns()
        cfg = self.config
        with self._lock:
            hr = fuse_hr([(self._ecg.value, self._ecg.age_s(now)),
                          (self._ppg.value, self._ppg.age_s(now))],
                         cfg.staleness_s)
            expr = self._expr.value
            expr_age = self._expr.age_s(now)
        expr_fresh = (expr is not None and expr_age is not None
                      and expr_age <= cfg.staleness_s)
        if hr is None or not expr_fresh:
            self.skipped_ticks += 1
            self.node.set_parameter_snapshot("skipped_ticks",
                                             self.skipped_ticks)
            return
        self.node.publish(self.output_topic, AffectiveState(
            human_id=cfg.human_id, state=classify(expr, hr, cfg),
            heart_rate_bpm=hr, expression=expr))

    def stop(self) -> None:
        self._task.cancel()
        self.node.close()


def run_fusion_node(bus, config: FusionConfig) -> FusionNode:
    return FusionNode(bus, config)
