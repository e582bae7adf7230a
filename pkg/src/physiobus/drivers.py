"""Sensor driver nodes: synthetic ECG/PPG devices and file replay.

Drivers only acquire and forward: they publish raw sample blocks on
``.../raw``, device-reported features on ``.../device``, and (simulators
only) ground-truth beats on ``.../truth``. Interpretation lives elsewhere.

The simulated device clock runs at the bus rate plus a configurable fixed
offset, so ``device_timestamp_ns`` exercises the offset estimator exactly
like unsynchronized hardware would.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import waveforms
from .errors import InvalidConfig
from .messages import BeatTruth, DeviceFeature, ExpressionEvent, PhysioRaw, \
    PhysioRawChannel
from .topics import expression_topic, sensor_topic
from .waveforms import ECG_WAVES, PPG_WAVES, SignalModel

_NS = 1_000_000_000


@dataclass
class EcgSimConfig:
    sampling_frequency_hz: float = 250.0
    mean_hr_bpm: float = 72.0
    rr_jitter_sd_ms: float = 30.0
    noise_sd_mv: float = 0.02
    rng_seed: int = 0
    block_ms: int = 200
    device_clock_offset_ns: int = 0

    def validate(self) -> None:
        if self.sampling_frequency_hz <= 0:
            raise InvalidConfig("sampling_frequency_hz must be > 0")
        if not 20.0 < self.mean_hr_bpm < 250.0:
            raise InvalidConfig("mean_hr_bpm must be in (20, 250)")
        if self.rr_jitter_sd_ms < 0:
            raise InvalidConfig("rr_jitter_sd_ms must be >= 0")
        if self.noise_sd_mv < 0:
            raise InvalidConfig("noise_sd_mv must be >= 0")
        if self.block_ms <= 0:
            raise InvalidConfig("block_ms must be > 0")


@dataclass
class PpgSimConfig(EcgSimConfig):
    report_device_features: bool = True


def ecg_model(config: EcgSimConfig) -> SignalModel:
    config.validate()
    return SignalModel(ECG_WAVES, config.sampling_frequency_hz,
                       config.mean_hr_bpm, config.rr_jitter_sd_ms,
                       config.noise_sd_mv, config.rng_seed)


def ppg_model(config: EcgSimConfig) -> SignalModel:
    config.validate()
    return SignalModel(PPG_WAVES, config.sampling_frequency_hz,
                       config.mean_hr_bpm, config.rr_jitter_sd_ms,
                       config.noise_sd_mv, config.rng_seed)


def synth_ecg(config: EcgSimConfig, duration_s: float
              ) -> tuple[np.ndarray, list[int]]:
    """Offline render: (samples, true beat times in ns from stream start)."""
    model = ecg_model(config)
    n = int(round(duration_s * config.sampling_frequency_hz))
    samples = model.samples(0, n)
    beats = model.beats_between(0, int(duration_s * _NS))
    return samples, beats


def synth_ppg(config: EcgSimConfig, duration_s: float
              ) -> tuple[np.ndarray, list[int]]:
    model = ppg_model(config)
    n = int(round(duration_s * config.sampling_frequency_hz))
    samples = model.samples(0, n)
    beats = model.beats_between(0, int(duration_s * _NS))
    return samples, beats


class SimSensorDriver:
    """Periodic task publishing one PhysioRaw block per tick plus truth."""

    def __init__(self, bus, human_id: str, sensor_id: str,
                 config: EcgSimConfig, *, sensor_type: str,
                 channel_name: str, unit: str, model: SignalModel):
        self.bus = bus
        self.config = config
        self.human_id = human_id
        self.sensor_id = sensor_id
        self.channel_name = channel_name
        self._model = model
        self.raw_topic = sensor_topic(human_id, sensor_type, sensor_id, "raw")
        self.truth_topic = sensor_topic(human_id, sensor_type, sensor_id,
                                        "truth")
        self.device_topic = sensor_topic(human_id, sensor_type, sensor_id,
                                         "device")
        self.node = bus.create_node(
            f"{sensor_type}_driver_{human_id}_{sensor_id}",
            {"sampling_frequency_hz": config.sampling_frequency_hz,
             "unit": unit, "range": 5.0})
        self._block_n = int(round(config.sampling_frequency_hz
                                  * config.block_ms / 1000.0))
        self._block_index = 0
        self._anchor_ns = bus.runtime.now_ns()
        self._prev_beat_ns: int | None = None
        self._feature_rng = np.random.default_rng(
            [config.rng_seed & 0xFFFFFFFFFFFFFFFF, 0xFE])
        self._task = bus.runtime.schedule_periodic(
            config.block_ms * 1_000_000, self._tick)

    def _tick(self) -> None:
        k = self._block_index
        self._block_index += 1
        i0, i1 = k * self._block_n, (k + 1) * self._block_n
        samples = self._model.samples(i0, i1)
        rel_t0 = int(round(i0 * _NS / self.config.sampling_frequency_hz))
        rel_t1 = int(round(i1 * _NS / self.config.sampling_frequency_hz))
        device_ts = (self._anchor_ns + rel_t0
                     + self.config.device_clock_offset_ns)
        self.node.publish(self.raw_topic, PhysioRaw(
            device_timestamp_ns=device_ts,
            channels=(PhysioRawChannel(self.channel_name,
                                       tuple(float(s) for s in samples)),)))
        for beat_rel in self._model.beats_between(rel_t0, rel_t1):
            self._emit_beat(beat_rel)

    def _emit_beat(self, beat_rel_ns: int) -> None:
        self.node.publish(self.truth_topic, BeatTruth(
            beat_time_ns=self._anchor_ns + beat_rel_ns))
        self._prev_beat_ns = beat_rel_ns

    def stop(self) -> None:
        self._task.cancel()
        self.node.close()


class EcgSimDriver(SimSensorDriver):
    def __init__(self, bus, human_id, sensor_id, config: EcgSimConfig):
        super().__init__(bus, human_id, sensor_id, config, sensor_type="ecg",
                         channel_name="ecg_mv", unit="mV",
                         model=ecg_model(config))


class PpgSimDriver(SimSensorDriver):
    """PPG simulator; optionally reports RR/HR per beat like consumer
    heart-rate sensors do."""

    def __init__(self, bus, human_id, sensor_id, config: PpgSimConfig):
        self._report = config.report_device_features
        super().__init__(bus, human_id, sensor_id, config, sensor_type="ppg",
                         channel_name="ppg_au", unit="au",
                         model=ppg_model(config))

    def _emit_beat(self, beat_rel_ns: int) -> None:
        prev = self._prev_beat_ns
        super()._emit_beat(beat_rel_ns)
        if not self._report or prev is None:
            return
        rr_true_ms = (beat_rel_ns - prev) / 1e6
        rr_val = rr_true_ms + float(self._feature_rng.normal(0.0, 1.0))
        hr_val = 60000.0 / rr_true_ms + float(self._feature_rng.normal(0.0, 0.5))
        device_ts = (self._anchor_ns + beat_rel_ns
                     + self.config.device_clock_offset_ns)
        self.node.publish(self.device_topic, DeviceFeature(
            device_timestamp_ns=device_ts, name="rr_ms", value=rr_val))
        self.node.publish(self.device_topic, DeviceFeature(
            device_timestamp_ns=device_ts, name="heart_rate_bpm",
            value=hr_val))


def run_ecg_driver(bus, human_id: str, sensor_id: str,
                   config: EcgSimConfig | None = None) -> EcgSimDriver:
    return EcgSimDriver(bus, human_id, sensor_id, config or EcgSimConfig())


def run_ppg_driver(bus, human_id: str, sensor_id: str,
                   config: PpgSimConfig | None = None) -> PpgSimDriver:
    return PpgSimDriver(bus, human_id, sensor_id, config or PpgSimConfig())


def run_replay_driver(bus, log_path, rate: float = 1.0):
    """Republish a recorded log at `rate` × original pacing."""
    from .recorder import replay
    return replay(bus, log_path, rate=rate)


class ExpressionScript:
    """Scripted stand-in for a camera-based expression recognizer.

    `timeline` is a list of (t_s, expression) switch points; the current
    expression is republished at `rate_hz` so consumers treating it as a
    live stream see it as fresh.
    """

    def __init__(self, bus, human_id: str,
                 timeline: list[tuple[float, str]],
                 rate_hz: float = 2.0, confidence: float = 0.9):
        if not timeline:
            raise InvalidConfig("timeline must have at least one entry")
        self.human_id = human_id
        self.timeline = sorted(((float(t), e) for t, e in timeline),
                               key=lambda p: p[0])
        self.confidence = confidence
        self.topic = expression_topic(human_id)
        self.bus = bus
        self.node = bus.create_node(f"expression_script_{human_id}")
        self._start_ns = bus.runtime.now_ns()
        self._task = bus.runtime.schedule_periodic(
            int(_NS / rate_hz), self._tick)

    def _current(self, rel_s: float) -> str | None:
        current = None
        for t, expr in self.timeline:
            if t <= rel_s:
                current = expr
            else:
                break
        return current

    def _tick(self) -> None:
        rel_s = (self.bus.runtime.now_ns() - self._start_ns) / 1e9
        expr = self._current(rel_s)
        if expr is None:
            return
        self.node.publish(self.topic, ExpressionEvent(
            human_id=self.human_id, expression=expr,
            confidence=self.confidence))

    def stop(self) -> None:
        self._task.cancel()
        self.node.close()
