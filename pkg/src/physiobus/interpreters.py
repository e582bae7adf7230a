"""Interpreter nodes: raw sample streams in, derived feature streams out.

An interpreter subscribes to one sensor's ``.../raw`` topic, runs the
streaming beat detector, maintains a trailing RR window, and publishes a
feature message at a fixed rate. Messages are withheld (not zero-filled)
until at least two RR intervals exist, so consumers never see sentinel
values.

The sampling rate is taken from the driver node's parameters when
available (looked up through the topic registry) and otherwise inferred
from the device timestamps of the first two blocks, which also makes
replayed logs interpretable without the original driver node.

The PPG variant additionally watches the device-reported heart rate on
``.../device`` and tracks the discrepancy against its own estimate,
exposed as the read-only ``discrepancy_last_abs`` parameter snapshot.
"""

from __future__ import annotations

import logging
import threading
from collections import deque

import numpy as np

from . import hrv
from .bus import NOT_SET
from .detect import INTEGRATION_MS_ECG, INTEGRATION_MS_PPG, PeakDetector
from .errors import PhysioBusError
from .hrv import RrWindow, compute_hr, compute_pnn50, compute_rmssd, \
    compute_sdnn, feature_discrepancy
from .messages import EcgFeatures, PpgFeatures
from .timesync import OffsetEstimator
from .topics import sensor_topic

log = logging.getLogger(__name__)

_NS = 1_000_000_000


class FeatureInterpreter:
    """Common machinery for ECG/PPG interpreters."""

    sensor_type = "ecg"
    features_cls = EcgFeatures
    integration_ms = INTEGRATION_MS_ECG

    def __init__(self, bus, human_id: str, sensor_id: str,
                 window_s: float = 60.0, publish_hz: float = 1.0,
                 fs_hz: float | None = None):
        self.bus = bus
        self.human_id = human_id
        self.sensor_id = sensor_id
        self.window_s = float(window_s)
        self.raw_topic = sensor_topic(human_id, self.sensor_type, sensor_id,
                                      "raw")
        self.features_topic = sensor_topic(human_id, self.sensor_type,
                                           sensor_id, "features")
        self.node = bus.create_node(
            f"{self.sensor_type}_interpreter_{human_id}_{sensor_id}",
            {"window_s": self.window_s, "publish_hz": float(publish_hz)})
        self._lock = threading.Lock()
        self._fs = float(fs_hz) if fs_hz else None
        self._fs_probed = False
        self._pending_blocks: list[tuple[int, np.ndarray]] = []
        self._detector: PeakDetector | None = None
        self.offset_estimator = OffsetEstimator()
        self.rr_window = RrWindow(window_s=self.window_s)
        self._peak_times: deque[int] = deque()
        self._last_peak_ns: int | None = None
        self._last_device_ts = 0
        self._sub = self.node.subscribe(self.raw_topic, self._on_raw)
        self._task = bus.runtime.schedule_periodic(
            int(_NS / publish_hz), self._tick)

    # -- sampling-rate resolution ----------------------------------------

    def _probe_fs_from_parameters(self) -> float | None:
        try:
            for entry in self.bus.list_topics():
                if entry.topic == self.raw_topic:
                    reply = self.bus.get_parameters(
                        entry.publisher, ["sampling_frequency_hz"])
                    value = reply[0][1]
                    if value is not NOT_SET:
                        return float(value)
        except PhysioBusError:
            pass
        return None

    def _resolve_fs(self, device_ts: int, samples: np.ndarray) -> bool:
        """Returns True once the detector exists; buffers blocks until then."""
        if self._detector is not None:
            return True
        if self._fs is None and not self._fs_probed:
            self._fs_probed = True
            self._fs = self._probe_fs_from_parameters()
        if self._fs is None:
            self._pending_blocks.append((device_ts, samples))
            if len(self._pending_blocks) < 2:
                return False
            (ts0, s0), (ts1, _) = self._pending_blocks[0], self._pending_blocks[1]
            if ts1 <= ts0:
                log.warning("%s: cannot infer sampling rate, dropping block",
                            self.node.name)
                self._pending_blocks.pop(0)
                return False
            self._fs = len(s0) * _NS / (ts1 - ts0)
        self._detector = PeakDetector(self._fs,
                                      integration_ms=self.integration_ms)
        if self._pending_blocks:
            pending, self._pending_blocks = self._pending_blocks, []
            for ts, s in pending:
                self._process_block(ts, s)
        return True

    # -- stream processing -------------------------------------------------

    def _on_raw(self, delivery) -> None:
        msg = delivery.message
        if not msg.channels:
            return
        with self._lock:
            self.offset_estimator.observe(msg.device_timestamp_ns,
                                          delivery.recv_time_ns)
            samples = np.asarray(msg.channels[0].samples, dtype=float)
            self._last_device_ts = msg.device_timestamp_ns
            if not self._resolve_fs(msg.device_timestamp_ns, samples):
                return
            self._process_block(msg.device_timestamp_ns, samples)

    def _process_block(self, device_ts: int, samples: np.ndarray) -> None:
        t0 = self.offset_estimator.to_bus_time(device_ts)
        for peak_t in self._detector.feed(samples, t0):
            if self._last_peak_ns is not None:
                rr_ms = (peak_t - self._last_peak_ns) / 1e6
                self.rr_window.add(peak_t, rr_ms)
            self._last_peak_ns = peak_t
            self._peak_times.append(peak_t)

    # -- feature publication -----------------------------------------------

    def _tick(self) -> None:
        now = self.bus.runtime.now_ns()
        with self._lock:
            horizon = now - int(self.window_s * 1e9)
            while self._peak_times and self._peak_times[0] < horizon:
                self._peak_times.popleft()
            values = self.rr_window.values(now)
            if len(values) < 2:
                return
            msg = self.features_cls(
                device_timestamp_ns=self._last_device_ts,
                rr_ms=values[-1],
                peak_count=len(self._peak_times),
                sdnn_ms=compute_sdnn(values),
                rmssd_ms=compute_rmssd(values),
                pnn50_pct=compute_pnn50(values),
                heart_rate_bpm=compute_hr(values),
                window_s=self.window_s)
        self.node.publish(self.features_topic, msg)
        self._after_publish(msg)

    def _after_publish(self, msg) -> None:
        pass

    def stop(self) -> None:
        self._task.cancel()
        self.node.close()


class EcgInterpreter(FeatureInterpreter):
    sensor_type = "ecg"
    features_cls = EcgFeatures
    integration_ms = INTEGRATION_MS_ECG


class PpgInterpreter(FeatureInterpreter):
    """PPG interpreter with device-vs-computed feature comparison."""

    sensor_type = "ppg"
    features_cls = PpgFeatures
    integration_ms = INTEGRATION_MS_PPG

    def __init__(self, bus, human_id, sensor_id, window_s: float = 60.0,
                 publish_hz: float = 1.0, fs_hz: float | None = None):
        super().__init__(bus, human_id, sensor_id, window_s=window_s,
                         publish_hz=publish_hz, fs_hz=fs_hz)
        self.device_topic = sensor_topic(human_id, self.sensor_type,
                                         sensor_id, "device")
        self._device_hr: float | None = None
        self.last_discrepancy: hrv.Discrepancy | None = None
        self._device_sub = self.node.subscribe(self.device_topic,
                                               self._on_device)

    def _on_device(self, delivery) -> None:
        msg = delivery.message
        if msg.name == "heart_rate_bpm":
            with self._lock:
                self._device_hr = msg.value

    def _after_publish(self, msg) -> None:
        with self._lock:
            device_hr = self._device_hr
        if device_hr is None:
            return
        disc = feature_discrepancy(device_hr, msg.heart_rate_bpm)
        self.last_discrepancy = disc
        self.node.set_parameter_snapshot("discrepancy_last_abs", disc.abs_diff)
        log.debug("%s: device HR %.2f vs computed %.2f (|d|=%.3f)",
                  self.node.name, device_hr, msg.heart_rate_bpm, disc.abs_diff)


def run_ecg_interpreter(bus, human_id: str, sensor_id: str,
                        window_s: float = 60.0, publish_hz: float = 1.0,
                        fs_hz: float | None = None) -> EcgInterpreter:
    return EcgInterpreter(bus, human_id, sensor_id, window_s=window_s,
                          publish_hz=publish_hz, fs_hz=fs_hz)


def run_ppg_interpreter(bus, human_id: str, sensor_id: str,
                        window_s: float = 60.0, publish_hz: float = 1.0,
                        fs_hz: float | None = None) -> PpgInterpreter:
    return PpgInterpreter(bus, human_id, sensor_id, window_s=window_s,
                          publish_hz=publish_hz, fs_hz=fs_hz)
