"""Simulators and driver nodes: determinism, continuity, ground truth."""

import numpy as np
import pytest

from physiobus.bus import Broker
from physiobus.drivers import (
    EcgSimConfig,
    ExpressionScript,
    PpgSimConfig,
    run_ecg_driver,
    run_ppg_driver,
    synth_ecg,
    synth_ppg,
)
from physiobus.errors import InvalidConfig
from physiobus.runtime import SimRuntime
from physiobus.topics import parse_topic
from physiobus.waveforms import ECG_WAVES, SignalModel, gaussian_noise

NS = 1_000_000_000


def collect(broker, pattern):
    got = []
    broker.create_node(broker.unique_node_name("collector")).subscribe_many(
        [pattern], got.append)
    return got


def test_zero_jitter_60bpm_10s_gives_10_periodic_beats():
    cfg = EcgSimConfig(mean_hr_bpm=60.0, rr_jitter_sd_ms=0.0, rng_seed=1)
    samples, beats = synth_ecg(cfg, 10.0)
    assert len(samples) == 2500
    assert len(beats) == 10
    gaps = np.diff(beats)
    assert np.all(gaps == NS)


def test_same_seed_identical_output():
    cfg = EcgSimConfig(rng_seed=99)
    s1, b1 = synth_ecg(cfg, 5.0)
    s2, b2 = synth_ecg(EcgSimConfig(rng_seed=99), 5.0)
    assert np.array_equal(s1, s2)
    assert b1 == b2


def test_different_seed_differs():
    s1, _ = synth_ecg(EcgSimConfig(rng_seed=1), 5.0)
    s2, _ = synth_ecg(EcgSimConfig(rng_seed=2), 5.0)
    assert not np.array_equal(s1, s2)


def test_argmax_of_clean_beat_at_true_r_time():
    cfg = EcgSimConfig(mean_hr_bpm=60.0, rr_jitter_sd_ms=0.0,
                       noise_sd_mv=0.0, rng_seed=0)
    samples, beats = synth_ecg(cfg, 2.0)
    fs = cfg.sampling_frequency_hz
    first = beats[0]
    lo = int((first / NS - 0.3) * fs)
    hi = int((first / NS + 0.3) * fs)
    peak_ns = (lo + int(np.argmax(samples[lo:hi]))) * NS / fs
    assert abs(peak_ns - first) <= NS / fs


def test_counter_noise_is_block_split_invariant():
    one = gaussian_noise(42, 0, 1000, 0.02)
    parts = np.concatenate([gaussian_noise(42, i, i + 100, 0.02)
                            for i in range(0, 1000, 100)])
    assert np.array_equal(one, parts)
    assert abs(float(np.std(one)) - 0.02) < 0.005


def test_model_samples_block_split_invariant():
    model_a = SignalModel(ECG_WAVES, 250.0, 72.0, 30.0, 0.02, 7)
    model_b = SignalModel(ECG_WAVES, 250.0, 72.0, 30.0, 0.02, 7)
    whole = model_a.samples(0, 2500)
    split = np.concatenate([model_b.samples(i, i + 125)
                            for i in range(0, 2500, 125)])
    assert np.array_equal(whole, split)


def test_invalid_configs_rejected():
    with pytest.raises(InvalidConfig):
        synth_ecg(EcgSimConfig(sampling_frequency_hz=0.0), 1.0)
    with pytest.raises(InvalidConfig):
        synth_ecg(EcgSimConfig(mean_hr_bpm=10.0), 1.0)
    with pytest.raises(InvalidConfig):
        synth_ecg(EcgSimConfig(rr_jitter_sd_ms=-1.0), 1.0)


def test_ecg_driver_block_size_and_cadence():
    runtime = SimRuntime()
    broker = Broker(runtime)
    raws = collect(broker, "/humans/physiological/p1/ecg/h10/raw")
    driver = run_ecg_driver(broker, "p1", "h10", EcgSimConfig(rng_seed=3))
    runtime.run_for(1.0)
    driver.stop()
    assert 4 <= len(raws) <= 6  # 5 expected at 200 ms blocks
    for d in raws:
        assert len(d.message.channels) == 1
        assert d.message.channels[0].channel_name == "ecg_mv"
        assert len(d.message.channels[0].samples) == 50


def test_driver_parameters_exposed():
    runtime = SimRuntime()
    broker = Broker(runtime)
    driver = run_ecg_driver(broker, "p1", "h10", EcgSimConfig())
    reply = broker.get_parameters("ecg_driver_p1_h10",
                                  ["unit", "sampling_frequency_hz", "range"])
    assert reply[0] == ("unit", "mV")
    assert reply[1] == ("sampling_frequency_hz", 250.0)
    driver.stop()


def test_block_continuity_matches_offline_synth():
    runtime = SimRuntime()
    broker = Broker(runtime)
    cfg = EcgSimConfig(rng_seed=11)
    raws = collect(broker, "/humans/physiological/p1/ecg/h10/raw")
    driver = run_ecg_driver(broker, "p1", "h10", cfg)
    runtime.run_for(2.0)
    driver.stop()
    streamed = np.concatenate([np.asarray(d.message.channels[0].samples)
                               for d in raws])
    offline, _ = synth_ecg(EcgSimConfig(rng_seed=11), 2.0)
    assert np.array_equal(streamed, offline[:len(streamed)])


def test_device_timestamp_offset_and_first_sample_rule():
    runtime = SimRuntime()
    broker = Broker(runtime)
    offset = 2_050_000_000
    cfg = EcgSimConfig(rng_seed=1, device_clock_offset_ns=offset)
    raws = collect(broker, "/humans/physiological/p1/ecg/h10/raw")
    start = runtime.now_ns()
    driver = run_ecg_driver(broker, "p1", "h10", cfg)
    runtime.run_for(1.0)
    driver.stop()
    for k, d in enumerate(raws):
        expected_first_sample = start + k * 200_000_000
        assert d.message.device_timestamp_ns == expected_first_sample + offset


def test_truth_count_matches_template_centers_in_range():
    runtime = SimRuntime()
    broker = Broker(runtime)
    cfg = EcgSimConfig(mean_hr_bpm=72.0, rr_jitter_sd_ms=30.0, rng_seed=5)
    raws = collect(broker, "/humans/physiological/p1/ecg/h10/raw")
    truths = collect(broker, "/humans/physiological/p1/ecg/h10/truth")
    driver = run_ecg_driver(broker, "p1", "h10", cfg)
    runtime.run_for(10.0)
    driver.stop()
    published_s = len(raws) * cfg.block_ms / 1000.0
    _, beats = synth_ecg(EcgSimConfig(mean_hr_bpm=72.0, rr_jitter_sd_ms=30.0,
                                      rng_seed=5), published_s)
    assert len(truths) == len(beats)


def test_ppg_device_features_disabled():
    runtime = SimRuntime()
    broker = Broker(runtime)
    device = collect(broker, "/humans/physiological/p1/ppg/v1/device")
    driver = run_ppg_driver(broker, "p1", "v1",
                            PpgSimConfig(report_device_features=False,
                                         rng_seed=2))
    runtime.run_for(5.0)
    driver.stop()
    assert device == []


def test_ppg_device_features_values_and_topic():
    runtime = SimRuntime()
    broker = Broker(runtime)
    device = collect(broker, "/humans/physiological/p1/ppg/v1/device")
    driver = run_ppg_driver(broker, "p1", "v1",
                            PpgSimConfig(mean_hr_bpm=72.0,
                                         rr_jitter_sd_ms=0.0, rng_seed=2))
    runtime.run_for(10.0)
    driver.stop()
    hr_values = [d.message.value for d in device
                 if d.message.name == "heart_rate_bpm"]
    rr_values = [d.message.value for d in device if d.message.name == "rr_ms"]
    assert hr_values and rr_values
    assert all(abs(v - 72.0) <= 2.0 for v in hr_values)
    assert all(abs(v - 60000.0 / 72.0) <= 5.0 for v in rr_values)
    parsed = parse_topic(device[0].topic)
    assert parsed.field == "device"
    assert parsed.sensor_type == "ppg"


def test_ppg_synth_has_systolic_and_dicrotic():
    cfg = PpgSimConfig(mean_hr_bpm=60.0, rr_jitter_sd_ms=0.0,
                       noise_sd_mv=0.0, rng_seed=0)
    samples, beats = synth_ppg(cfg, 3.0)
    assert len(beats) == 3
    fs = cfg.sampling_frequency_hz
    i_beat = int(beats[0] / NS * fs)
    i_dicrotic = int((beats[0] / NS + 0.25) * fs)
    assert samples[i_beat] > 0.9
    assert 0.3 < samples[i_dicrotic] < samples[i_beat]


def test_replay_driver_republishes_byte_identical(tmp_path):
    from physiobus.recorder import record
    runtime = SimRuntime()
    broker = Broker(runtime)
    path = tmp_path / "short.s4h"
    session = record(broker, ["/humans/physiological/p1/**"], path)
    pub = broker.create_node("pub")
    originals = []
    for i in range(3):
        from physiobus.messages import BeatTruth, encode_envelope
        sent = pub.publish("/humans/physiological/p1/ecg/h10/truth",
                           BeatTruth(beat_time_ns=i))
        originals.append(encode_envelope(sent))
        runtime.run_for(0.05)
    session.stop()

    from physiobus.drivers import run_replay_driver
    runtime2 = SimRuntime()
    broker2 = Broker(runtime2)
    got = collect(broker2, "/humans/physiological/p1/ecg/h10/truth")
    handle = run_replay_driver(broker2, path, rate=1.0)
    runtime2.run_for(5.0)
    assert handle.done.is_set()
    assert [d.envelope for d in got] == originals


def test_expression_script_switches_on_schedule():
    runtime = SimRuntime()
    broker = Broker(runtime)
    got = collect(broker, "/humans/expressions/p1")
    script = ExpressionScript(broker, "p1",
                              [(0.0, "happy"), (5.0, "angry")], rate_hz=2.0)
    runtime.run_for(10.0)
    script.stop()
    expressions = [d.message.expression for d in got]
    assert "happy" in expressions and "angry" in expressions
    switch = expressions.index("angry")
    assert all(e == "happy" for e in expressions[:switch])
    assert all(e == "angry" for e in expressions[switch:])
    assert got[0].message.human_id == "p1"
