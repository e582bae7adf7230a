"""Broker semantics: FIFO, exactly-once, patterns, parameters, drops."""

import threading

import pytest

from physiobus.bus import NOT_SET, QUEUE_SOFT_LIMIT, Broker, TopicPattern
from physiobus.errors import (
    DuplicateNodeName,
    InvalidPattern,
    InvalidTopic,
    UnknownNode,
)
from physiobus.messages import BeatTruth, DeviceFeature
from physiobus.runtime import SimRuntime

RAW = "/humans/physiological/p1/ecg/h10/raw"
FEATURES = "/humans/physiological/p1/ecg/h10/features"
OTHER_HUMAN = "/humans/physiological/p2/ecg/h10/raw"


@pytest.fixture
def broker():
    return Broker(SimRuntime())


def test_create_node_and_duplicate(broker):
    broker.create_node("ecg_driver_p1", {"sampling_frequency_hz": 250.0})
    with pytest.raises(DuplicateNodeName):
        broker.create_node("ecg_driver_p1")


def test_create_node_empty_parameters(broker):
    broker.create_node("bare")
    assert broker.get_parameters("bare", ["anything"]) == [
        ("anything", NOT_SET)]


def test_exact_subscription_receives_once_with_seq_zero(broker):
    node = broker.create_node("pub")
    got = []
    sub_node = broker.create_node("subn")
    sub_node.subscribe(RAW, got.append)
    node.publish(RAW, BeatTruth(beat_time_ns=1))
    assert len(got) == 1
    assert got[0].topic == RAW
    assert got[0].message.header.seq == 0
    assert got[0].message.header.source == "pub"
    assert got[0].publisher == "pub"
    assert got[0].recv_time_ns == broker.clock.now_ns()


def test_two_subscribers_both_receive(broker):
    node = broker.create_node("pub")
    a, b = [], []
    broker.create_node("s1").subscribe(RAW, a.append)
    broker.create_node("s2").subscribe(RAW, b.append)
    node.publish(RAW, BeatTruth())
    assert len(a) == len(b) == 1


def test_seq_contiguous_per_stream(broker):
    node = broker.create_node("pub")
    got = []
    broker.create_node("s").subscribe(RAW, got.append)
    for _ in range(3):
        node.publish(RAW, BeatTruth())
    assert [d.message.header.seq for d in got] == [0, 1, 2]


def test_seq_streams_independent_per_topic_and_publisher(broker):
    node_a = broker.create_node("a")
    node_b = broker.create_node("b")
    got = []
    broker.create_node("s").subscribe_many(
        ["/humans/physiological/p1/**"], got.append)
    node_a.publish(RAW, BeatTruth())
    node_a.publish(FEATURES, BeatTruth())
    node_a.publish(RAW, BeatTruth())
    node_b.publish(RAW, BeatTruth())
    seqs = [(d.publisher, d.topic, d.message.header.seq) for d in got]
    assert seqs == [("a", RAW, 0), ("a", FEATURES, 0), ("a", RAW, 1),
                    ("b", RAW, 0)]


def test_prefix_pattern_matches_under_human(broker):
    node = broker.create_node("pub")
    got = []
    broker.create_node("s").subscribe("/humans/physiological/p1/**",
                                      got.append)
    node.publish(RAW, BeatTruth())
    node.publish(FEATURES, BeatTruth())
    node.publish(OTHER_HUMAN, BeatTruth())
    assert [d.topic for d in got] == [RAW, FEATURES]


def test_pattern_without_leading_slash_rejected(broker):
    with pytest.raises(InvalidPattern):
        broker.create_node("s").subscribe("humans/**", lambda d: None)


def test_match_all_pattern(broker):
    node = broker.create_node("pub")
    got = []
    broker.create_node("s").subscribe("/**", got.append)
    node.publish(RAW, BeatTruth())
    node.publish("/experiment/events", DeviceFeature(name="mark", value=1.0))
    assert len(got) == 2


def test_pattern_soundness_on_pairs():
    cases = [
        ("/humans/physiological/p1/ecg/h10/raw", RAW, True),
        ("/humans/physiological/p1/ecg/h10/raw", FEATURES, False),
        ("/humans/physiological/p1/**", RAW, True),
        ("/humans/physiological/p1/**", OTHER_HUMAN, False),
        ("/humans/physiological/**", OTHER_HUMAN, True),
        ("/humans/**", "/humans/expressions/p1", True),
        ("/**", "/experiment/events", True),
        ("/experiment/events", "/experiment/events", True),
        ("/humans/physiological/p1/ecg/**", FEATURES, True),
        # prefix pattern matches strictly under the prefix, not the prefix
        ("/humans/physiological/p1/ecg/h10/raw/**", RAW, False),
    ]
    for raw_pattern, topic, expected in cases:
        assert TopicPattern.parse(raw_pattern).matches(topic) is expected, \
            (raw_pattern, topic)


def test_invalid_topic_publish_rejected(broker):
    node = broker.create_node("pub")
    with pytest.raises(InvalidTopic):
        node.publish("/foo/bar", BeatTruth())
    with pytest.raises(InvalidTopic):
        node.publish("/humans/physiological/p1/ecg/h10/bogus", BeatTruth())


def test_invalid_message_publish_raises_encoding_error(broker):
    from physiobus.errors import EncodingError
    from physiobus.messages import PhysioRaw, PhysioRawChannel
    node = broker.create_node("pub")
    got = []
    broker.create_node("s").subscribe(RAW, got.append)
    with pytest.raises(EncodingError):
        node.publish(RAW, PhysioRaw(
            channels=(PhysioRawChannel("c", (float("nan"),)),)))
    assert got == []  # nothing delivered, nothing recorded
    assert broker.list_topics() == []
    # the failed publish did not burn a sequence number
    sent = node.publish(RAW, PhysioRaw(
        channels=(PhysioRawChannel("c", (1.0,)),)))
    assert sent.header.seq == 0


def test_whitelisted_namespaces_accepted(broker):
    node = broker.create_node("pub")
    node.publish("/experiment/events", DeviceFeature(name="mark", value=1.0))
    from physiobus.messages import ExpressionEvent
    node.publish("/humans/expressions/p1",
                 ExpressionEvent(human_id="p1", expression="happy",
                                 confidence=0.9))


def test_list_topics_empty_then_sorted(broker):
    assert broker.list_topics() == []
    node = broker.create_node("pub")
    node.publish(FEATURES, BeatTruth())
    assert len(broker.list_topics()) == 1
    node.publish(RAW, BeatTruth())
    entries = broker.list_topics()
    assert [e.topic for e in entries] == sorted([RAW, FEATURES])
    assert all(e.publisher == "pub" for e in entries)


def test_get_parameters_order_and_not_set(broker):
    broker.create_node("ecg_driver_p1", {"sampling_frequency_hz": 250.0,
                                         "unit": "mV"})
    reply = broker.get_parameters("ecg_driver_p1",
                                  ["unit", "missing", "sampling_frequency_hz"])
    assert reply == [("unit", "mV"), ("missing", NOT_SET),
                     ("sampling_frequency_hz", 250.0)]


def test_get_parameters_unknown_node(broker):
    with pytest.raises(UnknownNode):
        broker.get_parameters("nobody", ["x"])


def test_exactly_once_with_overlapping_patterns_one_subscription(broker):
    node = broker.create_node("pub")
    got = []
    broker.create_node("s").subscribe_many(
        [RAW, "/humans/physiological/p1/**", "/**"], got.append)
    node.publish(RAW, BeatTruth())
    assert len(got) == 1


def test_unsubscribe_stops_delivery(broker):
    node = broker.create_node("pub")
    got = []
    sub = broker.create_node("s").subscribe(RAW, got.append)
    node.publish(RAW, BeatTruth())
    sub.unsubscribe()
    node.publish(RAW, BeatTruth())
    assert len(got) == 1


def test_node_close_frees_name(broker):
    node = broker.create_node("reusable")
    node.close()
    broker.create_node("reusable")  # no DuplicateNodeName


def test_callback_exception_does_not_break_delivery(broker):
    node = broker.create_node("pub")
    got = []

    def bad(delivery):
        got.append(delivery)
        raise RuntimeError("boom")

    broker.create_node("s").subscribe(RAW, bad)
    node.publish(RAW, BeatTruth())
    node.publish(RAW, BeatTruth())
    assert len(got) == 2


def test_reentrant_publish_from_callback(broker):
    node = broker.create_node("pub")
    seen = []

    def forward(delivery):
        seen.append(delivery.topic)
        if delivery.topic == RAW:
            node.publish(FEATURES, BeatTruth())

    broker.create_node("s").subscribe_many(
        ["/humans/physiological/p1/**"], forward)
    node.publish(RAW, BeatTruth())
    assert seen == [RAW, FEATURES]


def test_queue_soft_limit_drops_oldest_and_counts(broker):
    node = broker.create_node("pub")
    entered = threading.Event()
    release = threading.Event()
    delivered = []

    def slow(delivery):
        if not delivered:
            entered.set()
            release.wait(timeout=10)
        delivered.append(delivery.message.beat_time_ns)

    broker.create_node("s").subscribe(RAW, slow)

    # occupy the drain loop in a side thread, then flood from this thread
    blocker = threading.Thread(
        target=lambda: node.publish(RAW, BeatTruth(beat_time_ns=0)))
    blocker.start()
    assert entered.wait(timeout=10)
    extra = 5
    for i in range(1, QUEUE_SOFT_LIMIT + extra + 1):
        node.publish(RAW, BeatTruth(beat_time_ns=i))
    release.set()
    blocker.join(timeout=10)
    assert len(delivered) == 1 + QUEUE_SOFT_LIMIT
    # the oldest of the flood were dropped: delivery resumes at extra+1
    assert delivered[1] == extra + 1
    entry = [e for e in broker.list_topics() if e.topic == RAW][0]
    assert entry.dropped_count == extra
    assert entry.message_count == QUEUE_SOFT_LIMIT + extra + 1
