import pytest

from app.connectors.netsim import (BROADCAST, Message, MessageKind, NetworkConfig, NetworkSimulator,
                                   connected_components, neighbors)
from app.errors import UnknownRobotError

LINE = {1: (0.0, 0.0), 2: (0.0, 10.0), 3: (0.0, 25.0)}


def test_neighbors_within_range():
    cfg = NetworkConfig(10.0)
    assert neighbors(1, LINE, cfg) == {2}
    assert neighbors(2, LINE, cfg) == {1}
    assert neighbors(3, LINE, cfg) == set()


def test_range_bound_is_inclusive():
    assert neighbors(1, {1: (0.0, 0.0), 2: (6.0, 8.0)}, NetworkConfig(10.0)) == {2}


def test_unlimited_range_connects_everyone():
    cfg = NetworkConfig.from_value("unlimited")
    assert cfg.unlimited
    assert neighbors(3, LINE, cfg) == {1, 2}
    assert connected_components(LINE, cfg) == [[1, 2, 3]]


@pytest.mark.parametrize("value", [0, -5.0])
def test_non_positive_range_is_rejected(value):
    with pytest.raises(ValueError):
        NetworkConfig(value)


def test_unknown_robot():
    with pytest.raises(UnknownRobotError):
        neighbors(9, LINE, NetworkConfig(10.0))


def test_two_far_apart_pairs():
    positions = {0: (0.0, 0.0), 1: (5.0, 0.0), 2: (100.0, 0.0), 3: (100.0, 5.0)}
    assert connected_components(positions, NetworkConfig(10.0)) == [[0, 1], [2, 3]]


def test_single_robot_component():
    assert connected_components({7: (1.0, 1.0)}, NetworkConfig(10.0)) == [[7]]


def test_components_follow_chains():
    assert connected_components(LINE, NetworkConfig(15.0)) == [[1, 2, 3]]


def test_message_payload_is_checked():
    with pytest.raises(ValueError, match="cells"):
        Message(0, 1, MessageKind.SEND_ASSIGNMENT, {})
    Message(0, 1, MessageKind.REQUEST_ASSIGNMENT)


class TestNetworkSimulator:
    def test_unicast_in_range_is_delivered(self):
        net = NetworkSimulator(NetworkConfig(10.0))
        msg = Message(1, 2, MessageKind.SEND_ASSIGNMENT, {"cells": [4, 5]})
        assert net.send(msg, LINE) == 1
        assert net.receive(2) == [msg]
        assert net.receive(2) == []
        assert net.traffic() == {"messages_sent": 1, "messages_dropped": 0}

    def test_unicast_out_of_range_is_dropped(self):
        net = NetworkSimulator(NetworkConfig(10.0))
        assert net.send(Message(1, 3, MessageKind.REQUEST_ASSIGNMENT), LINE) == 0
        assert net.receive(3) == []
        assert net.traffic() == {"messages_sent": 1, "messages_dropped": 1}

    def test_broadcast_reaches_neighbors_only(self):
        net = NetworkSimulator(NetworkConfig(10.0))
        msg = Message(2, BROADCAST, MessageKind.REPARTITION_REQUEST, {"sim_time": 3.0})
        assert net.send(msg, LINE) == 1
        assert net.receive(1) == [msg]
        assert net.receive(3) == []
        assert net.messages_sent == 1

    def test_receive_by_kind_keeps_the_rest(self):
        net = NetworkSimulator(NetworkConfig())
        share = Message(1, 2, MessageKind.OBSERVATION_SHARE, {"observations": []})
        request = Message(1, 2, MessageKind.REQUEST_ASSIGNMENT)
        net.send(share, LINE)
        net.send(request, LINE)
        assert net.receive(2, MessageKind.REQUEST_ASSIGNMENT) == [request]
        assert net.receive(2) == [share]

    def test_unknown_recipient(self):
        net = NetworkSimulator(NetworkConfig())
        with pytest.raises(UnknownRobotError):
            net.send(Message(1, 42, MessageKind.REQUEST_ASSIGNMENT), LINE)
