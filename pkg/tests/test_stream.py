import socket
import threading

import numpy as np
import pytest

from dvdkit.core import CompressionRate
from dvdkit.errors import TransportClosed
from dvdkit.transport import (
    FeatureFrame,
    FeatureReceiver,
    FeatureSender,
    encode_frame,
    feature_stream_recv,
    feature_stream_send,
)

S = CompressionRate.SIXTEENTH


def frame(rid, idx, count, seed=0, dim=2):
    p = np.random.default_rng(seed).integers(0, 2**16, 64 * dim, dtype=np.uint16)
    return FeatureFrame(rid, idx, count, S, 64, dim, p)


@pytest.fixture
def tcp_pair():
    lst = socket.create_server(("127.0.0.1", 0))
    a = socket.create_connection(lst.getsockname())
    b, _ = lst.accept()
    lst.close()
    yield a, b
    a.close()
    b.close()


def _send_async(sock, frames, **kw):
    t = threading.Thread(target=feature_stream_send, args=(sock, frames), kwargs=kw)
    t.start()
    return t


def test_three_tiles_arrive_complete(tcp_pair):
    a, b = tcp_pair
    t = _send_async(a, [frame(9, i, 3, i) for i in range(3)])
    rx = FeatureReceiver(b)
    got = list(rx)
    t.join()
    assert {f.tile_index for f in got} == {0, 1, 2}
    assert all(f.tile_count == 3 for f in got)
    assert rx.is_complete(9) and rx.incomplete == []


def test_empty_stream_terminates(tcp_pair):
    a, b = tcp_pair
    a.shutdown(socket.SHUT_WR)
    assert list(feature_stream_recv(b)) == []


def test_many_frames_bit_identical_and_ordered(tcp_pair):
    a, b = tcp_pair
    sent = [frame(k, 0, 1, seed=k, dim=1 + k % 3) for k in range(10_000)]
    t = _send_async(a, sent, window=16)
    got = list(feature_stream_recv(b))
    t.join()
    assert len(got) == len(sent)
    assert all(x == y for x, y in zip(got, sent))


def test_partial_request_reported(tcp_pair):
    a, b = tcp_pair
    t = _send_async(a, [frame(4, 0, 2)])
    rx = FeatureReceiver(b)
    assert len(list(rx)) == 1
    t.join()
    assert rx.incomplete == [4]


def test_strict_receiver_raises_on_partial(tcp_pair):
    a, b = tcp_pair
    t = _send_async(a, [frame(4, 1, 2)])
    with pytest.raises(TransportClosed):
        list(feature_stream_recv(b, strict=True))
    t.join()


def test_mid_frame_close_raises(tcp_pair):
    a, b = tcp_pair
    data = encode_frame(frame(1, 0, 1))
    a.sendall(data[: len(data) // 2])
    a.shutdown(socket.SHUT_WR)
    with pytest.raises(TransportClosed):
        list(feature_stream_recv(b))


def test_concurrent_senders_do_not_interleave(tcp_pair):
    a, b = tcp_pair
    sender = FeatureSender(a, window=4)
    per_thread = 300

    def work(base):
        for i in range(per_thread):
            sender.send(frame(base + i, 0, 1, seed=base + i))

    threads = [threading.Thread(target=work, args=(k * 1000,)) for k in range(4)]
    for t in threads:
        t.start()
    got = []
    rx = threading.Thread(target=lambda: got.extend(feature_stream_recv(b)))
    rx.start()
    for t in threads:
        t.join()
    sender.close()
    rx.join()
    assert sorted(f.request_id for f in got) == sorted(k * 1000 + i for k in range(4) for i in range(per_thread))
    for f in got:
        assert f == frame(f.request_id, 0, 1, seed=f.request_id)


def test_sender_error_surfaces(tcp_pair):
    a, b = tcp_pair
    b.close()
    sender = FeatureSender(a, window=2)
    with pytest.raises(TransportClosed):
        for i in range(10_000):
            sender.send(frame(i, 0, 1, dim=64))
    sender.abort()
