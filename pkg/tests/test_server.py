import numpy as np
import pytest

from bufsgd import (
    BufferBank,
    GradientMessage,
    InvalidParameterError,
    Server,
    aggregator_by_name,
    constant_eta,
    run_asgd_reference,
    step_decay_eta,
)


def make_server(d=1, b=1, aggregator="mean", q=0, eta=0.1, w0=None, tau_max=10):
    return Server(
        np.zeros(d) if w0 is None else np.asarray(w0, dtype=float),
        BufferBank(b, d),
        aggregator_by_name(aggregator, q),
        constant_eta(eta),
        tau_max=tau_max,
    )


def msg(sender, g, version=0, tampered=False):
    return GradientMessage(sender, np.asarray(g, dtype=float), version, tampered=tampered)


class TestOnGradient:
    def test_single_buffer_steps_every_message(self):
        server = make_server(b=1)
        for k in range(5):
            reply = server.on_gradient(msg(k % 3, [1.0]))
            assert server.t == k + 1
            assert reply.version == k + 1

    def test_same_buffer_arrivals_do_not_step(self):
        server = make_server(b=2)
        for sender in (0, 2, 4):   # all route to buffer 0
            reply = server.on_gradient(msg(sender, [1.0]))
        assert server.t == 0
        assert reply.version == 0
        assert server.bank.slot(0).n == 3
        assert server.bank.slot(1).n == 0

    def test_step_fires_when_bank_completes(self):
        server = make_server(b=2, eta=1.0)
        server.on_gradient(msg(0, [1.0]))
        assert server.t == 0
        reply = server.on_gradient(msg(1, [3.0]))
        # G = mean([g0, g1]) = 2, so w = 0 - 1.0 * 2
        assert server.t == 1
        assert reply.version == 1
        np.testing.assert_allclose(reply.w, [-2.0])

    def test_nonfinite_payload_tolerated_by_median(self):
        server = make_server(d=2, b=3, aggregator="median", eta=1.0)
        server.on_gradient(msg(0, [1.0, 1.0]))
        server.on_gradient(msg(1, [2.0, 2.0]))
        server.on_gradient(msg(2, [np.nan, np.inf]))
        assert server.t == 1
        assert np.isfinite(server.w).all()
        np.testing.assert_allclose(server.w, [-2.0, -2.0])


class TestSgdStep:
    def test_one_step_arithmetic(self):
        server = make_server(w0=[1.0], eta=0.1)
        server.on_gradient(msg(0, [2.0]))
        np.testing.assert_allclose(server.w, [0.8])

    def test_zero_aggregate_keeps_parameters(self):
        server = make_server(w0=[5.0])
        server.on_gradient(msg(0, [0.0]))
        np.testing.assert_array_equal(server.w, [5.0])
        assert server.t == 1

    def test_step_requires_full_bank(self):
        server = make_server(b=2)
        server.on_gradient(msg(0, [1.0]))
        with pytest.raises(RuntimeError):
            server.sgd_step()

    def test_median_step_bracketed_by_honest_buffers(self):
        # one adversarial buffer out of three: each coordinate of the update
        # stays within the range of the two honest buffer values
        rng = np.random.default_rng(0)
        for _ in range(25):
            honest = rng.normal(size=(2, 4))
            server = make_server(d=4, b=3, aggregator="median", eta=1.0)
            server.on_gradient(msg(0, honest[0]))
            server.on_gradient(msg(1, honest[1]))
            server.on_gradient(msg(2, rng.normal(scale=100.0, size=4)))
            step = -server.w  # w0 = 0, eta = 1, so w = -G
            lo = honest.min(axis=0)
            hi = honest.max(axis=0)
            assert ((lo - 1e-12 <= step) & (step <= hi + 1e-12)).all()

    def test_step_event_emitted(self):
        events = []
        server = Server(np.zeros(1), BufferBank(1, 1), aggregator_by_name("mean"),
                        constant_eta(0.5), tau_max=2, on_step=events.append)
        server.on_gradient(GradientMessage(0, np.array([2.0]), 0, arrive_time=1.5))
        server.on_gradient(GradientMessage(1, np.array([2.0]), 0, arrive_time=2.5, tampered=True))
        assert len(events) == 2
        ev = events[1]
        assert ev.t == 2
        assert ev.time == 2.5
        assert ev.eta == 0.5
        assert ev.agg_norm_sq == pytest.approx(4.0)
        assert ev.byz_msgs == 1 and ev.byz_senders == 1
        assert ev.taus == [1]  # second message was computed on version 0

    def test_stale_messages_counted_byzantine(self):
        events = []
        server = Server(np.zeros(1), BufferBank(1, 1), aggregator_by_name("mean"),
                        constant_eta(0.1), tau_max=0, on_step=events.append)
        server.on_gradient(msg(0, [1.0], version=0))
        server.on_gradient(msg(0, [1.0], version=0))  # tau = 1 > tau_max = 0
        assert events[0].byz_msgs == 0
        assert events[1].byz_msgs == 1


class TestEtaSchedules:
    def test_step_decay_breakpoints(self):
        eta = step_decay_eta(1.0, 100)
        assert eta(0) == 1.0
        assert eta(49) == 1.0
        assert eta(50) == pytest.approx(0.1)
        assert eta(74) == pytest.approx(0.1)
        assert eta(75) == pytest.approx(0.01)
        assert eta(99) == pytest.approx(0.01)


class TestAsgdReference:
    def test_rejects_multiple_buffers(self):
        with pytest.raises(InvalidParameterError):
            run_asgd_reference(np.zeros(1), constant_eta(0.1), [], b=2)
        with pytest.raises(InvalidParameterError):
            run_asgd_reference(np.zeros(1), constant_eta(0.1), [], aggregator="median")

    def test_empty_stream(self):
        traj = run_asgd_reference(np.array([3.0]), constant_eta(0.1), [])
        np.testing.assert_array_equal(traj, [[3.0]])

    def test_two_message_arithmetic(self):
        msgs = [msg(0, [1.0]), msg(1, [2.0])]
        traj = run_asgd_reference(np.array([1.0]), constant_eta(0.5), msgs)
        np.testing.assert_allclose(traj, [[1.0], [0.5], [-0.5]])

    def test_matches_single_buffer_server_bitwise(self):
        rng = np.random.default_rng(1)
        msgs = [msg(int(rng.integers(0, 4)), rng.normal(size=3)) for _ in range(100)]
        eta = constant_eta(0.05)
        server = make_server(d=3, eta=0.05)
        ws = []
        for m in msgs:
            server.on_gradient(m)
            ws.append(server.w.copy())
        ref = run_asgd_reference(np.zeros(3), eta, msgs)
        assert np.array_equal(np.array(ws), ref[1:])
