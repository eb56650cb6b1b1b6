import math
import socket
import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgarl.envs import GridWorld
from hgarl.group import (Bus, ComboState, KnowledgeMessage, Mailbox, PolicySet, adoption_source, decode_frame,
                         default_phi, encode_frame, maybe_adopt, recv_frame, rule_combo, rule_pa, rule_pm,
                         send_frame)
from hgarl.group.bus import Member
from hgarl.group.messages import UNSCORED_BITS
from hgarl.group.rules import JOINT
from hgarl.learners import LearnerConfig, make_learner
from hgarl.nn import SOFTMAX, VALUE, FormatError, MlpModel, forward, serialize
from oracles import adoption_oracle, exhaustive_argmax


def fixed_policy(probs, obs_dim=4):
    m = MlpModel([obs_dim, len(probs)], SOFTMAX)
    m.biases[-1][...] = np.log(probs)
    return m


def fixed_value(v, obs_dim=4, outputs=1):
    m = MlpModel([obs_dim, outputs], VALUE)
    m.biases[-1][...] = v
    return m


def policy_set(probs_list, ar=None, owner=0):
    ar = ar or [None] * len(probs_list)
    ps = PolicySet(owner, fixed_policy(probs_list[owner]), fixed_value(0.0))
    ps.owner.ar = ar[owner]
    for i, p in enumerate(probs_list):
        if i != owner:
            pol, val = fixed_policy(p), fixed_value(float(i))
            ps.peers[i] = Member(i, pol, val, ar[i], 0, serialize(pol), serialize(val))
    return ps


OBS = np.array([1.0, 0.0, 0.0, 0.0])


# ----- PA / PM

def test_pa_examples():
    assert rule_pa(policy_set([[1 / 3] * 3, [1 / 3] * 3]), OBS).action == 0
    d = rule_pa(policy_set([[0.6, 0.4], [0.1, 0.9]]), OBS)
    assert d.action == 1 and d.source == JOINT
    assert rule_pa(policy_set([[0.2, 0.7, 0.1]]), OBS).action == 1


def test_pm_examples():
    assert rule_pm(policy_set([[0.5, 0.5], [0.9, 0.1]]), OBS).action == 0
    assert rule_pm(policy_set([[0.25] * 4, [0.25] * 4]), OBS).action == 0
    # a near one-hot member dominates the product
    assert rule_pm(policy_set([[0.4, 0.6], [1 - 1e-9, 1e-9]]), OBS).action == 0


def test_pa_pm_match_exhaustive_oracles():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m, a = int(rng.integers(1, 5)), int(rng.integers(2, 6))
        probs = {i: rng.dirichlet(np.ones(a)) for i in range(m)}
        assert rule_pa(None, None, probs).action == exhaustive_argmax(
            [sum(probs[i][x] for i in probs) for x in range(a)])
        products = [math.prod(probs[i][x] for i in probs) for x in range(a)]
        assert rule_pm(None, None, probs).action == exhaustive_argmax(products)


def test_rescaling_invariance():
    rng = np.random.default_rng(1)
    for _ in range(200):
        probs = {i: rng.dirichlet(np.ones(4)) for i in range(3)}
        c = float(rng.uniform(0.1, 10))
        scaled = {i: p * c for i, p in probs.items()}
        assert rule_pa(None, None, probs).action == rule_pa(None, None, scaled).action
        assert rule_pm(None, None, probs).action == rule_pm(None, None, scaled).action


# ----- Combo

def combo_env():
    env = GridWorld(size=2)
    env.reset()
    return env


def test_combo_adopts_higher_scored_confident_peer():
    peaked = [0.9, 0.1 / 3, 0.1 / 3, 0.1 / 3]
    ps = policy_set([[0.25] * 4, [0.1, 0.6, 0.2, 0.1], peaked], ar=[10.0, 5.0, 20.0])
    env = combo_env()
    state = ComboState(default_phi(4, 0.8))
    d = rule_combo(0, ps, env, OBS, state, own_action=3)
    assert d.candidates == [2]
    assert d.nll == pytest.approx(-math.log(0.9), abs=1e-6)
    assert state.phi == pytest.approx(0.8 * math.log(4))
    assert d.action == 0 and d.source == 2
    assert state.counts == Counter({2: 1})
    assert env.real_steps == 0 and d.lookaheads == 1


def test_combo_keeps_own_action_when_no_better_peer():
    ps = policy_set([[0.25] * 4, [0.9, 0.05, 0.03, 0.02]], ar=[10.0, 10.0])
    state = ComboState(default_phi(4))
    d = rule_combo(0, ps, combo_env(), OBS, state, own_action=2)
    assert d.action == 2 and d.source == 0 and d.candidates == []
    assert state.counts[0] == 1


def test_combo_uniform_peer_fails_threshold():
    ps = policy_set([[0.1, 0.2, 0.3, 0.4], [0.25] * 4], ar=[None, 1.0])
    state = ComboState(default_phi(4))
    d = rule_combo(0, ps, combo_env(), OBS, state, own_action=1)
    assert d.chosen_peer == 1 and d.nll >= state.phi
    assert d.action == 1 and d.source == 0


def test_combo_vacc_accumulates_and_ties_go_to_lowest_id():
    peaked = [0.97, 0.01, 0.01, 0.01]
    ps = policy_set([[0.25] * 4, peaked, peaked], ar=[0.0, 5.0, 6.0])
    ps.peers[2].value = fixed_value(1.0)
    ps.peers[1].value = fixed_value(1.0)
    state = ComboState(default_phi(4))
    env = combo_env()
    for step in range(3):
        d = rule_combo(0, ps, env, OBS, state, own_action=3)
        assert d.v_acc == {1: pytest.approx(step + 1.0), 2: pytest.approx(step + 1.0)}
        assert d.source == 1
    assert state.steps == 3
    state.reset()
    assert state.v_acc == {} and state.steps == 0


def test_combo_skips_candidate_without_value_model():
    ps = policy_set([[0.25] * 4, [0.97, 0.01, 0.01, 0.01]], ar=[0.0, 5.0])
    ps.peers[1].value = None
    d = rule_combo(0, ps, combo_env(), OBS, ComboState(1.0), own_action=2)
    assert d.skipped == [1] and d.source == 0


def test_q_head_value_is_policy_weighted():
    pol = fixed_policy([0.5, 0.25, 0.25, 0.0 + 1e-30])
    q = fixed_value(0.0, outputs=4)
    q.biases[-1][...] = [4.0, 8.0, 0.0, 100.0]
    member = Member(1, pol, q, 1.0)
    assert member.value_at(OBS) == pytest.approx(4.0, abs=1e-5)


# ----- adoption

def test_adoption_examples():
    ar = {0: 1.0, 1: 5.0}
    assert adoption_source(0, {0: 8, 1: 12}, 20, ar)[0] == 1
    assert adoption_source(0, {0: 8, 1: 12}, 20, {0: 1.0, 1: 5.0, 2: 6.0})[0] is None
    assert adoption_source(0, {0: 11, 1: 9}, 20, ar)[0] is None
    assert adoption_source(0, {0: 10, 1: 10}, 20, ar)[0] is None  # tie for first rank
    assert adoption_source(0, {0: 2, 1: 3}, 5, ar)[0] == 1       # 3 >= 5/2
    assert adoption_source(0, {0: 1, 1: 2, 2: 2}, 5, {0: 0.0, 1: 3.0, 2: 1.0})[0] is None
    assert adoption_source(0, {0: 8, 1: 12}, 20, {0: 1.0, 1: None})[0] is None


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 4), st.integers(1, 30), st.data())
def test_adoption_matches_oracle(m, n, data):
    counts = Counter()
    for _ in range(n):
        counts[data.draw(st.integers(0, m - 1))] += 1
    ar = {i: data.draw(st.one_of(st.none(), st.integers(-3, 3).map(float))) for i in range(m)}
    assert sum(counts.values()) == n
    assert adoption_source(0, counts, n, ar)[0] == adoption_oracle(0, dict(counts), n, ar)


def test_maybe_adopt_copies_policy_bytes_and_relabels():
    from hgarl.envs import CartPole
    spec = CartPole().spec
    owner = make_learner(LearnerConfig.defaults("a2c"), spec, seed=1)
    peer = make_learner(LearnerConfig.defaults("acer"), spec, seed=2)
    ps = PolicySet(0, owner.policy, owner.value)
    ps.owner.ar = 3.0
    pol_b, val_b = peer.export_models()
    ps.absorb([KnowledgeMessage(1, pol_b, val_b, 9.0, 1, 100)])
    rng = np.random.default_rng(0)
    for _ in range(3):
        obs = rng.normal(size=4)
        a, dist, v = owner.act(obs)
        owner.record_step(obs, a, 1.0, obs, False, dist, v)
    report = maybe_adopt(0, Counter({1: 4, 0: 1}), ps, owner, batch_size=5)
    assert report.adopted and report.source == 1 and not report.took_value  # V vs Q head
    assert owner.export_models()[0] == pol_b
    expected = forward(peer.policy, np.array(owner.batch.obs)).probs
    assert np.allclose(owner.batch.arrays()["pi_old"], expected)


# ----- bus, policy set, frames

def msg(sender, counter, ar=1.0, dims=(4, 8, 2)):
    rng = np.random.default_rng(counter)
    pol = MlpModel.initialized(list(dims), SOFTMAX, rng)
    val = MlpModel.initialized(list(dims[:-1]) + [1], VALUE, rng)
    return KnowledgeMessage(sender, serialize(pol), serialize(val), ar, counter, counter * 10)


def test_mailbox_latest_wins():
    box = Mailbox()
    assert box.put(msg(1, 2))
    assert not box.put(msg(1, 1))
    assert box.put(msg(1, 3))
    box.put(msg(2, 1))
    out = box.drain()
    assert [(m.sender_id, m.update_counter) for m in out] == [(1, 3), (2, 1)]
    assert len(box) == 0


def test_bus_does_not_deliver_to_sender():
    bus = Bus([0, 1, 2])
    bus.publish(msg(1, 1))
    assert bus.drain(1) == [] and len(bus.drain(0)) == 1 and len(bus.drain(2)) == 1


def test_policy_set_rejects_mismatched_dims(caplog):
    owner = MlpModel([4, 8, 2], SOFTMAX)
    ps = PolicySet(0, owner, None)
    assert len(ps) == 1
    assert ps.absorb([msg(1, 1, dims=(4, 6, 2))]) == 0
    assert len(ps) == 1 and ps.rejected == 1
    assert "protocol error" in caplog.text
    assert ps.absorb([msg(1, 2), msg(1, 1)]) == 1
    assert ps[1].update_counter == 2


def test_frame_round_trip_and_unscored_sentinel():
    m = msg(3, 7, ar=None)
    frame = encode_frame(m)
    assert struct.unpack_from("<I", frame, 0)[0] == len(frame) - 4
    assert frame[4] == 0
    assert struct.unpack_from("<Q", frame, 5 + 2 + 8)[0] == UNSCORED_BITS
    assert decode_frame(frame) == m
    scored = msg(3, 8, ar=-2.5)
    assert decode_frame(encode_frame(scored)) == scored
    no_value = KnowledgeMessage(1, m.policy_model, None, 0.0, 1, 0)
    assert decode_frame(encode_frame(no_value)) == no_value


def test_frame_errors():
    frame = bytearray(encode_frame(msg(1, 1)))
    with pytest.raises(FormatError):
        decode_frame(bytes(frame[:-3]))
    frame[4] = 9
    with pytest.raises(FormatError):
        decode_frame(bytes(frame))
    with pytest.raises(ValueError):
        encode_frame(msg(1, 1, ar=float("nan")))


def test_frames_over_socketpair():
    a, b = socket.socketpair()
    try:
        sent = [msg(1, i, ar=None if i == 0 else float(i)) for i in range(3)]
        for m in sent:
            send_frame(a, m)
        a.shutdown(socket.SHUT_WR)
        got = []
        while (m := recv_frame(b)) is not None:
            got.append(m)
        assert got == sent
    finally:
        a.close()
        b.close()
