import pytest

from pdkit import ChallengePair, Level, Request, make_scheme
from pdkit.crypto import SeededRng
from pdkit.errors import ConfigError
from pdkit.game import (ADVERSARIES, BATTERY, Adversary, GameConfig, build_challenge,
                        estimate_advantage, make_adversary, run_trial)

SMALL = {
    "hidden_volume": {"num_blocks": 64, "block_size": 512},
    "hive": {"num_blocks": 64, "block_size": 256},
    "hive_b": {"num_blocks": 64, "block_size": 256},
    "pd_dm": {"num_blocks": 64, "block_size": 256},
    "pearl": {"num_erase_blocks": 16, "pages_per_block": 8},
    "leaky": {"num_blocks": 64, "block_size": 512},
}


def config(scheme="hidden_volume", **kw):
    return GameConfig(scheme, scheme_options=SMALL[scheme], **kw)


@pytest.mark.parametrize("kw", [{"trials": 0}, {"rounds": 0}, {"orientation": "side"},
                                {"epsilon": 0.0}, {"epsilon": 0.5}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        config(**kw)


def test_unknown_scheme_and_adversary():
    with pytest.raises(ConfigError):
        GameConfig("nope")
    with pytest.raises(ConfigError):
        make_adversary("nope")


def test_registry_contents():
    assert set(BATTERY) == {"random_guess", "free_space_diff", "trace_length", "addr_dist", "payload_entropy"}
    assert set(ADVERSARIES) == set(BATTERY) | {"marker"}


@pytest.mark.parametrize("scheme", sorted(SMALL))
def test_built_challenges_satisfy_the_rules(scheme):
    s = make_scheme(scheme, **SMALL[scheme])
    profile = s.profile()
    rng = SeededRng(1)
    for _ in range(200):
        s.check_rules(build_challenge(profile, rng))


def test_build_challenge_sizes_public_writes_from_phi():
    s = make_scheme("pd_dm", phi=2.5, **SMALL["pd_dm"])
    pair = build_challenge(s.profile(), SeededRng(0), k=3)
    assert pair.pat_hid.writes() == 3
    assert pair.pat_pub1.writes() == 8
    assert len(pair.pat_pub2) == 0


def test_same_seed_same_digest():
    adv = make_adversary("free_space_diff")
    a = estimate_advantage(config(rounds=2, trials=6, seed=5), adv)
    b = estimate_advantage(config(rounds=2, trials=6, seed=5), adv)
    c = estimate_advantage(config(rounds=2, trials=6, seed=6), adv)
    assert a.digest == b.digest and a.wins == b.wins
    assert a.digest != c.digest


def test_challenge_bit_is_balanced():
    bits = [SeededRng(t).child(1).bit() for t in range(2000)]
    assert abs(sum(bits) / len(bits) - 0.5) < 0.04


def test_random_guess_has_no_advantage():
    out = estimate_advantage(config(trials=300, seed=3), make_adversary("random_guess"))
    assert out.valid == 300
    assert out.advantage <= 0.1


def test_free_space_diff_breaks_multi_snapshot_hidden_volume():
    out = estimate_advantage(config(rounds=2, trials=40, seed=1), make_adversary("free_space_diff"))
    assert out.advantage >= 0.45


def test_marker_breaks_the_leaky_fixture():
    out = estimate_advantage(config("leaky", trials=30), make_adversary("marker"))
    assert out.win_rate == 1.0 and out.advantage == 0.5


class RuleBreaker(Adversary):
    """Every other trial hides data without the public cover pd_dm demands."""

    name = "rule_breaker"

    def __init__(self):
        self.calls = 0

    def propose(self, i, k_pub, history):
        self.calls += 1
        size = self.ctx.profile.payload_size
        hid = [Request.write(0, bytes(size), Level.HID)]
        pub = [] if self.calls % 2 else [Request.write(0, bytes(size))]
        pair = ChallengePair(pub, [], hid)
        self.pairs.append(pair)
        return pair

    def guess(self):
        return self.coin()


def test_rule_violations_are_excluded_from_the_estimate():
    out = estimate_advantage(config("pd_dm", trials=20, orientation="trace"), RuleBreaker())
    assert out.invalid == 10 and out.valid == 10
    bad = [r for r in out.records if r.invalid]
    assert all("requirement" in r.detail for r in bad)


def test_all_invalid_is_not_a_pass():
    class AlwaysBad(RuleBreaker):
        def propose(self, i, k_pub, history):
            self.calls = 0
            return super().propose(i, k_pub, history)

    out = estimate_advantage(config("pd_dm", trials=5, orientation="trace"), AlwaysBad())
    assert out.valid == 0 and not out.passed


@pytest.mark.parametrize("orientation", ["device", "trace", "both"])
def test_views_follow_orientation(orientation):
    seen = []

    class Spy(Adversary):
        name = "spy"

        def observe(self, i, view):
            seen.append(view)

        def guess(self):
            return 0

    run_trial(config("hive", orientation=orientation, rounds=2), Spy(), SeededRng(0))
    assert len(seen) == 2
    assert (seen[0].snapshot is not None) == (orientation != "trace")
    assert (seen[0].trace is not None) == (orientation != "device")
    if seen[0].trace is not None:
        assert all(e.kind == "Write" for v in seen for e in v.trace)


def test_outcome_summary_fields():
    out = estimate_advantage(config(trials=4), make_adversary("trace_length"))
    summary = out.summary()
    assert summary["trials"] == 4 and summary["valid_trials"] == 4
    assert summary["pass"] == out.passed
    assert len(out.records) == 4
