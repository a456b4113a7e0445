"""Simulator: traces, config validation, convergence, lossy safety."""

import numpy as np
import pytest

from bufmap import sim
from bufmap.errors import ConfigError


def make_config(**overrides):
    base = {
        "N": 24, "gT": 4, "gTau": 2, "rounds": 50, "seed": 1,
        "codec": "srw-offset",
        "curve": {"family": "logistic", "midpoint": 10.0, "scale": 3.0},
    }
    base.update(overrides)
    return sim.ScenarioConfig.from_dict(base)


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            make_config(extra=1)

    def test_missing_curve_rejected(self):
        with pytest.raises(ConfigError):
            sim.ScenarioConfig.from_dict(
                {"N": 8, "gT": 2, "rounds": 5, "seed": 0, "codec": "crw"})

    def test_bad_codec_rejected(self):
        with pytest.raises(ConfigError):
            make_config(codec="huffman")

    def test_gt_bounds(self):
        with pytest.raises(ConfigError):
            make_config(gT=25)

    def test_lossy_channel_parsing(self):
        cfg = make_config(channel={"kind": "lossy", "p_loss": 0.25,
                                   "max_delay_rounds": 3})
        assert cfg.channel.p_loss == 0.25

    def test_lossy_channel_bad_p(self):
        with pytest.raises(ConfigError):
            make_config(channel={"kind": "lossy", "p_loss": 1.0})

    def test_offsetless_codec_rejected_on_lossy_channel(self):
        with pytest.raises(ConfigError):
            make_config(codec="srw-optimized",
                        channel={"kind": "lossy", "p_loss": 0.1})


class TestTraces:
    def test_instant_fill_all_ones(self):
        cfg = make_config(curve={"family": "table", "values": [1.0] * 24})
        trace = sim.generate_trace(cfg, "a")
        assert set(trace.bitmap(3).bits) == {1}

    def test_never_fill_all_zero(self):
        cfg = make_config(curve={"family": "table", "values": [0.0] * 24})
        trace = sim.generate_trace(cfg, "a")
        assert set(trace.bitmap(3).bits) == {0}

    def test_fixed_seed_reproducible(self):
        cfg = make_config(N=20, rounds=10)
        a1 = sim.generate_trace(cfg, "a")
        a2 = sim.generate_trace(cfg, "a")
        assert np.array_equal(a1.ages, a2.ages)
        assert a1.bitmap(5) == a2.bitmap(5)

    def test_peers_differ_and_reply_offset_applies(self):
        cfg = make_config()
        a = sim.generate_trace(cfg, "a")
        b = sim.generate_trace(cfg, "b")
        assert b.start == a.start + cfg.reply_chunks
        assert not np.array_equal(a.ages[:20], b.ages[:20])

    def test_monotone_filling_per_chunk(self):
        cfg = make_config(rounds=12)
        trace = sim.generate_trace(cfg, "a")
        chunk = trace.offset(2) + 3
        states = [trace.filled(chunk, r) for r in range(2, 8)]
        assert states == sorted(states)

    def test_marginal_fill_frequency_matches_curve(self):
        cfg = make_config(N=16, rounds=4000, seed=5)
        curve = cfg.curve()
        trace = sim.generate_trace(cfg, "a")
        # frequency of 1 at buffer index j across rounds approximates
        # the curve at age N-1-j
        for j in (0, 5, 10, 15):
            hits = sum(trace.bitmap(r).bits[j] for r in range(4000))
            assert hits / 4000 == pytest.approx(curve(16 - 1 - j), abs=0.03)


class TestIdealRuns:
    def test_instant_fill_srw_mean_is_exact(self):
        cfg = make_config(curve={"family": "table", "values": [1.0] * 24},
                          rounds=30)
        m = sim.run(cfg)
        assert m.ab.mean_raw_bits == pytest.approx(4.0)   # gt exactly
        assert m.desync_count == 0

    def test_instant_fill_crw_mean_is_half_gt(self):
        cfg = make_config(codec="crw", gT=4, gTau=2, rounds=30,
                          curve={"family": "table", "values": [1.0] * 24})
        m = sim.run(cfg)
        assert m.avg_raw_bits == pytest.approx(2.0)

    def test_srw_variants_track_their_own_limits(self):
        # slow saturation separates the offset and offsetless limits
        base = dict(N=120, gT=10, gTau=5, rounds=3000, seed=3,
                    curve={"family": "logistic", "midpoint": 70.0, "scale": 25.0})
        offset = sim.run(make_config(**base, codec="srw-offset"))
        optimized = sim.run(make_config(**base, codec="srw-optimized"))
        assert offset.ab.analytic_raw_bits < optimized.ab.analytic_raw_bits
        for m in (offset, optimized):
            for d in (m.ab, m.ba):
                assert d.mean_raw_bits == pytest.approx(d.analytic_raw_bits, rel=0.02)
            assert m.desync_count == 0

    def test_crw_directions_track_asymmetric_limits(self):
        cfg = make_config(codec="crw", N=60, gT=9, gTau=3, rounds=4000, seed=8,
                          curve={"family": "logistic", "midpoint": 25.0, "scale": 8.0})
        m = sim.run(cfg)
        assert m.ab.analytic_raw_bits != pytest.approx(m.ba.analytic_raw_bits)
        assert m.ab.mean_raw_bits == pytest.approx(m.ab.analytic_raw_bits, rel=0.02)
        assert m.ba.mean_raw_bits == pytest.approx(m.ba.analytic_raw_bits, rel=0.02)

    def test_entropy_layer_roundtrips_and_tracks_limit(self):
        cfg = make_config(codec="crw", N=60, gT=8, gTau=4, rounds=2000, seed=2,
                          entropy_layer=True,
                          curve={"family": "logistic", "midpoint": 25.0, "scale": 8.0})
        m = sim.run(cfg)
        for d in (m.ab, m.ba):
            assert d.roundtrip_failures == 0
            assert d.payload_bound_violations == 0
            assert d.mean_ideal_bits == pytest.approx(d.analytic_ideal_bits, rel=0.03)
            assert d.mean_payload_bits > d.mean_ideal_bits

    def test_replicas_merge_and_change_precision(self):
        cfg = make_config(rounds=200)
        single = sim.run(cfg, replicas=1)
        merged = sim.run(cfg, replicas=3)
        assert merged.ab.messages == 3 * single.ab.messages
        assert merged.replicas == 3

    def test_metrics_csv_and_json_shapes(self):
        cfg = make_config(rounds=20, entropy_layer=True)
        m = sim.run(cfg)
        text = m.to_csv()
        lines = text.strip().split("\n")
        assert lines[0].startswith("direction,messages,")
        assert [ln.split(",")[0] for ln in lines[1:]] == ["ab", "ba", "avg"]
        data = m.to_dict()
        assert data["directions"]["ab"]["messages"] == m.ab.messages


class TestLossyRuns:
    def test_zero_loss_reproduces_ideal_exactly(self):
        for codec in ("srw-offset", "crw"):
            ideal = sim.run(make_config(codec=codec, rounds=400, entropy_layer=True))
            lossless = sim.run(make_config(
                codec=codec, rounds=400, entropy_layer=True,
                channel={"kind": "lossy", "p_loss": 0.0}))
            assert lossless.comparable_signature() == ideal.comparable_signature()
            assert lossless.soundness_violations == 0
            assert lossless.staleness_mean == 0.0

    def test_lossy_sessions_stay_sound(self):
        for codec in ("srw-offset", "crw"):
            cfg = make_config(codec=codec, rounds=1500, seed=13,
                              channel={"kind": "lossy", "p_loss": 0.3,
                                       "max_delay_rounds": 2})
            m = sim.run(cfg)
            assert m.soundness_violations == 0
            assert m.completeness_violations == 0
            assert m.stuck_sessions == 0
            assert m.dropped_messages > 0

    def test_heavy_loss_survives_with_stale_baselines(self):
        cfg = make_config(codec="crw", rounds=1500, seed=4,
                          channel={"kind": "lossy", "p_loss": 0.9})
        m = sim.run(cfg)
        assert m.stuck_sessions == 0
        assert m.staleness_mean > 1.0
        assert m.ab.mean_raw_bits > m.ab.analytic_raw_bits  # stale windows carry more

    def test_run_lossy_rejects_ideal_channel(self):
        with pytest.raises(ConfigError):
            sim.run_lossy(make_config())

    def test_run_ideal_rejects_lossy_channel(self):
        with pytest.raises(ConfigError):
            sim.run_ideal(make_config(channel={"kind": "lossy", "p_loss": 0.1}))


class TestAudit:
    def test_clean_session(self):
        report = sim.audit_knowledge({1, 2, 3}, {1, 2}, {1, 2})
        assert report.clean

    def test_detects_false_belief(self):
        report = sim.audit_knowledge({1, 2}, {1, 9}, {1})
        assert report.soundness_violations == 1

    def test_detects_missing_reported_state(self):
        report = sim.audit_knowledge({1, 2}, {1}, {1, 2})
        assert report.completeness_violations == 1
