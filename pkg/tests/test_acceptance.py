"""End-to-end acceptance checks at pinned tolerances.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or on
failure).  Tolerances are fixed here and are not meant to be tuned.
"""

import random
import time

import pytest

from bufmap import crw, limits, sim, srw
from bufmap.window import BufferMap, RelevantWindow

REFERENCE_CHUNK_RATE = 3.37
REFERENCE_COLUMN = {"traditional": 77.0, "srw_offset": 66.0, "crw": 46.0,
                    "jfs": 42.0, "jfc": 24.0}
LOGISTIC_CURVE = {"family": "logistic", "midpoint": 60.0, "scale": 18.0}


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def calibrated():
    return limits.calibrate(
        [("traditional", 17, 77.0), ("srw_offset", 17, 66.0)],
        "two_segment", width=456, gtau_rule="half")


# -- 1. codec correctness over randomized loss-free sessions -----------------

def test_01_codec_roundtrip_randomized_sessions():
    t0 = time.time()
    rng = random.Random(20240501)
    sessions = 1000
    steps = 0
    for s in range(sessions):
        width = rng.randrange(4, 65)
        gt = rng.randrange(1, width + 1)
        gtau = rng.randrange(1, gt + 1)
        rounds = rng.randrange(1, 101)
        universe = rounds * gt + gtau + width + 2
        ages_a = [10**9 if rng.random() < 0.15 else rng.randrange(0, width + 8)
                  for _ in range(universe)]
        ages_b = [10**9 if rng.random() < 0.15 else rng.randrange(0, width + 8)
                  for _ in range(universe)]

        def bitmap(ages, offset):
            newest = offset + width - 1
            return BufferMap(offset, tuple(
                1 if ages[offset + j] <= newest - (offset + j) else 0
                for j in range(width)))

        kind = ("srw-offset", "srw-optimized", "crw")[s % 3]
        window = RelevantWindow.starting_at(0)
        if kind == "crw":
            a, b = crw.CrwEndpoint(window), crw.CrwEndpoint(window)
            for r in range(rounds):
                bm_a, bm_b = bitmap(ages_a, r * gt), bitmap(ages_b, r * gt + gtau)
                tracked = a.window.members_in(bm_a.offset, bm_a.top + 1)
                step = crw.session_step(a, b, bm_a, bm_b)
                a, b = step.endpoint_a, step.endpoint_b
                assert a.window == b.window
                assert {w.chunk: w.filled for w in step.wanted_at_b} == \
                    {c: bm_a.bit(c) for c in tracked}
                steps += 1
        else:
            mode = "with_offset" if kind == "srw-offset" else "optimized"
            sender, receiver = srw.SrwSender(window), srw.SrwReceiver(window)
            for r in range(rounds):
                bm = bitmap(ages_a, r * gt)
                tracked = sender.window.members_in(bm.offset, bm.top + 1)
                msg, sender = srw.encode(sender, bm, mode)
                wanted, rebuilt, receiver = srw.decode(receiver, msg)
                assert sender.window == receiver.window
                assert {w.chunk: w.filled for w in wanted} == \
                    {c: bm.bit(c) for c in tracked}
                if mode == "with_offset":
                    assert rebuilt == bm
                steps += 1
    dt = time.time() - t0
    report("codec correctness", dt < 30,
           f"{sessions} sessions / {steps} rounds clean in {dt:.1f}s (< 30 s)")


# -- 2. Monte Carlo vs the single-window limits -------------------------------

def test_02_srw_monte_carlo_matches_limits():
    t0 = time.time()
    details = []
    for codec in ("srw-offset", "srw-optimized"):
        config = sim.ScenarioConfig.from_dict({
            "N": 456, "gT": 17, "rounds": 20000, "seed": 42, "codec": codec,
            "curve": LOGISTIC_CURVE})
        metrics = sim.run(config)
        assert metrics.desync_count == 0
        for d in (metrics.ab, metrics.ba):
            rel = d.mean_raw_bits / d.analytic_raw_bits - 1
            details.append(f"{codec} {rel:+.3%}")
            assert abs(rel) < 0.02, f"{codec}: {rel:+.3%}"
    dt = time.time() - t0
    report("single-window Monte Carlo", dt < 60,
           f"deltas {', '.join(details)} in {dt:.1f}s (< 60 s)")


# -- 3. Monte Carlo vs the common-window limits -------------------------------

def test_03_crw_monte_carlo_matches_limits():
    t0 = time.time()
    config = sim.ScenarioConfig.from_dict({
        "N": 456, "gT": 17, "gTau": 8, "rounds": 20000, "seed": 43,
        "codec": "crw", "curve": LOGISTIC_CURVE})
    metrics = sim.run(config)
    assert metrics.desync_count == 0
    rel_ab = metrics.ab.mean_raw_bits / metrics.ab.analytic_raw_bits - 1
    rel_ba = metrics.ba.mean_raw_bits / metrics.ba.analytic_raw_bits - 1
    rel_avg = metrics.avg_raw_bits / metrics.avg_analytic_raw_bits - 1
    dt = time.time() - t0
    ok = max(abs(rel_ab), abs(rel_ba), abs(rel_avg)) < 0.02 and dt < 60
    report("common-window Monte Carlo", ok,
           f"ab {rel_ab:+.3%}, ba {rel_ba:+.3%}, avg {rel_avg:+.3%} "
           f"in {dt:.1f}s (< 60 s)")


# -- 4. entropy layer vs the joint-force limits --------------------------------

def test_04_entropy_layer_matches_joint_limits():
    t0 = time.time()
    details = []
    for codec in ("srw-offset", "crw"):
        config = sim.ScenarioConfig.from_dict({
            "N": 456, "gT": 17, "gTau": 8, "rounds": 20000, "seed": 44,
            "codec": codec, "curve": LOGISTIC_CURVE, "entropy_layer": True})
        metrics = sim.run(config)
        for d in (metrics.ab, metrics.ba):
            assert d.roundtrip_failures == 0, "arithmetic coder roundtrip failed"
            assert d.payload_bound_violations == 0, "payload above ideal + 32 bits"
        if codec == "crw":
            rel = metrics.avg_ideal_bits / metrics.avg_analytic_ideal_bits - 1
        else:
            rel = metrics.ab.mean_ideal_bits / metrics.ab.analytic_ideal_bits - 1
            rel_ba = metrics.ba.mean_ideal_bits / metrics.ba.analytic_ideal_bits - 1
            assert abs(rel_ba) < 0.02
        details.append(f"{codec} {rel:+.3%}")
        assert abs(rel) < 0.02, f"{codec}: {rel:+.3%}"
    dt = time.time() - t0
    report("entropy layer", dt < 120,
           f"ideal-length deltas {', '.join(details)}, all messages lossless, "
           f"payload within ideal+32, in {dt:.1f}s (< 2 min)")


# -- 5. reference-column reproduction through calibration ----------------------

def test_05_reference_table_reproduction(calibrated):
    t0 = time.time()
    curve = calibrated.curve

    # (a) both calibration targets hit
    assert calibrated.worst_residual < 0.02

    # (b) the remaining column values land within 15%
    col = {
        "crw": limits.w_crw(curve, 17, 8).avg,
        "jfs": limits.w_jfs(curve, 17),
        "jfc": limits.w_jfc(curve, 17, 8).avg,
    }
    rels = {k: v / REFERENCE_COLUMN[k] - 1 for k, v in col.items()}
    for k, rel in rels.items():
        assert abs(rel) <= 0.15, f"{k} off by {rel:+.1%}"

    # (c) orderings and monotone growth across the sweep
    gts = [17, 34, 51, 67, 84]
    series: dict[str, list[float]] = {s: [] for s in
                                      ("traditional", "srw_offset", "srw_offsetless",
                                       "crw", "jfs", "jfc")}
    for gt in gts:
        gtau = gt // 2
        series["traditional"].append(limits.w_traditional(curve))
        series["srw_offset"].append(limits.w_srw(curve, gt, True))
        series["srw_offsetless"].append(limits.w_srw(curve, gt, False))
        series["crw"].append(limits.w_crw(curve, gt, gtau).avg)
        series["jfs"].append(limits.w_jfs(curve, gt))
        series["jfc"].append(limits.w_jfc(curve, gt, gtau).avg)
    for i in range(len(gts)):
        assert series["jfc"][i] < series["jfs"][i] < series["crw"][i] \
            < series["srw_offset"][i], f"ordering broken at gT={gts[i]}"
    for name, values in series.items():
        if name == "traditional":
            assert len(set(values)) == 1
        else:
            assert all(a < b for a, b in zip(values, values[1:])), \
                f"{name} not strictly growing"

    # (d) crossings with the traditional constant
    trad = limits.w_traditional(curve)

    def crossing_seconds(fn):
        prev = None
        for gt in range(1, 300):
            v = fn(gt)
            if prev is not None and prev[1] <= trad < v:
                g0, v0 = prev
                return (g0 + (trad - v0) / (v - v0)) / REFERENCE_CHUNK_RATE
            prev = (gt, v)
        return None

    t_srw = crossing_seconds(lambda gt: limits.w_srw(curve, gt, True))
    t_crw = crossing_seconds(lambda gt: limits.w_crw(curve, gt, max(1, gt // 2)).avg)
    assert t_srw is not None and 6.0 <= t_srw <= 10.0, f"srw crossing {t_srw}"
    assert t_crw is not None and 14.0 <= t_crw <= 22.0, f"crw crossing {t_crw}"

    dt = time.time() - t0
    report("reference column", dt < 10,
           f"targets {calibrated.worst_residual:.2%}, column "
           + ", ".join(f"{k} {rels[k]:+.1%}" for k in rels)
           + f", crossings {t_srw:.1f}s/{t_crw:.1f}s, in {dt:.1f}s (< 10 s)")


# -- 6. reply-gap insensitivity -------------------------------------------------

def test_06_reply_gap_insensitivity(calibrated):
    t0 = time.time()
    curve = calibrated.curve
    spreads = {}
    for name, fn in (("crw", lambda g: limits.w_crw(curve, 17, g).avg),
                     ("jfc", lambda g: limits.w_jfc(curve, 17, g).avg)):
        values = [fn(g) for g in range(2, 17, 2)]
        spreads[name] = (max(values) - min(values)) / (sum(values) / len(values))
        assert spreads[name] <= 0.05, f"{name} varies {spreads[name]:.1%} over the gap"
    dt = time.time() - t0
    report("reply-gap insensitivity", dt < 5,
           f"spreads crw {spreads['crw']:.2%}, jfc {spreads['jfc']:.2%} "
           f"(<= 5%), in {dt:.1f}s (< 5 s)")


# -- 7. scheme dominance over random curves --------------------------------------

def test_07_scheme_dominance_properties():
    t0 = time.time()
    rng = random.Random(77)
    from bufmap.diffusion import table_curve
    for _ in range(1000):
        n = rng.randrange(4, 65)
        curve = table_curve(sorted(rng.uniform(0, 1) for _ in range(n)), width=n)
        gt = rng.randrange(1, n + 1)
        gtau = rng.randrange(1, gt + 1)
        srw1 = limits.w_srw(curve, gt, True)
        crw_avg = limits.w_crw(curve, gt, gtau).avg
        jfs = limits.w_jfs(curve, gt)
        jfc_avg = limits.w_jfc(curve, gt, gtau).avg
        assert crw_avg <= srw1 + 1e-9
        assert jfs <= srw1 + 1e-9
        assert jfc_avg <= crw_avg + 1e-9
        for value in (srw1, crw_avg, jfs, jfc_avg):
            assert 0.0 <= value <= n + 1e-9
    dt = time.time() - t0
    report("scheme dominance", dt < 10,
           f"1000 random curves ordered correctly in {dt:.1f}s (< 10 s)")


# -- 8. lossy-channel safety ------------------------------------------------------

def test_08_lossy_channel_safety():
    t0 = time.time()
    base = {"N": 48, "gT": 8, "gTau": 4, "rounds": 10000,
            "curve": {"family": "logistic", "midpoint": 20.0, "scale": 6.0}}
    runs = 0
    for p_loss in (0.1, 0.3):
        for seed in range(10):
            codec = "srw-offset" if seed % 2 == 0 else "crw"
            config = sim.ScenarioConfig.from_dict({
                **base, "seed": 1000 + seed, "codec": codec,
                "channel": {"kind": "lossy", "p_loss": p_loss,
                            "max_delay_rounds": seed % 3}})
            metrics = sim.run(config)
            assert metrics.soundness_violations == 0, \
                f"false belief at p={p_loss} seed={seed}"
            assert metrics.completeness_violations == 0
            assert metrics.stuck_sessions == 0
            runs += 1

    for codec in ("srw-offset", "crw"):
        ideal = sim.run(sim.ScenarioConfig.from_dict(
            {**base, "seed": 500, "codec": codec, "entropy_layer": True}))
        lossless = sim.run(sim.ScenarioConfig.from_dict(
            {**base, "seed": 500, "codec": codec, "entropy_layer": True,
             "channel": {"kind": "lossy", "p_loss": 0.0}}))
        assert lossless.comparable_signature() == ideal.comparable_signature(), \
            f"{codec}: loss-free lossy run diverged from the ideal run"
    dt = time.time() - t0
    report("lossy safety", dt < 120,
           f"{runs} seeded runs sound and never stuck; p=0 reproduces the "
           f"ideal run exactly; in {dt:.1f}s (< 2 min)")
