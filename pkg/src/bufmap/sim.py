"""Monte Carlo paired-peer exchange simulation.

Two peers fill their buffers according to sampled per-chunk fill ages and
exchange compressed maps on the paired schedule: peer A reports once per
round, peer B reports a fixed chunk-interval later.  The simulator drives
the real codecs round by round, measures the surviving bits per message
(and, with the entropy layer on, the ideal and arithmetic-coded lengths),
and attaches the closed-form limits for the same parameters so empirical
and analytic values can be compared directly.

Round 0 bootstraps the session (a fresh window makes the first message as
wide as the buffer) and is excluded from the measurements; from round 1 on
the process is exactly stationary.

Over the lossy channel the incremental window update is replaced by the
confirmed-baseline discipline: every message names the sender's own last
snapshot that the partner acknowledged plus the partner's last received
snapshot, and both sides re-derive the coding window from those buffer
maps alone.  Lost messages are never retransmitted; the next message
simply carries fresher state against an older baseline.  An audit checks
after every delivery that the receiver never believes a filled state the
sender does not actually have.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import crw, srw
from .coder import ac_decode, ac_encode, ideal_code_length, model_for_members
from .diffusion import FillAgeSampler, SCurve, curve_from_spec
from .errors import ConfigError
from .limits import w_crw, w_jfc, w_jfs, w_srw
from .window import BufferMap, RelevantWindow

__all__ = [
    "CODECS",
    "ChannelSpec",
    "ScenarioConfig",
    "PeerTrace",
    "generate_trace",
    "DirectionMetrics",
    "ExchangeMetrics",
    "AuditReport",
    "audit_knowledge",
    "run_ideal",
    "smooth_extend",
    "run_lossy",
    "run",
]

CODECS = ("srw-offset", "srw-optimized", "crw")
HISTORY_DEPTH = 256
AC_SLACK_BITS = 32


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ChannelSpec:
    kind: str = "ideal"
    p_loss: float = 0.0
    max_delay_rounds: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSpec":
        if not isinstance(data, dict):
            raise ConfigError("channel must be an object")
        kind = data.get("kind")
        if kind == "ideal":
            unknown = set(data) - {"kind"}
            if unknown:
                raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
            return cls("ideal")
        if kind == "lossy":
            unknown = set(data) - {"kind", "p_loss", "max_delay_rounds"}
            if unknown:
                raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
            p_loss = float(data.get("p_loss", 0.0))
            delay = int(data.get("max_delay_rounds", 0))
            if not 0.0 <= p_loss < 1.0:
                raise ConfigError("p_loss must be in [0, 1)")
            if delay < 0:
                raise ConfigError("max_delay_rounds must be non-negative")
            return cls("lossy", p_loss, delay)
        raise ConfigError(f"unknown channel kind {kind!r}")


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    width: int
    round_chunks: int           # chunk ids produced per exchange round
    reply_chunks: int           # ids between a report and the partner's reply
    rounds: int                 # measured rounds (round 0 bootstraps extra)
    seed: int
    codec: str
    curve_spec: dict
    channel: ChannelSpec = ChannelSpec()
    entropy_layer: bool = False
    start_offset: int = 0

    _KEYS = {"N", "gT", "gTau", "rounds", "seed", "codec", "curve", "channel",
             "entropy_layer", "start_offset"}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be an object")
        unknown = set(data) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("N", "gT", "rounds", "seed", "codec", "curve"):
            if key not in data:
                raise ConfigError(f"missing config key {key!r}")
        width = int(data["N"])
        gt = int(data["gT"])
        gtau = int(data.get("gTau", max(1, gt // 2)))
        rounds = int(data["rounds"])
        if width <= 0:
            raise ConfigError("N must be positive")
        if not 0 < gt <= width:
            raise ConfigError("need 0 < gT <= N")
        if not 0 < gtau <= gt:
            raise ConfigError("need 0 < gTau <= gT")
        if rounds < 1:
            raise ConfigError("rounds must be >= 1")
        codec = data["codec"]
        if codec not in CODECS:
            raise ConfigError(f"codec must be one of {CODECS}, got {codec!r}")
        channel = ChannelSpec.from_dict(data.get("channel", {"kind": "ideal"}))
        if channel.kind == "lossy" and codec == "srw-optimized":
            raise ConfigError("the offsetless codec needs an offset-carrying "
                              "baseline and cannot run over a lossy channel")
        start_offset = int(data.get("start_offset", 0))
        if start_offset < 0:
            raise ConfigError("start_offset must be non-negative")
        config = cls(width, gt, gtau, rounds, int(data["seed"]), codec,
                     data["curve"], channel, bool(data.get("entropy_layer", False)),
                     start_offset)
        config.curve()  # validate the curve spec eagerly
        return config

    def curve(self) -> SCurve:
        return curve_from_spec(self.curve_spec, self.width)


# --- traces -----------------------------------------------------------------

@dataclass(slots=True)
class PeerTrace:
    """One peer's fill ages and per-round buffer maps."""

    which: str
    start: int                  # offset at round 0
    round_chunks: int
    width: int
    ages: np.ndarray            # fill age per chunk id

    def offset(self, round_index: int) -> int:
        return self.start + round_index * self.round_chunks

    def newest(self, round_index: int) -> int:
        return self.offset(round_index) + self.width - 1

    def bitmap(self, round_index: int) -> BufferMap:
        off = self.offset(round_index)
        ages = self.ages[off: off + self.width]
        thresholds = np.arange(self.width - 1, -1, -1)
        bits = (ages <= thresholds).astype(np.uint8)
        return BufferMap(off, tuple(bits.tolist()))

    def filled(self, chunk: int, round_index: int) -> bool:
        return int(self.ages[chunk]) <= self.newest(round_index) - chunk


def _session_seeds(config: ScenarioConfig, replica: int | None = None
                   ) -> tuple[np.random.SeedSequence, ...]:
    """(peer a, peer b, channel) seed children for one session."""
    entropy = [config.seed] if replica is None else [config.seed, replica]
    return tuple(np.random.SeedSequence(entropy).spawn(3))


def generate_trace(config: ScenarioConfig, which: str,
                   seed_seq: np.random.SeedSequence | None = None) -> PeerTrace:
    """Sample a peer's trace; deterministic for a given config and peer."""
    if which not in ("a", "b"):
        raise ValueError("which must be 'a' or 'b'")
    if seed_seq is None:
        seed_seq = _session_seeds(config)[0 if which == "a" else 1]
    rng = np.random.default_rng(seed_seq)
    start = config.start_offset + (0 if which == "a" else config.reply_chunks)
    total_rounds = config.rounds + 1
    universe = start + total_rounds * config.round_chunks + config.width + 1
    sampler = FillAgeSampler(config.curve(), rng)
    ages = sampler.sample_array(universe)
    return PeerTrace(which, start, config.round_chunks, config.width, ages)


# --- metrics ----------------------------------------------------------------

class _Acc:
    """Streaming mean/variance accumulator."""

    __slots__ = ("n", "total", "total_sq")

    def __init__(self) -> None:
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        self.total += x
        self.total_sq += x * x

    def merge(self, other: "_Acc") -> None:
        self.n += other.n
        self.total += other.total
        self.total_sq += other.total_sq

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else math.nan

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return math.nan
        var = max(0.0, self.total_sq / self.n - self.mean ** 2)
        return math.sqrt(var / self.n)


@dataclass(slots=True)
class DirectionMetrics:
    messages: int
    mean_raw_bits: float
    se_raw_bits: float
    analytic_raw_bits: float
    mean_ideal_bits: float | None = None
    se_ideal_bits: float | None = None
    analytic_ideal_bits: float | None = None
    mean_payload_bits: float | None = None
    payload_bound_violations: int = 0
    roundtrip_failures: int = 0

    def to_dict(self) -> dict:
        return {
            "messages": self.messages,
            "mean_raw_bits": self.mean_raw_bits,
            "se_raw_bits": self.se_raw_bits,
            "analytic_raw_bits": self.analytic_raw_bits,
            "mean_ideal_bits": self.mean_ideal_bits,
            "se_ideal_bits": self.se_ideal_bits,
            "analytic_ideal_bits": self.analytic_ideal_bits,
            "mean_payload_bits": self.mean_payload_bits,
            "payload_bound_violations": self.payload_bound_violations,
            "roundtrip_failures": self.roundtrip_failures,
        }


@dataclass(slots=True)
class ExchangeMetrics:
    codec: str
    channel: str
    width: int
    round_chunks: int
    reply_chunks: int
    rounds: int
    seed: int
    replicas: int
    ab: DirectionMetrics
    ba: DirectionMetrics
    desync_count: int = 0
    soundness_violations: int = 0
    completeness_violations: int = 0
    undecodable_messages: int = 0
    stuck_sessions: int = 0
    staleness_mean: float = 0.0
    delivered_messages: int = 0
    dropped_messages: int = 0

    @property
    def avg_raw_bits(self) -> float:
        return (self.ab.mean_raw_bits + self.ba.mean_raw_bits) / 2.0

    @property
    def avg_analytic_raw_bits(self) -> float:
        return (self.ab.analytic_raw_bits + self.ba.analytic_raw_bits) / 2.0

    @property
    def avg_ideal_bits(self) -> float | None:
        if self.ab.mean_ideal_bits is None or self.ba.mean_ideal_bits is None:
            return None
        return (self.ab.mean_ideal_bits + self.ba.mean_ideal_bits) / 2.0

    @property
    def avg_analytic_ideal_bits(self) -> float | None:
        if self.ab.analytic_ideal_bits is None or self.ba.analytic_ideal_bits is None:
            return None
        return (self.ab.analytic_ideal_bits + self.ba.analytic_ideal_bits) / 2.0

    def to_dict(self) -> dict:
        return {
            "codec": self.codec,
            "channel": self.channel,
            "N": self.width,
            "gT": self.round_chunks,
            "gTau": self.reply_chunks,
            "rounds": self.rounds,
            "seed": self.seed,
            "replicas": self.replicas,
            "directions": {"ab": self.ab.to_dict(), "ba": self.ba.to_dict()},
            "avg_raw_bits": self.avg_raw_bits,
            "avg_analytic_raw_bits": self.avg_analytic_raw_bits,
            "avg_ideal_bits": self.avg_ideal_bits,
            "avg_analytic_ideal_bits": self.avg_analytic_ideal_bits,
            "desync_count": self.desync_count,
            "soundness_violations": self.soundness_violations,
            "completeness_violations": self.completeness_violations,
            "undecodable_messages": self.undecodable_messages,
            "stuck_sessions": self.stuck_sessions,
            "staleness_mean": self.staleness_mean,
            "delivered_messages": self.delivered_messages,
            "dropped_messages": self.dropped_messages,
        }

    CSV_HEADER = ("direction,messages,mean_raw_bits,se_raw_bits,analytic_raw_bits,"
                  "raw_rel_delta,mean_ideal_bits,se_ideal_bits,analytic_ideal_bits,"
                  "ideal_rel_delta,mean_payload_bits")

    def to_csv(self) -> str:
        def fmt(x: float | None) -> str:
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"

        def rel(mean: float | None, ref: float | None) -> str:
            if mean is None or ref is None or not ref:
                return ""
            return f"{(mean - ref) / ref:.6f}"

        lines = [self.CSV_HEADER]
        for name, d in (("ab", self.ab), ("ba", self.ba)):
            lines.append(",".join([
                name, str(d.messages), fmt(d.mean_raw_bits), fmt(d.se_raw_bits),
                fmt(d.analytic_raw_bits), rel(d.mean_raw_bits, d.analytic_raw_bits),
                fmt(d.mean_ideal_bits), fmt(d.se_ideal_bits),
                fmt(d.analytic_ideal_bits), rel(d.mean_ideal_bits, d.analytic_ideal_bits),
                fmt(d.mean_payload_bits),
            ]))
        lines.append(",".join([
            "avg", str(self.ab.messages + self.ba.messages), fmt(self.avg_raw_bits),
            "", fmt(self.avg_analytic_raw_bits),
            rel(self.avg_raw_bits, self.avg_analytic_raw_bits),
            fmt(self.avg_ideal_bits), "", fmt(self.avg_analytic_ideal_bits),
            rel(self.avg_ideal_bits, self.avg_analytic_ideal_bits), "",
        ]))
        return "\n".join(lines) + "\n"

    def comparable_signature(self) -> tuple:
        """Fields that must match bit-for-bit between a loss-free lossy run
        and the ideal run under the same seed."""
        return (
            self.ab.messages, self.ab.mean_raw_bits, self.ab.mean_ideal_bits,
            self.ab.mean_payload_bits,
            self.ba.messages, self.ba.mean_raw_bits, self.ba.mean_ideal_bits,
            self.ba.mean_payload_bits,
        )


@dataclass(frozen=True, slots=True)
class AuditReport:
    soundness_violations: int
    completeness_violations: int
    believed: int

    @property
    def clean(self) -> bool:
        return self.soundness_violations == 0 and self.completeness_violations == 0


def audit_knowledge(sender_true_ones: set[int], receiver_believed: set[int],
                    delivered_reported: set[int] | None = None) -> AuditReport:
    """Check a receiver's believed filled-set against the sender's truth.

    Soundness: everything believed filled must truly be filled.
    Completeness: every state reported 1 in a delivered message must be
    believed.
    """
    soundness = len(receiver_believed - sender_true_ones)
    completeness = 0
    if delivered_reported is not None:
        completeness = len(delivered_reported - receiver_believed)
    return AuditReport(soundness, completeness, len(receiver_believed))


# --- shared per-direction bookkeeping ---------------------------------------

class _DirectionProbe:
    """Accumulates raw/ideal/payload lengths for one message direction."""

    __slots__ = ("raw", "ideal", "payload", "payload_violations", "roundtrip_failures")

    def __init__(self) -> None:
        self.raw = _Acc()
        self.ideal = _Acc()
        self.payload = _Acc()
        self.payload_violations = 0
        self.roundtrip_failures = 0

    def merge(self, other: "_DirectionProbe") -> None:
        self.raw.merge(other.raw)
        self.ideal.merge(other.ideal)
        self.payload.merge(other.payload)
        self.payload_violations += other.payload_violations
        self.roundtrip_failures += other.roundtrip_failures

    def observe_entropy(self, bits: tuple[int, ...], model: tuple[float, ...]) -> None:
        ideal = ideal_code_length(bits, model)
        self.ideal.add(ideal)
        block = ac_encode(bits, model)
        self.payload.add(float(block.payload_bits))
        if bits and not ideal <= block.payload_bits <= ideal + AC_SLACK_BITS:
            self.payload_violations += 1
        if ac_decode(block, model) != tuple(bits):
            self.roundtrip_failures += 1

    def finalize(self, analytic_raw: float, analytic_ideal: float | None,
                 entropy: bool) -> DirectionMetrics:
        return DirectionMetrics(
            messages=self.raw.n,
            mean_raw_bits=self.raw.mean,
            se_raw_bits=self.raw.stderr,
            analytic_raw_bits=analytic_raw,
            mean_ideal_bits=self.ideal.mean if entropy else None,
            se_ideal_bits=self.ideal.stderr if entropy else None,
            analytic_ideal_bits=analytic_ideal if entropy else None,
            mean_payload_bits=self.payload.mean if entropy else None,
            payload_bound_violations=self.payload_violations,
            roundtrip_failures=self.roundtrip_failures,
        )


@dataclass(slots=True)
class _SessionCounters:
    desync: int = 0
    soundness: int = 0
    completeness: int = 0
    undecodable: int = 0
    stuck: int = 0
    staleness: _Acc = field(default_factory=_Acc)
    delivered: int = 0
    dropped: int = 0

    def merge(self, other: "_SessionCounters") -> None:
        self.desync += other.desync
        self.soundness += other.soundness
        self.completeness += other.completeness
        self.undecodable += other.undecodable
        self.stuck += other.stuck
        self.staleness.merge(other.staleness)
        self.delivered += other.delivered
        self.dropped += other.dropped


def _analytic_for(config: ScenarioConfig) -> tuple[float, float, float | None, float | None]:
    """(raw_ab, raw_ba, ideal_ab, ideal_ba) limits for the configured codec."""
    curve = config.curve()
    gt, gtau = config.round_chunks, config.reply_chunks
    if config.codec == "crw":
        raw = w_crw(curve, gt, gtau)
        ideal = w_jfc(curve, gt, gtau)
        return raw.ab, raw.ba, ideal.ab, ideal.ba
    with_offset = config.codec == "srw-offset"
    raw_value = w_srw(curve, gt, with_offset=with_offset)
    ideal_value = w_jfs(curve, gt)
    return raw_value, raw_value, ideal_value, ideal_value


def smooth_extend(bm: BufferMap, window: RelevantWindow) -> BufferMap:
    """Report window members the buffer slid past as filled.

    Under steady playback a chunk below the map offset was necessarily
    downloaded before it played, so the offsetless stream can carry its 1
    instead of forcing the receiver to drop it; the window then prunes
    itself and no skip counts are ever needed.
    """
    lowest = window.first(1)
    if not lowest or lowest[0] >= bm.offset:
        return bm
    pad = bm.offset - lowest[0]
    return BufferMap(lowest[0], (1,) * pad + bm.bits)


# --- ideal channel ----------------------------------------------------------

def _run_srw_ideal(config: ScenarioConfig, trace: PeerTrace, probe: _DirectionProbe,
                   counters: _SessionCounters, curve: SCurve) -> None:
    mode = "with_offset" if config.codec == "srw-offset" else "optimized"
    start_window = RelevantWindow.starting_at(trace.offset(0))
    sender = srw.SrwSender(start_window)
    receiver = srw.SrwReceiver(start_window)
    gt = config.round_chunks
    for r in range(config.rounds + 1):
        bm = trace.bitmap(r)
        if mode == "optimized":
            bm = smooth_extend(bm, sender.window)
        members = None
        if config.entropy_layer and r >= 1:
            members = sender.window.members_in(bm.offset, bm.top + 1)
        msg, sender = srw.encode(sender, bm, mode)
        _wanted, _rebuilt, receiver = srw.decode(receiver, msg)
        if sender.window != receiver.window:
            counters.desync += 1
        if r >= 1:
            probe.raw.add(float(len(msg.bits)))
            if members is not None:
                model = model_for_members(curve, members, trace.newest(r),
                                          trace.newest(r - 1))
                probe.observe_entropy(msg.bits, model)


def _run_crw_ideal(config: ScenarioConfig, trace_a: PeerTrace, trace_b: PeerTrace,
                   probes: dict[str, _DirectionProbe], counters: _SessionCounters,
                   curve: SCurve) -> None:
    start_window = RelevantWindow.starting_at(trace_a.offset(0))
    a = crw.CrwEndpoint(start_window)
    b = crw.CrwEndpoint(start_window)
    for r in range(config.rounds + 1):
        for which, trace in (("ab", trace_a), ("ba", trace_b)):
            sender, receiver = (a, b) if which == "ab" else (b, a)
            bm = trace.bitmap(r)
            members = None
            if config.entropy_layer and r >= 1:
                members = sender.window.members_in(bm.offset, bm.top + 1)
            msg, sender = crw.send(sender, bm)
            _wanted, _rebuilt, receiver = crw.receive(receiver, msg)
            if which == "ab":
                a, b = sender, receiver
            else:
                b, a = sender, receiver
            if r >= 1:
                probe = probes[which]
                probe.raw.add(float(len(msg.bits)))
                if members is not None:
                    model = model_for_members(curve, members, trace.newest(r),
                                              trace.newest(r - 1))
                    probe.observe_entropy(msg.bits, model)
        if a.window != b.window:
            counters.desync += 1


# --- lossy channel ----------------------------------------------------------

@dataclass(slots=True)
class _Flight:
    deliver_slot: int
    order: int
    sender: str
    seq: int
    ack: int
    baseline: int
    send_round: int
    message: srw.SrwWithOffset | crw.CrwMessage


class _LossyPeer:
    __slots__ = ("name", "trace", "seq", "own_maps", "partner_maps",
                 "last_received", "confirmed_own", "believed_ones",
                 "delivered_reported", "last_decode_round", "partner_start")

    def __init__(self, name: str, trace: PeerTrace, partner_start: int) -> None:
        self.name = name
        self.trace = trace
        self.seq = 0
        self.own_maps: dict[int, BufferMap] = {}
        self.partner_maps: dict[int, BufferMap] = {}
        self.last_received = -1
        self.confirmed_own = -1
        self.believed_ones: set[int] = set()
        self.delivered_reported: set[int] = set()
        self.last_decode_round = 0
        self.partner_start = partner_start

    def remember_own(self, seq: int, bm: BufferMap) -> None:
        self.own_maps[seq] = bm
        if len(self.own_maps) > HISTORY_DEPTH:
            del self.own_maps[min(self.own_maps)]

    def remember_partner(self, seq: int, bm: BufferMap) -> None:
        self.partner_maps[seq] = bm
        if len(self.partner_maps) > HISTORY_DEPTH:
            del self.partner_maps[min(self.partner_maps)]


def _ones_of(bm: BufferMap) -> Iterator[int]:
    off = bm.offset
    return (off + i for i, bit in enumerate(bm.bits) if bit)


def _derive_window(primary: BufferMap | None, secondary: BufferMap | None,
                   fallback_floor: int) -> RelevantWindow:
    """Window implied by baseline maps: everything not yet reported filled."""
    maps = [m for m in (primary, secondary) if m is not None]
    if not maps:
        return RelevantWindow.starting_at(fallback_floor)
    floor = max(m.offset for m in maps)
    excluded = {c for m in maps for c in _ones_of(m) if c >= floor}
    return RelevantWindow(floor, tuple(sorted(excluded)))


def _pad_reconstruction(rebuilt: BufferMap | None, offset: int, width: int) -> BufferMap:
    # Positions the reconstruction does not reach are non-members of the
    # decode window, i.e. known filled.
    if rebuilt is None:
        return BufferMap(offset, (1,) * width)
    if rebuilt.width >= width:
        return rebuilt
    return BufferMap(offset, rebuilt.bits + (1,) * (width - rebuilt.width))


def _run_lossy(config: ScenarioConfig, trace_a: PeerTrace, trace_b: PeerTrace,
               probes: dict[str, _DirectionProbe], counters: _SessionCounters,
               curve: SCurve, rng: np.random.Generator) -> None:
    is_crw = config.codec == "crw"
    peers = {"a": _LossyPeer("a", trace_a, trace_b.start),
             "b": _LossyPeer("b", trace_b, trace_a.start)}
    traces = {"a": trace_a, "b": trace_b}
    in_flight: list[_Flight] = []
    order = 0

    def deliver(peer: _LossyPeer, flight: _Flight) -> None:
        sender_trace = traces[flight.sender]
        if flight.baseline >= 0 and flight.baseline not in peer.partner_maps:
            counters.undecodable += 1
            return
        if is_crw and flight.ack >= 0 and flight.ack not in peer.own_maps:
            counters.undecodable += 1
            return
        base = peer.partner_maps.get(flight.baseline) if flight.baseline >= 0 else None
        own_ref = None
        if is_crw:
            own_ref = peer.own_maps.get(flight.ack) if flight.ack >= 0 else None
        window = _derive_window(base, own_ref, peer.partner_start)
        if is_crw:
            wanted, rebuilt, _state = crw.receive(crw.CrwEndpoint(window), flight.message)
        else:
            wanted, rebuilt, _state = srw.decode(srw.SrwReceiver(window), flight.message)
        stored = _pad_reconstruction(rebuilt, flight.message.offset, config.width)
        reported = [w.chunk for w in wanted if w.filled]
        if is_crw:
            # A common-window reconstruction rebuilds 1s at positions this
            # peer itself ruled out, which say nothing about the sender;
            # only the decoded states count as knowledge.
            candidates = reported
        else:
            candidates = list(_ones_of(stored))
        new_ones = [c for c in candidates if c not in peer.believed_ones]
        for c in new_ones:
            if not sender_trace.filled(c, flight.send_round):
                counters.soundness += 1
        peer.believed_ones.update(new_ones)
        peer.delivered_reported.update(reported)
        for w in wanted:
            if w.filled and w.chunk not in peer.believed_ones:
                counters.completeness += 1
        peer.remember_partner(flight.seq, stored)
        if flight.seq > peer.last_received:
            peer.last_received = flight.seq
            peer.confirmed_own = max(peer.confirmed_own, flight.ack)
        peer.last_decode_round = flight.send_round

    def send(name: str, r: int, slot: int) -> None:
        nonlocal order
        peer = peers[name]
        bm = peer.trace.bitmap(r)
        own_base = (peer.own_maps.get(peer.confirmed_own)
                    if peer.confirmed_own >= 0 else None)
        partner_base = (peer.partner_maps.get(peer.last_received)
                        if is_crw and peer.last_received >= 0 else None)
        window = _derive_window(own_base, partner_base, peer.trace.start)
        if is_crw:
            message, _endpoint = crw.send(crw.CrwEndpoint(window), bm)
        else:
            message, _sender = srw.encode(srw.SrwSender(window), bm, "with_offset")
        direction = "ab" if name == "a" else "ba"
        if r >= 1:
            probe = probes[direction]
            probe.raw.add(float(len(message.bits)))
            counters.staleness.add(float(peer.seq - 1 - peer.confirmed_own))
            if config.entropy_layer:
                members = window.members_in(bm.offset, bm.top + 1)
                base_newest = (own_base.top if own_base is not None
                               else peer.trace.start - 1)
                model = model_for_members(curve, members, peer.trace.newest(r),
                                          base_newest)
                probe.observe_entropy(message.bits, model)
        flight = _Flight(0, order, name, peer.seq, peer.last_received,
                         peer.confirmed_own, r, message)
        order += 1
        peer.remember_own(peer.seq, bm)
        peer.seq += 1
        if rng.random() < config.channel.p_loss:
            counters.dropped += 1
            return
        delay = int(rng.integers(0, config.channel.max_delay_rounds + 1)) \
            if config.channel.max_delay_rounds else 0
        flight.deliver_slot = slot + 1 + 2 * delay
        in_flight.append(flight)

    def pump(name: str, slot: int, r: int) -> None:
        peer = peers[name]
        ready = [f for f in in_flight if f.deliver_slot <= slot and f.sender != name]
        ready.sort(key=lambda f: f.order)
        for f in ready:
            in_flight.remove(f)
            counters.delivered += 1
            deliver(peer, f)
        if r - peer.last_decode_round >= HISTORY_DEPTH:
            counters.stuck += 1
            peer.last_decode_round = r  # report once per stall window

    for r in range(config.rounds + 1):
        pump("a", 2 * r, r)
        send("a", r, 2 * r)
        pump("b", 2 * r + 1, r)
        send("b", r, 2 * r + 1)

    for name in ("a", "b"):
        peer = peers[name]
        other = traces["b" if name == "a" else "a"]
        truth = {int(c) for c in np.nonzero(
            other.ages <= (other.newest(config.rounds) - np.arange(len(other.ages))))[0]}
        report = audit_knowledge(truth, peer.believed_ones, peer.delivered_reported)
        counters.soundness += report.soundness_violations
        counters.completeness += report.completeness_violations


# --- entry points -----------------------------------------------------------

def _run_once(config: ScenarioConfig, replica: int | None
              ) -> tuple[dict[str, _DirectionProbe], _SessionCounters]:
    curve = config.curve()
    seed_a, seed_b, seed_channel = _session_seeds(config, replica)
    trace_a = generate_trace(config, "a", seed_a)
    trace_b = generate_trace(config, "b", seed_b)
    probes = {"ab": _DirectionProbe(), "ba": _DirectionProbe()}
    counters = _SessionCounters()
    if config.channel.kind == "lossy":
        channel_rng = np.random.default_rng(seed_channel)
        _run_lossy(config, trace_a, trace_b, probes, counters, curve, channel_rng)
    elif config.codec == "crw":
        _run_crw_ideal(config, trace_a, trace_b, probes, counters, curve)
    else:
        _run_srw_ideal(config, trace_a, probes["ab"], counters, curve)
        _run_srw_ideal(config, trace_b, probes["ba"], counters, curve)
    return probes, counters


def run(config: ScenarioConfig, replicas: int = 1) -> ExchangeMetrics:
    """Run the configured scenario; replicas merge into one set of metrics."""
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    probes = {"ab": _DirectionProbe(), "ba": _DirectionProbe()}
    counters = _SessionCounters()
    for replica in range(replicas):
        rep_probes, rep_counters = _run_once(config, None if replicas == 1 else replica)
        probes["ab"].merge(rep_probes["ab"])
        probes["ba"].merge(rep_probes["ba"])
        counters.merge(rep_counters)
    raw_ab, raw_ba, ideal_ab, ideal_ba = _analytic_for(config)
    return ExchangeMetrics(
        codec=config.codec,
        channel=config.channel.kind,
        width=config.width,
        round_chunks=config.round_chunks,
        reply_chunks=config.reply_chunks,
        rounds=config.rounds,
        seed=config.seed,
        replicas=replicas,
        ab=probes["ab"].finalize(raw_ab, ideal_ab, config.entropy_layer),
        ba=probes["ba"].finalize(raw_ba, ideal_ba, config.entropy_layer),
        desync_count=counters.desync,
        soundness_violations=counters.soundness,
        completeness_violations=counters.completeness,
        undecodable_messages=counters.undecodable,
        stuck_sessions=counters.stuck,
        staleness_mean=counters.staleness.mean if counters.staleness.n else 0.0,
        delivered_messages=counters.delivered,
        dropped_messages=counters.dropped,
    )


def run_ideal(config: ScenarioConfig, replicas: int = 1) -> ExchangeMetrics:
    if config.channel.kind != "ideal":
        raise ConfigError("run_ideal needs an ideal channel")
    return run(config, replicas)


def run_lossy(config: ScenarioConfig, replicas: int = 1) -> ExchangeMetrics:
    if config.channel.kind != "lossy":
        raise ConfigError("run_lossy needs a lossy channel")
    return run(config, replicas)
