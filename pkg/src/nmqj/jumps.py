"""Stochastic ensemble update with forward and reverse quantum jumps.

Channels with a positive rate fire the usual jumps ``psi -> C psi / |C psi|``
with probability ``Delta dt <C^dagger C>``. Channels with a negative rate run
the same process backwards: members in a state ``psi_a = C psi_b / |C psi_b|``
jump back to ``psi_b`` with probability
``(N_b / N_a) |Delta| dt <psi_b|C^dagger C|psi_b>``, which depends on the
*target* occupation. All probabilities of a step are computed from the
start-of-step snapshot; jump counts are drawn as one binomial per
(source state, branch) instead of one Bernoulli trial per member.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ensemble import Ensemble
from .linalg import DimensionError, overlap_fidelity
from .model import DecayChannel, ModelSpec
from .propagator import StepControl, propagate_batch, step_maps

log = logging.getLogger(__name__)

ZERO_RATE_TOL = 1e-14
FIRE_TOL = 1e-15  # minimum |C psi| for a channel to act on psi
MIN_DT_FRACTION = 2.0**-30

POSITIVE = "positive"
NEGATIVE = "negative"

# stream tags for the (root, step, id, tag) Philox counter
_TAG_STATE = 0
_TAG_TRACKED = 1


class StepTooLargeError(RuntimeError):
    pass


class UnravelingBreakdown(RuntimeError):
    pass


class ChannelCannotFire(ValueError):
    pass


@dataclass(frozen=True)
class JumpEvent:
    t: float
    channel_label: str
    sign: str
    source_id: int
    target_id: int
    members_moved: int

    def __post_init__(self):
        if self.members_moved < 1:
            raise ValueError("a jump event moves at least one member")
        if self.sign not in (POSITIVE, NEGATIVE):
            raise ValueError(f"sign must be {POSITIVE!r} or {NEGATIVE!r}")

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "channel": self.channel_label,
            "sign": self.sign,
            "source_id": self.source_id,
            "target_id": self.target_id,
            "members_moved": self.members_moved,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "JumpEvent":
        return cls(
            float(rec["t"]),
            str(rec["channel"]),
            str(rec["sign"]),
            int(rec["source_id"]),
            int(rec["target_id"]),
            int(rec["members_moved"]),
        )


@dataclass
class StepOutcome:
    events: list[JumpEvent] = field(default_factory=list)
    max_prob_seen: float = 0.0
    dt_used: float = 0.0
    substeps: int = 0
    orphaned: list[tuple[str, int]] = field(default_factory=list)

    def merge(self, other: "StepOutcome") -> None:
        self.events.extend(other.events)
        self.max_prob_seen = max(self.max_prob_seen, other.max_prob_seen)
        self.dt_used = min(self.dt_used, other.dt_used) if self.substeps else other.dt_used
        self.substeps += other.substeps
        self.orphaned.extend(other.orphaned)


class RandomStreams:
    """Counter-based random streams derived from one root seed.

    The stream for distinct state ``sid`` at step ``k`` is a Philox generator
    keyed by the root seed with counter ``(k, sid, tag)``, so results do not
    depend on the order in which states are visited.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.step_index = 0

    def next_step(self) -> int:
        k = self.step_index
        self.step_index += 1
        return k

    def stream(self, step: int, sid: int, tag: int = _TAG_STATE) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed, counter=[step, sid, tag, 0]))

    def tracked(self, step: int) -> np.random.Generator:
        return self.stream(step, 0, _TAG_TRACKED)


@dataclass
class TrackedMember:
    """One ensemble member followed individually through the run."""

    state_id: int
    events: list[JumpEvent] = field(default_factory=list)


# --------------------------------------------------------------------------
# elementary operations


def classify_channels(model: ModelSpec, t: float):
    """Split channel indices into (positive, negative, zero) by rate sign at ``t``."""
    pos, neg, zero = [], [], []
    for j, ch in enumerate(model.channels):
        r = ch.rate(t)
        if abs(r) < ZERO_RATE_TOL:
            zero.append(j)
        elif r > 0:
            pos.append(j)
        else:
            neg.append(j)
    return pos, neg, zero


def _cdc_expect(state: np.ndarray, op: np.ndarray) -> float:
    v = op @ state
    return float(np.vdot(v, v).real)


def positive_jump_probability(state: np.ndarray, ch: DecayChannel, t: float, dt: float) -> float:
    rate = ch.rate(t)
    if rate <= 0:
        raise ValueError(f"channel {ch.label!r} is not positive at t={t} (rate={rate})")
    p = rate * dt * _cdc_expect(np.asarray(state), ch.operator)
    if p > 1.0:
        raise StepTooLargeError(f"time step too large: jump probability {p:.3g} > 1 on channel {ch.label!r}")
    return p


def apply_positive_jump(state: np.ndarray, ch: DecayChannel) -> np.ndarray:
    v = ch.operator @ np.asarray(state)
    nrm = float(np.sqrt(np.vdot(v, v).real))
    if not nrm > FIRE_TOL:
        raise ChannelCannotFire(f"channel {ch.label!r} cannot fire from this state")
    return v / nrm


def find_reverse_targets(e: Ensemble, source_id: int, ch: DecayChannel) -> list[int]:
    """Populated states whose forward jump on ``ch`` lands on the source state."""
    src = e.vector(source_id)
    if ch.operator.shape != (e.dim, e.dim):
        raise DimensionError("channel operator does not match ensemble dimension")
    thresh = 1.0 - e.merge_tol
    out = []
    for s in e:
        if s.id == source_id or s.count <= 0:
            continue
        v = ch.operator @ s.vector
        nrm = float(np.sqrt(np.vdot(v, v).real))
        if nrm <= FIRE_TOL:
            continue
        if overlap_fidelity(v / nrm, src) > thresh:
            out.append(s.id)
    return out


def negative_jump_probability(
    e: Ensemble, source_id: int, target_id: int, ch: DecayChannel, t: float, dt: float
) -> float:
    n_src = e.count(source_id)
    if n_src <= 0:
        raise ValueError(f"source state {source_id} is empty")
    n_tgt = e.count(target_id)
    rate = ch.rate(t)
    if n_tgt == 0 or rate == 0.0:
        return 0.0
    p = (n_tgt / n_src) * abs(rate) * dt * _cdc_expect(e.vector(target_id), ch.operator)
    if p > 1.0:
        raise StepTooLargeError(
            f"time step too large for negative channel {ch.label!r}: reverse-jump probability {p:.3g} > 1"
        )
    return p


def sample_jump_count(n_members: int, p: float, rng: np.random.Generator) -> int:
    """Number of successes among ``n_members`` independent Bernoulli(p) trials."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    if n_members <= 0 or p == 0.0:
        return 0
    if p == 1.0:
        return int(n_members)
    return int(rng.binomial(n_members, p))


# --------------------------------------------------------------------------
# one step


@dataclass
class _Branch:
    sign: str
    channel: int
    prob: float
    target_id: int | None = None  # reverse target; None for positive jumps
    post_state: np.ndarray | None = None  # positive jumps only


@dataclass
class StepPlan:
    t: float
    dt: float
    branches: dict[int, list[_Branch]]
    orphaned: list[tuple[int, int]]  # (channel index, populated state id)
    max_total: float
    max_single: float


def plan_step(e: Ensemble, model: ModelSpec, t: float, dt: float) -> StepPlan:
    """All jump branches and their probabilities from the snapshot at ``t``."""
    pop = e.populated()
    branches: dict[int, list[_Branch]] = {s.id: [] for s in pop}
    orphaned: list[tuple[int, int]] = []
    if not pop:
        return StepPlan(t, dt, branches, orphaned, 0.0, 0.0)
    psi = np.array([s.vector for s in pop], dtype=np.complex128)
    pos, neg, _ = classify_channels(model, t)
    thresh = 1.0 - e.merge_tol

    cpsi: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for j in pos + neg:
        v = psi @ model.channels[j].operator.T
        ns = (v.real**2 + v.imag**2).sum(axis=1)
        cpsi[j] = (v, ns)

    for j in pos:
        rate = model.channels[j].rate(t)
        v, ns = cpsi[j]
        for a, s in enumerate(pop):
            if ns[a] <= FIRE_TOL**2:
                continue
            branches[s.id].append(_Branch(POSITIVE, j, rate * dt * ns[a], post_state=v[a] / np.sqrt(ns[a])))

    if neg:
        _negative_branches(pop, model, t, dt, neg, cpsi, thresh, branches, orphaned)

    max_total = 0.0
    max_single = 0.0
    for blist in branches.values():
        if blist:
            max_total = max(max_total, sum(b.prob for b in blist))
            max_single = max(max_single, max(b.prob for b in blist))
    return StepPlan(t, dt, branches, orphaned, max_total, max_single)


def _negative_branches(pop, model, t, dt, neg, cpsi, thresh, branches, orphaned):
    # iterate over targets: each populated psi_b with C psi_b != 0 needs a populated
    # source psi_a = C psi_b / |C psi_b| to draw members back from
    for j in neg:
        rate = model.channels[j].rate(t)
        v, ns = cpsi[j]
        for b, tgt in enumerate(pop):
            if ns[b] <= FIRE_TOL**2:
                continue
            landing = v[b] / np.sqrt(ns[b])
            source = None
            for a, s in enumerate(pop):
                if abs(np.vdot(s.vector, landing)) ** 2 > thresh:
                    source = a
                    break
            if source is None:
                orphaned.append((j, tgt.id))
                continue
            if source == b:
                continue  # C psi_b is psi_b: the decay term cancels in the ensemble
            src = pop[source]
            p = (tgt.count / src.count) * abs(rate) * dt * ns[b]
            branches[src.id].append(_Branch(NEGATIVE, j, p, target_id=tgt.id))
    for blist in branches.values():
        blist.sort(key=lambda br: (br.sign == NEGATIVE, br.channel, -1 if br.target_id is None else br.target_id))


def _sample_counts(n: int, blist: list[_Branch], rng: np.random.Generator) -> list[int]:
    """Multinomial split of ``n`` members over the branches (rest: no jump).

    Drawn as successive conditional binomials in branch order, so each member
    takes at most one branch.
    """
    counts = []
    remaining = n
    rest_p = 1.0
    for br in blist:
        if remaining == 0 or br.prob <= 0.0:
            counts.append(0)
            rest_p -= br.prob
            continue
        q = min(br.prob / rest_p, 1.0) if rest_p > 0 else 1.0
        k = sample_jump_count(remaining, q, rng)
        counts.append(k)
        remaining -= k
        rest_p -= br.prob
    return counts


def step_ensemble(
    e: Ensemble,
    model: ModelSpec,
    ctrl: StepControl,
    streams: RandomStreams,
    *,
    strict: bool = True,
    adaptive: bool = True,
    tracker: TrackedMember | None = None,
) -> tuple[Ensemble, StepOutcome]:
    """Advance ``e`` in place from ``e.time`` to ``e.time + ctrl.dt``.

    If any state's summed jump probability exceeds ``ctrl.max_jump_prob`` the
    step is split in halves (``adaptive``) or :class:`StepTooLargeError` is
    raised. Orphaned negative channels raise :class:`UnravelingBreakdown`
    when ``strict`` and are logged and skipped otherwise.
    """
    return e, _advance(e, model, ctrl, ctrl.dt, streams, strict, adaptive, tracker, ctrl.dt * MIN_DT_FRACTION)


def _advance(e, model, ctrl, dt, streams, strict, adaptive, tracker, min_dt) -> StepOutcome:
    t = e.time
    plan = plan_step(e, model, t, dt)
    if plan.max_total > ctrl.max_jump_prob or plan.max_single > 1.0:
        if not adaptive:
            raise StepTooLargeError(
                f"time step too large at t={t:.6g}: jump probability {plan.max_total:.3g} "
                f"exceeds max_jump_prob={ctrl.max_jump_prob}"
            )
        if dt / 2 < min_dt:
            raise StepTooLargeError(f"adaptive step size underflow at t={t:.6g}")
        out = _advance(e, model, ctrl, dt / 2, streams, strict, adaptive, tracker, min_dt)
        out.merge(_advance(e, model, ctrl, dt / 2, streams, strict, adaptive, tracker, min_dt))
        return out
    return _execute(e, model, ctrl, plan, streams, strict, tracker)


def _execute(e, model, ctrl, plan: StepPlan, streams, strict, tracker) -> StepOutcome:
    t, dt = plan.t, plan.dt
    k = streams.next_step()
    outcome = StepOutcome(max_prob_seen=plan.max_total, dt_used=dt, substeps=1)
    if plan.orphaned:
        labels = sorted({model.channels[j].label for j, _ in plan.orphaned})
        msg = (
            f"unraveling breakdown at t={t:.6g}: negative channel(s) {labels} act on populated "
            f"states whose jump images are unpopulated"
        )
        if strict:
            raise UnravelingBreakdown(msg)
        log.warning(msg)
        outcome.orphaned = [(model.channels[j].label, sid) for j, sid in plan.orphaned]

    # sample everything from the snapshot, then apply transfers
    moves = []
    tracked_choice = None
    for sid, blist in plan.branches.items():
        if not blist:
            continue
        n = e.count(sid)
        counts = _sample_counts(n, blist, streams.stream(k, sid))
        moves.append((sid, blist, counts))
        if tracker is not None and tracker.state_id == sid:
            # members are exchangeable: the tracked one is a uniform pick
            u = int(streams.tracked(k).integers(n))
            tracked_choice = (blist, _pick(u, counts))

    for sid, blist, counts in moves:
        for br, kk in zip(blist, counts):
            if kk == 0:
                continue
            if br.sign == POSITIVE:
                br.target_id = e.find_or_insert(br.post_state)
            tid = br.target_id
            if tid != sid:
                e.transfer_count(sid, tid, kk)
            outcome.events.append(JumpEvent(t, model.channels[br.channel].label, br.sign, sid, tid, kk))

    if tracked_choice is not None and tracked_choice[1] is not None:
        br = tracked_choice[0][tracked_choice[1]]
        tracker.events.append(
            JumpEvent(t, model.channels[br.channel].label, br.sign, tracker.state_id, br.target_id, 1)
        )
        tracker.state_id = br.target_id

    e.purge()
    _propagate(e, model, ctrl, t, dt)
    e.time = t + dt
    return outcome


def _pick(u: int, counts: list[int]) -> int | None:
    """Branch index of member ``u`` when members are laid out branch by branch."""
    acc = 0
    for b, c in enumerate(counts):
        acc += c
        if u < acc:
            return b
    return None


def _propagate(e: Ensemble, model: ModelSpec, ctrl: StepControl, t: float, dt: float) -> None:
    ids, psi, _ = e.matrix()
    if not ids:
        return
    out = propagate_batch(psi, step_maps(model, t, dt, ctrl.integrator_order), dt)
    ns = kernels.normalize_batch(out)
    if np.any(~(ns > 1e-30)):
        raise ArithmeticError("state annihilated during deterministic evolution")
    e.set_vectors(ids, out)


# --------------------------------------------------------------------------
# deterministic branch average


def branch_average(e: Ensemble, model: ModelSpec, ctrl: StepControl) -> np.ndarray:
    """Probability-weighted average over every branch of one step.

    Returns the density matrix the stochastic step reproduces on average:
    no-jump evolution, forward jumps and reverse jumps, each weighted by its
    snapshot probability. No random numbers are drawn.
    """
    t, dt = e.time, ctrl.dt
    plan = plan_step(e, model, t, dt)
    maps = step_maps(model, t, dt, ctrl.integrator_order)

    def evolve(v):
        out = propagate_batch(np.asarray(v, dtype=np.complex128).reshape(1, -1), maps, dt)
        kernels.normalize_batch(out)
        return out[0]

    rho = np.zeros((e.dim, e.dim), dtype=np.complex128)
    for s in e.populated():
        w = s.count / e.total
        blist = plan.branches[s.id]
        stay = 1.0 - sum(b.prob for b in blist)
        v = evolve(s.vector)
        rho += (w * stay) * np.outer(v, v.conj())
        for br in blist:
            target = br.post_state if br.sign == POSITIVE else e.vector(br.target_id)
            v = evolve(target)
            rho += (w * br.prob) * np.outer(v, v.conj())
    return rho
