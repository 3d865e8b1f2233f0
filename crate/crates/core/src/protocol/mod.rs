//! The messaging protocol: cheap path sends, spot checks, quarantine.
//!
//! A send travels `entry broadcast → single-relay hops → exit broadcast →
//! delivery`, costing O(q) messages instead of the O(q²·levels) of full
//! quorum-to-quorum relaying. The price is vulnerability: each hop is one
//! node, so one faulty relay can corrupt or drop the payload.
//!
//! Detection is probabilistic. After each send, with a small probability,
//! the sender launches a check that re-traces the path through randomly
//! drawn witnesses (see [`check`]). Any honest witness that observes an
//! inconsistency — conflicting copies, an invalid signature, a missing
//! expected message — raises an alarm, and the quarantine update
//! ([`update`]) converts the alarm into marked conflict pairs.
//!
//! Messages sent within / between full quorums are *redundant*: a good
//! majority carries the genuine content, so receivers silently ignore
//! invalid copies. Messages on *selected* legs (single relays, check
//! witnesses) are load-bearing: there an invalid or missing copy is
//! exactly the signal checks exist to catch, and honest receivers treat
//! it as an alarm rather than noise.

pub mod check;
pub mod update;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{AdversaryState, BadAction, RelayCtx, RelayPhase};
use crate::crypto::{CryptoRegistry, Digest, DigestTable, EphemeralSig, KeyId, SignedMessage};
use crate::graph::{NodeId, QuorumGraph};
use crate::math::{path_levels_for, quorum_size_for, subquorum_size_for};
use crate::membership::{ConflictPair, MarkTable};
use crate::oracles::iterated_log;
use crate::rng::rng_stream;

pub use update::{run_update, UpdateOutcome};

/// Which check procedure guards sends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum CheckVariant {
    /// Per-level random subsets re-walk the path once.
    Subset,
    /// Repeated rounds route fresh probes through chains of single
    /// random selections that accumulate into growing witness sets.
    Chain,
}

/// Derived protocol parameters for a network size.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ProtocolParams {
    pub n: u32,
    pub levels: u32,
    pub quorum_size: u32,
    /// Witness subset size for the subset check.
    pub subquorum: u32,
    pub variant: CheckVariant,
    /// Probability of invoking the check after a send.
    pub p_call: f64,
    /// Rounds the chain check runs.
    pub chain_rounds: u32,
    /// Invoke the check after every send (measurement runs).
    pub force_check: bool,
    /// Worst-case delivery delay in rounds per message step.
    pub h: u32,
}

impl ProtocolParams {
    pub fn derive(n: u32, variant: CheckVariant, force_check: bool) -> Self {
        let subquorum = subquorum_size_for(n as u64);
        let log_star = iterated_log(n as f64).max(1);
        let p_call = match variant {
            CheckVariant::Subset => 1.0 / ((subquorum * subquorum) as f64),
            CheckVariant::Chain => 1.0 / ((log_star * log_star) as f64),
        }
        .clamp(f64::MIN_POSITIVE, 1.0);
        Self {
            n,
            levels: path_levels_for(n as u64),
            quorum_size: quorum_size_for(n as u64),
            subquorum,
            variant,
            p_call,
            chain_rounds: 4 * log_star,
            force_check,
            h: 1,
        }
    }
}

/// Opaque message payload. Genuine payloads and the adversary's common
/// substitute are distinct values per send.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize)]
pub struct Payload(pub u32);

pub fn genuine_payload(send_ix: u32) -> Payload {
    Payload(send_ix)
}

/// The single wrong payload all corrupting fault nodes substitute during
/// one send (coordinated adversary).
pub fn corrupt_payload(send_ix: u32) -> Payload {
    Payload(0x8000_0000 | send_ix)
}

/// What role a message plays.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum MsgKind {
    /// The payload itself on the data path.
    Data,
    /// Subset-check probe echoing the payload.
    SubsetProbe,
    /// Chain-check probe for one round, naming the check's ephemeral
    /// public key.
    ChainProbe { round: u32, key: KeyId },
}

/// Content that digests and comparisons operate on. `context` is the
/// send index, so identical payloads in different sends never alias.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct MsgCore {
    pub payload: Payload,
    pub kind: MsgKind,
    pub context: u32,
}

/// A message in flight: content plus whatever signatures ride along.
/// Corruption rewrites the payload but cannot rewrite signatures, so a
/// corrupted signed message carries signatures that no longer match.
#[derive(Clone, Copy, Debug)]
pub struct Msg {
    pub core: MsgCore,
    pub qsig: Option<SignedMessage>,
    pub esig: Option<EphemeralSig>,
}

impl Msg {
    pub fn raw(core: MsgCore) -> Self {
        Self { core, qsig: None, esig: None }
    }

    /// The adversary's rewrite: payload replaced, signatures untouched.
    pub fn corrupted(self, p: Payload) -> Self {
        Self { core: MsgCore { payload: p, ..self.core }, ..self }
    }
}

/// Chronological position of a transcript event. Path phases order before
/// check phases so the earliest conflicting handoff of an alarm is the
/// data path's.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct StageKey {
    pub phase: u8,
    pub round: u32,
    pub level: u32,
    pub sub: u8,
}

pub const PHASE_PATH_ENTRY: u8 = 0;
pub const PHASE_PATH_HOP: u8 = 1;
pub const PHASE_CHECK_ENTRY: u8 = 2;
pub const PHASE_CHECK_LEG: u8 = 3;
pub const PHASE_CHECK_EXIT: u8 = 4;
pub const PHASE_CHECK_SWEEP: u8 = 5;

/// A recorded point-to-point handoff on a selected (load-bearing) leg.
/// `sent == None` records a withheld obligation.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub stage: StageKey,
    pub from: NodeId,
    pub to: NodeId,
    pub from_q: u32,
    pub to_q: u32,
    pub sent: Option<MsgCore>,
}

/// A recorded quorum broadcast (redundant delivery to all members).
#[derive(Clone, Copy, Debug)]
pub struct BcastEv {
    pub stage: StageKey,
    pub caller: NodeId,
    pub quorum: u32,
    pub content: MsgCore,
    pub ok: bool,
}

/// Why an honest observer raised an alarm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggerReason {
    /// A copy whose signature does not match its content.
    InvalidCopy { from: NodeId },
    /// A scheduled sender's copy never arrived.
    MissingCopy { from: NodeId },
    /// Copies of the same probe disagree.
    MixedCopies,
    /// Probe and delivered data disagree at the exit quorum.
    ExitMismatch,
    /// Probe arrived but the data send never did.
    MissingData,
    /// A witness holding the check key stopped receiving rounds.
    StarvedHolder,
    /// A witness discovered it had been skipped in earlier rounds.
    RetroactiveMiss,
}

/// An honest observation that starts the quarantine update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trigger {
    pub stage: StageKey,
    pub observer: NodeId,
    pub reason: TriggerReason,
}

impl Trigger {
    fn order_key(&self) -> (StageKey, u32) {
        (self.stage, self.observer.0)
    }
}

/// Everything recorded during one send, for the update to mine.
#[derive(Default)]
pub struct Transcript {
    pub send_ix: u32,
    pub path: Vec<usize>,
    /// Data-path relay selections, in order, as far as the chain lived.
    pub selections: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub bcasts: Vec<BcastEv>,
    /// All genuine alarms honest observers raised this send.
    pub triggers: Vec<Trigger>,
}

impl Transcript {
    fn reset(&mut self, send_ix: u32) {
        self.send_ix = send_ix;
        self.path.clear();
        self.selections.clear();
        self.edges.clear();
        self.bcasts.clear();
        self.triggers.clear();
    }

    pub fn first_trigger(&self) -> Option<Trigger> {
        self.triggers.iter().copied().min_by_key(|t| t.order_key())
    }
}

/// Message and round counters for one send.
#[derive(Clone, Copy, Default, Debug)]
pub struct Meter {
    pub messages: u64,
    pub rounds: u64,
}

impl Meter {
    pub fn msg(&mut self, k: u64) {
        self.messages += k;
    }

    pub fn tick(&mut self, steps: u64) {
        self.rounds += steps;
    }
}

/// Result of one routed send, including whatever checking and quarantine
/// work it triggered.
#[derive(Clone, Debug)]
pub struct SendRecord {
    pub index: u32,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub messages: u64,
    pub rounds: u64,
    /// Ground truth: the receiver did not accept the genuine payload.
    pub corrupted: bool,
    pub check_invoked: bool,
    /// A verified quarantine update ran.
    pub detected: bool,
    /// Check round in which the triggering alarm was raised (0 for the
    /// single-pass subset check).
    pub trigger_round: Option<u32>,
    pub update: Option<UpdateOutcome>,
}

/// Outcome of the path traversal itself.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub entry_ok: bool,
    /// Content broadcast into the exit quorum, if the relay chain lived.
    pub exit_value: Option<MsgCore>,
    /// What the receiver accepted (strict majority of delivery copies).
    pub delivered: Option<Payload>,
}

/// Protocol state for one trial: topology, key material, quarantine
/// marks, adversary, randomness streams, and the per-send transcript.
pub struct ProtocolCtx<'a> {
    pub graph: &'a QuorumGraph,
    pub adv: &'a AdversaryState,
    pub params: ProtocolParams,
    pub crypto: CryptoRegistry,
    pub digests: DigestTable<MsgCore>,
    pub marks: MarkTable,
    pub meter: Meter,
    pub transcript: Transcript,
    pub(crate) rng_select: ChaCha8Rng,
    pub(crate) rng_index: ChaCha8Rng,
    pub(crate) rng_coin: ChaCha8Rng,
    send_counter: u32,
    /// Counters for cross-cutting soundness checks (see the engine).
    pub good_good_pairs: u64,
}

impl<'a> ProtocolCtx<'a> {
    pub fn new(
        graph: &'a QuorumGraph,
        adv: &'a AdversaryState,
        params: ProtocolParams,
        seed: u64,
    ) -> Self {
        let mut dkg = rng_stream(seed, "dkg");
        Self {
            graph,
            adv,
            params,
            crypto: CryptoRegistry::setup(&mut dkg),
            digests: DigestTable::new(),
            marks: MarkTable::new(graph),
            meter: Meter::default(),
            transcript: Transcript::default(),
            rng_select: rng_stream(seed, "protocol-select"),
            rng_index: rng_stream(seed, "check-index"),
            rng_coin: rng_stream(seed, "check-coin"),
            send_counter: 0,
            good_good_pairs: 0,
        }
    }

    pub fn digest_core(&mut self, core: MsgCore) -> Digest {
        self.digests.digest(&core)
    }

    pub(crate) fn is_bad(&self, x: NodeId) -> bool {
        self.adv.is_bad(x)
    }

    /// The behavioral choice of `node` for one obligation: honest nodes
    /// always comply; faulty nodes ask the adversary.
    pub(crate) fn relay_action(&self, node: NodeId, ctx: &RelayCtx) -> BadAction {
        if self.is_bad(node) {
            self.adv.decide(node, ctx)
        } else {
            BadAction::Faithful
        }
    }

    /// Applies a relay decision to a held message. `Equivocate` degrades
    /// to `Corrupt` on single-value legs (the built-in strategies never
    /// choose it).
    pub(crate) fn apply_action(&self, held: Msg, action: BadAction) -> Option<Msg> {
        let bad_payload = corrupt_payload(self.transcript.send_ix);
        match action {
            BadAction::Faithful => Some(held),
            BadAction::Drop => None,
            BadAction::Corrupt | BadAction::Equivocate => Some(held.corrupted(bad_payload)),
        }
    }

    /// Representative of a quorum for attested-delivery bookkeeping: its
    /// lowest-id honest member (falls back to the lowest member if the
    /// quorum somehow has none).
    pub(crate) fn attestor(&self, q: usize) -> NodeId {
        self.graph
            .members(q)
            .iter()
            .copied()
            .find(|&m| !self.is_bad(m))
            .unwrap_or(self.graph.members(q)[0])
    }

    /// Uniform choice among the unmarked members of quorum `q`.
    pub(crate) fn pick_unmarked(&mut self, q: usize) -> NodeId {
        let pool = self.marks.unmarked_members(self.graph, q);
        debug_assert!(!pool.is_empty());
        pool[self.rng_select.gen_range(0..pool.len())]
    }

    /// Broadcast of `core` by `caller` into quorum `q`: caller hands the
    /// content to all members, members return signing shares, and the
    /// assembled quorum-signed message is redistributed to all members.
    /// Metering: q + shares returned + q messages, three rounds.
    pub(crate) fn quorum_broadcast(
        &mut self,
        stage: StageKey,
        caller: NodeId,
        q: usize,
        core: MsgCore,
        esig: Option<EphemeralSig>,
    ) -> Option<Msg> {
        let members: Vec<NodeId> = self.graph.members(q).to_vec();
        let qsize = members.len() as u64;
        self.meter.msg(qsize);
        let digest = self.digest_core(core);
        let mut shares = Vec::with_capacity(members.len());
        let share_ctx = RelayCtx::new(RelayPhase::ShareSign);
        for &m in &members {
            match self.relay_action(m, &share_ctx) {
                BadAction::Faithful | BadAction::Corrupt => {
                    // A member cannot alter the content it signs over —
                    // shares bind to the caller's digest or are invalid.
                    shares.push(self.crypto.sign_share(self.graph, m, q as u32, digest).unwrap());
                }
                BadAction::Equivocate => {
                    // Share over unrelated content: does not count.
                    let other = MsgCore {
                        payload: corrupt_payload(self.transcript.send_ix),
                        ..core
                    };
                    let d = self.digest_core(other);
                    let bogus = self.crypto.sign_share(self.graph, m, q as u32, d).unwrap();
                    shares.push(bogus);
                }
                BadAction::Drop => {}
            }
        }
        self.meter.msg(shares.len() as u64);
        let combined = self.crypto.combine_shares(self.graph, q as u32, digest, &shares);
        let ok = combined.is_ok();
        self.transcript.bcasts.push(BcastEv { stage, caller, quorum: q as u32, content: core, ok });
        self.meter.tick(3 * self.params.h as u64);
        match combined {
            Ok(signed) => {
                self.meter.msg(qsize);
                Some(Msg { core, qsig: Some(signed), esig })
            }
            Err(_) => None,
        }
    }

    pub(crate) fn record_edge(
        &mut self,
        stage: StageKey,
        from: NodeId,
        to: NodeId,
        from_q: usize,
        to_q: usize,
        sent: Option<MsgCore>,
    ) {
        self.transcript.edges.push(Edge {
            stage,
            from,
            to,
            from_q: from_q as u32,
            to_q: to_q as u32,
            sent,
        });
    }

    /// The cheap routed send: entry broadcast, single-relay hops, exit
    /// broadcast, majority delivery to `r`.
    pub fn send_path(&mut self, s: NodeId, r: NodeId, payload: Payload) -> PathOutcome {
        let path = self.graph.path(s, r).quorums;
        self.transcript.path = path.clone();
        let levels = path.len();
        let core = MsgCore { payload, kind: MsgKind::Data, context: self.transcript.send_ix };

        let entry_stage = StageKey { phase: PHASE_PATH_ENTRY, round: 0, level: 0, sub: 0 };
        let Some(_signed_entry) = self.quorum_broadcast(entry_stage, s, path[0], core, None)
        else {
            return PathOutcome { entry_ok: false, exit_value: None, delivered: None };
        };

        // First relay, drawn from the entry quorum's unmarked pool. Its
        // receipt of the broadcast content is attested by the quorum.
        let q1 = self.pick_unmarked(path[0]);
        self.transcript.selections.push(q1);
        let attestor = self.attestor(path[0]);
        if attestor != q1 {
            self.record_edge(entry_stage, attestor, q1, path[0], path[0], Some(core));
        }

        // Hops relay the bare payload: mid-path quorums cannot see the
        // entry quorum's key, so the signed wrapper is not forwarded.
        let mut held = Msg::raw(core);
        let mut current = q1;
        let mut alive = true;
        for level in 1..levels {
            let next_q = path[level];
            let pick = self.pick_unmarked(next_q);
            let ctx = RelayCtx { level: level as u32, ..RelayCtx::new(RelayPhase::PathHop) };
            let action = self.relay_action(current, &ctx);
            let sent = self.apply_action(held, action);
            self.meter.tick(self.params.h as u64);
            match sent {
                Some(msg) => {
                    self.meter.msg(1);
                    let stage = StageKey {
                        phase: PHASE_PATH_HOP,
                        round: 0,
                        level: level as u32,
                        sub: 0,
                    };
                    self.record_edge(stage, current, pick, path[level - 1], next_q, Some(msg.core));
                    self.transcript.selections.push(pick);
                    current = pick;
                    held = msg;
                }
                None => {
                    alive = false;
                    break;
                }
            }
        }

        let mut exit_value = None;
        if alive {
            let exit_q = *path.last().unwrap();
            let ctx = RelayCtx { level: levels as u32, ..RelayCtx::new(RelayPhase::PathExit) };
            let action = self.relay_action(current, &ctx);
            if let Some(msg) = self.apply_action(held, action) {
                let stage = StageKey {
                    phase: PHASE_PATH_HOP,
                    round: 0,
                    level: levels as u32,
                    sub: 1,
                };
                if self.quorum_broadcast(stage, current, exit_q, msg.core, None).is_some() {
                    exit_value = Some(msg.core);
                }
            }
        }

        // Delivery: every exit-quorum member forwards its copy to `r`,
        // which accepts a strict majority value.
        let mut delivered = None;
        if let Some(exit_core) = exit_value {
            let exit_q = *path.last().unwrap();
            let members: Vec<NodeId> = self.graph.members(exit_q).to_vec();
            let deliver_ctx = RelayCtx::new(RelayPhase::DeliverToReceiver);
            let mut counts: BTreeMap<Payload, u32> = BTreeMap::new();
            let mut copies = 0u64;
            for &m in &members {
                let action = self.relay_action(m, &deliver_ctx);
                if let Some(msg) = self.apply_action(Msg::raw(exit_core), action) {
                    copies += 1;
                    *counts.entry(msg.core.payload).or_insert(0) += 1;
                }
            }
            self.meter.msg(copies);
            self.meter.tick(self.params.h as u64);
            let majority = members.len() as u32 / 2 + 1;
            delivered = counts
                .iter()
                .find(|&(_, &c)| c >= majority)
                .map(|(&p, _)| p);
        }

        PathOutcome { entry_ok: true, exit_value, delivered }
    }

    /// The heavyweight baseline: the message traverses the same quorum
    /// path with every member forwarding to every next-level member, and
    /// receivers keeping the majority value.
    pub fn naive_send(&mut self, s: NodeId, r: NodeId, payload: Payload) -> PathOutcome {
        let path = self.graph.path(s, r).quorums;
        let core = MsgCore { payload, kind: MsgKind::Data, context: self.transcript.send_ix };
        let bad_payload = corrupt_payload(self.transcript.send_ix);

        // s hands the payload to every entry-quorum member.
        let entry = path[0];
        self.meter.msg(self.graph.members(entry).len() as u64);
        self.meter.tick(self.params.h as u64);
        // Value the honest members of the current quorum hold.
        let mut good_value = Some(core.payload);

        for w in path.windows(2) {
            let (from_q, to_q) = (w[0], w[1]);
            let senders = self.graph.members(from_q);
            let receivers = self.graph.members(to_q).len() as u64;
            let mut sent_copies = 0u64;
            let mut counts: BTreeMap<Payload, u32> = BTreeMap::new();
            for &u in senders {
                let value = if self.is_bad(u) {
                    match self.adv.decide(u, &RelayCtx::new(RelayPhase::PathHop)) {
                        BadAction::Faithful => good_value,
                        BadAction::Drop => None,
                        BadAction::Corrupt | BadAction::Equivocate => Some(bad_payload),
                    }
                } else {
                    good_value
                };
                if let Some(v) = value {
                    sent_copies += 1;
                    *counts.entry(v).or_insert(0) += 1;
                }
            }
            self.meter.msg(sent_copies * receivers);
            self.meter.tick(self.params.h as u64);
            // Honest receivers keep the most frequent value (ties: the
            // smaller payload, deterministically).
            good_value = counts
                .iter()
                .max_by_key(|&(p, &c)| (c, core::cmp::Reverse(*p)))
                .filter(|&(_, &c)| c > 0)
                .map(|(&p, _)| p);
        }

        // Exit-quorum members forward to r, which keeps the majority.
        let exit_q = *path.last().unwrap();
        let members = self.graph.members(exit_q);
        let mut counts: BTreeMap<Payload, u32> = BTreeMap::new();
        let mut copies = 0u64;
        for &m in members {
            let value = if self.is_bad(m) {
                match self.adv.decide(m, &RelayCtx::new(RelayPhase::DeliverToReceiver)) {
                    BadAction::Faithful => good_value,
                    BadAction::Drop => None,
                    BadAction::Corrupt | BadAction::Equivocate => Some(bad_payload),
                }
            } else {
                good_value
            };
            if let Some(v) = value {
                copies += 1;
                *counts.entry(v).or_insert(0) += 1;
            }
        }
        self.meter.msg(copies);
        self.meter.tick(self.params.h as u64);
        let majority = members.len() as u32 / 2 + 1;
        let delivered = counts.iter().find(|&(_, &c)| c >= majority).map(|(&p, _)| p);
        let _ = r;
        PathOutcome { entry_ok: true, exit_value: good_value.map(|p| MsgCore { payload: p, ..core }), delivered }
    }

    /// One full protocol send: route the payload, maybe check, maybe
    /// quarantine. Returns the complete per-send record.
    pub fn send(&mut self, s: NodeId, r: NodeId) -> SendRecord {
        let index = self.send_counter;
        self.send_counter += 1;
        self.transcript.reset(index);
        self.meter = Meter::default();
        let payload = genuine_payload(index);

        let outcome = self.send_path(s, r, payload);
        let corrupted = outcome.delivered != Some(payload);

        let invoke = if self.params.force_check {
            true
        } else {
            self.rng_coin.gen::<f64>() < self.params.p_call
        };

        if invoke {
            match self.params.variant {
                CheckVariant::Subset => check::subset_check(self, s, r, payload, &outcome),
                CheckVariant::Chain => check::chain_check(self, s, r, payload, &outcome),
            }
        }

        let mut update = None;
        let mut detected = false;
        let mut trigger_round = None;
        if let Some(trigger) = self.transcript.first_trigger() {
            trigger_round = Some(trigger.stage.round);
            let out = update::run_update(self, &trigger);
            detected = out.verified;
            update = Some(out);
        }

        SendRecord {
            index,
            sender: s,
            receiver: r,
            messages: self.meter.messages,
            rounds: self.meter.rounds,
            corrupted,
            check_invoked: invoke,
            detected,
            trigger_round,
            update,
        }
    }

    /// One baseline send (no checks — corruption of the redundant relay
    /// is already next to impossible and there is nothing cheap to
    /// verify).
    pub fn send_naive(&mut self, s: NodeId, r: NodeId) -> SendRecord {
        let index = self.send_counter;
        self.send_counter += 1;
        self.transcript.reset(index);
        self.meter = Meter::default();
        let payload = genuine_payload(index);
        let outcome = self.naive_send(s, r, payload);
        SendRecord {
            index,
            sender: s,
            receiver: r,
            messages: self.meter.messages,
            rounds: self.meter.rounds,
            corrupted: outcome.delivered != Some(payload),
            check_invoked: false,
            detected: false,
            trigger_round: None,
            update: None,
        }
    }

    /// Conflict pairs of the last update, for diagnostics.
    pub fn last_pairs(record: &SendRecord) -> &[ConflictPair] {
        record.update.as_ref().map(|u| u.pairs.as_slice()).unwrap_or(&[])
    }
}
