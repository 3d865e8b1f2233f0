//! The two spot-check procedures.
//!
//! Both re-trace the send's quorum path with randomly drawn witnesses and
//! compare what arrives against what the path delivered. Honest witnesses
//! alarm on conflicting copies, invalid signatures, or missing expected
//! messages; the first alarm starts the quarantine update and interrupts
//! the rest of the check.
//!
//! *Subset check*: one pass. Every path level draws a small random subset
//! of its quorum's unmarked members; each subset fans the probe out to
//! the next, and the final subset reports into the exit quorum, which
//! compares the probe against the delivered payload. Cheap, but a level
//! whose entire subset is faulty can rewrite the probe consistently and
//! go unseen.
//!
//! *Chain check*: several rounds, one fresh random selection per level
//! per round, each carrying a probe signed under a per-check ephemeral
//! key that faulty nodes cannot re-sign. Selections accumulate: everyone
//! selected so far must keep receiving every later round, so a faulty
//! relay that stalls the probe leaves behind either starved key-holders
//! (alarm now) or skipped witnesses that alarm retroactively the moment
//! a later round reaches them. An adversary can only keep stalling
//! inside an interval of levels that shrinks round by round.

use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{choose_interval_block, RelayCtx, RelayPhase, Strategy};
use crate::graph::NodeId;
use crate::protocol::{
    Msg, MsgCore, MsgKind, PathOutcome, Payload, ProtocolCtx, StageKey, Trigger, TriggerReason,
    PHASE_CHECK_ENTRY, PHASE_CHECK_EXIT, PHASE_CHECK_LEG, PHASE_CHECK_SWEEP,
};

/// Pre-drawn random witness indices: for each path level and each
/// possible selection-pool size `p`, `k` numbers in `1..=p`. Drawing the
/// whole array up front (as the sender would, to ship it inside the
/// probe) keeps the schedule deterministic and publicly checkable.
pub struct RandomIndexArray {
    max_pool: u32,
    k: u32,
    entries: Vec<u16>,
}

impl RandomIndexArray {
    pub fn draw(rng: &mut ChaCha8Rng, rows: u32, max_pool: u32, k: u32) -> Self {
        let mut entries = Vec::with_capacity((rows * max_pool * k) as usize);
        for _row in 0..rows {
            for pool in 1..=max_pool {
                for _ in 0..k {
                    entries.push(rng.gen_range(1..=pool) as u16);
                }
            }
        }
        Self { max_pool, k, entries }
    }

    /// The `k` indices (1-based, multiset) for `row` when the selection
    /// pool has `pool` entries.
    pub fn slots(&self, row: u32, pool: usize) -> &[u16] {
        debug_assert!(pool >= 1 && pool <= self.max_pool as usize);
        let base = (row * self.max_pool + (pool as u32 - 1)) * self.k;
        &self.entries[base as usize..(base + self.k) as usize]
    }
}

fn trigger(ctx: &mut ProtocolCtx, stage: StageKey, observer: NodeId, reason: TriggerReason) {
    ctx.transcript.triggers.push(Trigger { stage, observer, reason });
}

/// Validity of one received probe copy from a witness's viewpoint.
fn subset_copy_ok(ctx: &mut ProtocolCtx, viewer: NodeId, copy: &Msg) -> bool {
    let Some(qsig) = copy.qsig else {
        return true; // bare content: nothing to judge, taken at face value
    };
    if !ctx.graph.can_see_key(viewer, qsig.quorum as usize) {
        return true; // cannot verify from here: taken at face value
    }
    let d = ctx.digest_core(copy.core);
    let key = ctx.crypto.public_key_for(ctx.graph, viewer, qsig.quorum).unwrap();
    ctx.crypto.verify(key, &qsig, d)
}

/// One-pass subset re-walk of the path.
pub(crate) fn subset_check(
    ctx: &mut ProtocolCtx,
    s: NodeId,
    _r: NodeId,
    payload: Payload,
    outcome: &PathOutcome,
) {
    let path = ctx.transcript.path.clone();
    let levels = path.len();
    let k = ctx.params.subquorum;
    let send_ix = ctx.transcript.send_ix;
    let data_corrupted = outcome.delivered != Some(payload);
    let probe_core = MsgCore { payload, kind: MsgKind::SubsetProbe, context: send_ix };

    // The sender announces the probe (and, implicitly, the witness
    // schedule) through its entry quorum, signed.
    let entry_stage = StageKey { phase: PHASE_CHECK_ENTRY, round: 0, level: 1, sub: 0 };
    let Some(probe) = ctx.quorum_broadcast(entry_stage, s, path[0], probe_core, None) else {
        return;
    };
    let rarr = RandomIndexArray::draw(&mut ctx.rng_index, levels as u32, ctx.params.quorum_size, k);

    // Witness subsets per level: slot lists (with multiplicity, for
    // fan-out metering) and deduplicated member sets.
    let mut slot_lists: Vec<Vec<NodeId>> = Vec::with_capacity(levels);
    let mut sets: Vec<Vec<NodeId>> = Vec::with_capacity(levels);
    for level in 1..=levels {
        let pool = ctx.marks.unmarked_members(ctx.graph, path[level - 1]);
        let slots: Vec<NodeId> = rarr
            .slots(level as u32 - 1, pool.len())
            .iter()
            .map(|&i| pool[i as usize - 1])
            .collect();
        let mut set = slots.clone();
        set.sort_unstable();
        set.dedup();
        slot_lists.push(slots);
        sets.push(set);
    }

    // Entry quorum members hand the signed probe to the first subset
    // (quorum-redundant: the genuine copy always gets through).
    let mut held: alloc::collections::BTreeMap<NodeId, Msg> = alloc::collections::BTreeMap::new();
    ctx.meter.msg(ctx.params.quorum_size as u64 * k as u64);
    ctx.meter.tick(ctx.params.h as u64);
    let attestor = ctx.attestor(path[0]);
    let deliver_stage = StageKey { phase: PHASE_CHECK_ENTRY, round: 0, level: 1, sub: 1 };
    for &v in &sets[0] {
        held.insert(v, probe);
        if v != attestor {
            ctx.record_edge(deliver_stage, attestor, v, path[0], path[0], Some(probe_core));
        }
    }

    // Fan-out legs between consecutive subsets.
    for leg in 1..levels {
        let senders = sets[leg - 1].clone();
        let receivers = sets[leg].clone();
        let whole_subset_bad = senders.iter().all(|&u| ctx.is_bad(u));
        let mut sent_of: Vec<(NodeId, Option<Msg>)> = Vec::with_capacity(senders.len());
        for &u in &senders {
            let msg = match held.get(&u) {
                None => None,
                Some(&m) => {
                    let rc = RelayCtx {
                        level: leg as u32,
                        whole_subset_bad,
                        data_corrupted,
                        ..RelayCtx::new(RelayPhase::SubsetFan)
                    };
                    let action = ctx.relay_action(u, &rc);
                    ctx.apply_action(m, action)
                }
            };
            sent_of.push((u, msg));
        }
        // Fan-out metering counts slots, not distinct members.
        let sent_slots = slot_lists[leg - 1]
            .iter()
            .filter(|u| sent_of.iter().any(|(v, m)| v == *u && m.is_some()))
            .count();
        ctx.meter.msg(sent_slots as u64 * k as u64);
        ctx.meter.tick(ctx.params.h as u64);

        let stage = StageKey { phase: PHASE_CHECK_LEG, round: 0, level: leg as u32 + 1, sub: 0 };
        for &v in &receivers {
            for (u, m) in &sent_of {
                ctx.record_edge(stage, *u, v, path[leg - 1], path[leg], m.map(|x| x.core));
            }
            if ctx.is_bad(v) {
                // Absorbs knowledge; prefers a genuine copy if any came.
                let pick = sent_of
                    .iter()
                    .filter_map(|(_, m)| *m)
                    .find(|m| m.core == probe_core)
                    .or_else(|| sent_of.iter().filter_map(|(_, m)| *m).next());
                if let Some(m) = pick {
                    held.insert(v, m);
                }
                continue;
            }
            let received: Vec<(NodeId, Msg)> =
                sent_of.iter().filter_map(|&(u, m)| m.map(|x| (u, x))).collect();
            if received.is_empty() {
                continue; // never contacted: learns nothing
            }
            // Contacted witnesses expect a copy from every scheduled
            // sender; the fan-out reaches whole subsets, so absence
            // means deviation (what signed reports would later prove).
            let mut accepted: Vec<MsgCore> = Vec::new();
            for &(u, m) in &received {
                if subset_copy_ok(ctx, v, &m) {
                    accepted.push(m.core);
                } else {
                    trigger(ctx, stage, v, TriggerReason::InvalidCopy { from: u });
                }
            }
            for (u, m) in &sent_of {
                if m.is_none() {
                    trigger(ctx, stage, v, TriggerReason::MissingCopy { from: *u });
                }
            }
            if accepted.windows(2).any(|w| w[0] != w[1]) {
                trigger(ctx, stage, v, TriggerReason::MixedCopies);
            }
            if let Some(&first) = accepted.first() {
                let m = received.iter().find(|(_, m)| m.core == first).unwrap().1;
                held.insert(v, m);
            }
        }
    }

    // Final subset reports into the exit quorum.
    let exit_q = path[levels - 1];
    let exit_set = &sets[levels - 1];
    let whole_exit_bad = exit_set.iter().all(|&u| ctx.is_bad(u));
    let mut reports: Vec<(NodeId, MsgCore)> = Vec::new();
    for (slot, &u) in slot_lists[levels - 1].clone().iter().enumerate() {
        let Some(&m) = held.get(&u) else { continue };
        let rc = RelayCtx {
            level: levels as u32,
            whole_subset_bad: whole_exit_bad,
            data_corrupted,
            ..RelayCtx::new(RelayPhase::SubsetExit)
        };
        let action = ctx.relay_action(u, &rc);
        let Some(out) = ctx.apply_action(m, action) else { continue };
        let stage = StageKey {
            phase: PHASE_CHECK_EXIT,
            round: 0,
            level: levels as u32,
            sub: slot as u8,
        };
        if ctx.quorum_broadcast(stage, u, exit_q, out.core, None).is_some() {
            reports.push((u, out.core));
        }
    }

    // Exit comparison: the quorum holds both the probe reports and the
    // delivered data value; any honest member sees the same evidence.
    if !reports.is_empty() {
        let observer = ctx.attestor(exit_q);
        let stage = StageKey {
            phase: PHASE_CHECK_EXIT,
            round: 0,
            level: levels as u32 + 1,
            sub: 0,
        };
        if reports.windows(2).any(|w| w[0].1 != w[1].1 ) {
            trigger(ctx, stage, observer, TriggerReason::MixedCopies);
        }
        match outcome.exit_value {
            None => trigger(ctx, stage, observer, TriggerReason::MissingData),
            Some(data) => {
                if reports.iter().any(|&(_, c)| c.payload != data.payload) {
                    trigger(ctx, stage, observer, TriggerReason::ExitMismatch);
                }
            }
        }
    }
}

/// Per-witness state in the chain check.
struct ColMember {
    node: NodeId,
    first_selected: u32,
    /// Last round whose probe this member genuinely received.
    last_seen: Option<u32>,
    held: Option<Msg>,
}

fn join(col: &mut Vec<ColMember>, node: NodeId, round: u32) {
    if !col.iter().any(|m| m.node == node) {
        col.push(ColMember { node, first_selected: round, last_seen: None, held: None });
    }
}

/// Structural validity of a chain probe copy: its ephemeral signature
/// must match its content under the key the probe itself names. Anyone
/// can evaluate this; corruption breaks it and re-signing is impossible.
fn chain_copy_ok(ctx: &mut ProtocolCtx, copy: &Msg) -> bool {
    let MsgKind::ChainProbe { key, .. } = copy.core.kind else { return false };
    let Some(esig) = copy.esig else { return false };
    let d = ctx.digest_core(copy.core);
    ctx.crypto.verify_ephemeral(key, &esig, d)
}

/// A good member's receipt bookkeeping: alarms on round gaps (it should
/// have been fed every round since first selected), then records.
fn observe_receipt(
    ctx: &mut ProtocolCtx,
    member: &mut ColMember,
    round: u32,
    copy: Msg,
    stage: StageKey,
) {
    let expected_from = match member.last_seen {
        Some(prev) => prev + 1,
        None => member.first_selected,
    };
    if expected_from < round {
        trigger(ctx, stage, member.node, TriggerReason::RetroactiveMiss);
    }
    member.last_seen = Some(round);
    member.held = Some(copy);
}

/// Multi-round chain check.
pub(crate) fn chain_check(
    ctx: &mut ProtocolCtx,
    s: NodeId,
    _r: NodeId,
    payload: Payload,
    outcome: &PathOutcome,
) {
    let path = ctx.transcript.path.clone();
    let levels = path.len();
    let send_ix = ctx.transcript.send_ix;
    let data_corrupted = outcome.delivered != Some(payload);
    let (kp, ks) = ctx.crypto.generate_ephemeral(s);
    let mut cols: Vec<Vec<ColMember>> = (0..levels).map(|_| Vec::new()).collect();
    let im = ctx.adv.strategy() == Strategy::IntervalMaintainer;

    for round in 1..=ctx.params.chain_rounds {
        let probe_core = MsgCore {
            payload,
            kind: MsgKind::ChainProbe { round, key: kp },
            context: send_ix,
        };
        let d = ctx.digest_core(probe_core);
        let esig = ctx.crypto.sign_ephemeral(&ks, d);
        let entry_stage = StageKey { phase: PHASE_CHECK_ENTRY, round, level: 1, sub: 0 };
        let Some(probe) = ctx.quorum_broadcast(entry_stage, s, path[0], probe_core, Some(esig))
        else {
            continue;
        };

        // Fresh selections for every level, drawn from unmarked pools.
        let sels: Vec<NodeId> = (1..=levels)
            .map(|level| {
                let pool = ctx.marks.unmarked_members(ctx.graph, path[level - 1]);
                pool[ctx.rng_index.gen_range(0..pool.len())]
            })
            .collect();

        // The interval adversary picks the level to stall this round:
        // above its highest fed key-holder, at or below its lowest
        // skipped witness.
        let block = if im && data_corrupted {
            let lo = cols
                .iter()
                .enumerate()
                .filter(|(_, col)| {
                    col.iter().any(|m| !ctx.is_bad(m.node) && m.last_seen.is_some())
                })
                .map(|(i, _)| i as u32 + 1)
                .max()
                .unwrap_or(0);
            let tripwire = cols
                .iter()
                .enumerate()
                .filter(|(_, col)| {
                    col.iter().any(|m| !ctx.is_bad(m.node) && m.last_seen.is_none())
                })
                .map(|(i, _)| i as u32 + 1)
                .min()
                .unwrap_or(levels as u32 + 1);
            debug_assert!(lo < tripwire, "fed holders above a skipped witness");
            let hi = tripwire.min(levels as u32);
            choose_interval_block(lo, hi, |level| ctx.is_bad(sels[level as usize - 1]))
        } else {
            None
        };

        // Level 1: the fresh selection joins, then the entry quorum
        // feeds every level-1 member (attested quorum delivery).
        join(&mut cols[0], sels[0], round);
        let attestor = ctx.attestor(path[0]);
        ctx.meter.msg(ctx.params.quorum_size as u64 * cols[0].len() as u64);
        ctx.meter.tick(ctx.params.h as u64);
        let feed_stage = StageKey { phase: PHASE_CHECK_ENTRY, round, level: 1, sub: 1 };
        for i in 0..cols[0].len() {
            let node = cols[0][i].node;
            if node != attestor {
                ctx.record_edge(feed_stage, attestor, node, path[0], path[0], Some(probe_core));
            }
            let mut member = core::mem::replace(
                &mut cols[0][i],
                ColMember { node, first_selected: 0, last_seen: None, held: None },
            );
            if ctx.is_bad(node) {
                member.last_seen = Some(round);
                member.held = Some(probe);
            } else {
                observe_receipt(ctx, &mut member, round, probe, feed_stage);
            }
            cols[0][i] = member;
        }

        // Wave through levels 2..=levels.
        for level in 2..=levels {
            let x = sels[level - 1];
            join(&mut cols[level - 1], x, round);

            // Senders: previous level's members fed this round.
            let senders: Vec<(NodeId, Msg)> = cols[level - 2]
                .iter()
                .filter(|m| m.last_seen == Some(round))
                .filter_map(|m| m.held.map(|h| (m.node, h)))
                .collect();
            if senders.is_empty() {
                continue; // wave is dead for this and later levels
            }

            let leg_stage =
                StageKey { phase: PHASE_CHECK_LEG, round, level: level as u32, sub: 0 };
            let mut copies: Vec<(NodeId, Option<Msg>)> = Vec::with_capacity(senders.len());
            for &(u, held_u) in &senders {
                let rc = RelayCtx {
                    round,
                    level: level as u32 - 1,
                    block_level: block,
                    data_corrupted,
                    ..RelayCtx::new(RelayPhase::ChainSend)
                };
                let action = ctx.relay_action(u, &rc);
                let sent = ctx.apply_action(held_u, action);
                ctx.record_edge(leg_stage, u, x, path[level - 2], path[level - 1], sent.map(|m| m.core));
                if sent.is_some() {
                    ctx.meter.msg(1);
                }
                copies.push((u, sent));
            }
            ctx.meter.tick(ctx.params.h as u64);

            let xi = cols[level - 1].iter().position(|m| m.node == x).unwrap();
            let arrived: Vec<(NodeId, Msg)> =
                copies.iter().filter_map(|&(u, m)| m.map(|x| (u, x))).collect();
            if arrived.is_empty() {
                continue; // x never contacted; it learns nothing
            }
            if ctx.is_bad(x) {
                let pick = arrived
                    .iter()
                    .map(|&(_, m)| m)
                    .find(|m| m.core == probe_core)
                    .unwrap_or(arrived[0].1);
                cols[level - 1][xi].last_seen = Some(round);
                cols[level - 1][xi].held = Some(pick);
            } else {
                let mut valid_copy: Option<Msg> = None;
                for &(u, m) in &arrived {
                    if chain_copy_ok(ctx, &m) {
                        valid_copy.get_or_insert(m);
                    } else {
                        trigger(ctx, leg_stage, x, TriggerReason::InvalidCopy { from: u });
                    }
                }
                for &(u, m) in &copies {
                    if m.is_none() {
                        trigger(ctx, leg_stage, x, TriggerReason::MissingCopy { from: u });
                    }
                }
                if let Some(copy) = valid_copy {
                    let mut member = core::mem::replace(
                        &mut cols[level - 1][xi],
                        ColMember { node: x, first_selected: 0, last_seen: None, held: None },
                    );
                    observe_receipt(ctx, &mut member, round, copy, leg_stage);
                    cols[level - 1][xi] = member;
                }
            }

            // The fresh selection relays to its level's other members.
            let relayer_fed = cols[level - 1][xi].last_seen == Some(round);
            if relayer_fed {
                let held_x = cols[level - 1][xi].held.unwrap();
                let rc = RelayCtx {
                    round,
                    level: level as u32,
                    block_level: block,
                    data_corrupted,
                    ..RelayCtx::new(RelayPhase::ChainRelay)
                };
                let action = ctx.relay_action(x, &rc);
                let sent = ctx.apply_action(held_x, action);
                let relay_stage =
                    StageKey { phase: PHASE_CHECK_LEG, round, level: level as u32, sub: 1 };
                for mi in 0..cols[level - 1].len() {
                    if mi == xi {
                        continue;
                    }
                    let node = cols[level - 1][mi].node;
                    ctx.record_edge(
                        relay_stage,
                        x,
                        node,
                        path[level - 1],
                        path[level - 1],
                        sent.map(|m| m.core),
                    );
                    let Some(msg) = sent else { continue };
                    ctx.meter.msg(1);
                    if ctx.is_bad(node) {
                        cols[level - 1][mi].last_seen = Some(round);
                        cols[level - 1][mi].held = Some(msg);
                        continue;
                    }
                    let ok = chain_copy_ok(ctx, &msg);
                    if !ok {
                        trigger(ctx, relay_stage, node, TriggerReason::InvalidCopy { from: x });
                        continue;
                    }
                    let mut member = core::mem::replace(
                        &mut cols[level - 1][mi],
                        ColMember { node, first_selected: 0, last_seen: None, held: None },
                    );
                    observe_receipt(ctx, &mut member, round, msg, relay_stage);
                    cols[level - 1][mi] = member;
                }
                ctx.meter.tick(ctx.params.h as u64);
            }
        }

        // Exit reports: last-level members fed this round report into
        // the exit quorum, which compares against the delivered data.
        let exit_q = path[levels - 1];
        let mut reports: Vec<(NodeId, MsgCore, bool)> = Vec::new();
        let reporters: Vec<(NodeId, Msg)> = cols[levels - 1]
            .iter()
            .filter(|m| m.last_seen == Some(round))
            .filter_map(|m| m.held.map(|h| (m.node, h)))
            .collect();
        for (slot, &(u, held_u)) in reporters.iter().enumerate() {
            let rc = RelayCtx {
                round,
                level: levels as u32,
                data_corrupted,
                ..RelayCtx::new(RelayPhase::ChainExit)
            };
            let action = ctx.relay_action(u, &rc);
            let Some(out) = ctx.apply_action(held_u, action) else { continue };
            let stage = StageKey {
                phase: PHASE_CHECK_EXIT,
                round,
                level: levels as u32,
                sub: slot as u8,
            };
            if ctx.quorum_broadcast(stage, u, exit_q, out.core, out.esig).is_some() {
                let ok = chain_copy_ok(ctx, &out);
                reports.push((u, out.core, ok));
            }
        }
        if !reports.is_empty() {
            let observer = ctx.attestor(exit_q);
            let stage = StageKey {
                phase: PHASE_CHECK_EXIT,
                round,
                level: levels as u32 + 1,
                sub: 0,
            };
            for &(u, _, ok) in &reports {
                if !ok {
                    trigger(ctx, stage, observer, TriggerReason::InvalidCopy { from: u });
                }
            }
            match outcome.exit_value {
                None => trigger(ctx, stage, observer, TriggerReason::MissingData),
                Some(data) => {
                    if reports.iter().any(|&(_, c, ok)| ok && c.payload != data.payload) {
                        trigger(ctx, stage, observer, TriggerReason::ExitMismatch);
                    }
                }
            }
        }

        // End of round: every honest member once fed must be fed every
        // round; a gap now is an alarm (starved key-holder).
        for (li, col) in cols.iter().enumerate() {
            for m in col {
                if !ctx.is_bad(m.node)
                    && m.last_seen.is_some()
                    && m.last_seen != Some(round)
                {
                    let stage = StageKey {
                        phase: PHASE_CHECK_SWEEP,
                        round,
                        level: li as u32 + 1,
                        sub: 0,
                    };
                    ctx.transcript.triggers.push(Trigger {
                        stage,
                        observer: m.node,
                        reason: TriggerReason::StarvedHolder,
                    });
                }
            }
        }

        // An alarm interrupts the check: the update takes over.
        if !ctx.transcript.triggers.is_empty() {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    #[test]
    fn index_array_shape_and_range() {
        let mut rng = rng_stream(3, "check-index");
        let arr = RandomIndexArray::draw(&mut rng, 11, 55, 3);
        for row in 0..11 {
            for pool in 1..=55usize {
                let slots = arr.slots(row, pool);
                assert_eq!(slots.len(), 3);
                assert!(slots.iter().all(|&v| v >= 1 && v as usize <= pool));
            }
        }
    }

    #[test]
    fn index_array_is_deterministic() {
        let mut a = rng_stream(3, "check-index");
        let mut b = rng_stream(3, "check-index");
        let x = RandomIndexArray::draw(&mut a, 4, 10, 2);
        let y = RandomIndexArray::draw(&mut b, 4, 10, 2);
        assert_eq!(x.entries, y.entries);
    }
}
