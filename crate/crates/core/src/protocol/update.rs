//! The quarantine update.
//!
//! Runs when a check raises an alarm. The alarming node's evidence is
//! re-verified by its quorum, then every participant of the flagged
//! send states, under signature, what it received and what it sent at
//! each round it took part in. Honest statements are the truth; a
//! faulty node's statements are whatever story it committed to by its
//! own messages (anything else is immediately self-incriminating).
//!
//! Crossing statements disagree only where a faulty node actually
//! deviated, so the earliest disagreeing handoff yields an accusation
//! pair containing at least one faulty node. Both members of the pair
//! are marked: quarantined out of future relay and witness selection
//! until their quorum accumulates enough marks to run a joint reset.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::membership::{ConflictPair, MarkReport};
use crate::protocol::{MsgCore, ProtocolCtx, StageKey, Trigger};

/// What one update accomplished, with its full message/latency bill.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    /// Whether the alarm was backed by evidence in the transcript.
    pub verified: bool,
    /// The accusation pair from the earliest disagreeing handoff
    /// (empty only if the statements were somehow all consistent).
    pub pairs: Vec<ConflictPair>,
    /// Marking and reset activity that resulted.
    pub mark_report: MarkReport,
    /// Messages spent by the update itself (verification, statement
    /// collection, marking, resets).
    pub messages: u64,
    /// Latency rounds spent by the update itself.
    pub rounds: u64,
}

/// A node's committed story for one round: the first thing it emitted
/// (statement order follows stage order; later emissions cannot
/// contradict the first without self-incrimination).
fn build_stories(ctx: &ProtocolCtx) -> BTreeMap<(u32, u32), Option<MsgCore>> {
    let mut items: Vec<(StageKey, u32, Option<MsgCore>)> = Vec::new();
    for e in &ctx.transcript.edges {
        items.push((e.stage, e.from.0, e.sent));
    }
    for b in &ctx.transcript.bcasts {
        items.push((b.stage, b.caller.0, Some(b.content)));
    }
    items.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut stories: BTreeMap<(u32, u32), Option<MsgCore>> = BTreeMap::new();
    for (stage, node, content) in items {
        stories.entry((node, stage.round)).or_insert(content);
    }
    stories
}

/// Runs the update for `trigger`. Returns the outcome; all metering is
/// added to the context's meter as a side effect.
pub fn run_update(ctx: &mut ProtocolCtx, trigger: &Trigger) -> UpdateOutcome {
    let q = ctx.params.quorum_size as u64;
    let levels = ctx.params.levels as u64;
    let mut messages: u64 = 0;
    let mut rounds: u64 = 0;

    // Step 1: the alarming node presents its evidence to its quorum,
    // which confirms it before anything spreads.
    messages += 3 * q;
    rounds += 3;
    let verified = ctx.transcript.triggers.iter().any(|t| t == trigger);
    if !verified {
        ctx.meter.msg(messages);
        ctx.meter.tick(rounds);
        return UpdateOutcome {
            verified: false,
            pairs: Vec::new(),
            mark_report: MarkReport::default(),
            messages,
            rounds,
        };
    }

    // Step 2: the alarm is flooded along the send's path so every
    // involved quorum knows statements are due.
    messages += levels * q * q;
    rounds += 1;

    // Step 3: every node that took part in the flagged send publishes
    // its signed statements to its quorums and their neighbors.
    let mut involved: alloc::collections::BTreeSet<u32> = alloc::collections::BTreeSet::new();
    for e in &ctx.transcript.edges {
        involved.insert(e.from.0);
        involved.insert(e.to.0);
    }
    for b in &ctx.transcript.bcasts {
        involved.insert(b.caller.0);
    }
    if let (Some(&first), Some(&last)) =
        (ctx.transcript.path.first(), ctx.transcript.path.last())
    {
        for &m in ctx.graph.members(first) {
            involved.insert(m.0);
        }
        for &m in ctx.graph.members(last) {
            involved.insert(m.0);
        }
    }
    for &w in &involved {
        messages += 3 * q + ctx.marks.announce_cost(ctx.graph, crate::graph::NodeId(w));
    }
    rounds += 3;

    // Step 4: the path's selected relays re-publish their selections so
    // the statement set is provably complete.
    for sel in &ctx.transcript.selections {
        messages += 3 * q + ctx.marks.announce_cost(ctx.graph, *sel);
    }
    rounds += 3;

    // Extract the accusation pair: compare each transfer against the
    // stories of its two endpoints. Honest endpoints state the truth
    // (exactly what the edge carried); faulty endpoints are bound to
    // their committed story for that round.
    let stories = build_stories(ctx);
    struct Conflict {
        stage: StageKey,
        from: crate::graph::NodeId,
        to: crate::graph::NodeId,
        from_q: u32,
        to_q: u32,
    }
    let mut conflicts: Vec<Conflict> = Vec::new();
    for e in &ctx.transcript.edges {
        let story_out = if ctx.is_bad(e.from) {
            stories.get(&(e.from.0, e.stage.round)).copied().flatten()
        } else {
            e.sent
        };
        let story_in = if ctx.is_bad(e.to) {
            stories.get(&(e.to.0, e.stage.round)).copied().flatten()
        } else {
            e.sent
        };
        if story_out != story_in {
            conflicts.push(Conflict {
                stage: e.stage,
                from: e.from,
                to: e.to,
                from_q: e.from_q,
                to_q: e.to_q,
            });
        }
    }

    // Exactly one pair per update: the earliest disagreeing handoff.
    // (Every disagreement implicates at least one faulty node, so one
    // pair per update marks at most one honest node per faulty node.)
    let mut pairs: Vec<ConflictPair> = Vec::new();
    if let Some(first_ix) =
        (0..conflicts.len()).min_by_key(|&i| (conflicts[i].stage, conflicts[i].from.0, conflicts[i].to.0))
    {
        let c = &conflicts[first_ix];
        let (from, to, from_q, to_q) = (c.from, c.to, c.from_q, c.to_q);
        if !ctx.is_bad(from) && !ctx.is_bad(to) {
            ctx.good_good_pairs += 1;
        }
        pairs.push(ConflictPair {
            accused_sender: from,
            accused_receiver: to,
            boundary: (
                ctx.graph.quorum_id(from_q as usize),
                ctx.graph.quorum_id(to_q as usize),
            ),
        });
    }

    // Mark both members of every pair; quorums past the mark threshold
    // run their joint reset.
    let mark_report = ctx.marks.record_conflicts(ctx.graph, &pairs);
    messages += mark_report.messages;
    rounds += mark_report.rounds as u64;

    ctx.meter.msg(messages);
    ctx.meter.tick(rounds);
    UpdateOutcome { verified: true, pairs, mark_report, messages, rounds }
}
