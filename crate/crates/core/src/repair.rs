//! Two-round cooperative repair, its centralized counterpart, and the
//! cut-set bounds both are measured against.
//!
//! Rows of a code split into subcodes of `|A|` rows each, one row per
//! `b in A`, chosen by the component that handles `(|F|, |R|)`. Inside a
//! subcode, failed node `i` (position `u` in `F`) is rebuilt as follows.
//!
//! Round 1: for every `b` whose digits are all below `s - 1` and with
//! `b_u = 0`, each helper sends the sum of its `s` symbols on rows
//! `b(u, 0), ..., b(u, s-1)`. Summing the parity checks of those rows gives
//! a GRS codeword over `n + s - 1` points in which these `d` sums are the
//! known coordinates, so node `i` learns its own `s` symbols on those rows
//! and the corresponding sums of every other failed node.
//!
//! Round 2: each failed node forwards those sums to their owners. The
//! owner already knows every term except the one on the row with digit
//! `s - 1`, which it isolates by subtraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::codec::CodewordArray;
use crate::codespec::{CodeSpec, IndexSet};
use crate::error::{Error, Result};
use crate::field::Elem;
use crate::grs::ErasureSolver;
use crate::NodeId;

fn check_bound_params(h: usize, d: usize, k: usize) -> Result<()> {
    if h == 0 || k == 0 || d < k {
        return Err(Error::inadmissible(format!("bound needs h >= 1 and d >= k >= 1, got h={h} d={d} k={k}")));
    }
    Ok(())
}

/// Minimum total download when one data center rebuilds `h` nodes from `d`
/// helpers: `h d l / (h + d - k)`.
pub fn cutset_centralized(h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>> {
    check_bound_params(h, d, k)?;
    Ok(Ratio::new((h * d * l) as u64, (h + d - k) as u64))
}

/// Minimum total traffic when the `h` failed nodes repair cooperatively:
/// `h (h + d - 1) l / (h + d - k)`.
pub fn cutset_cooperative(h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>> {
    check_bound_params(h, d, k)?;
    Ok(Ratio::new((h * (h + d - 1) * l) as u64, (h + d - k) as u64))
}

/// Per-link download `l / (h + d - k)` under uniform download.
pub fn per_link_quota(h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>> {
    check_bound_params(h, d, k)?;
    Ok(Ratio::new(l as u64, (h + d - k) as u64))
}

/// Failed set `F` and helper set `R`, both sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairContext {
    failed: Vec<NodeId>,
    helpers: Vec<NodeId>,
}

impl RepairContext {
    pub fn new(n: usize, failed: &[NodeId], helpers: &[NodeId]) -> Result<Self> {
        let f: BTreeSet<NodeId> = failed.iter().copied().collect();
        let r: BTreeSet<NodeId> = helpers.iter().copied().collect();
        if f.len() != failed.len() || r.len() != helpers.len() {
            return Err(Error::inadmissible("repeated node in failed or helper set"));
        }
        if f.is_empty() {
            return Err(Error::inadmissible("failed set is empty"));
        }
        if let Some(&bad) = f.iter().chain(&r).find(|&&i| i == 0 || i > n) {
            return Err(Error::inadmissible(format!("node {bad} outside 1..={n}")));
        }
        if let Some(&both) = f.intersection(&r).next() {
            return Err(Error::inadmissible(format!("node {both} is both failed and a helper")));
        }
        Ok(RepairContext { failed: f.into_iter().collect(), helpers: r.into_iter().collect() })
    }

    pub fn failed(&self) -> &[NodeId] {
        &self.failed
    }

    pub fn helpers(&self) -> &[NodeId] {
        &self.helpers
    }

    pub fn h(&self) -> usize {
        self.failed.len()
    }

    pub fn d(&self) -> usize {
        self.helpers.len()
    }
}

/// Identifies one transmitted symbol: the sum over digit `axis` of the
/// failure block, anchored at `row` (where that digit is zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SumTag {
    pub row: usize,
    pub axis: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Node(NodeId),
    DataCenter,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(i) => write!(f, "node {i}"),
            Endpoint::DataCenter => f.write_str("data center"),
        }
    }
}

/// One protocol message. `subject` is the failed node whose column the
/// payload helps rebuild; `tags[q]` describes `payload[q]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairMessage {
    pub round: u8,
    pub from: Endpoint,
    pub to: Endpoint,
    pub subject: NodeId,
    pub tags: Arc<[SumTag]>,
    pub payload: Vec<Elem>,
}

impl RepairMessage {
    pub fn symbols(&self) -> usize {
        self.payload.len()
    }
}

/// Everything about a repair that is fixed before any data moves.
#[derive(Debug)]
pub struct RepairPlan {
    spec: CodeSpec,
    ctx: RepairContext,
    stride: usize,
    alphabet: Arc<IndexSet>,
    s: usize,
    bases: Vec<usize>,
    /// `shift[(a * h + axis) * s + x]`: index of `a` with digit `axis` set
    /// to `x`, or `u32::MAX` when that leaves `A`.
    shift: Vec<u32>,
    tags: Vec<Arc<[SumTag]>>,
}

impl RepairPlan {
    pub fn new(spec: &CodeSpec, ctx: &RepairContext) -> Result<Arc<Self>> {
        let p = spec.params();
        if ctx.failed.iter().chain(&ctx.helpers).any(|&i| i > p.n) {
            return Err(Error::inadmissible(format!("context names nodes beyond n={}", p.n)));
        }
        if ctx.h() > p.r {
            return Err(Error::inadmissible(format!(
                "{} failures exceed the erasure tolerance r={}",
                ctx.h(),
                p.r
            )));
        }
        let layout = spec.subcode_layout(&ctx.failed, ctx.d())?;
        let (h, s) = (layout.h, layout.s);
        let alphabet = layout.alphabet;
        let size = alphabet.len();
        let bases: Vec<usize> = (0..p.l).filter(|row| (row / layout.stride) % size == 0).collect();

        let mut shift = vec![u32::MAX; size * h * s];
        let mut probe = vec![0u16; h];
        for a in 0..size {
            for axis in 0..h {
                probe.copy_from_slice(alphabet.get(a));
                for x in 0..s {
                    probe[axis] = x as u16;
                    if let Some(idx) = alphabet.index_of(&probe) {
                        shift[(a * h + axis) * s + x] = idx as u32;
                    }
                }
            }
        }

        let top = (s - 1) as u16;
        let tags = (0..h)
            .map(|axis| {
                let anchors: Vec<usize> = (0..size)
                    .filter(|&b| {
                        let digits = alphabet.get(b);
                        digits[axis] == 0 && digits.iter().all(|&x| x < top)
                    })
                    .collect();
                bases
                    .iter()
                    .flat_map(|&base| {
                        anchors.iter().map(move |&b| SumTag { row: base + b * layout.stride, axis: axis as u16 })
                    })
                    .collect::<Vec<_>>()
                    .into()
            })
            .collect();

        Ok(Arc::new(RepairPlan {
            spec: spec.clone(),
            ctx: ctx.clone(),
            stride: layout.stride,
            alphabet,
            s,
            bases,
            shift,
            tags,
        }))
    }

    pub fn spec(&self) -> &CodeSpec {
        &self.spec
    }

    pub fn ctx(&self) -> &RepairContext {
        &self.ctx
    }

    /// Digit range `s` of the component doing the repair.
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn subcode_count(&self) -> usize {
        self.bases.len()
    }

    /// Position of a failed node within `F`.
    pub fn axis_of(&self, failed: NodeId) -> Result<usize> {
        self.ctx
            .failed
            .iter()
            .position(|&i| i == failed)
            .ok_or_else(|| Error::protocol(format!("node {failed} is not in the failed set")))
    }

    /// Round-1 tags for the sums destined to the failed node at `axis`.
    pub fn tags_for_axis(&self, axis: usize) -> Arc<[SumTag]> {
        self.tags[axis].clone()
    }

    /// Rows whose symbols a tag sums, for digit values `0..s`.
    pub fn sum_rows(&self, tag: SumTag) -> impl Iterator<Item = usize> + '_ {
        let h = self.alphabet.h();
        let b = (tag.row / self.stride) % self.alphabet.len();
        let base = tag.row - b * self.stride;
        let at = (b * h + tag.axis as usize) * self.s;
        self.shift[at..at + self.s].iter().map(move |&a| {
            debug_assert_ne!(a, u32::MAX, "anchor digits are below s - 1");
            base + a as usize * self.stride
        })
    }
}

/// Sums a helper sends towards `failed` in round 1.
pub fn round1_helper_payload(plan: &RepairPlan, helper: NodeId, failed: NodeId, column: &[Elem]) -> Result<Vec<Elem>> {
    if !plan.ctx.helpers.contains(&helper) {
        return Err(Error::protocol(format!("node {helper} is not a helper")));
    }
    if column.len() != plan.spec.params().l {
        return Err(Error::Dimension { expected: plan.spec.params().l, got: column.len() });
    }
    let axis = plan.axis_of(failed)?;
    let field = plan.spec.field();
    Ok(plan.tags[axis]
        .iter()
        .map(|&tag| plan.sum_rows(tag).fold(Elem::ZERO, |acc, row| field.add(acc, column[row])))
        .collect())
}

/// What a failed node knows after round 1.
#[derive(Debug, Clone)]
pub struct Round1State {
    pub column: Vec<Elem>,
    pub known: Vec<bool>,
    /// Sums of other failed nodes' symbols, in this node's tag order.
    pub cross: BTreeMap<NodeId, Vec<Elem>>,
}

/// Solves every round-1 system for `failed` from the helpers' payloads.
pub fn round1_solve(plan: &RepairPlan, failed: NodeId, payloads: &BTreeMap<NodeId, Vec<Elem>>) -> Result<Round1State> {
    let axis = plan.axis_of(failed)?;
    let spec = &plan.spec;
    let (n, l, s) = (spec.params().n, spec.params().l, plan.s);
    let tags = &plan.tags[axis];
    let helpers = &plan.ctx.helpers;
    if payloads.keys().ne(helpers.iter()) {
        return Err(Error::protocol(format!(
            "node {failed} needs payloads from {helpers:?}, has {:?}",
            payloads.keys().collect::<Vec<_>>()
        )));
    }
    if let Some((j, p)) = payloads.iter().find(|(_, p)| p.len() != tags.len()) {
        return Err(Error::protocol(format!("payload from {j} has {} symbols, expected {}", p.len(), tags.len())));
    }
    let others: Vec<NodeId> = (1..=n).filter(|&j| j != failed && !helpers.contains(&j)).collect();
    let field = spec.field();
    let mut state = Round1State {
        column: vec![Elem::ZERO; l],
        known: vec![false; l],
        cross: plan.ctx.failed.iter().filter(|&&j| j != failed).map(|&j| (j, Vec::with_capacity(tags.len()))).collect(),
    };
    let helper_vals: Vec<&[Elem]> = payloads.values().map(Vec::as_slice).collect();
    let mut solver = ErasureSolver::default();
    let mut points = vec![Elem::ZERO; s + others.len()];
    let mut out = vec![Elem::ZERO; points.len()];
    let mut rows = vec![0usize; s];
    for (q, &tag) in tags.iter().enumerate() {
        for (slot, row) in rows.iter_mut().zip(plan.sum_rows(tag)) {
            *slot = row;
        }
        for (p, &row) in points.iter_mut().zip(&rows) {
            *p = spec.coeff_at(failed, row);
        }
        for (p, &j) in points[s..].iter_mut().zip(&others) {
            *p = spec.coeff_at(j, tag.row);
        }
        let known = helpers.iter().zip(&helper_vals).map(|(&j, vals)| (spec.coeff_at(j, tag.row), vals[q]));
        solver.solve(field, &points, known, &mut out);
        for (&row, &v) in rows.iter().zip(&out) {
            state.column[row] = v;
            state.known[row] = true;
        }
        for (&j, &v) in others.iter().zip(&out[s..]) {
            if let Some(sums) = state.cross.get_mut(&j) {
                sums.push(v);
            }
        }
    }
    Ok(state)
}

/// Completes `failed`'s column from its round-1 state and the sums the other
/// failed nodes forwarded, keyed by sender.
pub fn round2_finish(
    plan: &RepairPlan,
    failed: NodeId,
    mut state: Round1State,
    received: &BTreeMap<NodeId, Vec<Elem>>,
) -> Result<Vec<Elem>> {
    let field = plan.spec.field();
    for &sender in plan.ctx.failed.iter().filter(|&&j| j != failed) {
        let sums = received
            .get(&sender)
            .ok_or_else(|| Error::protocol(format!("node {failed} is missing round-2 sums from {sender}")))?;
        let tags = &plan.tags[plan.axis_of(sender)?];
        if sums.len() != tags.len() {
            return Err(Error::protocol(format!("round-2 sums from {sender} have the wrong length")));
        }
        for (&tag, &sigma) in tags.iter().zip(sums) {
            let mut rest = sigma;
            let mut missing = None;
            for row in plan.sum_rows(tag) {
                if state.known[row] {
                    rest = field.sub(rest, state.column[row]);
                } else if missing.replace(row).is_some() {
                    return Err(Error::protocol(format!("sum at row {} has two unknown terms", tag.row)));
                }
            }
            if let Some(row) = missing {
                state.column[row] = rest;
                state.known[row] = true;
            }
        }
    }
    if let Some(row) = state.known.iter().position(|&k| !k) {
        return Err(Error::protocol(format!("node {failed} could not recover row {row}")));
    }
    Ok(state.column)
}

/// A surviving node. It can only answer from its own column.
#[derive(Debug, Clone)]
pub struct HelperNode {
    id: NodeId,
    column: Vec<Elem>,
}

impl HelperNode {
    pub fn new(id: NodeId, column: Vec<Elem>) -> Self {
        HelperNode { id, column }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn round1_message(&self, plan: &RepairPlan, subject: NodeId, to: Endpoint) -> Result<RepairMessage> {
        let payload = round1_helper_payload(plan, self.id, subject, &self.column)?;
        Ok(RepairMessage {
            round: 1,
            from: Endpoint::Node(self.id),
            to,
            subject,
            tags: plan.tags[plan.axis_of(subject)?].clone(),
            payload,
        })
    }
}

/// A failed node's view: the public plan and the messages it received.
#[derive(Debug)]
pub struct FailedNode {
    id: NodeId,
    plan: Arc<RepairPlan>,
    round1: BTreeMap<NodeId, Vec<Elem>>,
    round2: BTreeMap<NodeId, Vec<Elem>>,
    state: Option<Round1State>,
}

impl FailedNode {
    pub fn new(id: NodeId, plan: Arc<RepairPlan>) -> Result<Self> {
        plan.axis_of(id)?;
        Ok(FailedNode { id, plan, round1: BTreeMap::new(), round2: BTreeMap::new(), state: None })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn receive(&mut self, msg: RepairMessage) -> Result<()> {
        if msg.subject != self.id {
            return Err(Error::protocol(format!("message about node {} delivered to {}", msg.subject, self.id)));
        }
        let Endpoint::Node(sender) = msg.from else {
            return Err(Error::protocol("messages must come from storage nodes"));
        };
        let (inbox, allowed, axis) = match msg.round {
            1 if self.state.is_none() => (&mut self.round1, &self.plan.ctx.helpers, self.plan.axis_of(self.id)?),
            2 if self.state.is_some() => (&mut self.round2, &self.plan.ctx.failed, self.plan.axis_of(sender)?),
            r => return Err(Error::protocol(format!("unexpected round-{r} message at node {}", self.id))),
        };
        if !allowed.contains(&sender) || sender == self.id {
            return Err(Error::protocol(format!("node {sender} may not send round {} to {}", msg.round, self.id)));
        }
        if msg.tags[..] != self.plan.tags[axis][..] || msg.payload.len() != msg.tags.len() {
            return Err(Error::protocol(format!("message from {sender} carries unexpected tags")));
        }
        if inbox.insert(sender, msg.payload).is_some() {
            return Err(Error::protocol(format!("duplicate round-{} message from {sender}", msg.round)));
        }
        Ok(())
    }

    /// Runs the round-1 solves; afterwards only round-2 messages are accepted.
    pub fn close_round1(&mut self) -> Result<()> {
        if self.state.is_some() {
            return Err(Error::protocol("round 1 already closed"));
        }
        self.state = Some(round1_solve(&self.plan, self.id, &self.round1)?);
        Ok(())
    }

    /// Round-2 messages this node owes the other failed nodes.
    pub fn round2_messages(&self, to_data_center: bool) -> Result<Vec<RepairMessage>> {
        let state = self.state.as_ref().ok_or_else(|| Error::protocol("round 1 not closed"))?;
        let tags = self.plan.tags[self.plan.axis_of(self.id)?].clone();
        Ok(state
            .cross
            .iter()
            .map(|(&j, sums)| RepairMessage {
                round: 2,
                from: Endpoint::Node(self.id),
                to: if to_data_center { Endpoint::DataCenter } else { Endpoint::Node(j) },
                subject: j,
                tags: tags.clone(),
                payload: sums.clone(),
            })
            .collect())
    }

    pub fn finish(self) -> Result<Vec<Elem>> {
        let state = self.state.ok_or_else(|| Error::protocol("round 1 not closed"))?;
        round2_finish(&self.plan, self.id, state, &self.round2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    Cooperative,
    Centralized,
}

impl fmt::Display for RepairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairMode::Cooperative => "cooperative",
            RepairMode::Centralized => "centralized",
        })
    }
}

fn ratio_str<S: Serializer>(r: &Ratio<u64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.collect_str(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkCount {
    pub from: Endpoint,
    pub to: Endpoint,
    pub symbols: usize,
}

/// Symbols moved per ordered link and per round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BandwidthLedger {
    links: BTreeMap<(Endpoint, Endpoint), usize>,
    rounds: [usize; 2],
}

impl BandwidthLedger {
    pub fn record(&mut self, msg: &RepairMessage) {
        *self.links.entry((msg.from, msg.to)).or_default() += msg.symbols();
        self.rounds[msg.round as usize - 1] += msg.symbols();
    }

    pub fn total(&self) -> usize {
        self.rounds.iter().sum()
    }

    pub fn round_total(&self, round: u8) -> usize {
        self.rounds[round as usize - 1]
    }

    pub fn link(&self, from: Endpoint, to: Endpoint) -> usize {
        self.links.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn links(&self) -> impl Iterator<Item = LinkCount> + '_ {
        self.links.iter().map(|(&(from, to), &symbols)| LinkCount { from, to, symbols })
    }

    /// The common per-link count, if every link carried the same amount.
    pub fn uniform_link(&self) -> Option<usize> {
        let mut values = self.links.values();
        let first = *values.next()?;
        values.all(|&v| v == first).then_some(first)
    }
}

impl Serialize for BandwidthLedger {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View {
            links: Vec<LinkCount>,
            round1: usize,
            round2: usize,
            total: usize,
        }
        View { links: self.links().collect(), round1: self.rounds[0], round2: self.rounds[1], total: self.total() }
            .serialize(ser)
    }
}

/// Outcome of one repair, ready for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct RepairTranscript {
    pub mode: RepairMode,
    pub code: String,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub failed: Vec<NodeId>,
    pub helpers: Vec<NodeId>,
    pub messages: usize,
    pub ledger: BandwidthLedger,
    #[serde(serialize_with = "ratio_str")]
    pub bound: Ratio<u64>,
    #[serde(serialize_with = "ratio_str")]
    pub link_quota: Ratio<u64>,
    pub uniform: bool,
    pub optimal: bool,
}

impl RepairTranscript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Round1,
    Round2,
    Done,
}

/// Drives one repair. Messages enter through [`RepairSession::deliver`],
/// which meters them; the failed nodes (or the data center) only ever see
/// what was delivered.
#[derive(Debug)]
pub struct RepairSession {
    plan: Arc<RepairPlan>,
    mode: RepairMode,
    phase: Phase,
    nodes: BTreeMap<NodeId, FailedNode>,
    ledger: BandwidthLedger,
    messages: usize,
}

impl RepairSession {
    pub fn new(plan: Arc<RepairPlan>, mode: RepairMode) -> Result<Self> {
        let nodes = plan
            .ctx
            .failed
            .iter()
            .map(|&i| Ok((i, FailedNode::new(i, plan.clone())?)))
            .collect::<Result<_>>()?;
        Ok(RepairSession { plan, mode, phase: Phase::Round1, nodes, ledger: BandwidthLedger::default(), messages: 0 })
    }

    pub fn plan(&self) -> &Arc<RepairPlan> {
        &self.plan
    }

    pub fn mode(&self) -> RepairMode {
        self.mode
    }

    /// Where round-1 sums about `subject` should be sent.
    pub fn round1_destination(&self, subject: NodeId) -> Endpoint {
        match self.mode {
            RepairMode::Cooperative => Endpoint::Node(subject),
            RepairMode::Centralized => Endpoint::DataCenter,
        }
    }

    /// Round-1 requests in canonical order: `(helper, subject, destination)`.
    pub fn round1_requests(&self) -> Vec<(NodeId, NodeId, Endpoint)> {
        let ctx = &self.plan.ctx;
        ctx.helpers
            .iter()
            .flat_map(|&j| ctx.failed.iter().map(move |&i| (j, i)))
            .map(|(j, i)| (j, i, self.round1_destination(i)))
            .collect()
    }

    pub fn deliver(&mut self, msg: RepairMessage) -> Result<()> {
        let expected_round = match self.phase {
            Phase::Round1 => 1,
            Phase::Round2 if self.mode == RepairMode::Cooperative => 2,
            _ => return Err(Error::protocol(format!("no messages expected after round {}", msg.round))),
        };
        if msg.round != expected_round {
            return Err(Error::protocol(format!("round-{} message during round {expected_round}", msg.round)));
        }
        let to = match msg.round {
            1 => self.round1_destination(msg.subject),
            _ => Endpoint::Node(msg.subject),
        };
        if msg.to != to {
            return Err(Error::protocol(format!("message about node {} addressed to {}", msg.subject, msg.to)));
        }
        let node = self
            .nodes
            .get_mut(&msg.subject)
            .ok_or_else(|| Error::protocol(format!("node {} is not being repaired", msg.subject)))?;
        self.ledger.record(&msg);
        self.messages += 1;
        node.receive(msg)
    }

    /// Ends round 1. Cooperative sessions return the round-2 messages to be
    /// delivered; a data center exchanges them internally, unmetered.
    pub fn close_round1(&mut self) -> Result<Vec<RepairMessage>> {
        if self.phase != Phase::Round1 {
            return Err(Error::protocol("round 1 already closed"));
        }
        self.nodes.par_iter_mut().map(|(_, node)| node.close_round1()).collect::<Result<Vec<()>>>()?;
        self.phase = Phase::Round2;
        let mut outgoing = Vec::new();
        for node in self.nodes.values() {
            outgoing.extend(node.round2_messages(self.mode == RepairMode::Centralized)?);
        }
        if self.mode == RepairMode::Cooperative {
            return Ok(outgoing);
        }
        for mut msg in outgoing {
            msg.to = Endpoint::Node(msg.subject);
            self.nodes.get_mut(&msg.subject).expect("subject is failed").receive(msg)?;
        }
        Ok(Vec::new())
    }

    /// Ends round 2 and returns the rebuilt columns.
    pub fn finish(&mut self) -> Result<BTreeMap<NodeId, Vec<Elem>>> {
        if self.phase != Phase::Round2 {
            return Err(Error::protocol("round 1 must be closed before finishing"));
        }
        self.phase = Phase::Done;
        let nodes: Vec<FailedNode> = std::mem::take(&mut self.nodes).into_values().collect();
        nodes.into_par_iter().map(|node| Ok((node.id(), node.finish()?))).collect()
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    pub fn transcript(&self) -> RepairTranscript {
        let spec = &self.plan.spec;
        let p = spec.params();
        let ctx = &self.plan.ctx;
        let (h, d) = (ctx.h(), ctx.d());
        let (bound, link_quota) = match self.mode {
            RepairMode::Cooperative => (
                cutset_cooperative(h, d, p.k, p.l).expect("plan is admissible"),
                per_link_quota(h, d, p.k, p.l).expect("plan is admissible"),
            ),
            RepairMode::Centralized => (
                cutset_centralized(h, d, p.k, p.l).expect("plan is admissible"),
                per_link_quota(h, d, p.k, p.l).expect("plan is admissible") * h as u64,
            ),
        };
        let total = self.ledger.total() as u64;
        let uniform = self.ledger.uniform_link().map(|v| Ratio::from_integer(v as u64)) == Some(link_quota);
        RepairTranscript {
            mode: self.mode,
            code: spec.to_string(),
            n: p.n,
            k: p.k,
            l: p.l,
            failed: ctx.failed.clone(),
            helpers: ctx.helpers.clone(),
            messages: self.messages,
            ledger: self.ledger.clone(),
            bound,
            link_quota,
            uniform,
            optimal: bound.is_integer() && bound.to_integer() == total,
        }
    }
}

fn run_repair(damaged: &CodewordArray, ctx: &RepairContext, mode: RepairMode) -> Result<(CodewordArray, RepairTranscript)> {
    let plan = RepairPlan::new(damaged.spec(), ctx)?;
    repair_with_plan(&plan, damaged, mode)
}

/// Runs a repair with a prepared plan, e.g. once per stripe of a file.
pub fn repair_with_plan(
    plan: &Arc<RepairPlan>,
    damaged: &CodewordArray,
    mode: RepairMode,
) -> Result<(CodewordArray, RepairTranscript)> {
    if damaged.spec() != plan.spec() {
        return Err(Error::Mismatch("codeword and plan use different codes".into()));
    }
    let ctx = plan.ctx();
    let mut session = RepairSession::new(plan.clone(), mode)?;
    let helpers: BTreeMap<NodeId, HelperNode> =
        ctx.helpers.iter().map(|&j| (j, HelperNode::new(j, damaged.column(j)))).collect();
    for (j, i, to) in session.round1_requests() {
        let msg = helpers[&j].round1_message(&plan, i, to)?;
        session.deliver(msg)?;
    }
    for msg in session.close_round1()? {
        session.deliver(msg)?;
    }
    let columns = session.finish()?;
    let mut restored = damaged.clone();
    for (i, col) in columns {
        restored.set_column(i, &col)?;
    }
    Ok((restored, session.transcript()))
}

/// Rebuilds the columns in `ctx.failed()` with the two-round protocol. The
/// failed columns of `damaged` are never read.
pub fn cooperative_repair(damaged: &CodewordArray, ctx: &RepairContext) -> Result<(CodewordArray, RepairTranscript)> {
    run_repair(damaged, ctx, RepairMode::Cooperative)
}

/// Rebuilds the failed columns at a data center that receives only the
/// round-1 messages of the cooperative protocol.
pub fn centralized_repair_from_round1(
    damaged: &CodewordArray,
    ctx: &RepairContext,
) -> Result<(CodewordArray, RepairTranscript)> {
    run_repair(damaged, ctx, RepairMode::Centralized)
}
