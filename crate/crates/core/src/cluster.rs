//! A simulated storage cluster with a logical-time message bus.
//!
//! Nodes hold columns, a coordinator injects failures and drives repairs,
//! and every repair message travels over the bus, which meters traffic on
//! its own. Reports carry both the bus meter and the repair ledger so the
//! two counts can be compared.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_systematic, verify_parity, CodewordArray, ParityWitness};
use crate::codespec::{binomial, subset_unrank, CodeSpec};
use crate::error::{Error, Result};
use crate::field::Elem;
use crate::registry::{CodeDescriptor, Registry};
use crate::repair::{Endpoint, HelperNode, RepairContext, RepairMessage, RepairMode, RepairPlan, RepairSession, RepairTranscript};
use crate::NodeId;

fn default_mode() -> String {
    "cooperative".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Fail {
        nodes: Vec<NodeId>,
    },
    Repair {
        helpers: Vec<NodeId>,
        #[serde(default = "default_mode")]
        mode: String,
    },
    Verify,
}

/// A scenario file: which code, which seed, what happens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub code: CodeDescriptor,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl ClusterConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub time: u64,
    pub round: u8,
    pub from: Endpoint,
    pub to: Endpoint,
    pub subject: NodeId,
    pub symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkTraffic {
    pub from: Endpoint,
    pub to: Endpoint,
    pub symbols: u64,
}

/// Traffic as seen by the bus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficMeter {
    links: BTreeMap<(Endpoint, Endpoint), u64>,
    log: Vec<Delivery>,
}

impl TrafficMeter {
    fn count(&mut self, delivery: Delivery) {
        *self.links.entry((delivery.from, delivery.to)).or_default() += delivery.symbols as u64;
        self.log.push(delivery);
    }

    pub fn total(&self) -> u64 {
        self.links.values().sum()
    }

    pub fn link(&self, from: Endpoint, to: Endpoint) -> u64 {
        self.links.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn log(&self) -> &[Delivery] {
        &self.log
    }
}

impl Serialize for TrafficMeter {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            total: u64,
            links: Vec<LinkTraffic>,
            log: &'a [Delivery],
        }
        View {
            total: self.total(),
            links: self.links.iter().map(|(&(from, to), &symbols)| LinkTraffic { from, to, symbols }).collect(),
            log: &self.log,
        }
        .serialize(ser)
    }
}

/// Holds messages until the round is flushed, then delivers them in
/// `(round, sender, receiver, subject)` order with increasing timestamps.
#[derive(Debug, Default)]
pub struct MessageBus {
    clock: u64,
    pending: Vec<RepairMessage>,
    meter: TrafficMeter,
}

impl MessageBus {
    pub fn send(&mut self, msg: RepairMessage) {
        self.pending.push(msg);
    }

    pub fn flush(&mut self, mut deliver: impl FnMut(RepairMessage) -> Result<()>) -> Result<()> {
        let mut batch = std::mem::take(&mut self.pending);
        batch.sort_by_key(|m| (m.round, m.from, m.to, m.subject));
        for msg in batch {
            self.clock += 1;
            self.meter.count(Delivery {
                time: self.clock,
                round: msg.round,
                from: msg.from,
                to: msg.to,
                subject: msg.subject,
                symbols: msg.symbols(),
            });
            deliver(msg)?;
        }
        Ok(())
    }

    pub fn meter(&self) -> &TrafficMeter {
        &self.meter
    }

    pub fn into_meter(self) -> TrafficMeter {
        self.meter
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventReport {
    Fail {
        nodes: Vec<NodeId>,
    },
    Repair {
        failed: Vec<NodeId>,
        helpers: Vec<NodeId>,
        mode: RepairMode,
        meter: TrafficMeter,
        ledger_total: usize,
        meter_total: u64,
        counts_agree: bool,
        transcript: RepairTranscript,
    },
    Verify {
        all_alive: bool,
        parity_ok: bool,
        matches_original: bool,
        witness: Option<ParityWitness>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub code: String,
    pub seed: u64,
    pub events: Vec<EventReport>,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// True when every verify passed and every repair was metered consistently.
    pub fn all_ok(&self) -> bool {
        self.events.iter().all(|e| match e {
            EventReport::Fail { .. } => true,
            EventReport::Repair { counts_agree, transcript, .. } => *counts_agree && transcript.optimal,
            EventReport::Verify { all_alive, parity_ok, matches_original, .. } => {
                *all_alive && *parity_ok && *matches_original
            }
        })
    }
}

/// Random codeword drawn from a seeded generator.
pub fn random_codeword(spec: &CodeSpec, seed: u64) -> Result<CodewordArray> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spec.field().order();
    let data: Vec<Elem> =
        (0..spec.params().l * spec.params().k).map(|_| Elem::from_raw(rng.gen_range(0..q) as u16)).collect();
    encode_systematic(spec, &data)
}

struct Cluster {
    spec: CodeSpec,
    original: CodewordArray,
    columns: Vec<Option<Vec<Elem>>>,
}

impl Cluster {
    fn alive(&self, node: NodeId) -> bool {
        self.columns[node - 1].is_some()
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node == 0 || node > self.columns.len() {
            return Err(Error::inadmissible(format!("node {node} outside 1..={}", self.columns.len())));
        }
        Ok(())
    }

    fn fail(&mut self, nodes: &[NodeId]) -> Result<EventReport> {
        for &i in nodes {
            self.check_node(i)?;
            if !self.alive(i) {
                return Err(Error::inadmissible(format!("node {i} has already failed")));
            }
        }
        for &i in nodes {
            self.columns[i - 1] = None;
        }
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        Ok(EventReport::Fail { nodes })
    }

    fn repair(&mut self, helpers: &[NodeId], mode: RepairMode) -> Result<EventReport> {
        let n = self.columns.len();
        let failed: Vec<NodeId> = (1..=n).filter(|&i| !self.alive(i)).collect();
        let r = self.spec.params().r;
        if failed.len() > r {
            return Err(Error::inadmissible(format!(
                "{} failed nodes exceed the erasure tolerance r={r}",
                failed.len()
            )));
        }
        for &j in helpers {
            self.check_node(j)?;
            if !self.alive(j) {
                return Err(Error::inadmissible(format!("helper {j} is not alive")));
            }
        }
        let ctx = RepairContext::new(n, &failed, helpers)?;
        let plan = RepairPlan::new(&self.spec, &ctx)?;
        let mut session = RepairSession::new(plan.clone(), mode)?;
        // Each helper sees only its own column.
        let helper_nodes: BTreeMap<NodeId, HelperNode> = ctx
            .helpers()
            .iter()
            .map(|&j| (j, HelperNode::new(j, self.columns[j - 1].clone().expect("helper is alive"))))
            .collect();

        let mut bus = MessageBus::default();
        let requests = session.round1_requests();
        let round1: Vec<RepairMessage> = requests
            .par_iter()
            .map(|&(j, i, to)| helper_nodes[&j].round1_message(&plan, i, to))
            .collect::<Result<_>>()?;
        round1.into_iter().for_each(|m| bus.send(m));
        bus.flush(|m| session.deliver(m))?;
        for msg in session.close_round1()? {
            bus.send(msg);
        }
        bus.flush(|m| session.deliver(m))?;
        let restored = session.finish()?;
        for (i, col) in restored {
            self.columns[i - 1] = Some(col);
        }

        let transcript = session.transcript();
        let meter = bus.into_meter();
        let ledger_total = transcript.ledger.total();
        let meter_total = meter.total();
        let counts_agree = ledger_total as u64 == meter_total
            && transcript.ledger.links().all(|lc| meter.link(lc.from, lc.to) == lc.symbols as u64);
        Ok(EventReport::Repair {
            failed,
            helpers: ctx.helpers().to_vec(),
            mode,
            meter,
            ledger_total,
            meter_total,
            counts_agree,
            transcript,
        })
    }

    fn verify(&self) -> EventReport {
        let all_alive = self.columns.iter().all(Option::is_some);
        if !all_alive {
            return EventReport::Verify { all_alive, parity_ok: false, matches_original: false, witness: None };
        }
        let mut word = CodewordArray::zeros(&self.spec);
        for (i, col) in self.columns.iter().enumerate() {
            word.set_column(i + 1, col.as_ref().expect("alive")).expect("column length");
        }
        let verdict = verify_parity(&word);
        EventReport::Verify {
            all_alive,
            parity_ok: verdict.ok,
            matches_original: word == self.original,
            witness: verdict.witness,
        }
    }
}

/// Runs the events of `config` in order. Stops at the first invalid event.
pub fn run_scenario(config: &ClusterConfig, registry: &Registry) -> Result<SimulationReport> {
    let spec = config.code.build(registry)?;
    let original = random_codeword(&spec, config.seed)?;
    let columns = (1..=spec.params().n).map(|i| Some(original.column(i))).collect();
    let mut cluster = Cluster { spec: spec.clone(), original, columns };
    let mut events = Vec::with_capacity(config.events.len());
    for event in &config.events {
        events.push(match event {
            Event::Fail { nodes } => cluster.fail(nodes)?,
            Event::Repair { helpers, mode } => cluster.repair(helpers, registry.strategy(mode)?.mode())?,
            Event::Verify => cluster.verify(),
        });
    }
    Ok(SimulationReport { code: spec.to_string(), seed: config.seed, events })
}

/// One `(F, R)` pair of a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub h: usize,
    pub d: usize,
    pub l: usize,
    pub failed: Vec<NodeId>,
    pub helpers: Vec<NodeId>,
    pub coop_measured: Option<usize>,
    pub coop_bound: String,
    pub central_measured: Option<usize>,
    pub central_bound: String,
    pub exact: bool,
    pub optimal: bool,
}

fn subsets(pool: &[NodeId], size: usize) -> Vec<Vec<NodeId>> {
    let m = binomial(pool.len(), size) as usize;
    (1..=m)
        .map(|rank| subset_unrank(pool.len(), size, rank).expect("rank in range").iter().map(|&p| pool[p - 1]).collect())
        .collect()
}

/// Every `(F, R)` the code can repair, in a stable order. Pairs the code
/// does not support (a fixed-subset code with `F` other than `1..=h`) are
/// left out.
pub fn admissible_pairs(spec: &CodeSpec) -> Vec<(Vec<NodeId>, Vec<NodeId>)> {
    let n = spec.params().n;
    let all: Vec<NodeId> = (1..=n).collect();
    let mut out = Vec::new();
    for (h, d) in spec.repair_profiles() {
        for failed in subsets(&all, h) {
            let rest: Vec<NodeId> = all.iter().copied().filter(|i| !failed.contains(i)).collect();
            for helpers in subsets(&rest, d) {
                let ctx = RepairContext::new(n, &failed, &helpers).expect("disjoint sets");
                if spec.subcode_layout(ctx.failed(), d).is_ok() {
                    out.push((failed.clone(), helpers));
                }
            }
        }
    }
    out
}

/// Repairs every admissible `(F, R)` of one random codeword in each
/// requested mode and compares the traffic with the cut-set bounds.
pub fn inject_and_sweep(spec: &CodeSpec, modes: &[RepairMode], registry: &Registry, seed: u64) -> Result<Vec<SweepRow>> {
    let word = random_codeword(spec, seed)?;
    let p = spec.params();
    admissible_pairs(spec)
        .into_par_iter()
        .map(|(failed, helpers)| {
            let (h, d) = (failed.len(), helpers.len());
            let ctx = RepairContext::new(p.n, &failed, &helpers)?;
            let mut damaged = word.clone();
            damaged.erase(&failed);
            let mut row = SweepRow {
                n: p.n,
                k: p.k,
                h,
                d,
                l: p.l,
                failed,
                helpers,
                coop_measured: None,
                coop_bound: registry.strategy_for(RepairMode::Cooperative)?.bound(h, d, p.k, p.l)?.to_string(),
                central_measured: None,
                central_bound: registry.strategy_for(RepairMode::Centralized)?.bound(h, d, p.k, p.l)?.to_string(),
                exact: true,
                optimal: true,
            };
            for &mode in modes {
                let (restored, t) = registry.strategy_for(mode)?.repair(&damaged, &ctx)?;
                row.exact &= restored == word;
                row.optimal &= t.optimal;
                let slot = match mode {
                    RepairMode::Cooperative => &mut row.coop_measured,
                    RepairMode::Centralized => &mut row.central_measured,
                };
                *slot = Some(t.ledger.total());
            }
            row.optimal &= row.exact;
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(events: Vec<Event>) -> ClusterConfig {
        ClusterConfig { code: CodeDescriptor::new("fixed-subset", 5, 2, 2, 3), seed: 9, events }
    }

    #[test]
    fn fail_repair_verify() {
        let cfg = config(vec![
            Event::Fail { nodes: vec![1, 2] },
            Event::Repair { helpers: vec![3, 4, 5], mode: "coop".into() },
            Event::Verify,
        ]);
        let report = run_scenario(&cfg, &Registry::default()).unwrap();
        assert!(report.all_ok(), "{}", report.to_json());
        let EventReport::Repair { meter_total, ledger_total, .. } = &report.events[1] else { panic!() };
        assert_eq!((*meter_total, *ledger_total), (8, 8));
    }

    #[test]
    fn empty_scenario() {
        let report = run_scenario(&config(vec![]), &Registry::default()).unwrap();
        assert!(report.events.is_empty());
    }

    #[test]
    fn too_many_failures() {
        let cfg = config(vec![
            Event::Fail { nodes: vec![1, 2, 3, 4] },
            Event::Repair { helpers: vec![5], mode: "coop".into() },
        ]);
        assert!(matches!(run_scenario(&cfg, &Registry::default()), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn verify_before_repair_fails() {
        let cfg = config(vec![Event::Fail { nodes: vec![2] }, Event::Verify]);
        let report = run_scenario(&cfg, &Registry::default()).unwrap();
        assert!(!report.all_ok());
    }

    #[test]
    fn scenario_json_parses() {
        let text = r#"{
            "code": {"family": "fixed-subset", "n": 5, "k": 2, "h": 2, "d": 3},
            "seed": 1,
            "events": [
                {"event": "fail", "nodes": [1, 2]},
                {"event": "repair", "helpers": [3, 4, 5], "mode": "centralized"},
                {"event": "verify"}
            ]
        }"#;
        let cfg = ClusterConfig::from_json(text).unwrap();
        let report = run_scenario(&cfg, &Registry::default()).unwrap();
        assert!(report.all_ok());
        let EventReport::Repair { meter_total, .. } = &report.events[1] else { panic!() };
        assert_eq!(*meter_total, 6);
    }

    #[test]
    fn sweep_fixed_5_2() {
        let reg = Registry::default();
        let spec = CodeDescriptor::new("fixed-subset", 5, 2, 2, 3).build(&reg).unwrap();
        let rows = inject_and_sweep(&spec, &[RepairMode::Cooperative, RepairMode::Centralized], &reg, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].coop_measured, rows[0].central_measured), (Some(8), Some(6)));
        assert!(rows[0].optimal);
    }

    #[test]
    fn sweep_single_failure_modes_agree() {
        let reg = Registry::default();
        let spec = CodeDescriptor::new("any-subset", 5, 2, 1, 3).build(&reg).unwrap();
        let rows = inject_and_sweep(&spec, &[RepairMode::Cooperative, RepairMode::Centralized], &reg, 2).unwrap();
        assert_eq!(rows.len(), 5 * 4);
        for row in rows {
            assert!(row.optimal);
            assert_eq!(row.coop_measured, row.central_measured);
        }
    }
}
