//! On-disk shards: a file is cut into stripes of `k l` symbols, each stripe
//! is encoded, and shard `i` stores column `i` of every stripe.
//!
//! Header layout, integers little-endian:
//!
//! ```text
//! "CMDS"  version:u8  field:[u8; 3]  code_len:u16  code:[u8; code_len]
//! node:u16  stripes:u64  length:u64  crc32:u32
//! ```
//!
//! The payload follows: one symbol per byte for fields of order 256 or
//! less, otherwise two bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{decode_from_columns, encode_systematic, verify_parity, CodewordArray};
use crate::codespec::CodeSpec;
use crate::error::{Error, Result};
use crate::field::{Elem, FieldSpec};
use crate::repair::{self, RepairContext, RepairMode, RepairPlan};
use crate::NodeId;

pub const MAGIC: &[u8; 4] = b"CMDS";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardHeader {
    pub field: FieldSpec,
    pub code: Vec<u8>,
    pub node: u16,
    pub stripes: u64,
    pub length: u64,
    pub checksum: u32,
}

impl ShardHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + self.code.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.field.to_bytes());
        out.extend_from_slice(&(self.code.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.code);
        out.extend_from_slice(&self.node.to_le_bytes());
        out.extend_from_slice(&self.stripes.to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out
    }

    /// Parses a header, returning it and its size in bytes.
    pub fn parse(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::Format("truncated shard header".into());
        let take = |at: usize, len: usize| bytes.get(at..at + len).ok_or_else(short);
        if take(0, 4)? != MAGIC {
            return Err(Error::Format("not a shard file".into()));
        }
        let version = take(4, 1)?[0];
        if version != VERSION {
            return Err(Error::Format(format!("unsupported shard version {version}")));
        }
        let f = take(5, 3)?;
        let field = FieldSpec::from_bytes([f[0], f[1], f[2]])?;
        let code_len = u16::from_le_bytes(take(8, 2)?.try_into().unwrap()) as usize;
        let code = take(10, code_len)?.to_vec();
        let mut at = 10 + code_len;
        let node = u16::from_le_bytes(take(at, 2)?.try_into().unwrap());
        at += 2;
        let stripes = u64::from_le_bytes(take(at, 8)?.try_into().unwrap());
        at += 8;
        let length = u64::from_le_bytes(take(at, 8)?.try_into().unwrap());
        at += 8;
        let checksum = u32::from_le_bytes(take(at, 4)?.try_into().unwrap());
        at += 4;
        Ok((ShardHeader { field, code, node, stripes, length, checksum }, at))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub header: ShardHeader,
    pub payload: Vec<u8>,
}

fn symbol_width(spec: &CodeSpec) -> usize {
    spec.field().symbol_bytes()
}

impl Shard {
    fn new(spec: &CodeSpec, node: NodeId, stripes: u64, length: u64, payload: Vec<u8>) -> Self {
        let header = ShardHeader {
            field: spec.field().spec(),
            code: spec.to_bytes(),
            node: node as u16,
            stripes,
            length,
            checksum: crc32fast::hash(&payload),
        };
        Shard { header, payload }
    }

    pub fn node(&self) -> NodeId {
        self.header.node as NodeId
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes();
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a shard and checks its payload checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, used) = ShardHeader::parse(bytes)?;
        let shard = Shard { header, payload: bytes[used..].to_vec() };
        if crc32fast::hash(&shard.payload) != shard.header.checksum {
            return Err(Error::Checksum { node: shard.node() });
        }
        Ok(shard)
    }

    pub fn code(&self) -> Result<CodeSpec> {
        let (spec, used) = CodeSpec::from_bytes(&self.header.code)?;
        if used != self.header.code.len() || spec.field().spec() != self.header.field {
            return Err(Error::Format(format!("shard {} has an inconsistent code descriptor", self.node())));
        }
        Ok(spec)
    }

    fn column(&self, spec: &CodeSpec, stripe: usize) -> Vec<Elem> {
        let l = spec.params().l;
        let w = symbol_width(spec);
        self.payload[stripe * l * w..(stripe + 1) * l * w].chunks(w).map(read_symbol).collect()
    }
}

fn read_symbol(bytes: &[u8]) -> Elem {
    match bytes {
        [b] => Elem::from_raw(*b as u16),
        [lo, hi] => Elem::from_raw(u16::from_le_bytes([*lo, *hi])),
        _ => unreachable!("symbols are one or two bytes"),
    }
}

fn write_symbol(out: &mut Vec<u8>, e: Elem, width: usize) {
    if width == 1 {
        out.push(e.value() as u8);
    } else {
        out.extend_from_slice(&e.value().to_le_bytes());
    }
}

/// Symbols per stripe column and per stripe.
fn stripe_shape(spec: &CodeSpec) -> (usize, usize) {
    let p = spec.params();
    (p.l, p.k * p.l)
}

/// Encodes `data` into `n` shards. Data bytes map one-to-one onto symbols,
/// so the field needs at least 256 elements.
pub fn encode_bytes(spec: &CodeSpec, data: &[u8]) -> Result<Vec<Shard>> {
    if data.is_empty() {
        return Err(Error::inadmissible("input is empty"));
    }
    if spec.field().order() < 256 {
        return Err(Error::FieldTooSmall { required: 256, order: spec.field().order() });
    }
    let p = *spec.params();
    let (l, per_stripe) = stripe_shape(spec);
    let stripes = data.len().div_ceil(per_stripe);
    let w = symbol_width(spec);
    // Within a stripe, data node c holds bytes c*l .. (c+1)*l.
    let words: Vec<CodewordArray> = (0..stripes)
        .into_par_iter()
        .map(|s| {
            let chunk = &data[s * per_stripe..((s + 1) * per_stripe).min(data.len())];
            let mut symbols = vec![Elem::ZERO; per_stripe];
            for row in 0..l {
                for c in 0..p.k {
                    if let Some(&b) = chunk.get(c * l + row) {
                        symbols[row * p.k + c] = Elem::from_raw(b as u16);
                    }
                }
            }
            encode_systematic(spec, &symbols)
        })
        .collect::<Result<_>>()?;
    Ok((1..=p.n)
        .map(|i| {
            let mut payload = Vec::with_capacity(stripes * l * w);
            for word in &words {
                for row in 0..l {
                    write_symbol(&mut payload, word.get(i, row), w);
                }
            }
            Shard::new(spec, i, stripes as u64, data.len() as u64, payload)
        })
        .collect())
}

/// Checks that shards belong to one encoding and returns its code.
fn common_code(shards: &BTreeMap<NodeId, Shard>) -> Result<(CodeSpec, u64, u64)> {
    let first = shards.values().next().ok_or_else(|| Error::inadmissible("no shards given"))?;
    let spec = first.code()?;
    let (stripes, length) = (first.header.stripes, first.header.length);
    let expected = stripes as usize * spec.params().l * symbol_width(&spec);
    for (&i, shard) in shards {
        if shard.node() != i || i == 0 || i > spec.params().n {
            return Err(Error::Format(format!("shard keyed {i} claims node {}", shard.node())));
        }
        let h = &shard.header;
        if h.code != first.header.code || h.stripes != stripes || h.length != length {
            return Err(Error::Mismatch(format!("shard {i} comes from a different encoding")));
        }
        if shard.payload.len() != expected {
            return Err(Error::Format(format!("shard {i} payload is {} bytes, expected {expected}", shard.payload.len())));
        }
    }
    Ok((spec, stripes, length))
}

/// Reassembles the original bytes from any `k` shards.
pub fn decode_bytes(shards: &BTreeMap<NodeId, Shard>) -> Result<Vec<u8>> {
    let (spec, stripes, length) = common_code(shards)?;
    let p = *spec.params();
    if shards.len() < p.k {
        return Err(Error::TooFewColumns { need: p.k, got: shards.len() });
    }
    let (l, per_stripe) = stripe_shape(&spec);
    let data_present = (1..=p.k).all(|i| shards.contains_key(&i));
    let chunks: Vec<Vec<u8>> = (0..stripes as usize)
        .into_par_iter()
        .map(|s| {
            let word = if data_present {
                let mut w = CodewordArray::zeros(&spec);
                for i in 1..=p.k {
                    w.set_column(i, &shards[&i].column(&spec, s))?;
                }
                w
            } else {
                let avail: BTreeMap<NodeId, Vec<Elem>> =
                    shards.iter().map(|(&i, sh)| (i, sh.column(&spec, s))).collect();
                decode_from_columns(&spec, &avail)?
            };
            let mut out = Vec::with_capacity(per_stripe);
            for c in 1..=p.k {
                for row in 0..l {
                    out.push(word.get(c, row).value() as u8);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut data = chunks.concat();
    data.truncate(length as usize);
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRepairReport {
    pub mode: RepairMode,
    pub failed: Vec<NodeId>,
    pub helpers: Vec<NodeId>,
    pub stripes: u64,
    pub per_stripe_total: usize,
    pub per_stripe_round1: usize,
    pub per_stripe_round2: usize,
    pub total: u64,
    pub per_stripe_bound: String,
    pub uniform: bool,
    pub optimal: bool,
}

impl FileRepairReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Rebuilds the shards of `failed` using only the helpers' shards. Every
/// stripe is repaired separately with the same plan.
pub fn repair_shards(
    shards: &BTreeMap<NodeId, Shard>,
    failed: &[NodeId],
    helpers: &[NodeId],
    mode: RepairMode,
) -> Result<(Vec<Shard>, FileRepairReport)> {
    let (spec, stripes, length) = common_code(shards)?;
    let p = *spec.params();
    if failed.is_empty() {
        let report = FileRepairReport {
            mode,
            failed: vec![],
            helpers: helpers.to_vec(),
            stripes,
            per_stripe_total: 0,
            per_stripe_round1: 0,
            per_stripe_round2: 0,
            total: 0,
            per_stripe_bound: "0".into(),
            uniform: true,
            optimal: true,
        };
        return Ok((Vec::new(), report));
    }
    let ctx = RepairContext::new(p.n, failed, helpers)?;
    if let Some(j) = ctx.helpers().iter().find(|j| !shards.contains_key(j)) {
        return Err(Error::inadmissible(format!("helper shard {j} is missing")));
    }
    let plan: Arc<RepairPlan> = RepairPlan::new(&spec, &ctx)?;
    let results: Vec<(BTreeMap<NodeId, Vec<Elem>>, repair::RepairTranscript)> = (0..stripes as usize)
        .into_par_iter()
        .map(|s| {
            let mut damaged = CodewordArray::zeros(&spec);
            for &j in ctx.helpers() {
                damaged.set_column(j, &shards[&j].column(&spec, s))?;
            }
            let (restored, t) = repair::repair_with_plan(&plan, &damaged, mode)?;
            let cols = ctx.failed().iter().map(|&i| (i, restored.column(i))).collect();
            Ok((cols, t))
        })
        .collect::<Result<_>>()?;

    let w = symbol_width(&spec);
    let restored = ctx
        .failed()
        .iter()
        .map(|&i| {
            let mut payload = Vec::with_capacity(stripes as usize * p.l * w);
            for (cols, _) in &results {
                for &e in &cols[&i] {
                    write_symbol(&mut payload, e, w);
                }
            }
            Shard::new(&spec, i, stripes, length, payload)
        })
        .collect();

    let first = &results[0].1;
    let same = results.iter().all(|(_, t)| t.ledger == first.ledger);
    let total = results.iter().map(|(_, t)| t.ledger.total() as u64).sum();
    let report = FileRepairReport {
        mode,
        failed: ctx.failed().to_vec(),
        helpers: ctx.helpers().to_vec(),
        stripes,
        per_stripe_total: first.ledger.total(),
        per_stripe_round1: first.ledger.round_total(1),
        per_stripe_round2: first.ledger.round_total(2),
        total,
        per_stripe_bound: first.bound.to_string(),
        uniform: same && first.uniform,
        optimal: same && results.iter().all(|(_, t)| t.optimal),
    };
    debug_assert_eq!(Ratio::from_integer(report.per_stripe_total as u64) == first.bound, first.optimal);
    Ok((restored, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShardStatus {
    pub node: NodeId,
    pub ok: bool,
    pub problem: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub shards: Vec<ShardStatus>,
    pub parity_ok: bool,
    pub first_bad_stripe: Option<u64>,
}

/// Checks checksums, header agreement and every stripe's parity.
pub fn verify_shards(found: &BTreeMap<NodeId, Result<Shard>>) -> VerifyReport {
    let mut statuses = Vec::new();
    let mut good = BTreeMap::new();
    for (&i, shard) in found {
        match shard {
            Ok(s) => {
                good.insert(i, s.clone());
                statuses.push(ShardStatus { node: i, ok: true, problem: None });
            }
            Err(e) => statuses.push(ShardStatus { node: i, ok: false, problem: Some(e.to_string()) }),
        }
    }
    let (parity_ok, first_bad_stripe) = match common_code(&good) {
        Err(e) => {
            if good.is_empty() {
                (false, None)
            } else {
                for s in statuses.iter_mut().filter(|s| s.ok) {
                    s.problem = Some(e.to_string());
                    s.ok = false;
                }
                (false, None)
            }
        }
        Ok((spec, stripes, _)) => {
            let n = spec.params().n;
            for i in 1..=n {
                if !found.contains_key(&i) {
                    statuses.push(ShardStatus { node: i, ok: false, problem: Some("missing".into()) });
                }
            }
            statuses.sort_by_key(|s| s.node);
            if good.len() < n {
                (false, None)
            } else {
                let bad = (0..stripes as usize).into_par_iter().find_first(|&s| {
                    let mut w = CodewordArray::zeros(&spec);
                    for (&i, sh) in &good {
                        w.set_column(i, &sh.column(&spec, s)).expect("payload length checked");
                    }
                    !verify_parity(&w).ok
                });
                (bad.is_none(), bad.map(|s| s as u64))
            }
        }
    };
    let ok = parity_ok && statuses.iter().all(|s| s.ok);
    VerifyReport { ok, shards: statuses, parity_ok, first_bad_stripe }
}

pub fn shard_path(dir: &Path, node: NodeId) -> PathBuf {
    dir.join(format!("shard-{node:03}.cmds"))
}

pub fn write_shards(dir: &Path, shards: &[Shard]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for shard in shards {
        fs::write(shard_path(dir, shard.node()), shard.to_bytes())?;
    }
    Ok(())
}

/// Reads every `shard-*.cmds` file in `dir`, keyed by the node in its name.
/// Unparseable shards are returned as errors rather than skipped.
pub fn read_shards(dir: &Path) -> Result<BTreeMap<NodeId, Result<Shard>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(num) = name.strip_prefix("shard-").and_then(|r| r.strip_suffix(".cmds")) else { continue };
        let Ok(node) = num.parse::<NodeId>() else { continue };
        let parsed = fs::read(&path).map_err(Error::from).and_then(|b| Shard::from_bytes(&b)).and_then(|s| {
            if s.node() == node {
                Ok(s)
            } else {
                Err(Error::Format(format!("file for node {node} holds shard {}", s.node())))
            }
        });
        out.insert(node, parsed);
    }
    Ok(out)
}

/// The readable shards among `found`.
pub fn usable(found: BTreeMap<NodeId, Result<Shard>>) -> BTreeMap<NodeId, Shard> {
    found.into_iter().filter_map(|(i, s)| s.ok().map(|s| (i, s))).collect()
}
