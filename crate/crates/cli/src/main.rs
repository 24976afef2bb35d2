//! `coopmds`: encode files into repairable shards, repair and verify them,
//! print cut-set bounds, sweep parameters and run cluster scenarios.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use coopmds::cluster::{inject_and_sweep, run_scenario, ClusterConfig};
use coopmds::codespec::{self, Family};
use coopmds::repair::{cutset_centralized, cutset_cooperative, per_link_quota};
use coopmds::shard;
use coopmds::{CodeDescriptor, Error, FieldSpec, NodeId, Registry, RepairMode};
use serde::Serialize;

const EXIT_INADMISSIBLE: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "coopmds", version, about = "MDS array codes with optimal cooperative repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CodeArgs {
    /// Code family: fixed-subset, any-subset or universal.
    #[arg(long, default_value = "fixed-subset")]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Field such as gf256, gf2^8, p257 or prime:13; `auto` picks the smallest that fits.
    #[arg(long, default_value = "auto")]
    field: String,
    /// Largest sub-packetization allowed.
    #[arg(long)]
    l_cap: Option<u64>,
}

impl CodeArgs {
    fn descriptor(&self) -> anyhow::Result<CodeDescriptor> {
        Ok(CodeDescriptor {
            family: self.family.clone(),
            n: self.n,
            k: self.k,
            h: self.h,
            d: self.d,
            field: parse_field(&self.field)?,
            l_cap: self.l_cap,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split a file into n shards.
    Encode {
        input: PathBuf,
        outdir: PathBuf,
        #[command(flatten)]
        code: CodeArgs,
    },
    /// Reassemble the original file from any k shards.
    Decode { dir: PathBuf, output: PathBuf },
    /// Rebuild lost shards from helper shards.
    Repair {
        dir: PathBuf,
        /// Failed nodes, comma separated.
        #[arg(long, value_delimiter = ',')]
        fail: Vec<NodeId>,
        /// Helper nodes, comma separated; defaults to the first d survivors.
        #[arg(long, value_delimiter = ',')]
        helpers: Vec<NodeId>,
        /// cooperative (coop) or centralized (central).
        #[arg(long, default_value = "coop")]
        mode: String,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check shard checksums and parity.
    Verify { dir: PathBuf },
    /// Print the cut-set bounds for (n, k, h, d, l).
    Bound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        d: usize,
        /// Sub-packetization; defaults to that of the fixed-subset code.
        #[arg(long)]
        l: Option<usize>,
    },
    /// Repair every admissible (F, R) and print measured vs. bound as CSV.
    Bench {
        #[arg(long, default_value = "fixed-subset")]
        family: String,
        /// Range such as 5..8, 5-8 or 6.
        #[arg(long)]
        n: String,
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        h: Option<String>,
        #[arg(long)]
        d: Option<String>,
        #[arg(long, default_value = "auto")]
        field: String,
        #[arg(long)]
        l_cap: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a JSON cluster scenario and print the report.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered code families and repair strategies.
    List,
}

fn parse_field(text: &str) -> anyhow::Result<Option<FieldSpec>> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    Ok(Some(text.parse()?))
}

fn parse_range(text: &str) -> anyhow::Result<(usize, usize)> {
    let parts: Vec<&str> = if text.contains("..") {
        text.split("..").collect()
    } else {
        text.split('-').collect()
    };
    let nums = parts
        .iter()
        .map(|p| p.trim().trim_start_matches('=').parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("bad range `{text}`"))?;
    match nums[..] {
        [a] => Ok((a, a)),
        [a, b] if a <= b => Ok((a, b)),
        _ => bail!("bad range `{text}`"),
    }
}

fn in_range(range: &Option<String>, v: usize) -> anyhow::Result<bool> {
    match range {
        None => Ok(true),
        Some(r) => {
            let (lo, hi) = parse_range(r)?;
            Ok((lo..=hi).contains(&v))
        }
    }
}

fn load_shards(dir: &Path) -> anyhow::Result<BTreeMap<NodeId, shard::Shard>> {
    let found = shard::read_shards(dir).with_context(|| format!("reading {}", dir.display()))?;
    for (i, s) in &found {
        if let Err(e) = s {
            eprintln!("shard {i} unusable: {e}");
        }
    }
    Ok(shard::usable(found))
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct CsvRow {
    n: usize,
    k: usize,
    h: usize,
    d: usize,
    l: usize,
    failed: String,
    helpers: String,
    coop_measured: Option<usize>,
    coop_bound: String,
    central_measured: Option<usize>,
    central_bound: String,
    optimal: bool,
}

fn join(nodes: &[NodeId]) -> String {
    nodes.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// `(k, h, d)` triples to sweep at `n`. The universal family covers every
/// `(h, d)` at once, so it yields one entry per `k`.
fn bench_params(
    family: &str,
    n: usize,
    k: &Option<String>,
    h: &Option<String>,
    d: &Option<String>,
) -> anyhow::Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for kk in 1..n {
        if !in_range(k, kk)? {
            continue;
        }
        if family == "universal" {
            if !codespec::admissible_pairs(n, kk).is_empty() {
                out.push((kk, 0, 0));
            }
            continue;
        }
        for (hh, dd) in codespec::admissible_pairs(n, kk) {
            if in_range(h, hh)? && in_range(d, dd)? {
                out.push((kk, hh, dd));
            }
        }
    }
    Ok(out)
}

/// The first `d` surviving shards, `d` taken from the code's repair
/// profile for `fail.len()` failures.
fn default_helpers(shards: &BTreeMap<NodeId, shard::Shard>, fail: &[NodeId]) -> anyhow::Result<Vec<NodeId>> {
    let spec = shards.values().next().ok_or_else(|| anyhow!("no readable shards"))?.code()?;
    let d = spec
        .repair_profiles()
        .into_iter()
        .find(|&(h, _)| h == fail.len())
        .map(|(_, d)| d)
        .ok_or_else(|| Error::Inadmissible(format!("code cannot repair {} failures", fail.len())))?;
    let survivors: Vec<NodeId> = shards.keys().copied().filter(|i| !fail.contains(i)).take(d).collect();
    if survivors.len() < d {
        return Err(Error::Inadmissible(format!("need {d} helpers, only {} shards survive", survivors.len())).into());
    }
    Ok(survivors)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => EXIT_IO,
                Error::Checksum { .. }
                | Error::Verification(_)
                | Error::Format(_)
                | Error::Mismatch(_)
                | Error::Protocol(_)
                | Error::Json(_) => EXIT_VERIFY,
                _ => EXIT_INADMISSIBLE,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<csv::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_INADMISSIBLE
}

/// Outcome that is not an error but still sets a non-zero exit code.
struct Failed(u8);

fn run(cli: Cli) -> anyhow::Result<Option<Failed>> {
    let registry = Registry::default();
    match cli.command {
        Command::Encode { input, outdir, code } => {
            let mut desc = code.descriptor()?;
            if desc.field.is_none() {
                desc.field = Some(FieldSpec::GF256);
            }
            let spec = desc.build(&registry)?;
            let data = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let shards = shard::encode_bytes(&spec, &data)?;
            shard::write_shards(&outdir, &shards)?;
            eprintln!("{spec}: {} stripes into {} shards", shards[0].header.stripes, shards.len());
        }
        Command::Decode { dir, output } => {
            let shards = load_shards(&dir)?;
            let data = shard::decode_bytes(&shards)?;
            fs::write(&output, data).with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Repair { dir, fail, helpers, mode, report } => {
            let mode = registry.strategy(&mode)?.mode();
            let shards = load_shards(&dir)?;
            let helpers = if helpers.is_empty() && !fail.is_empty() {
                default_helpers(&shards, &fail)?
            } else {
                helpers
            };
            let available: BTreeMap<NodeId, shard::Shard> =
                shards.into_iter().filter(|(i, _)| !fail.contains(i)).collect();
            let (restored, rep) = shard::repair_shards(&available, &fail, &helpers, mode)?;
            shard::write_shards(&dir, &restored)?;
            let json = rep.to_json();
            if let Some(p) = &report {
                write_out(Some(p), &json)?;
            }
            println!("{json}");
        }
        Command::Verify { dir } => {
            let found = shard::read_shards(&dir).with_context(|| format!("reading {}", dir.display()))?;
            let rep = shard::verify_shards(&found);
            println!("{}", serde_json::to_string_pretty(&rep)?);
            if !rep.ok {
                return Ok(Some(Failed(EXIT_VERIFY)));
            }
        }
        Command::Bound { n, k, h, d, l } => {
            codespec::check_admissible(n, k, h, d)?;
            let l = match l {
                Some(l) => l,
                None => codespec::make_code_with_cap(
                    Family::FixedSubset,
                    n,
                    k,
                    h,
                    d,
                    FieldSpec::minimal(codespec::required_field_order(Family::FixedSubset, n, k, h, d)?)?,
                    u64::MAX,
                )?
                .params()
                .l,
            };
            println!("n={n} k={k} h={h} d={d} l={l}");
            println!("cooperative  {}", cutset_cooperative(h, d, k, l)?);
            println!("centralized  {}", cutset_centralized(h, d, k, l)?);
            println!("per-link     {}", per_link_quota(h, d, k, l)?);
        }
        Command::Bench { family, n, k, h, d, field, l_cap, seed } => {
            let field = parse_field(&field)?;
            let (n_lo, n_hi) = parse_range(&n)?;
            let modes = [RepairMode::Cooperative, RepairMode::Centralized];
            let mut out = csv::Writer::from_writer(std::io::stdout());
            let mut all_optimal = true;
            for n in n_lo..=n_hi {
                for (kk, hh, dd) in bench_params(&family, n, &k, &h, &d)? {
                    let desc = CodeDescriptor {
                        family: family.clone(),
                        n,
                        k: kk,
                        h: Some(hh),
                        d: Some(dd),
                        field,
                        l_cap,
                    };
                    let spec = desc.build(&registry)?;
                    for row in inject_and_sweep(&spec, &modes, &registry, seed)? {
                        all_optimal &= row.optimal;
                        out.serialize(CsvRow {
                            n: row.n,
                            k: row.k,
                            h: row.h,
                            d: row.d,
                            l: row.l,
                            failed: join(&row.failed),
                            helpers: join(&row.helpers),
                            coop_measured: row.coop_measured,
                            coop_bound: row.coop_bound,
                            central_measured: row.central_measured,
                            central_bound: row.central_bound,
                            optimal: row.optimal,
                        })?;
                    }
                }
            }
            out.flush()?;
            if !all_optimal {
                return Ok(Some(Failed(EXIT_VERIFY)));
            }
        }
        Command::Simulate { scenario, out } => {
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let config = ClusterConfig::from_json(&text)?;
            let report = run_scenario(&config, &registry)?;
            write_out(out.as_deref(), &report.to_json())?;
            if !report.all_ok() {
                return Ok(Some(Failed(EXIT_VERIFY)));
            }
        }
        Command::List => {
            for name in registry.family_names() {
                println!("family    {name:<13} {}", registry.family(name)?.summary());
            }
            for name in registry.strategy_names() {
                println!("strategy  {name}");
            }
        }
    }
    Ok(None)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Failed(code))) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
