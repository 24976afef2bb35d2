//! Named code families and repair strategies, looked up at runtime.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::codec::CodewordArray;
use crate::codespec::{self, CodeSpec, Family, DEFAULT_L_CAP};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::repair::{self, RepairContext, RepairMode, RepairTranscript};

/// Parameters a family is built from. `h` and `d` are ignored by families
/// that cover every pair; a missing field means the smallest that fits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub family: String,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_cap: Option<u64>,
}

impl CodeDescriptor {
    pub fn new(family: &str, n: usize, k: usize, h: usize, d: usize) -> Self {
        CodeDescriptor { family: family.into(), n, k, h: Some(h), d: Some(d), field: None, l_cap: None }
    }

    pub fn with_field(mut self, field: FieldSpec) -> Self {
        self.field = Some(field);
        self
    }

    fn hd(&self) -> Result<(usize, usize)> {
        match (self.h, self.d) {
            (Some(h), Some(d)) => Ok((h, d)),
            _ => Err(Error::inadmissible(format!("family `{}` needs both h and d", self.family))),
        }
    }

    fn cap(&self) -> u64 {
        self.l_cap.unwrap_or(DEFAULT_L_CAP)
    }

    pub fn build(&self, registry: &Registry) -> Result<CodeSpec> {
        registry.family(&self.family)?.build(self)
    }
}

/// A way of constructing codes from a [`CodeDescriptor`].
pub trait CodeFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Field order the code needs, before rounding up to an actual field.
    fn min_field_order(&self, desc: &CodeDescriptor) -> Result<u64>;
    fn build(&self, desc: &CodeDescriptor) -> Result<CodeSpec>;
}

fn pick_field(family: &dyn CodeFamily, desc: &CodeDescriptor) -> Result<FieldSpec> {
    match desc.field {
        Some(f) => Ok(f),
        None => FieldSpec::minimal(family.min_field_order(desc)?),
    }
}

struct SingleFamily {
    name: &'static str,
    summary: &'static str,
    family: Family,
}

impl CodeFamily for SingleFamily {
    fn name(&self) -> &'static str {
        self.name
    }

    fn summary(&self) -> &'static str {
        self.summary
    }

    fn min_field_order(&self, desc: &CodeDescriptor) -> Result<u64> {
        let (h, d) = desc.hd()?;
        codespec::required_field_order(self.family, desc.n, desc.k, h, d)
    }

    fn build(&self, desc: &CodeDescriptor) -> Result<CodeSpec> {
        let (h, d) = desc.hd()?;
        let field = pick_field(self, desc)?;
        codespec::make_code_with_cap(self.family, desc.n, desc.k, h, d, field, desc.cap())
    }
}

struct UniversalFamily;

impl CodeFamily for UniversalFamily {
    fn name(&self) -> &'static str {
        "universal"
    }

    fn summary(&self) -> &'static str {
        "concatenation of any-subset codes for every admissible (h, d)"
    }

    fn min_field_order(&self, desc: &CodeDescriptor) -> Result<u64> {
        if desc.k == 0 || desc.n <= desc.k {
            return Err(Error::inadmissible(format!("need 1 <= k < n, got n={} k={}", desc.n, desc.k)));
        }
        Ok(((desc.n - desc.k) * desc.n) as u64)
    }

    fn build(&self, desc: &CodeDescriptor) -> Result<CodeSpec> {
        codespec::universal(desc.n, desc.k, desc.field, desc.cap())
    }
}

/// A repair procedure with the bound it is measured against.
pub trait RepairStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
    fn mode(&self) -> RepairMode;
    fn bound(&self, h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>>;
    fn repair(&self, damaged: &CodewordArray, ctx: &RepairContext) -> Result<(CodewordArray, RepairTranscript)>;
}

struct Cooperative;

impl RepairStrategy for Cooperative {
    fn name(&self) -> &'static str {
        "cooperative"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["coop"]
    }

    fn mode(&self) -> RepairMode {
        RepairMode::Cooperative
    }

    fn bound(&self, h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>> {
        repair::cutset_cooperative(h, d, k, l)
    }

    fn repair(&self, damaged: &CodewordArray, ctx: &RepairContext) -> Result<(CodewordArray, RepairTranscript)> {
        repair::cooperative_repair(damaged, ctx)
    }
}

struct Centralized;

impl RepairStrategy for Centralized {
    fn name(&self) -> &'static str {
        "centralized"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["central"]
    }

    fn mode(&self) -> RepairMode {
        RepairMode::Centralized
    }

    fn bound(&self, h: usize, d: usize, k: usize, l: usize) -> Result<Ratio<u64>> {
        repair::cutset_centralized(h, d, k, l)
    }

    fn repair(&self, damaged: &CodewordArray, ctx: &RepairContext) -> Result<(CodewordArray, RepairTranscript)> {
        repair::centralized_repair_from_round1(damaged, ctx)
    }
}

pub struct Registry {
    families: BTreeMap<&'static str, Box<dyn CodeFamily>>,
    strategies: BTreeMap<&'static str, Box<dyn RepairStrategy>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("families", &self.families.keys().collect::<Vec<_>>())
            .field("strategies", &self.strategies.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut reg = Registry::empty();
        reg.register_family(Box::new(SingleFamily {
            name: "fixed-subset",
            summary: "repairs nodes 1..=h from any d helpers; small l",
            family: Family::FixedSubset,
        }));
        reg.register_family(Box::new(SingleFamily {
            name: "any-subset",
            summary: "repairs any h nodes from any d helpers",
            family: Family::AnySubset,
        }));
        reg.register_family(Box::new(UniversalFamily));
        reg.register_strategy(Box::new(Cooperative));
        reg.register_strategy(Box::new(Centralized));
        reg
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry { families: BTreeMap::new(), strategies: BTreeMap::new() }
    }

    /// Adds a family, replacing any with the same name.
    pub fn register_family(&mut self, family: Box<dyn CodeFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn register_strategy(&mut self, strategy: Box<dyn RepairStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn family(&self, name: &str) -> Result<&dyn CodeFamily> {
        self.families
            .get(name)
            .map(Box::as_ref)
            .ok_or_else(|| Error::UnknownName { kind: "code family", name: name.into() })
    }

    pub fn strategy(&self, name: &str) -> Result<&dyn RepairStrategy> {
        self.strategies
            .values()
            .find(|s| s.name() == name || s.aliases().contains(&name))
            .map(Box::as_ref)
            .ok_or_else(|| Error::UnknownName { kind: "repair strategy", name: name.into() })
    }

    pub fn strategy_for(&self, mode: RepairMode) -> Result<&dyn RepairStrategy> {
        self.strategies
            .values()
            .find(|s| s.mode() == mode)
            .map(Box::as_ref)
            .ok_or_else(|| Error::UnknownName { kind: "repair strategy", name: mode.to_string() })
    }

    pub fn family_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.families.keys().copied()
    }

    pub fn strategy_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}
