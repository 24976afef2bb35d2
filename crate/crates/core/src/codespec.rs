//! Code construction: row index sets, subset ranking, masking functions and
//! the per-row parity-check coefficients.
//!
//! A code is described entirely by its parity checks. Row `a` of a
//! codeword `(c_{1,a}, ..., c_{n,a})` must satisfy
//! `sum_i coeff(i, a)^t * c_{i,a} = 0` for `t = 0..r`, and within every
//! row the `n` coefficients are pairwise distinct, so each row is itself a
//! generalized Reed-Solomon code.
//!
//! Three families are provided:
//!
//! * **fixed-subset**: rows are labelled by `A`, the `h`-digit vectors over
//!   `[0, s-1]` with at most one digit equal to `s-1`. Node `i <= h` uses
//!   `lambda_{i, a_i}`, every other node a single constant `lambda_i`.
//!   Nodes `1..=h` can be repaired together from any `d` helpers.
//! * **any-subset**: rows are labelled by `m = C(n, h)` blocks, each an
//!   element of `A`. Block `g(F)` belongs to the failed set `F`, and node
//!   `i` uses `lambda_{i, f(i, a)}` where `f` sums the digits that the
//!   blocks of all `F` containing `i` assign to it. Any `h` nodes can be
//!   repaired from any `d` helpers.
//! * **concatenated**: the product of several codes. A row is a tuple of
//!   component rows and node `i` uses `lambda_{i, M}` with
//!   `M = (sum of component masks) mod W_i`, `W_i` the widest component
//!   alphabet at `i`. Fixing every component but one leaves that
//!   component's repair structure intact.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Elem, Field, FieldSpec};
use crate::NodeId;

/// Default ceiling on the sub-packetization of a single code.
pub const DEFAULT_L_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FixedSubset,
    AnySubset,
    Concatenated,
}

impl Family {
    fn tag(self) -> u8 {
        match self {
            Family::FixedSubset => 0,
            Family::AnySubset => 1,
            Family::Concatenated => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Family::FixedSubset),
            1 => Ok(Family::AnySubset),
            2 => Ok(Family::Concatenated),
            other => Err(Error::Format(format!("unknown family tag {other}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::FixedSubset => "fixed-subset",
            Family::AnySubset => "any-subset",
            Family::Concatenated => "concatenated",
        })
    }
}

/// Code parameters. For concatenated codes `h`, `d`, `s` and `m` are zero;
/// the repairable `(h, d)` pairs come from [`CodeSpec::repair_profiles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub h: usize,
    pub d: usize,
    pub s: usize,
    pub l: usize,
    pub m: usize,
}

/// Checks `1 <= h`, `k + 1 <= d` and `h + d <= n`.
///
/// Equivalently `h <= n - d <= r - 1`; `h = 1` is the single-node case.
pub fn check_admissible(n: usize, k: usize, h: usize, d: usize) -> Result<()> {
    if k == 0 || n <= k {
        return Err(Error::inadmissible(format!("need 1 <= k < n, got n={n} k={k}")));
    }
    if n > u16::MAX as usize {
        return Err(Error::inadmissible(format!("n={n} too large")));
    }
    if h == 0 {
        return Err(Error::inadmissible("h must be at least 1"));
    }
    if d < k + 1 {
        return Err(Error::inadmissible(format!("need d >= k + 1, got d={d} k={k}")));
    }
    if h + d > n {
        return Err(Error::inadmissible(format!(
            "need h <= n - d, got n={n} h={h} d={d}"
        )));
    }
    Ok(())
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The ordered set `A` of `h`-digit vectors over `[0, s-1]` with at most
/// one digit equal to `s - 1`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    h: usize,
    s: usize,
    digits: Vec<u16>,
    lookup: HashMap<Vec<u16>, usize>,
}

impl IndexSet {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.digits.len() / self.h
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn get(&self, idx: usize) -> &[u16] {
        &self.digits[idx * self.h..(idx + 1) * self.h]
    }

    pub fn index_of(&self, digits: &[u16]) -> Option<usize> {
        self.lookup.get(digits).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        self.digits.chunks(self.h)
    }

    pub fn to_vecs(&self) -> Vec<Vec<u16>> {
        self.iter().map(<[u16]>::to_vec).collect()
    }
}

fn all_vectors(h: usize, s: usize, keep: impl Fn(&[u16]) -> bool) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; h];
    loop {
        if keep(&cur) {
            out.push(cur.clone());
        }
        // Lexicographic successor, last digit fastest.
        let mut pos = h;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if (cur[pos] as usize) + 1 < s {
                cur[pos] += 1;
                cur[pos + 1..].iter_mut().for_each(|d| *d = 0);
                break;
            }
        }
    }
}

/// `A` for the given `h >= 1`, `s >= 2`. `|A| = (h + s - 1)(s - 1)^(h-1)`.
pub fn build_a(h: usize, s: usize) -> IndexSet {
    assert!(h >= 1 && s >= 2, "build_a needs h >= 1 and s >= 2");
    let top = (s - 1) as u16;
    let vecs = all_vectors(h, s, |v| v.iter().filter(|&&d| d == top).count() <= 1);
    let lookup = vecs.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    IndexSet { h, s, digits: vecs.concat(), lookup }
}

/// `B_i`: digit `i` (1-based) free in `[0, s-1]`, every other in `[0, s-2]`.
pub fn build_bi(h: usize, s: usize, i: usize) -> Result<Vec<Vec<u16>>> {
    if i == 0 || i > h {
        return Err(Error::inadmissible(format!("B_i needs 1 <= i <= {h}, got {i}")));
    }
    let top = (s - 1) as u16;
    Ok(all_vectors(h, s, |v| v.iter().enumerate().all(|(j, &d)| j + 1 == i || d < top)))
}

/// `A_0 = [0, s-2]^h`, the intersection of all `B_i`.
pub fn build_a0(h: usize, s: usize) -> Vec<Vec<u16>> {
    let top = (s - 1) as u16;
    all_vectors(h, s, |v| v.iter().all(|&d| d < top))
}

fn check_subset(n: usize, subset: &[NodeId]) -> Result<()> {
    if subset.is_empty()
        || subset.windows(2).any(|w| w[0] >= w[1])
        || subset[0] == 0
        || *subset.last().unwrap() > n
    {
        return Err(Error::inadmissible(format!(
            "{subset:?} is not a strictly increasing subset of 1..={n}"
        )));
    }
    Ok(())
}

/// Rank of an `h`-subset of `[n]` in `1..=C(n, h)`:
/// `g({i_1 < ... < i_h}) = sum_j C(i_j - 1, j) + 1`.
pub fn subset_rank(n: usize, subset: &[NodeId]) -> Result<usize> {
    check_subset(n, subset)?;
    Ok(subset_rank_unchecked(subset))
}

pub(crate) fn subset_rank_unchecked(subset: &[NodeId]) -> usize {
    subset
        .iter()
        .enumerate()
        .map(|(j, &i)| binomial(i - 1, j + 1) as usize)
        .sum::<usize>()
        + 1
}

/// Inverse of [`subset_rank`].
pub fn subset_unrank(n: usize, h: usize, rank: usize) -> Result<Vec<NodeId>> {
    let m = binomial(n, h);
    if h == 0 || rank == 0 || rank as u128 > m {
        return Err(Error::inadmissible(format!("rank {rank} outside 1..={m}")));
    }
    let mut rest = rank - 1;
    let mut out = vec![0; h];
    let mut upper = n;
    for pos in (1..=h).rev() {
        // Largest c < upper with C(c, pos) <= rest.
        let mut c = upper - 1;
        while binomial(c, pos) as usize > rest {
            c -= 1;
        }
        rest -= binomial(c, pos) as usize;
        out[pos - 1] = c + 1;
        upper = c;
    }
    Ok(out)
}

/// A row label: `blocks * h` digits, block 1 first (least significant).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub h: usize,
    pub digits: Vec<u16>,
}

impl MultiIndex {
    pub fn new(h: usize, digits: Vec<u16>) -> Self {
        MultiIndex { h, digits }
    }

    pub fn zero(h: usize, blocks: usize) -> Self {
        MultiIndex { h, digits: vec![0; h * blocks] }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[u16]> {
        self.digits.chunks(self.h)
    }

    /// Block `j`, 1-based.
    pub fn block(&self, j: usize) -> &[u16] {
        &self.digits[(j - 1) * self.h..j * self.h]
    }

    pub fn block_count(&self) -> usize {
        self.digits.len() / self.h
    }

    /// `a(j, b)`: this index with block `j` (1-based) replaced by `b`.
    pub fn with_block(&self, j: usize, b: &[u16]) -> MultiIndex {
        let mut out = self.clone();
        out.digits[(j - 1) * self.h..j * self.h].copy_from_slice(b);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Fixed,
    Any,
}

/// One factor of a (possibly concatenated) code.
#[derive(Debug, Clone)]
struct Layer {
    kind: LayerKind,
    h: usize,
    d: usize,
    s: usize,
    alphabet: Arc<IndexSet>,
    blocks: usize,
    rows: usize,
    stride: usize,
    block_pow: Vec<usize>,
    /// Any-subset only: per 0-based node, the `(block, digit)` pairs summed by `f`.
    terms: Vec<Vec<(usize, usize)>>,
}

impl Layer {
    fn new(kind: LayerKind, n: usize, h: usize, d: usize, s: usize, rows: usize) -> Self {
        let alphabet = Arc::new(build_a(h, s));
        let blocks = match kind {
            LayerKind::Fixed => 1,
            LayerKind::Any => binomial(n, h) as usize,
        };
        let block_pow = (0..blocks).scan(1usize, |p, _| {
            let cur = *p;
            *p = p.saturating_mul(alphabet.len());
            Some(cur)
        });
        let block_pow = block_pow.collect();
        let mut terms = Vec::new();
        if kind == LayerKind::Any {
            terms = vec![Vec::new(); n];
            for rank in 1..=blocks {
                let subset = subset_unrank(n, h, rank).expect("rank in range");
                for (z, &i) in subset.iter().enumerate() {
                    terms[i - 1].push((rank - 1, z));
                }
            }
        }
        Layer { kind, h, d, s, alphabet, blocks, rows, stride: 1, block_pow, terms }
    }

    fn masks(&self, node: usize) -> bool {
        match self.kind {
            LayerKind::Fixed => node < self.h,
            LayerKind::Any => true,
        }
    }

    #[inline]
    fn local_row(&self, row: usize) -> usize {
        (row / self.stride) % self.rows
    }

    #[inline]
    fn block_digits(&self, local: usize, block: usize) -> &[u16] {
        self.alphabet.get((local / self.block_pow[block]) % self.alphabet.len())
    }

    /// This layer's mask for 0-based `node` on global `row`.
    fn mask(&self, node: usize, row: usize) -> usize {
        let local = self.local_row(row);
        match self.kind {
            LayerKind::Fixed if node < self.h => self.alphabet.get(local)[node] as usize,
            LayerKind::Fixed => 0,
            LayerKind::Any => {
                let sum: usize = self.terms[node]
                    .iter()
                    .map(|&(b, z)| self.block_digits(local, b)[z] as usize)
                    .sum();
                sum % self.s
            }
        }
    }
}

/// Distinct coefficients per node: node `i` owns `width(i)` consecutive
/// entries. Masked nodes come first in row-major `(i, j)` order, then the
/// single-coefficient nodes, all drawn from the canonical enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LambdaTable {
    offsets: Vec<usize>,
    widths: Vec<usize>,
    values: Vec<Elem>,
}

impl LambdaTable {
    fn assign(field: &Field, widths: Vec<usize>) -> Result<Self> {
        let total: usize = widths.iter().sum();
        if total as u64 > field.order() as u64 {
            return Err(Error::FieldTooSmall { required: total as u64, order: field.order() });
        }
        let values = field.enumerate_elements(total)?;
        let mut offsets = vec![0; widths.len()];
        let mut next = 0;
        for (i, &w) in widths.iter().enumerate() {
            if w > 1 {
                offsets[i] = next;
                next += w;
            }
        }
        for (i, &w) in widths.iter().enumerate() {
            if w <= 1 {
                offsets[i] = next;
                next += 1;
            }
        }
        Ok(LambdaTable { offsets, widths, values })
    }

    /// `lambda_{i, j}` for 1-based node `i`.
    pub fn get(&self, node: NodeId, j: usize) -> Elem {
        assert!(j < self.widths[node - 1], "lambda index out of range");
        self.values[self.offsets[node - 1] + j]
    }

    pub fn width(&self, node: NodeId) -> usize {
        self.widths[node - 1]
    }

    pub fn node_count(&self) -> usize {
        self.widths.len()
    }

    pub fn total(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug)]
struct Inner {
    family: Family,
    params: CodeParams,
    field: Field,
    lambdas: LambdaTable,
    layers: Vec<Layer>,
    parts: Vec<CodeSpec>,
}

/// An immutable code description. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct CodeSpec {
    inner: Arc<Inner>,
}

impl PartialEq for CodeSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.to_bytes() == other.to_bytes()
    }
}

impl Eq for CodeSpec {}

/// Sub-packetization of one family member, or `None` on overflow.
fn family_rows(family: Family, n: usize, h: usize, s: usize) -> Option<u128> {
    let a = (h as u128 + s as u128 - 1).checked_mul((s as u128 - 1).checked_pow(h as u32 - 1)?)?;
    match family {
        Family::FixedSubset => Some(a),
        Family::AnySubset => a.checked_pow(u32::try_from(binomial(n, h)).ok()?),
        Family::Concatenated => None,
    }
}

/// Builds a fixed-subset or any-subset code with the default `l` cap.
pub fn make_code(family: Family, n: usize, k: usize, h: usize, d: usize, field: FieldSpec) -> Result<CodeSpec> {
    make_code_with_cap(family, n, k, h, d, field, DEFAULT_L_CAP)
}

pub fn make_code_with_cap(
    family: Family,
    n: usize,
    k: usize,
    h: usize,
    d: usize,
    field: FieldSpec,
    cap: u64,
) -> Result<CodeSpec> {
    check_admissible(n, k, h, d)?;
    let s = d + 1 - k;
    let l = family_rows(family, n, h, s).ok_or_else(|| match family {
        Family::Concatenated => Error::inadmissible("use concat() for concatenated codes"),
        _ => Error::SubPacketizationCap { l: u128::MAX, cap },
    })?;
    if l > cap as u128 {
        return Err(Error::SubPacketizationCap { l, cap });
    }
    let l = l as usize;
    let field = Field::new(field)?;
    let kind = match family {
        Family::FixedSubset => LayerKind::Fixed,
        _ => LayerKind::Any,
    };
    let layer = Layer::new(kind, n, h, d, s, l);
    let widths = (0..n).map(|i| if layer.masks(i) { s } else { 1 }).collect();
    let lambdas = LambdaTable::assign(&field, widths)?;
    let params = CodeParams { n, k, r: n - k, h, d, s, l, m: layer.blocks };
    Ok(CodeSpec {
        inner: Arc::new(Inner { family, params, field, lambdas, layers: vec![layer], parts: Vec::new() }),
    })
}

/// Minimum field order for a family member (`n + h(s-1)` or `s n`).
pub fn required_field_order(family: Family, n: usize, k: usize, h: usize, d: usize) -> Result<u64> {
    check_admissible(n, k, h, d)?;
    let s = (d + 1 - k) as u64;
    match family {
        Family::FixedSubset => Ok(n as u64 + h as u64 * (s - 1)),
        Family::AnySubset => Ok(s * n as u64),
        Family::Concatenated => Err(Error::inadmissible("concatenated codes have no single (h, d)")),
    }
}

/// Product code of `codes`: row count multiplies, each component keeps its
/// repair structure. Components must share `(n, k)` and field.
pub fn concat(codes: &[CodeSpec]) -> Result<CodeSpec> {
    concat_with_cap(codes, DEFAULT_L_CAP)
}

pub fn concat_with_cap(codes: &[CodeSpec], cap: u64) -> Result<CodeSpec> {
    let first = codes.first().ok_or_else(|| Error::Mismatch("nothing to concatenate".into()))?;
    let (n, k) = (first.params().n, first.params().k);
    let field = first.field().clone();
    let mut l: u128 = 1;
    for c in codes {
        if c.params().n != n || c.params().k != k {
            return Err(Error::Mismatch(format!(
                "(n, k) = ({}, {}) vs ({n}, {k})",
                c.params().n,
                c.params().k
            )));
        }
        if c.field() != &field {
            return Err(Error::Mismatch(format!("field {} vs {}", c.field().spec(), field.spec())));
        }
        l = l.saturating_mul(c.params().l as u128);
    }
    if l > cap as u128 {
        return Err(Error::SubPacketizationCap { l, cap });
    }
    let mut layers = Vec::new();
    let mut stride = 1usize;
    for c in codes {
        for layer in &c.inner.layers {
            let mut layer = layer.clone();
            layer.stride = stride * layer.stride;
            layers.push(layer);
        }
        stride *= c.params().l;
    }
    let widths = (0..n)
        .map(|i| layers.iter().map(|ly| if ly.masks(i) { ly.s } else { 1 }).max().unwrap_or(1))
        .collect();
    let lambdas = LambdaTable::assign(&field, widths)?;
    let params = CodeParams { n, k, r: n - k, h: 0, d: 0, s: 0, l: l as usize, m: 0 };
    Ok(CodeSpec {
        inner: Arc::new(Inner {
            family: Family::Concatenated,
            params,
            field,
            lambdas,
            layers,
            parts: codes.to_vec(),
        }),
    })
}

/// Admissible `(h, d)` pairs for an `(n, k)` code, ordered by `h` then `d`.
pub fn admissible_pairs(n: usize, k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for h in 1..n {
        for d in k + 1..n {
            if check_admissible(n, k, h, d).is_ok() {
                out.push((h, d));
            }
        }
    }
    out
}

/// The universal code: concatenation of the any-subset codes for every
/// admissible `(h, d)`. With `field = None` the smallest field of order at
/// least `(n - k) n` is used.
pub fn universal(n: usize, k: usize, field: Option<FieldSpec>, cap: u64) -> Result<CodeSpec> {
    let pairs = admissible_pairs(n, k);
    if pairs.is_empty() {
        return Err(Error::inadmissible(format!("no admissible (h, d) for n={n} k={k}")));
    }
    let field = match field {
        Some(f) => f,
        None => FieldSpec::minimal(((n - k) * n) as u64)?,
    };
    let mut l: u128 = 1;
    for &(h, d) in &pairs {
        l = l.saturating_mul(family_rows(Family::AnySubset, n, h, d + 1 - k).unwrap_or(u128::MAX));
    }
    if l > cap as u128 {
        return Err(Error::SubPacketizationCap { l, cap });
    }
    let parts = pairs
        .iter()
        .map(|&(h, d)| make_code_with_cap(Family::AnySubset, n, k, h, d, field, cap))
        .collect::<Result<Vec<_>>>()?;
    concat_with_cap(&parts, cap)
}

/// How the rows of a code split into subcodes for one failure pattern.
///
/// Subcode rows are `base + index_of(b) * stride` for `b` in `alphabet`,
/// where `base` ranges over rows whose digit at `stride` is zero.
#[derive(Debug, Clone)]
pub(crate) struct SubcodeLayout {
    pub stride: usize,
    pub alphabet: Arc<IndexSet>,
    pub h: usize,
    pub s: usize,
}

impl CodeSpec {
    pub fn family(&self) -> Family {
        self.inner.family
    }

    pub fn params(&self) -> &CodeParams {
        &self.inner.params
    }

    pub fn field(&self) -> &Field {
        &self.inner.field
    }

    pub fn lambdas(&self) -> &LambdaTable {
        &self.inner.lambdas
    }

    /// Components of a concatenated code; empty otherwise.
    pub fn parts(&self) -> &[CodeSpec] {
        &self.inner.parts
    }

    /// `(h, d)` pairs with an optimal repair scheme, one per component.
    pub fn repair_profiles(&self) -> Vec<(usize, usize)> {
        self.inner.layers.iter().map(|ly| (ly.h, ly.d)).collect()
    }

    /// Total distinct field elements the coefficient table uses.
    pub fn required_field_order(&self) -> usize {
        self.inner.lambdas.total()
    }

    /// Coefficient multiplying `c_{node, row}` in every parity row.
    /// `node` is 1-based, `row` in `0..l`.
    #[inline]
    pub fn coeff_at(&self, node: NodeId, row: usize) -> Elem {
        let i = node - 1;
        let lam = &self.inner.lambdas;
        let width = lam.widths[i];
        if width <= 1 {
            return lam.values[lam.offsets[i]];
        }
        let m: usize = self.inner.layers.iter().map(|ly| ly.mask(i, row)).sum();
        lam.values[lam.offsets[i] + m % width]
    }

    /// All `n` coefficients of `row` into `out`.
    pub fn row_coeffs(&self, row: usize, out: &mut [Elem]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.coeff_at(i + 1, row);
        }
    }

    fn single_layer(&self) -> Result<&Layer> {
        match self.inner.family {
            Family::Concatenated => Err(Error::inadmissible(
                "multi-index access needs a fixed-subset or any-subset code",
            )),
            _ => Ok(&self.inner.layers[0]),
        }
    }

    /// Row label of `row` for a non-concatenated code.
    pub fn multi_index(&self, row: usize) -> Result<MultiIndex> {
        let layer = self.single_layer()?;
        let mut digits = Vec::with_capacity(layer.h * layer.blocks);
        for b in 0..layer.blocks {
            digits.extend_from_slice(layer.block_digits(row, b));
        }
        Ok(MultiIndex::new(layer.h, digits))
    }

    /// Inverse of [`CodeSpec::multi_index`]; `None` if some block is not in `A`.
    pub fn row_of(&self, a: &MultiIndex) -> Option<usize> {
        let layer = self.single_layer().ok()?;
        if a.h != layer.h || a.block_count() != layer.blocks {
            return None;
        }
        let mut row = 0;
        for (b, block) in a.blocks().enumerate() {
            row += layer.alphabet.index_of(block)? * layer.block_pow[b];
        }
        Some(row)
    }

    /// The masking function `f(i, a)` of an any-subset code.
    pub fn mask_f(&self, node: NodeId, a: &MultiIndex) -> Result<usize> {
        let layer = self.single_layer()?;
        if layer.kind != LayerKind::Any {
            return Err(Error::inadmissible("mask_f is defined for any-subset codes"));
        }
        let row = self.row_of(a).ok_or_else(|| Error::inadmissible("row label outside A^[m]"))?;
        Ok(layer.mask(node - 1, row))
    }

    /// Coefficient of `c_{node, a}` for a non-concatenated code.
    pub fn row_coeff(&self, node: NodeId, a: &MultiIndex) -> Result<Elem> {
        let row = self.row_of(a).ok_or_else(|| Error::inadmissible("row label not valid for this code"))?;
        Ok(self.coeff_at(node, row))
    }

    /// Picks the component that repairs `failed` from `helpers` helpers.
    pub(crate) fn subcode_layout(&self, failed: &[NodeId], helpers: usize) -> Result<SubcodeLayout> {
        let h = failed.len();
        let mut mismatch = None;
        for layer in &self.inner.layers {
            if layer.h != h || layer.d != helpers {
                continue;
            }
            match layer.kind {
                LayerKind::Fixed => {
                    if failed.iter().enumerate().all(|(u, &i)| i == u + 1) {
                        return Ok(SubcodeLayout {
                            stride: layer.stride,
                            alphabet: layer.alphabet.clone(),
                            h,
                            s: layer.s,
                        });
                    }
                    mismatch = Some(format!(
                        "fixed-subset code repairs nodes 1..={h} only, asked for {failed:?}"
                    ));
                }
                LayerKind::Any => {
                    let g = subset_rank_unchecked(failed);
                    return Ok(SubcodeLayout {
                        stride: layer.stride * layer.block_pow[g - 1],
                        alphabet: layer.alphabet.clone(),
                        h,
                        s: layer.s,
                    });
                }
            }
        }
        Err(match mismatch {
            Some(msg) => Error::FamilyMismatch(msg),
            None => Error::inadmissible(format!(
                "no component repairs h={h} failures from d={helpers} helpers (supported: {:?})",
                self.repair_profiles()
            )),
        })
    }

    /// Canonical binary layout: family tag, n, k, h, d (u16 LE), field
    /// descriptor, component count (u16 LE), then each component.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_bytes(&mut out);
        out
    }

    fn write_bytes(&self, out: &mut Vec<u8>) {
        let p = self.params();
        out.push(self.family().tag());
        for v in [p.n, p.k, p.h, p.d] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        out.extend_from_slice(&self.field().spec().to_bytes());
        out.extend_from_slice(&(self.parts().len() as u16).to_le_bytes());
        for part in self.parts() {
            part.write_bytes(out);
        }
    }

    /// Parses [`CodeSpec::to_bytes`] output; returns the code and bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(CodeSpec, usize)> {
        Self::from_bytes_capped(bytes, DEFAULT_L_CAP)
    }

    pub fn from_bytes_capped(bytes: &[u8], cap: u64) -> Result<(CodeSpec, usize)> {
        const FIXED: usize = 1 + 8 + 3 + 2;
        if bytes.len() < FIXED {
            return Err(Error::Format("truncated code descriptor".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]) as usize;
        let family = Family::from_tag(bytes[0])?;
        let (n, k, h, d) = (u16_at(1), u16_at(3), u16_at(5), u16_at(7));
        let field = FieldSpec::from_bytes([bytes[9], bytes[10], bytes[11]])?;
        let count = u16_at(12);
        let mut used = FIXED;
        match family {
            Family::Concatenated => {
                let mut parts = Vec::with_capacity(count);
                for _ in 0..count {
                    let (part, n_used) = Self::from_bytes_capped(&bytes[used..], cap)?;
                    used += n_used;
                    parts.push(part);
                }
                let spec = concat_with_cap(&parts, cap)?;
                if spec.params().n != n || spec.params().k != k || spec.field().spec() != field {
                    return Err(Error::Format("concatenated header disagrees with parts".into()));
                }
                Ok((spec, used))
            }
            _ => {
                if count != 0 {
                    return Err(Error::Format("only concatenated codes carry components".into()));
                }
                Ok((make_code_with_cap(family, n, k, h, d, field, cap)?, used))
            }
        }
    }
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.params();
        match self.family() {
            Family::Concatenated => write!(
                f,
                "concatenated(n={}, k={}, l={}, profiles={:?}) over {}",
                p.n,
                p.k,
                p.l,
                self.repair_profiles(),
                self.field().spec()
            ),
            fam => write!(
                f,
                "{fam}(n={}, k={}, h={}, d={}, s={}, l={}) over {}",
                p.n,
                p.k,
                p.h,
                p.d,
                p.s,
                p.l,
                self.field().spec()
            ),
        }
    }
}
