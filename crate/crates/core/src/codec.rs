//! Systematic encoding, erasure decoding from any `k` columns, and parity
//! verification.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::codespec::CodeSpec;
use crate::error::{Error, Result};
use crate::field::Elem;
use crate::grs::ErasureSolver;
use crate::NodeId;

/// Rows handed to one rayon task. Row work is tiny, so batch it.
const ROW_CHUNK: usize = 512;

/// An `l x n` array of symbols, stored row-major. Column `i` is what node
/// `i` stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordArray {
    spec: CodeSpec,
    cells: Vec<Elem>,
}

impl CodewordArray {
    pub fn zeros(spec: &CodeSpec) -> Self {
        let p = spec.params();
        CodewordArray { spec: spec.clone(), cells: vec![Elem::ZERO; p.l * p.n] }
    }

    /// Wraps row-major cells; no parity check is made.
    pub fn from_cells(spec: &CodeSpec, cells: Vec<Elem>) -> Result<Self> {
        let expected = spec.params().l * spec.params().n;
        if cells.len() != expected {
            return Err(Error::Dimension { expected, got: cells.len() });
        }
        Ok(CodewordArray { spec: spec.clone(), cells })
    }

    pub fn spec(&self) -> &CodeSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[Elem] {
        &self.cells
    }

    pub fn n(&self) -> usize {
        self.spec.params().n
    }

    pub fn l(&self) -> usize {
        self.spec.params().l
    }

    pub fn row(&self, row: usize) -> &[Elem] {
        let n = self.n();
        &self.cells[row * n..(row + 1) * n]
    }

    pub fn get(&self, node: NodeId, row: usize) -> Elem {
        self.cells[row * self.n() + node - 1]
    }

    pub fn set(&mut self, node: NodeId, row: usize, v: Elem) {
        let n = self.n();
        self.cells[row * n + node - 1] = v;
    }

    pub fn column(&self, node: NodeId) -> Vec<Elem> {
        self.cells.iter().skip(node - 1).step_by(self.n()).copied().collect()
    }

    pub fn set_column(&mut self, node: NodeId, col: &[Elem]) -> Result<()> {
        if col.len() != self.l() {
            return Err(Error::Dimension { expected: self.l(), got: col.len() });
        }
        let n = self.n();
        for (row, &v) in col.iter().enumerate() {
            self.cells[row * n + node - 1] = v;
        }
        Ok(())
    }

    /// Zeroes the given columns, simulating lost nodes.
    pub fn erase(&mut self, nodes: &[NodeId]) {
        let n = self.n();
        for row in self.cells.chunks_mut(n) {
            for &i in nodes {
                row[i - 1] = Elem::ZERO;
            }
        }
    }

    /// The data part: the first `k` columns, row-major.
    pub fn data(&self) -> Vec<Elem> {
        let k = self.spec.params().k;
        self.cells.chunks(self.n()).flat_map(|row| row[..k].iter().copied()).collect()
    }
}

/// Fills the unknown coordinates of one row, given every other coordinate.
fn complete_rows(spec: &CodeSpec, cells: &mut [Elem], unknown: &[NodeId]) {
    let n = spec.params().n;
    let field = spec.field();
    let known: Vec<NodeId> = (1..=n).filter(|i| !unknown.contains(i)).collect();
    cells.par_chunks_mut(n * ROW_CHUNK).enumerate().for_each(|(chunk, rows)| {
        let mut solver = ErasureSolver::default();
        let mut coeffs = vec![Elem::ZERO; n];
        let mut points = vec![Elem::ZERO; unknown.len()];
        let mut solved = vec![Elem::ZERO; unknown.len()];
        for (off, row) in rows.chunks_mut(n).enumerate() {
            spec.row_coeffs(chunk * ROW_CHUNK + off, &mut coeffs);
            for (p, &i) in points.iter_mut().zip(unknown) {
                *p = coeffs[i - 1];
            }
            solver.solve(field, &points, known.iter().map(|&i| (coeffs[i - 1], row[i - 1])), &mut solved);
            for (&i, &v) in unknown.iter().zip(&solved) {
                row[i - 1] = v;
            }
        }
    });
}

/// Encodes `l x k` row-major data: columns `1..=k` hold the data, the parity
/// columns are solved row by row.
pub fn encode_systematic(spec: &CodeSpec, data: &[Elem]) -> Result<CodewordArray> {
    let p = spec.params();
    if data.len() != p.l * p.k {
        return Err(Error::Dimension { expected: p.l * p.k, got: data.len() });
    }
    let mut cells = vec![Elem::ZERO; p.l * p.n];
    for (row, src) in cells.chunks_mut(p.n).zip(data.chunks(p.k)) {
        row[..p.k].copy_from_slice(src);
    }
    let parity: Vec<NodeId> = (p.k + 1..=p.n).collect();
    complete_rows(spec, &mut cells, &parity);
    Ok(CodewordArray { spec: spec.clone(), cells })
}

/// Rebuilds the codeword from at least `k` columns. With more than `k`, the
/// `k` lowest-numbered are used and the rest ignored.
pub fn decode_from_columns(spec: &CodeSpec, available: &BTreeMap<NodeId, Vec<Elem>>) -> Result<CodewordArray> {
    let p = spec.params();
    if available.len() < p.k {
        return Err(Error::TooFewColumns { need: p.k, got: available.len() });
    }
    let mut out = CodewordArray::zeros(spec);
    let chosen: Vec<NodeId> = available.keys().copied().take(p.k).collect();
    for &i in &chosen {
        if i == 0 || i > p.n {
            return Err(Error::Dimension { expected: p.n, got: i });
        }
        out.set_column(i, &available[&i])?;
    }
    let missing: Vec<NodeId> = (1..=p.n).filter(|i| !chosen.contains(i)).collect();
    complete_rows(spec, &mut out.cells, &missing);
    Ok(out)
}

/// First failing parity check, `t` being the power and `row` the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParityWitness {
    pub t: usize,
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParityVerdict {
    pub ok: bool,
    pub witness: Option<ParityWitness>,
}

/// Evaluates all `r l` checks. The witness is the lowest failing row, and
/// within it the lowest `t`.
pub fn verify_parity(word: &CodewordArray) -> ParityVerdict {
    let spec = word.spec();
    let (n, r) = (spec.params().n, spec.params().r);
    let field = spec.field();
    let witness = word
        .cells
        .par_chunks(n)
        .enumerate()
        .map_init(
            || vec![Elem::ZERO; n],
            |coeffs, (row, vals)| {
                spec.row_coeffs(row, coeffs);
                crate::grs::power_sums(field, coeffs, vals, r)
                    .iter()
                    .position(|v| !v.is_zero())
                    .map(|t| ParityWitness { t, row })
            },
        )
        .find_first(Option::is_some)
        .flatten();
    ParityVerdict { ok: witness.is_none(), witness }
}

/// A renaming of storage nodes. Position `p` (1-based physical node) stores
/// logical column `logical[p - 1]` of the code.
///
/// Fixed-subset codes only repair logical nodes `1..=h`; encoding through a
/// relabeling that maps the expected failure set there lets any `h` nodes
/// play that role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    logical: Vec<NodeId>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Relabeling { logical: (1..=n).collect() }
    }

    /// Physical `front[u]` becomes logical `u + 1`; the rest keep their
    /// relative order.
    pub fn to_front(n: usize, front: &[NodeId]) -> Result<Self> {
        if front.iter().any(|&i| i == 0 || i > n) {
            return Err(Error::inadmissible(format!("{front:?} not within 1..={n}")));
        }
        let mut physical: Vec<NodeId> = front.to_vec();
        physical.extend((1..=n).filter(|i| !front.contains(i)));
        let mut logical = vec![0; n];
        for (pos, &p) in physical.iter().enumerate() {
            if logical[p - 1] != 0 {
                return Err(Error::inadmissible(format!("{p} listed twice")));
            }
            logical[p - 1] = pos + 1;
        }
        Ok(Relabeling { logical })
    }

    pub fn logical(&self, physical: NodeId) -> NodeId {
        self.logical[physical - 1]
    }

    pub fn physical(&self, logical: NodeId) -> NodeId {
        self.logical.iter().position(|&x| x == logical).expect("logical node in range") + 1
    }

    /// Physical layout of a logical codeword.
    pub fn to_physical(&self, word: &CodewordArray) -> Vec<Vec<Elem>> {
        (1..=word.n()).map(|p| word.column(self.logical(p))).collect()
    }

    /// Logical codeword from physical columns.
    pub fn from_physical(&self, spec: &CodeSpec, columns: &[Vec<Elem>]) -> Result<CodewordArray> {
        let mut out = CodewordArray::zeros(spec);
        for (p, col) in columns.iter().enumerate() {
            out.set_column(self.logical(p + 1), col)?;
        }
        Ok(out)
    }
}
