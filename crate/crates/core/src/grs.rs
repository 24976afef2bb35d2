//! Vandermonde solving and the generalized Reed-Solomon erasure kernel.
//!
//! The codes in this crate are all built from parity checks of the form
//! `sum_j x_j^t y_j = 0` for `t = 0..r`, with pairwise-distinct evaluation
//! points `x_j`. Any `N - r` coordinates of such a vector determine the
//! remaining `r`, which is what both decoding and repair rely on.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::{Elem, Field};

/// Solves `A y = b` in place by Gaussian elimination, `A` being `q x q`
/// row-major. Returns `false` if `A` is singular.
pub(crate) fn solve_linear(field: &Field, a: &mut [Elem], b: &mut [Elem]) -> bool {
    let q = b.len();
    debug_assert_eq!(a.len(), q * q);
    for col in 0..q {
        let Some(pivot) = (col..q).find(|&row| !a[row * q + col].is_zero()) else {
            return false;
        };
        if pivot != col {
            for c in 0..q {
                a.swap(pivot * q + c, col * q + c);
            }
            b.swap(pivot, col);
        }
        let inv = field.inv(a[col * q + col]).expect("nonzero pivot");
        for c in col..q {
            a[col * q + c] = field.mul(a[col * q + c], inv);
        }
        b[col] = field.mul(b[col], inv);
        for row in 0..q {
            if row == col {
                continue;
            }
            let factor = a[row * q + col];
            if factor.is_zero() {
                continue;
            }
            for c in col..q {
                let v = field.mul(factor, a[col * q + c]);
                a[row * q + c] = field.sub(a[row * q + c], v);
            }
            let v = field.mul(factor, b[col]);
            b[row] = field.sub(b[row], v);
        }
    }
    true
}

fn check_distinct(points: &[Elem]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    for p in points {
        if !seen.insert(*p) {
            return Err(Error::RepeatedPoint(p.value()));
        }
    }
    Ok(())
}

/// Returns `y` with `sum_j points[j]^t * y[j] = rhs[t]` for `t = 0..q`.
pub fn solve_vandermonde(field: &Field, points: &[Elem], rhs: &[Elem]) -> Result<Vec<Elem>> {
    if points.len() != rhs.len() {
        return Err(Error::Dimension { expected: points.len(), got: rhs.len() });
    }
    check_distinct(points)?;
    let q = points.len();
    let mut a = vec![Elem::ZERO; q * q];
    for (j, &p) in points.iter().enumerate() {
        let mut pw = Elem::ONE;
        for t in 0..q {
            a[t * q + j] = pw;
            pw = field.mul(pw, p);
        }
    }
    let mut y = rhs.to_vec();
    let ok = solve_linear(field, &mut a, &mut y);
    debug_assert!(ok, "distinct points give a nonsingular Vandermonde matrix");
    Ok(y)
}

/// Evaluates the `r` power sums `sum_j points[j]^t * y[j]`, `t = 0..r`.
pub fn power_sums(field: &Field, points: &[Elem], y: &[Elem], r: usize) -> Vec<Elem> {
    let mut out = vec![Elem::ZERO; r];
    for (&p, &v) in points.iter().zip(y) {
        let mut term = v;
        for slot in out.iter_mut() {
            *slot = field.add(*slot, term);
            term = field.mul(term, p);
        }
    }
    out
}

/// Reusable solver for the `r` unknown coordinates of a vector satisfying
/// `r` power-sum checks. Holds scratch space so hot loops do not allocate.
#[derive(Debug, Default)]
pub(crate) struct ErasureSolver {
    matrix: Vec<Elem>,
    rhs: Vec<Elem>,
}

impl ErasureSolver {
    /// Fills `out` with the unknown coordinates at `unknown_points` given
    /// the known coordinates `(point, value)`. Points must be distinct;
    /// `out.len()` equals `unknown_points.len()` equals the check count.
    pub(crate) fn solve(
        &mut self,
        field: &Field,
        unknown_points: &[Elem],
        known: impl Iterator<Item = (Elem, Elem)>,
        out: &mut [Elem],
    ) {
        let r = unknown_points.len();
        self.rhs.clear();
        self.rhs.resize(r, Elem::ZERO);
        for (p, v) in known {
            if v.is_zero() {
                continue;
            }
            let mut term = v;
            for slot in self.rhs.iter_mut() {
                *slot = field.sub(*slot, term);
                term = field.mul(term, p);
            }
        }
        self.matrix.clear();
        self.matrix.resize(r * r, Elem::ZERO);
        for (j, &p) in unknown_points.iter().enumerate() {
            let mut pw = Elem::ONE;
            for t in 0..r {
                self.matrix[t * r + j] = pw;
                pw = field.mul(pw, p);
            }
        }
        let ok = solve_linear(field, &mut self.matrix, &mut self.rhs);
        assert!(ok, "evaluation points must be pairwise distinct");
        out.copy_from_slice(&self.rhs);
    }
}

/// Completes a codeword of `{y : sum_j points[j]^t y[j] = 0, t < parity}`
/// from exactly `points.len() - parity` known coordinates.
///
/// The known symbols are trusted to come from a codeword; no consistency
/// check is performed here.
pub fn grs_erasure_recover(
    field: &Field,
    points: &[Elem],
    parity: usize,
    known: &BTreeMap<usize, Elem>,
) -> Result<Vec<Elem>> {
    let n = points.len();
    check_distinct(points)?;
    if parity >= n {
        return Err(Error::inadmissible(format!(
            "{parity} checks on {n} coordinates leave nothing to know"
        )));
    }
    if known.len() != n - parity {
        return Err(Error::KnownCount { expected: n - parity, got: known.len() });
    }
    if let Some((&pos, _)) = known.iter().find(|(&pos, _)| pos >= n) {
        return Err(Error::Dimension { expected: n, got: pos + 1 });
    }
    let unknown: Vec<usize> = (0..n).filter(|j| !known.contains_key(j)).collect();
    let unknown_points: Vec<Elem> = unknown.iter().map(|&j| points[j]).collect();
    let mut solved = vec![Elem::ZERO; parity];
    ErasureSolver::default().solve(
        field,
        &unknown_points,
        known.iter().map(|(&j, &v)| (points[j], v)),
        &mut solved,
    );
    let mut out = vec![Elem::ZERO; n];
    for (&j, &v) in known {
        out[j] = v;
    }
    for (&j, v) in unknown.iter().zip(solved) {
        out[j] = v;
    }
    Ok(out)
}
