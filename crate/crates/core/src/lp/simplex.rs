//! Dense two-phase primal simplex over `f64` or exact rationals.
//!
//! Solves `min c·x` subject to `A x {≤,=,≥} b`, `x ≥ 0`. Pricing is
//! Dantzig's rule, falling back to Bland's rule during long degenerate
//! stretches so that the method cannot cycle.

use std::fmt::Debug;

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Scalar arithmetic the tableau needs. `f64` compares with a tolerance,
/// `BigRational` exactly.
pub trait Field: Clone + Debug + PartialOrd {
    const EXACT: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    /// Snaps round-off to zero; identity for exact types.
    fn clean(self) -> Self {
        self
    }
}

const F64_EPS: f64 = 1e-9;

impl Field for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero(&self) -> bool {
        self.abs() <= F64_EPS
    }
    fn is_positive(&self) -> bool {
        *self > F64_EPS
    }
    fn is_negative(&self) -> bool {
        *self < -F64_EPS
    }
    fn clean(self) -> Self {
        if self.abs() < 1e-13 {
            0.0
        } else {
            self
        }
    }
}

impl Field for BigRational {
    const EXACT: bool = true;
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        BigRational::from_integer(BigInt::from(1))
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min objective·x` over `x ≥ 0` subject to `rows`.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { num_vars: objective.len(), objective, rows: Vec::new() }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars));
        self.rows.push(Row { coeffs, sense, rhs });
    }
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub x: Vec<T>,
    pub value: T,
    pub pivots: usize,
}

const PIVOT_LIMIT: usize = 200_000;
const DEGENERATE_STREAK: usize = 40;

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl<T: Field> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.div(&p).clean();
        }
        self.rhs[r] = self.rhs[r].div(&p).clean();
        self.rows[r][c] = T::one();
        let (pivot_row, pivot_rhs) = (self.rows[r].clone(), self.rhs[r].clone());
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f.is_zero() && (T::EXACT || f.to_f64() == 0.0) {
                continue;
            }
            let row = &mut self.rows[i];
            for (j, pv) in pivot_row.iter().enumerate() {
                if !pv.is_zero() || (!T::EXACT && pv.to_f64() != 0.0) {
                    row[j] = row[j].sub(&f.mul(pv)).clean();
                }
            }
            row[c] = T::zero();
            self.rhs[i] = self.rhs[i].sub(&f.mul(&pivot_rhs)).clean();
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let mut d: Vec<T> = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() && (T::EXACT || cb.to_f64() == 0.0) {
                continue;
            }
            for (dj, a) in d.iter_mut().zip(&self.rows[i]) {
                *dj = dj.sub(&cb.mul(a));
            }
        }
        d
    }

    /// Runs primal simplex on `cost` with columns `>= allowed` barred from entering.
    fn optimize(&mut self, cost: &[T], allowed: usize) -> Result<()> {
        let mut degenerate = 0usize;
        let mut d = self.reduced_costs(cost);
        loop {
            if self.pivots > PIVOT_LIMIT {
                return Err(Error::Invariant("simplex pivot limit exceeded".into()));
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter = None;
            for j in 0..allowed {
                if d[j].is_negative() {
                    match enter {
                        None => enter = Some(j),
                        Some(e) if !bland && d[j] < d[e] => enter = Some(j),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs[i].div(a);
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = !ratio.sub(&best).is_negative() && !ratio.sub(&best).is_positive();
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else { return Err(Error::Unbounded) };
            if ratio.is_zero() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            // Update reduced costs incrementally from the pivot row.
            self.pivot(r, c);
            let dc = d[c].clone();
            for (dj, a) in d.iter_mut().zip(&self.rows[r]) {
                *dj = dj.sub(&dc.mul(a)).clean();
            }
            d[c] = T::zero();
        }
    }
}

pub fn solve<T: Field>(lp: &LinearProgram) -> Result<Solution<T>> {
    let m = lp.rows.len();
    let n = lp.num_vars;
    let normalized: Vec<(f64, Sense)> = lp
        .rows
        .iter()
        .map(|row| match (row.sense, row.rhs < 0.0) {
            (s, false) => (1.0, s),
            (Sense::Le, true) => (-1.0, Sense::Ge),
            (Sense::Ge, true) => (-1.0, Sense::Le),
            (Sense::Eq, true) => (-1.0, Sense::Eq),
        })
        .collect();
    let slacks = normalized.iter().filter(|(_, s)| *s != Sense::Eq).count();
    let arts = normalized.iter().filter(|(_, s)| *s != Sense::Le).count();
    let cols = n + slacks + arts;
    let art_start = n + slacks;

    let mut rows = vec![vec![T::zero(); cols]; m];
    let mut rhs = vec![T::zero(); m];
    let mut basis = vec![0usize; m];
    let (mut next_slack, mut next_art) = (n, art_start);
    for (i, (row, &(sign, sense))) in lp.rows.iter().zip(&normalized).enumerate() {
        for &(j, a) in &row.coeffs {
            rows[i][j] = rows[i][j].add(&T::from_f64(sign * a));
        }
        rhs[i] = T::from_f64(sign * row.rhs);
        match sense {
            Sense::Le => {
                rows[i][next_slack] = T::one();
                basis[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                rows[i][next_slack] = T::from_f64(-1.0);
                next_slack += 1;
                rows[i][next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                rows[i][next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau { rows, rhs, basis, cols, pivots: 0 };

    if arts > 0 {
        let mut phase1 = vec![T::zero(); cols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = T::one();
        }
        tab.optimize(&phase1, cols)?;
        let infeas =
            tab.basis.iter().zip(&tab.rhs).filter(|(&b, _)| b >= art_start).fold(T::zero(), |acc, (_, r)| acc.add(r));
        let scale = lp.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
        if infeas.is_positive() && (T::EXACT || infeas.to_f64() > 1e-7 * scale) {
            return Err(Error::Infeasible { witness: None });
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                let col = (0..art_start).find(|&j| {
                    let a = &tab.rows[i][j];
                    if T::EXACT {
                        !a.is_zero()
                    } else {
                        a.to_f64().abs() > 1e-7
                    }
                });
                match col {
                    Some(j) => {
                        tab.rhs[i] = T::zero();
                        tab.pivot(i, j);
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.rhs.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut phase2 = vec![T::zero(); tab.cols];
    for (c, &o) in phase2.iter_mut().zip(&lp.objective) {
        *c = T::from_f64(o);
    }
    tab.optimize(&phase2, art_start)?;

    let mut x = vec![T::zero(); n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs[i].clone();
        }
    }
    if !T::EXACT {
        for v in x.iter_mut() {
            if v.is_negative() || v.to_f64() < 0.0 {
                *v = T::zero();
            }
        }
    }
    let value = x.iter().zip(&lp.objective).fold(T::zero(), |acc, (xi, &c)| acc.add(&xi.mul(&T::from_f64(c))));
    Ok(Solution { x, value, pivots: tab.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LinearProgram {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_row(vec![(0, 1.0), (1, 2.0)], Sense::Le, 4.0);
        lp.add_row(vec![(0, 3.0), (1, 1.0)], Sense::Le, 6.0);
        lp
    }

    #[test]
    fn small_max_problem() {
        let s = solve::<f64>(&tiny()).unwrap();
        assert!((s.x[0] - 1.6).abs() < 1e-9 && (s.x[1] - 1.2).abs() < 1e-9);
        assert!((s.value + 2.8).abs() < 1e-9);
        let r = solve::<BigRational>(&tiny()).unwrap();
        assert_eq!(r.value, BigRational::new((-14).into(), 5.into()));
    }

    #[test]
    fn equalities_and_ge_rows() {
        // min x + 2y + 3z s.t. x + y + z = 1, y + z >= 0.5, z <= 0.2
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], Sense::Eq, 1.0);
        lp.add_row(vec![(1, 1.0), (2, 1.0)], Sense::Ge, 0.5);
        lp.add_row(vec![(2, 1.0)], Sense::Le, 0.2);
        let s = solve::<f64>(&lp).unwrap();
        assert!((s.value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 4.0);
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 0.5);
        let s = solve::<BigRational>(&lp).unwrap();
        assert_eq!(Field::to_f64(&s.value), 2.0);
    }

    #[test]
    fn negative_rhs_rows() {
        // -x <= -3  (x >= 3), min x
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![(0, -1.0)], Sense::Le, -3.0);
        assert!((solve::<f64>(&lp).unwrap().value - 3.0).abs() < 1e-12);
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![(0, -1.0)], Sense::Ge, -3.0);
        assert_eq!(solve::<f64>(&lp).unwrap().value, 0.0);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 1.0);
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert!(matches!(solve::<f64>(&lp), Err(Error::Infeasible { .. })));
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 1.0);
        assert!(matches!(solve::<f64>(&lp), Err(Error::Unbounded)));
    }
}
