//! Operation→outcome channels, their information decomposition and
//! capacity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::Context;
use crate::dsl::{DslError, Library, LibraryKey};
use crate::ops::{alphabet, outcome_distribution, Operation, OpsError};

/// Iteration cap for Blahut–Arimoto.
pub const MAX_ITERATIONS: usize = 10_000;
/// Default gap between the capacity bounds, in bits.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

const ROW_TOLERANCE: f64 = 1e-12;
const MAX_RELAXATION: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpowermentError {
    #[error("enumeration cap exceeded: {count} sequences > cap {cap}")]
    CapExceeded { count: u128, cap: u64 },
    #[error("Blahut-Arimoto did not converge in {iterations} iterations (gap {gap:e} bits)")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Shannon entropy in bits with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * log2(x)).sum::<f64>()
}

/// Row-stochastic `p(outcome | input)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelMatrix {
    rows: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<ChannelMatrix, EmpowermentError> {
        let width = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(EmpowermentError::InvalidChannel(alloc::format!("row {i} has {} entries, expected {width}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(EmpowermentError::InvalidChannel(alloc::format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE * width.max(1) as f64 {
                return Err(EmpowermentError::InvalidChannel(alloc::format!("row {i} sums to {sum}")));
            }
        }
        Ok(ChannelMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// The outcome each input reaches with certainty, if every row is a
    /// point mass.
    pub fn deterministic_map(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| {
                let mut hit = None;
                for (j, &x) in row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    if x != 1.0 || hit.is_some() {
                        return None;
                    }
                    hit = Some(j);
                }
                hit
            })
            .collect()
    }

    pub fn marginal(&self, policy: &Policy) -> Vec<f64> {
        let mut q = alloc::vec![0.0; self.outputs()];
        for (row, &p) in self.rows.iter().zip(&policy.0) {
            for (qj, &w) in q.iter_mut().zip(row) {
                *qj += p * w;
            }
        }
        q
    }

    /// Merges the outcome columns in `cols` into the first of them.
    pub fn merge_outcomes(&self, cols: &[usize]) -> ChannelMatrix {
        let Some((&keep, rest)) = cols.split_first() else {
            return self.clone();
        };
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut r = row.clone();
                for &c in rest {
                    r[keep] += row[c];
                }
                r.into_iter().enumerate().filter(|(j, _)| !rest.contains(j)).map(|(_, x)| x).collect()
            })
            .collect();
        ChannelMatrix { rows }
    }
}

/// A distribution over channel inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<f64>);

impl Policy {
    pub fn uniform(n: usize) -> Policy {
        Policy(alloc::vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, i: usize) -> Policy {
        let mut w = alloc::vec![0.0; n];
        w[i] = 1.0;
        Policy(w)
    }

    fn check(&self, inputs: usize) -> Result<(), EmpowermentError> {
        if self.0.len() != inputs {
            return Err(EmpowermentError::InvalidPolicy(alloc::format!("{} weights for {inputs} inputs", self.0.len())));
        }
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EmpowermentError::InvalidPolicy("negative or non-finite weight".into()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EmpowermentError::InvalidPolicy(alloc::format!("weights sum to {sum}")));
        }
        Ok(())
    }
}

/// `I = H(Z'|Z) - H(Z'|Z, ω)` under one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub diversity_bits: f64,
    pub uncertainty_bits: f64,
    pub mi_bits: f64,
}

pub fn mi_decomposition(matrix: &ChannelMatrix, policy: &Policy) -> Result<Decomposition, EmpowermentError> {
    policy.check(matrix.inputs())?;
    let diversity = entropy(&matrix.marginal(policy));
    let uncertainty = matrix.rows.iter().zip(&policy.0).map(|(row, &p)| if p > 0.0 { p * entropy(row) } else { 0.0 }).sum();
    Ok(Decomposition { diversity_bits: diversity, uncertainty_bits: uncertainty, mi_bits: diversity - uncertainty })
}

/// `D(W_x || q)` for every input, in bits.
fn divergences(matrix: &ChannelMatrix, q: &[f64]) -> Vec<f64> {
    matrix
        .rows
        .iter()
        .map(|row| row.iter().zip(q).filter(|(w, _)| **w > 0.0).map(|(&w, &qj)| w * log2(w / qj)).sum())
        .collect()
}

fn reweight(p: &Policy, d: &[f64], upper: f64, lambda: f64) -> Policy {
    // keep weights off exact zero so an input can always recover
    let mut next: Vec<f64> = p.0.iter().zip(d).map(|(a, b)| (a * libm::exp2((lambda * (b - upper)).max(-30.0))).max(1e-250)).collect();
    let z: f64 = next.iter().sum();
    next.iter_mut().for_each(|x| *x /= z);
    Policy(next)
}

fn mutual_information(matrix: &ChannelMatrix, p: &Policy) -> f64 {
    let d = divergences(matrix, &matrix.marginal(p));
    p.0.iter().zip(&d).map(|(a, b)| a * b).sum()
}

/// Certificate `(I(p), max_x D(W_x || q) - I(p))`.
fn certificate(matrix: &ChannelMatrix, p: &Policy) -> (f64, f64) {
    let d = divergences(matrix, &matrix.marginal(p));
    let lower: f64 = p.0.iter().zip(&d).map(|(a, b)| a * b).sum();
    (lower, d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lower)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (head, tail) = a.split_at_mut(col + 1);
        let pivot_row = &head[col];
        for (offset, r) in tail.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            r[col..].iter_mut().zip(&pivot_row[col..]).for_each(|(x, y)| *x -= f * y);
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

enum Newton {
    Solved(Vec<f64>),
    /// More support points than the outputs can pin down.
    Singular,
    Stalled,
}

/// Newton's method on `D_x(q) = C` for `x` in `support`, `Σ w = 1`.
/// Stops early once a weight turns negative.
fn newton(matrix: &ChannelMatrix, support: &[usize], mut w: Vec<f64>) -> Newton {
    let m = support.len();
    let n = matrix.inputs();
    let ln2 = core::f64::consts::LN_2;
    let mut c = 0.0;
    for _ in 0..50 {
        let mut full = Policy(alloc::vec![0.0; n]);
        for (&x, &wx) in support.iter().zip(&w) {
            full.0[x] = wx;
        }
        let q = matrix.marginal(&full);
        if q.iter().any(|qj| !qj.is_finite()) {
            return Newton::Stalled;
        }
        let d = divergences(matrix, &q);
        let mut jac = alloc::vec![alloc::vec![0.0; m + 1]; m + 1];
        let mut rhs = alloc::vec![0.0; m + 1];
        for (i, &x) in support.iter().enumerate() {
            for (k, &z) in support.iter().enumerate() {
                jac[i][k] = -matrix.rows[x]
                    .iter()
                    .zip(&matrix.rows[z])
                    .zip(&q)
                    .filter(|((a, b), qj)| **a > 0.0 && **b > 0.0 && **qj > 0.0)
                    .map(|((a, b), qj)| a * b / (qj * ln2))
                    .sum::<f64>();
            }
            jac[i][m] = -1.0;
            rhs[i] = -(d[x] - c);
        }
        jac[m][..m].iter_mut().for_each(|v| *v = 1.0);
        rhs[m] = -(w.iter().sum::<f64>() - 1.0);
        if rhs.iter().fold(0.0f64, |acc, r| acc.max(r.abs())) < 1e-14 {
            return Newton::Solved(w);
        }
        let Some(step) = solve_linear(jac, rhs) else {
            return Newton::Singular;
        };
        w.iter_mut().zip(&step).for_each(|(wx, s)| *wx += s);
        c += step[m];
        if w.iter().any(|v| !v.is_finite()) {
            return Newton::Stalled;
        }
        if w.iter().any(|&v| v < 0.0) {
            return Newton::Solved(w);
        }
    }
    Newton::Stalled
}

/// Active-set Newton on the optimality conditions, started from the
/// inputs Blahut–Arimoto currently weights. Inputs whose weight turns
/// negative leave the support; the worst violator of `D_x ≤ C` joins it.
/// Blahut–Arimoto crawls when an input with optimal weight zero has a
/// divergence just below capacity; this finishes such cases.
fn polish(matrix: &ChannelMatrix, p: &Policy, tol: f64) -> Option<(f64, Policy)> {
    let n = p.0.len();
    let top = p.0.iter().cloned().fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..n).filter(|&x| p.0[x] > 1e-3 * top).collect();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut added: Option<usize> = None;
    for _ in 0..4 * n + 8 {
        if support.is_empty() || seen.contains(&support) {
            return None;
        }
        let total: f64 = support.iter().map(|&x| p.0[x]).sum();
        let start: Vec<f64> = support.iter().map(|&x| p.0[x] / total).collect();
        match newton(matrix, &support, start) {
            Newton::Stalled => return None,
            Newton::Singular => {
                // drop the lightest point whose removal gives a fresh support
                let mut order: Vec<usize> = (0..support.len()).filter(|&i| Some(support[i]) != added).collect();
                order.sort_by(|&i, &j| p.0[support[i]].total_cmp(&p.0[support[j]]));
                let i = order.into_iter().find(|&i| {
                    let mut s = support.clone();
                    s.remove(i);
                    !seen.contains(&s)
                })?;
                support.remove(i);
            }
            Newton::Solved(w) => {
                seen.insert(support.clone());
                if let Some((i, _)) = w.iter().enumerate().filter(|(_, v)| **v < 0.0).min_by(|a, b| a.1.total_cmp(b.1)) {
                    support.remove(i);
                    continue;
                }
                let mut full = Policy(alloc::vec![0.0; n]);
                for (&x, &wx) in support.iter().zip(&w) {
                    full.0[x] = wx;
                }
                let (lower, gap) = certificate(matrix, &full);
                if gap < tol {
                    return Some((lower.max(0.0), full));
                }
                let d = divergences(matrix, &matrix.marginal(&full));
                let worst = (0..n).filter(|x| !support.contains(x)).max_by(|&a, &b| d[a].total_cmp(&d[b]))?;
                support.push(worst);
                support.sort_unstable();
                added = Some(worst);
            }
        }
    }
    None
}

/// Channel capacity in bits and a policy attaining it.
///
/// Deterministic channels are solved in closed form. Otherwise runs
/// Blahut–Arimoto until `max_x D(W_x || q) - I(p) < tol`; the left term
/// bounds the capacity from above and `I(p)` is what is returned.
pub fn capacity(matrix: &ChannelMatrix, tol: f64) -> Result<(f64, Policy), EmpowermentError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(EmpowermentError::InvalidPolicy(alloc::format!("tolerance must be positive, got {tol}")));
    }
    let n = matrix.inputs();
    if n == 0 {
        return Ok((0.0, Policy(Vec::new())));
    }
    if let Some(map) = matrix.deterministic_map() {
        let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
        for &j in &map {
            *classes.entry(j).or_default() += 1;
        }
        let k = classes.len() as f64;
        let policy = Policy(map.iter().map(|j| 1.0 / (k * classes[j] as f64)).collect());
        return Ok((log2(k), policy));
    }
    // identical rows make the optimum non-unique and the Newton system
    // singular; solve over distinct rows and split weight among copies
    let mut distinct: Vec<usize> = Vec::new();
    let class: Vec<usize> = (0..n)
        .map(|x| match distinct.iter().position(|&y| matrix.rows[y] == matrix.rows[x]) {
            Some(k) => k,
            None => {
                distinct.push(x);
                distinct.len() - 1
            }
        })
        .collect();
    if distinct.len() < n {
        let reduced = ChannelMatrix { rows: distinct.iter().map(|&x| matrix.rows[x].clone()).collect() };
        let (c, p) = blahut_arimoto(&reduced, tol)?;
        let mut copies = alloc::vec![0usize; distinct.len()];
        class.iter().for_each(|&k| copies[k] += 1);
        return Ok((c, Policy(class.iter().map(|&k| p.0[k] / copies[k] as f64).collect())));
    }
    blahut_arimoto(matrix, tol)
}

fn blahut_arimoto(matrix: &ChannelMatrix, tol: f64) -> Result<(f64, Policy), EmpowermentError> {
    let n = matrix.inputs();
    let mut p = Policy::uniform(n);
    let mut gap = f64::INFINITY;
    // Over-relaxed update `p_x ∝ p_x 2^{λ D_x}`, taken only when it beats
    // the plain step (λ = 1); λ adapts by doubling or halving.
    let mut lambda = 2.0;
    for it in 0..MAX_ITERATIONS {
        let q = matrix.marginal(&p);
        let d = divergences(matrix, &q);
        let lower: f64 = p.0.iter().zip(&d).map(|(a, b)| a * b).sum();
        let upper = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap = upper - lower;
        if gap < tol {
            return Ok((lower.max(0.0), p));
        }
        if it % 64 == 63 {
            if let Some((c, polished)) = polish(matrix, &p, tol) {
                return Ok((c, polished));
            }
        }
        let plain = reweight(&p, &d, upper, 1.0);
        let relaxed = reweight(&p, &d, upper, lambda);
        if mutual_information(matrix, &relaxed) >= mutual_information(matrix, &plain) {
            p = relaxed;
            lambda = (lambda * 2.0).min(MAX_RELAXATION);
        } else {
            p = plain;
            lambda = (lambda / 2.0).max(2.0);
        }
    }
    Err(EmpowermentError::NotConverged { iterations: MAX_ITERATIONS, gap })
}

/// The enumerated channel `Ω^T → Z'` of a library.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub inputs: Vec<Vec<Operation>>,
    /// One representative library per outcome class.
    pub outcomes: Vec<Library>,
    pub matrix: ChannelMatrix,
    /// Sequences excluded because some step was inapplicable.
    pub dropped: usize,
}

impl Channel {
    pub fn effective_outcomes(&self) -> usize {
        self.outcomes.len()
    }
}

pub fn effective_outcomes(ch: &Channel) -> usize {
    ch.effective_outcomes()
}

/// Enumerates every sequence in `Ω^T` over the library's alphabet.
pub fn enumerate_channel(lib: &Library, ctx: &Context, horizon: u32) -> Result<Channel, EmpowermentError> {
    let omega = alphabet(lib, ctx);
    let count = (omega.len() as u128).checked_pow(horizon).unwrap_or(u128::MAX);
    if count > u128::from(ctx.enumeration_cap) {
        return Err(EmpowermentError::CapExceeded { count, cap: ctx.enumeration_cap });
    }
    let mut fp = ctx.fingerprinter();
    let mut inputs = Vec::new();
    let mut outcomes = Vec::new();
    let mut classes: BTreeMap<LibraryKey, usize> = BTreeMap::new();
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dropped = 0;

    let t = horizon as usize;
    let mut idx = alloc::vec![0usize; t];
    let total = count as usize;
    for _ in 0..total {
        let seq: Vec<Operation> = idx.iter().map(|&i| omega[i].clone()).collect();
        match outcome_distribution(lib, &seq, ctx, &mut fp) {
            Ok(dist) => {
                let mut row = Vec::with_capacity(dist.support.len());
                for (out, p) in dist.support {
                    let key = fp.library_key(&out)?;
                    let j = *classes.entry(key).or_insert_with(|| {
                        outcomes.push(out);
                        outcomes.len() - 1
                    });
                    row.push((j, p));
                }
                inputs.push(seq);
                sparse.push(row);
            }
            Err(OpsError::Inapplicable { .. }) => dropped += 1,
            Err(e) => return Err(e.into()),
        }
        // odometer, last position fastest
        for k in (0..t).rev() {
            idx[k] += 1;
            if idx[k] < omega.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    let width = outcomes.len();
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = alloc::vec![0.0; width];
            for (j, p) in entries {
                row[j] += p;
            }
            row
        })
        .collect();
    Ok(Channel { inputs, outcomes, matrix: ChannelMatrix::new(rows)?, dropped })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// `log2(n_eff)` minus the uniform-policy average outcome entropy.
    #[default]
    Uniform,
    /// Exact channel capacity.
    Capacity,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Uniform => "uniform",
            Estimator::Capacity => "capacity",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" | "uniform-heuristic" => Ok(Estimator::Uniform),
            "capacity" => Ok(Estimator::Capacity),
            other => Err(alloc::format!("unknown estimator `{other}` (expected uniform or capacity)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpowermentReport {
    pub diversity_bits: f64,
    pub uncertainty_bits: f64,
    pub mi_bits: f64,
    /// Solved only under [`Estimator::Capacity`]; the uniform heuristic
    /// skips the solver, which dominates cost on large stochastic channels.
    pub capacity_bits: Option<f64>,
    pub achieving_policy: Policy,
    pub n_eff: usize,
    pub estimator: Estimator,
    pub inputs: usize,
    pub dropped: usize,
}

impl EmpowermentReport {
    fn zero(estimator: Estimator, dropped: usize) -> EmpowermentReport {
        EmpowermentReport {
            diversity_bits: 0.0,
            uncertainty_bits: 0.0,
            mi_bits: 0.0,
            capacity_bits: match estimator {
                Estimator::Uniform => None,
                Estimator::Capacity => Some(0.0),
            },
            achieving_policy: Policy(Vec::new()),
            n_eff: 0,
            estimator,
            inputs: 0,
            dropped,
        }
    }

    /// The representational empowerment under the chosen estimator.
    pub fn value(&self) -> f64 {
        self.mi_bits
    }
}

/// Builds a report from a channel matrix. `n_eff` is the number of
/// outcome columns.
pub fn report(matrix: &ChannelMatrix, estimator: Estimator, tol: f64, dropped: usize) -> Result<EmpowermentReport, EmpowermentError> {
    let n = matrix.inputs();
    if n == 0 {
        return Ok(EmpowermentReport::zero(estimator, dropped));
    }
    let n_eff = matrix.outputs();
    let (d, policy, cap) = match estimator {
        Estimator::Uniform => {
            // summing entropies before dividing keeps e.g. 45/60 exact
            let uncertainty = matrix.rows.iter().map(|row| entropy(row)).sum::<f64>() / n as f64;
            let diversity = log2(n_eff as f64);
            let d = Decomposition { diversity_bits: diversity, uncertainty_bits: uncertainty, mi_bits: diversity - uncertainty };
            (d, Policy::uniform(n), None)
        }
        Estimator::Capacity => {
            let (cap, best) = capacity(matrix, tol)?;
            (mi_decomposition(matrix, &best)?, best, Some(cap))
        }
    };
    Ok(EmpowermentReport {
        diversity_bits: d.diversity_bits,
        uncertainty_bits: d.uncertainty_bits,
        mi_bits: d.mi_bits,
        capacity_bits: cap,
        achieving_policy: policy,
        n_eff,
        estimator,
        inputs: n,
        dropped,
    })
}

/// Representational empowerment of `lib` at horizon `T`.
pub fn rep_emp(lib: &Library, ctx: &Context, horizon: u32, estimator: Estimator) -> Result<EmpowermentReport, EmpowermentError> {
    let ch = enumerate_channel(lib, ctx, horizon)?;
    report(&ch.matrix, estimator, DEFAULT_TOLERANCE, ch.dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use alloc::vec;

    fn lib(ctx: &Context, ids: &[&str]) -> Library {
        Library::from_programs(ids.iter().map(|id| ctx.scope.get(id).unwrap().clone())).unwrap()
    }

    fn m(rows: Vec<Vec<f64>>) -> ChannelMatrix {
        ChannelMatrix::new(rows).unwrap()
    }

    #[test]
    fn entropy_conventions() {
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert!((entropy(&[0.25; 4]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ChannelMatrix::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(ChannelMatrix::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(ChannelMatrix::new(vec![vec![-0.5, 1.5]]).is_err());
    }

    #[test]
    fn deterministic_capacity_is_log_classes() {
        let ch = m((0..18).map(|i| (0..18).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect());
        let (c, p) = capacity(&ch, 1e-9).unwrap();
        assert!((c - 18f64.log2()).abs() < 1e-12);
        assert!((c - 4.1699).abs() < 1e-4);
        assert!((p.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(capacity(&m(vec![vec![1.0], vec![1.0]]), 1e-9).unwrap().0, 0.0);
    }

    #[test]
    fn deterministic_policy_attains_capacity() {
        // 3 inputs onto 2 classes, one class hit twice
        let ch = m(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (c, p) = capacity(&ch, 1e-9).unwrap();
        assert_eq!(p.0, vec![0.25, 0.25, 0.5]);
        assert!((mi_decomposition(&ch, &p).unwrap().mi_bits - c).abs() < 1e-12);
    }

    #[test]
    fn z_channel_capacity() {
        // Z-channel with crossover 1/2: C = log2(5/4), attained at p(0) = 2/5
        let ch = m(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        let (c, p) = capacity(&ch, 1e-12).unwrap();
        assert!((c - (1.25f64).log2()).abs() < 1e-9, "{c}");
        assert!((p.0[1] - 0.4).abs() < 1e-4);
    }

    #[test]
    fn point_policy_has_zero_mi() {
        let ch = m(vec![vec![0.5, 0.5], vec![0.2, 0.8]]);
        let d = mi_decomposition(&ch, &Policy::point(2, 1)).unwrap();
        assert!((d.diversity_bits - entropy(&[0.2, 0.8])).abs() < 1e-15);
        assert!(d.mi_bits.abs() < 1e-15);
    }

    #[test]
    fn merging_outcomes_never_increases_capacity() {
        let ch = m(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.1, 0.8], vec![0.3, 0.6, 0.1]]);
        let (c, _) = capacity(&ch, 1e-10).unwrap();
        let (c2, _) = capacity(&ch.merge_outcomes(&[0, 2]), 1e-10).unwrap();
        assert!(c2 <= c + 1e-9);
    }

    #[test]
    fn z_a_channel() {
        let ctx = fixtures::s33();
        let ch = enumerate_channel(&lib(&ctx, &["up", "down"]), &ctx, 1).unwrap();
        assert_eq!(ch.inputs.len(), 9);
        assert_eq!(effective_outcomes(&ch), 6);
        let r = report(&ch.matrix, Estimator::Uniform, DEFAULT_TOLERANCE, 0).unwrap();
        assert!((r.mi_bits - 6f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn z_b_channel() {
        let ctx = fixtures::s33();
        let ch = enumerate_channel(&lib(&ctx, &["move", "repeat"]), &ctx, 1).unwrap();
        assert_eq!(ch.inputs.len(), 18);
        assert_eq!(effective_outcomes(&ch), 18);
        assert!(ch.matrix.deterministic_map().is_some());
    }

    #[test]
    fn near_degenerate_support_converges() {
        // the first input has optimal weight zero and a divergence 6e-5
        // below capacity; the last two rows coincide
        let m = ChannelMatrix::new(vec![
            vec![0.11535369378622871, 0.805102775100947, 0.07954353111282436],
            vec![0.0, 0.73923600056088, 0.26076399943912],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let (c, p) = capacity(&m, DEFAULT_TOLERANCE).unwrap();
        // two million plain Blahut–Arimoto iterations give 1.2987252935484
        assert!((c - 1.2987252935484).abs() < 1e-6, "{c}");
        assert!(p.0[0] < 1e-6);
        assert_eq!(p.0[3], p.0[4]);
    }

    #[test]
    fn near_duplicate_rows_converge() {
        // rows 0 and 3 nearly coincide; only row 0 carries weight
        let m = ChannelMatrix::new(vec![
            vec![0.0, 0.3294790594918317, 0.6705209405081682],
            vec![0.23614499220897517, 0.49694272723677996, 0.2669122805542449],
            vec![0.39808901990011564, 0.12586526322152491, 0.4760457168783595],
            vec![0.0, 0.3319876112106928, 0.6680123887893071],
        ])
        .unwrap();
        let (c, p) = capacity(&m, DEFAULT_TOLERANCE).unwrap();
        // long plain Blahut–Arimoto run: 0.25752329561
        assert!((c - 0.25752329561).abs() < 1e-6, "{c}");
        assert!(p.0[3] < 1e-6);
    }

    #[test]
    fn z_c_uniform_and_capacity() {
        let ctx = fixtures::s33();
        let z = lib(&ctx, &["neural_gen", "repeat"]);
        let ch = enumerate_channel(&z, &ctx, 1).unwrap();
        assert_eq!(ch.inputs.len(), 60);
        assert_eq!(effective_outcomes(&ch), 21);
        let r = rep_emp(&z, &ctx, 1, Estimator::Uniform).unwrap();
        assert_eq!(r.uncertainty_bits, 0.75);
        assert!((r.diversity_bits - 21f64.log2()).abs() < 1e-12);
        assert!((r.mi_bits - (21f64.log2() - 0.75)).abs() < 1e-12);
        // oracle: 15 noiseless inputs plus 3 one-bit-noisy input types over
        // disjoint outputs, so C = log2(15 + 3)
        assert_eq!(r.capacity_bits, None);
        let c = rep_emp(&z, &ctx, 1, Estimator::Capacity).unwrap();
        assert!((c.capacity_bits.unwrap() - 18f64.log2()).abs() < 1e-6);
        assert!((c.mi_bits - c.capacity_bits.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trivial_channels() {
        let ctx = fixtures::s33();
        let r = rep_emp(&Library::new(), &ctx, 1, Estimator::Uniform).unwrap();
        assert_eq!(r.mi_bits, 0.0);
        assert_eq!(r.inputs, 0);
        let mut one = ctx.clone();
        one.operations.variants.insert("up".into(), vec![one.operations.variants["up"][0].clone()]);
        let ch = enumerate_channel(&lib(&one, &["up"]), &one, 1).unwrap();
        assert_eq!((ch.matrix.inputs(), ch.matrix.outputs()), (1, 1));
    }

    #[test]
    fn cap_and_drops() {
        let mut ctx = fixtures::s33();
        ctx.enumeration_cap = 8;
        let z = lib(&ctx, &["up", "down"]);
        assert_eq!(enumerate_channel(&z, &ctx, 1).unwrap_err(), EmpowermentError::CapExceeded { count: 9, cap: 8 });
        let mut ctx = fixtures::s33();
        ctx.operations.selection = true;
        ctx.operations.variants.clear();
        // drop-one selections: dropping the same program twice is inapplicable
        let ch = enumerate_channel(&z, &ctx, 2).unwrap();
        assert_eq!(ch.inputs.len() + ch.dropped, 4);
        assert_eq!(ch.dropped, 2);
    }

    #[test]
    fn estimator_parses() {
        assert_eq!("capacity".parse::<Estimator>(), Ok(Estimator::Capacity));
        assert_eq!("uniform".parse::<Estimator>(), Ok(Estimator::Uniform));
        assert!("bogus".parse::<Estimator>().is_err());
    }
}
