//! Stochastic-matrix kernels: weight normalization, the ergodicity
//! coefficients `delta` and `lambda`, type (sign-pattern) equivalence,
//! SIA certification, stationary left vectors, and left products.

use crate::graph::{in_gamma_s, DirectedWeightedGraph};
use crate::{real, Error, Real, Result};

/// Dense row-stochastic matrix. Rows sum to one within `row_sum_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix<S> {
    n: usize,
    entries: Vec<S>,
}

impl<S: Real> StochasticMatrix<S> {
    pub fn new(n: usize, entries: Vec<S>) -> Result<Self> {
        Self::with_tolerance(n, entries, S::pattern_tol())
    }

    /// Accumulated products drift slightly off row-stochasticity; they are
    /// validated at a looser tolerance than freshly normalized rows.
    pub fn with_tolerance(n: usize, entries: Vec<S>, tol: S) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        for (idx, &e) in entries.iter().enumerate() {
            if e < S::zero() {
                return Err(Error::NotStochastic(format!(
                    "negative entry {e} at index {idx}"
                )));
            }
        }
        for i in 0..n {
            let sum: S = entries[i * n..(i + 1) * n].iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![S::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = S::one();
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `self * other` (conventional order; see [`left_product`] for the
    /// reversed sequence convention).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.n, other.n
            )));
        }
        let n = self.n;
        let mut out = vec![S::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == S::zero() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + aik * other.get(k, j);
                }
            }
        }
        Self::with_tolerance(n, out, real(1e-10))
    }

    pub fn pow(&self, k: u32) -> Result<Self> {
        let mut acc = Self::identity(self.n);
        for _ in 0..k {
            acc = acc.matmul(self)?;
        }
        Ok(acc)
    }

    /// `A x` for a stacked column vector.
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &v)| a * v).sum())
            .collect()
    }
}

/// Row `i` of the normalized weight matrix given the set of neighbors whose
/// information was actually received at this update. An empty reception set
/// yields the unit row at `i`.
pub fn normalize_weights<S: Real>(
    g: &DirectedWeightedGraph<S>,
    received: &[usize],
    i: usize,
) -> Result<Vec<S>> {
    let n = g.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let mut row = vec![S::zero(); n];
    if received.is_empty() {
        row[i] = S::one();
        return Ok(row);
    }
    let mut total = S::zero();
    for &j in received {
        if j >= n || j == i || g.weight(i, j) <= S::zero() {
            return Err(Error::InvalidReception { agent: i, from: j });
        }
        total = total + g.weight(i, j);
    }
    for &j in received {
        row[j] = g.weight(i, j) / total;
    }
    Ok(row)
}

/// `delta(A) = max_j max_{i1,i2} |a_{i1 j} - a_{i2 j}|`; zero iff all rows
/// are identical.
pub fn delta<S: Real>(a: &StochasticMatrix<S>) -> S {
    let n = a.n();
    let mut worst = S::zero();
    for j in 0..n {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for i in 0..n {
            let v = a.get(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    worst
}

/// `lambda(A) = 1 - min_{i1,i2} sum_j min(a_{i1 j}, a_{i2 j})`; the matrix
/// is scrambling iff `lambda(A) < 1`.
pub fn lambda<S: Real>(a: &StochasticMatrix<S>) -> S {
    let n = a.n();
    let mut min_overlap = S::infinity();
    for i1 in 0..n {
        for i2 in (i1 + 1)..n {
            let overlap: S = (0..n).map(|j| a.get(i1, j).min(a.get(i2, j))).sum();
            min_overlap = min_overlap.min(overlap);
        }
    }
    if !min_overlap.is_finite() {
        // single row: trivially identical
        return S::zero();
    }
    (S::one() - min_overlap).max(S::zero())
}

pub fn is_scrambling<S: Real>(a: &StochasticMatrix<S>) -> bool {
    lambda(a) < S::one()
}

/// True iff the two matrices have zero and positive entries in the same
/// places (entries within the pattern tolerance count as zero).
pub fn same_type<S: Real>(a: &StochasticMatrix<S>, b: &StochasticMatrix<S>) -> Result<bool> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.n(), b.n())));
    }
    let eps = S::pattern_tol();
    Ok(a.entries()
        .iter()
        .zip(b.entries())
        .all(|(&x, &y)| (x > eps) == (y > eps)))
}

/// Default powering budget for SIA certification.
pub fn sia_budget(n: usize) -> u32 {
    (4 * n * n) as u32
}

pub const SIA_TOL: f64 = 1e-9;

/// Certify that `A` is SIA: either its graph has a self-looped spanning-tree
/// root (a sufficient criterion), or some power has near-identical rows.
/// `false` means "not certified within budget", not a proof of non-SIA.
pub fn is_sia<S: Real>(a: &StochasticMatrix<S>, k_max: u32, tol: S) -> bool {
    if in_gamma_s(a.n(), a.entries()) {
        return true;
    }
    let mut p = a.clone();
    for _ in 0..k_max {
        if delta(&p) < tol {
            return true;
        }
        p = match p.matmul(a) {
            Ok(p) => p,
            Err(_) => return false,
        };
    }
    delta(&p) < tol
}

const STATIONARY_BUDGET: usize = 100_000;

/// Left fixed vector `f >= 0`, `sum f = 1`, `f^T A = f^T`, computed by power
/// iteration on the transpose. Requires a prior SIA certification, since the
/// fixed vector is not unique otherwise.
pub fn stationary_vector<S: Real>(a: &StochasticMatrix<S>, tol: S) -> Result<Vec<S>> {
    if !is_sia(a, sia_budget(a.n()), real(SIA_TOL)) {
        return Err(Error::SiaCertification);
    }
    let n = a.n();
    let mut f = vec![S::one() / real::<S>(n as f64); n];
    for _ in 0..STATIONARY_BUDGET {
        let mut next = vec![S::zero(); n];
        for i in 0..n {
            let fi = f[i];
            for j in 0..n {
                next[j] = next[j] + fi * a.get(i, j);
            }
        }
        let total: S = next.iter().copied().sum();
        for v in &mut next {
            *v = *v / total;
        }
        let residual = residual_inf(a, &next);
        f = next;
        if residual <= tol {
            return Ok(f);
        }
    }
    Err(Error::StationaryNonConvergence)
}

fn residual_inf<S: Real>(a: &StochasticMatrix<S>, f: &[S]) -> S {
    let n = a.n();
    (0..n)
        .map(|j| {
            let fa: S = (0..n).map(|i| f[i] * a.get(i, j)).sum();
            (fa - f[j]).abs()
        })
        .fold(S::zero(), S::max)
}

/// Left product `A_k A_{k-1} ... A_1` of the given sequence.
pub fn left_product<S: Real>(ms: &[StochasticMatrix<S>]) -> Result<StochasticMatrix<S>> {
    let first = ms
        .first()
        .ok_or_else(|| Error::InvalidParameter("left product of empty sequence".into()))?;
    let mut acc = first.clone();
    for m in &ms[1..] {
        acc = m.matmul(&acc)?;
    }
    Ok(acc)
}
