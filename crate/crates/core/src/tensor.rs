//! Dense complex linear algebra on bipartite spaces.
//!
//! Every bipartite operator in this crate lives on `K ⊗ H` with `dim K = m`,
//! `dim H = n`, and the `K` index varying slowest. `kron`, `partial_trace`,
//! `partial_transpose` and the purification code in [`crate::states`] all
//! share that convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative singular-value threshold used by every rank call unless overridden.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Largest tensor power for which permutation sums are enumerated.
pub const MAX_TENSOR_POWER: usize = 8;

/// Largest `d^r` (and largest compressed matrix) that will be materialized.
pub const MAX_ELEMENTS: u128 = 10_000_000;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = b.shape();
    let mut out = ComplexMatrix::zeros(a.nrows() * br, a.ncols() * bc);
    for j1 in 0..a.ncols() {
        for i1 in 0..a.nrows() {
            let s = a[(i1, j1)];
            if s == ZERO {
                continue;
            }
            for j2 in 0..bc {
                for i2 in 0..br {
                    out[(i1 * br + i2, j1 * bc + j2)] = s * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of matrices, first factor slowest.
pub fn kron_all(ops: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut acc = ComplexMatrix::from_element(1, 1, ONE);
    for op in ops {
        acc = kron(&acc, op);
    }
    acc
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

pub(crate) fn checked_pow(d: usize, r: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..r {
        acc = acc.saturating_mul(d as u128);
    }
    acc
}

pub(crate) fn guard_tensor_power(d: usize, r: usize) -> Result<usize> {
    if r > MAX_TENSOR_POWER {
        return Err(Error::ResourceGuard(format!(
            "tensor power {r} exceeds limit {MAX_TENSOR_POWER}"
        )));
    }
    let size = checked_pow(d, r);
    if size > MAX_ELEMENTS {
        return Err(Error::ResourceGuard(format!(
            "{d}^{r} = {size} exceeds element budget {MAX_ELEMENTS}"
        )));
    }
    Ok(size as usize)
}

/// Rearranges `seq` into the next lexicographically greater permutation.
/// Repeated values yield each distinct arrangement once.
pub(crate) fn next_permutation(seq: &mut [usize]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut i = seq.len() - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = seq.len() - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

/// All permutations of `0..r` with their signs, enumerated by Heap's algorithm.
pub fn signed_permutations(r: usize) -> Vec<(Vec<usize>, f64)> {
    let mut perm: Vec<usize> = (0..r).collect();
    let mut out = Vec::with_capacity((1..=r).product());
    let mut sign = 1.0;
    out.push((perm.clone(), sign));
    let mut counters = vec![0usize; r];
    let mut i = 1;
    while i < r {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            sign = -sign;
            out.push((perm.clone(), sign));
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    out
}

/// Visits every nondecreasing multi-index of length `r` over `0..d`, in
/// lexicographic order.
pub(crate) fn for_each_multiset(d: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if d == 0 && r > 0 {
        return;
    }
    let mut idx = vec![0usize; r];
    loop {
        f(&idx);
        let mut k = r;
        while k > 0 && idx[k - 1] == d - 1 {
            k -= 1;
        }
        if k == 0 {
            return;
        }
        idx[k - 1] += 1;
        let v = idx[k - 1];
        for slot in idx[k..].iter_mut() {
            *slot = v;
        }
    }
}

/// Visits every strictly increasing multi-index of length `r` over `0..d`, in
/// lexicographic order.
pub(crate) fn for_each_combination(d: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if r > d {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        f(&idx);
        let mut k = r;
        while k > 0 && idx[k - 1] == d - r + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return;
        }
        idx[k - 1] += 1;
        for t in k..r {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

fn flat_index(d: usize, multi: &[usize]) -> usize {
    multi.iter().fold(0, |acc, &i| acc * d + i)
}

/// Orthonormal basis of the symmetric subspace of `(C^d)^{⊗r}`, one column per
/// nondecreasing multi-index.
pub fn sym_basis(d: usize, r: usize) -> Result<ComplexMatrix> {
    if d == 0 || r == 0 {
        return Err(Error::Precondition("sym_basis needs d >= 1 and r >= 1".into()));
    }
    let rows = guard_tensor_power(d, r)?;
    let width = binomial(d + r - 1, r) as usize;
    let mut out = ComplexMatrix::zeros(rows, width);
    let mut col = 0;
    for_each_multiset(d, r, |multi| {
        let mut arrangement = multi.to_vec();
        let mut positions = Vec::new();
        loop {
            positions.push(flat_index(d, &arrangement));
            if !next_permutation(&mut arrangement) {
                break;
            }
        }
        let norm = c(1.0 / (positions.len() as f64).sqrt());
        for p in positions {
            out[(p, col)] = norm;
        }
        col += 1;
    });
    Ok(out)
}

/// Orthonormal basis of the antisymmetric subspace of `(C^d)^{⊗r}`, one
/// column per strictly increasing multi-index. Empty when `r > d`.
pub fn antisym_basis(d: usize, r: usize) -> Result<ComplexMatrix> {
    if d == 0 || r == 0 {
        return Err(Error::Precondition("antisym_basis needs d >= 1 and r >= 1".into()));
    }
    let rows = guard_tensor_power(d, r)?;
    let width = binomial(d, r) as usize;
    let mut out = ComplexMatrix::zeros(rows, width);
    if width == 0 {
        return Ok(out);
    }
    let perms = signed_permutations(r);
    let norm = 1.0 / (perms.len() as f64).sqrt();
    let mut col = 0;
    let mut arrangement = vec![0usize; r];
    for_each_combination(d, r, |multi| {
        for (perm, sign) in &perms {
            for (slot, &p) in arrangement.iter_mut().zip(perm) {
                *slot = multi[p];
            }
            out[(flat_index(d, &arrangement), col)] = c(sign * norm);
        }
        col += 1;
    });
    Ok(out)
}

/// Unitary permuting tensor factors: `U_π (x_1 ⊗ … ⊗ x_r) = x_{π⁻¹(1)} ⊗ … ⊗ x_{π⁻¹(r)}`.
pub fn permutation_operator(d: usize, perm: &[usize]) -> Result<ComplexMatrix> {
    let r = perm.len();
    let size = guard_tensor_power(d, r)?;
    let mut out = ComplexMatrix::zeros(size, size);
    let mut src = vec![0usize; r];
    let mut dst = vec![0usize; r];
    for idx in 0..size {
        let mut rem = idx;
        for k in (0..r).rev() {
            src[k] = rem % d;
            rem /= d;
        }
        for k in 0..r {
            dst[perm[k]] = src[k];
        }
        out[(flat_index(d, &dst), idx)] = ONE;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

impl RankInfo {
    /// `σ₂/σ₁`, or 0 when there is no second singular value.
    pub fn second_ratio(&self) -> f64 {
        match self.singular_values.as_slice() {
            [s1, s2, ..] if *s1 > 0.0 => s2 / s1,
            _ => 0.0,
        }
    }
}

pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let svd = SVD::try_new(a.clone(), false, false, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical(format!("SVD did not converge on {}x{}", a.nrows(), a.ncols())))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Counts singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &ComplexMatrix, rel_tol: f64) -> Result<RankInfo> {
    if rel_tol.is_nan() || rel_tol < 0.0 {
        return Err(Error::Precondition(format!("rel_tol must be nonnegative, got {rel_tol}")));
    }
    let singular_values = singular_values(a)?;
    let rank = rank_from_values(&singular_values, rel_tol);
    Ok(RankInfo {
        rank,
        singular_values,
    })
}

/// Rank of a descending list of nonnegative values under a relative threshold.
pub fn rank_from_values(values: &[f64], rel_tol: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > rel_tol * top).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    /// The `K` factor (dimension `m`).
    First,
    /// The `H` factor (dimension `n`).
    Second,
}

fn check_bipartite(a: &ComplexMatrix, m: usize, n: usize) -> Result<()> {
    let d = m * n;
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Shape(format!(
            "expected {d}x{d} operator on C^{m} ⊗ C^{n}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Traces out `which`; `Subsystem::First` returns the `n×n` marginal on `H`.
pub fn partial_trace(a: &ComplexMatrix, m: usize, n: usize, which: Subsystem) -> Result<ComplexMatrix> {
    check_bipartite(a, m, n)?;
    let out = match which {
        Subsystem::First => ComplexMatrix::from_fn(n, n, |j, l| {
            (0..m).map(|i| a[(i * n + j, i * n + l)]).sum()
        }),
        Subsystem::Second => ComplexMatrix::from_fn(m, m, |i, k| {
            (0..n).map(|j| a[(i * n + j, k * n + j)]).sum()
        }),
    };
    Ok(out)
}

/// Transposes the `H` indices: `out[(i,j),(k,l)] = a[(i,l),(k,j)]`.
pub fn partial_transpose(a: &ComplexMatrix, m: usize, n: usize) -> Result<ComplexMatrix> {
    check_bipartite(a, m, n)?;
    let d = m * n;
    Ok(ComplexMatrix::from_fn(d, d, |row, col| {
        let (i, j) = (row / n, row % n);
        let (k, l) = (col / n, col % n);
        a[(i * n + l, k * n + j)]
    }))
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Max entry deviation of `u u*` from the identity, or infinity if not square.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = u * u.adjoint();
    max_abs_diff(&prod, &ComplexMatrix::identity(u.nrows(), u.nrows()))
}

pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(a, &a.adjoint())
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Eigendecomposition of a Hermitian matrix with a deterministic eigenbasis.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `k` belongs to `values[k]`.
    pub vectors: ComplexMatrix,
}

/// Gap below which neighbouring eigenvalues are treated as one cluster.
pub const DEGENERACY_GAP: f64 = 1e-10;
const PHASE_EPS: f64 = 1e-12;

/// Hermitian eigendecomposition, eigenvalues descending.
///
/// Within each cluster of numerically equal eigenvalues the solver's basis is
/// replaced by the Gram–Schmidt orthonormalization of the projected standard
/// basis vectors, and every vector's first entry with modulus above `1e-12`
/// is made real positive. The result is then a function of the input matrix
/// alone.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigendecomposition of {}x{} matrix", a.nrows(), a.ncols())));
    }
    let d = a.nrows();
    if d == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let herm = (a + a.adjoint()) * c(0.5);
    let eig = SymmetricEigen::try_new(herm, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }

    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (values[end - 1] - values[end]).abs() < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            canonicalize_cluster(&mut vectors, start, end);
        }
        start = end;
    }
    for col in 0..d {
        fix_phase(&mut vectors, col);
    }
    Ok(HermitianEigen { values, vectors })
}

fn canonicalize_cluster(vectors: &mut ComplexMatrix, start: usize, end: usize) {
    let d = vectors.nrows();
    let block = vectors.columns(start, end - start).into_owned();
    let projector = &block * block.adjoint();
    let mut chosen: Vec<ComplexVector> = Vec::with_capacity(end - start);
    for e in 0..d {
        if chosen.len() == end - start {
            break;
        }
        let mut cand: ComplexVector = projector.column(e).into_owned();
        for q in &chosen {
            let overlap = q.dotc(&cand);
            cand -= q * overlap;
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            chosen.push(cand / c(norm));
        }
    }
    // Keep the solver's basis if the 1e-6 cutoff dropped a direction.
    if chosen.len() == end - start {
        for (k, q) in chosen.into_iter().enumerate() {
            vectors.set_column(start + k, &q);
        }
    }
}

fn fix_phase(vectors: &mut ComplexMatrix, col: usize) {
    let lead = vectors.column(col).iter().copied().find(|z| z.norm() > PHASE_EPS);
    if let Some(z) = lead {
        let phase = z.conj() / z.norm();
        let mut column = vectors.column_mut(col);
        column *= phase;
    }
}

/// `f(a)` for Hermitian `a`, applied through its eigendecomposition.
pub fn hermitian_function(a: &ComplexMatrix, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eigen(a)?;
    let mut scaled = eig.vectors.clone();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let mut col = scaled.column_mut(k);
        col *= c(f(lambda));
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Reshapes a vector on `C^a ⊗ C^b` into its `a×b` coefficient matrix.
pub fn unvec(v: &ComplexVector, a: usize, b: usize) -> Result<ComplexMatrix> {
    if v.len() != a * b {
        return Err(Error::Shape(format!("vector of length {} is not on C^{a} ⊗ C^{b}", v.len())));
    }
    Ok(ComplexMatrix::from_fn(a, b, |i, j| v[i * b + j]))
}

/// Inverse of [`unvec`]: row-major flattening.
pub fn vec_of(a: &ComplexMatrix) -> ComplexVector {
    let (rows, cols) = a.shape();
    ComplexVector::from_fn(rows * cols, |k, _| a[(k / cols, k % cols)])
}

pub fn kron_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    ComplexVector::from_fn(a.len() * b.len(), |k, _| a[k / b.len()] * b[k % b.len()])
}
