//! Isometry tuples `v = (v_1, …, v_r)` with `Σ v_k* v_k = 1_n`, their
//! invariant sampling, and the left/right group actions.

use nalgebra::QR;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    c, hermitian_eigen, is_finite, max_abs_diff, numerical_rank, unitarity_defect, ComplexMatrix,
    ComplexVector, DEFAULT_REL_TOL,
};

/// Default tolerance on `‖Σ v_k* v_k − 1‖_max`.
pub const ISOMETRY_TOL: f64 = 1e-10;

/// Tolerance on `‖w w* − 1‖_max` for group elements.
pub const UNITARY_TOL: f64 = 1e-10;

const MAX_POLAR_ATTEMPTS: usize = 3;

/// Counter-based random stream: identical `(master_seed, stream_id)` pairs
/// produce identical draws.
#[derive(Debug, Clone)]
pub struct SeededRng {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Standard complex Gaussian: real and imaginary parts i.i.d. `N(0, 1/2)`.
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let re: f64 = StandardNormal.sample(&mut self.inner);
        let im: f64 = StandardNormal.sample(&mut self.inner);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// `rows × cols` matrix of i.i.d. standard complex Gaussians, filled row-major.
    pub fn ginibre(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self.complex_gaussian();
            }
        }
        out
    }

    pub fn gaussian_vector(&mut self, len: usize) -> ComplexVector {
        ComplexVector::from_fn(len, |_, _| self.complex_gaussian())
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A point of `V^r(H, K)`: `r` complex `m×n` matrices with `Σ v_k* v_k = 1_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<crate::io::MatrixJson>", into = "Vec<crate::io::MatrixJson>")]
pub struct IsometryTuple {
    n: usize,
    m: usize,
    components: Vec<ComplexMatrix>,
}

impl IsometryTuple {
    pub fn new(components: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_tolerance(components, ISOMETRY_TOL)
    }

    pub fn with_tolerance(components: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Precondition("isometry tuple needs r >= 1 components".into()))?;
        let (m, n) = first.shape();
        if m == 0 || n == 0 {
            return Err(Error::Shape("components must have positive dimensions".into()));
        }
        for (k, v) in components.iter().enumerate() {
            if v.shape() != (m, n) {
                return Err(Error::Shape(format!(
                    "component {k} is {}x{}, expected {m}x{n}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            if !is_finite(v) {
                return Err(Error::NonFinite(k));
            }
        }
        let tuple = Self { n, m, components };
        let defect = tuple.isometry_defect();
        if defect > tol {
            return Err(Error::NotIsometry(defect));
        }
        Ok(tuple)
    }

    /// Splits an `rm×n` isometry into `r` stacked `m×n` blocks.
    pub fn from_stacked(stacked: &ComplexMatrix, m: usize) -> Result<Self> {
        if m == 0 || !stacked.nrows().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "{} rows do not split into blocks of {m}",
                stacked.nrows()
            )));
        }
        let r = stacked.nrows() / m;
        let components = (0..r).map(|k| stacked.rows(k * m, m).into_owned()).collect();
        Self::new(components)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComplexMatrix] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ComplexMatrix> {
        self.components
    }

    /// The single isometry `C^n → C^{rm}` with block `k` equal to `v_k`.
    pub fn stacked(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.r() * self.m, self.n);
        for (k, v) in self.components.iter().enumerate() {
            out.rows_mut(k * self.m, self.m).copy_from(v);
        }
        out
    }

    pub fn adjoints(&self) -> Vec<ComplexMatrix> {
        self.components.iter().map(|v| v.adjoint()).collect()
    }

    pub fn isometry_defect(&self) -> f64 {
        let mut sum = ComplexMatrix::zeros(self.n, self.n);
        for v in &self.components {
            sum += v.adjoint() * v;
        }
        max_abs_diff(&sum, &ComplexMatrix::identity(self.n, self.n))
    }

    /// Real inner product `Re Σ trace(w_k* v_k)` on the ambient space.
    pub fn real_inner(&self, other: &IsometryTuple) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(v, w)| w.dotc(v).re)
            .sum()
    }
}

/// Polar factor `G (G* G)^{-1/2}` of a full-column-rank matrix.
fn polar_isometry(g: &ComplexMatrix) -> Option<ComplexMatrix> {
    let gram = g.adjoint() * g;
    let eig = hermitian_eigen(&gram).ok()?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let bottom = eig.values.last().copied().unwrap_or(0.0);
    if bottom.is_nan() || bottom <= 1e-12 * top {
        return None;
    }
    let mut scaled = eig.vectors.clone();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let mut col = scaled.column_mut(k);
        col *= c(lambda.sqrt().recip());
    }
    Some(g * (scaled * eig.vectors.adjoint()))
}

/// Draws from the unique `U(rm)`-invariant law on `V^r(C^n, C^m)`.
///
/// The rows of a Ginibre `rm×n` matrix are mapped to their polar isometry; the
/// Ginibre law and the polar map are both equivariant under left unitaries.
pub fn sample_haar_tuple(n: usize, m: usize, r: usize, rng: &mut SeededRng) -> Result<IsometryTuple> {
    if n == 0 || m == 0 || r == 0 {
        return Err(Error::Precondition("n, m, r must all be >= 1".into()));
    }
    if r * m < n {
        return Err(Error::Precondition(format!(
            "no isometry C^{n} -> C^{} exists (need rm >= n)",
            r * m
        )));
    }
    for _ in 0..MAX_POLAR_ATTEMPTS {
        let g = rng.ginibre(r * m, n);
        if let Some(q) = polar_isometry(&g) {
            return IsometryTuple::from_stacked(&q, m);
        }
    }
    Err(Error::RetryExhausted(
        MAX_POLAR_ATTEMPTS,
        "Ginibre draw numerically rank deficient".into(),
    ))
}

/// Haar unitary via QR of a Ginibre matrix with the phases of `diag(R)` removed.
pub fn random_unitary(d: usize, rng: &mut SeededRng) -> ComplexMatrix {
    assert!(d >= 1, "random_unitary needs d >= 1");
    let qr = QR::new(rng.ginibre(d, d));
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        let z = r[(k, k)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { c(1.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// `v'_i = Σ_j w_ij v_j` with `w` an `r×r` matrix of `m×m` blocks.
pub fn act_left(w: &ComplexMatrix, v: &IsometryTuple) -> Result<IsometryTuple> {
    let size = v.r() * v.m();
    if w.shape() != (size, size) {
        return Err(Error::Shape(format!(
            "left action needs a {size}x{size} unitary, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let defect = unitarity_defect(w);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    IsometryTuple::from_stacked(&(w * v.stacked()), v.m())
}

/// The scalar `U(r)` action `v'_i = Σ_j λ_ij v_j`.
pub fn act_scalar(lambda: &ComplexMatrix, v: &IsometryTuple) -> Result<IsometryTuple> {
    if lambda.shape() != (v.r(), v.r()) {
        return Err(Error::Shape(format!(
            "scalar action needs an {r}x{r} matrix",
            r = v.r()
        )));
    }
    let block = crate::tensor::kron(lambda, &ComplexMatrix::identity(v.m(), v.m()));
    act_left(&block, v)
}

/// `(v_1 u, …, v_r u)`.
pub fn act_right(u: &ComplexMatrix, v: &IsometryTuple) -> Result<IsometryTuple> {
    if u.shape() != (v.n(), v.n()) {
        return Err(Error::Shape(format!(
            "right action needs an {n}x{n} unitary",
            n = v.n()
        )));
    }
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    IsometryTuple::new(v.components().iter().map(|vk| vk * u).collect())
}

/// `r × mn` matrix whose `k`-th row is `v_k` flattened row-major.
pub fn component_matrix(v: &IsometryTuple) -> ComplexMatrix {
    let (m, n) = (v.m(), v.n());
    ComplexMatrix::from_fn(v.r(), m * n, |k, idx| v.components()[k][(idx / n, idx % n)])
}

/// `dim span{v_1, …, v_r}`.
pub fn tuple_rank(v: &IsometryTuple) -> usize {
    tuple_rank_with_tol(v, DEFAULT_REL_TOL)
}

pub fn tuple_rank_with_tol(v: &IsometryTuple, rel_tol: f64) -> usize {
    numerical_rank(&component_matrix(v), rel_tol)
        .map(|info| info.rank)
        .unwrap_or(0)
}
