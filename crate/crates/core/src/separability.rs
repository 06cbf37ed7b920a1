//! Sound one-sided entanglement and separability tests, certified separable
//! states, and witnesses built from pure states.
//!
//! Entanglement is certified by the wedge invariant or by a negative partial
//! transpose. Separability is certified by the purity ball around the
//! maximally mixed state, by PPT when `mn ≤ 6`, or by an explicit product
//! decomposition. Anything else is [`Status::Undecided`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{state_from_tuple, DensityMatrix, MarginalState, Purification};
use crate::stiefel::{IsometryTuple, SeededRng};
use crate::tensor::{
    c, hermitian_eigen, hermitian_function, kron, max_abs_diff, numerical_rank, partial_transpose,
    singular_values, unvec, ComplexMatrix, ComplexVector, DEFAULT_REL_TOL,
};
use crate::wedge::{wedge_invariants, WedgeInvariant};

/// Tolerance on partial-transpose eigenvalues and witness values.
pub const NEGATIVITY_TOL: f64 = 1e-10;

/// Largest `mn` at which PPT is equivalent to separability.
pub const PPT_EXACT_MAX_DIM: usize = 6;

/// `λ_min(T)` required of the Gram sum in [`separable_sample`].
pub const GRAM_FLOOR: f64 = 1e-6;

pub const SEPARABLE_SAMPLE_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    CertifiedEntangled,
    CertifiedSeparable,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEvidence {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityVerdict {
    pub status: Status,
    pub tests: Vec<TestEvidence>,
    /// A complete criterion applied (PPT with `mn ≤ 6`).
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WedgeSide {
    Forward,
    Adjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeCertificate {
    pub side: WedgeSide,
    pub rank: usize,
    /// `σ₂/σ₁` of the matrix whose rank exceeded one.
    pub margin: f64,
}

/// Certificate from already computed invariants; prefers the adjoint side.
pub fn wedge_certificate(inv: &WedgeInvariant) -> Option<WedgeCertificate> {
    if inv.w_star > 1 {
        Some(WedgeCertificate {
            side: WedgeSide::Adjoint,
            rank: inv.w_star,
            margin: inv.margin_w_star(),
        })
    } else if inv.w > 1 {
        Some(WedgeCertificate {
            side: WedgeSide::Forward,
            rank: inv.w,
            margin: inv.margin_w(),
        })
    } else {
        None
    }
}

pub fn wedge_test(v: &IsometryTuple) -> Result<Option<WedgeCertificate>> {
    Ok(wedge_certificate(&wedge_invariants(v, DEFAULT_REL_TOL)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PptOutcome {
    pub min_eigenvalue: f64,
    pub entangled: bool,
    /// PPT holds and `mn ≤ 6`.
    pub exact_separable: bool,
    /// `mn ≤ 6`, where PPT decides separability.
    pub complete: bool,
}

pub fn ppt_test(rho: &DensityMatrix, m: usize, n: usize) -> Result<PptOutcome> {
    let pt = partial_transpose(rho.matrix(), m, n)?;
    let min_eigenvalue = hermitian_eigen(&pt)?.values.last().copied().unwrap_or(0.0);
    let entangled = min_eigenvalue < -NEGATIVITY_TOL;
    let complete = m * n <= PPT_EXACT_MAX_DIM;
    Ok(PptOutcome {
        min_eigenvalue,
        entangled,
        exact_separable: !entangled && complete,
        complete,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallOutcome {
    pub purity: f64,
    /// `1/(mn − 1)`.
    pub bound: f64,
    pub separable: bool,
}

/// Purity ball: `tr ρ² ≤ 1/(mn − 1)` implies separability.
pub fn ball_test(rho: &DensityMatrix, m: usize, n: usize) -> Result<BallOutcome> {
    let d = m * n;
    if rho.dim() != d {
        return Err(Error::Shape(format!("state of size {} is not on C^{m} ⊗ C^{n}", rho.dim())));
    }
    let purity = rho.purity();
    let bound = if d > 1 { 1.0 / (d as f64 - 1.0) } else { f64::INFINITY };
    Ok(BallOutcome {
        purity,
        bound,
        separable: purity <= bound,
    })
}

/// Raw results of whichever tests were run on one state.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub wedge: Option<WedgeInvariant>,
    pub ppt: Option<PptOutcome>,
    pub ball: Option<BallOutcome>,
}

impl Evidence {
    /// Combines the tests into a verdict. Contradictory certificates are a
    /// numerical failure, never silently resolved.
    pub fn verdict(&self) -> Result<SeparabilityVerdict> {
        let mut tests = Vec::new();
        let mut entangled = false;
        let mut separable = false;
        let mut exact = false;
        if let Some(inv) = &self.wedge {
            tests.push(evidence("wedge_w", inv.w as f64));
            tests.push(evidence("wedge_w_star", inv.w_star as f64));
            if let Some(cert) = wedge_certificate(inv) {
                tests.push(evidence("wedge_margin", cert.margin));
                entangled = true;
            }
        }
        if let Some(ppt) = &self.ppt {
            tests.push(evidence("ppt_min_eigenvalue", ppt.min_eigenvalue));
            entangled |= ppt.entangled;
            separable |= ppt.exact_separable;
            exact = ppt.complete;
        }
        if let Some(ball) = &self.ball {
            tests.push(evidence("ball_purity", ball.purity));
            separable |= ball.separable;
        }
        let status = match (entangled, separable) {
            (true, true) => {
                return Err(Error::Numerical(format!(
                    "contradictory certificates: {tests:?}"
                )))
            }
            (true, false) => Status::CertifiedEntangled,
            (false, true) => Status::CertifiedSeparable,
            (false, false) => Status::Undecided,
        };
        Ok(SeparabilityVerdict { status, tests, exact })
    }
}

fn evidence(name: &str, value: f64) -> TestEvidence {
    TestEvidence {
        name: name.to_string(),
        value,
    }
}

/// Runs every test on a state; `wedge` is attached when a tuple is known.
pub fn decide_state(
    rho: &DensityMatrix,
    m: usize,
    n: usize,
    wedge: Option<WedgeInvariant>,
) -> Result<SeparabilityVerdict> {
    Evidence {
        wedge,
        ppt: Some(ppt_test(rho, m, n)?),
        ball: Some(ball_test(rho, m, n)?),
    }
    .verdict()
}

pub fn decide(v: &IsometryTuple, xi: &Purification) -> Result<SeparabilityVerdict> {
    decide_with_tol(v, xi, DEFAULT_REL_TOL)
}

pub fn decide_with_tol(v: &IsometryTuple, xi: &Purification, rel_tol: f64) -> Result<SeparabilityVerdict> {
    let inv = wedge_invariants(v, rel_tol)?;
    let rho = state_from_tuple(v, xi)?;
    decide_state(&rho, v.m(), v.n(), Some(inv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub weight: f64,
    #[serde(with = "vector_json")]
    pub xi: ComplexVector,
    #[serde(with = "vector_json")]
    pub eta: ComplexVector,
}

/// `Σ_k w_k (ξ_k ξ_k*) ⊗ (η_k η_k*)` with unit `ξ_k ∈ C^m`, `η_k ∈ C^n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductDecomposition {
    m: usize,
    n: usize,
    terms: Vec<ProductTerm>,
}

/// Tolerance on unit norms and the weight sum.
pub const DECOMPOSITION_TOL: f64 = 1e-10;

impl ProductDecomposition {
    pub fn new(m: usize, n: usize, terms: Vec<ProductTerm>) -> Result<Self> {
        let limit = (m * n) * (m * n);
        if terms.is_empty() || terms.len() > limit {
            return Err(Error::Precondition(format!(
                "decomposition needs between 1 and {limit} terms, got {}",
                terms.len()
            )));
        }
        let mut total = 0.0;
        for t in &terms {
            if t.xi.len() != m || t.eta.len() != n {
                return Err(Error::Shape(format!("terms must lie in C^{m} ⊗ C^{n}")));
            }
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::Precondition(format!("invalid weight {}", t.weight)));
            }
            if (t.xi.norm() - 1.0).abs() > DECOMPOSITION_TOL || (t.eta.norm() - 1.0).abs() > DECOMPOSITION_TOL {
                return Err(Error::Precondition("product factors must be unit vectors".into()));
            }
            total += t.weight;
        }
        if (total - 1.0).abs() > DECOMPOSITION_TOL {
            return Err(Error::Precondition(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { m, n, terms })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let d = self.m * self.n;
        self.terms.iter().fold(ComplexMatrix::zeros(d, d), |acc, t| {
            acc + kron(&(&t.xi * t.xi.adjoint()), &(&t.eta * t.eta.adjoint())) * c(t.weight)
        })
    }
}

#[derive(Deserialize)]
struct RawDecomposition {
    m: usize,
    n: usize,
    terms: Vec<ProductTerm>,
}

impl<'de> Deserialize<'de> for ProductDecomposition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDecomposition::deserialize(deserializer)?;
        Self::new(raw.m, raw.n, raw.terms).map_err(serde::de::Error::custom)
    }
}

mod vector_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::io::{vector_from_json, MatrixJson};
    use crate::tensor::ComplexVector;

    pub fn serialize<S: Serializer>(v: &ComplexVector, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexVector, D::Error> {
        vector_from_json(MatrixJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub fn verify_product_decomposition(rho: &DensityMatrix, d: &ProductDecomposition, tol: f64) -> bool {
    rho.dim() == d.m * d.n && max_abs_diff(rho.matrix(), &d.matrix()) <= tol
}

/// A tuple of rank-one operators together with the product decomposition of
/// its state. Each `v_k = x_k (T^{-1/2} y_k)*`, so `(v_k ⊗ 1) ξ` is a product
/// vector.
pub fn separable_sample(
    omega: &MarginalState,
    r: usize,
    m: usize,
    rng: &mut SeededRng,
) -> Result<(IsometryTuple, ProductDecomposition)> {
    let n = omega.n();
    if !omega.is_faithful() {
        return Err(Error::NotFaithful(omega.density().min_eigenvalue()));
    }
    if m == 0 || r < n || r > (m * n) * (m * n) {
        return Err(Error::Precondition(format!(
            "separable sampling needs n <= r <= (mn)^2 and m >= 1; got (n, m, r) = ({n}, {m}, {r})"
        )));
    }
    let xi = crate::states::purify(omega);
    for _ in 0..SEPARABLE_SAMPLE_ATTEMPTS {
        let xs: Vec<ComplexVector> = (0..r).map(|_| rng.gaussian_vector(m)).collect();
        let ys: Vec<ComplexVector> = (0..r).map(|_| rng.gaussian_vector(n)).collect();
        let gram = xs
            .iter()
            .zip(&ys)
            .fold(ComplexMatrix::zeros(n, n), |acc, (x, y)| acc + y * y.adjoint() * c(x.norm_squared()));
        let lowest = hermitian_eigen(&gram)?.values.last().copied().unwrap_or(0.0);
        if lowest <= GRAM_FLOOR {
            continue;
        }
        let inv_sqrt = hermitian_function(&gram, |l| l.sqrt().recip())?;
        let mut components = Vec::with_capacity(r);
        let mut terms = Vec::with_capacity(r);
        for (x, y) in xs.iter().zip(&ys) {
            let y_adj = &inv_sqrt * y;
            components.push(x * y_adj.adjoint());
            // (x y'*) Ξ = x ⊗ η with η = Ξᵀ conj(y')
            let eta = xi.coefficients().transpose() * y_adj.map(|z| z.conj());
            let weight = x.norm_squared() * eta.norm_squared();
            if weight > 0.0 {
                terms.push(ProductTerm {
                    weight,
                    xi: x / c(x.norm()),
                    eta: &eta / c(eta.norm()),
                });
            }
        }
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        for t in &mut terms {
            t.weight /= total;
        }
        let tuple = IsometryTuple::new(components)?;
        return Ok((tuple, ProductDecomposition::new(m, n, terms)?));
    }
    Err(Error::RetryExhausted(
        SEPARABLE_SAMPLE_ATTEMPTS,
        format!("Gram sum minimum eigenvalue stayed below {GRAM_FLOOR:e}"),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// `α·1 − ζζ*`.
    pub operator: ComplexMatrix,
    /// Squared largest Schmidt coefficient of `ζ`.
    pub alpha: f64,
}

impl Witness {
    pub fn value(&self, rho: &DensityMatrix) -> f64 {
        (&self.operator * rho.matrix()).trace().re
    }

    pub fn value_on_vector(&self, v: &ComplexVector) -> f64 {
        (v.adjoint() * &self.operator * v)[(0, 0)].re
    }
}

/// Non-negative on every product state; equals `α − 1` on `ζζ*`.
pub fn witness_from_pure(zeta: &ComplexVector, m: usize, n: usize) -> Result<Witness> {
    if zeta.len() != m * n {
        return Err(Error::Shape(format!("vector of length {} is not in C^{m} ⊗ C^{n}", zeta.len())));
    }
    let norm = zeta.norm();
    if (norm - 1.0).abs() > NEGATIVITY_TOL {
        return Err(Error::Precondition(format!("witness needs a unit vector, norm is {norm}")));
    }
    let top = singular_values(&unvec(zeta, m, n)?)?.first().copied().unwrap_or(0.0);
    let alpha = top * top;
    let d = m * n;
    let operator = ComplexMatrix::identity(d, d) * c(alpha) - zeta * zeta.adjoint();
    Ok(Witness { operator, alpha })
}

/// Checks a unitary `μ` in `U(q)`, `q = (mn)²`, against `v` padded with zero
/// components: every combination `Σ_j μ_ij v_j` must have rank at most one.
pub fn verify_separability_unitary(v: &IsometryTuple, mu: &ComplexMatrix, rel_tol: f64) -> Result<bool> {
    let q = (v.m() * v.n()).pow(2);
    if mu.shape() != (q, q) {
        return Err(Error::Shape(format!("expected a {q}x{q} unitary")));
    }
    if v.r() > q {
        return Err(Error::Precondition(format!("tuple length {} exceeds {q}", v.r())));
    }
    let defect = crate::tensor::unitarity_defect(mu);
    if defect > crate::stiefel::UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    for i in 0..q {
        let mut combo = ComplexMatrix::zeros(v.m(), v.n());
        for (j, vj) in v.components().iter().enumerate() {
            combo += vj * mu[(i, j)];
        }
        if numerical_rank(&combo, rel_tol)?.rank > 1 {
            return Ok(false);
        }
    }
    Ok(true)
}
