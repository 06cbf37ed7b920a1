//! Density matrices, purification, and the parameterization `v ↦ ρ_v` of
//! the states on `C^m ⊗ C^n` that extend a fixed marginal `ω`.

use crate::error::{Error, Result};
use crate::io::MatrixJson;
use crate::stiefel::IsometryTuple;
use crate::tensor::{
    c, hermitian_eigen, hermiticity_defect, is_finite, max_abs_diff,
    partial_trace, rank_from_values, trace, unvec, vec_of, ComplexMatrix, ComplexVector,
    HermitianEigen, Subsystem, DEFAULT_REL_TOL,
};

/// Tolerance for Hermiticity, trace, and negative eigenvalues of a state.
pub const STATE_TOL: f64 = 1e-10;

/// Smallest eigenvalue a marginal must exceed to count as faithful.
pub const FAITHFUL_THRESHOLD: f64 = 1e-12;

/// Tolerance on marginal agreement and Gram-sum checks.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Hermitian, positive semidefinite, unit-trace matrix with its
/// eigendecomposition computed once at construction.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    eigen: HermitianEigen,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Shape(format!(
                "density matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !is_finite(&matrix) {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let matrix = (&matrix + matrix.adjoint()) * c(0.5);
        let eigen = hermitian_eigen(&matrix)?;
        let lowest = eigen.values.last().copied().unwrap_or(0.0);
        if lowest < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {lowest:e}")));
        }
        Ok(Self { matrix, eigen })
    }

    /// `ζ ζ* / ‖ζ‖²`.
    pub fn pure(zeta: &ComplexVector) -> Result<Self> {
        let norm = zeta.norm();
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::Precondition("pure state needs a nonzero vector".into()));
        }
        let unit = zeta / c(norm);
        Self::new(&unit * unit.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new(ComplexMatrix::identity(dim, dim) * c(1.0 / dim as f64))
            .expect("identity over dim is a state")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigen.vectors
    }

    pub fn rank(&self) -> usize {
        self.rank_with_tol(DEFAULT_REL_TOL)
    }

    pub fn rank_with_tol(&self, rel_tol: f64) -> usize {
        let clipped: Vec<f64> = self.eigen.values.iter().map(|&x| x.max(0.0)).collect();
        rank_from_values(&clipped, rel_tol).max(1)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen.values.last().copied().unwrap_or(0.0)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The marginal on the `H` factor of `C^m ⊗ C^n`.
    pub fn marginal(&self, m: usize, n: usize) -> Result<DensityMatrix> {
        DensityMatrix::new(partial_trace(&self.matrix, m, n, Subsystem::First)?)
    }

    pub fn to_json(&self, dims: Option<(usize, usize)>) -> MatrixJson {
        let json = MatrixJson::from(&self.matrix);
        match dims {
            Some((m, n)) => json.with_dims(m, n),
            None => json,
        }
    }

    /// Parses a density matrix and its optional `[m, n]` metadata.
    pub fn from_json(json: MatrixJson) -> Result<(Self, Option<(usize, usize)>)> {
        let dims = json.dims.map(|[m, n]| (m, n));
        let rho = DensityMatrix::new(ComplexMatrix::try_from(json)?)?;
        if let Some((m, n)) = dims {
            if m * n != rho.dim() {
                return Err(Error::Shape(format!("dims [{m}, {n}] do not match size {}", rho.dim())));
            }
        }
        Ok((rho, dims))
    }
}

/// A state `ω` on `C^n` together with its faithfulness flag.
#[derive(Debug, Clone)]
pub struct MarginalState {
    density: DensityMatrix,
    faithful: bool,
}

impl MarginalState {
    pub fn new(density: DensityMatrix) -> Self {
        let faithful = density.min_eigenvalue() > FAITHFUL_THRESHOLD;
        Self { density, faithful }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self::new(DensityMatrix::maximally_mixed(n))
    }

    pub fn n(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.density
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }
}

/// Unit vector `ξ_ω ∈ C^{r0} ⊗ C^n` whose marginal on `C^n` is `ω`.
#[derive(Debug, Clone)]
pub struct Purification {
    n: usize,
    /// `r0 × n` coefficient matrix: `ξ = Σ coeff[i,j] e'_i ⊗ e_j`.
    coeff: ComplexMatrix,
    /// Positive eigenvalues of `ω`, descending.
    weights: Vec<f64>,
    /// `n × r0`; column `i` is the canonical eigenvector for `weights[i]`.
    basis: ComplexMatrix,
}

impl Purification {
    pub fn r0(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_faithful(&self) -> bool {
        self.r0() == self.n
    }

    pub fn vector(&self) -> ComplexVector {
        vec_of(&self.coeff)
    }

    pub fn coefficients(&self) -> &ComplexMatrix {
        &self.coeff
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The eigenbasis `e_1, …, e_{r0}` of `ω` used to build `ξ`.
    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    fn require_faithful(&self) -> Result<()> {
        if self.is_faithful() {
            Ok(())
        } else {
            Err(Error::NotFaithful(self.weights.last().copied().unwrap_or(0.0)))
        }
    }

    /// `(v ⊗ 1_H) ξ` for a single `m × r0` operator.
    pub fn apply(&self, v: &ComplexMatrix) -> Result<ComplexVector> {
        if v.ncols() != self.r0() {
            return Err(Error::Shape(format!(
                "operator has {} columns, purification rank is {}",
                v.ncols(),
                self.r0()
            )));
        }
        Ok(vec_of(&(v * &self.coeff)))
    }
}

/// `ξ_ω = Σ_i √λ_i e'_i ⊗ e_i` over the strictly positive eigenvalues of `ω`.
pub fn purify(omega: &MarginalState) -> Purification {
    let rho = omega.density();
    let n = rho.dim();
    let positive: Vec<usize> = rho
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > FAITHFUL_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    let r0 = positive.len();
    let weights: Vec<f64> = positive.iter().map(|&i| rho.eigenvalues()[i]).collect();
    let basis = ComplexMatrix::from_fn(n, r0, |j, k| rho.eigenvectors()[(j, positive[k])]);
    let coeff = ComplexMatrix::from_fn(r0, n, |i, j| basis[(j, i)] * weights[i].sqrt());
    Purification {
        n,
        coeff,
        weights,
        basis,
    }
}

/// `ρ_v = Σ_k ζ_k ζ_k*` with `ζ_k = (v_k ⊗ 1_H) ξ`.
pub fn state_from_tuple(v: &IsometryTuple, xi: &Purification) -> Result<DensityMatrix> {
    xi.require_faithful()?;
    if v.n() != xi.n() {
        return Err(Error::Shape(format!("tuple acts on C^{}, purification on C^{}", v.n(), xi.n())));
    }
    state_from_operators(v.components(), xi)
}

/// Same map for operators `C^{r0} → C^m` against a possibly rank-deficient
/// purification; requires `Σ v_k* v_k = 1_{r0}`.
pub fn state_from_operators(ops: &[ComplexMatrix], xi: &Purification) -> Result<DensityMatrix> {
    let first = ops.first().ok_or_else(|| Error::Precondition("no operators".into()))?;
    let m = first.nrows();
    let d = m * xi.n();
    let mut rho = ComplexMatrix::zeros(d, d);
    for vk in ops {
        if vk.nrows() != m {
            return Err(Error::Shape("operators must share a target dimension".into()));
        }
        let zeta = xi.apply(vk)?;
        rho += &zeta * zeta.adjoint();
    }
    DensityMatrix::new(rho)
}

/// The unique `v` with `(v ⊗ 1_H) ξ = ζ`.
pub fn operator_from_vector(zeta: &ComplexVector, xi: &Purification) -> Result<ComplexMatrix> {
    xi.require_faithful()?;
    let n = xi.n();
    if !zeta.len().is_multiple_of(n) {
        return Err(Error::Shape(format!("vector length {} is not a multiple of {n}", zeta.len())));
    }
    let z = unvec(zeta, zeta.len() / n, n)?;
    // column j of z·conj(E) is c_j; divide by √λ_j
    let mut v = z * xi.basis.map(|x| x.conj());
    for (j, &lambda) in xi.weights.iter().enumerate() {
        let mut col = v.column_mut(j);
        col *= c(lambda.sqrt().recip());
    }
    Ok(v)
}

/// Inverts `v ↦ ρ_v`: spectral vectors of `ρ`, zero-padded to `r` terms,
/// mapped through [`operator_from_vector`].
pub fn tuple_from_state(rho: &DensityMatrix, r: usize, xi: &Purification) -> Result<IsometryTuple> {
    xi.require_faithful()?;
    let n = xi.n();
    let d = rho.dim();
    if !d.is_multiple_of(n) {
        return Err(Error::Shape(format!("state of size {d} is not on C^m ⊗ C^{n}")));
    }
    let m = d / n;
    let marginal = partial_trace(rho.matrix(), m, n, Subsystem::First)?;
    let omega = &xi.coeff.transpose() * xi.coeff.map(|x| x.conj());
    let deviation = max_abs_diff(&marginal, &omega);
    if deviation > MARGINAL_TOL {
        return Err(Error::MarginalMismatch(deviation));
    }
    if r == 0 || rho.rank() > r {
        return Err(Error::Precondition(format!("r = {r} is below rank {}", rho.rank())));
    }
    let mut components = Vec::with_capacity(r);
    for k in 0..r {
        let v = match rho.eigenvalues().get(k) {
            Some(&lambda) if lambda > 0.0 => {
                let zeta = rho.eigenvectors().column(k) * c(lambda.sqrt());
                operator_from_vector(&zeta, xi)?
            }
            _ => ComplexMatrix::zeros(m, n),
        };
        components.push(v);
    }
    IsometryTuple::with_tolerance(components, MARGINAL_TOL)
}

/// Unitary `λ` with `η_i = Σ_j λ_ij ξ_j`, given `Σ ξ_k ξ_k* = Σ η_k η_k*`.
pub fn decomposition_unitary(xis: &[ComplexVector], etas: &[ComplexVector]) -> Result<ComplexMatrix> {
    let r = xis.len();
    if r == 0 || etas.len() != r {
        return Err(Error::Shape(format!("need two nonempty lists of equal length, got {r} and {}", etas.len())));
    }
    let d = xis[0].len();
    if xis.iter().chain(etas).any(|x| x.len() != d) {
        return Err(Error::Shape("vectors must share one dimension".into()));
    }
    let a = ComplexMatrix::from_fn(d, r, |i, k| xis[k][i]);
    let b = ComplexMatrix::from_fn(d, r, |i, k| etas[k][i]);
    let gram_a = &a * a.adjoint();
    let gram_b = &b * b.adjoint();
    let mismatch = max_abs_diff(&gram_a, &gram_b);
    let scale = crate::tensor::max_abs(&gram_a).max(1.0);
    if mismatch > MARGINAL_TOL * scale {
        return Err(Error::GramMismatch(mismatch));
    }

    // A = P Σ Q*, so A* ζ ranges over span(Q); B* = R Σ P* with R = B* P Σ⁻¹.
    let eig = hermitian_eigen(&gram_a)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    // eigenvalues of A A* are squared singular values of A
    let k = eig.values.iter().filter(|&&l| l > 0.0 && l.sqrt() > DEFAULT_REL_TOL * top.sqrt()).count();
    let p = eig.vectors.columns(0, k).into_owned();
    let mut q = a.adjoint() * &p;
    let mut rr = b.adjoint() * &p;
    for j in 0..k {
        let inv = c(eig.values[j].sqrt().recip());
        let mut qc = q.column_mut(j);
        qc *= inv;
        let mut rc = rr.column_mut(j);
        rc *= inv;
    }
    // w maps Q onto R and the complement of Q onto the complement of R.
    let q_perp = orthonormal_complement(&q)?;
    let r_perp = orthonormal_complement(&rr)?;
    let w = &rr * q.adjoint() + &r_perp * q_perp.adjoint();
    // B = A w*, hence λ = conj(w).
    Ok(w.map(|x| x.conj()))
}

fn orthonormal_complement(basis: &ComplexMatrix) -> Result<ComplexMatrix> {
    let r = basis.nrows();
    let k = basis.ncols();
    let projector = ComplexMatrix::identity(r, r) - basis * basis.adjoint();
    let eig = hermitian_eigen(&projector)?;
    Ok(eig.vectors.columns(0, r - k).into_owned())
}

/// True iff `v` and `v'` give the same state against the purification of
/// `1/n`, i.e. iff `v' = λ·v` for some `λ ∈ U(r)`.
pub fn tuples_equivalent(v: &IsometryTuple, other: &IsometryTuple) -> Result<bool> {
    if (v.n(), v.m(), v.r()) != (other.n(), other.m(), other.r()) {
        return Err(Error::Shape(format!(
            "tuples have shapes (n,m,r) = ({},{},{}) and ({},{},{})",
            v.n(),
            v.m(),
            v.r(),
            other.n(),
            other.m(),
            other.r()
        )));
    }
    let xi = purify(&MarginalState::maximally_mixed(v.n()));
    let a = state_from_tuple(v, &xi)?;
    let b = state_from_tuple(other, &xi)?;
    Ok(max_abs_diff(a.matrix(), b.matrix()) <= MARGINAL_TOL)
}

/// Orthogonal projector onto `C^m ⊗ supp(ω)`.
pub fn support_projector(omega: &MarginalState, m: usize) -> ComplexMatrix {
    let xi = purify(omega);
    let p = xi.basis() * xi.basis().adjoint();
    crate::tensor::kron(&ComplexMatrix::identity(m, m), &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stiefel::{act_right, act_scalar, random_unitary, sample_haar_tuple, tuple_rank, SeededRng};
    use crate::tensor::{kron, max_abs, numerical_rank};
    use proptest::prelude::*;

    fn random_faithful(n: usize, rng: &mut SeededRng) -> MarginalState {
        let g = rng.ginibre(n, n);
        let gg = &g * g.adjoint() + ComplexMatrix::identity(n, n) * c(0.05);
        let tr = trace(&gg).re;
        MarginalState::new(DensityMatrix::new(gg / c(tr)).unwrap())
    }

    /// `⟨(1 ⊗ b) ξ, ξ⟩`.
    fn vector_expectation(xi: &Purification, b: &ComplexMatrix) -> num_complex::Complex64 {
        let v = xi.vector();
        let op = kron(&ComplexMatrix::identity(xi.r0(), xi.r0()), b);
        (v.adjoint() * op * &v)[(0, 0)]
    }

    #[test]
    fn purify_maximally_mixed_qubit() {
        let xi = purify(&MarginalState::maximally_mixed(2));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = ComplexVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]);
        assert!((xi.vector() - expected).norm() < 1e-15);
    }

    #[test]
    fn purify_diagonal_state() {
        let rho = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(0.9), c(0.1)]));
        let xi = purify(&MarginalState::new(DensityMatrix::new(rho).unwrap()));
        let expected = ComplexVector::from_vec(vec![c(0.9f64.sqrt()), c(0.0), c(0.0), c(0.1f64.sqrt())]);
        assert!((xi.vector() - expected).norm() < 1e-15);
    }

    #[test]
    fn purification_reproduces_matrix_units() {
        let mut rng = SeededRng::new(31, 0);
        let omega = random_faithful(3, &mut rng);
        let xi = purify(&omega);
        assert!((xi.vector().norm() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            for k in 0..3 {
                let mut unit = ComplexMatrix::zeros(3, 3);
                unit[(j, k)] = c(1.0);
                let expected = trace(&(omega.density().matrix() * &unit));
                assert!((vector_expectation(&xi, &unit) - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn purification_reconstructs_many_marginals() {
        let mut rng = SeededRng::new(32, 0);
        for i in 0..100 {
            let n = 2 + i % 3;
            let omega = random_faithful(n, &mut rng);
            let xi = purify(&omega);
            assert!(xi.is_faithful());
            assert_eq!(numerical_rank(xi.coefficients(), DEFAULT_REL_TOL).unwrap().rank, n);
            let v = xi.vector();
            let marginal = partial_trace(&(&v * v.adjoint()), n, n, Subsystem::First).unwrap();
            assert!(max_abs_diff(&marginal, omega.density().matrix()) < 1e-10);
        }
    }

    #[test]
    fn bell_state_from_identity() {
        let xi = purify(&MarginalState::maximally_mixed(2));
        let v = IsometryTuple::new(vec![ComplexMatrix::identity(2, 2)]).unwrap();
        let rho = state_from_tuple(&v, &xi).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = ComplexVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]);
        assert!(max_abs_diff(rho.matrix(), &(&bell * bell.adjoint())) < 1e-15);
        let marginal = rho.marginal(2, 2).unwrap();
        assert!(max_abs_diff(marginal.matrix(), &(ComplexMatrix::identity(2, 2) * c(0.5))) < 1e-15);
    }

    #[test]
    fn parallel_components_give_a_pure_state() {
        let mut rng = SeededRng::new(33, 0);
        let u = sample_haar_tuple(2, 3, 1, &mut rng).unwrap().into_components().remove(0);
        let r = 3;
        let v = IsometryTuple::new(vec![&u * c(1.0 / (r as f64).sqrt()); r]).unwrap();
        let xi = purify(&random_faithful(2, &mut rng));
        assert_eq!(state_from_tuple(&v, &xi).unwrap().rank(), 1);
    }

    #[test]
    fn state_marginal_matches_omega() {
        let mut rng = SeededRng::new(34, 0);
        let omega = random_faithful(2, &mut rng);
        let xi = purify(&omega);
        let v = sample_haar_tuple(2, 3, 2, &mut rng).unwrap();
        let rho = state_from_tuple(&v, &xi).unwrap();
        assert!(max_abs_diff(rho.marginal(3, 2).unwrap().matrix(), omega.density().matrix()) < 1e-10);
    }

    #[test]
    fn non_faithful_purification_rejected() {
        let rho = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0), c(0.0)]));
        let xi = purify(&MarginalState::new(DensityMatrix::new(rho).unwrap()));
        let v = IsometryTuple::new(vec![ComplexMatrix::identity(2, 2)]).unwrap();
        assert!(matches!(state_from_tuple(&v, &xi), Err(Error::NotFaithful(_))));
    }

    #[test]
    fn operator_round_trip() {
        let mut rng = SeededRng::new(35, 0);
        let xi = purify(&random_faithful(3, &mut rng));
        let w = rng.ginibre(4, 3);
        let zeta = xi.apply(&w).unwrap();
        assert!(max_abs_diff(&operator_from_vector(&zeta, &xi).unwrap(), &w) < 1e-12);
    }

    #[test]
    fn purification_maps_to_identity() {
        let xi = purify(&MarginalState::maximally_mixed(2));
        let v = operator_from_vector(&xi.vector(), &xi).unwrap();
        assert!(max_abs_diff(&v, &ComplexMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn product_vector_gives_rank_one_operator() {
        let mut rng = SeededRng::new(36, 0);
        let xi = purify(&random_faithful(3, &mut rng));
        let zeta = crate::tensor::kron_vec(&rng.gaussian_vector(2), &rng.gaussian_vector(3));
        let v = operator_from_vector(&zeta, &xi).unwrap();
        assert_eq!(numerical_rank(&v, DEFAULT_REL_TOL).unwrap().rank, 1);
    }

    #[test]
    fn tuple_from_state_round_trip() {
        let mut rng = SeededRng::new(37, 0);
        let xi = purify(&random_faithful(3, &mut rng));
        let v = sample_haar_tuple(3, 4, 3, &mut rng).unwrap();
        let rho = state_from_tuple(&v, &xi).unwrap();
        let back = tuple_from_state(&rho, 3, &xi).unwrap();
        assert!(back.isometry_defect() < 1e-8);
        assert!(max_abs_diff(state_from_tuple(&back, &xi).unwrap().matrix(), rho.matrix()) < 1e-8);
        assert!(tuples_equivalent(&v, &back).unwrap());
    }

    #[test]
    fn pure_state_gives_single_isometry() {
        let mut rng = SeededRng::new(38, 0);
        let xi = purify(&random_faithful(2, &mut rng));
        let u = sample_haar_tuple(2, 3, 1, &mut rng).unwrap();
        let rho = state_from_tuple(&u, &xi).unwrap();
        let back = tuple_from_state(&rho, 1, &xi).unwrap();
        assert!(back.isometry_defect() < 1e-8);
    }

    #[test]
    fn padded_tuple_keeps_isometry() {
        let mut rng = SeededRng::new(39, 0);
        let xi = purify(&random_faithful(2, &mut rng));
        let v = sample_haar_tuple(2, 2, 2, &mut rng).unwrap();
        let rho = state_from_tuple(&v, &xi).unwrap();
        assert_eq!(rho.rank(), 2);
        let back = tuple_from_state(&rho, 3, &xi).unwrap();
        assert_eq!(back.r(), 3);
        assert!(max_abs(&back.components()[2]) < 1e-7);
        assert!(back.isometry_defect() < 1e-8);
        assert!(max_abs_diff(state_from_tuple(&back, &xi).unwrap().matrix(), rho.matrix()) < 1e-8);
    }

    #[test]
    fn wrong_marginal_rejected() {
        let mut rng = SeededRng::new(40, 0);
        let xi = purify(&MarginalState::maximally_mixed(2));
        let other = purify(&random_faithful(2, &mut rng));
        let v = sample_haar_tuple(2, 2, 2, &mut rng).unwrap();
        let rho = state_from_tuple(&v, &other).unwrap();
        assert!(matches!(tuple_from_state(&rho, 2, &xi), Err(Error::MarginalMismatch(_))));
    }

    fn relation_residual(lambda: &ComplexMatrix, xis: &[ComplexVector], etas: &[ComplexVector]) -> f64 {
        etas.iter()
            .enumerate()
            .map(|(i, eta)| {
                let mut mix = ComplexVector::zeros(eta.len());
                for (j, x) in xis.iter().enumerate() {
                    mix += x * lambda[(i, j)];
                }
                (mix - eta).camax()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn decomposition_unitary_rotation() {
        let theta: f64 = 0.7;
        let e1 = ComplexVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]);
        let e2 = ComplexVector::from_vec(vec![c(0.0), c(1.0), c(0.0)]);
        let xis = vec![e1.clone(), e2.clone()];
        let etas = vec![
            &e1 * c(theta.cos()) - &e2 * c(theta.sin()),
            &e1 * c(theta.sin()) + &e2 * c(theta.cos()),
        ];
        let lambda = decomposition_unitary(&xis, &etas).unwrap();
        assert!(crate::tensor::unitarity_defect(&lambda) < 1e-10);
        assert!(relation_residual(&lambda, &xis, &etas) < 1e-10);
    }

    #[test]
    fn decomposition_unitary_identity_and_haar() {
        let mut rng = SeededRng::new(41, 0);
        let xis: Vec<ComplexVector> = (0..3).map(|_| rng.gaussian_vector(4)).collect();
        let same = decomposition_unitary(&xis, &xis).unwrap();
        assert!(relation_residual(&same, &xis, &xis) < 1e-10);

        let u = random_unitary(3, &mut rng);
        let etas: Vec<ComplexVector> = (0..3)
            .map(|i| (0..3).fold(ComplexVector::zeros(4), |acc, j| acc + &xis[j] * u[(i, j)]))
            .collect();
        let lambda = decomposition_unitary(&xis, &etas).unwrap();
        assert!(crate::tensor::unitarity_defect(&lambda) < 1e-9);
        assert!(relation_residual(&lambda, &xis, &etas) < 1e-9);
    }

    #[test]
    fn decomposition_unitary_with_dependent_family() {
        let mut rng = SeededRng::new(42, 0);
        let a = rng.gaussian_vector(3);
        let b = rng.gaussian_vector(3);
        let xis = vec![a.clone(), b.clone(), &a + &b];
        let u = random_unitary(3, &mut rng);
        let etas: Vec<ComplexVector> = (0..3)
            .map(|i| (0..3).fold(ComplexVector::zeros(3), |acc, j| acc + &xis[j] * u[(i, j)]))
            .collect();
        let lambda = decomposition_unitary(&xis, &etas).unwrap();
        assert!(crate::tensor::unitarity_defect(&lambda) < 1e-9);
        assert!(relation_residual(&lambda, &xis, &etas) < 1e-9);
    }

    #[test]
    fn gram_mismatch_rejected() {
        let xis = vec![ComplexVector::from_vec(vec![c(1.0), c(0.0)])];
        let etas = vec![ComplexVector::from_vec(vec![c(0.0), c(1.0)])];
        assert!(matches!(decomposition_unitary(&xis, &etas), Err(Error::GramMismatch(_))));
    }

    #[test]
    fn equivalence_examples() {
        let mut rng = SeededRng::new(43, 0);
        let v = sample_haar_tuple(3, 3, 2, &mut rng).unwrap();
        assert!(tuples_equivalent(&v, &v).unwrap());
        let lambda = random_unitary(2, &mut rng);
        assert!(tuples_equivalent(&v, &act_scalar(&lambda, &v).unwrap()).unwrap());
        let u = random_unitary(3, &mut rng);
        assert!(!tuples_equivalent(&v, &act_right(&u, &v).unwrap()).unwrap());
    }

    #[test]
    fn rank_deficient_marginal_support() {
        let mut rng = SeededRng::new(44, 0);
        let g = rng.ginibre(3, 2);
        let gg = &g * g.adjoint();
        let tr = trace(&gg).re;
        let omega = MarginalState::new(DensityMatrix::new(gg / c(tr)).unwrap());
        assert!(!omega.is_faithful());
        let xi = purify(&omega);
        assert_eq!(xi.r0(), 2);
        let ops = sample_haar_tuple(2, 2, 2, &mut rng).unwrap().into_components();
        let rho = state_from_operators(&ops, &xi).unwrap();
        let p = support_projector(&omega, 2);
        assert!(max_abs_diff(&(&p * rho.matrix() * &p), rho.matrix()) < 1e-10);
        assert!(max_abs_diff(rho.marginal(2, 3).unwrap().matrix(), omega.density().matrix()) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gauge_invariance(seed in any::<u64>(), n in 2usize..4, m in 2usize..4, r in 1usize..4) {
            prop_assume!(r * m >= n);
            let mut rng = SeededRng::new(seed, 0);
            let xi = purify(&random_faithful(n, &mut rng));
            let v = sample_haar_tuple(n, m, r, &mut rng).unwrap();
            let lambda = random_unitary(r, &mut rng);
            let a = state_from_tuple(&v, &xi).unwrap();
            let b = state_from_tuple(&act_scalar(&lambda, &v).unwrap(), &xi).unwrap();
            prop_assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-10);
        }

        #[test]
        fn state_rank_equals_tuple_rank(seed in any::<u64>(), n in 2usize..4, m in 2usize..4, r in 1usize..6) {
            prop_assume!(r * m >= n);
            let mut rng = SeededRng::new(seed, 1);
            let xi = purify(&random_faithful(n, &mut rng));
            let v = sample_haar_tuple(n, m, r, &mut rng).unwrap();
            prop_assert_eq!(state_from_tuple(&v, &xi).unwrap().rank(), tuple_rank(&v));
        }

        #[test]
        fn operator_map_is_linear_bijection(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
            let mut rng = SeededRng::new(seed, 2);
            let xi = purify(&random_faithful(n, &mut rng));
            let x = rng.gaussian_vector(m * n);
            let y = rng.gaussian_vector(m * n);
            let s = rng.complex_gaussian();
            let fx = operator_from_vector(&x, &xi).unwrap();
            let fy = operator_from_vector(&y, &xi).unwrap();
            let sum = operator_from_vector(&(&x + &y), &xi).unwrap();
            let scaled = operator_from_vector(&(&x * s), &xi).unwrap();
            let scale = max_abs(&fx).max(max_abs(&fy)).max(1.0);
            prop_assert!(max_abs_diff(&sum, &(&fx + &fy)) < 1e-12 * scale);
            prop_assert!(max_abs_diff(&scaled, &(&fx * s)) < 1e-12 * scale * s.norm().max(1.0));
            prop_assert!((xi.apply(&fx).unwrap() - &x).camax() < 1e-12 * scale);
            let w = rng.ginibre(m, n);
            prop_assert!(max_abs_diff(&operator_from_vector(&xi.apply(&w).unwrap(), &xi).unwrap(), &w) < 1e-12 * max_abs(&w).max(1.0) * 10.0);
        }
    }
}
