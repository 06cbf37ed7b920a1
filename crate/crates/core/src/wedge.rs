//! The alternating average `v_1 ∧ ⋯ ∧ v_r` and the wedge invariant `(w, w*)`.
//!
//! `w` is the rank of `v_1 ∧ ⋯ ∧ v_r` restricted to the symmetric subspace of
//! `H^{⊗r}`; `w*` is the same rank for the adjoints on `K^{⊗r}`. Separable
//! states have `w ≤ 1` and `w* ≤ 1`.
//!
//! The compressed path never forms a `d^r` matrix. On a symmetric vector the
//! alternating average acts as `P_-(A_1 ⊗ ⋯ ⊗ A_r)`, so the matrix element
//! between the antisymmetric basis vector for `I = (i_1 < ⋯ < i_r)` and the
//! symmetric basis vector for `J = (j_1 ≤ ⋯ ≤ j_r)` is
//!
//! ```text
//! c_J / √(r!) · Σ_{J' ∈ arrangements(J)} det[ A_k(i_l, J'_k) ]_{k,l}
//! ```
//!
//! with `c_J = 1/√|arrangements(J)|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stiefel::IsometryTuple;
use crate::tensor::{
    antisym_basis, binomial, c, checked_pow, for_each_combination, for_each_multiset, guard_tensor_power,
    kron_all, next_permutation, numerical_rank, signed_permutations, sym_basis, ComplexMatrix,
    MAX_ELEMENTS,
};

/// Largest `p^r`, `q^r` accepted by the full cross-validation path.
pub const FULL_PATH_LIMIT: u128 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WedgePath {
    #[default]
    Compressed,
    /// Builds the `p^r × q^r` operator and projects with explicit bases.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeInvariant {
    pub w: usize,
    pub w_star: usize,
    pub sv_w: Vec<f64>,
    pub sv_w_star: Vec<f64>,
    pub rel_tol: f64,
}

impl WedgeInvariant {
    pub fn margin_w(&self) -> f64 {
        second_ratio(&self.sv_w)
    }

    pub fn margin_w_star(&self) -> f64 {
        second_ratio(&self.sv_w_star)
    }

    pub fn detects_entanglement(&self) -> bool {
        self.w > 1 || self.w_star > 1
    }
}

fn second_ratio(sv: &[f64]) -> f64 {
    match sv {
        [s1, s2, ..] if *s1 > 0.0 => s2 / s1,
        _ => 0.0,
    }
}

fn common_shape(ops: &[ComplexMatrix]) -> Result<(usize, usize)> {
    let first = ops
        .first()
        .ok_or_else(|| Error::Precondition("wedge needs at least one operator".into()))?;
    let shape = first.shape();
    if ops.iter().any(|a| a.shape() != shape) {
        return Err(Error::Shape("wedge operands must share one shape".into()));
    }
    Ok(shape)
}

/// `(1/r!) Σ_π sgn(π) ops_{π(1)} ⊗ ⋯ ⊗ ops_{π(r)}`.
pub fn wedge_operator(ops: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (p, q) = common_shape(ops)?;
    let r = ops.len();
    let rows = guard_tensor_power(p, r)?;
    let cols = guard_tensor_power(q, r)?;
    if (rows as u128) * (cols as u128) > MAX_ELEMENTS {
        return Err(Error::ResourceGuard(format!(
            "wedge operator {rows}x{cols} exceeds element budget"
        )));
    }
    let perms = signed_permutations(r);
    let norm = 1.0 / perms.len() as f64;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for (perm, sign) in &perms {
        let factors: Vec<&ComplexMatrix> = perm.iter().map(|&k| &ops[k]).collect();
        out += kron_all(&factors) * c(sign * norm);
    }
    Ok(out)
}

/// The alternating average restricted to `Sym^r(C^q)` and compressed onto
/// `Λ^r(C^p)`: a `C(p,r) × C(q+r−1,r)` matrix. Zero rows when `r > p`.
pub fn wedge_restricted(ops: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (p, q) = common_shape(ops)?;
    let r = ops.len();
    let rows = binomial(p, r);
    let cols = binomial(q + r - 1, r);
    if rows == 0 {
        return Ok(ComplexMatrix::zeros(0, cols.min(usize::MAX as u128) as usize));
    }
    guard_tensor_power(p, r)?;
    guard_tensor_power(q, r)?;
    if rows.saturating_mul(cols) > MAX_ELEMENTS {
        return Err(Error::ResourceGuard(format!(
            "compressed wedge {rows}x{cols} exceeds element budget"
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);

    let mut targets: Vec<Vec<usize>> = Vec::with_capacity(rows);
    for_each_combination(p, r, |idx| targets.push(idx.to_vec()));

    let r_fact: f64 = (1..=r).map(|k| k as f64).product();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut minor = ComplexMatrix::zeros(r, r);
    let mut col = 0;
    for_each_multiset(q, r, |multi| {
        let mut arrangements = Vec::new();
        let mut arrangement = multi.to_vec();
        loop {
            arrangements.push(arrangement.clone());
            if !next_permutation(&mut arrangement) {
                break;
            }
        }
        let scale = c(1.0 / ((arrangements.len() as f64).sqrt() * r_fact.sqrt()));
        for (row, target) in targets.iter().enumerate() {
            let mut acc = c(0.0);
            for jp in &arrangements {
                for k in 0..r {
                    for (l, &i) in target.iter().enumerate() {
                        minor[(k, l)] = ops[k][(i, jp[k])];
                    }
                }
                acc += minor.clone().determinant();
            }
            out[(row, col)] = acc * scale;
        }
        col += 1;
    });
    Ok(out)
}

/// Reference path: `antisym_basis(p,r)* · wedge_operator(ops) · sym_basis(q,r)`.
pub fn wedge_restricted_full(ops: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (p, q) = common_shape(ops)?;
    let r = ops.len();
    if checked_pow(p, r) > FULL_PATH_LIMIT || checked_pow(q, r) > FULL_PATH_LIMIT {
        return Err(Error::ResourceGuard(format!(
            "full wedge path limited to p^r, q^r <= {FULL_PATH_LIMIT}"
        )));
    }
    let w = wedge_operator(ops)?;
    let a = antisym_basis(p, r)?;
    let s = sym_basis(q, r)?;
    Ok(a.adjoint() * w * s)
}

fn restricted(ops: &[ComplexMatrix], path: WedgePath) -> Result<ComplexMatrix> {
    match path {
        WedgePath::Compressed => wedge_restricted(ops),
        WedgePath::Full => wedge_restricted_full(ops),
    }
}

pub fn wedge_invariants(v: &IsometryTuple, rel_tol: f64) -> Result<WedgeInvariant> {
    wedge_invariants_with(v, rel_tol, WedgePath::Compressed)
}

pub fn wedge_invariants_with(v: &IsometryTuple, rel_tol: f64, path: WedgePath) -> Result<WedgeInvariant> {
    let forward = numerical_rank(&restricted(v.components(), path)?, rel_tol)?;
    let adjoint = numerical_rank(&restricted(&v.adjoints(), path)?, rel_tol)?;
    Ok(WedgeInvariant {
        w: forward.rank,
        w_star: adjoint.rank,
        sv_w: forward.singular_values,
        sv_w_star: adjoint.singular_values,
        rel_tol,
    })
}

/// `‖G ∧ G‖_F / ‖G‖_F²` where `G ∧ G` is the second compound of `G`: the
/// degree-two polynomial whose zero set is `{rank G ≤ 1}`.
pub fn second_compound_ratio(g: &ComplexMatrix) -> f64 {
    let scale: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if scale == 0.0 {
        return 0.0;
    }
    let (rows, cols) = g.shape();
    let mut acc = 0.0;
    for i in 0..rows {
        for k in i + 1..rows {
            for j in 0..cols {
                for l in j + 1..cols {
                    let minor = g[(i, j)] * g[(k, l)] - g[(i, l)] * g[(k, j)];
                    acc += minor.norm_sqr();
                }
            }
        }
    }
    acc.sqrt() / scale
}

/// Relative residuals of the polynomial conditions `w ≤ 1` and `w* ≤ 1`.
pub fn subvariety_residuals(v: &IsometryTuple) -> Result<(f64, f64)> {
    Ok((
        second_compound_ratio(&wedge_restricted(v.components())?),
        second_compound_ratio(&wedge_restricted(&v.adjoints())?),
    ))
}

/// Partial isometries on the split basis `{e_1..e_r, f_1..f_r, g_1..g_s}`:
/// `v_k e_i = δ_ki e'_1`, `v_k f_i = δ_ki f'_1`, and `v_1 g_j = g'_j`.
/// The adjoint wedge sends `e'_1^{⊗r}` and `f'_1^{⊗r}` to the orthogonal
/// vectors `e_1∧⋯∧e_r` and `f_1∧⋯∧f_r`, so `w* ≥ 2`.
pub fn witness_tuple(n: usize, m: usize, r: usize) -> Result<IsometryTuple> {
    if r == 0 || 2 * r > n || n > m {
        return Err(Error::Precondition(format!(
            "witness tuple needs 1 <= r, 2r <= n <= m; got (n, m, r) = ({n}, {m}, {r})"
        )));
    }
    let e = |i: usize| i;
    let f = |i: usize| r + i;
    let g = |j: usize| 2 * r + j;
    let mut components = vec![ComplexMatrix::zeros(m, n); r];
    for (k, vk) in components.iter_mut().enumerate() {
        vk[(e(0), e(k))] = c(1.0);
        vk[(f(0), f(k))] = c(1.0);
    }
    for j in 0..n - 2 * r {
        components[0][(g(j), g(j))] = c(1.0);
    }
    IsometryTuple::new(components)
}
