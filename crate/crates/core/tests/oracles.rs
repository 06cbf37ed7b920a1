use entangle_core::experiment::{omega_from_spec, run_experiment, ExperimentConfig, OmegaSpec};
use entangle_core::io::{write_json, MatrixJson};
use entangle_core::separability::{ball_test, decide, ppt_test, wedge_test, witness_from_pure, Status};
use entangle_core::states::{purify, state_from_tuple, MarginalState};
use entangle_core::stiefel::{act_left, random_unitary, sample_haar_tuple, SeededRng};
use entangle_core::tensor::{c, kron_vec, numerical_rank, ComplexMatrix, ComplexVector};
use entangle_core::Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Exact element of `Q(i)`.
#[derive(Clone, Debug, PartialEq)]
struct GaussianRational {
    re: BigRational,
    im: BigRational,
}

impl GaussianRational {
    fn from_f64(re: f64, im: f64) -> Self {
        Self {
            re: BigRational::from_float(re).unwrap(),
            im: BigRational::from_float(im).unwrap(),
        }
    }

    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    fn mul(&self, o: &Self) -> Self {
        Self {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            re: &self.re - &o.re,
            im: &self.im - &o.im,
        }
    }

    fn inv(&self) -> Self {
        let norm = &self.re * &self.re + &self.im * &self.im;
        Self {
            re: &self.re / &norm,
            im: -(&self.im / &norm),
        }
    }
}

/// Rank by fraction-exact Gaussian elimination.
fn exact_rank(mut rows: Vec<Vec<GaussianRational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = rows[rank][col].inv();
        let (head, tail) = rows.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        for row in tail {
            let factor = row[col].mul(&inv);
            for (entry, p) in row.iter_mut().zip(pivot_row).skip(col) {
                *entry = entry.sub(&factor.mul(p));
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn ginibre_rank_matches_exact_elimination() {
    let g = SeededRng::new(2024, 0).ginibre(5, 3);
    let rows: Vec<Vec<GaussianRational>> = (0..5)
        .map(|i| (0..3).map(|j| GaussianRational::from_f64(g[(i, j)].re, g[(i, j)].im)).collect())
        .collect();
    assert_eq!(exact_rank(rows), 3);
    assert_eq!(numerical_rank(&g, 1e-10).unwrap().rank, 3);
}

#[test]
fn exact_elimination_detects_dependence() {
    let one = || GaussianRational {
        re: BigRational::one(),
        im: BigRational::zero(),
    };
    let two = || GaussianRational {
        re: BigRational::from_integer(BigInt::from(2)),
        im: BigRational::zero(),
    };
    let rows = vec![vec![one(), two()], vec![two(), two().mul(&two())]];
    assert_eq!(exact_rank(rows), 1);
    assert!(BigRational::from_float(-0.5).unwrap().is_negative());
}

#[test]
fn isometry_second_moment() {
    let (n, m, r) = (2, 2, 2);
    let samples = 5000;
    let mut mean = ComplexMatrix::zeros(r * m, r * m);
    for i in 0..samples {
        let q = sample_haar_tuple(n, m, r, &mut SeededRng::new(80, i)).unwrap().stacked();
        mean += &q * q.adjoint();
    }
    mean /= c(samples as f64);
    let target = ComplexMatrix::identity(r * m, r * m) * c(n as f64 / (r * m) as f64);
    assert!(entangle_core::tensor::max_abs_diff(&mean, &target) < 0.05);
}

#[test]
fn haar_unitary_first_moment() {
    let mut rng = SeededRng::new(81, 0);
    let mean: f64 = (0..5000).map(|_| random_unitary(3, &mut rng)[(0, 0)].norm_sqr()).sum::<f64>() / 5000.0;
    assert!((mean - 1.0 / 3.0).abs() < 0.02);
}

#[test]
fn left_invariance_of_quadratic_statistic() {
    let (n, m, r) = (2, 2, 2);
    let mut rng = SeededRng::new(82, 0);
    let w = random_unitary(r * m, &mut rng);
    let p = {
        let x = rng.gaussian_vector(r * m);
        let x = &x / c(x.norm());
        &x * x.adjoint()
    };
    let stat = |q: &ComplexMatrix| (&p * q * q.adjoint()).trace().re;
    let samples = 5000;
    let mut plain = Vec::with_capacity(samples);
    let mut moved = Vec::with_capacity(samples);
    for i in 0..samples as u64 {
        let v = sample_haar_tuple(n, m, r, &mut SeededRng::new(83, i)).unwrap();
        plain.push(stat(&v.stacked()));
        let u = sample_haar_tuple(n, m, r, &mut SeededRng::new(84, i)).unwrap();
        moved.push(stat(&act_left(&w, &u).unwrap().stacked()));
    }
    let summary = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (mean, var / xs.len() as f64)
    };
    let (ma, va) = summary(&plain);
    let (mb, vb) = summary(&moved);
    assert!((ma - mb).abs() < 4.0 * (va + vb).sqrt(), "{ma} vs {mb}");
}

#[test]
fn witness_positive_on_products() {
    let (m, n) = (2, 3);
    let mut rng = SeededRng::new(85, 0);
    for _ in 0..10 {
        let z = rng.gaussian_vector(m * n);
        let w = witness_from_pure(&(&z / c(z.norm())), m, n).unwrap();
        assert!(w.alpha < 1.0);
        for _ in 0..10_000 {
            let x = rng.gaussian_vector(m);
            let y = rng.gaussian_vector(n);
            let prod = kron_vec(&(&x / c(x.norm())), &(&y / c(y.norm())));
            assert!(w.value_on_vector(&prod) >= -1e-10);
        }
    }
}

#[test]
fn no_false_separability_on_wedge_certified_states() {
    for (n, m, r) in [(2, 2, 1), (2, 3, 1), (2, 3, 2)] {
        let xi = purify(&MarginalState::maximally_mixed(n));
        for i in 0..300 {
            let v = sample_haar_tuple(n, m, r, &mut SeededRng::new(86, i)).unwrap();
            if wedge_test(&v).unwrap().is_some() {
                let rho = state_from_tuple(&v, &xi).unwrap();
                let ppt = ppt_test(&rho, m, n).unwrap();
                assert!(ppt.entangled, "({n},{m},{r}) stream {i}");
                assert!(!ball_test(&rho, m, n).unwrap().separable);
            }
        }
    }
}

#[test]
fn rank_one_extensions_are_entangled() {
    let xi = purify(&MarginalState::maximally_mixed(4));
    for i in 0..1000 {
        let v = sample_haar_tuple(4, 4, 1, &mut SeededRng::new(87, i)).unwrap();
        assert_eq!(decide(&v, &xi).unwrap().status, Status::CertifiedEntangled);
    }
}

fn write_state(name: &str, diag: &[f64]) -> std::path::PathBuf {
    let d = diag.len();
    let m = ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(d, diag.iter().map(|&x| c(x))));
    let path = std::env::temp_dir().join(format!("entangle-{}-{name}.json", std::process::id()));
    write_json(&path, &MatrixJson::from(&m)).unwrap();
    path
}

#[test]
fn omega_file_validation() {
    let good = write_state("good", &[0.7, 0.3]);
    let omega = omega_from_spec(&OmegaSpec::File(good.clone()), 2).unwrap();
    assert!((omega.density().eigenvalues()[0] - 0.7).abs() < 1e-15);

    let short = write_state("short", &[0.6, 0.3]);
    assert!(matches!(
        omega_from_spec(&OmegaSpec::File(short.clone()), 2),
        Err(Error::InvalidState(_))
    ));
    let singular = write_state("singular", &[1.0, 0.0]);
    assert!(matches!(
        omega_from_spec(&OmegaSpec::File(singular.clone()), 2),
        Err(Error::NotFaithful(_))
    ));
    for p in [good, short, singular] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn law_does_not_depend_on_omega() {
    let run = |omega: OmegaSpec, n: usize, r: usize, samples: u64| {
        let mut cfg = ExperimentConfig::new(n, n, vec![r], samples, 88);
        cfg.omega = omega;
        run_experiment(&cfg, 4).unwrap().records.remove(0)
    };
    let a = run(OmegaSpec::MaximallyMixed, 4, 2, 200);
    let b = run(OmegaSpec::RandomFaithful(3), 4, 2, 200);
    assert_eq!((a.entangled, b.entangled), (200, 200));

    // Same streams give the same tuples; NPT status is preserved by the local
    // invertible map between the two states, so the counts agree exactly.
    let a = run(OmegaSpec::MaximallyMixed, 2, 4, 2000);
    let b = run(OmegaSpec::RandomFaithful(3), 2, 4, 2000);
    let pa = a.npt as f64 / 2000.0;
    let pb = b.npt as f64 / 2000.0;
    let se = (pa * (1.0 - pa) / 2000.0 + pb * (1.0 - pb) / 2000.0).sqrt();
    assert!((pa - pb).abs() <= 4.0 * se, "{pa} vs {pb}");
    assert!(0.0 < pa && pa < 1.0);
}
