//! The limiting kernels of the two gradient blocks and their normalized
//! kernel matrices.
//!
//! With `b` uniform on the sphere,
//!
//! ```text
//! k_a(x, x') = E[σ(bᵀx) σ(bᵀx')]            = (sin θ + (π − θ) cos θ) / (2π d)
//! k_b(x, x') = E[σ'(bᵀx) σ'(bᵀx')] ⟨x, x'⟩  = cos θ (π − θ) / (2π)
//! ```
//!
//! where `θ` is the angle between the inputs. The closed forms are the
//! degree-0 and degree-1 arc-cosine kernels, rescaled by `E[(bᵀx)²] = 1/d`
//! for the first one; both are certified against the Monte-Carlo estimators
//! in the test suite.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datagen::{check_unit, check_unit_rows, sphere_point};
use crate::linalg;
use crate::rng;
use crate::{fmt_f64, relu, relu_prime, Error, Result};

/// Inputs farther than this from the unit sphere are rejected.
pub const KERNEL_UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelMode {
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

impl KernelMode {
    pub fn label(&self) -> String {
        match self {
            KernelMode::ClosedForm => "closed_form".to_string(),
            KernelMode::MonteCarlo { samples, seed } => format!("monte_carlo(M={samples},seed={seed})"),
        }
    }
}

/// A kernel value with its Monte-Carlo standard error (zero in closed form).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// `(cos θ, sin θ, θ/π)` for the angle between unit vectors. Identical and
/// antipodal pairs are detected exactly, since `xᵀx` may round below 1.
fn angle(x: ArrayView1<f64>, xp: ArrayView1<f64>) -> (f64, f64, f64) {
    if x == xp {
        return (1.0, 0.0, 0.0);
    }
    if x.iter().zip(xp.iter()).all(|(a, b)| *a == -*b) {
        return (-1.0, 0.0, 1.0);
    }
    let c = x.dot(&xp).clamp(-1.0, 1.0);
    (c, (1.0 - c * c).max(0.0).sqrt(), c.acos() / PI)
}

pub fn kernel_a_closed(x: ArrayView1<f64>, xp: ArrayView1<f64>) -> f64 {
    let (c, s, r) = angle(x, xp);
    (s / PI + (1.0 - r) * c) / (2.0 * x.len() as f64)
}

pub fn kernel_b_closed(x: ArrayView1<f64>, xp: ArrayView1<f64>) -> f64 {
    let (c, _, r) = angle(x, xp);
    c * (1.0 - r) / 2.0
}

fn check_pair(x: ArrayView1<f64>, xp: ArrayView1<f64>) -> Result<()> {
    if x.len() != xp.len() {
        return Err(Error::dims(format!("inputs have lengths {} and {}", x.len(), xp.len())));
    }
    if x.is_empty() {
        return Err(Error::invalid("inputs are empty"));
    }
    check_unit(x, KERNEL_UNIT_TOL)?;
    check_unit(xp, KERNEL_UNIT_TOL)
}

#[derive(Clone, Copy)]
enum Which {
    A,
    B,
}

fn monte_carlo(which: Which, x: ArrayView1<f64>, xp: ArrayView1<f64>, samples: usize, rng: &mut rng::LabRng) -> KernelEstimate {
    let d = x.len();
    let cos = x.dot(&xp);
    let mut b = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        sphere_point(rng, &mut b);
        let bv = ArrayView1::from(b.as_slice());
        let (u, v) = (bv.dot(&x), bv.dot(&xp));
        let val = match which {
            Which::A => relu(u) * relu(v),
            Which::B => relu_prime(u) * relu_prime(v) * cos,
        };
        sum += val;
        sum_sq += val * val;
    }
    let m = samples as f64;
    let mean = sum / m;
    let std_err = if samples > 1 {
        ((sum_sq / m - mean * mean).max(0.0) / (m - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    KernelEstimate { value: mean, std_err }
}

fn evaluate(which: Which, x: ArrayView1<f64>, xp: ArrayView1<f64>, mode: KernelMode, tags: &[u64]) -> Result<KernelEstimate> {
    check_pair(x, xp)?;
    match mode {
        KernelMode::ClosedForm => {
            let value = match which {
                Which::A => kernel_a_closed(x, xp),
                Which::B => kernel_b_closed(x, xp),
            };
            Ok(KernelEstimate { value, std_err: 0.0 })
        }
        KernelMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("Monte-Carlo mode needs at least one sample"));
            }
            let mut r = rng::stream(seed, tags);
            Ok(monte_carlo(which, x, xp, samples, &mut r))
        }
    }
}

/// `k_a(x, x') = E_b[σ(bᵀx) σ(bᵀx')]`.
pub fn kernel_a(x: ArrayView1<f64>, xp: ArrayView1<f64>, mode: KernelMode) -> Result<KernelEstimate> {
    evaluate(Which::A, x, xp, mode, &[rng::TAG_KERNEL_MC, 0])
}

/// `k_b(x, x') = E_b[σ'(bᵀx) σ'(bᵀx') ⟨x, x'⟩]`.
pub fn kernel_b(x: ArrayView1<f64>, xp: ArrayView1<f64>, mode: KernelMode) -> Result<KernelEstimate> {
    evaluate(Which::B, x, xp, mode, &[rng::TAG_KERNEL_MC, 1])
}

/// Normalized kernel matrices `Ka_ij = k_a(x_i, x_j)/n`, `Kb_ij = k_b(x_i, x_j)/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    pub ka: Array2<f64>,
    pub kb: Array2<f64>,
    /// Entrywise standard errors in Monte-Carlo mode.
    pub ka_std_err: Option<Array2<f64>>,
    pub kb_std_err: Option<Array2<f64>>,
}

impl KernelPair {
    pub fn n(&self) -> usize {
        self.ka.nrows()
    }
}

/// Assembles both kernel matrices. In Monte-Carlo mode each ordered pair
/// `(i, j)` draws from its own substream and the `(i, j)`, `(j, i)` estimates
/// are averaged, so the result is exactly symmetric.
pub fn kernel_matrices(inputs: ArrayView2<f64>, mode: KernelMode) -> Result<KernelPair> {
    let (n, d) = inputs.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("kernel matrices need a non-empty input matrix"));
    }
    check_unit_rows(inputs, KERNEL_UNIT_TOL)?;
    let nf = n as f64;
    let mut ka = Array2::<f64>::zeros((n, n));
    let mut kb = Array2::<f64>::zeros((n, n));
    match mode {
        KernelMode::ClosedForm => {
            for i in 0..n {
                for j in i..n {
                    let (xi, xj) = (inputs.row(i), inputs.row(j));
                    let a = kernel_a_closed(xi, xj) / nf;
                    let b = kernel_b_closed(xi, xj) / nf;
                    ka[[i, j]] = a;
                    ka[[j, i]] = a;
                    kb[[i, j]] = b;
                    kb[[j, i]] = b;
                }
            }
            Ok(KernelPair { ka, kb, ka_std_err: None, kb_std_err: None })
        }
        KernelMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("Monte-Carlo mode needs at least one sample"));
            }
            let mut sa = Array2::<f64>::zeros((n, n));
            let mut sb = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let (xi, xj) = (inputs.row(i), inputs.row(j));
                    let est = |which: Which, kind: u64, p: usize, q: usize| {
                        let mut r = rng::stream(seed, &[rng::TAG_KERNEL_MC, 2 + kind, p as u64, q as u64]);
                        monte_carlo(which, xi, xj, samples, &mut r)
                    };
                    let (a, b) = if i == j {
                        (est(Which::A, 0, i, j), est(Which::B, 1, i, j))
                    } else {
                        let avg = |e1: KernelEstimate, e2: KernelEstimate| KernelEstimate {
                            value: 0.5 * (e1.value + e2.value),
                            std_err: 0.5 * (e1.std_err * e1.std_err + e2.std_err * e2.std_err).sqrt(),
                        };
                        (
                            avg(est(Which::A, 0, i, j), est(Which::A, 0, j, i)),
                            avg(est(Which::B, 1, i, j), est(Which::B, 1, j, i)),
                        )
                    };
                    for (p, q) in [(i, j), (j, i)] {
                        ka[[p, q]] = a.value / nf;
                        kb[[p, q]] = b.value / nf;
                        sa[[p, q]] = a.std_err / nf;
                        sb[[p, q]] = b.std_err / nf;
                    }
                }
            }
            Ok(KernelPair { ka, kb, ka_std_err: Some(sa), kb_std_err: Some(sb) })
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix to within `tol`.
pub fn min_eigenvalue(a: ArrayView2<f64>, tol: f64) -> Result<f64> {
    linalg::min_eigenvalue(a, tol)
}

/// Smallest eigenvalues of the two kernel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_n: f64,
    pub n: usize,
    pub d: usize,
    pub mode: String,
}

impl SpectralSummary {
    pub fn from_kernels(k: &KernelPair, d: usize, mode: KernelMode) -> Result<Self> {
        let lambda_a = min_eigenvalue(k.ka.view(), linalg::default_tol(k.ka.view()))?;
        let lambda_b = min_eigenvalue(k.kb.view(), linalg::default_tol(k.kb.view()))?;
        Ok(SpectralSummary {
            lambda_a,
            lambda_b,
            lambda_n: lambda_a.min(lambda_b),
            n: k.n(),
            d,
            mode: mode.label(),
        })
    }

    /// Kernel matrices and spectra for a set of inputs.
    pub fn for_inputs(inputs: ArrayView2<f64>, mode: KernelMode) -> Result<(KernelPair, Self)> {
        let k = kernel_matrices(inputs, mode)?;
        let s = SpectralSummary::from_kernels(&k, inputs.ncols(), mode)?;
        Ok((k, s))
    }

    /// Both smallest eigenvalues strictly positive.
    pub fn assumption_holds(&self) -> bool {
        self.lambda_a > 0.0 && self.lambda_b > 0.0
    }
}

/// Writes a matrix as row-major CSV with 17 significant digits.
pub fn write_matrix_csv<W: Write>(a: ArrayView2<f64>, mut w: W) -> Result<()> {
    for row in a.rows() {
        let fields: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn e(d: usize, i: usize) -> Array1<f64> {
        let mut v = Array1::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn trivial_angles() {
        let d = 4;
        let x = e(d, 0);
        let neg = -&x;
        let orth = e(d, 1);
        let cf = KernelMode::ClosedForm;
        assert!((kernel_a(x.view(), x.view(), cf).unwrap().value - 1.0 / 8.0).abs() < 1e-15);
        assert!(kernel_a(x.view(), neg.view(), cf).unwrap().value.abs() < 1e-15);
        assert!((kernel_b(x.view(), x.view(), cf).unwrap().value - 0.5).abs() < 1e-15);
        assert!(kernel_b(x.view(), neg.view(), cf).unwrap().value.abs() < 1e-15);
        assert!(kernel_b(x.view(), orth.view(), cf).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_value_d10() {
        let x = e(10, 0);
        let y = e(10, 3);
        let v = kernel_a(x.view(), y.view(), KernelMode::ClosedForm).unwrap().value;
        assert!((v - 1.0 / (2.0 * PI * 10.0)).abs() < 1e-15);
        assert!((v - 0.0159155).abs() < 1e-7);
    }

    #[test]
    fn monte_carlo_antipodal_is_exact_zero() {
        let x = e(3, 2);
        let neg = -&x;
        let mode = KernelMode::MonteCarlo { samples: 1000, seed: 5 };
        assert_eq!(kernel_a(x.view(), neg.view(), mode).unwrap().value, 0.0);
        assert_eq!(kernel_b(x.view(), neg.view(), mode).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_non_unit_inputs() {
        let x = array![1.0, 1.0];
        let y = array![1.0, 0.0];
        assert!(matches!(
            kernel_a(x.view(), y.view(), KernelMode::ClosedForm),
            Err(Error::NotUnitNorm { .. })
        ));
    }

    #[test]
    fn single_point_matrices() {
        let x = array![[0.0, 1.0, 0.0]];
        let k = kernel_matrices(x.view(), KernelMode::ClosedForm).unwrap();
        assert!((k.ka[[0, 0]] - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.kb[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn antipodal_pair_has_zero_off_diagonals() {
        let x = array![[0.6, 0.8], [-0.6, -0.8]];
        for mode in [KernelMode::ClosedForm, KernelMode::MonteCarlo { samples: 2000, seed: 1 }] {
            let k = kernel_matrices(x.view(), mode).unwrap();
            assert!(k.ka[[0, 1]].abs() < 1e-15 && k.kb[[1, 0]].abs() < 1e-15);
        }
    }

    #[test]
    fn monte_carlo_matrices_are_symmetric() {
        let x = crate::datagen::sample_sphere(4, 3, 2).unwrap();
        let k = kernel_matrices(x.view(), KernelMode::MonteCarlo { samples: 500, seed: 3 }).unwrap();
        assert_eq!(linalg::asymmetry(k.ka.view()), 0.0);
        assert_eq!(linalg::asymmetry(k.kb.view()), 0.0);
    }

    #[test]
    fn kernel_a_decreases_in_angle() {
        let d = 5;
        let x = e(d, 0);
        let mut prev = f64::INFINITY;
        for step in 0..=200 {
            let th = PI * step as f64 / 200.0;
            let mut y = Array1::zeros(d);
            y[0] = th.cos();
            y[1] = th.sin();
            let v = kernel_a_closed(x.view(), y.view());
            if step > 0 {
                assert!(v < prev, "not decreasing at step {step}");
            }
            prev = v;
        }
    }

    #[test]
    fn spectral_summary_is_consistent() {
        let x = crate::datagen::sample_sphere(6, 4, 8).unwrap();
        let (k, s) = SpectralSummary::for_inputs(x.view(), KernelMode::ClosedForm).unwrap();
        assert!(s.assumption_holds());
        assert!(s.lambda_n <= s.lambda_a && s.lambda_n <= s.lambda_b);
        let min_diag = (0..6).map(|i| k.ka[[i, i]]).fold(f64::INFINITY, f64::min);
        assert!(s.lambda_a <= min_diag && min_diag <= 1.0 / 6.0);
        let json = serde_json::to_value(&s).unwrap();
        for key in ["lambda_a", "lambda_b", "lambda_n", "n", "d", "mode"] {
            assert!(json.get(key).is_some());
        }
    }
}
