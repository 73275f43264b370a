//! Oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use lazylab::datagen::Dataset;
use lazylab::model::{self, NetParams};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn na_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(a).symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest `|b_kᵀx_i|`: the distance of the configuration from a ReLU kink.
pub fn min_kink(p: &NetParams, data: &Dataset) -> f64 {
    p.b.dot(&data.inputs().t()).iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Central differences of the empirical risk in every parameter.
pub fn finite_difference(p: &NetParams, data: &Dataset, h: f64) -> (Array1<f64>, Array2<f64>) {
    let risk = |q: &NetParams| model::empirical_risk(q, data).unwrap();
    let mut ga = Array1::zeros(p.m());
    let mut gb = Array2::zeros((p.m(), p.d()));
    for k in 0..p.m() {
        let mut q = p.clone();
        q.a[k] += h;
        let up = risk(&q);
        q.a[k] -= 2.0 * h;
        ga[k] = (up - risk(&q)) / (2.0 * h);
        for j in 0..p.d() {
            let mut q = p.clone();
            q.b[[k, j]] += h;
            let up = risk(&q);
            q.b[[k, j]] -= 2.0 * h;
            gb[[k, j]] = (up - risk(&q)) / (2.0 * h);
        }
    }
    (ga, gb)
}

/// `E[g(bᵀx, bᵀx')]` for uniform `b` on `S^{d-1}`, sampling only the
/// projection of `b` on `span(x, x')`.
pub fn projected_mc(x: &[f64], xp: &[f64], samples: usize, seed: u64) -> ((f64, f64), (f64, f64)) {
    let d = x.len();
    let c: f64 = x.iter().zip(xp).map(|(a, b)| a * b).sum();
    let s = (1.0 - c * c).max(0.0).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let chi = (d > 2).then(|| ChiSquared::new((d - 2) as f64).unwrap());
    let (mut sa, mut sa2, mut sb, mut sb2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let g1: f64 = StandardNormal.sample(&mut rng);
        let g2: f64 = StandardNormal.sample(&mut rng);
        let rest = chi.as_ref().map_or(0.0, |c| c.sample(&mut rng));
        let r = (g1 * g1 + g2 * g2 + rest).sqrt();
        // x = e1, x' = c e1 + s e2
        let u = g1 / r;
        let v = (c * g1 + s * g2) / r;
        let fa = u.max(0.0) * v.max(0.0);
        let fb = if u > 0.0 && v > 0.0 { c } else { 0.0 };
        sa += fa;
        sa2 += fa * fa;
        sb += fb;
        sb2 += fb * fb;
    }
    let m = samples as f64;
    let se = |s: f64, s2: f64| ((s2 / m - (s / m).powi(2)).max(0.0) / (m - 1.0)).sqrt();
    ((sa / m, se(sa, sa2)), (sb / m, se(sb, sb2)))
}

/// Exact solution of `ȧ = −(SᵀS a − Sᵀy)/n` from the spectrum of `SᵀS/n`.
pub fn linear_flow(s: &Array2<f64>, y: &Array1<f64>, a0: &Array1<f64>, t: f64) -> Array1<f64> {
    let n = s.nrows() as f64;
    let h = s.t().dot(s) / n;
    let g = s.t().dot(y) / n;
    let eig = to_na(&h).symmetric_eigen();
    let r0 = h.dot(a0) - &g;
    let q = &eig.eigenvectors;
    let mut out = a0.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = Array1::from_iter(q.column(k).iter().cloned());
        let w = if lam.abs() < 1e-14 { t } else { (1.0 - (-lam * t).exp()) / lam };
        out.scaled_add(-w * v.dot(&r0), &v);
    }
    out
}

