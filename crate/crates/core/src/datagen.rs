//! Inputs on the unit sphere and the target-function families.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, LabRng};
use crate::{fmt_f64, relu, Error, Result};

/// Tolerance on `‖x_i‖ = 1` for stored datasets.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Training or test data: unit-norm inputs with labels bounded by one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Array1<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::dims(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        check_unit_rows(inputs.view(), UNIT_NORM_TOL)?;
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, y)| !(y.abs() <= 1.0)) {
            return Err(Error::invalid(format!("label {i} = {y} violates |y| <= 1")));
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> ArrayView1<'_, f64> {
        self.labels.view()
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn d(&self) -> usize {
        self.inputs.ncols()
    }

    /// Writes `x0,...,x{d-1},y` with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.d();
        let header: Vec<String> = (0..d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (row, y) in self.inputs.rows().into_iter().zip(self.labels.iter()) {
            let fields: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty csv"))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"y") {
            return Err(Error::invalid("csv header must be x0,...,x{d-1},y"));
        }
        let d = cols.len() - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.trim().split(',').map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::invalid(format!("csv line {}: {e}", lineno + 2)))?;
            if vals.len() != d + 1 {
                return Err(Error::dims(format!("csv line {} has {} fields", lineno + 2, vals.len())));
            }
            xs.extend_from_slice(&vals[..d]);
            ys.push(vals[d]);
        }
        let n = ys.len();
        let inputs = Array2::from_shape_vec((n, d), xs).map_err(|e| Error::dims(e.to_string()))?;
        Dataset::new(inputs, Array1::from(ys))
    }
}

pub(crate) fn check_unit_rows(x: ArrayView2<f64>, tol: f64) -> Result<()> {
    for (row, r) in x.rows().into_iter().enumerate() {
        let norm = r.dot(&r).sqrt();
        if !((norm - 1.0).abs() <= tol) {
            return Err(Error::NotUnitNorm { row, norm });
        }
    }
    Ok(())
}

pub(crate) fn check_unit(x: ArrayView1<f64>, tol: f64) -> Result<()> {
    let norm = x.dot(&x).sqrt();
    if !((norm - 1.0).abs() <= tol) {
        return Err(Error::NotUnitNorm { row: 0, norm });
    }
    Ok(())
}

/// Draws one point uniformly from `S^{d-1}` by normalizing a standard
/// Gaussian vector; the (probability zero) zero vector is redrawn.
pub fn sphere_point(rng: &mut LabRng, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *v = g;
            s += g * g;
        }
        if s > 0.0 {
            let norm = s.sqrt();
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// `n` i.i.d. uniform points on `S^{d-1}`, deterministic in `seed`.
pub fn sample_sphere(n: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_SPHERE]);
    Ok(sphere_rows(&mut rng, n, d))
}

pub(crate) fn sphere_rows(rng: &mut LabRng, n: usize, d: usize) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((n, d));
    for mut row in x.rows_mut() {
        sphere_point(rng, row.as_slice_mut().expect("standard layout"));
    }
    x
}

/// `E_b[σ(b₁)]` for `b` uniform on `S^{d-1}`: half of `E|b₁| = Γ(d/2) / (√π Γ((d+1)/2))`.
pub fn mean_relu_coordinate(d: usize) -> f64 {
    // Γ(d/2)/Γ((d+1)/2) by the recursion r(d+2) = r(d) · (d/2)/((d+1)/2)
    let (mut r, mut k) = if d % 2 == 1 {
        (std::f64::consts::PI.sqrt(), 1usize) // Γ(1/2)/Γ(1)
    } else {
        (2.0 / std::f64::consts::PI.sqrt(), 2usize) // Γ(1)/Γ(3/2)
    };
    while k < d {
        r *= k as f64 / (k as f64 + 1.0);
        k += 2;
    }
    0.5 * r / std::f64::consts::PI.sqrt()
}

/// Coefficient function `a*(b)` of an integral-representation target
/// `f*(x) = E_{b∼π₀}[a*(b) σ(bᵀx)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientFn {
    /// `a*(b) = value`.
    Constant { value: f64 },
    /// `a*(b) = scale · wᵀb` with unit `w`.
    Linear { direction: Vec<f64>, scale: f64 },
}

impl CoefficientFn {
    pub fn eval(&self, b: ArrayView1<f64>) -> f64 {
        match self {
            CoefficientFn::Constant { value } => *value,
            CoefficientFn::Linear { direction, scale } => {
                scale * direction.iter().zip(b.iter()).map(|(w, v)| w * v).sum::<f64>()
            }
        }
    }

    /// `sup_b |a*(b)|` over the sphere.
    pub fn sup_abs(&self) -> f64 {
        match self {
            CoefficientFn::Constant { value } => value.abs(),
            CoefficientFn::Linear { scale, .. } => scale.abs(),
        }
    }

    /// Exact value of the represented function at `x`.
    pub fn represented_value(&self, x: ArrayView1<f64>) -> f64 {
        let d = x.len();
        match self {
            CoefficientFn::Constant { value } => value * mean_relu_coordinate(d),
            // E[(wᵀb) σ(bᵀx)] = ½ E[(wᵀb)(bᵀx)] = wᵀx / (2d)
            CoefficientFn::Linear { direction, scale } => {
                scale * direction.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() / (2.0 * d as f64)
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            CoefficientFn::Constant { value } if !value.is_finite() => Err(Error::invalid("non-finite coefficient")),
            CoefficientFn::Linear { direction, scale } => {
                if direction.len() != d {
                    return Err(Error::dims(format!("coefficient direction has length {}, inputs have d = {d}", direction.len())));
                }
                if !scale.is_finite() {
                    return Err(Error::invalid("non-finite coefficient scale"));
                }
                check_unit(ArrayView1::from(direction.as_slice()), 1e-9)
            }
            _ => Ok(()),
        }
    }
}

/// The three target families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    /// Labels drawn i.i.d. from `Uniform[-1, 1]`.
    RandomLabels,
    /// `f*(x) = σ(w*ᵀx)`.
    OneNeuron { direction: Vec<f64> },
    /// `f*(x) = E_b[a*(b) σ(bᵀx)]` with `sup |a*| ≤ gamma`, `gamma ≥ 1`.
    BarronDensity { coefficient: CoefficientFn, gamma: f64 },
}

impl TargetFunction {
    pub fn one_neuron(direction: Vec<f64>) -> Result<Self> {
        check_unit(ArrayView1::from(direction.as_slice()), 1e-12)?;
        Ok(TargetFunction::OneNeuron { direction })
    }

    /// One-neuron target along the first coordinate axis.
    pub fn one_neuron_e1(d: usize) -> Self {
        let mut direction = vec![0.0; d];
        direction[0] = 1.0;
        TargetFunction::OneNeuron { direction }
    }

    pub fn barron(coefficient: CoefficientFn, gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma = {gamma} must be finite and >= 1")));
        }
        if coefficient.sup_abs() > gamma {
            return Err(Error::CoefficientBound { sampled: coefficient.sup_abs(), gamma });
        }
        Ok(TargetFunction::BarronDensity { coefficient, gamma })
    }

    pub(crate) fn validate_dim(&self, d: usize) -> Result<()> {
        match self {
            TargetFunction::RandomLabels => Ok(()),
            TargetFunction::OneNeuron { direction } => {
                if direction.len() != d {
                    return Err(Error::dims(format!("target direction has length {}, inputs have d = {d}", direction.len())));
                }
                check_unit(ArrayView1::from(direction.as_slice()), 1e-12)
            }
            TargetFunction::BarronDensity { coefficient, .. } => coefficient.validate(d),
        }
    }

    /// Noiseless target value. Barron targets use the exact integral.
    pub fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        match self {
            TargetFunction::RandomLabels => Err(Error::invalid("random labels have no target function")),
            TargetFunction::OneNeuron { direction } => {
                Ok(relu(direction.iter().zip(x.iter()).map(|(w, v)| w * v).sum()))
            }
            TargetFunction::BarronDensity { coefficient, .. } => Ok(coefficient.represented_value(x)),
        }
    }
}

/// Labels together with diagnostics of how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub values: Array1<f64>,
    /// Largest Monte-Carlo standard error over samples (Barron targets only).
    pub max_std_err: Option<f64>,
    /// Number of entries clamped into `[-1, 1]`.
    pub clamped: usize,
}

/// Labels for `inputs` under `target`.
///
/// Barron targets are evaluated by plain Monte-Carlo over `quadrature_size`
/// sphere samples shared across inputs; entries exceeding one in magnitude are
/// clamped and counted.
pub fn make_labels(target: &TargetFunction, inputs: ArrayView2<f64>, seed: u64, quadrature_size: usize) -> Result<Labels> {
    let (n, d) = inputs.dim();
    check_unit_rows(inputs, 1e-9)?;
    target.validate_dim(d)?;
    match target {
        TargetFunction::RandomLabels => {
            let mut rng = rng::stream(seed, &[rng::TAG_LABELS]);
            let values = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0..=1.0)));
            Ok(Labels { values, max_std_err: None, clamped: 0 })
        }
        TargetFunction::OneNeuron { .. } => {
            let values = Array1::from_iter(inputs.rows().into_iter().map(|x| target.value(x).expect("validated")));
            Ok(Labels { values, max_std_err: None, clamped: 0 })
        }
        TargetFunction::BarronDensity { coefficient, gamma } => {
            if quadrature_size == 0 {
                return Err(Error::invalid("quadrature_size must be at least 1"));
            }
            let mut rng = rng::stream(seed, &[rng::TAG_QUADRATURE]);
            let mut b = vec![0.0; d];
            let mut sum = Array1::<f64>::zeros(n);
            let mut sum_sq = Array1::<f64>::zeros(n);
            for _ in 0..quadrature_size {
                sphere_point(&mut rng, &mut b);
                let bv = ArrayView1::from(b.as_slice());
                let coef = coefficient.eval(bv);
                if coef.abs() > *gamma {
                    return Err(Error::CoefficientBound { sampled: coef.abs(), gamma: *gamma });
                }
                for (i, x) in inputs.rows().into_iter().enumerate() {
                    let v = coef * relu(x.dot(&bv));
                    sum[i] += v;
                    sum_sq[i] += v * v;
                }
            }
            let q = quadrature_size as f64;
            let mut values = sum.mapv(|s| s / q);
            let max_std_err = if quadrature_size > 1 {
                values
                    .iter()
                    .zip(sum_sq.iter())
                    .map(|(mean, sq)| ((sq / q - mean * mean).max(0.0) / (q - 1.0)).sqrt())
                    .fold(0.0f64, f64::max)
            } else {
                f64::INFINITY
            };
            let mut clamped = 0;
            values.mapv_inplace(|v| {
                if v.abs() > 1.0 {
                    clamped += 1;
                    v.clamp(-1.0, 1.0)
                } else {
                    v
                }
            });
            Ok(Labels { values, max_std_err: Some(max_std_err), clamped })
        }
    }
}

/// Samples `n` inputs and labels them under `target`, using independent
/// substreams of `seed` for inputs and labels.
pub fn make_dataset(target: &TargetFunction, n: usize, d: usize, seed: u64, quadrature_size: usize) -> Result<Dataset> {
    let inputs = sample_sphere(n, d, seed)?;
    let labels = make_labels(target, inputs.view(), seed, quadrature_size)?;
    Dataset::new(inputs, labels.values)
}
