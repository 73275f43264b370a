//! Two-layer ReLU network `f(x; Θ) = Σ_k a_k σ(b_kᵀx)` and the random-feature
//! model with the first layer frozen at its initial value.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sphere_point, sphere_rows, Dataset, TargetFunction};
use crate::rng::{self, LabRng};
use crate::{relu, relu_prime, Error, Result};

/// Trainable state `Θ = (a, B)`; `b` holds the rows `b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsJson", into = "ParamsJson")]
pub struct NetParams {
    pub a: Array1<f64>,
    pub b: Array2<f64>,
    /// Initialization scale the parameters were drawn with.
    pub beta: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    m: usize,
    d: usize,
    beta: f64,
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

impl From<NetParams> for ParamsJson {
    fn from(p: NetParams) -> Self {
        ParamsJson {
            m: p.m(),
            d: p.d(),
            beta: p.beta,
            a: p.a.to_vec(),
            b: p.b.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl TryFrom<ParamsJson> for NetParams {
    type Error = Error;

    fn try_from(j: ParamsJson) -> Result<Self> {
        if j.a.len() != j.m || j.b.len() != j.m || j.b.iter().any(|r| r.len() != j.d) {
            return Err(Error::dims(format!("parameter arrays do not match m = {}, d = {}", j.m, j.d)));
        }
        let flat: Vec<f64> = j.b.into_iter().flatten().collect();
        let b = Array2::from_shape_vec((j.m, j.d), flat).map_err(|e| Error::dims(e.to_string()))?;
        NetParams::new(Array1::from(j.a), b, j.beta)
    }
}

impl NetParams {
    pub fn new(a: Array1<f64>, b: Array2<f64>, beta: f64) -> Result<Self> {
        if a.len() != b.nrows() {
            return Err(Error::dims(format!("a has length {} but B has {} rows", a.len(), b.nrows())));
        }
        if a.is_empty() || b.ncols() == 0 {
            return Err(Error::invalid("width and dimension must be at least 1"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(NetParams { a, b, beta })
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.b.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Initialization settings: `a_k = ±beta` with equal probability, `b_k`
/// uniform on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub m: usize,
    pub d: usize,
    pub beta: f64,
    pub seed: u64,
}

impl InitConfig {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 {
            return Err(Error::invalid("width and dimension must be at least 1"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }
}

/// Neuron-by-neuron initialization stream. Yields the same `(a_k, b_k)`
/// sequence as [`init_params`] without materializing `B`.
pub struct InitStream {
    cfg: InitConfig,
    signs: LabRng,
    dirs: LabRng,
    k: usize,
}

impl InitStream {
    pub fn new(cfg: InitConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(InitStream {
            cfg,
            signs: rng::stream(cfg.seed, &[rng::TAG_INIT_SIGN]),
            dirs: rng::stream(cfg.seed, &[rng::TAG_INIT_DIR]),
            k: 0,
        })
    }

    /// Writes the next neuron's direction into `b` and returns its outer weight.
    pub fn next_into(&mut self, b: &mut [f64]) -> Option<f64> {
        if self.k == self.cfg.m {
            return None;
        }
        self.k += 1;
        let a = if self.signs.random::<bool>() { self.cfg.beta } else { -self.cfg.beta };
        sphere_point(&mut self.dirs, b);
        Some(a)
    }
}

pub fn init_params(cfg: &InitConfig) -> Result<NetParams> {
    let mut s = InitStream::new(*cfg)?;
    let mut a = Array1::<f64>::zeros(cfg.m);
    let mut b = Array2::<f64>::zeros((cfg.m, cfg.d));
    for (ak, mut row) in a.iter_mut().zip(b.rows_mut()) {
        *ak = s.next_into(row.as_slice_mut().expect("standard layout")).expect("m neurons");
    }
    Ok(NetParams { a, b, beta: cfg.beta })
}

fn check_dim(b: ArrayView2<f64>, d: usize) -> Result<()> {
    if b.ncols() != d {
        return Err(Error::dims(format!("parameters have d = {}, input has d = {d}", b.ncols())));
    }
    Ok(())
}

/// Pre-activations `Z = X Bᵀ`, shape `n × m`.
pub fn preactivations(b: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dim(b, x.ncols())?;
    Ok(x.dot(&b.t()))
}

/// Feature matrix `σ(X Bᵀ)`, shape `n × m`.
pub fn features(b: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(preactivations(b, x)?.mapv_into(relu))
}

/// `Σ_k a_k σ(b_kᵀx)`.
pub fn forward(params: &NetParams, x: ArrayView1<f64>) -> Result<f64> {
    rf_forward(params.a.view(), params.b.view(), x)
}

/// Random-feature model `ãᵀσ(B₀x)`.
pub fn rf_forward(a_tilde: ArrayView1<f64>, b0: ArrayView2<f64>, x: ArrayView1<f64>) -> Result<f64> {
    check_dim(b0, x.len())?;
    if a_tilde.len() != b0.nrows() {
        return Err(Error::dims(format!("a has length {} but B has {} rows", a_tilde.len(), b0.nrows())));
    }
    Ok(a_tilde.iter().zip(b0.rows()).map(|(a, b)| a * relu(b.dot(&x))).sum())
}

/// Network outputs on every row of `x`.
pub fn predict(a: ArrayView1<f64>, b: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if a.len() != b.nrows() {
        return Err(Error::dims(format!("a has length {} but B has {} rows", a.len(), b.nrows())));
    }
    Ok(features(b, x)?.dot(&a))
}

/// `½ mean((f − y)²)` for raw arrays.
pub fn half_mse(pred: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let e = &pred - &y;
    e.dot(&e) / (2.0 * y.len() as f64)
}

/// Residuals `e_i = f(x_i; Θ) − y_i`.
pub fn residuals(params: &NetParams, data: &Dataset) -> Result<Array1<f64>> {
    Ok(predict(params.a.view(), params.b.view(), data.inputs())? - &data.labels())
}

/// `R̂_n(Θ) = (1/2n) Σ_i (f(x_i; Θ) − y_i)²`.
pub fn empirical_risk(params: &NetParams, data: &Dataset) -> Result<f64> {
    rf_empirical_risk(params.a.view(), params.b.view(), data)
}

/// Empirical risk of the random-feature model `(ã, B₀)`.
pub fn rf_empirical_risk(a_tilde: ArrayView1<f64>, b0: ArrayView2<f64>, data: &Dataset) -> Result<f64> {
    let pred = predict(a_tilde, b0, data.inputs())?;
    Ok(half_mse(pred.view(), data.labels()))
}

/// Monte-Carlo risk estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_test: usize,
}

/// Fresh inputs with exact (noiseless, unclamped) target values.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
}

impl TestSet {
    pub fn sample(target: &TargetFunction, n_test: usize, d: usize, seed: u64) -> Result<Self> {
        if matches!(target, TargetFunction::RandomLabels) {
            return Err(Error::invalid("random labels have no population target"));
        }
        if n_test == 0 || d == 0 {
            return Err(Error::invalid("test set needs n_test >= 1 and d >= 1"));
        }
        target.validate_dim(d)?;
        let mut r = rng::stream(seed, &[rng::TAG_TEST_SET]);
        let inputs = sphere_rows(&mut r, n_test, d);
        let targets = inputs.rows().into_iter().map(|x| target.value(x)).collect::<Result<Array1<f64>>>()?;
        Ok(TestSet { inputs, targets })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    /// `½ mean((f − f*)²)` with standard error, for arbitrary `(a, B)`.
    pub fn risk(&self, a: ArrayView1<f64>, b: ArrayView2<f64>) -> Result<RiskEstimate> {
        let pred = predict(a, b, self.inputs.view())?;
        let sq = (&pred - &self.targets).mapv(|e| 0.5 * e * e);
        let n = sq.len();
        let value = sq.sum() / n as f64;
        let std_err = if n > 1 { sq.std(1.0) / (n as f64).sqrt() } else { f64::INFINITY };
        Ok(RiskEstimate { value, std_err, n_test: n })
    }
}

/// Population risk `½ E(f − f*)²` estimated on `n_test` fresh sphere points.
pub fn population_risk_mc(params: &NetParams, target: &TargetFunction, n_test: usize, seed: u64) -> Result<RiskEstimate> {
    TestSet::sample(target, n_test, params.d(), seed)?.risk(params.a.view(), params.b.view())
}

/// Gradient of `R̂_n` with the same shape as [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub a: Array1<f64>,
    pub b: Array2<f64>,
}

impl Gradient {
    /// Squared Frobenius norm over both blocks.
    pub fn norm_sq(&self) -> f64 {
        self.a.dot(&self.a) + self.b.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Gradient together with the residuals and risk it was computed from.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub grad: Gradient,
    pub residuals: Array1<f64>,
    pub risk: f64,
}

/// `∇_a R̂ = Sᵀe/n` and `∇_{b_k} R̂ = (a_k/n) Σ_i e_i σ'(b_kᵀx_i) x_i`.
pub fn gradient_eval(a: ArrayView1<f64>, b: ArrayView2<f64>, data: &Dataset) -> Result<GradientEval> {
    if a.len() != b.nrows() {
        return Err(Error::dims(format!("a has length {} but B has {} rows", a.len(), b.nrows())));
    }
    let x = data.inputs();
    let z = preactivations(b, x)?;
    let n = data.n() as f64;
    let s = z.mapv(relu);
    let e = s.dot(&a) - &data.labels();
    let risk = e.dot(&e) / (2.0 * n);
    let grad_a = s.t().dot(&e) / n;
    let mut w = z;
    Zip::from(w.rows_mut()).and(&e).for_each(|mut row, &ei| row.mapv_inplace(|t| ei * relu_prime(t)));
    let mut grad_b = w.t().dot(&x);
    Zip::from(grad_b.rows_mut()).and(&a).for_each(|mut row, &ak| row *= ak / n);
    Ok(GradientEval { grad: Gradient { a: grad_a, b: grad_b }, residuals: e, risk })
}

pub fn gradient(params: &NetParams, data: &Dataset) -> Result<Gradient> {
    Ok(gradient_eval(params.a.view(), params.b.view(), data)?.grad)
}

/// `‖Θ‖_P = Σ_k |a_k| ‖b_k‖`.
pub fn path_norm(params: &NetParams) -> f64 {
    params.a.iter().zip(params.b.rows()).map(|(a, b)| a.abs() * b.dot(&b).sqrt()).sum()
}

/// `(max_k |a_k − a_k(0)|, max_k ‖b_k − b_k(0)‖)`.
pub fn param_deviation(current: &NetParams, initial: &NetParams) -> Result<(f64, f64)> {
    if current.a.dim() != initial.a.dim() || current.b.dim() != initial.b.dim() {
        return Err(Error::dims("parameter shapes differ"));
    }
    Ok(max_deviation(current.a.view(), current.b.view(), initial.a.view(), initial.b.view()))
}

pub(crate) fn max_deviation(a: ArrayView1<f64>, b: ArrayView2<f64>, a0: ArrayView1<f64>, b0: ArrayView2<f64>) -> (f64, f64) {
    let da = a.iter().zip(a0.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let db = Zip::from(b.rows())
        .and(b0.rows())
        .fold(0.0f64, |acc, r, r0| acc.max(r.iter().zip(r0.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()));
    (da, db)
}

/// Row norms `‖b_k‖`.
pub(crate) fn row_norms(b: ArrayView2<f64>) -> Array1<f64> {
    b.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}
