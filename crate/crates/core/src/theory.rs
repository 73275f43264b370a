//! Gram matrices, bound evaluators and empirical checks of the kernel-regime
//! analysis.
//!
//! Two risk conventions coexist: training risks carry the `1/(2n)` factor,
//! while the approximation and generalization statements about the random
//! feature model use the unhalved `‖f − f*‖²`. Evaluators here say which one
//! they use.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::datagen::{Dataset, TargetFunction};
use crate::dynamics::TrajectoryLog;
use crate::kernel::SpectralSummary;
use crate::model::{self, InitConfig, InitStream, NetParams, RiskEstimate, TestSet};
use crate::{linalg, relu, relu_prime, Error, Result};

/// `G_a`, `G_b` and `G = G_a + G_b` at a parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub ga: Array2<f64>,
    pub gb: Array2<f64>,
    pub g: Array2<f64>,
}

/// `Ga_ij = (1/nm) Σ_k σ(b_kᵀx_i) σ(b_kᵀx_j)` and
/// `Gb_ij = (1/nm) Σ_k a_k² x_iᵀx_j σ'(b_kᵀx_i) σ'(b_kᵀx_j)`.
pub fn gram_pair(a: ArrayView1<f64>, b: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<GramPair> {
    if a.len() != b.nrows() {
        return Err(Error::dims(format!("a has length {} but B has {} rows", a.len(), b.nrows())));
    }
    let z = model::preactivations(b, x)?;
    let scale = 1.0 / (x.nrows() as f64 * a.len() as f64);
    let s = z.mapv(relu);
    let ga = s.dot(&s.t()) * scale;
    let d = z.mapv(relu_prime);
    let mut da = d.clone();
    Zip::from(da.columns_mut()).and(&a).for_each(|mut c, &ak| c *= ak * ak);
    let gb = da.dot(&d.t()) * &x.dot(&x.t()) * scale;
    let g = &ga + &gb;
    Ok(GramPair { ga, gb, g })
}

pub fn gram_matrices(params: &NetParams, inputs: ArrayView2<f64>) -> Result<GramPair> {
    gram_pair(params.a.view(), params.b.view(), inputs)
}

/// `G(Θ₀)` for the initialization `cfg` without storing `B`: neurons are
/// drawn from the same stream as [`model::init_params`] in chunks.
pub fn init_gram_streaming(cfg: InitConfig, inputs: ArrayView2<f64>) -> Result<GramPair> {
    const CHUNK: usize = 4096;
    let (n, d) = inputs.dim();
    if d != cfg.d {
        return Err(Error::dims(format!("init has d = {}, inputs have d = {d}", cfg.d)));
    }
    let mut stream = InitStream::new(cfg)?;
    let xx = inputs.dot(&inputs.t());
    let mut ga = Array2::<f64>::zeros((n, n));
    let mut gb_raw = Array2::<f64>::zeros((n, n));
    let mut remaining = cfg.m;
    while remaining > 0 {
        let len = remaining.min(CHUNK);
        let mut b = Array2::<f64>::zeros((len, d));
        let mut a2 = Array1::<f64>::zeros(len);
        for (ak, mut row) in a2.iter_mut().zip(b.rows_mut()) {
            let a = stream.next_into(row.as_slice_mut().expect("standard layout")).expect("within width");
            *ak = a * a;
        }
        let z = inputs.dot(&b.t());
        let s = z.mapv(relu);
        ga += &s.dot(&s.t());
        let dm = z.mapv(relu_prime);
        let mut da = dm.clone();
        Zip::from(da.columns_mut()).and(&a2).for_each(|mut c, &w| c *= w);
        gb_raw += &da.dot(&dm.t());
        remaining -= len;
    }
    let scale = 1.0 / (n as f64 * cfg.m as f64);
    ga *= scale;
    let gb = gb_raw * &xx * scale;
    let g = &ga + &gb;
    Ok(GramPair { ga, gb, g })
}

/// `(‖∇R̂_n‖², (m/n) eᵀGe)`, computed along two independent paths.
pub fn gradient_norm_identity_check(params: &NetParams, data: &Dataset) -> Result<(f64, f64)> {
    let lhs = model::gradient(params, data)?.norm_sq();
    let e = model::residuals(params, data)?;
    let g = gram_matrices(params, data.inputs())?.g;
    let rhs = params.m() as f64 / data.n() as f64 * e.dot(&g.dot(&e));
    Ok((lhs, rhs))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1]")));
    }
    Ok(())
}

/// Confidence constant of the initial-risk bound: `2 + √ln(1/δ)`.
pub fn c_delta_init(delta: f64) -> f64 {
    2.0 + (1.0 / delta).ln().sqrt()
}

/// Confidence constant of the network/random-feature coupling bound: `1 + √ln(1/δ)`.
pub fn c_delta_coupling(delta: f64) -> f64 {
    1.0 + (1.0 / delta).ln().sqrt()
}

/// Constants of one run, with both confidence conventions kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryLedger {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_n: f64,
    pub delta: f64,
    /// `2 + √ln(1/δ)`, used by the initial-risk bound and the deviation estimates.
    pub c_delta: f64,
    /// `10 c_delta²`.
    pub big_c_delta: f64,
    /// `1 + √ln(1/δ)`, used by the coupling bound.
    pub c_delta_coupling: f64,
    pub r0: f64,
    pub p_n: f64,
    pub q_n: f64,
    pub beta: f64,
    pub m: usize,
    pub n: usize,
}

impl TheoryLedger {
    pub fn new(spectra: &SpectralSummary, delta: f64, r0: f64, m: usize, beta: f64) -> Result<Self> {
        check_delta(delta)?;
        let (p_n, q_n) = pq_bounds(r0, m, spectra.lambda_a, spectra.lambda_b, beta)?;
        let c = c_delta_init(delta);
        Ok(TheoryLedger {
            lambda_a: spectra.lambda_a,
            lambda_b: spectra.lambda_b,
            lambda_n: spectra.lambda_n,
            delta,
            c_delta: c,
            big_c_delta: 10.0 * c * c,
            c_delta_coupling: c_delta_coupling(delta),
            r0,
            p_n,
            q_n,
            beta,
            m,
            n: spectra.n,
        })
    }

    /// `λ_a + β² λ_b`.
    pub fn rate(&self) -> f64 {
        self.lambda_a + self.beta * self.beta * self.lambda_b
    }
}

/// `p_n = 4√R0 / (m(λa + β²λb))`, `q_n = p_n² + β p_n`.
pub fn pq_bounds(r0: f64, m: usize, lambda_a: f64, lambda_b: f64, beta: f64) -> Result<(f64, f64)> {
    if !(r0 >= 0.0) {
        return Err(Error::invalid(format!("R0 = {r0} must be >= 0")));
    }
    let denom = lambda_a + beta * beta * lambda_b;
    if !(denom > 0.0) || m == 0 {
        return Err(Error::invalid(format!("lambda_a + beta^2 lambda_b = {denom} must be positive and m >= 1")));
    }
    let p = 4.0 * r0.sqrt() / (m as f64 * denom);
    Ok((p, p * p + beta * p))
}

/// `R0 · exp(−m(λa + β²λb) t)`.
pub fn decay_envelope(r0: f64, m: usize, lambda_a: f64, lambda_b: f64, beta: f64, t: f64) -> f64 {
    r0 * (-(m as f64) * (lambda_a + beta * beta * lambda_b) * t).exp()
}

/// `½(1 + c(δ)√m β)²` with `c(δ) = 2 + √ln(1/δ)`.
pub fn init_risk_bound(m: usize, beta: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let v = 1.0 + c_delta_init(delta) * (m as f64).sqrt() * beta;
    Ok(0.5 * v * v)
}

/// Width at which the initial Gram matrix is within `λ_n/4` of its limit
/// with probability `1 − δ`: `⌈8 ln(2n²/δ) / λ_n²⌉`.
pub fn gram_concentration_width(n: usize, lambda_n: f64, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    if !(lambda_n > 0.0) {
        return Err(Error::invalid("lambda_n must be positive"));
    }
    let nf = n as f64;
    Ok((8.0 * (2.0 * nf * nf / delta).ln() / (lambda_n * lambda_n)).ceil() as usize)
}

/// Regime-dependent estimates of `p_n`, `q_n` in terms of `β` and `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimate {
    pub regime: String,
    pub p_estimate: f64,
    pub q_estimate: f64,
    pub p_within: bool,
    pub q_within: bool,
}

pub fn regime_estimates(l: &TheoryLedger) -> RegimeEstimate {
    let m = l.m as f64;
    let sm = m.sqrt();
    let c = l.big_c_delta;
    let (la, lb, beta) = (l.lambda_a, l.lambda_b, l.beta);
    let (regime, p, q) = if beta <= 1.0 {
        let p = c / (sm * la) * (1.0 / sm + beta);
        let q = c / (m * la * la) * (1.0 / m + 2.0 * beta / sm + beta * beta) + c * beta / (m * la) + c * beta * beta / (sm * la);
        ("beta_le_1", p, q)
    } else {
        ("beta_gt_1", c / (m * la * lb).sqrt(), c / (sm * lb))
    };
    RegimeEstimate { regime: regime.to_string(), p_estimate: p, q_estimate: q, p_within: l.p_n <= p, q_within: l.q_n <= q }
}

/// A logged step where a deviation exceeded its radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationFlag {
    pub step: usize,
    pub t: f64,
    pub max_a_dev: f64,
    pub max_b_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub a_radius: f64,
    pub b_radius: f64,
    pub max_a_dev: f64,
    pub max_b_dev: f64,
    pub flags: Vec<DeviationFlag>,
    pub regime: RegimeEstimate,
}

impl DeviationReport {
    pub fn pass(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Flags logged steps with `max_a_dev > 2p_n` or `max_b_dev > 2q_n`.
pub fn deviation_bound_check(log: &TrajectoryLog, ledger: &TheoryLedger) -> DeviationReport {
    let (ra, rb) = (2.0 * ledger.p_n, 2.0 * ledger.q_n);
    let flags = log
        .records
        .iter()
        .filter(|r| r.max_a_dev > ra || r.max_b_dev > rb)
        .map(|r| DeviationFlag { step: r.step, t: r.t, max_a_dev: r.max_a_dev, max_b_dev: r.max_b_dev })
        .collect();
    DeviationReport {
        a_radius: ra,
        b_radius: rb,
        max_a_dev: log.records.iter().map(|r| r.max_a_dev).fold(0.0, f64::max),
        max_b_dev: log.records.iter().map(|r| r.max_b_dev).fold(0.0, f64::max),
        flags,
        regime: regime_estimates(ledger),
    }
}

/// `‖G(Θ_t) − G(Θ₀)‖_F`.
pub fn gram_drift(params_t: &NetParams, params_0: &NetParams, inputs: ArrayView2<f64>) -> Result<f64> {
    if params_t.a.dim() != params_0.a.dim() || params_t.b.dim() != params_0.b.dim() {
        return Err(Error::dims("parameter shapes differ"));
    }
    let g_t = gram_matrices(params_t, inputs)?.g;
    let g_0 = gram_matrices(params_0, inputs)?.g;
    Ok(linalg::frobenius_distance(g_t.view(), g_0.view()))
}

/// Radius `¼(λa + β²λb)` of the Gram neighborhood of the initialization.
pub fn neighborhood_radius(lambda_a: f64, lambda_b: f64, beta: f64) -> f64 {
    0.25 * (lambda_a + beta * beta * lambda_b)
}

pub fn in_neighborhood(drift: f64, radius: f64) -> bool {
    drift <= radius
}

/// First logged time whose Gram drift leaves the neighborhood; `None` means
/// the trajectory never left it. Errors when the log has no drift column.
pub fn exit_time(log: &TrajectoryLog, radius: f64) -> Result<Option<f64>> {
    let mut out = None;
    for r in &log.records {
        let drift = r.gram_drift.ok_or_else(|| Error::invalid("log has no gram_drift column"))?;
        if out.is_none() && !in_neighborhood(drift, radius) {
            out = Some(r.t);
        }
    }
    Ok(out)
}

/// Result of comparing a risk trajectory with the exponential envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Steps whose risk exceeds the envelope evaluated one step earlier.
    pub violations: Vec<usize>,
    /// Largest `risk / envelope(t − η)` over the log.
    pub worst_ratio: f64,
}

/// Checks `R̂(t) ≤ R0 e^{−m(λa+β²λb)(t−η)}`; the one-step lag absorbs the
/// Euler discretization error.
pub fn envelope_check(log: &TrajectoryLog, ledger: &TheoryLedger) -> EnvelopeReport {
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for r in &log.records {
        let t = (r.t - log.eta).max(0.0);
        let env = decay_envelope(ledger.r0, ledger.m, ledger.lambda_a, ledger.lambda_b, ledger.beta, t);
        if r.train_risk > env * (1.0 + 1e-12) {
            violations.push(r.step);
        }
        if env > 0.0 {
            worst = worst.max(r.train_risk / env);
        }
    }
    EnvelopeReport { violations, worst_ratio: worst }
}

/// `(c(δ)²/λa)(1/√m + β + √m β³)` with `c(δ) = 1 + √ln(1/δ)`, the sup-gap
/// bound between the network and random-feature flows up to a constant.
pub fn coupling_bound(lambda_a: f64, m: usize, beta: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let c = c_delta_coupling(delta);
    let sm = (m as f64).sqrt();
    Ok(c * c / lambda_a * (1.0 / sm + beta + sm * beta.powi(3)))
}

/// Random-feature coefficients `a*_k = a*(b_k)/m` realizing a Barron target.
#[derive(Debug, Clone, PartialEq)]
pub struct AStar {
    pub a: Array1<f64>,
    pub norm: f64,
    /// `γ/√m`.
    pub norm_bound: f64,
    pub gamma: f64,
}

pub fn a_star_construct(b0: ArrayView2<f64>, target: &TargetFunction) -> Result<AStar> {
    let TargetFunction::BarronDensity { coefficient, gamma } = target else {
        return Err(Error::invalid("a* needs a target with an integral representation"));
    };
    let m = b0.nrows();
    if m == 0 {
        return Err(Error::invalid("B0 has no rows"));
    }
    let mut a = Array1::<f64>::zeros(m);
    for (ak, bk) in a.iter_mut().zip(b0.rows()) {
        let v = coefficient.eval(bk);
        if v.abs() > *gamma {
            return Err(Error::CoefficientBound { sampled: v.abs(), gamma: *gamma });
        }
        *ak = v / m as f64;
    }
    let norm = a.dot(&a).sqrt();
    Ok(AStar { a, norm, norm_bound: gamma / (m as f64).sqrt(), gamma: *gamma })
}

/// `‖f(·; a, B) − f*‖²` (no ½) estimated on a fresh test set.
pub fn population_risk_unhalved(a: ArrayView1<f64>, b: ArrayView2<f64>, target: &TargetFunction, n_test: usize, seed: u64) -> Result<RiskEstimate> {
    let r = TestSet::sample(target, n_test, b.ncols(), seed)?.risk(a, b)?;
    Ok(RiskEstimate { value: 2.0 * r.value, std_err: 2.0 * r.std_err, n_test })
}

/// `(γ²/m)(1 + √(2 ln(1/δ)))²`, unhalved convention.
pub fn a_star_risk_bound(gamma: f64, m: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let v = 1.0 + (2.0 * (1.0 / delta).ln()).sqrt();
    Ok(gamma * gamma / m as f64 * v * v)
}

/// Uniform generalization gap bound for the random-feature model:
/// `2(2√m‖a‖+1)²/√n · (1 + √(2 ln((2/δ)(‖a‖ + 1/‖a‖))))`.
pub fn rad_gen_bound(a_norm: f64, m: usize, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(a_norm > 0.0) || !a_norm.is_finite() {
        return Err(Error::invalid(format!(
            "a_norm = {a_norm}: the bound diverges as ‖a‖ → 0; pass a_norm >= f64::MIN_POSITIVE"
        )));
    }
    let lead = 2.0 * (2.0 * (m as f64).sqrt() * a_norm + 1.0).powi(2) / (n as f64).sqrt();
    let log_arg = (2.0 / delta) * (a_norm + 1.0 / a_norm);
    Ok(lead * (1.0 + (2.0 * log_arg.ln()).sqrt()))
}

/// Full early-stopping bound
/// `C(1/m + 1/(mt) + s²/√n + (t²/m²)(1+mt)²(1 + (t²/m²)(t+m)⁴) s²)` with
/// `s = 1 + √t + √(mt)/n^{1/4}`.
pub fn early_stop_bound(m: usize, n: usize, t: f64, constant: f64) -> Result<f64> {
    if !(t > 0.0) || m == 0 || n == 0 {
        return Err(Error::invalid("early-stopping bound needs t > 0, m >= 1, n >= 1"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let s = 1.0 + t.sqrt() + (mf * t).sqrt() / nf.powf(0.25);
    let s2 = s * s;
    let r = t * t / (mf * mf);
    let growth = r * (1.0 + mf * t).powi(2) * (1.0 + r * (t + mf).powi(4)) * s2;
    Ok(constant * (1.0 / mf + 1.0 / (mf * t) + s2 / nf.sqrt() + growth))
}

/// Stopping time and predicted rate exponent for `m = n^p`.
pub fn schedule_from_corollary(n: usize, p: f64) -> Result<(f64, f64)> {
    if !(p >= 0.0) || n == 0 {
        return Err(Error::invalid(format!("p = {p} must be >= 0 and n >= 1")));
    }
    let nf = n as f64;
    Ok(if p <= 7.0 / 8.0 { (nf.powf(-3.0 * p / 7.0), 4.0 * p / 7.0) } else { (nf.powf(-p + 0.5), 0.5) })
}

/// `J(t) = t(R̂(ã_t) − R̂(a*)) + ½‖ã_t − a*‖²`.
pub fn lyapunov_j(a_t: ArrayView1<f64>, a_star: ArrayView1<f64>, risk_t: f64, risk_star: f64, t: f64) -> f64 {
    let diff = &a_t - &a_star;
    t * (risk_t - risk_star) + 0.5 * diff.dot(&diff)
}

/// `g_a(x, x_i) = (1/mn) Σ_k σ(b_kᵀx) σ(b_kᵀx_i)` for every probe row and training input.
pub fn feature_kernel(b0: ArrayView2<f64>, probes: ArrayView2<f64>, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    let sp = model::features(b0, probes)?;
    let si = model::features(b0, inputs)?;
    Ok(sp.dot(&si.t()) / (b0.nrows() as f64 * inputs.nrows() as f64))
}

/// How well the change of the random-feature function is explained by the
/// basis `{g_a(·, x_i)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    /// Max error of `−Σ_i g_a(x, x_i) w_i` with `w = m η Σ_s e(s)` from the log.
    pub integral_error: f64,
    /// Max residual of the least-squares fit on the same basis.
    pub lsq_error: f64,
    pub scale: f64,
}

/// `diff[j] = f_rf(p_j, t) − f_rf(p_j, 0)` at every probe row.
pub fn span_check(b0: ArrayView2<f64>, inputs: ArrayView2<f64>, probes: ArrayView2<f64>, diff: ArrayView1<f64>, residual_integral: ArrayView1<f64>) -> Result<SpanReport> {
    if diff.len() != probes.nrows() || residual_integral.len() != inputs.nrows() {
        return Err(Error::dims("span check inputs disagree in length"));
    }
    let basis = feature_kernel(b0, probes, inputs)?;
    let w = residual_integral.mapv(|v| v * b0.nrows() as f64);
    let pred = -basis.dot(&w);
    let integral_error = pred.iter().zip(diff.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let coef = linalg::least_squares(basis.view(), diff)?;
    let fit = basis.dot(&coef);
    let lsq_error = fit.iter().zip(diff.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    Ok(SpanReport { integral_error, lsq_error, scale: diff.iter().map(|v| v.abs()).fold(0.0, f64::max) })
}

/// Failure rate allowed for a "holds with probability `1 − δ`" claim over
/// `trials` seeded trials: `δ` plus one binomial standard deviation.
pub fn frequency_tolerance(delta: f64, trials: usize) -> f64 {
    delta + (delta * (1.0 - delta) / trials as f64).sqrt()
}

/// Serializable outcome of one empirical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub claim_id: String,
    /// Name of the statement being checked.
    pub paper_ref: String,
    pub values: Map<String, Value>,
    pub threshold: f64,
    pub pass: bool,
    pub trials: usize,
    pub failures: usize,
}

impl CheckReport {
    pub fn new(claim_id: &str, statement: &str, threshold: f64, trials: usize, failures: usize, pass: bool) -> Self {
        CheckReport {
            claim_id: claim_id.to_string(),
            paper_ref: statement.to_string(),
            values: Map::new(),
            threshold,
            pass,
            trials,
            failures,
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.values.insert(key.to_string(), json!(value));
        self
    }

    /// Frequency check: pass when `failures/trials ≤ frequency_tolerance(δ, trials)`.
    pub fn frequency(claim_id: &str, statement: &str, delta: f64, trials: usize, failures: usize) -> Self {
        let tol = frequency_tolerance(delta, trials);
        let pass = trials > 0 && (failures as f64) <= tol * trials as f64;
        CheckReport::new(claim_id, statement, tol, trials, failures, pass)
            .with("delta", delta)
            .with("failure_rate", if trials > 0 { failures as f64 / trials as f64 } else { f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_dataset, sample_sphere, CoefficientFn};
    use crate::model::init_params;
    use ndarray::array;

    #[test]
    fn gram_unit_instance() {
        let beta = 0.7;
        let p = NetParams::new(array![beta], array![[1.0, 0.0]], beta).unwrap();
        let g = gram_matrices(&p, array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(g.ga, array![[1.0]]);
        assert!((g.gb[[0, 0]] - beta * beta).abs() < 1e-15);
        assert!((g.g[[0, 0]] - 1.0 - beta * beta).abs() < 1e-15);
    }

    #[test]
    fn antipodal_gb_off_diagonal_is_zero() {
        let x = array![[0.6, 0.8], [-0.6, -0.8]];
        for seed in 0..5 {
            let p = init_params(&InitConfig { m: 30, d: 2, beta: 1.3, seed }).unwrap();
            let g = gram_matrices(&p, x.view()).unwrap();
            assert_eq!(g.gb[[0, 1]], 0.0);
        }
    }

    #[test]
    fn streaming_matches_materialized() {
        let x = sample_sphere(4, 3, 1).unwrap();
        let cfg = InitConfig { m: 9000, d: 3, beta: 0.8, seed: 2 };
        let g1 = init_gram_streaming(cfg, x.view()).unwrap();
        let g2 = gram_matrices(&init_params(&cfg).unwrap(), x.view()).unwrap();
        assert!(linalg::frobenius_distance(g1.g.view(), g2.g.view()) < 1e-13);
    }

    #[test]
    fn identity_zero_residuals() {
        let x = sample_sphere(4, 3, 5).unwrap();
        let p = init_params(&InitConfig { m: 6, d: 3, beta: 0.1, seed: 5 }).unwrap();
        let y = model::predict(p.a.view(), p.b.view(), x.view()).unwrap();
        let data = Dataset::new(x, y).unwrap();
        assert_eq!(gradient_norm_identity_check(&p, &data).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn identity_unit_instance() {
        let p = NetParams::new(array![0.5], array![[0.6, 0.8]], 0.5).unwrap();
        let data = Dataset::new(array![[1.0, 0.0]], array![0.0]).unwrap();
        let (lhs, rhs) = gradient_norm_identity_check(&p, &data).unwrap();
        let (s, a) = (0.6f64, 0.5f64);
        let e = a * s;
        let want = e * e * (s * s + a * a);
        assert!((lhs - want).abs() < 1e-15 && (rhs - want).abs() < 1e-15);
    }

    #[test]
    fn pq_arithmetic() {
        assert_eq!(pq_bounds(0.0, 10, 0.1, 0.1, 1.0).unwrap(), (0.0, 0.0));
        let (p, q) = pq_bounds(0.5, 1000, 0.01, 0.01, 1.0).unwrap();
        assert!((p - 0.141421356).abs() < 1e-8 && (q - 0.161421356).abs() < 1e-8);
        let (p, q) = pq_bounds(0.5, 100, 0.01, 0.5, 0.0).unwrap();
        assert!((p - 2.0 * 2f64.sqrt()).abs() < 1e-12 && (q - 8.0).abs() < 1e-12);
        assert!(pq_bounds(0.5, 100, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn envelope_arithmetic() {
        assert_eq!(decay_envelope(0.3, 10, 0.1, 0.2, 0.5, 0.0), 0.3);
        let rate = 10.0 * (0.1 + 0.25 * 0.2);
        let half = 2f64.ln() / rate;
        assert!((decay_envelope(0.3, 10, 0.1, 0.2, 0.5, half) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn init_risk_bound_arithmetic() {
        assert_eq!(init_risk_bound(100, 0.0, 0.1).unwrap(), 0.5);
        assert!((init_risk_bound(100, 0.1, 1.0).unwrap() - 4.5).abs() < 1e-12);
        assert!(init_risk_bound(100, 0.1, 0.0).is_err());
    }

    #[test]
    fn both_confidence_constants_are_kept() {
        let s = SpectralSummary { lambda_a: 0.01, lambda_b: 0.02, lambda_n: 0.01, n: 5, d: 3, mode: "closed_form".into() };
        let l = TheoryLedger::new(&s, 0.1, 0.5, 100, 0.5).unwrap();
        assert!((l.c_delta - l.c_delta_coupling - 1.0).abs() < 1e-15);
        assert!((l.big_c_delta - 10.0 * l.c_delta * l.c_delta).abs() < 1e-12);
        assert!((l.q_n - (l.p_n * l.p_n + l.beta * l.p_n)).abs() == 0.0);
    }

    #[test]
    fn drift_cases() {
        let x = sample_sphere(5, 3, 1).unwrap();
        let p = init_params(&InitConfig { m: 8, d: 3, beta: 0.6, seed: 1 }).unwrap();
        assert_eq!(gram_drift(&p, &p, x.view()).unwrap(), 0.0);
        let eps = 1e-3;
        let mut q = p.clone();
        q.a[3] += eps;
        let drift = gram_drift(&q, &p, x.view()).unwrap();
        let ga_change = linalg::frobenius_distance(gram_matrices(&q, x.view()).unwrap().ga.view(), gram_matrices(&p, x.view()).unwrap().ga.view());
        assert_eq!(ga_change, 0.0);
        assert!(drift <= 2.0 * 0.6 * eps + eps * eps);
    }

    #[test]
    fn a_star_cases() {
        let b0 = sample_sphere(50, 4, 3).unwrap();
        let t = TargetFunction::barron(CoefficientFn::Constant { value: 2.0 }, 2.0).unwrap();
        let s = a_star_construct(b0.view(), &t).unwrap();
        assert!(s.a.iter().all(|v| (v - 2.0 / 50.0).abs() < 1e-15));
        assert!((s.norm - 2.0 / 50f64.sqrt()).abs() < 1e-14 && s.norm <= s.norm_bound + 1e-15);
        let z = TargetFunction::barron(CoefficientFn::Constant { value: 0.0 }, 1.0).unwrap();
        assert!(a_star_construct(b0.view(), &z).unwrap().a.iter().all(|v| *v == 0.0));
        assert!(a_star_construct(b0.view(), &TargetFunction::RandomLabels).is_err());
    }

    #[test]
    fn rad_bound_cases() {
        assert!(rad_gen_bound(0.0, 10, 10, 0.1).is_err());
        let b1 = rad_gen_bound(0.5, 20, 100, 0.1).unwrap();
        let b2 = rad_gen_bound(1.0, 20, 100, 0.1).unwrap();
        assert!(b2 > b1);
        // m = n = 1, ‖a‖ = 1, δ = 2/e²: ln((2/δ)·2) = 2 + ln 2
        let v = rad_gen_bound(1.0, 1, 1, 2.0 / std::f64::consts::E.powi(2)).unwrap();
        let want = 2.0 * 9.0 * (1.0 + (2.0 * (2.0 + 2f64.ln())).sqrt());
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn early_stop_cases() {
        let (m, n) = (400, 100);
        let b = |t: f64| early_stop_bound(m, n, t, 1.0).unwrap();
        assert!(early_stop_bound(m, n, 0.0, 1.0).is_err());
        let t = (n as f64).sqrt() / m as f64;
        let v = b(t);
        let scale = 1.0 / m as f64 + 1.0 / (n as f64).sqrt();
        assert!(v / scale < 10.0, "ratio {}", v / scale);
    }

    #[test]
    fn schedule_cases() {
        assert_eq!(schedule_from_corollary(10, 0.0).unwrap(), (1.0, 0.0));
        let (t, r) = schedule_from_corollary(10_000, 7.0 / 8.0).unwrap();
        assert!((t - 10f64.powf(-1.5)).abs() < 1e-15 && (r - 0.5).abs() < 1e-15);
        let (t, r) = schedule_from_corollary(100, 2.0).unwrap();
        assert!((t - 1e-3).abs() < 1e-15 && r == 0.5);
        assert!(schedule_from_corollary(10, -1.0).is_err());
    }

    #[test]
    fn lyapunov_cases() {
        let a0 = array![1.0, 2.0];
        let s = array![0.0, 1.0];
        assert_eq!(lyapunov_j(a0.view(), s.view(), 0.3, 0.1, 0.0), 1.0);
        assert_eq!(lyapunov_j(s.view(), s.view(), 0.1, 0.1, 5.0), 0.0);
    }

    #[test]
    fn frequency_report() {
        let r = CheckReport::frequency("init_risk", "initial risk bound", 0.1, 100, 12);
        assert!(r.pass);
        let r = CheckReport::frequency("init_risk", "initial risk bound", 0.1, 100, 14);
        assert!(!r.pass);
        let v = serde_json::to_value(&r).unwrap();
        for k in ["claim_id", "paper_ref", "values", "threshold", "pass", "trials", "failures"] {
            assert!(v.get(k).is_some());
        }
    }

    #[test]
    fn exit_time_needs_drift() {
        let data = make_dataset(&TargetFunction::RandomLabels, 5, 3, 1, 1).unwrap();
        let p = init_params(&InitConfig { m: 5, d: 3, beta: 0.5, seed: 2 }).unwrap();
        let cfg = crate::dynamics::RunConfig { eta: 0.01, max_steps: 3, log_every: 1, stop_risk: None, stop_time: Some(0.03) };
        let (_, log) = crate::dynamics::train_nn(&p, &data, &cfg, &Default::default()).unwrap();
        assert!(exit_time(&log, 1.0).is_err());
    }
}
