//! Explicit-Euler gradient descent for the network, the random-feature model
//! and the path-norm regularized network, with trajectory logging.
//!
//! Continuous time is `t = η · step`. A log record is taken before the update
//! of its step, on the `log_every` grid and at the final step.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::datagen::{sphere_rows, Dataset};
use crate::model::{self, max_deviation, row_norms, NetParams, TestSet};
use crate::theory::{gram_pair, GramPair};
use crate::{fmt_f64, linalg, relu, rng, Error, Result};

/// Growth factor over `max(1, R̂(Θ₀))` treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub eta: f64,
    pub max_steps: usize,
    pub log_every: usize,
    pub stop_risk: Option<f64>,
    pub stop_time: Option<f64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta = {} must be positive", self.eta)));
        }
        if self.max_steps == 0 || self.log_every == 0 {
            return Err(Error::invalid("max_steps and log_every must be at least 1"));
        }
        if self.stop_risk.is_none() && self.stop_time.is_none() {
            return Err(Error::invalid("set stop_risk, stop_time or both"));
        }
        Ok(())
    }

    fn time_reached(&self, step: usize) -> bool {
        self.stop_time.is_some_and(|t| step as f64 * self.eta >= t * (1.0 - 1e-12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Training risk reached `stop_risk`.
    Converged,
    /// Continuous time reached `stop_time`.
    TimeReached,
    /// `max_steps` updates taken without meeting a stopping rule.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub t: f64,
    pub train_risk: f64,
    pub test_risk: Option<f64>,
    pub max_a_dev: f64,
    pub max_b_dev: f64,
    pub path_norm: f64,
    pub gram_drift: Option<f64>,
    pub sup_gap: Option<f64>,
    pub probe_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub model: String,
    pub eta: f64,
    pub status: RunStatus,
    pub steps: usize,
    pub records: Vec<LogRecord>,
    /// `2 / L` for the local curvature `L` at initialization; below it the
    /// training risk is expected to decrease.
    pub stability_eta: Option<f64>,
    /// Steps whose logged training risk exceeds the previous logged value.
    pub monotonicity_violations: Vec<usize>,
    /// `η Σ_s e(s)` over all updates (random-feature runs).
    pub residual_integral: Option<Vec<f64>>,
    /// Parameters at every logged step when requested.
    #[serde(skip)]
    pub snapshots: Vec<NetParams>,
}

pub const LOG_COLUMNS: &str = "step,t,train_risk,test_risk,max_a_dev,max_b_dev,path_norm,gram_drift,sup_gap";

impl TrajectoryLog {
    fn new(model: &str, eta: f64) -> Self {
        TrajectoryLog {
            model: model.to_string(),
            eta,
            status: RunStatus::BudgetExhausted,
            steps: 0,
            records: Vec::new(),
            stability_eta: None,
            monotonicity_violations: Vec::new(),
            residual_integral: None,
            snapshots: Vec::new(),
        }
    }

    fn push(&mut self, rec: LogRecord) {
        if let Some(prev) = self.records.last() {
            if rec.train_risk > prev.train_risk {
                self.monotonicity_violations.push(rec.step);
            }
        }
        self.records.push(rec);
    }

    pub fn initial_risk(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.train_risk)
    }

    pub fn final_risk(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.train_risk)
    }

    pub fn final_record(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LOG_COLUMNS}")?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                fmt_f64(r.t),
                fmt_f64(r.train_risk),
                opt(r.test_risk),
                fmt_f64(r.max_a_dev),
                fmt_f64(r.max_b_dev),
                fmt_f64(r.path_norm),
                opt(r.gram_drift),
                opt(r.sup_gap),
            )?;
        }
        Ok(())
    }
}

/// What to record besides risks, deviations and path norm.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    /// Held-out set for the `test_risk` column.
    pub test_set: Option<TestSet>,
    /// Inputs whose function values are stored in each record.
    pub probes: Option<Array2<f64>>,
    /// Record `‖G(Θ_t) − G(Θ₀)‖_F` (network flows only).
    pub track_gram: bool,
    /// Keep a copy of the parameters at every logged step.
    pub keep_snapshots: bool,
}

/// `count` fresh sphere points, for use as probes.
pub fn fresh_probes(count: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut r = rng::stream(seed, &[rng::TAG_PROBES]);
    Ok(sphere_rows(&mut r, count, d))
}

/// Training inputs stacked on top of `count` fresh sphere points.
pub fn default_probes(data: &Dataset, count: usize, seed: u64) -> Result<Array2<f64>> {
    let fresh = fresh_probes(count, data.d(), seed)?;
    Ok(ndarray::concatenate![ndarray::Axis(0), data.inputs(), fresh])
}

fn check_shapes(params: &NetParams, data: &Dataset) -> Result<()> {
    if params.d() != data.d() {
        return Err(Error::dims(format!("parameters have d = {}, data have d = {}", params.d(), data.d())));
    }
    Ok(())
}

fn stability_from(l: f64) -> Option<f64> {
    (l > 0.0 && l.is_finite()).then(|| 2.0 / l)
}

/// Context shared by the network flows.
struct NetTracker<'a> {
    a0: Array1<f64>,
    b0: Array2<f64>,
    data: &'a Dataset,
    monitor: &'a Monitor,
    g0: Option<GramPair>,
    divergence_cap: Option<f64>,
}

impl<'a> NetTracker<'a> {
    fn new(params0: &NetParams, data: &'a Dataset, monitor: &'a Monitor) -> Result<(Self, Option<f64>)> {
        check_shapes(params0, data)?;
        let g0 = gram_pair(params0.a.view(), params0.b.view(), data.inputs())?;
        // gradient flow of the residuals: de/dt = −m G e
        let l = params0.m() as f64 * linalg::max_eigenvalue(g0.g.view(), linalg::default_tol(g0.g.view()))?;
        let t = NetTracker {
            a0: params0.a.clone(),
            b0: params0.b.clone(),
            data,
            monitor,
            g0: monitor.track_gram.then_some(g0),
            divergence_cap: None,
        };
        Ok((t, stability_from(l)))
    }

    fn check_divergence(&mut self, step: usize, risk: f64, log: &TrajectoryLog) -> Result<()> {
        let cap = *self.divergence_cap.get_or_insert(DIVERGENCE_FACTOR * risk.max(1.0));
        if !risk.is_finite() || risk > cap {
            return Err(Error::Diverged { step, risk, log: Box::new(log.clone()) });
        }
        Ok(())
    }

    fn record(&self, step: usize, eta: f64, risk: f64, a: ArrayView1<f64>, b: ArrayView2<f64>) -> Result<LogRecord> {
        let (max_a_dev, max_b_dev) = max_deviation(a, b, self.a0.view(), self.b0.view());
        let path_norm = a.iter().zip(row_norms(b).iter()).map(|(x, n)| x.abs() * n).sum();
        let test_risk = match &self.monitor.test_set {
            Some(ts) => Some(ts.risk(a, b)?.value),
            None => None,
        };
        let gram_drift = match &self.g0 {
            Some(g0) => Some(linalg::frobenius_distance(gram_pair(a, b, self.data.inputs())?.g.view(), g0.g.view())),
            None => None,
        };
        let probe_values = match &self.monitor.probes {
            Some(p) => Some(model::predict(a, b, p.view())?.to_vec()),
            None => None,
        };
        Ok(LogRecord {
            step,
            t: step as f64 * eta,
            train_risk: risk,
            test_risk,
            max_a_dev,
            max_b_dev,
            path_norm,
            gram_drift,
            sup_gap: None,
            probe_values,
        })
    }
}

/// Penalty coefficient `λ √(ln d / n)` of the regularized objective.
pub fn penalty_coefficient(lambda: f64, d: usize, n: usize) -> f64 {
    lambda * ((d as f64).ln() / n as f64).sqrt()
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds the path-norm subgradient `coef · (sign(a_k)‖b_k‖, |a_k| b_k/‖b_k‖)`.
fn add_penalty(grad: &mut model::Gradient, a: ArrayView1<f64>, b: ArrayView2<f64>, coef: f64) {
    if coef == 0.0 {
        return;
    }
    let norms = row_norms(b);
    Zip::from(&mut grad.a).and(&a).and(&norms).for_each(|g, &ak, &nk| *g += coef * sign0(ak) * nk);
    Zip::from(grad.b.rows_mut()).and(b.rows()).and(&a).and(&norms).for_each(|mut g, bk, &ak, &nk| {
        if nk > 0.0 {
            g.scaled_add(coef * ak.abs() / nk, &bk);
        }
    });
}

fn train_network(model_name: &str, params0: &NetParams, data: &Dataset, coef: f64, cfg: &RunConfig, monitor: &Monitor) -> Result<(NetParams, TrajectoryLog)> {
    cfg.validate()?;
    let (mut tracker, stability) = NetTracker::new(params0, data, monitor)?;
    let mut log = TrajectoryLog::new(model_name, cfg.eta);
    log.stability_eta = stability;
    let mut a = params0.a.clone();
    let mut b = params0.b.clone();
    let mut step = 0;
    loop {
        let mut ev = model::gradient_eval(a.view(), b.view(), data)?;
        tracker.check_divergence(step, ev.risk, &log)?;
        let status = if cfg.stop_risk.is_some_and(|s| ev.risk <= s) {
            Some(RunStatus::Converged)
        } else if cfg.time_reached(step) {
            Some(RunStatus::TimeReached)
        } else if step == cfg.max_steps {
            Some(RunStatus::BudgetExhausted)
        } else {
            None
        };
        if step % cfg.log_every == 0 || status.is_some() {
            log.push(tracker.record(step, cfg.eta, ev.risk, a.view(), b.view())?);
            if monitor.keep_snapshots {
                log.snapshots.push(NetParams { a: a.clone(), b: b.clone(), beta: params0.beta });
            }
        }
        if let Some(s) = status {
            log.status = s;
            log.steps = step;
            break;
        }
        add_penalty(&mut ev.grad, a.view(), b.view(), coef);
        a.scaled_add(-cfg.eta, &ev.grad.a);
        b.scaled_add(-cfg.eta, &ev.grad.b);
        step += 1;
    }
    Ok((NetParams { a, b, beta: params0.beta }, log))
}

/// Gradient descent `Θ ← Θ − η ∇R̂_n(Θ)` on the two-layer network.
pub fn train_nn(params0: &NetParams, data: &Dataset, cfg: &RunConfig, monitor: &Monitor) -> Result<(NetParams, TrajectoryLog)> {
    train_network("nn", params0, data, 0.0, cfg, monitor)
}

/// Subgradient descent on `R̂_n(Θ) + λ √(ln d / n) ‖Θ‖_P`, with
/// `∂|a| = sign(a)` and `∂‖b‖ = b/‖b‖`, both taken as 0 at 0.
pub fn train_regularized(params0: &NetParams, data: &Dataset, lambda: f64, cfg: &RunConfig, monitor: &Monitor) -> Result<(NetParams, TrajectoryLog)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda = {lambda} must be finite and >= 0")));
    }
    if data.d() < 2 {
        return Err(Error::invalid("the penalty needs d >= 2"));
    }
    train_network("regularized", params0, data, penalty_coefficient(lambda, data.d(), data.n()), cfg, monitor)
}

/// Random-feature state with its fixed feature matrix `S = σ(X B₀ᵀ)`.
struct RfFlow<'a> {
    a: Array1<f64>,
    b0: ArrayView2<'a, f64>,
    s: Array2<f64>,
    y: ArrayView1<'a, f64>,
    e: Array1<f64>,
    integral: Array1<f64>,
}

impl<'a> RfFlow<'a> {
    fn new(a0: ArrayView1<f64>, b0: ArrayView2<'a, f64>, data: &'a Dataset) -> Result<Self> {
        if a0.len() != b0.nrows() {
            return Err(Error::dims(format!("a has length {} but B has {} rows", a0.len(), b0.nrows())));
        }
        let s = model::features(b0, data.inputs())?;
        Ok(RfFlow { a: a0.to_owned(), b0, s, y: data.labels(), e: Array1::zeros(data.n()), integral: Array1::zeros(data.n()) })
    }

    fn eval(&mut self) -> f64 {
        self.e = self.s.dot(&self.a) - &self.y;
        self.e.dot(&self.e) / (2.0 * self.y.len() as f64)
    }

    fn step(&mut self, eta: f64) {
        let n = self.y.len() as f64;
        self.a.scaled_add(-eta / n, &self.s.t().dot(&self.e));
        self.integral.scaled_add(eta, &self.e);
    }

    /// `2/L` with `L = λ_max(SᵀS/n)`, the Hessian of the quadratic risk.
    fn stability(&self) -> Result<Option<f64>> {
        let n = self.y.len() as f64;
        let k = self.s.dot(&self.s.t()) / n;
        Ok(stability_from(linalg::max_eigenvalue(k.view(), linalg::default_tol(k.view()))?))
    }
}

/// Gradient descent on the random-feature model with first layer frozen at `b0`.
pub fn train_rf(a0: ArrayView1<f64>, b0: ArrayView2<f64>, data: &Dataset, cfg: &RunConfig, monitor: &Monitor) -> Result<(Array1<f64>, TrajectoryLog)> {
    cfg.validate()?;
    let mut flow = RfFlow::new(a0, b0, data)?;
    let mut log = TrajectoryLog::new("rf", cfg.eta);
    log.stability_eta = flow.stability()?;
    let ctx = RfContext::new(a0, b0, monitor)?;
    let mut cap = None;
    let mut step = 0;
    loop {
        let risk = flow.eval();
        let c = *cap.get_or_insert(DIVERGENCE_FACTOR * risk.max(1.0));
        if !risk.is_finite() || risk > c {
            return Err(Error::Diverged { step, risk, log: Box::new(log) });
        }
        let status = if cfg.stop_risk.is_some_and(|s| risk <= s) {
            Some(RunStatus::Converged)
        } else if cfg.time_reached(step) {
            Some(RunStatus::TimeReached)
        } else if step == cfg.max_steps {
            Some(RunStatus::BudgetExhausted)
        } else {
            None
        };
        if step % cfg.log_every == 0 || status.is_some() {
            log.push(ctx.record(step, cfg.eta, risk, flow.a.view())?);
            if monitor.keep_snapshots {
                log.snapshots.push(NetParams { a: flow.a.clone(), b: flow.b0.to_owned(), beta: f64::NAN });
            }
        }
        if let Some(s) = status {
            log.status = s;
            log.steps = step;
            break;
        }
        flow.step(cfg.eta);
        step += 1;
    }
    log.residual_integral = Some(flow.integral.to_vec());
    Ok((flow.a, log))
}

struct RfContext<'a> {
    a0: Array1<f64>,
    norms: Array1<f64>,
    test: Option<(Array2<f64>, &'a TestSet)>,
    probes: Option<Array2<f64>>,
}

impl<'a> RfContext<'a> {
    fn new(a0: ArrayView1<f64>, b0: ArrayView2<'a, f64>, monitor: &'a Monitor) -> Result<Self> {
        let test = match &monitor.test_set {
            Some(ts) => Some((model::features(b0, ts.inputs.view())?, ts)),
            None => None,
        };
        let probes = match &monitor.probes {
            Some(p) => Some(model::features(b0, p.view())?),
            None => None,
        };
        Ok(RfContext { a0: a0.to_owned(), norms: row_norms(b0), test, probes })
    }

    fn record(&self, step: usize, eta: f64, risk: f64, a: ArrayView1<f64>) -> Result<LogRecord> {
        let max_a_dev = a.iter().zip(self.a0.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let test_risk = self.test.as_ref().map(|(s, ts)| model::half_mse(s.dot(&a).view(), ts.targets.view()));
        Ok(LogRecord {
            step,
            t: step as f64 * eta,
            train_risk: risk,
            test_risk,
            max_a_dev,
            max_b_dev: 0.0,
            path_norm: a.iter().zip(self.norms.iter()).map(|(x, n)| x.abs() * n).sum(),
            gram_drift: None,
            sup_gap: None,
            probe_values: self.probes.as_ref().map(|s| s.dot(&a).to_vec()),
        })
    }
}

/// Output of [`coupled_run`].
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub nn: TrajectoryLog,
    pub rf: TrajectoryLog,
    /// `(t, max_x |f_nn(x; Θ_t) − f_rf(x; ã_t)|)` over probes and training inputs.
    pub gap: Vec<(f64, f64)>,
    pub nn_params: NetParams,
    pub rf_a: Array1<f64>,
}

/// Runs the network and the random-feature flows from the same initial
/// function on identical step grids. The run ends when both flows meet a
/// stopping rule or the budget is spent.
pub fn coupled_run(params0: &NetParams, data: &Dataset, cfg: &RunConfig, probes: ArrayView2<f64>, monitor: &Monitor) -> Result<CoupledRun> {
    cfg.validate()?;
    if probes.ncols() != data.d() {
        return Err(Error::dims("probe dimension differs from data"));
    }
    crate::datagen::check_unit_rows(probes, 1e-9)?;
    let points = ndarray::concatenate![ndarray::Axis(0), probes, data.inputs()];

    let (mut tracker, stability) = NetTracker::new(params0, data, monitor)?;
    let mut nn_log = TrajectoryLog::new("nn", cfg.eta);
    nn_log.stability_eta = stability;
    let mut a = params0.a.clone();
    let mut b = params0.b.clone();

    let mut rf = RfFlow::new(params0.a.view(), params0.b.view(), data)?;
    let rf_ctx = RfContext::new(params0.a.view(), params0.b.view(), monitor)?;
    let mut rf_log = TrajectoryLog::new("rf", cfg.eta);
    rf_log.stability_eta = rf.stability()?;
    let rf_points = model::features(params0.b.view(), points.view())?;
    let mut rf_cap = None;

    let mut gap = Vec::new();
    let mut nn_done = None;
    let mut rf_done = None;
    let mut step = 0;
    loop {
        let ev = model::gradient_eval(a.view(), b.view(), data)?;
        tracker.check_divergence(step, ev.risk, &nn_log)?;
        let rf_risk = rf.eval();
        let c = *rf_cap.get_or_insert(DIVERGENCE_FACTOR * rf_risk.max(1.0));
        if !rf_risk.is_finite() || rf_risk > c {
            return Err(Error::Diverged { step, risk: rf_risk, log: Box::new(rf_log) });
        }
        let rule = |risk: f64| {
            if cfg.stop_risk.is_some_and(|s| risk <= s) {
                Some(RunStatus::Converged)
            } else if cfg.time_reached(step) {
                Some(RunStatus::TimeReached)
            } else {
                None
            }
        };
        nn_done = nn_done.or(rule(ev.risk));
        rf_done = rf_done.or(rule(rf_risk));
        let finished = (nn_done.is_some() && rf_done.is_some()) || step == cfg.max_steps;
        if step % cfg.log_every == 0 || finished {
            let f_nn = model::predict(a.view(), b.view(), points.view())?;
            let f_rf = rf_points.dot(&rf.a);
            let g = f_nn.iter().zip(f_rf.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let t = step as f64 * cfg.eta;
            gap.push((t, g));
            let mut rec = tracker.record(step, cfg.eta, ev.risk, a.view(), b.view())?;
            rec.sup_gap = Some(g);
            nn_log.push(rec);
            let mut rec = rf_ctx.record(step, cfg.eta, rf_risk, rf.a.view())?;
            rec.sup_gap = Some(g);
            rf_log.push(rec);
        }
        if finished {
            nn_log.status = nn_done.unwrap_or(RunStatus::BudgetExhausted);
            rf_log.status = rf_done.unwrap_or(RunStatus::BudgetExhausted);
            nn_log.steps = step;
            rf_log.steps = step;
            break;
        }
        a.scaled_add(-cfg.eta, &ev.grad.a);
        b.scaled_add(-cfg.eta, &ev.grad.b);
        rf.step(cfg.eta);
        step += 1;
    }
    rf_log.residual_integral = Some(rf.integral.to_vec());
    Ok(CoupledRun { nn: nn_log, rf: rf_log, gap, nn_params: NetParams { a, b, beta: params0.beta }, rf_a: rf.a })
}

/// Evaluates `σ(b_kᵀx)` features for a single input (used by oracles).
pub fn feature_vector(b0: ArrayView2<f64>, x: ArrayView1<f64>) -> Array1<f64> {
    b0.dot(&x).mapv_into(relu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_dataset, sample_sphere, TargetFunction};
    use crate::model::{gradient, init_params, InitConfig};
    use ndarray::array;

    fn cfg(eta: f64, steps: usize) -> RunConfig {
        RunConfig { eta, max_steps: steps, log_every: 1, stop_risk: None, stop_time: Some(eta * steps as f64) }
    }

    fn instance(n: usize, d: usize, m: usize, beta: f64, seed: u64) -> (NetParams, Dataset) {
        let data = make_dataset(&TargetFunction::RandomLabels, n, d, seed, 1).unwrap();
        let p = init_params(&InitConfig { m, d, beta, seed: seed + 100 }).unwrap();
        (p, data)
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(0.1, 5);
        assert!(c.validate().is_ok());
        c.stop_time = None;
        assert!(c.validate().is_err());
        c.stop_risk = Some(1e-3);
        c.eta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fixed_point_stays_fixed() {
        let x = sample_sphere(5, 3, 1).unwrap();
        let data = Dataset::new(x, Array1::zeros(5)).unwrap();
        let p = init_params(&InitConfig { m: 4, d: 3, beta: 0.0, seed: 2 }).unwrap();
        let (q, log) = train_nn(&p, &data, &cfg(0.1, 20), &Monitor::default()).unwrap();
        assert_eq!(p, q);
        assert!(log.records.iter().all(|r| r.train_risk == 0.0));
    }

    #[test]
    fn one_step_is_euler() {
        let (p, data) = instance(6, 4, 5, 0.7, 3);
        let g = gradient(&p, &data).unwrap();
        let (q, log) = train_nn(&p, &data, &cfg(0.05, 1), &Monitor::default()).unwrap();
        assert_eq!(q.a, &p.a - &(0.05 * &g.a));
        assert_eq!(q.b, &p.b - &(0.05 * &g.b));
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.status, RunStatus::TimeReached);
    }

    #[test]
    fn times_increase_and_final_step_logged() {
        let (p, data) = instance(6, 4, 5, 0.7, 3);
        let c = RunConfig { eta: 0.01, max_steps: 25, log_every: 10, stop_risk: Some(0.0), stop_time: None };
        let (_, log) = train_nn(&p, &data, &c, &Monitor::default()).unwrap();
        let steps: Vec<usize> = log.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert_eq!(log.status, RunStatus::BudgetExhausted);
        assert!(log.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn regularized_with_zero_lambda_matches_nn() {
        let (p, data) = instance(6, 4, 5, 0.7, 4);
        let c = cfg(0.02, 30);
        let (q1, l1) = train_nn(&p, &data, &c, &Monitor::default()).unwrap();
        let (q2, l2) = train_regularized(&p, &data, 0.0, &c, &Monitor::default()).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(l1.records, l2.records);
    }

    #[test]
    fn pure_penalty_shrinks_path_norm() {
        let x = sample_sphere(5, 3, 1).unwrap();
        let data = Dataset::new(x, Array1::zeros(5)).unwrap();
        let p = init_params(&InitConfig { m: 6, d: 3, beta: 0.01, seed: 2 }).unwrap();
        let eta = 1e-3;
        let (_, log) = train_regularized(&p, &data, 1.0, &cfg(eta, 200), &Monitor::default()).unwrap();
        // once |a_k| reaches the step size the subgradient chatters around 0
        let band = 6.0 * eta * penalty_coefficient(1.0, 3, 5) * 1.01;
        let collapse = log.records.iter().position(|r| r.path_norm <= band).unwrap();
        assert!(log.records[..=collapse].windows(2).all(|w| w[1].path_norm < w[0].path_norm));
        assert!(log.records[collapse..].iter().all(|r| r.path_norm <= band));
    }

    #[test]
    fn rf_stationary_at_exact_fit() {
        let x = sample_sphere(4, 3, 1).unwrap();
        let p = init_params(&InitConfig { m: 6, d: 3, beta: 0.1, seed: 2 }).unwrap();
        let y = model::predict(p.a.view(), p.b.view(), x.view()).unwrap();
        let data = Dataset::new(x, y).unwrap();
        let (a, _) = train_rf(p.a.view(), p.b.view(), &data, &cfg(0.1, 10), &Monitor::default()).unwrap();
        assert_eq!(a, p.a);
    }

    #[test]
    fn rf_single_sample_geometric_decay() {
        let x = array![[0.6, 0.8]];
        let data = Dataset::new(x.clone(), array![0.5]).unwrap();
        let b0 = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let a0 = array![0.0, 0.0, 0.0];
        let eta = 0.3;
        let (_, log) = train_rf(a0.view(), b0.view(), &data, &cfg(eta, 8), &Monitor::default()).unwrap();
        let phi = feature_vector(b0.view(), x.row(0));
        let ratio = 1.0 - eta * phi.dot(&phi);
        let mut e = -0.5f64;
        for r in &log.records {
            assert!((r.train_risk - 0.5 * e * e).abs() <= 1e-15);
            e *= ratio;
        }
    }

    #[test]
    fn divergence_is_reported_with_partial_log() {
        let (p, data) = instance(6, 4, 5, 1.0, 5);
        let c = RunConfig { eta: 1e4, max_steps: 100, log_every: 1, stop_risk: Some(0.0), stop_time: None };
        match train_nn(&p, &data, &c, &Monitor::default()) {
            Err(Error::Diverged { log, .. }) => assert!(!log.records.is_empty()),
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn coupled_starts_with_zero_gap() {
        let (p, data) = instance(5, 3, 40, 0.2, 6);
        let probes = fresh_probes(10, 3, 1).unwrap();
        let run = coupled_run(&p, &data, &cfg(0.05, 5), probes.view(), &Monitor::default()).unwrap();
        assert_eq!(run.gap[0].1, 0.0);
        assert_eq!(run.gap.len(), 6);
        // first step: both a-updates use identical features
        let (q, _) = train_nn(&p, &data, &cfg(0.05, 1), &Monitor::default()).unwrap();
        let (a_rf, _) = train_rf(p.a.view(), p.b.view(), &data, &cfg(0.05, 1), &Monitor::default()).unwrap();
        assert_eq!(q.a, a_rf);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let (p, data) = instance(5, 3, 4, 0.2, 7);
        let mon = Monitor { track_gram: true, ..Default::default() };
        let (_, log) = train_nn(&p, &data, &cfg(0.05, 3), &mon).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LOG_COLUMNS);
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[3], "");
        assert_eq!(first[8], "");
        assert!(first[7].parse::<f64>().unwrap() == 0.0);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (p, data) = instance(8, 4, 30, 0.5, 8);
        let c = cfg(0.05, 50);
        let mon = Monitor { track_gram: true, ..Default::default() };
        let (_, l1) = train_nn(&p, &data, &c, &mon).unwrap();
        let (_, l2) = train_nn(&p, &data, &c, &mon).unwrap();
        assert_eq!(l1, l2);
    }
}
