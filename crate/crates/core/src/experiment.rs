//! Experiment presets, per-run artifacts and tidy plot data.
//!
//! An artifact directory holds `runs/<run_id>.csv` trajectory logs,
//! `summary.json`, `checks.json` and a `MANIFEST` that lists every file with
//! the hash of the configuration that produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::audit;
use crate::datagen::{make_dataset, CoefficientFn, Dataset, TargetFunction};
use crate::dynamics::{self, penalty_coefficient, CoupledRun, Monitor, RunConfig, RunStatus, TrajectoryLog};
use crate::kernel::{KernelMode, SpectralSummary};
use crate::model::{init_params, InitConfig, NetParams, TestSet};
use crate::theory::{self, CheckReport, TheoryLedger};
use crate::{linalg, rng, Error, Result};

pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FitRandomLabels,
    OneNeuron,
    WidthSweep,
    CouplingSweep,
    BoundAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::FitRandomLabels,
        ExperimentKind::OneNeuron,
        ExperimentKind::WidthSweep,
        ExperimentKind::CouplingSweep,
        ExperimentKind::BoundAudit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FitRandomLabels => "fit_random_labels",
            ExperimentKind::OneNeuron => "one_neuron",
            ExperimentKind::WidthSweep => "width_sweep",
            ExperimentKind::CouplingSweep => "coupling_sweep",
            ExperimentKind::BoundAudit => "bound_audit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Initialization scale as a function of the width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaScale {
    /// `1/m`
    InvM,
    /// `1/√m`
    InvSqrtM,
    /// `m^{-1/4}`
    InvFourthRootM,
    /// `√m`
    SqrtM,
    /// `m`
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Fixed(f64),
    Scaled(BetaScale),
}

impl BetaSpec {
    pub fn resolve(&self, m: usize) -> f64 {
        let mf = m as f64;
        match self {
            BetaSpec::Fixed(b) => *b,
            BetaSpec::Scaled(BetaScale::InvM) => 1.0 / mf,
            BetaSpec::Scaled(BetaScale::InvSqrtM) => 1.0 / mf.sqrt(),
            BetaSpec::Scaled(BetaScale::InvFourthRootM) => mf.powf(-0.25),
            BetaSpec::Scaled(BetaScale::SqrtM) => mf.sqrt(),
            BetaSpec::Scaled(BetaScale::M) => mf,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BetaSpec::Fixed(b) => format!("{b}"),
            BetaSpec::Scaled(BetaScale::InvM) => "1/m".into(),
            BetaSpec::Scaled(BetaScale::InvSqrtM) => "1/sqrt(m)".into(),
            BetaSpec::Scaled(BetaScale::InvFourthRootM) => "m^(-1/4)".into(),
            BetaSpec::Scaled(BetaScale::SqrtM) => "sqrt(m)".into(),
            BetaSpec::Scaled(BetaScale::M) => "m".into(),
        }
    }

    /// The six-magnitude ladder used for the random-label fits.
    pub fn ladder() -> Vec<BetaSpec> {
        vec![
            BetaSpec::Scaled(BetaScale::InvM),
            BetaSpec::Scaled(BetaScale::InvSqrtM),
            BetaSpec::Scaled(BetaScale::InvFourthRootM),
            BetaSpec::Fixed(1.0),
            BetaSpec::Scaled(BetaScale::SqrtM),
            BetaSpec::Scaled(BetaScale::M),
        ]
    }
}

/// Learning-rate rule. `Auto` picks `min(cap, factor / (m λ_max(G(Θ₀))))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EtaRule {
    Fixed { value: f64 },
    Auto { factor: f64, cap: Option<f64> },
}

impl EtaRule {
    pub fn resolve(&self, params0: &NetParams, data: &Dataset) -> Result<f64> {
        match *self {
            EtaRule::Fixed { value } => Ok(value),
            EtaRule::Auto { factor, cap } => {
                let g = theory::gram_matrices(params0, data.inputs())?.g;
                let l = params0.m() as f64 * linalg::max_eigenvalue(g.view(), linalg::default_tol(g.view()))?;
                let eta = factor / l;
                Ok(cap.map_or(eta, |c| eta.min(c)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_steps: usize,
    pub log_every: usize,
    #[serde(default)]
    pub stop_risk: Option<f64>,
    #[serde(default)]
    pub stop_time: Option<f64>,
}

impl StopRule {
    pub fn run_config(&self, eta: f64) -> RunConfig {
        RunConfig { eta, max_steps: self.max_steps, log_every: self.log_every, stop_risk: self.stop_risk, stop_time: self.stop_time }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    RandomLabels,
    /// `σ(e₁ᵀx)`.
    OneNeuronE1,
    /// `E_b[c σ(bᵀx)]` with `γ = gamma`.
    BarronConstant { value: f64, gamma: f64 },
}

impl TargetSpec {
    pub fn build(&self, d: usize) -> Result<TargetFunction> {
        match self {
            TargetSpec::RandomLabels => Ok(TargetFunction::RandomLabels),
            TargetSpec::OneNeuronE1 => Ok(TargetFunction::one_neuron_e1(d)),
            TargetSpec::BarronConstant { value, gamma } => TargetFunction::barron(CoefficientFn::Constant { value: *value }, *gamma),
        }
    }
}

/// Path-norm regularized companion runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda: f64,
    pub stop: StopRule,
}

/// Settings of the frequency tests run by `bound_audit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub trials: usize,
    /// Gradient-identity instances.
    pub identity_instances: usize,
    /// Input count and dimension of the Gram-concentration instance.
    pub gram_n: usize,
    pub gram_d: usize,
    /// Width of the approximation check.
    pub a_star_width: usize,
    /// Width and sample count of the generalization-gap check.
    pub rad_width: usize,
    pub rad_samples: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings { trials: 100, identity_instances: 20, gram_n: 5, gram_d: 10, a_star_width: 500, rad_width: 50, rad_samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub d: usize,
    pub widths: Vec<usize>,
    pub betas: Vec<BetaSpec>,
    pub target: TargetSpec,
    pub eta: EtaRule,
    pub seeds: Vec<u64>,
    pub stop: StopRule,
    /// Size of the held-out set for test risks; 0 disables it.
    #[serde(default)]
    pub n_test: usize,
    #[serde(default)]
    pub regularization: Option<Regularization>,
    /// Fresh probe points added to the training inputs for the sup-gap.
    #[serde(default)]
    pub probes: usize,
    pub delta: f64,
    #[serde(default)]
    pub audit: Option<AuditSettings>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            n: 50,
            d: 50,
            widths: vec![10_000],
            betas: BetaSpec::ladder(),
            target: TargetSpec::RandomLabels,
            eta: EtaRule::Auto { factor: 1.0, cap: None },
            seeds: vec![0],
            stop: StopRule { max_steps: 100_000, log_every: 10, stop_risk: Some(1e-8), stop_time: None },
            n_test: 0,
            regularization: None,
            probes: 0,
            delta: 0.1,
            audit: None,
            output_dir: None,
        };
        match kind {
            ExperimentKind::FitRandomLabels => base,
            ExperimentKind::OneNeuron => ExperimentConfig {
                d: 10,
                widths: vec![4, 50, 1000],
                betas: vec![BetaSpec::Fixed(0.0)],
                target: TargetSpec::OneNeuronE1,
                eta: EtaRule::Fixed { value: 0.01 },
                stop: StopRule { max_steps: 60_000, log_every: 500, stop_risk: None, stop_time: Some(600.0) },
                n_test: 10_000,
                ..base
            },
            ExperimentKind::WidthSweep => ExperimentConfig {
                d: 10,
                widths: vec![10, 50, 250, 1000, 5000],
                betas: vec![BetaSpec::Fixed(0.0)],
                target: TargetSpec::OneNeuronE1,
                eta: EtaRule::Auto { factor: 1.0, cap: Some(0.05) },
                stop: StopRule { max_steps: 1_000_000, log_every: 1000, stop_risk: Some(1e-5), stop_time: None },
                n_test: 10_000,
                regularization: Some(Regularization {
                    lambda: 0.01,
                    stop: StopRule { max_steps: 1_000_000, log_every: 1000, stop_risk: None, stop_time: Some(2000.0) },
                }),
                ..base
            },
            ExperimentKind::CouplingSweep => ExperimentConfig {
                d: 10,
                widths: vec![1000, 4000, 16_000],
                betas: vec![BetaSpec::Scaled(BetaScale::InvSqrtM)],
                stop: StopRule { max_steps: 5000, log_every: 250, stop_risk: None, stop_time: None },
                probes: 100,
                ..base
            },
            ExperimentKind::BoundAudit => ExperimentConfig {
                n: 20,
                d: 10,
                widths: vec![4000],
                betas: vec![BetaSpec::Scaled(BetaScale::InvSqrtM)],
                stop: StopRule { max_steps: 20_000, log_every: 10, stop_risk: Some(1e-6), stop_time: None },
                audit: Some(AuditSettings::default()),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be at least 1");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be a non-empty list of positive integers");
        }
        if self.betas.is_empty() || self.seeds.is_empty() {
            return bad("betas and seeds must be non-empty");
        }
        if self.betas.iter().any(|b| matches!(b, BetaSpec::Fixed(v) if !(*v >= 0.0) || !v.is_finite())) {
            return bad("fixed beta values must be finite and >= 0");
        }
        match self.eta {
            EtaRule::Fixed { value } if !(value > 0.0) => return bad("eta must be positive"),
            EtaRule::Auto { factor, cap } if !(factor > 0.0) || cap.is_some_and(|c| !(c > 0.0)) => {
                return bad("eta factor and cap must be positive")
            }
            _ => {}
        }
        if self.stop.max_steps == 0 || self.stop.log_every == 0 {
            return bad("max_steps and log_every must be at least 1");
        }
        let stops = std::iter::once(&self.stop).chain(self.regularization.as_ref().map(|r| &r.stop));
        if stops.into_iter().any(|s| s.stop_risk.is_none() && s.stop_time.is_none()) && self.experiment != ExperimentKind::CouplingSweep {
            return bad("each stopping rule needs stop_risk, stop_time or both");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        let needs_test = matches!(self.experiment, ExperimentKind::OneNeuron | ExperimentKind::WidthSweep);
        if needs_test && (self.n_test == 0 || matches!(self.target, TargetSpec::RandomLabels)) {
            return bad("this experiment needs a target function and n_test >= 1");
        }
        if let Some(r) = &self.regularization {
            if !(r.lambda >= 0.0) || self.d < 2 {
                return bad("regularization needs lambda >= 0 and d >= 2");
            }
        }
        self.target.build(self.d)?;
        Ok(())
    }

    /// SHA-256 of the configuration with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Options outside the configuration proper.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Recorded in the summary. Every computation is deterministic given the
    /// seeds, so both modes produce identical bytes.
    pub reproducible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    TimeReached,
    BudgetExhausted,
    Diverged,
}

impl From<RunStatus> for Outcome {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => Outcome::Converged,
            RunStatus::TimeReached => Outcome::TimeReached,
            RunStatus::BudgetExhausted => Outcome::BudgetExhausted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub model: String,
    pub seed: u64,
    pub m: usize,
    pub beta: f64,
    pub beta_label: String,
    pub eta: f64,
    pub status: Outcome,
    pub steps: usize,
    pub final_t: f64,
    pub initial_risk: Option<f64>,
    pub final_train_risk: Option<f64>,
    pub final_test_risk: Option<f64>,
    pub file: String,
    pub metrics: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rng_algorithm: String,
    pub reproducible: bool,
    pub runs: Vec<RunSummary>,
    pub checks: Vec<CheckReport>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.status == Outcome::Diverged)
    }

    pub fn any_budget_exhausted(&self) -> bool {
        self.runs.iter().any(|r| r.status == Outcome::BudgetExhausted)
    }

    pub fn run(&self, model: &str, m: usize) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.model == model && r.m == m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        if !path.is_file() {
            return Err(Error::NoRuns(format!("{} (no summary.json; 0 runs)", dir.display())));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Documented choices where the experiment definitions leave values open.
fn substitution_notes(cfg: &ExperimentConfig) -> Vec<String> {
    let mut notes = Vec::new();
    match cfg.experiment {
        ExperimentKind::FitRandomLabels => {
            notes.push("beta ladder {1/m, 1/sqrt(m), m^(-1/4), 1, sqrt(m), m} is a chosen set of six magnitudes, not values taken from a source".into());
            notes.push("step budget: stop at training risk 1e-8 or 100000 steps; learning rate 1/(m lambda_max(G(theta_0)))".into());
        }
        ExperimentKind::WidthSweep => {
            notes.push("width grid {10, 50, 250, 1000, 5000} is a chosen substitute; 20000 is omitted because the stable step size would need about 7e5 steps per regularized run".into());
            notes.push("regularized runs report the test risk at the logged iterate with the lowest regularized objective".into());
        }
        ExperimentKind::CouplingSweep => {
            notes.push("each width runs 5000 steps at eta = 1/(m lambda_max(G(theta_0))), so every width covers the same number of its own time constants".into());
        }
        _ => {}
    }
    notes.push(format!("random streams: {}", rng::RNG_ALGORITHM));
    notes
}

/// One unit of work.
#[derive(Debug, Clone)]
struct Job {
    seed: u64,
    m: usize,
    beta: BetaSpec,
}

struct JobResult {
    runs: Vec<RunSummary>,
    checks: Vec<CheckReport>,
}

fn run_id(config_hash: &str, model: &str, job: &Job) -> String {
    let key = json!({ "config": config_hash, "model": model, "seed": job.seed, "m": job.m, "beta": job.beta.label() });
    sha256_hex(key.to_string().as_bytes())[..16].to_string()
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    dir: &'a Path,
}

impl Ctx<'_> {
    fn data(&self, seed: u64) -> Result<Dataset> {
        make_dataset(&self.cfg.target.build(self.cfg.d)?, self.cfg.n, self.cfg.d, seed, 100_000)
    }

    fn test_set(&self, seed: u64) -> Result<Option<TestSet>> {
        if self.cfg.n_test == 0 || matches!(self.cfg.target, TargetSpec::RandomLabels) {
            return Ok(None);
        }
        Ok(Some(TestSet::sample(&self.cfg.target.build(self.cfg.d)?, self.cfg.n_test, self.cfg.d, seed)?))
    }

    fn init(&self, job: &Job) -> Result<NetParams> {
        init_params(&InitConfig { m: job.m, d: self.cfg.d, beta: job.beta.resolve(job.m), seed: job.seed })
    }

    /// Writes the log and returns its summary entry.
    fn emit(&self, model: &str, job: &Job, eta: f64, log: &TrajectoryLog, status: Outcome) -> Result<RunSummary> {
        let id = run_id(&self.hash, model, job);
        let file = format!("runs/{id}.csv");
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        fs::write(self.dir.join(&file), buf)?;
        let last = log.final_record();
        Ok(RunSummary {
            run_id: id,
            model: model.to_string(),
            seed: job.seed,
            m: job.m,
            beta: job.beta.resolve(job.m),
            beta_label: job.beta.label(),
            eta,
            status,
            steps: log.steps,
            final_t: last.map_or(0.0, |r| r.t),
            initial_risk: log.records.first().map(|r| r.train_risk),
            final_train_risk: last.map(|r| r.train_risk),
            final_test_risk: last.and_then(|r| r.test_risk),
            file,
            metrics: Map::new(),
        })
    }

    /// Emits a finished run, or the partial log of a diverged one.
    fn emit_result<T>(&self, model: &str, job: &Job, eta: f64, res: Result<(T, TrajectoryLog)>) -> Result<(Option<T>, RunSummary, Option<TrajectoryLog>)> {
        match res {
            Ok((out, log)) => {
                let s = self.emit(model, job, eta, &log, log.status.into())?;
                Ok((Some(out), s, Some(log)))
            }
            Err(Error::Diverged { log, .. }) => {
                let mut s = self.emit(model, job, eta, &log, Outcome::Diverged)?;
                s.steps = log.records.last().map_or(0, |r| r.step);
                Ok((None, s, None))
            }
            Err(e) => Err(e),
        }
    }
}

fn fit_random_labels(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let data = ctx.data(job.seed)?;
    let p0 = ctx.init(job)?;
    let eta = ctx.cfg.eta.resolve(&p0, &data)?;
    let monitor = Monitor { track_gram: true, ..Default::default() };
    let res = dynamics::train_nn(&p0, &data, &ctx.cfg.stop.run_config(eta), &monitor);
    let (_, mut run, log) = ctx.emit_result("nn", job, eta, res)?;
    let mut checks = Vec::new();
    if let Some(log) = log {
        let (_, spectra) = SpectralSummary::for_inputs(data.inputs(), KernelMode::ClosedForm)?;
        let ledger = TheoryLedger::new(&spectra, ctx.cfg.delta, log.initial_risk(), job.m, p0.beta)?;
        for c in audit::trajectory_checks(&log, &ledger)? {
            checks.push(c.with("run_id", &run.run_id));
        }
        run.metrics.insert("ledger".into(), json!(ledger));
    }
    Ok(JobResult { runs: vec![run], checks })
}

fn one_neuron(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let data = ctx.data(job.seed)?;
    let p0 = ctx.init(job)?;
    let eta = ctx.cfg.eta.resolve(&p0, &data)?;
    let monitor = Monitor { test_set: ctx.test_set(job.seed)?, ..Default::default() };
    let cfg = ctx.cfg.stop.run_config(eta);
    let (_, mut nn, nn_log) = ctx.emit_result("nn", job, eta, dynamics::train_nn(&p0, &data, &cfg, &monitor))?;
    let (_, rf, rf_log) = ctx.emit_result("rf", job, eta, dynamics::train_rf(p0.a.view(), p0.b.view(), &data, &cfg, &monitor))?;
    if let (Some(a), Some(b)) = (nn_log, rf_log) {
        nn.metrics.insert("rf_over_nn_train_risk".into(), json!(b.final_risk() / a.final_risk()));
        nn.metrics.insert("max_relative_test_gap".into(), json!(audit::max_relative_test_gap(&a, &b)));
    }
    Ok(JobResult { runs: vec![nn, rf], checks: Vec::new() })
}

fn width_sweep(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let data = ctx.data(job.seed)?;
    let p0 = ctx.init(job)?;
    let eta = ctx.cfg.eta.resolve(&p0, &data)?;
    let monitor = Monitor { test_set: ctx.test_set(job.seed)?, ..Default::default() };
    let (_, nn, _) = ctx.emit_result("nn", job, eta, dynamics::train_nn(&p0, &data, &ctx.cfg.stop.run_config(eta), &monitor))?;
    let mut runs = vec![nn];
    if let Some(reg) = &ctx.cfg.regularization {
        let res = dynamics::train_regularized(&p0, &data, reg.lambda, &reg.stop.run_config(eta), &monitor);
        let (_, mut r, log) = ctx.emit_result("regularized", job, eta, res)?;
        if let Some(log) = log {
            let coef = penalty_coefficient(reg.lambda, data.d(), data.n());
            if let Some(best) = audit::best_objective_record(&log, coef) {
                r.metrics.insert("best_objective_t".into(), json!(best.t));
                r.metrics.insert("best_objective_test_risk".into(), json!(best.test_risk));
            }
        }
        runs.push(r);
    }
    Ok(JobResult { runs, checks: Vec::new() })
}

fn coupling_sweep(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let data = ctx.data(job.seed)?;
    let p0 = ctx.init(job)?;
    let eta = ctx.cfg.eta.resolve(&p0, &data)?;
    let mut stop = ctx.cfg.stop;
    if stop.stop_time.is_none() && stop.stop_risk.is_none() {
        stop.stop_time = Some(eta * stop.max_steps as f64);
    }
    let probes = dynamics::fresh_probes(ctx.cfg.probes, data.d(), job.seed)?;
    let res = dynamics::coupled_run(&p0, &data, &stop.run_config(eta), probes.view(), &Monitor::default());
    match res {
        Ok(CoupledRun { nn, rf, gap, .. }) => {
            let mut a = ctx.emit("nn", job, eta, &nn, nn.status.into())?;
            let b = ctx.emit("rf", job, eta, &rf, rf.status.into())?;
            a.metrics.insert("terminal_gap".into(), json!(gap.last().map(|g| g.1)));
            a.metrics.insert("max_gap".into(), json!(gap.iter().map(|g| g.1).fold(0.0, f64::max)));
            Ok(JobResult { runs: vec![a, b], checks: Vec::new() })
        }
        Err(Error::Diverged { log, .. }) => {
            let s = ctx.emit("nn", job, eta, &log, Outcome::Diverged)?;
            Ok(JobResult { runs: vec![s], checks: Vec::new() })
        }
        Err(e) => Err(e),
    }
}

fn bound_audit(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let mut res = fit_random_labels(ctx, job)?;
    let settings = ctx.cfg.audit.clone().unwrap_or_default();
    let seed = job.seed;
    let delta = ctx.cfg.delta;
    res.checks.push(audit::identity_check(settings.identity_instances, seed)?);
    res.checks.push(audit::init_risk_frequency(ctx.cfg.n, ctx.cfg.d, job.m, job.beta.resolve(job.m), delta, settings.trials, seed)?);
    res.checks.push(audit::gram_concentration_frequency(settings.gram_n, settings.gram_d, 1.0, delta, settings.trials, seed)?);
    res.checks.push(audit::a_star_frequency(ctx.cfg.d, settings.a_star_width, delta, settings.trials, seed)?);
    res.checks.push(audit::rad_frequency(settings.rad_width, settings.rad_samples, ctx.cfg.d, delta, settings.trials, seed)?);
    res.checks.push(audit::lyapunov_check(20, 10, ctx.cfg.d, seed)?);
    res.checks.push(audit::span_property_check(40, 8, ctx.cfg.d, seed)?);
    Ok(res)
}

/// Runs the configured experiment and writes its artifact directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    cfg.validate()?;
    let dir = opts.out_dir.as_path();
    fs::create_dir_all(dir.join("runs")).map_err(|e| Error::Config(format!("output directory {}: {e}", dir.display())))?;
    let hash = cfg.hash();
    let ctx = Ctx { cfg, hash: hash.clone(), dir };
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &m in &cfg.widths {
            for &beta in &cfg.betas {
                jobs.push(Job { seed, m, beta });
            }
        }
    }
    let work = |job: &Job| -> Result<JobResult> {
        match cfg.experiment {
            ExperimentKind::FitRandomLabels => fit_random_labels(&ctx, job),
            ExperimentKind::OneNeuron => one_neuron(&ctx, job),
            ExperimentKind::WidthSweep => width_sweep(&ctx, job),
            ExperimentKind::CouplingSweep => coupling_sweep(&ctx, job),
            ExperimentKind::BoundAudit => bound_audit(&ctx, job),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<JobResult>> = pool.install(|| jobs.par_iter().map(work).collect());
    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for r in results {
        let r = r?;
        runs.extend(r.runs);
        checks.extend(r.checks);
    }
    let summary = Summary {
        experiment: cfg.experiment,
        config_hash: hash,
        config: cfg.clone(),
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        reproducible: opts.reproducible,
        runs,
        checks,
        notes: substitution_notes(cfg),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&summary.checks)?)?;
    write_manifest(dir)?;
    Ok(summary)
}

/// Rewrites `MANIFEST`: one line `path<TAB>config_hash<TAB>sha256` per file,
/// preceded by `#` comment lines with the documented substitutions.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let summary = Summary::read(dir)?;
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for r in &summary.runs {
        owner.insert(r.file.clone(), summary.config_hash.clone());
    }
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut out = format!("# lazylab artifacts\n# experiment: {}\n# config_hash: {}\n", summary.experiment.name(), summary.config_hash);
    for note in &summary.notes {
        out.push_str(&format!("# note: {note}\n"));
    }
    for f in files.iter().filter(|f| f.as_str() != "MANIFEST") {
        let digest = sha256_hex(&fs::read(dir.join(f))?);
        let h = owner.get(f).unwrap_or(&summary.config_hash);
        out.push_str(&format!("{f}\t{h}\t{digest}\n"));
    }
    fs::write(dir.join("MANIFEST"), out)?;
    Ok(())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("inside root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

/// Paths listed in a `MANIFEST`.
pub fn manifest_entries(dir: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(dir.join("MANIFEST"))?
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').next().unwrap_or_default().to_string())
        .collect())
}

/// Tidy `series,x,y` rows.
#[derive(Debug, Clone, Default)]
struct Tidy {
    rows: Vec<(String, f64, f64)>,
}

impl Tidy {
    fn push(&mut self, series: &str, x: f64, y: f64) {
        self.rows.push((series.to_string(), x, y));
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["series", "x", "y"]).map_err(csv_err)?;
        for (s, x, y) in &self.rows {
            w.write_record([s.as_str(), &crate::fmt_f64(*x), &crate::fmt_f64(*y)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Columns of a trajectory CSV as optional floats.
pub fn read_log_columns(path: &Path) -> Result<BTreeMap<String, Vec<Option<f64>>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<Option<f64>>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (h, v) in headers.iter().zip(rec.iter()) {
            cols.get_mut(h).expect("header").push(v.parse::<f64>().ok());
        }
    }
    Ok(cols)
}

/// Result of [`emit_plot_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub series: usize,
    /// Runs whose CSV could not be read; their series are skipped.
    pub missing: Vec<String>,
}

/// Writes one tidy CSV per figure analog into `<dir>/plots/` and refreshes
/// the manifest.
pub fn emit_plot_data(dir: &Path) -> Result<PlotReport> {
    let summary = Summary::read(dir)?;
    if summary.runs.is_empty() {
        return Err(Error::NoRuns(format!("{} (0 runs in summary)", dir.display())));
    }
    let mut figures: BTreeMap<String, Tidy> = BTreeMap::new();
    let mut missing = Vec::new();
    let mut series = std::collections::BTreeSet::new();
    for run in &summary.runs {
        let cols = match read_log_columns(&dir.join(&run.file)) {
            Ok(c) => c,
            Err(e) => {
                missing.push(format!("{}: {e}", run.file));
                continue;
            }
        };
        let t = &cols["t"];
        let mut curve = |fig: &str, name: String, col: &str| {
            let tidy = figures.entry(fig.to_string()).or_default();
            for (x, y) in t.iter().zip(&cols[col]) {
                if let (Some(x), Some(y)) = (x, y) {
                    tidy.push(&name, *x, *y);
                }
            }
            series.insert((fig.to_string(), name));
        };
        let tag = format!("{} m={} beta={} seed={}", run.model, run.m, run.beta_label, run.seed);
        match summary.experiment {
            ExperimentKind::FitRandomLabels | ExperimentKind::BoundAudit => curve("train_risk", tag, "train_risk"),
            ExperimentKind::OneNeuron => {
                curve("train_risk", tag.clone(), "train_risk");
                curve("test_risk", tag, "test_risk");
            }
            ExperimentKind::CouplingSweep => {
                if run.model == "nn" {
                    curve("sup_gap", format!("m={} seed={}", run.m, run.seed), "sup_gap");
                }
            }
            ExperimentKind::WidthSweep => curve("train_risk", tag, "train_risk"),
        }
    }
    match summary.experiment {
        ExperimentKind::WidthSweep => {
            let tidy = figures.entry("test_vs_width".into()).or_default();
            let mut runs: Vec<&RunSummary> = summary.runs.iter().collect();
            runs.sort_by_key(|r| r.m);
            for r in runs {
                let y = if r.model == "regularized" {
                    r.metrics.get("best_objective_test_risk").and_then(Value::as_f64)
                } else {
                    r.final_test_risk
                };
                if let Some(y) = y {
                    tidy.push(&format!("{} seed={}", r.model, r.seed), r.m as f64, y);
                    series.insert(("test_vs_width".into(), format!("{} seed={}", r.model, r.seed)));
                }
            }
        }
        ExperimentKind::CouplingSweep => {
            let tidy = figures.entry("terminal_gap_vs_width".into()).or_default();
            let mut runs: Vec<&RunSummary> = summary.runs.iter().filter(|r| r.model == "nn").collect();
            runs.sort_by_key(|r| r.m);
            for r in runs {
                if let Some(g) = r.metrics.get("terminal_gap").and_then(Value::as_f64) {
                    tidy.push(&format!("seed={}", r.seed), r.m as f64, g);
                    series.insert(("terminal_gap_vs_width".into(), format!("seed={}", r.seed)));
                }
            }
        }
        _ => {}
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut files = Vec::new();
    for (name, tidy) in &figures {
        let path = plots.join(format!("{}_{name}.csv", summary.experiment.name()));
        tidy.write(&path)?;
        files.push(path);
    }
    write_manifest(dir)?;
    Ok(PlotReport { files, series: series.len(), missing })
}

/// Probe matrix helper re-exported for callers building their own studies.
pub fn probes_for(data: &Dataset, count: usize, seed: u64) -> Result<Array2<f64>> {
    dynamics::default_probes(data, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for k in ExperimentKind::ALL {
            let c = ExperimentConfig::preset(k);
            c.validate().unwrap();
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(ExperimentConfig::from_json(&s).unwrap(), c);
            assert_eq!(ExperimentKind::parse(k.name()).unwrap(), k);
        }
    }

    #[test]
    fn beta_ladder_values() {
        let m = 10_000;
        let v: Vec<f64> = BetaSpec::ladder().iter().map(|b| b.resolve(m)).collect();
        assert_eq!(v, vec![1e-4, 1e-2, 0.1, 1.0, 100.0, 1e4]);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c = ExperimentConfig::preset(ExperimentKind::OneNeuron);
        let h = c.hash();
        c.output_dir = Some("/tmp/x".into());
        assert_eq!(c.hash(), h);
        c.seeds = vec![1];
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ExperimentConfig::preset(ExperimentKind::FitRandomLabels);
        c.widths.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::preset(ExperimentKind::OneNeuron);
        c.n_test = 0;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json("{}").is_err());
    }

    #[test]
    fn empty_directory_has_no_runs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_plot_data(dir.path()), Err(Error::NoRuns(_))));
    }
}
