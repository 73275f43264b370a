//! Empirical checks of the analysis, shared by the `bound_audit` preset and
//! the test suites. Every frequency check draws one independent substream
//! per trial, so trials run in parallel without changing the result.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::datagen::{sample_sphere, CoefficientFn, Dataset, TargetFunction};
use crate::dynamics::{self, LogRecord, Monitor, RunConfig, TrajectoryLog};
use crate::kernel::{KernelMode, SpectralSummary};
use crate::model::{self, init_params, InitConfig};
use crate::theory::{self, CheckReport, TheoryLedger};
use crate::{linalg, rng, Error, Result};

/// Seed of trial `i` of a study keyed by `seed`.
pub fn trial_seed(seed: u64, study: u64, i: usize) -> u64 {
    rng::derive_key(seed, &[rng::TAG_TRIAL, study, i as u64])
}

/// `f*(x) = x₁/(2d)`, the Barron target with `a*(b) = b₁`, `γ = 1`.
pub fn linear_barron(d: usize) -> Result<TargetFunction> {
    let mut direction = vec![0.0; d];
    direction[0] = 1.0;
    TargetFunction::barron(CoefficientFn::Linear { direction, scale: 1.0 }, 1.0)
}

/// Dataset with noiseless labels `f*(x_i)` computed exactly.
pub fn exact_dataset(target: &TargetFunction, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let x = sample_sphere(n, d, seed)?;
    let y = x.rows().into_iter().map(|r| target.value(r)).collect::<Result<Array1<f64>>>()?;
    Dataset::new(x, y)
}

/// Envelope, deviation, neighborhood and regime checks of one network run.
pub fn trajectory_checks(log: &TrajectoryLog, ledger: &TheoryLedger) -> Result<Vec<CheckReport>> {
    let env = theory::envelope_check(log, ledger);
    let mut out = vec![CheckReport::new("risk_envelope", "exponential convergence for arbitrary labels", 1.0, 1, env.violations.len(), env.violations.is_empty())
        .with("worst_ratio", env.worst_ratio)
        .with("violations", &env.violations)
        .with("rate", ledger.rate())];
    let dev = theory::deviation_bound_check(log, ledger);
    out.push(
        CheckReport::new("parameter_deviation", "a-priori deviation radii along the flow", 2.0, 1, dev.flags.len(), dev.pass())
            .with("a_radius", dev.a_radius)
            .with("b_radius", dev.b_radius)
            .with("max_a_dev", dev.max_a_dev)
            .with("max_b_dev", dev.max_b_dev)
            .with("flags", &dev.flags),
    );
    let regime = dev.regime;
    out.push(
        CheckReport::new("deviation_regime_estimate", "dependence of the radii on beta and m", 1.0, 1, usize::from(!(regime.p_within && regime.q_within)), regime.p_within && regime.q_within)
            .with("regime", &regime.regime)
            .with("p_n", ledger.p_n)
            .with("q_n", ledger.q_n)
            .with("p_estimate", regime.p_estimate)
            .with("q_estimate", regime.q_estimate),
    );
    if log.records.iter().all(|r| r.gram_drift.is_some()) && !log.records.is_empty() {
        let radius = theory::neighborhood_radius(ledger.lambda_a, ledger.lambda_b, ledger.beta);
        let exit = theory::exit_time(log, radius)?;
        let max_drift = log.records.iter().filter_map(|r| r.gram_drift).fold(0.0, f64::max);
        out.push(
            CheckReport::new("gram_neighborhood", "Gram drift stays in the neighborhood of the initialization", radius, 1, usize::from(exit.is_some()), exit.is_none())
                .with("max_drift", max_drift)
                .with("exit_time", exit),
        );
    }
    Ok(out)
}

/// Largest `|r_nn − r_rf| / r_nn` over steps where both logs have a test risk.
pub fn max_relative_test_gap(nn: &TrajectoryLog, rf: &TrajectoryLog) -> f64 {
    let mut worst: f64 = 0.0;
    for a in &nn.records {
        let Some(b) = rf.records.iter().find(|r| r.step == a.step) else { continue };
        if let (Some(x), Some(y)) = (a.test_risk, b.test_risk) {
            worst = worst.max((x - y).abs() / x.abs());
        }
    }
    worst
}

/// Logged record with the smallest `train_risk + coef · path_norm`.
pub fn best_objective_record(log: &TrajectoryLog, coef: f64) -> Option<&LogRecord> {
    log.records.iter().min_by(|p, q| {
        let f = |r: &LogRecord| r.train_risk + coef * r.path_norm;
        f(p).total_cmp(&f(q))
    })
}

/// `|‖∇R̂_n‖² − (m/n) eᵀGe| ≤ 1e-10 max(1, ‖∇R̂_n‖²)` on random instances.
pub fn identity_check(instances: usize, seed: u64) -> Result<CheckReport> {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..instances {
        let s = trial_seed(seed, 1, i);
        let (n, d, m) = (3 + i % 7, 2 + i % 9, 5 + 13 * (i % 5));
        let beta = [1e-2, 0.3, 1.0, 3.0][i % 4];
        let data = exact_dataset(&TargetFunction::one_neuron_e1(d), n, d, s)?;
        let data = Dataset::new(data.inputs().to_owned(), data.labels().mapv(|y| y - 0.5))?;
        let p = init_params(&InitConfig { m, d, beta, seed: s })?;
        let (lhs, rhs) = theory::gradient_norm_identity_check(&p, &data)?;
        let rel = (lhs - rhs).abs() / lhs.max(1.0);
        worst = worst.max(rel);
        if rel > 1e-10 {
            failures += 1;
        }
    }
    Ok(CheckReport::new("gradient_norm_identity", "gradient norm equals the Gram quadratic form", 1e-10, instances, failures, failures == 0)
        .with("worst_relative_error", worst))
}

/// Frequency of `R̂_n(Θ₀) > ½(1 + c(δ)√m β)²` over initializations with
/// fresh random labels.
pub fn init_risk_frequency(n: usize, d: usize, m: usize, beta: f64, delta: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    let bound = theory::init_risk_bound(m, beta, delta)?;
    let risks = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, 2, i);
            let data = crate::datagen::make_dataset(&TargetFunction::RandomLabels, n, d, s, 1)?;
            let p = init_params(&InitConfig { m, d, beta, seed: s })?;
            model::empirical_risk(&p, &data)
        })
        .collect::<Result<Vec<f64>>>()?;
    let failures = risks.iter().filter(|&&r| r > bound).count();
    Ok(CheckReport::frequency("init_risk_bound", "initial empirical risk bound over the random initialization", delta, trials, failures)
        .with("bound", bound)
        .with("max_risk", risks.iter().cloned().fold(0.0, f64::max))
        .with("n", n)
        .with("d", d)
        .with("m", m)
        .with("beta", beta))
}

/// Frequency of `λ_min(G(Θ₀)) < ¾(λa + β²λb)` at the concentration width
/// `⌈8 ln(2n²/δ)/λ_n²⌉`, for fixed inputs drawn from `seed`.
pub fn gram_concentration_frequency(n: usize, d: usize, beta: f64, delta: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    let x = sample_sphere(n, d, seed)?;
    let (_, spectra) = SpectralSummary::for_inputs(x.view(), KernelMode::ClosedForm)?;
    let m = theory::gram_concentration_width(n, spectra.lambda_n, delta)?;
    let threshold = 0.75 * (spectra.lambda_a + beta * beta * spectra.lambda_b);
    let mins = (0..trials)
        .into_par_iter()
        .map(|i| {
            let g = theory::init_gram_streaming(InitConfig { m, d, beta, seed: trial_seed(seed, 3, i) }, x.view())?.g;
            linalg::min_eigenvalue(g.view(), linalg::default_tol(g.view()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let failures = mins.iter().filter(|&&v| v < threshold).count();
    Ok(CheckReport::frequency("gram_min_eigenvalue", "smallest eigenvalue of the initial Gram matrix", delta, trials, failures)
        .with("threshold", threshold)
        .with("min_observed", mins.iter().cloned().fold(f64::INFINITY, f64::min))
        .with("lambda_a", spectra.lambda_a)
        .with("lambda_b", spectra.lambda_b)
        .with("lambda_n", spectra.lambda_n)
        .with("m", m)
        .with("n", n)
        .with("d", d))
}

const POPULATION_SAMPLES: usize = 4000;

/// Frequency of `‖f(·; a*, B₀) − f*‖² > (γ²/m)(1 + √(2 ln(1/δ)))²` over
/// draws of `B₀`, for the target with `a*(b) = b₁`.
pub fn a_star_frequency(d: usize, m: usize, delta: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    let target = linear_barron(d)?;
    let bound = theory::a_star_risk_bound(1.0, m, delta)?;
    let stats = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, 4, i);
            let b0 = sample_sphere(m, d, s)?;
            let star = theory::a_star_construct(b0.view(), &target)?;
            if star.norm > star.norm_bound * (1.0 + 1e-12) {
                return Err(Error::invalid("a* norm exceeds gamma/sqrt(m)"));
            }
            let r = theory::population_risk_unhalved(star.a.view(), b0.view(), &target, POPULATION_SAMPLES, s)?;
            Ok(r.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let failures = stats.iter().filter(|&&r| r > bound).count();
    Ok(CheckReport::frequency("a_star_risk", "random-feature approximation of a Barron target", delta, trials, failures)
        .with("bound", bound)
        .with("max_risk", stats.iter().cloned().fold(0.0, f64::max))
        .with("m", m)
        .with("d", d)
        .with("population_samples", POPULATION_SAMPLES))
}

/// Frequency of `|R(a) − R̂_n(a)|` exceeding the Rademacher bound at `‖a‖`,
/// with `a` trained by the random-feature flow on each resampled training
/// set and `B₀` fixed. Both risks are unhalved. The allowed rate is `3δ`.
pub fn rad_frequency(m: usize, n: usize, d: usize, delta: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    let target = linear_barron(d)?;
    let b0 = sample_sphere(m, d, trial_seed(seed, 5, usize::MAX))?;
    let test = model::TestSet::sample(&target, POPULATION_SAMPLES, d, seed)?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, 5, i);
            let data = exact_dataset(&target, n, d, s)?;
            let cfg = RunConfig { eta: 0.5, max_steps: 2000, log_every: 2000, stop_risk: None, stop_time: Some(1000.0) };
            let (a, _) = dynamics::train_rf(Array1::zeros(m).view(), b0.view(), &data, &cfg, &Monitor::default())?;
            let train = 2.0 * model::rf_empirical_risk(a.view(), b0.view(), &data)?;
            let pop = 2.0 * test.risk(a.view(), b0.view())?.value;
            let norm = a.dot(&a).sqrt().max(f64::MIN_POSITIVE);
            Ok(((pop - train).abs(), theory::rad_gen_bound(norm, m, n, delta)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let failures = rows.iter().filter(|(gap, b)| gap > b).count();
    Ok(CheckReport::frequency("rademacher_gap", "generalization gap of the random-feature model", (3.0 * delta).min(1.0), trials, failures)
        .with("max_gap", rows.iter().map(|r| r.0).fold(0.0, f64::max))
        .with("min_bound", rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min))
        .with("m", m)
        .with("n", n))
}

/// Largest increase of `J` between consecutive snapshots, and the slack
/// `η · max |R̂(ã) − R̂(a*)|` it is compared with.
pub fn lyapunov_trace(log: &TrajectoryLog, a_star: ArrayView1<f64>, data: &Dataset) -> Result<(f64, f64)> {
    if log.snapshots.len() != log.records.len() || log.snapshots.is_empty() {
        return Err(Error::invalid("Lyapunov trace needs one snapshot per record"));
    }
    let b0 = log.snapshots[0].b.view();
    let risk_star = model::rf_empirical_risk(a_star, b0, data)?;
    let mut prev = None;
    let mut rise: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for (rec, snap) in log.records.iter().zip(&log.snapshots) {
        let j = theory::lyapunov_j(snap.a.view(), a_star, rec.train_risk, risk_star, rec.t);
        spread = spread.max((rec.train_risk - risk_star).abs());
        if let Some(p) = prev {
            rise = rise.max(j - p);
        }
        prev = Some(j);
    }
    Ok((rise, log.eta * spread))
}

/// `J(t)` along a random-feature run toward a Barron target with `a*` from
/// the construction, at a stable step size.
pub fn lyapunov_check(m: usize, n: usize, d: usize, seed: u64) -> Result<CheckReport> {
    let target = linear_barron(d)?;
    let data = exact_dataset(&target, n, d, seed)?;
    let p0 = init_params(&InitConfig { m, d, beta: 1.0 / (m as f64).sqrt(), seed })?;
    let star = theory::a_star_construct(p0.b.view(), &target)?;
    let s = model::features(p0.b.view(), data.inputs())?;
    let k = s.t().dot(&s) / n as f64;
    let eta = 1.0 / linalg::max_eigenvalue(k.view(), linalg::default_tol(k.view()))?;
    let cfg = RunConfig { eta, max_steps: 400, log_every: 1, stop_risk: None, stop_time: Some(400.0 * eta) };
    let (_, log) = dynamics::train_rf(p0.a.view(), p0.b.view(), &data, &cfg, &Monitor { keep_snapshots: true, ..Default::default() })?;
    let (rise, slack) = lyapunov_trace(&log, star.a.view(), &data)?;
    Ok(CheckReport::new("lyapunov_monotone", "Lyapunov function of the random-feature flow", slack, log.records.len(), usize::from(rise > slack), rise <= slack)
        .with("max_increase", rise)
        .with("eta", eta))
}

/// The change of the random-feature function at probes versus its
/// expansion in `{g_a(·, x_i)}` weighted by the logged residual integral.
pub fn span_property_check(m: usize, n: usize, d: usize, seed: u64) -> Result<CheckReport> {
    let data = crate::datagen::make_dataset(&TargetFunction::RandomLabels, n, d, seed, 1)?;
    let p0 = init_params(&InitConfig { m, d, beta: 1.0 / (m as f64).sqrt(), seed })?;
    let probes = dynamics::fresh_probes(20, d, seed)?;
    let monitor = Monitor { probes: Some(probes.clone()), ..Default::default() };
    let cfg = RunConfig { eta: 0.05, max_steps: 500, log_every: 500, stop_risk: None, stop_time: Some(25.0) };
    let (_, log) = dynamics::train_rf(p0.a.view(), p0.b.view(), &data, &cfg, &monitor)?;
    let first = Array1::from(log.records[0].probe_values.clone().expect("probes logged"));
    let last = Array1::from(log.final_record().and_then(|r| r.probe_values.clone()).expect("probes logged"));
    let diff = &last - &first;
    let integral = Array1::from(log.residual_integral.clone().expect("rf log has integral"));
    let rep = theory::span_check(p0.b.view(), data.inputs(), probes.view(), diff.view(), integral.view())?;
    let worst = rep.integral_error.max(rep.lsq_error);
    Ok(CheckReport::new("span_property", "random-feature solution lies in the span of n basis functions", 1e-8, 1, usize::from(worst > 1e-8), worst <= 1e-8)
        .with("integral_error", rep.integral_error)
        .with("lsq_error", rep.lsq_error)
        .with("scale", rep.scale))
}
