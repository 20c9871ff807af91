//! Seeded batch experiments and the estimators built on them.
//!
//! Trial `t` of a batch draws from `ChaCha8` seeded with the configured seed
//! on stream `t`, so results do not depend on how trials are spread over
//! worker threads. Reductions run in trial order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeKind};
use crate::protocol::{
    holder_qubit_fidelity, receiver_localize, two_receiver_target, AttemptDistribution, Holder,
    Protocol, ProtocolConfig, SampledRun, Stage, TeleportConfig, Teleporter,
};

/// Two-sided 95 % normal quantile used for Wilson intervals.
const Z95: f64 = 1.959_963_984_540_054;

/// Independent random stream of trial `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Which heralded preparation a batch repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// EPR link of parties 1 and 2.
    Epr,
    /// Full `n`-party chain.
    WState,
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

/// Mean and standard error of the mean.
fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// `t0 / ((1 − η)^{2n−1} p_c^n)`.
pub fn predicted_generation_time(n: usize, eta: f64, p_c: f64, t0: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta = {eta} outside [0, 1)")));
    }
    if !(p_c > 0.0 && p_c <= 1.0) {
        return Err(Error::Domain(format!("p_c = {p_c} outside (0, 1]")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Domain(format!("t0 = {t0} must be positive")));
    }
    let heralds = i32::try_from(2 * n - 1).map_err(|_| Error::Domain("n too large".into()))?;
    let rounds = i32::try_from(n).map_err(|_| Error::Domain("n too large".into()))?;
    Ok(t0 / ((1.0 - eta).powi(heralds) * p_c.powi(rounds)))
}

/// Standard errors and intervals for every estimate of a [`RunReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    /// Wilson interval of the fraction of trials that succeeded.
    pub success_rate_wilson: [f64; 2],
    pub mean_attempts_se: f64,
    pub mean_time_se: f64,
    pub stage_success_se: Vec<f64>,
    pub p_c_hat_se: f64,
    pub predicted_time_se: Option<f64>,
    pub c_n_hat_se: Option<f64>,
    pub fidelity_se: Option<f64>,
}

/// Aggregate of a batch of independent preparations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trials: u64,
    pub successes: u64,
    pub exhausted: u64,
    pub stage_labels: Vec<String>,
    /// Mean number of full attempts per trial.
    pub mean_attempts: f64,
    /// Mean number of executions of each stage per trial.
    pub mean_attempts_per_stage: Vec<f64>,
    /// Conditional success probability of each stage given that it runs.
    pub stage_success_prob: Vec<f64>,
    /// Probability that one full attempt succeeds.
    pub attempt_success_prob: f64,
    /// Loss-normalized per-round success probability: the value that makes
    /// `(1 − η)^{heralds} p_c^{rounds}` equal the attempt success rate.
    pub p_c_hat: f64,
    pub mean_time_s: f64,
    /// Scaling-law time with `p_c_hat`; `None` when no round ever passed.
    pub predicted_time_s: Option<f64>,
    /// Noise-to-W ratio among heralded outcomes.
    pub c_n_hat: Option<f64>,
    /// Mean fidelity of heralded outcomes with the ideal target.
    pub fidelity_mean: Option<f64>,
    pub confidence: Confidence,
}

struct Plan {
    dist: AttemptDistribution,
    /// Fidelity with the target and atomic excitation number per outcome.
    outcome_info: Vec<(f64, Option<u32>)>,
    rounds: usize,
    cfg: ProtocolConfig,
}

impl Plan {
    fn new(cfg: &ProtocolConfig, experiment: Experiment) -> Result<Self> {
        let proto = Protocol::new(cfg.clone())?;
        let (stages, target) = match experiment {
            Experiment::Epr => (proto.epr_stages(), proto.epr_target()?),
            Experiment::WState => (proto.stages()?, proto.ideal_w_state()?),
        };
        let dist = AttemptDistribution::exact(&stages, &proto.context(), &proto.vacuum())?;
        let outcome_info = dist
            .outcomes()
            .iter()
            .map(|o| {
                Ok((
                    o.state.fidelity(&target)?,
                    o.state.definite_excitations(ModeKind::AtomicCollective),
                ))
            })
            .collect::<Result<_>>()?;
        let rounds = stages
            .iter()
            .filter(|s| matches!(s, Stage::Link { .. }))
            .count();
        Ok(Self {
            dist,
            outcome_info,
            rounds,
            cfg: cfg.clone(),
        })
    }

    fn run(&self, trials: u64, workers: Option<usize>) -> Result<Vec<SampledRun>> {
        let job = || {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    self.dist
                        .sample(self.cfg.max_attempts, &mut trial_rng(self.cfg.seed, t))
                })
                .collect::<Vec<_>>()
        };
        with_workers(workers, job)
    }

    fn report(&self, runs: &[SampledRun]) -> Result<RunReport> {
        let trials = runs.len() as u64;
        let successes = runs.iter().filter(|r| r.succeeded).count() as u64;
        let stages = self.dist.stage_labels().len();

        let mut executed = vec![0u128; stages + 1];
        for r in runs {
            for (k, &a) in r.stage_attempts.iter().enumerate() {
                executed[k] += u128::from(a);
            }
        }
        executed[stages] = u128::from(successes);
        let mut stage_success_prob = Vec::with_capacity(stages);
        let mut stage_success_se = Vec::with_capacity(stages);
        let mut log_var = 0.0;
        for k in 0..stages {
            let (p, se) = if executed[k] == 0 {
                (0.0, 0.0)
            } else {
                let p = executed[k + 1] as f64 / executed[k] as f64;
                let n = executed[k] as f64;
                if p > 0.0 {
                    log_var += (1.0 - p) / (p * n);
                }
                (p, (p * (1.0 - p) / n).sqrt())
            };
            stage_success_prob.push(p);
            stage_success_se.push(se);
        }
        let attempt_success_prob: f64 = stage_success_prob.iter().product();
        let eta = self.cfg.eta;
        let p_c_hat = if attempt_success_prob > 0.0 {
            (attempt_success_prob / (1.0 - eta).powi(stages as i32)).powf(1.0 / self.rounds as f64)
        } else {
            0.0
        };
        let p_c_hat_se = p_c_hat * log_var.sqrt() / self.rounds as f64;
        let predicted_time_s = if p_c_hat > 0.0 {
            Some(predicted_generation_time(
                self.rounds,
                eta,
                p_c_hat.min(1.0),
                self.cfg.t0,
            )?)
        } else {
            None
        };
        let predicted_time_se = predicted_time_s.map(|t| t * log_var.sqrt());

        let (mean_attempts, mean_attempts_se) = mean_se(runs.iter().map(|r| r.attempts as f64));
        let mean_attempts_per_stage = (0..stages)
            .map(|k| executed[k] as f64 / trials as f64)
            .collect();

        let heralded: Vec<(f64, Option<u32>)> = runs
            .iter()
            .filter_map(|r| r.outcome.map(|i| self.outcome_info[i]))
            .collect();
        let (fidelity_mean, fidelity_se) = if heralded.is_empty() {
            (None, None)
        } else {
            let (m, se) = mean_se(heralded.iter().map(|h| h.0));
            (Some(m), Some(se))
        };
        let w_count = heralded.iter().filter(|h| h.1 == Some(1)).count() as u64;
        let (c_n_hat, c_n_hat_se) = if w_count == 0 {
            (None, None)
        } else {
            let q = (successes - w_count) as f64 / successes as f64;
            let se = binomial_se(q, successes) / (1.0 - q).powi(2);
            (Some(q / (1.0 - q)), Some(se))
        };

        Ok(RunReport {
            trials,
            successes,
            exhausted: trials - successes,
            stage_labels: self.dist.stage_labels().to_vec(),
            mean_attempts,
            mean_attempts_per_stage,
            stage_success_prob,
            attempt_success_prob,
            p_c_hat,
            mean_time_s: mean_attempts * self.cfg.t0,
            predicted_time_s,
            c_n_hat,
            fidelity_mean,
            confidence: Confidence {
                success_rate_wilson: wilson_interval(successes, trials),
                mean_attempts_se,
                mean_time_se: mean_attempts_se * self.cfg.t0,
                stage_success_se,
                p_c_hat_se,
                predicted_time_se,
                c_n_hat_se,
                fidelity_se,
            },
        })
    }
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        Err(Error::Config("trials must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Runs `trials` independent chain builds on the default thread pool.
pub fn run_batch(cfg: &ProtocolConfig, trials: u64) -> Result<RunReport> {
    run_experiment(cfg, Experiment::WState, trials, None)
}

pub fn run_batch_with_workers(
    cfg: &ProtocolConfig,
    trials: u64,
    workers: usize,
) -> Result<RunReport> {
    run_experiment(cfg, Experiment::WState, trials, Some(workers))
}

/// Runs `trials` independent repeat-until-success preparations.
/// `workers = None` uses the global thread pool.
pub fn run_experiment(
    cfg: &ProtocolConfig,
    experiment: Experiment,
    trials: u64,
    workers: Option<usize>,
) -> Result<RunReport> {
    check_trials(trials)?;
    let plan = Plan::new(cfg, experiment)?;
    plan.report(&plan.run(trials, workers)?)
}

/// Weighted ensemble of pure states.
#[derive(Debug, Clone)]
pub struct NoisyStateMixture {
    components: Vec<(f64, FockState)>,
}

impl NoisyStateMixture {
    /// Components are normalized; weights must be non-negative and sum to 1.
    pub fn new(components: Vec<(f64, FockState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Precondition("mixture needs a component".into()));
        }
        if components.iter().any(|(w, _)| w.is_nan() || *w < 0.0) {
            return Err(Error::Precondition(
                "mixture weights must be non-negative".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "mixture weights sum to {total}"
            )));
        }
        let components = components
            .into_iter()
            .map(|(w, s)| Ok((w, s.normalized()?)))
            .collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, FockState)] {
        &self.components
    }
}

/// `Σ w_k |⟨target|ψ_k⟩|²` for a normalized `target`.
pub fn fidelity_mixture(mix: &NoisyStateMixture, target: &FockState) -> Result<f64> {
    if (target.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(
            "fidelity target must be normalized".into(),
        ));
    }
    mix.components
        .iter()
        .map(|(w, s)| Ok(w * target.inner(s)?.norm_sqr()))
        .sum()
}

/// Estimates the noise coefficient `c_n` from `trials` chain builds.
///
/// Heralded outcomes with exactly one atomic excitation are counted as the W
/// component; every other outcome (vacuum or surplus excitations) is noise
/// and orthogonal to W. Returns `c_n` and the mixture
/// `(c_n ρ_noise + |W⟩⟨W|)/(c_n + 1)` with `ρ_noise` the empirical mixture of
/// noise outcomes.
pub fn estimate_vacuum_coefficient(
    cfg: &ProtocolConfig,
    trials: u64,
) -> Result<(f64, NoisyStateMixture)> {
    estimate_vacuum_coefficient_with_workers(cfg, trials, None)
}

pub fn estimate_vacuum_coefficient_with_workers(
    cfg: &ProtocolConfig,
    trials: u64,
    workers: Option<usize>,
) -> Result<(f64, NoisyStateMixture)> {
    if trials < 1000 {
        return Err(Error::Precondition(format!(
            "noise estimation needs at least 1000 trials, got {trials}"
        )));
    }
    let plan = Plan::new(cfg, Experiment::WState)?;
    let runs = plan.run(trials, workers)?;
    let mut counts = vec![0u64; plan.dist.outcomes().len()];
    for r in &runs {
        if let Some(i) = r.outcome {
            counts[i] += 1;
        }
    }
    let successes: u64 = counts.iter().sum();
    if successes == 0 {
        return Err(Error::InsufficientData(
            "no heralded outcome in the batch".into(),
        ));
    }
    let is_w = |i: usize| plan.outcome_info[i].1 == Some(1);
    let w_count: u64 = (0..counts.len())
        .filter(|&i| is_w(i))
        .map(|i| counts[i])
        .sum();
    if w_count == 0 {
        return Err(Error::InsufficientData(
            "no single-excitation outcome in the batch".into(),
        ));
    }
    let c = (successes - w_count) as f64 / w_count as f64;
    let ideal = Protocol::new(cfg.clone())?.ideal_w_state()?;
    let mut components = vec![(w_count as f64 / successes as f64, ideal)];
    for (i, &k) in counts.iter().enumerate() {
        if k > 0 && !is_w(i) {
            components.push((
                k as f64 / successes as f64,
                plan.dist.outcomes()[i].state.clone(),
            ));
        }
    }
    Ok((c, NoisyStateMixture::new(components)?))
}

/// One row of a scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub report: RunReport,
    /// `mean_time(n) / mean_time(n − 1)`.
    pub ratio_to_prev: Option<f64>,
    pub ratio_to_prev_se: Option<f64>,
    /// `1/((1 − η)² p̂_c(n − 1))`, the per-party factor of the scaling law.
    pub law_ratio: Option<f64>,
}

/// Chain builds for every `n` in `n_min..=n_max` with otherwise equal
/// parameters. Phases missing from `base` are zero.
pub fn scaling_sweep(
    base: &ProtocolConfig,
    n_min: usize,
    n_max: usize,
    trials: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if n_min < 3 || n_max < n_min {
        return Err(Error::Config(format!(
            "sweep range {n_min}..={n_max} must satisfy 3 ≤ n_min ≤ n_max"
        )));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for n in n_min..=n_max {
        let cfg = ProtocolConfig {
            n,
            phases: (0..n)
                .map(|k| base.phases.get(k).copied().unwrap_or(0.0))
                .collect(),
            ..base.clone()
        };
        let report = run_experiment(&cfg, Experiment::WState, trials, workers)?;
        let (ratio_to_prev, ratio_to_prev_se, law_ratio) = match rows.last() {
            Some(prev) => {
                let (m0, m1) = (prev.report.mean_time_s, report.mean_time_s);
                let r = m1 / m0;
                let rel = ((prev.report.confidence.mean_time_se / m0).powi(2)
                    + (report.confidence.mean_time_se / m1).powi(2))
                .sqrt();
                let law = (prev.report.p_c_hat > 0.0)
                    .then(|| 1.0 / ((1.0 - base.eta).powi(2) * prev.report.p_c_hat));
                (Some(r), Some(r * rel), law)
            }
            None => (None, None, None),
        };
        rows.push(SweepRow {
            n,
            report,
            ratio_to_prev,
            ratio_to_prev_se,
            law_ratio,
        });
    }
    Ok(rows)
}

/// Aggregate of a batch of teleportation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportReport {
    pub trials: u64,
    pub successes: u64,
    pub exhausted: u64,
    pub mean_attempts: f64,
    /// Mean W₃ preparation attempts consumed per trial.
    pub mean_resource_attempts: f64,
    /// `t0` times all attempts, teleportation and resources alike.
    pub mean_time_s: f64,
    /// Fraction of heralded outcomes without any atomic excitation.
    pub vacuum_fraction: Option<f64>,
    /// Mean fidelity of non-vacuum outcomes with the expected two-receiver
    /// state.
    pub target_fidelity_mean: Option<f64>,
    /// Outcomes on which the receivers could localize the excitation.
    pub localized: u64,
    pub carol_fraction: Option<f64>,
    pub holder_fidelity_mean: Option<f64>,
    pub confidence: TeleportConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportConfidence {
    pub success_rate_wilson: [f64; 2],
    pub mean_attempts_se: f64,
    pub mean_time_se: f64,
    pub vacuum_fraction_wilson: Option<[f64; 2]>,
    pub carol_fraction_se: Option<f64>,
    pub carol_fraction_wilson: Option<[f64; 2]>,
    pub target_fidelity_se: Option<f64>,
    pub holder_fidelity_se: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct TeleportTrial {
    succeeded: bool,
    attempts: u64,
    resource_attempts: u64,
    vacuum: bool,
    target_fidelity: Option<f64>,
    holder: Option<(bool, f64)>,
}

/// Runs `trials` independent teleportations; trial `t` localizes on
/// Carol's ensembles after a successful herald.
pub fn run_teleport_batch(
    tcfg: &TeleportConfig,
    trials: u64,
    workers: Option<usize>,
) -> Result<TeleportReport> {
    check_trials(trials)?;
    let teleporter = Teleporter::new(tcfg.clone())?;
    let layout = teleporter.layout();
    let (alpha, beta) = (tcfg.alpha(), tcfg.beta());
    let target = two_receiver_target(layout, alpha, beta, &tcfg.base.phases)?;
    let one = |t: u64| -> Result<TeleportTrial> {
        let mut rng = trial_rng(tcfg.base.seed, t);
        let out = match teleporter.teleport(&mut rng) {
            Ok(out) => out,
            Err(Error::AttemptsExhausted { attempts, .. }) => {
                return Ok(TeleportTrial {
                    attempts,
                    ..TeleportTrial::default()
                })
            }
            Err(e) => return Err(e),
        };
        let state = &out.step.state;
        let mut trial = TeleportTrial {
            succeeded: true,
            attempts: out.step.attempts,
            resource_attempts: out.resource_attempts,
            vacuum: out.vacuum,
            ..TeleportTrial::default()
        };
        if !out.vacuum {
            trial.target_fidelity = Some(state.fidelity(&target)?);
        }
        if state.definite_excitations(ModeKind::AtomicCollective) == Some(1) {
            let (holder, residual) = receiver_localize(state, &layout.carol(), &mut rng)?;
            let (is_carol, pair) = match holder {
                Holder::ThisReceiver => (true, layout.carol()),
                Holder::OtherReceiver => (false, layout.bob()),
            };
            trial.holder = Some((
                is_carol,
                holder_qubit_fidelity(&residual, pair, alpha, beta)?,
            ));
        }
        Ok(trial)
    };
    let results: Vec<TeleportTrial> = with_workers(workers, || {
        (0..trials)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()
    })??;

    let successes = results.iter().filter(|r| r.succeeded).count() as u64;
    let (mean_attempts, mean_attempts_se) = mean_se(results.iter().map(|r| r.attempts as f64));
    let (mean_resource_attempts, _) = mean_se(results.iter().map(|r| r.resource_attempts as f64));
    let (mean_total, total_se) = mean_se(
        results
            .iter()
            .map(|r| (r.attempts + r.resource_attempts) as f64),
    );
    let vacuum = results.iter().filter(|r| r.succeeded && r.vacuum).count() as u64;
    let fid = |xs: Vec<f64>| {
        if xs.is_empty() {
            (None, None)
        } else {
            let (m, se) = mean_se(xs.into_iter());
            (Some(m), Some(se))
        }
    };
    let (target_fidelity_mean, target_fidelity_se) =
        fid(results.iter().filter_map(|r| r.target_fidelity).collect());
    let holders: Vec<(bool, f64)> = results.iter().filter_map(|r| r.holder).collect();
    let localized = holders.len() as u64;
    let carol = holders.iter().filter(|h| h.0).count() as u64;
    let (holder_fidelity_mean, holder_fidelity_se) = fid(holders.iter().map(|h| h.1).collect());
    let carol_fraction = (localized > 0).then(|| carol as f64 / localized as f64);

    Ok(TeleportReport {
        trials,
        successes,
        exhausted: trials - successes,
        mean_attempts,
        mean_resource_attempts,
        mean_time_s: mean_total * tcfg.base.t0,
        vacuum_fraction: (successes > 0).then(|| vacuum as f64 / successes as f64),
        target_fidelity_mean,
        localized,
        carol_fraction,
        holder_fidelity_mean,
        confidence: TeleportConfidence {
            success_rate_wilson: wilson_interval(successes, trials),
            mean_attempts_se,
            mean_time_se: total_se * tcfg.base.t0,
            vacuum_fraction_wilson: (successes > 0).then(|| wilson_interval(vacuum, successes)),
            carol_fraction_se: carol_fraction.map(|p| binomial_se(p, localized)),
            carol_fraction_wilson: (localized > 0).then(|| wilson_interval(carol, localized)),
            target_fidelity_se,
            holder_fidelity_se,
        },
    })
}
