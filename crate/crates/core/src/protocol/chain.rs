//! Repeat-until-success execution of stage sequences.
//!
//! Every failed herald resets all ensembles and restarts the sequence from
//! its first stage, so attempts are independent and identically distributed.
//! [`AttemptDistribution`] enumerates one attempt exactly (the probability
//! of reaching each stage and the distribution of final states on success);
//! [`AttemptDistribution::sample`] then draws the number of failed attempts
//! from the geometric law and splits them across stages, which reproduces
//! the sampled protocol without iterating through billions of failures.
//! [`run_direct`] is the literal trajectory-by-trajectory loop and serves as
//! the cross-check.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};

use crate::error::{Error, Result};
use crate::fock::FockState;
use crate::optics::sample_weighted;

use super::stages::{stage_success_branches, Sample, Stage, StageContext};

/// Branches whose conditional weight falls below this are dropped.
pub const BRANCH_PRUNE_WEIGHT: f64 = 1e-14;

/// Amplitudes rounded on a grid, used to merge identical outcomes.
type StateKey = Vec<(Box<[u8]>, i64, i64)>;

/// Result of a repeat-until-success run.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub succeeded: bool,
    /// Full attempts consumed, including the successful one.
    pub attempts: u64,
    pub state: FockState,
    /// Detector record of the final attempt.
    pub click_log: Vec<(String, bool)>,
    /// Number of times each stage was executed.
    pub stage_attempts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct WeightedOutcome {
    /// Probability of this final state given that the attempt succeeded.
    pub weight: f64,
    pub state: FockState,
    pub clicks: Vec<(String, bool)>,
}

/// Exact outcome law of one attempt through a stage sequence.
#[derive(Debug, Clone)]
pub struct AttemptDistribution {
    labels: Vec<String>,
    /// `reach[k]` is the probability that stage `k` is executed;
    /// `reach[K]` is the success probability of the attempt.
    reach: Vec<f64>,
    outcomes: Vec<WeightedOutcome>,
}

/// Canonical key of a normalized state modulo global phase.
fn mixture_key(state: &FockState) -> Vec<(Box<[u8]>, i64, i64)> {
    let max = state.terms().map(|(_, a)| a.norm()).fold(0.0, f64::max);
    let pivot = state
        .terms()
        .find(|(_, a)| a.norm() > 1e-6 * max)
        .map(|(_, a)| *a)
        .unwrap_or(Complex64::new(1.0, 0.0));
    let rot = pivot.conj() / pivot.norm();
    state
        .terms()
        .filter_map(|(occ, a)| {
            let b = a * rot;
            let re = (b.re * 1e10).round() as i64;
            let im = (b.im * 1e10).round() as i64;
            (re != 0 || im != 0).then(|| (occ.counts().into(), re, im))
        })
        .collect()
}

impl AttemptDistribution {
    pub fn exact(stages: &[Stage], ctx: &StageContext<'_>, input: &FockState) -> Result<Self> {
        let input = input.normalized()?;
        let mut frontier = vec![WeightedOutcome {
            weight: 1.0,
            state: input,
            clicks: Vec::new(),
        }];
        let mut reach = vec![1.0];
        for stage in stages {
            let mut next: Vec<WeightedOutcome> = Vec::new();
            let mut index: HashMap<StateKey, usize> = HashMap::new();
            let mut pass = 0.0;
            for item in &frontier {
                let (_, branches) = stage_success_branches(stage, ctx, &item.state)?;
                for (p, o) in branches {
                    let w = item.weight * p;
                    pass += w;
                    let key = mixture_key(&o.state);
                    match index.get(&key) {
                        Some(&slot) => next[slot].weight += w,
                        None => {
                            index.insert(key, next.len());
                            next.push(WeightedOutcome {
                                weight: w,
                                state: o.state,
                                clicks: o.clicks,
                            });
                        }
                    }
                }
            }
            let last = *reach.last().expect("non-empty");
            reach.push(last * pass);
            if pass > 0.0 {
                next.retain(|o| o.weight / pass >= BRANCH_PRUNE_WEIGHT);
                let kept: f64 = next.iter().map(|o| o.weight).sum();
                for o in &mut next {
                    o.weight /= kept;
                }
            }
            frontier = next;
        }
        Ok(Self {
            labels: stages.iter().map(Stage::label).collect(),
            reach,
            outcomes: frontier,
        })
    }

    pub fn stage_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn success_probability(&self) -> f64 {
        *self.reach.last().expect("non-empty")
    }

    /// Probability that stage `k` is executed within one attempt.
    pub fn reach_probability(&self, k: usize) -> f64 {
        self.reach[k]
    }

    /// Conditional success probability of stage `k` given that it runs.
    pub fn stage_pass_probability(&self, k: usize) -> f64 {
        if self.reach[k] == 0.0 {
            0.0
        } else {
            self.reach[k + 1] / self.reach[k]
        }
    }

    pub fn outcomes(&self) -> &[WeightedOutcome] {
        &self.outcomes
    }

    /// Draws a full repeat-until-success run of at most `max_attempts`
    /// attempts.
    pub fn sample<R: Rng + ?Sized>(&self, max_attempts: u64, rng: &mut R) -> SampledRun {
        let stages = self.labels.len();
        let p = self.success_probability();
        let failures = if p <= 0.0 {
            max_attempts
        } else if p >= 1.0 {
            0
        } else {
            let geo = Geometric::new(p).expect("probability in (0, 1)");
            geo.sample(rng).min(max_attempts)
        };
        let succeeded = failures < max_attempts;

        // split the failed attempts over the stage at which they stopped
        let mut per_stage = vec![0u64; stages];
        let mut remaining = failures;
        let mut mass_left = 1.0 - p;
        for (k, slot) in per_stage.iter_mut().enumerate() {
            if remaining == 0 {
                break;
            }
            let q = self.reach[k] - self.reach[k + 1];
            let frac = if k + 1 == stages || mass_left <= 0.0 {
                1.0
            } else {
                (q / mass_left).clamp(0.0, 1.0)
            };
            let c = if frac >= 1.0 {
                remaining
            } else if frac <= 0.0 {
                0
            } else {
                Binomial::new(remaining, frac)
                    .expect("valid binomial")
                    .sample(rng)
            };
            *slot = c;
            remaining -= c;
            mass_left -= q;
        }
        let mut stage_attempts = vec![0u64; stages];
        let mut tail = u64::from(succeeded);
        for k in (0..stages).rev() {
            tail += per_stage[k];
            stage_attempts[k] = tail;
        }

        let outcome = succeeded.then(|| {
            let weights: Vec<f64> = self.outcomes.iter().map(|o| o.weight).collect();
            sample_weighted(&weights, rng)
        });
        SampledRun {
            succeeded,
            attempts: if succeeded {
                failures + 1
            } else {
                max_attempts
            },
            stage_attempts,
            outcome,
        }
    }
}

/// One draw from [`AttemptDistribution::sample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledRun {
    pub succeeded: bool,
    pub attempts: u64,
    pub stage_attempts: Vec<u64>,
    /// Index into [`AttemptDistribution::outcomes`] on success.
    pub outcome: Option<usize>,
}

impl SampledRun {
    pub fn into_step(self, dist: &AttemptDistribution, fallback: &FockState) -> StepOutcome {
        let (state, click_log) = match self.outcome {
            Some(i) => (
                dist.outcomes[i].state.clone(),
                dist.outcomes[i].clicks.clone(),
            ),
            None => (fallback.clone(), Vec::new()),
        };
        StepOutcome {
            succeeded: self.succeeded,
            attempts: self.attempts,
            state,
            click_log,
            stage_attempts: self.stage_attempts,
        }
    }
}

/// Repeat-until-success over `stages` with exact skip-ahead sampling.
pub fn run_sampled<R: Rng + ?Sized>(
    stages: &[Stage],
    ctx: &StageContext<'_>,
    input: &FockState,
    max_attempts: u64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let dist = AttemptDistribution::exact(stages, ctx, input)?;
    let step = dist.sample(max_attempts, rng).into_step(&dist, input);
    exhausted_to_error(step, stages)
}

fn exhausted_to_error(step: StepOutcome, stages: &[Stage]) -> Result<StepOutcome> {
    if step.succeeded {
        return Ok(step);
    }
    // blame the first stage that never produced a herald
    let stage = stages
        .iter()
        .zip(
            step.stage_attempts
                .iter()
                .skip(1)
                .chain(std::iter::once(&0)),
        )
        .find(|(_, &next)| next == 0)
        .map(|(s, _)| s.label())
        .unwrap_or_else(|| "attempt".into());
    Err(Error::AttemptsExhausted {
        stage,
        attempts: step.attempts,
    })
}

/// Literal repeat-until-success loop, one sampled trajectory per attempt.
pub fn run_direct<R: Rng + ?Sized>(
    stages: &[Stage],
    ctx: &StageContext<'_>,
    input: &FockState,
    max_attempts: u64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let input = input.normalized()?;
    let mut stage_attempts = vec![0u64; stages.len()];
    for attempt in 1..=max_attempts {
        let mut state = input.clone();
        let mut clicks = Vec::new();
        let mut ok = true;
        for (k, stage) in stages.iter().enumerate() {
            stage_attempts[k] += 1;
            let outcome = stage
                .run(ctx, &state, &mut Sample(&mut *rng))?
                .pop()
                .expect("sampling yields one path");
            clicks.extend(outcome.clicks);
            if !outcome.success {
                ok = false;
                break;
            }
            state = outcome.state.normalized()?;
        }
        if ok {
            return Ok(StepOutcome {
                succeeded: true,
                attempts: attempt,
                state,
                click_log: clicks,
                stage_attempts,
            });
        }
    }
    exhausted_to_error(
        StepOutcome {
            succeeded: false,
            attempts: max_attempts,
            state: input,
            click_log: Vec::new(),
            stage_attempts,
        },
        stages,
    )
}
