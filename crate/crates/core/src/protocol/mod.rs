//! Preparation of `n`-party W states and W-based teleportation.
//!
//! The chain is built in heralded stages:
//!
//! 1. EPR link of ensembles 1 and 2: pump both, interfere the Stokes light
//!    at a 50/50 beam splitter, keep single clicks.
//! 2. For `i = 2..n−1`: link `i` to a fresh ensemble `i+1`, then retrieve a
//!    single excitation from `i`. This builds the unbalanced chain
//!    `(s₁† + 2 Σ e^{iφ₁ᵢ} sᵢ† + e^{iφ₁ₙ} sₙ†)|vac⟩` with squared norm `4n − 6`.
//! 3. Link 1 to `n` and retrieve one excitation from 1, which balances the
//!    amplitudes into `(1/√n) Σ e^{iφ₁ᵢ} sᵢ† |vac⟩`.
//!
//! Any failed herald resets every ensemble and restarts from step 1.

mod chain;
mod config;
mod stages;
mod teleport;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeIndex};
use crate::optics::apply_phase;

pub use chain::{
    run_direct, run_sampled, AttemptDistribution, SampledRun, StepOutcome, WeightedOutcome,
    BRANCH_PRUNE_WEIGHT,
};
pub use config::{ProtocolConfig, ResourceMode, TeleportConfig};
pub use stages::{
    chain_stages, stage_success_branches, Branching, ChainLayout, Enumerate, Path, Sample, Stage,
    StageContext, StageKind, StageOutcome,
};
pub use teleport::{
    holder_qubit_fidelity, receiver_localize, two_receiver_target, Holder, TeleportLayout,
    TeleportOutcome, Teleporter,
};

/// `(1/√n) Σ e^{iφ_k} a_k† |vac⟩` over `modes`.
pub fn w_state_on(vacuum: &FockState, modes: &[ModeIndex], phases: &[f64]) -> Result<FockState> {
    if modes.is_empty() || modes.len() != phases.len() {
        return Err(Error::Precondition(
            "W state needs one phase per mode and at least one mode".into(),
        ));
    }
    let amp = 1.0 / (modes.len() as f64).sqrt();
    let coeffs: Vec<Complex64> = phases
        .iter()
        .map(|&p| Complex64::from_polar(amp, p))
        .collect();
    let singles = modes
        .iter()
        .map(|&m| vacuum.create(m))
        .collect::<Result<Vec<_>>>()?;
    FockState::superpose(&coeffs, &singles)
}

/// Undoes known channel phases with one phase shifter per ensemble.
pub fn phase_compensate(
    state: &FockState,
    modes: &[ModeIndex],
    phases: &[f64],
) -> Result<FockState> {
    if modes.len() != phases.len() {
        return Err(Error::Precondition("one phase per mode required".into()));
    }
    modes
        .iter()
        .zip(phases)
        .try_fold(state.clone(), |s, (&m, &phi)| {
            if phi == 0.0 {
                Ok(s)
            } else {
                apply_phase(&s, m, -phi)
            }
        })
}

/// A configured chain of `n` ensembles.
#[derive(Debug, Clone)]
pub struct Protocol {
    cfg: ProtocolConfig,
    layout: ChainLayout,
}

impl Protocol {
    pub fn new(cfg: ProtocolConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = ChainLayout::new(&cfg)?;
        Ok(Self { cfg, layout })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    pub fn vacuum(&self) -> FockState {
        FockState::vacuum_with_cap(&self.layout.registry, self.cfg.truncation_cap)
    }

    pub fn context(&self) -> StageContext<'_> {
        StageContext::new(&self.layout, &self.cfg)
    }

    pub fn stages(&self) -> Result<Vec<Stage>> {
        self.cfg.validate_w()?;
        Ok(chain_stages(self.cfg.n))
    }

    /// Exact law of one full attempt of the chain from vacuum.
    pub fn attempt_distribution(&self) -> Result<AttemptDistribution> {
        AttemptDistribution::exact(&self.stages()?, &self.context(), &self.vacuum())
    }

    fn link(&self, kind: StageKind, i: usize, j: usize) -> Result<Stage> {
        self.layout.ensemble(i)?;
        self.layout.ensemble(j)?;
        if i == j {
            return Err(Error::Precondition("cannot link a party to itself".into()));
        }
        Ok(Stage::Link {
            kind,
            i,
            j,
            accept_second_port: true,
            detectors: ["D1", "D2"],
        })
    }

    /// The single EPR stage on parties 1 and 2.
    pub fn epr_stages(&self) -> Vec<Stage> {
        chain_stages(2).into_iter().take(1).collect()
    }

    /// `(s₁† + e^{iφ₁₂} s₂†)/√2 |vac⟩`.
    pub fn epr_target(&self) -> Result<FockState> {
        w_state_on(
            &self.vacuum(),
            &self.layout.ensembles[..2],
            &self.cfg.phases[..2],
        )
    }

    /// Heralded EPR pair `(s_i† + e^{iφ_ij} s_j†)/√2 |vac⟩` from vacuum.
    pub fn prepare_epr<R: Rng + ?Sized>(
        &self,
        i: usize,
        j: usize,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let stage = self.link(StageKind::Epr, i, j)?;
        run_sampled(
            &[stage],
            &self.context(),
            &self.vacuum(),
            self.cfg.max_attempts,
            rng,
        )
    }

    /// Heralded `(s_i† + e^{iφ_ij} s_j†)` applied to `state`. On a failed
    /// herald the same input is prepared again.
    pub fn connect_step<R: Rng + ?Sized>(
        &self,
        state: &FockState,
        i: usize,
        j: usize,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let stage = self.link(StageKind::Connect, i, j)?;
        run_sampled(&[stage], &self.context(), state, self.cfg.max_attempts, rng)
    }

    /// Heralded single-excitation retrieval `s_i` applied to `state`.
    pub fn merge_repump<R: Rng + ?Sized>(
        &self,
        state: &FockState,
        i: usize,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.layout.ensemble(i)?;
        let stage = Stage::Retrieve {
            kind: StageKind::Merge,
            i,
            detector: "D3",
        };
        run_sampled(&[stage], &self.context(), state, self.cfg.max_attempts, rng)
    }

    /// Closing round on parties 1 and `n` that balances the chain state.
    pub fn maximize_w<R: Rng + ?Sized>(
        &self,
        state: &FockState,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.cfg.validate_w()?;
        self.check_chain_form(state)?;
        let stages = chain_stages(self.cfg.n);
        let closing = &stages[stages.len() - 2..];
        run_sampled(closing, &self.context(), state, self.cfg.max_attempts, rng)
    }

    /// The input to the closing round must have the unbalanced chain shape
    /// `|c₁| = |cₙ|`, `|cᵢ| = 2|c₁|` in its single-excitation sector.
    fn check_chain_form(&self, state: &FockState) -> Result<()> {
        let n = self.cfg.n;
        let norm_sqr = state.norm_sqr();
        if norm_sqr == 0.0 {
            return Err(Error::Normalization);
        }
        let singles: Vec<f64> = (0..n)
            .map(|k| {
                let mut counts = vec![0u8; self.layout.registry.len()];
                counts[self.layout.ensembles[k].id()] = 1;
                state.amplitude(&counts).norm()
            })
            .collect();
        let sector: f64 = singles.iter().map(|a| a * a).sum();
        let ends = 0.5 * (singles[0] + singles[n - 1]);
        let shaped = sector / norm_sqr > 0.5
            && ends > 0.0
            && (singles[0] - singles[n - 1]).abs() < 0.2 * ends
            && singles[1..n - 1]
                .iter()
                .all(|&a| (a / ends - 2.0).abs() < 0.4);
        if shaped {
            Ok(())
        } else {
            Err(Error::Sequencing(
                "closing round expects the unbalanced chain state".into(),
            ))
        }
    }

    /// Full preparation from vacuum, sampled from the exact attempt law.
    pub fn build_w_chain<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StepOutcome> {
        run_sampled(
            &self.stages()?,
            &self.context(),
            &self.vacuum(),
            self.cfg.max_attempts,
            rng,
        )
    }

    /// Full preparation from vacuum, one sampled trajectory per attempt.
    pub fn build_w_chain_direct<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StepOutcome> {
        run_direct(
            &self.stages()?,
            &self.context(),
            &self.vacuum(),
            self.cfg.max_attempts,
            rng,
        )
    }

    /// `(1/√n) Σ e^{iφ₁ᵢ} sᵢ† |vac⟩`.
    pub fn ideal_w_state(&self) -> Result<FockState> {
        w_state_on(&self.vacuum(), &self.layout.ensembles, &self.cfg.phases)
    }

    pub fn phase_compensate(&self, state: &FockState) -> Result<FockState> {
        phase_compensate(state, &self.layout.ensembles, &self.cfg.phases)
    }

    fn pair_sum(&self, state: &FockState, i: usize, j: usize) -> Result<FockState> {
        let phase = self.cfg.phases[j - 1] - self.cfg.phases[i - 1];
        let a = state.create(self.layout.ensemble(i)?)?;
        let b = state.create(self.layout.ensemble(j)?)?;
        a.add(&b.scale(Complex64::from_polar(1.0, phase)))
    }

    /// Unnormalized chain state built by operator algebra alone:
    /// `Π sᵢ(sᵢ† + e^{iφ_{i,i+1}} s_{i+1}†) (s₁† + e^{iφ₁₂} s₂†) |vac⟩`.
    pub fn w_prime_algebra(&self) -> Result<FockState> {
        self.cfg.validate_w()?;
        let mut state = self.pair_sum(&self.vacuum(), 1, 2)?;
        for i in 2..self.cfg.n {
            state = self
                .pair_sum(&state, i, i + 1)?
                .annihilate(self.layout.ensemble(i)?)?;
        }
        Ok(state)
    }

    /// `(1/(2√n)) s₁(s₁† + e^{iφ₁ₙ} sₙ†)` applied to [`w_prime_algebra`](Self::w_prime_algebra).
    pub fn w_algebra(&self) -> Result<FockState> {
        let n = self.cfg.n;
        let closed = self
            .pair_sum(&self.w_prime_algebra()?, 1, n)?
            .annihilate(self.layout.ensemble(1)?)?;
        Ok(closed.scale(Complex64::new(1.0 / (2.0 * (n as f64).sqrt()), 0.0)))
    }
}
