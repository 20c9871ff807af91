//! Teleportation of a single-excitation qubit `α s_L† + β s_R†` over two
//! W₃ resources held by Alice (ensembles 1, 4), Bob (2, 5) and Carol (3, 6).
//!
//! Alice repumps L, 1, R and 4 into photons `a, b, c, d`, interferes `a`
//! with `b` and `c` with `d`, and accepts exactly one click at each beam
//! splitter. A click pattern with exactly one detection on a `b` or `d`
//! port is corrected by a π phase on ensembles 5 and 6.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeIndex, ModeKind, ModeRegistry};
use crate::optics::{apply_beam_splitter, apply_phase, repump_convert, BeamSplitterSpec};

use super::chain::{AttemptDistribution, StepOutcome};
use super::config::{ResourceMode, TeleportConfig};
use super::stages::{Branching, Enumerate, Path, Sample, StageOutcome};
use super::{w_state_on, Protocol};

/// Modes of the six-ensemble teleportation network.
#[derive(Debug, Clone)]
pub struct TeleportLayout {
    pub registry: Arc<ModeRegistry>,
    pub left: ModeIndex,
    pub right: ModeIndex,
    /// `s₁ … s₆`.
    pub ensembles: [ModeIndex; 6],
    /// Photonic modes `a, b, c, d`.
    pub photons: [ModeIndex; 4],
}

impl TeleportLayout {
    pub fn new(cfg: &TeleportConfig) -> Result<Self> {
        let mut b = ModeRegistry::builder();
        b.collective(cfg.base.collective_model()?);
        let left = b.atomic("sL");
        let right = b.atomic("sR");
        let ensembles = [1, 2, 3, 4, 5, 6].map(|k| b.atomic(format!("s{k}")));
        let photons = ["a", "b", "c", "d"].map(|p| b.photonic(p));
        Ok(Self {
            registry: b.seal(),
            left,
            right,
            ensembles,
            photons,
        })
    }

    /// Ensemble `s_k`, `k` in `1..=6`.
    pub fn ensemble(&self, k: usize) -> Result<ModeIndex> {
        (1..=6)
            .contains(&k)
            .then(|| self.ensembles[k - 1])
            .ok_or_else(|| Error::Precondition(format!("ensemble {k} outside 1..=6")))
    }

    /// Bob's pair `(s₂, s₅)`.
    pub fn bob(&self) -> [ModeIndex; 2] {
        [self.ensembles[1], self.ensembles[4]]
    }

    /// Carol's pair `(s₃, s₆)`.
    pub fn carol(&self) -> [ModeIndex; 2] {
        [self.ensembles[2], self.ensembles[5]]
    }
}

/// Receiver-side result of localizing the teleported excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holder {
    ThisReceiver,
    OtherReceiver,
}

#[derive(Debug, Clone)]
pub struct TeleportOutcome {
    pub step: StepOutcome,
    /// Resource preparation attempts summed over both W₃ states and every
    /// teleportation attempt.
    pub resource_attempts: u64,
    /// The heralded state carries no atomic excitation.
    pub vacuum: bool,
}

/// `[e^{iφ₁₃}(α s₃† + β s₆†) + e^{iφ₁₂}(α s₂† + β s₅†)] |vac⟩ / √2`.
pub fn two_receiver_target(
    layout: &TeleportLayout,
    alpha: Complex64,
    beta: Complex64,
    phases: &[f64],
) -> Result<FockState> {
    if phases.len() != 3 {
        return Err(Error::Precondition("W₃ phases must have length 3".into()));
    }
    let vac = FockState::vacuum(&layout.registry);
    let e2 = Complex64::from_polar(1.0, phases[1]);
    let e3 = Complex64::from_polar(1.0, phases[2]);
    let coeffs = [alpha * e3, beta * e3, alpha * e2, beta * e2];
    let modes = [3, 6, 2, 5].map(|k| layout.ensembles[k - 1]);
    let singles = modes
        .iter()
        .map(|&m| vac.create(m))
        .collect::<Result<Vec<_>>>()?;
    FockState::superpose(&coeffs, &singles)?.normalized()
}

/// Measures the total excitation number of `receiver_modes`. The state must
/// hold exactly one atomic excitation in total.
pub fn receiver_localize<R: Rng + ?Sized>(
    state: &FockState,
    receiver_modes: &[ModeIndex],
    rng: &mut R,
) -> Result<(Holder, FockState)> {
    if state.definite_excitations(ModeKind::AtomicCollective) != Some(1) {
        return Err(Error::Precondition(
            "localization needs exactly one atomic excitation".into(),
        ));
    }
    let dist = state.count_excitations(receiver_modes)?;
    let k = crate::optics::sample_weighted(&dist, rng);
    let kept =
        state.project(|occ| receiver_modes.iter().map(|&m| occ.get(m)).sum::<u32>() as usize == k);
    let holder = if k == 1 {
        Holder::ThisReceiver
    } else {
        Holder::OtherReceiver
    };
    Ok((holder, kept.normalized()?))
}

/// Fidelity of `residual` with `(α a† + β b†)|vac⟩` on `pair`.
pub fn holder_qubit_fidelity(
    residual: &FockState,
    pair: [ModeIndex; 2],
    alpha: Complex64,
    beta: Complex64,
) -> Result<f64> {
    let vac = FockState::vacuum(residual.registry());
    let target = FockState::superpose(
        &[alpha, beta],
        &[vac.create(pair[0])?, vac.create(pair[1])?],
    )?;
    residual.fidelity(&target)
}

/// Runs the teleportation protocol for one configuration.
#[derive(Debug, Clone)]
pub struct Teleporter {
    cfg: TeleportConfig,
    layout: TeleportLayout,
    chain: Protocol,
    resource_law: Option<AttemptDistribution>,
}

impl Teleporter {
    pub fn new(cfg: TeleportConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = TeleportLayout::new(&cfg)?;
        let chain = Protocol::new(cfg.base.clone())?;
        let resource_law = match cfg.resources {
            ResourceMode::Prepared => Some(chain.attempt_distribution()?),
            ResourceMode::Ideal => None,
        };
        Ok(Self {
            cfg,
            layout,
            chain,
            resource_law,
        })
    }

    pub fn config(&self) -> &TeleportConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &TeleportLayout {
        &self.layout
    }

    fn cap(&self) -> u32 {
        2 * self.cfg.base.truncation_cap + 1
    }

    /// `α s_L† + β s_R†` on vacuum.
    pub fn input_state(&self) -> Result<FockState> {
        let vac = FockState::vacuum_with_cap(&self.layout.registry, self.cap());
        FockState::superpose(
            &[self.cfg.alpha(), self.cfg.beta()],
            &[
                vac.create(self.layout.left)?,
                vac.create(self.layout.right)?,
            ],
        )
    }

    /// Moves a chain state onto `s₁s₂s₃` (`second = false`) or `s₄s₅s₆`.
    pub fn embed(&self, w: &FockState, second: bool) -> Result<FockState> {
        let offset = if second { 3 } else { 0 };
        let mapping: Vec<_> = self
            .chain
            .layout()
            .ensembles
            .iter()
            .enumerate()
            .map(|(k, &m)| (m, self.layout.ensembles[k + offset]))
            .collect();
        let mut moved = w.relabel(&self.layout.registry, &mapping)?;
        if moved.truncation_cap() < self.cap() {
            let vac = FockState::vacuum_with_cap(&self.layout.registry, self.cap());
            moved = vac.scale(Complex64::new(0.0, 0.0)).add(&moved)?;
        }
        Ok(moved)
    }

    /// Ideal W₃ with the configured phases, on the chain registry.
    fn ideal_resource(&self) -> Result<FockState> {
        w_state_on(
            &self.chain.vacuum(),
            &self.chain.layout().ensembles,
            &self.cfg.base.phases,
        )
    }

    fn resource<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(FockState, u64)> {
        match &self.resource_law {
            None => Ok((self.ideal_resource()?, 0)),
            Some(law) => {
                let run = law.sample(self.cfg.base.max_attempts, rng);
                let step = run.into_step(law, &self.chain.vacuum());
                if !step.succeeded {
                    return Err(Error::AttemptsExhausted {
                        stage: "w-resource".into(),
                        attempts: step.attempts,
                    });
                }
                Ok((step.state, step.attempts))
            }
        }
    }

    /// Joint state `|ψ⟩ ⊗ W₁₂₃ ⊗ W₄₅₆` before Alice's measurement.
    pub fn joint_state(&self, w123: &FockState, w456: &FockState) -> Result<FockState> {
        self.input_state()?
            .product(&self.embed(w123, false)?)?
            .product(&self.embed(w456, true)?)
    }

    fn stage<B: Branching>(&self, joint: &FockState, exec: &mut B) -> Result<Vec<StageOutcome>> {
        let l = &self.layout;
        let [a, b, c, d] = l.photons;
        let mut state = joint.clone();
        for (atom, photon) in [
            (l.left, a),
            (l.ensembles[0], b),
            (l.right, c),
            (l.ensembles[3], d),
        ] {
            state = repump_convert(&state, atom, photon)?;
        }
        state = apply_beam_splitter(&state, &BeamSplitterSpec::new(&l.registry, a, b)?)?;
        state = apply_beam_splitter(&state, &BeamSplitterSpec::new(&l.registry, c, d)?)?;
        let eta = self.cfg.base.eta;
        let mut paths = vec![Path::new(state)];
        for m in [a, b, c, d] {
            paths = exec.loss(paths, m, eta)?;
        }
        for (m, id) in [(a, "D1"), (b, "D2"), (c, "D3"), (d, "D4")] {
            paths = exec.detect(paths, m, id)?;
        }
        paths
            .into_iter()
            .map(|p| {
                let k = p.clicks.len();
                let [ca, cb, cc, cd] = [0, 1, 2, 3].map(|i| p.clicks[k - 4 + i].1);
                let success = (ca ^ cb) && (cc ^ cd);
                let mut state = p.state;
                if success && (cb ^ cd) {
                    state = apply_phase(&state, l.ensembles[4], PI)?;
                    state = apply_phase(&state, l.ensembles[5], PI)?;
                }
                Ok(StageOutcome {
                    success,
                    state,
                    clicks: p.clicks,
                })
            })
            .collect()
    }

    /// Exact success probability and normalized success branches of Alice's
    /// measurement on the given resources.
    pub fn success_branches(
        &self,
        w123: &FockState,
        w456: &FockState,
    ) -> Result<(f64, Vec<(f64, StageOutcome)>)> {
        let joint = self.joint_state(w123, w456)?.normalized()?;
        let mut total = 0.0;
        let mut out = Vec::new();
        for o in self.stage(&joint, &mut Enumerate)? {
            let p = o.state.norm_sqr();
            if !o.success || p <= 0.0 {
                continue;
            }
            total += p;
            out.push((
                p,
                StageOutcome {
                    success: true,
                    state: o.state.normalized()?,
                    clicks: o.clicks,
                },
            ));
        }
        Ok((total, out))
    }

    /// Exact success branches with ideal W₃ resources.
    pub fn ideal_success_branches(&self) -> Result<(f64, Vec<(f64, StageOutcome)>)> {
        let w = self.ideal_resource()?;
        self.success_branches(&w, &w)
    }

    /// Repeats resource preparation and Alice's measurement until success.
    pub fn teleport<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TeleportOutcome> {
        let max = self.cfg.base.max_attempts;
        let mut resource_attempts = 0u64;
        for attempt in 1..=max {
            let (w123, n1) = self.resource(rng)?;
            let (w456, n2) = self.resource(rng)?;
            resource_attempts = resource_attempts.saturating_add(n1).saturating_add(n2);
            let joint = self.joint_state(&w123, &w456)?.normalized()?;
            let outcome = self
                .stage(&joint, &mut Sample(&mut *rng))?
                .pop()
                .expect("sampling yields one path");
            if outcome.success {
                let state = outcome.state.normalized()?;
                let vacuum = state.definite_excitations(ModeKind::AtomicCollective) == Some(0);
                return Ok(TeleportOutcome {
                    step: StepOutcome {
                        succeeded: true,
                        attempts: attempt,
                        state,
                        click_log: outcome.clicks,
                        stage_attempts: vec![attempt],
                    },
                    resource_attempts,
                    vacuum,
                });
            }
        }
        Err(Error::AttemptsExhausted {
            stage: "teleport".into(),
            attempts: max,
        })
    }
}
