//! Heralded stages of the preparation chain.
//!
//! A stage is one pulse sequence ending in detection. It can be executed in
//! two ways through the [`Branching`] trait: [`Enumerate`] keeps every Kraus
//! branch (unnormalized, weight = squared norm) and [`Sample`] follows a
//! single quantum-jump trajectory using the sampled loss and detection
//! elements.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeIndex, ModeRegistry};
use crate::optics::{
    apply_beam_splitter, apply_loss, apply_phase, detect, detect_branches, loss_branches,
    max_retrieval_strength, pump_excite, retrieve_single, BeamSplitterSpec, LossSpec, PumpOrder,
    PumpSpec,
};

use super::config::ProtocolConfig;

/// Mode layout of an `n`-ensemble chain: one collective mode per ensemble,
/// two Stokes channels feeding the beam splitter, and one anti-Stokes
/// channel for retrieval. Photonic modes are empty between stages.
#[derive(Debug, Clone)]
pub struct ChainLayout {
    pub registry: Arc<ModeRegistry>,
    pub ensembles: Vec<ModeIndex>,
    pub stokes_a: ModeIndex,
    pub stokes_b: ModeIndex,
    pub anti_stokes: ModeIndex,
}

impl ChainLayout {
    pub fn new(cfg: &ProtocolConfig) -> Result<Self> {
        let mut b = ModeRegistry::builder();
        let ensembles = (1..=cfg.n).map(|i| b.atomic(format!("s{i}"))).collect();
        let stokes_a = b.photonic("stokes_a");
        let stokes_b = b.photonic("stokes_b");
        let anti_stokes = b.photonic("anti_stokes");
        b.collective(cfg.collective_model()?);
        Ok(Self {
            registry: b.seal(),
            ensembles,
            stokes_a,
            stokes_b,
            anti_stokes,
        })
    }

    /// Collective mode of 1-based party `party`.
    pub fn ensemble(&self, party: usize) -> Result<ModeIndex> {
        party
            .checked_sub(1)
            .and_then(|i| self.ensembles.get(i))
            .copied()
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "party {party} outside 1..={}",
                    self.ensembles.len()
                ))
            })
    }
}

/// A partial trajectory through a stage.
#[derive(Debug, Clone)]
pub struct Path {
    pub state: FockState,
    pub clicks: Vec<(String, bool)>,
}

impl Path {
    pub fn new(state: FockState) -> Self {
        Self {
            state,
            clicks: Vec::new(),
        }
    }
}

pub trait Branching {
    fn loss(&mut self, paths: Vec<Path>, m: ModeIndex, eta: f64) -> Result<Vec<Path>>;
    fn detect(&mut self, paths: Vec<Path>, m: ModeIndex, id: &str) -> Result<Vec<Path>>;
}

/// Keeps every branch.
#[derive(Debug, Default)]
pub struct Enumerate;

impl Branching for Enumerate {
    fn loss(&mut self, paths: Vec<Path>, m: ModeIndex, eta: f64) -> Result<Vec<Path>> {
        let mut out = Vec::with_capacity(paths.len());
        for p in paths {
            for b in loss_branches(&p.state, m, eta)? {
                out.push(Path {
                    state: b.state,
                    clicks: p.clicks.clone(),
                });
            }
        }
        Ok(out)
    }

    fn detect(&mut self, paths: Vec<Path>, m: ModeIndex, id: &str) -> Result<Vec<Path>> {
        let mut out = Vec::with_capacity(paths.len());
        for p in paths {
            for b in detect_branches(&p.state, m)? {
                let mut clicks = p.clicks.clone();
                clicks.push((id.to_string(), b.label >= 1));
                out.push(Path {
                    state: b.state,
                    clicks,
                });
            }
        }
        Ok(out)
    }
}

/// Follows one sampled trajectory.
#[derive(Debug)]
pub struct Sample<'a, R: ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> Branching for Sample<'_, R> {
    fn loss(&mut self, paths: Vec<Path>, m: ModeIndex, eta: f64) -> Result<Vec<Path>> {
        let loss = LossSpec::new(eta)?;
        paths
            .into_iter()
            .map(|p| {
                let (state, _lost) = apply_loss(&p.state.normalized()?, m, &loss, self.0)?;
                Ok(Path {
                    state,
                    clicks: p.clicks,
                })
            })
            .collect()
    }

    fn detect(&mut self, paths: Vec<Path>, m: ModeIndex, id: &str) -> Result<Vec<Path>> {
        paths
            .into_iter()
            .map(|p| {
                let (outcome, state) = detect(&p.state.normalized()?, m, id, self.0)?;
                let mut clicks = p.clicks;
                clicks.push((outcome.detector_id, outcome.clicked));
                Ok(Path { state, clicks })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    /// First link between parties 1 and 2.
    Epr,
    /// Link of a fresh ensemble to the end of the chain.
    Connect,
    /// Retrieval of one excitation from the chain end.
    Merge,
    /// Closing link between parties 1 and n.
    MaximizeConnect,
    /// Closing retrieval from party 1.
    MaximizeMerge,
}

/// One heralded stage. Parties are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    /// Pump parties `i` and `j`, interfere their Stokes light and require
    /// exactly one of the two detectors to fire. A click on the second port
    /// is fed forward as a π phase on `j` when `accept_second_port` holds,
    /// and rejected otherwise.
    Link {
        kind: StageKind,
        i: usize,
        j: usize,
        accept_second_port: bool,
        detectors: [&'static str; 2],
    },
    /// Retrieve a single excitation from party `i` and require a click.
    Retrieve {
        kind: StageKind,
        i: usize,
        detector: &'static str,
    },
}

/// Terminal branch of a stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub success: bool,
    pub state: FockState,
    pub clicks: Vec<(String, bool)>,
}

impl Stage {
    pub fn kind(&self) -> StageKind {
        match self {
            Stage::Link { kind, .. } | Stage::Retrieve { kind, .. } => *kind,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Stage::Link { kind, i, j, .. } => match kind {
                StageKind::Epr => format!("epr({i},{j})"),
                StageKind::MaximizeConnect => format!("maximize-connect({i},{j})"),
                _ => format!("connect({i},{j})"),
            },
            Stage::Retrieve { kind, i, .. } => match kind {
                StageKind::MaximizeMerge => format!("maximize-merge({i})"),
                _ => format!("merge({i})"),
            },
        }
    }

    /// Runs the stage on a normalized input state.
    pub fn run<B: Branching>(
        &self,
        ctx: &StageContext<'_>,
        state: &FockState,
        exec: &mut B,
    ) -> Result<Vec<StageOutcome>> {
        match *self {
            Stage::Link {
                i,
                j,
                accept_second_port,
                detectors,
                ..
            } => ctx.link(state, i, j, accept_second_port, detectors, exec),
            Stage::Retrieve { i, detector, .. } => ctx.retrieve(state, i, detector, exec),
        }
    }
}

/// The `n`-party stage sequence: EPR link, `n − 2` connect/merge rounds,
/// then the closing connect/merge round on parties 1 and `n`.
pub fn chain_stages(n: usize) -> Vec<Stage> {
    let mut stages = vec![Stage::Link {
        kind: StageKind::Epr,
        i: 1,
        j: 2,
        accept_second_port: true,
        detectors: ["D1", "D2"],
    }];
    for i in 2..n {
        stages.push(Stage::Link {
            kind: StageKind::Connect,
            i,
            j: i + 1,
            accept_second_port: true,
            detectors: ["D1", "D2"],
        });
        stages.push(Stage::Retrieve {
            kind: StageKind::Merge,
            i,
            detector: "D3",
        });
    }
    stages.push(Stage::Link {
        kind: StageKind::MaximizeConnect,
        i: 1,
        j: n,
        accept_second_port: false,
        detectors: ["D4", "D5"],
    });
    stages.push(Stage::Retrieve {
        kind: StageKind::MaximizeMerge,
        i: 1,
        detector: "D6",
    });
    stages
}

/// Physical parameters shared by every stage of one chain.
#[derive(Debug, Clone)]
pub struct StageContext<'a> {
    pub layout: &'a ChainLayout,
    pub p_e: f64,
    pub eta: f64,
    pub phases: &'a [f64],
    pub order: PumpOrder,
}

impl<'a> StageContext<'a> {
    pub fn new(layout: &'a ChainLayout, cfg: &'a ProtocolConfig) -> Self {
        Self {
            layout,
            p_e: cfg.p_e,
            eta: cfg.eta,
            phases: &cfg.phases,
            order: cfg.pump_order(),
        }
    }

    fn pump(&self, state: &FockState, party: usize, stokes: ModeIndex) -> Result<FockState> {
        pump_excite(
            state,
            &PumpSpec {
                ensemble: self.layout.ensemble(party)?,
                stokes,
                emission_prob: self.p_e,
                channel_phase: self.phases[party - 1],
                order: self.order,
            },
        )
    }

    fn link<B: Branching>(
        &self,
        state: &FockState,
        i: usize,
        j: usize,
        accept_second_port: bool,
        detectors: [&'static str; 2],
        exec: &mut B,
    ) -> Result<Vec<StageOutcome>> {
        let (a, b) = (self.layout.stokes_a, self.layout.stokes_b);
        let order = match self.order {
            PumpOrder::First => 1,
            PumpOrder::Second => 2,
        };
        // joint expansion to the configured order in √p_e: the photon
        // number emitted in this stage counts the order of each term
        let pumped = self
            .pump(&self.pump(state, i, a)?, j, b)?
            .project(|occ| occ.get(a) + occ.get(b) <= order)
            .normalized()?;
        let bs = BeamSplitterSpec::new(&self.layout.registry, a, b)?;
        let mixed = apply_beam_splitter(&pumped, &bs)?;
        let mut paths = vec![Path::new(mixed)];
        paths = exec.loss(paths, a, self.eta)?;
        paths = exec.loss(paths, b, self.eta)?;
        paths = exec.detect(paths, a, detectors[0])?;
        paths = exec.detect(paths, b, detectors[1])?;
        let target = self.layout.ensemble(j)?;
        paths
            .into_iter()
            .map(|p| {
                let first = p.clicks[p.clicks.len() - 2].1;
                let second = p.clicks[p.clicks.len() - 1].1;
                let success = (first ^ second) && (first || accept_second_port);
                let state = if success && second {
                    apply_phase(&p.state, target, PI)?
                } else {
                    p.state
                };
                Ok(StageOutcome {
                    success,
                    state,
                    clicks: p.clicks,
                })
            })
            .collect()
    }

    fn retrieve<B: Branching>(
        &self,
        state: &FockState,
        i: usize,
        detector: &'static str,
        exec: &mut B,
    ) -> Result<Vec<StageOutcome>> {
        let ensemble = self.layout.ensemble(i)?;
        let anti = self.layout.anti_stokes;
        let strength = max_retrieval_strength(state, ensemble);
        let converted = retrieve_single(state, ensemble, anti, strength)?;
        let mut paths = vec![Path::new(converted)];
        paths = exec.loss(paths, anti, self.eta)?;
        paths = exec.detect(paths, anti, detector)?;
        Ok(paths
            .into_iter()
            .map(|p| StageOutcome {
                success: p.clicks.last().is_some_and(|c| c.1),
                state: p.state,
                clicks: p.clicks,
            })
            .collect())
    }
}

/// Exact success probability and normalized success branches of `stage`
/// applied to the normalized `state`.
pub fn stage_success_branches(
    stage: &Stage,
    ctx: &StageContext<'_>,
    state: &FockState,
) -> Result<(f64, Vec<(f64, StageOutcome)>)> {
    let outcomes = stage.run(ctx, state, &mut Enumerate)?;
    let mut total = 0.0;
    let mut success = Vec::new();
    for o in outcomes.into_iter().filter(|o| o.success) {
        let p = o.state.norm_sqr();
        if p <= 0.0 {
            continue;
        }
        total += p;
        let state = o.state.normalized()?;
        success.push((
            p,
            StageOutcome {
                success: true,
                state,
                clicks: o.clicks,
            },
        ));
    }
    Ok((total, success))
}
