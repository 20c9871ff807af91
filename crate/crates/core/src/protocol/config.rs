use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::CollectiveModeModel;
use crate::optics::PumpOrder;

/// Parameters of one W-state preparation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawConfig")]
pub struct ProtocolConfig {
    /// Number of parties (ensembles).
    pub n: usize,
    /// Per-pulse pair-emission probability.
    pub p_e: f64,
    /// Overall per-photon loss probability.
    pub eta: f64,
    /// Channel phases `φ_{1i}` for `i = 1..=n`; the first entry is the
    /// reference and must be zero.
    pub phases: Vec<f64>,
    /// Atom count per ensemble; `None` is the bosonic limit.
    pub n_a: Option<u64>,
    /// Light–atom interaction time of one attempt, in seconds.
    pub t0: f64,
    pub truncation_cap: u32,
    pub max_attempts: u64,
    pub seed: u64,
    /// Keep the double-pair term of the pump expansion.
    pub double_pair: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n: 3,
            p_e: 0.01,
            eta: 0.0,
            phases: vec![0.0; 3],
            n_a: None,
            t0: 1e-6,
            truncation_cap: crate::fock::DEFAULT_TRUNCATION_CAP,
            max_attempts: 1_000_000_000_000_000,
            seed: 0,
            double_pair: true,
        }
    }
}

/// Serialized form; every field is optional and absent phases are zero.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    n: usize,
    p_e: f64,
    eta: f64,
    phases: Option<Vec<f64>>,
    n_a: Option<u64>,
    t0: f64,
    truncation_cap: u32,
    max_attempts: u64,
    seed: u64,
    double_pair: bool,
}

impl Default for RawConfig {
    fn default() -> Self {
        let d = ProtocolConfig::default();
        Self {
            n: d.n,
            p_e: d.p_e,
            eta: d.eta,
            phases: None,
            n_a: d.n_a,
            t0: d.t0,
            truncation_cap: d.truncation_cap,
            max_attempts: d.max_attempts,
            seed: d.seed,
            double_pair: d.double_pair,
        }
    }
}

impl From<RawConfig> for ProtocolConfig {
    fn from(r: RawConfig) -> Self {
        Self {
            n: r.n,
            p_e: r.p_e,
            eta: r.eta,
            phases: r.phases.unwrap_or_else(|| vec![0.0; r.n]),
            n_a: r.n_a,
            t0: r.t0,
            truncation_cap: r.truncation_cap,
            max_attempts: r.max_attempts,
            seed: r.seed,
            double_pair: r.double_pair,
        }
    }
}

impl ProtocolConfig {
    /// Default configuration for `n` parties with zero phases.
    pub fn with_parties(n: usize) -> Self {
        Self {
            n,
            phases: vec![0.0; n],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "need at least 2 parties, got {}",
                self.n
            )));
        }
        if self.phases.len() != self.n {
            return Err(Error::Config(format!(
                "expected {} phases, got {}",
                self.n,
                self.phases.len()
            )));
        }
        if self.phases[0] != 0.0 {
            return Err(Error::Config("the reference phase φ_11 must be 0".into()));
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("phases must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(Error::Config(format!("p_e = {} outside [0, 1)", self.p_e)));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta = {} outside [0, 1)", self.eta)));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::Config(format!("t0 = {} must be positive", self.t0)));
        }
        if self.truncation_cap < 3 {
            return Err(Error::Config(format!(
                "truncation cap {} is below the 3 excitations the protocol needs",
                self.truncation_cap
            )));
        }
        if self.max_attempts < 1 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        self.collective_model()?;
        Ok(())
    }

    /// Rejects configurations that cannot describe a W state (`n < 3`).
    pub fn validate_w(&self) -> Result<()> {
        self.validate()?;
        if self.n < 3 {
            return Err(Error::Precondition(format!(
                "W-state preparation needs n ≥ 3, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn collective_model(&self) -> Result<CollectiveModeModel> {
        match self.n_a {
            None => Ok(CollectiveModeModel::bosonic()),
            Some(atoms) => CollectiveModeModel::finite(atoms),
        }
    }

    pub fn pump_order(&self) -> PumpOrder {
        if self.double_pair {
            PumpOrder::Second
        } else {
            PumpOrder::First
        }
    }
}

/// Where the two W₃ resources of a teleportation attempt come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceMode {
    /// Each resource is a fresh heralded preparation.
    #[default]
    Prepared,
    /// Each resource is the ideal W₃ with the configured phases.
    Ideal,
}

/// Teleportation of `α s_L† + β s_R†` over two W₃ states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleportConfig {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub base: ProtocolConfig,
    #[serde(default)]
    pub resources: ResourceMode,
}

impl TeleportConfig {
    pub fn new(alpha: Complex64, beta: Complex64, base: ProtocolConfig) -> Self {
        Self {
            alpha: [alpha.re, alpha.im],
            beta: [beta.re, beta.im],
            base,
            resources: ResourceMode::Prepared,
        }
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha[0], self.alpha[1])
    }

    pub fn beta(&self) -> Complex64 {
        Complex64::new(self.beta[0], self.beta[1])
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.n != 3 {
            return Err(Error::Config(format!(
                "teleportation uses W₃ resources, got n = {}",
                self.base.n
            )));
        }
        let norm = self.alpha().norm_sqr() + self.beta().norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("|α|² + |β|² = {norm}, expected 1")));
        }
        Ok(())
    }
}
