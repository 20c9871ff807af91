//! Sparse few-excitation Fock states over a sealed registry of bosonic modes.
//!
//! Every ket the protocol manipulates lives here: atomic collective modes
//! (one per ensemble) and the photonic Stokes / anti-Stokes channels that
//! herald them. Operator matrix elements are bosonic,
//!
//! ```text
//! a† |n⟩ = √(n+1) |n+1⟩        a |n⟩ = √n |n−1⟩
//! ```
//!
//! unless the registry carries a finite atom count `N`, in which case atomic
//! modes use the Dicke-ladder elements `√((n+1)(1 − n/N))`, so that
//! `a a† a† |0⟩ = 2 (N−1)/N · a† |0⟩`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Amplitudes with magnitude below this are dropped after every operation.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Default cap on the total occupation (atoms plus photons) of any basis ket.
pub const DEFAULT_TRUNCATION_CAP: u32 = 4;

static NEXT_REGISTRY_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    AtomicCollective,
    Photonic,
}

impl ModeKind {
    fn label(self) -> &'static str {
        match self {
            ModeKind::AtomicCollective => "atomic-collective",
            ModeKind::Photonic => "photonic",
        }
    }
}

/// Position of a mode inside its registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub fn id(self) -> usize {
        self.0
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Atom-number model for the collective atomic modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectiveModeModel {
    /// `None` is the bosonic limit `N_a → ∞`.
    pub atom_count: Option<u64>,
}

impl CollectiveModeModel {
    pub fn bosonic() -> Self {
        Self { atom_count: None }
    }

    pub fn finite(atom_count: u64) -> Result<Self> {
        if atom_count < 2 {
            return Err(Error::Config(format!(
                "finite-size atom count must be at least 2, got {atom_count}"
            )));
        }
        Ok(Self {
            atom_count: Some(atom_count),
        })
    }

    pub fn finite_size_enabled(&self) -> bool {
        self.atom_count.is_some()
    }

    /// Squared saturation factor `1 − n/N` for the `n → n+1` step.
    fn saturation(&self, n: u32) -> f64 {
        match self.atom_count {
            None => 1.0,
            Some(atoms) => (1.0 - f64::from(n) / atoms as f64).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ModeInfo {
    name: String,
    kind: ModeKind,
}

/// Names and kinds of every mode a family of states is defined over.
///
/// A registry is sealed on construction; states built on it share it through
/// an `Arc` and are only combinable with states whose registry has the same
/// mode layout.
#[derive(Debug)]
pub struct ModeRegistry {
    id: u64,
    modes: Vec<ModeInfo>,
    collective: CollectiveModeModel,
}

impl ModeRegistry {
    pub fn builder() -> RegistryBuilder {
        RegistryBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn collective(&self) -> CollectiveModeModel {
        self.collective
    }

    pub fn kind(&self, m: ModeIndex) -> Result<ModeKind> {
        self.modes
            .get(m.0)
            .map(|info| info.kind)
            .ok_or(Error::UnregisteredMode(m.0))
    }

    pub fn name(&self, m: ModeIndex) -> Result<&str> {
        self.modes
            .get(m.0)
            .map(|info| info.name.as_str())
            .ok_or(Error::UnregisteredMode(m.0))
    }

    pub fn lookup(&self, name: &str) -> Option<ModeIndex> {
        self.modes
            .iter()
            .position(|m| m.name == name)
            .map(ModeIndex)
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.modes.len()).map(ModeIndex)
    }

    pub fn modes_of_kind(&self, kind: ModeKind) -> Vec<ModeIndex> {
        self.modes()
            .filter(|&m| self.modes[m.0].kind == kind)
            .collect()
    }

    pub fn require_kind(&self, m: ModeIndex, kind: ModeKind) -> Result<()> {
        if self.kind(m)? == kind {
            Ok(())
        } else {
            Err(Error::ModeKind {
                name: self.modes[m.0].name.clone(),
                expected: kind.label(),
            })
        }
    }
}

#[derive(Debug, Default)]
pub struct RegistryBuilder {
    modes: Vec<ModeInfo>,
    collective: CollectiveModeModel,
}

impl RegistryBuilder {
    pub fn atomic(&mut self, name: impl Into<String>) -> ModeIndex {
        self.push(name.into(), ModeKind::AtomicCollective)
    }

    pub fn photonic(&mut self, name: impl Into<String>) -> ModeIndex {
        self.push(name.into(), ModeKind::Photonic)
    }

    pub fn collective(&mut self, model: CollectiveModeModel) -> &mut Self {
        self.collective = model;
        self
    }

    fn push(&mut self, name: String, kind: ModeKind) -> ModeIndex {
        assert!(
            self.modes.iter().all(|m| m.name != name),
            "duplicate mode name `{name}`"
        );
        assert!(self.modes.len() < u8::MAX as usize, "too many modes");
        self.modes.push(ModeInfo { name, kind });
        ModeIndex(self.modes.len() - 1)
    }

    pub fn seal(self) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry {
            id: NEXT_REGISTRY_ID.fetch_add(1, Ordering::Relaxed),
            modes: self.modes,
            collective: self.collective,
        })
    }
}

/// Occupation numbers of every registered mode, in registry order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Box<[u8]>);

impl Occupation {
    pub fn vacuum(modes: usize) -> Self {
        Self(vec![0; modes].into_boxed_slice())
    }

    pub fn from_counts(counts: &[u8]) -> Self {
        Self(counts.into())
    }

    pub fn get(&self, m: ModeIndex) -> u32 {
        u32::from(self.0[m.0])
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| u32::from(n)).sum()
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub(crate) fn with(&self, m: ModeIndex, n: u32) -> Self {
        let mut counts = self.0.clone();
        counts[m.0] = u8::try_from(n).expect("occupation overflow");
        Self(counts)
    }
}

/// Sparse superposition of occupation-number kets with complex amplitudes.
///
/// Values are immutable: every operation returns a new state.
#[derive(Debug, Clone)]
pub struct FockState {
    registry: Arc<ModeRegistry>,
    terms: BTreeMap<Occupation, Complex64>,
    cap: u32,
    overflowed: bool,
}

impl FockState {
    pub fn vacuum(registry: &Arc<ModeRegistry>) -> Self {
        Self::vacuum_with_cap(registry, DEFAULT_TRUNCATION_CAP)
    }

    pub fn vacuum_with_cap(registry: &Arc<ModeRegistry>, cap: u32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Occupation::vacuum(registry.len()), Complex64::new(1.0, 0.0));
        Self {
            registry: Arc::clone(registry),
            terms,
            cap: cap.max(1),
            overflowed: false,
        }
    }

    /// The zero vector (not the vacuum).
    pub fn zero(registry: &Arc<ModeRegistry>, cap: u32) -> Self {
        Self {
            registry: Arc::clone(registry),
            terms: BTreeMap::new(),
            cap: cap.max(1),
            overflowed: false,
        }
    }

    /// Builds a state from explicit `(amplitude, occupation)` terms.
    pub fn from_terms(
        registry: &Arc<ModeRegistry>,
        cap: u32,
        terms: impl IntoIterator<Item = (Complex64, Vec<u8>)>,
    ) -> Result<Self> {
        let mut state = Self::zero(registry, cap);
        for (amp, counts) in terms {
            if counts.len() != registry.len() {
                return Err(Error::Precondition(format!(
                    "occupation vector has {} entries, registry has {} modes",
                    counts.len(),
                    registry.len()
                )));
            }
            let occ = Occupation(counts.into_boxed_slice());
            if occ.total() > state.cap {
                state.overflowed = true;
                continue;
            }
            *state.terms.entry(occ).or_default() += amp;
        }
        state.prune();
        Ok(state)
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn truncation_cap(&self) -> u32 {
        self.cap
    }

    /// True if some operation dropped terms above the truncation cap.
    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, counts: &[u8]) -> Complex64 {
        self.terms
            .get(&Occupation::from_counts(counts))
            .copied()
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    }

    fn same_registry(&self, other: &FockState) -> Result<()> {
        let (a, b) = (&self.registry, &other.registry);
        if a.id == b.id || (a.modes == b.modes && a.collective == b.collective) {
            Ok(())
        } else {
            Err(Error::RegistryMismatch)
        }
    }

    fn check_mode(&self, m: ModeIndex) -> Result<ModeKind> {
        self.registry.kind(m)
    }

    /// Rebuilds the state term by term; `f` may emit zero or one new term.
    pub(crate) fn map_terms<F>(&self, mut f: F) -> FockState
    where
        F: FnMut(&Occupation, Complex64) -> Option<(Occupation, Complex64)>,
    {
        let mut out = FockState {
            registry: Arc::clone(&self.registry),
            terms: BTreeMap::new(),
            cap: self.cap,
            overflowed: self.overflowed,
        };
        for (occ, &amp) in &self.terms {
            if let Some((next, a)) = f(occ, amp) {
                if next.total() > out.cap {
                    out.overflowed = true;
                } else {
                    *out.terms.entry(next).or_default() += a;
                }
            }
        }
        out.prune();
        out
    }

    /// Like [`map_terms`](Self::map_terms) but each term may fan out.
    pub(crate) fn flat_map_terms<F>(&self, mut f: F) -> FockState
    where
        F: FnMut(&Occupation, Complex64, &mut Vec<(Occupation, Complex64)>),
    {
        let mut out = FockState {
            registry: Arc::clone(&self.registry),
            terms: BTreeMap::new(),
            cap: self.cap,
            overflowed: self.overflowed,
        };
        let mut buf = Vec::new();
        for (occ, &amp) in &self.terms {
            buf.clear();
            f(occ, amp, &mut buf);
            for (next, a) in buf.drain(..) {
                if next.total() > out.cap {
                    out.overflowed = true;
                } else {
                    *out.terms.entry(next).or_default() += a;
                }
            }
        }
        out.prune();
        out
    }

    /// Applies the creation operator of mode `m`.
    pub fn create(&self, m: ModeIndex) -> Result<FockState> {
        let kind = self.check_mode(m)?;
        let model = self.registry.collective;
        Ok(self.map_terms(|occ, amp| {
            let n = occ.get(m);
            let mut element = f64::from(n + 1);
            if kind == ModeKind::AtomicCollective {
                element *= model.saturation(n);
            }
            if element == 0.0 {
                return None;
            }
            Some((occ.with(m, n + 1), amp * element.sqrt()))
        }))
    }

    /// Applies the annihilation operator of mode `m`.
    pub fn annihilate(&self, m: ModeIndex) -> Result<FockState> {
        let kind = self.check_mode(m)?;
        let model = self.registry.collective;
        Ok(self.map_terms(|occ, amp| {
            let n = occ.get(m);
            if n == 0 {
                return None;
            }
            let mut element = f64::from(n);
            if kind == ModeKind::AtomicCollective {
                element *= model.saturation(n - 1);
            }
            Some((occ.with(m, n - 1), amp * element.sqrt()))
        }))
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &FockState) -> Result<Complex64> {
        self.same_registry(other)?;
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = Complex64::default();
        for (occ, a) in &small.terms {
            if let Some(b) = large.terms.get(occ) {
                acc += if conj_small {
                    a.conj() * b
                } else {
                    b.conj() * a
                };
            }
        }
        Ok(acc)
    }

    /// Squared overlap `|⟨self|other⟩|²` of two states, both normalized first.
    pub fn fidelity(&self, other: &FockState) -> Result<f64> {
        let a = self.normalized()?;
        let b = other.normalized()?;
        Ok(a.inner(&b)?.norm_sqr())
    }

    pub fn normalized(&self) -> Result<FockState> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Normalization);
        }
        Ok(self.scale(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> FockState {
        self.map_terms(|occ, amp| Some((occ.clone(), amp * c)))
    }

    pub fn add(&self, other: &FockState) -> Result<FockState> {
        self.same_registry(other)?;
        let mut out = self.clone();
        out.cap = self.cap.max(other.cap);
        out.overflowed |= other.overflowed;
        for (occ, amp) in &other.terms {
            *out.terms.entry(occ.clone()).or_default() += amp;
        }
        out.prune();
        Ok(out)
    }

    /// Exact linear combination `Σ c_k |ψ_k⟩`.
    pub fn superpose(coeffs: &[Complex64], states: &[FockState]) -> Result<FockState> {
        if states.is_empty() || coeffs.len() != states.len() {
            return Err(Error::Precondition(
                "superpose needs one coefficient per state and at least one state".into(),
            ));
        }
        let mut acc = FockState::zero(&states[0].registry, states[0].cap);
        for (c, s) in coeffs.iter().zip(states) {
            acc = acc.add(&s.scale(*c))?;
        }
        Ok(acc)
    }

    /// Born-rule distribution of the total occupation of `modes`.
    ///
    /// Index `k` of the returned vector is `P(total = k)`.
    pub fn count_excitations(&self, modes: &[ModeIndex]) -> Result<Vec<f64>> {
        for &m in modes {
            self.check_mode(m)?;
        }
        let norm_sqr = self.norm_sqr();
        if norm_sqr == 0.0 {
            return Err(Error::Normalization);
        }
        let mut dist = vec![0.0; self.cap as usize + 1];
        for (occ, amp) in &self.terms {
            let k: u32 = modes.iter().map(|&m| occ.get(m)).sum();
            dist[k as usize] += amp.norm_sqr() / norm_sqr;
        }
        while dist.len() > 1 && dist.last() == Some(&0.0) {
            dist.pop();
        }
        Ok(dist)
    }

    /// Total occupation of all modes of `kind`, if it is the same for every term.
    pub fn definite_excitations(&self, kind: ModeKind) -> Option<u32> {
        let modes = self.registry.modes_of_kind(kind);
        let mut totals = self
            .terms
            .keys()
            .map(|occ| modes.iter().map(|&m| occ.get(m)).sum::<u32>());
        let first = totals.next()?;
        totals.all(|t| t == first).then_some(first)
    }

    /// Largest occupation of mode `m` over the support of the state.
    pub fn max_occupation(&self, m: ModeIndex) -> u32 {
        self.terms.keys().map(|occ| occ.get(m)).max().unwrap_or(0)
    }

    /// Keeps only the terms for which `keep` returns true.
    pub fn project<F>(&self, mut keep: F) -> FockState
    where
        F: FnMut(&Occupation) -> bool,
    {
        self.map_terms(|occ, amp| keep(occ).then(|| (occ.clone(), amp)))
    }

    /// Tensor product of two states supported on disjoint sets of modes.
    pub fn product(&self, other: &FockState) -> Result<FockState> {
        self.same_registry(other)?;
        let busy = |s: &FockState| -> Vec<bool> {
            (0..s.registry.len())
                .map(|i| s.terms.keys().any(|occ| occ.0[i] > 0))
                .collect()
        };
        if busy(self).iter().zip(busy(other)).any(|(a, b)| *a && b) {
            return Err(Error::Precondition(
                "tensor product needs states on disjoint modes".into(),
            ));
        }
        let mut out = FockState::zero(&self.registry, self.cap.max(other.cap));
        out.overflowed = self.overflowed || other.overflowed;
        for (x, a) in &self.terms {
            for (y, b) in &other.terms {
                let counts: Vec<u8> = x.0.iter().zip(y.0.iter()).map(|(p, q)| p + q).collect();
                let occ = Occupation(counts.into_boxed_slice());
                if occ.total() > out.cap {
                    out.overflowed = true;
                } else {
                    *out.terms.entry(occ).or_default() += a * b;
                }
            }
        }
        out.prune();
        Ok(out)
    }

    /// Moves the state onto another registry; `mapping` lists
    /// `(source, target)` mode pairs and every unmapped source mode must be
    /// empty.
    pub fn relabel(
        &self,
        target: &Arc<ModeRegistry>,
        mapping: &[(ModeIndex, ModeIndex)],
    ) -> Result<FockState> {
        for &(src, dst) in mapping {
            let kind = self.registry.kind(src)?;
            if target.kind(dst)? != kind {
                return Err(Error::ModeKind {
                    name: target.name(dst)?.to_string(),
                    expected: kind.label(),
                });
            }
        }
        let mut out = FockState::zero(target, self.cap);
        out.overflowed = self.overflowed;
        for (occ, amp) in &self.terms {
            let mut counts = vec![0u8; target.len()];
            let mut moved = 0u32;
            for &(src, dst) in mapping {
                counts[dst.0] += occ.0[src.0];
                moved += u32::from(occ.0[src.0]);
            }
            if moved != occ.total() {
                return Err(Error::Precondition(
                    "relabel would drop occupied modes".into(),
                ));
            }
            *out.terms
                .entry(Occupation(counts.into_boxed_slice()))
                .or_default() += amp;
        }
        out.prune();
        Ok(out)
    }

    /// Line-oriented dump, one `amp_re amp_im : n1 n2 … nk` per term.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for (occ, amp) in &self.terms {
            let counts: Vec<String> = occ.0.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!(
                "{:.12e} {:.12e} : {}\n",
                amp.re,
                amp.im,
                counts.join(" ")
            ));
        }
        out
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_debug_text())
    }
}
