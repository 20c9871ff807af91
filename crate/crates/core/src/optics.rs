//! Physical moves of the protocol: 50/50 interference, phase shifters,
//! Raman pumping, repumping, photon loss and threshold detection.
//!
//! Loss and detection come in two flavours. The `*_branches` functions
//! return every Kraus branch as an unnormalized state whose squared norm is
//! the branch probability; [`apply_loss`] and [`detect`] sample one branch
//! with a caller-owned random stream and return it renormalized.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeIndex, ModeKind, ModeRegistry};

/// A 50/50 beam splitter between two photonic modes, with the real
/// convention `a† → (a† + b†)/√2`, `b† → (a† − b†)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamSplitterSpec {
    pub mode_a: ModeIndex,
    pub mode_b: ModeIndex,
}

impl BeamSplitterSpec {
    pub fn new(registry: &ModeRegistry, mode_a: ModeIndex, mode_b: ModeIndex) -> Result<Self> {
        registry.require_kind(mode_a, ModeKind::Photonic)?;
        registry.require_kind(mode_b, ModeKind::Photonic)?;
        if mode_a == mode_b {
            return Err(Error::Precondition(
                "beam splitter needs two distinct modes".into(),
            ));
        }
        Ok(Self { mode_a, mode_b })
    }
}

/// Second-order truncation switch for the pump expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PumpOrder {
    /// Single pairs only.
    First,
    /// Single and double pairs.
    Second,
}

/// One weak Raman pumping pulse on an ensemble and its forward Stokes mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSpec {
    pub ensemble: ModeIndex,
    pub stokes: ModeIndex,
    pub emission_prob: f64,
    pub channel_phase: f64,
    pub order: PumpOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    eta: f64,
}

impl LossSpec {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!(
                "loss probability {eta} outside [0, 1]"
            )));
        }
        Ok(Self { eta })
    }

    pub fn lossless() -> Self {
        Self { eta: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Result of a threshold (non-number-resolving) detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorOutcome {
    pub clicked: bool,
    pub detector_id: String,
    /// Photon number absorbed on this sample path. A real detector cannot
    /// report it; it is kept for diagnostics only.
    pub photons: u32,
}

/// One Kraus branch: unnormalized state plus the label that produced it.
#[derive(Debug, Clone)]
pub struct Branch<L> {
    pub label: L,
    pub state: FockState,
}

impl<L> Branch<L> {
    pub fn probability(&self) -> f64 {
        self.state.norm_sqr()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn apply_beam_splitter(state: &FockState, bs: &BeamSplitterSpec) -> Result<FockState> {
    let reg = state.registry();
    reg.require_kind(bs.mode_a, ModeKind::Photonic)?;
    reg.require_kind(bs.mode_b, ModeKind::Photonic)?;
    let (ma, mb) = (bs.mode_a, bs.mode_b);
    Ok(state.flat_map_terms(|occ, amp, out| {
        let na = occ.get(ma);
        let nb = occ.get(mb);
        if na == 0 && nb == 0 {
            out.push((occ.clone(), amp));
            return;
        }
        let total = na + nb;
        let prefactor =
            amp * FRAC_1_SQRT_2.powi(total as i32) / (factorial(na) * factorial(nb)).sqrt();
        for j in 0..=na {
            for k in 0..=nb {
                let out_a = j + k;
                let out_b = total - out_a;
                let sign = if (nb - k) % 2 == 0 { 1.0 } else { -1.0 };
                let weight = sign
                    * binomial(na, j)
                    * binomial(nb, k)
                    * (factorial(out_a) * factorial(out_b)).sqrt();
                out.push((occ.with(ma, out_a).with(mb, out_b), prefactor * weight));
            }
        }
    }))
}

/// Phase shifter: each term picks up `exp(i·phi·n_m)`.
pub fn apply_phase(state: &FockState, m: ModeIndex, phi: f64) -> Result<FockState> {
    state.registry().kind(m)?;
    Ok(state.map_terms(|occ, amp| {
        let n = occ.get(m);
        Some((
            occ.clone(),
            amp * Complex64::from_polar(1.0, phi * f64::from(n)),
        ))
    }))
}

/// Pair creation `ψ → (1 + λX + λ²X²/2) ψ` with `X = s† a_S†` and
/// `λ = √p_e · e^{iφ}`. The result is left unnormalized.
pub fn pump_excite(state: &FockState, p: &PumpSpec) -> Result<FockState> {
    let reg = state.registry();
    reg.require_kind(p.ensemble, ModeKind::AtomicCollective)?;
    reg.require_kind(p.stokes, ModeKind::Photonic)?;
    if !(0.0..1.0).contains(&p.emission_prob) {
        return Err(Error::Config(format!(
            "emission probability {} outside [0, 1)",
            p.emission_prob
        )));
    }
    if state.max_occupation(p.stokes) > 0 {
        return Err(Error::Sequencing(format!(
            "Stokes mode `{}` is not empty before pumping",
            reg.name(p.stokes)?
        )));
    }
    let lambda = Complex64::from_polar(p.emission_prob.sqrt(), p.channel_phase);
    let pair = |s: &FockState| -> Result<FockState> { s.create(p.ensemble)?.create(p.stokes) };
    let once = pair(state)?;
    let mut out = state.add(&once.scale(lambda))?;
    if p.order == PumpOrder::Second {
        let twice = pair(&once)?;
        out = out.add(&twice.scale(lambda * lambda * 0.5))?;
    }
    Ok(out)
}

/// Deterministic transfer of every excitation of `ensemble` into the empty
/// photonic mode `anti_stokes`.
pub fn repump_convert(
    state: &FockState,
    ensemble: ModeIndex,
    anti_stokes: ModeIndex,
) -> Result<FockState> {
    let reg = state.registry();
    reg.require_kind(ensemble, ModeKind::AtomicCollective)?;
    reg.require_kind(anti_stokes, ModeKind::Photonic)?;
    if state.max_occupation(anti_stokes) > 0 {
        return Err(Error::Sequencing(format!(
            "anti-Stokes mode `{}` is not empty before repumping",
            reg.name(anti_stokes)?
        )));
    }
    Ok(state.map_terms(|occ, amp| {
        let n = occ.get(ensemble);
        Some((occ.with(ensemble, 0).with(anti_stokes, n), amp))
    }))
}

/// Squared single-excitation matrix element `|⟨n−1|s|n⟩|²` of an atomic mode.
fn lowering_element_sqr(registry: &ModeRegistry, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let atoms = registry.collective().atom_count;
    let sat = atoms.map_or(1.0, |a| (1.0 - f64::from(n - 1) / a as f64).max(0.0));
    f64::from(n) * sat
}

/// Largest strength for which [`retrieve_single`] is a valid measurement on
/// the support of `state`.
pub fn max_retrieval_strength(state: &FockState, ensemble: ModeIndex) -> f64 {
    let reg = state.registry();
    let worst = state
        .terms()
        .map(|(occ, _)| lowering_element_sqr(reg, occ.get(ensemble)))
        .fold(0.0, f64::max);
    if worst > 0.0 {
        1.0 / worst
    } else {
        1.0
    }
}

/// Heralded single-excitation retrieval.
///
/// Isometric dilation of the two-outcome instrument
/// `K₁ = √r · s`, `K₀ = √(1 − r·s†s)`: the `K₁` branch removes one
/// collective excitation and emits one anti-Stokes photon. `strength` must
/// satisfy `r·|⟨n−1|s|n⟩|² ≤ 1` on the support.
pub fn retrieve_single(
    state: &FockState,
    ensemble: ModeIndex,
    anti_stokes: ModeIndex,
    strength: f64,
) -> Result<FockState> {
    let reg = state.registry().clone();
    reg.require_kind(ensemble, ModeKind::AtomicCollective)?;
    reg.require_kind(anti_stokes, ModeKind::Photonic)?;
    if state.max_occupation(anti_stokes) > 0 {
        return Err(Error::Sequencing(format!(
            "anti-Stokes mode `{}` is not empty before retrieval",
            reg.name(anti_stokes)?
        )));
    }
    if !(strength > 0.0 && strength <= max_retrieval_strength(state, ensemble) + 1e-12) {
        return Err(Error::Precondition(format!(
            "retrieval strength {strength} is not a valid measurement on this state"
        )));
    }
    Ok(state.flat_map_terms(|occ, amp, out| {
        let n = occ.get(ensemble);
        let e2 = lowering_element_sqr(&reg, n);
        let stay = (1.0 - strength * e2).max(0.0).sqrt();
        if stay > 0.0 {
            out.push((occ.clone(), amp * stay));
        }
        if e2 > 0.0 {
            out.push((
                occ.with(ensemble, n - 1).with(anti_stokes, 1),
                amp * (strength * e2).sqrt(),
            ));
        }
    }))
}

/// Kraus branches of a pure-loss channel on photonic mode `m`, labelled by
/// the number of photons lost to the environment.
pub fn loss_branches(state: &FockState, m: ModeIndex, eta: f64) -> Result<Vec<Branch<u32>>> {
    state.registry().require_kind(m, ModeKind::Photonic)?;
    if eta == 0.0 {
        return Ok(vec![Branch {
            label: 0,
            state: state.clone(),
        }]);
    }
    let max_n = state.max_occupation(m);
    let mut branches = Vec::new();
    for lost in 0..=max_n {
        let out = state.map_terms(|occ, amp| {
            let n = occ.get(m);
            if n < lost {
                return None;
            }
            let p = binomial(n, lost) * eta.powi(lost as i32) * (1.0 - eta).powi((n - lost) as i32);
            (p > 0.0).then(|| (occ.with(m, n - lost), amp * p.sqrt()))
        });
        if !out.is_zero() {
            branches.push(Branch {
                label: lost,
                state: out,
            });
        }
    }
    Ok(branches)
}

/// Photon-number branches of a detection on mode `m`; each post-state has
/// `m` emptied.
pub fn detect_branches(state: &FockState, m: ModeIndex) -> Result<Vec<Branch<u32>>> {
    state.registry().require_kind(m, ModeKind::Photonic)?;
    let max_n = state.max_occupation(m);
    let mut branches = Vec::new();
    for k in 0..=max_n {
        let out = state.map_terms(|occ, amp| (occ.get(m) == k).then(|| (occ.with(m, 0), amp)));
        if !out.is_zero() {
            branches.push(Branch {
                label: k,
                state: out,
            });
        }
    }
    Ok(branches)
}

/// Picks a branch index with probability proportional to `weights`.
pub(crate) fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sample_branch<R: Rng + ?Sized>(
    branches: Vec<Branch<u32>>,
    rng: &mut R,
) -> Result<(u32, FockState)> {
    if branches.is_empty() {
        return Err(Error::Normalization);
    }
    let weights: Vec<f64> = branches.iter().map(Branch::probability).collect();
    let pick = sample_weighted(&weights, rng);
    let b = branches.into_iter().nth(pick).expect("index in range");
    Ok((b.label, b.state.normalized()?))
}

/// Quantum-jump sample of the loss channel; returns the conditioned state
/// and the number of photons lost.
pub fn apply_loss<R: Rng + ?Sized>(
    state: &FockState,
    m: ModeIndex,
    loss: &LossSpec,
    rng: &mut R,
) -> Result<(FockState, u32)> {
    if loss.eta == 0.0 {
        state.registry().require_kind(m, ModeKind::Photonic)?;
        return Ok((state.clone(), 0));
    }
    let (lost, post) = sample_branch(loss_branches(state, m, loss.eta)?, rng)?;
    Ok((post, lost))
}

/// Threshold detection on mode `m`: samples the photon number, absorbs the
/// photons, and reports only whether the detector fired.
pub fn detect<R: Rng + ?Sized>(
    state: &FockState,
    m: ModeIndex,
    detector_id: &str,
    rng: &mut R,
) -> Result<(DetectorOutcome, FockState)> {
    if state.is_zero() {
        return Err(Error::Normalization);
    }
    let (k, post) = sample_branch(detect_branches(state, m)?, rng)?;
    Ok((
        DetectorOutcome {
            clicked: k >= 1,
            detector_id: detector_id.to_string(),
            photons: k,
        },
        post,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    struct Fixture {
        reg: Arc<ModeRegistry>,
        atom: ModeIndex,
        pa: ModeIndex,
        pb: ModeIndex,
    }

    fn fixture() -> Fixture {
        let mut b = ModeRegistry::builder();
        let atom = b.atomic("s1");
        let pa = b.photonic("a");
        let pb = b.photonic("b");
        Fixture {
            reg: b.seal(),
            atom,
            pa,
            pb,
        }
    }

    fn ket(f: &Fixture, counts: [u8; 3]) -> FockState {
        FockState::from_terms(&f.reg, 4, [(c(1.0), counts.to_vec())]).unwrap()
    }

    #[test]
    fn beam_splitter_single_photon() {
        let f = fixture();
        let bs = BeamSplitterSpec::new(&f.reg, f.pa, f.pb).unwrap();
        let out = apply_beam_splitter(&ket(&f, [0, 1, 0]), &bs).unwrap();
        assert!((out.amplitude(&[0, 1, 0]) - c(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((out.amplitude(&[0, 0, 1]) - c(FRAC_1_SQRT_2)).norm() < 1e-12);
        let from_b = apply_beam_splitter(&ket(&f, [0, 0, 1]), &bs).unwrap();
        assert!((from_b.amplitude(&[0, 0, 1]) + c(FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn beam_splitter_leaves_vacuum() {
        let f = fixture();
        let bs = BeamSplitterSpec::new(&f.reg, f.pa, f.pb).unwrap();
        let out = apply_beam_splitter(&FockState::vacuum(&f.reg), &bs).unwrap();
        assert!((out.amplitude(&[0, 0, 0]) - c(1.0)).norm() < 1e-12);
        assert_eq!(out.term_count(), 1);
    }

    #[test]
    fn hong_ou_mandel() {
        // (a† + b†)(a† − b†)/2 = (a†² − b†²)/2, cross terms cancel
        let f = fixture();
        let bs = BeamSplitterSpec::new(&f.reg, f.pa, f.pb).unwrap();
        let out = apply_beam_splitter(&ket(&f, [0, 1, 1]), &bs).unwrap();
        assert!((out.amplitude(&[0, 2, 0]) - c(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((out.amplitude(&[0, 0, 2]) + c(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!(out.amplitude(&[0, 1, 1]).norm() < 1e-12);
    }

    #[test]
    fn beam_splitter_rejects_atomic_modes() {
        let f = fixture();
        assert!(matches!(
            BeamSplitterSpec::new(&f.reg, f.atom, f.pb),
            Err(Error::ModeKind { .. })
        ));
        assert!(BeamSplitterSpec::new(&f.reg, f.pa, f.pa).is_err());
    }

    #[test]
    fn phase_shifter() {
        let f = fixture();
        let one = ket(&f, [1, 0, 0]);
        let same = apply_phase(&one, f.atom, 0.0).unwrap();
        assert!((same.amplitude(&[1, 0, 0]) - c(1.0)).norm() < 1e-12);
        let flipped = apply_phase(&one, f.atom, PI).unwrap();
        assert!((flipped.amplitude(&[1, 0, 0]) + c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn pump_amplitudes() {
        let f = fixture();
        let (pe, phi) = (0.01, 0.3);
        let spec = PumpSpec {
            ensemble: f.atom,
            stokes: f.pa,
            emission_prob: pe,
            channel_phase: phi,
            order: PumpOrder::Second,
        };
        let out = pump_excite(&FockState::vacuum(&f.reg), &spec).unwrap();
        let single = Complex64::from_polar(pe.sqrt(), phi);
        assert!((out.amplitude(&[1, 1, 0]) - single).norm() < 1e-12);
        // series oracle: (λ²/2!)·⟨2,2|(s†a†)²|0,0⟩ = (λ²/2)·2
        let double = Complex64::from_polar(pe, 2.0 * phi);
        assert!((out.amplitude(&[2, 2, 0]) - double).norm() < 1e-12);
        assert!((out.amplitude(&[0, 0, 0]) - c(1.0)).norm() < 1e-12);

        let zero_photon = out.project(|occ| occ.get(f.pa) == 0);
        assert!((zero_photon.amplitude(&[0, 0, 0]) - c(1.0)).norm() < 1e-12);
        assert_eq!(zero_photon.term_count(), 1);
    }

    #[test]
    fn pump_requires_empty_stokes() {
        let f = fixture();
        let spec = PumpSpec {
            ensemble: f.atom,
            stokes: f.pa,
            emission_prob: 0.01,
            channel_phase: 0.0,
            order: PumpOrder::First,
        };
        assert!(matches!(
            pump_excite(&ket(&f, [0, 1, 0]), &spec),
            Err(Error::Sequencing(_))
        ));
    }

    #[test]
    fn repump_swaps_excitations() {
        let f = fixture();
        let out = repump_convert(&ket(&f, [2, 0, 0]), f.atom, f.pb).unwrap();
        assert!((out.amplitude(&[0, 0, 2]) - c(1.0)).norm() < 1e-12);
        let untouched = repump_convert(&ket(&f, [0, 1, 0]), f.atom, f.pb).unwrap();
        assert!((untouched.amplitude(&[0, 1, 0]) - c(1.0)).norm() < 1e-12);
        assert!(matches!(
            repump_convert(&ket(&f, [1, 0, 1]), f.atom, f.pb),
            Err(Error::Sequencing(_))
        ));
    }

    #[test]
    fn retrieval_is_isometric() {
        let f = fixture();
        let s = FockState::from_terms(
            &f.reg,
            4,
            [(c(0.6), vec![1, 0, 0]), (c(0.8), vec![2, 0, 0])],
        )
        .unwrap();
        let r = max_retrieval_strength(&s, f.atom);
        assert!((r - 0.5).abs() < 1e-15);
        let out = retrieve_single(&s, f.atom, f.pb, r).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        let clicked = out.project(|occ| occ.get(f.pb) == 1);
        // √r·s acting on 0.6|1⟩ + 0.8|2⟩
        assert!((clicked.amplitude(&[0, 0, 1]) - c(0.6 * r.sqrt())).norm() < 1e-12);
        assert!((clicked.amplitude(&[1, 0, 1]) - c(0.8 * (2.0 * r).sqrt())).norm() < 1e-12);
        assert!(retrieve_single(&s, f.atom, f.pb, 0.9).is_err());
    }

    #[test]
    fn loss_branch_probabilities() {
        let f = fixture();
        let two = ket(&f, [0, 2, 0]);
        let branches = loss_branches(&two, f.pa, 0.3).unwrap();
        let probs: Vec<f64> = branches.iter().map(Branch::probability).collect();
        let expected = [0.49, 0.42, 0.09];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_limits() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = ket(&f, [0, 1, 0]);
        let (same, lost) = apply_loss(&one, f.pa, &LossSpec::lossless(), &mut rng).unwrap();
        assert_eq!(lost, 0);
        assert!((same.amplitude(&[0, 1, 0]) - c(1.0)).norm() < 1e-12);
        let (gone, lost) = apply_loss(&one, f.pa, &LossSpec::new(1.0).unwrap(), &mut rng).unwrap();
        assert_eq!(lost, 1);
        assert!((gone.amplitude(&[0, 0, 0]) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn loss_survival_frequency_matches_binomial() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let one = ket(&f, [0, 1, 0]);
        let loss = LossSpec::new(0.3).unwrap();
        let n = 100_000;
        let survived = (0..n)
            .filter(|_| apply_loss(&one, f.pa, &loss, &mut rng).unwrap().1 == 0)
            .count();
        let p = survived as f64 / n as f64;
        let sigma = (0.7f64 * 0.3 / n as f64).sqrt();
        assert!((p - 0.7).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn detection_outcomes() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (out, post) = detect(&ket(&f, [0, 1, 0]), f.pa, "D1", &mut rng).unwrap();
        assert!(out.clicked);
        assert!((post.amplitude(&[0, 0, 0]) - c(1.0)).norm() < 1e-12);
        let (out, _) = detect(&FockState::vacuum(&f.reg), f.pa, "D1", &mut rng).unwrap();
        assert!(!out.clicked);

        let mixed = FockState::from_terms(
            &f.reg,
            4,
            [
                (c(FRAC_1_SQRT_2), vec![0, 1, 0]),
                (c(FRAC_1_SQRT_2), vec![1, 2, 0]),
            ],
        )
        .unwrap();
        let n = 20_000;
        let mut twos = 0;
        for _ in 0..n {
            let (o, _) = detect(&mixed, f.pa, "D1", &mut rng).unwrap();
            assert!(o.clicked);
            twos += usize::from(o.photons == 2);
        }
        let p = twos as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());

        let zero = FockState::zero(&f.reg, 4);
        assert_eq!(
            detect(&zero, f.pa, "D1", &mut rng).unwrap_err(),
            Error::Normalization
        );
    }
}
