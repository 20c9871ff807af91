//! Exact algebra checks shared by the oracle tests and the acceptance run.

use super::*;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wclass_sim::protocol::{
    stage_success_branches, w_state_on, Protocol, ProtocolConfig, Stage, StageKind,
};
use wclass_sim::{CollectiveModeModel, FockState, ModeRegistry};

pub const TOL: f64 = 1e-10;

fn exact_cfg(phases: &[f64]) -> ProtocolConfig {
    ProtocolConfig {
        p_e: 1e-3,
        double_pair: false,
        phases: phases.to_vec(),
        ..ProtocolConfig::with_parties(phases.len())
    }
}

fn phase_sets(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut sets = vec![vec![0.0; n]];
    sets.extend((0..20).map(|_| random_phases(n, &mut rng)));
    sets
}

pub fn epr_matches_oracle() {
    for phases in phase_sets(3) {
        let proto = Protocol::new(exact_cfg(&phases)).unwrap();
        let modes = &proto.layout().ensembles;
        let oracle = Poly::one(3)
            .times_linear(&[(0, Complex64::new(1.0, 0.0)), (1, phase(phases[1]))])
            .scale(0.5f64.sqrt());
        let target = proto.epr_target().unwrap();
        assert!(max_diff(&target, &oracle, modes) < TOL);

        let stage = &proto.epr_stages()[0];
        let (p, branches) =
            stage_success_branches(stage, &proto.context(), &proto.vacuum()).unwrap();
        assert!(p > 0.0);
        for (_, b) in branches {
            assert!((b.state.fidelity(&target).unwrap() - 1.0).abs() < TOL);
        }
    }
}

pub fn connect_then_merge_matches_oracle() {
    for phases in phase_sets(3) {
        let proto = Protocol::new(exact_cfg(&phases)).unwrap();
        let modes = &proto.layout().ensembles;
        let ctx = proto.context();

        let epr =
            Poly::one(3).times_linear(&[(0, Complex64::new(1.0, 0.0)), (1, phase(phases[1]))]);
        let linked = epr.times_linear(&[
            (1, Complex64::new(1.0, 0.0)),
            (2, phase(phases[2] - phases[1])),
        ]);
        let linked_half = linked.scale(0.5);
        assert!((linked_half.norm_sqr() - 1.25).abs() < TOL);

        let connect = Stage::Link {
            kind: StageKind::Connect,
            i: 2,
            j: 3,
            accept_second_port: true,
            detectors: ["D1", "D2"],
        };
        let linked_norm = linked_half.scale(1.0 / linked_half.norm_sqr().sqrt());
        let (_, branches) =
            stage_success_branches(&connect, &ctx, &proto.epr_target().unwrap()).unwrap();
        for (_, b) in &branches {
            let f = fidelity_with(&b.state, &linked_norm, modes);
            assert!((f - 1.0).abs() < TOL, "linked_half fidelity {f}");
        }

        let w_prime_oracle = linked.derivative(1);
        assert!((w_prime_oracle.norm_sqr() - 6.0).abs() < TOL);
        assert_eq!(w_prime_oracle, w_prime(&phases));
        let merge = Stage::Retrieve {
            kind: StageKind::Merge,
            i: 2,
            detector: "D3",
        };
        let normalized = w_prime_oracle.scale(1.0 / 6f64.sqrt());
        for (_, b) in &branches {
            let (_, merged) = stage_success_branches(&merge, &ctx, &b.state).unwrap();
            assert!(!merged.is_empty());
            for (_, m) in merged {
                assert!((fidelity_with(&m.state, &normalized, modes) - 1.0).abs() < TOL);
            }
        }
    }
}

/// Fidelity of a normalized state with a normalized oracle polynomial.
fn fidelity_with(state: &FockState, poly: &Poly, modes: &[wclass_sim::ModeIndex]) -> f64 {
    let len = state.registry().len();
    let mut overlap = Complex64::new(0.0, 0.0);
    for m in poly.terms.keys() {
        let mut counts = vec![0u8; len];
        for (k, &mode) in modes.iter().enumerate() {
            counts[mode.id()] = m[k];
        }
        overlap += poly.amplitude(m).conj() * state.amplitude(&counts);
    }
    overlap.norm_sqr() / state.norm_sqr()
}

pub fn w_prime_norm_and_amplitudes() {
    for n in 3..=8 {
        for phases in phase_sets(n) {
            let proto = Protocol::new(exact_cfg(&phases)).unwrap();
            let oracle = w_prime(&phases);
            assert!((oracle.norm_sqr() - (4 * n - 6) as f64).abs() < TOL);
            let algebra = proto.w_prime_algebra().unwrap();
            assert!((algebra.norm_sqr() - (4 * n - 6) as f64).abs() < TOL);
            assert!(max_diff(&algebra, &oracle, &proto.layout().ensembles) < TOL);
            // (s₁† + 2 Σ e^{iφ₁ᵢ} sᵢ† + e^{iφ₁ₙ} sₙ†)|vac⟩
            for k in 0..n {
                let mut m = vec![0u8; n];
                m[k] = 1;
                let weight = if k == 0 || k == n - 1 { 1.0 } else { 2.0 };
                assert!((oracle.amplitude(&m) - phase(phases[k]) * weight).norm() < TOL);
            }
        }
    }
}

pub fn closing_round_gives_w() {
    for n in 3..=8 {
        for phases in phase_sets(n) {
            let proto = Protocol::new(exact_cfg(&phases)).unwrap();
            let modes = &proto.layout().ensembles;
            let closed = w_closed(&phases);
            assert!((closed.norm_sqr() - 1.0).abs() < TOL, "prefactor 1/(2√n)");
            assert_eq!(closed.terms.len(), n);
            let ideal = w_ideal(&phases);
            for (m, c) in &ideal.terms {
                assert!((closed.terms[m] - c).norm() < TOL);
            }
            let algebra = proto.w_algebra().unwrap();
            assert!(max_diff(&algebra, &closed, modes) < TOL);
            let w = proto.ideal_w_state().unwrap();
            assert!(max_diff(&w, &ideal, modes) < TOL);
            assert!((algebra.fidelity(&w).unwrap() - 1.0).abs() < TOL);
        }
    }
}

pub fn first_order_chain_lands_on_w() {
    for n in 3..=5 {
        for phases in phase_sets(n).into_iter().take(4) {
            let proto = Protocol::new(exact_cfg(&phases)).unwrap();
            let dist = proto.attempt_distribution().unwrap();
            let w = proto.ideal_w_state().unwrap();
            for o in dist.outcomes() {
                assert!((o.state.fidelity(&w).unwrap() - 1.0).abs() < TOL);
            }
        }
    }
}

pub fn finite_size_double_excitation() {
    for atoms in [2u64, 10, 1000, 1_000_000] {
        let mut b = ModeRegistry::builder();
        let s = b.atomic("s");
        b.collective(CollectiveModeModel::finite(atoms).unwrap());
        let reg = b.seal();
        let vac = FockState::vacuum(&reg);
        let once = vac.create(s).unwrap();
        let back = once.create(s).unwrap().annihilate(s).unwrap();
        let expected = 2.0 * (atoms as f64 - 1.0) / atoms as f64;
        let ratio = back.inner(&once).unwrap();
        assert!((ratio.re - expected).abs() < 1e-12 && ratio.im.abs() < 1e-12);
    }
}

pub fn ideal_w_has_equal_amplitudes() {
    let proto = Protocol::new(ProtocolConfig::with_parties(3)).unwrap();
    let w = proto.ideal_w_state().unwrap();
    for k in 0..3 {
        let mut counts = vec![0u8; proto.layout().registry.len()];
        counts[proto.layout().ensembles[k].id()] = 1;
        assert!((w.amplitude(&counts).re - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }
    let one = w_state_on(&proto.vacuum(), &proto.layout().ensembles[..1], &[0.0]).unwrap();
    assert!((one.norm() - 1.0).abs() < 1e-12);
}
