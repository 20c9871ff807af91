mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wclass_sim::analysis::{
    estimate_vacuum_coefficient, fidelity_mixture, run_batch, run_batch_with_workers, trial_rng,
};
use wclass_sim::protocol::{Protocol, ProtocolConfig};
use wclass_sim::ModeKind;

fn cfg(n: usize, p_e: f64, eta: f64) -> ProtocolConfig {
    ProtocolConfig {
        p_e,
        eta,
        ..ProtocolConfig::with_parties(n)
    }
}

struct Summary {
    attempts: Vec<f64>,
    fidelity: Vec<f64>,
    single: Vec<f64>,
}

impl Summary {
    fn mean(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }
}

fn collect(p: &Protocol, trials: u64, seed: u64, direct: bool) -> Summary {
    let ideal = p.ideal_w_state().unwrap();
    let mut s = Summary {
        attempts: vec![],
        fidelity: vec![],
        single: vec![],
    };
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let step = if direct {
            p.build_w_chain_direct(&mut rng)
        } else {
            p.build_w_chain(&mut rng)
        }
        .unwrap();
        let comp = p.phase_compensate(&step.state).unwrap();
        s.attempts.push(step.attempts as f64);
        s.fidelity.push(comp.fidelity(&ideal).unwrap());
        let one = comp.definite_excitations(ModeKind::AtomicCollective) == Some(1);
        s.single.push(if one { 1.0 } else { 0.0 });
    }
    s
}

fn agree(a: &[f64], b: &[f64], what: &str) {
    let (ma, sa) = Summary::mean(a);
    let (mb, sb) = Summary::mean(b);
    let z = (ma - mb).abs() / (sa * sa + sb * sb).sqrt().max(1e-12);
    assert!(z < 4.0, "{what}: {ma} vs {mb} (z = {z:.2})");
}

#[test]
fn skip_ahead_matches_literal_loop() {
    let p = Protocol::new(cfg(3, 0.2, 0.2)).unwrap();
    let direct = collect(&p, 400, 11, true);
    let sampled = collect(&p, 400, 12, false);
    agree(&direct.attempts, &sampled.attempts, "attempts");
    agree(&direct.fidelity, &sampled.fidelity, "fidelity");
    agree(
        &direct.single,
        &sampled.single,
        "single-excitation fraction",
    );
}

#[test]
fn attempts_are_geometric() {
    let p = Protocol::new(cfg(2, 0.02, 0.1)).unwrap();
    let dist = wclass_sim::protocol::AttemptDistribution::exact(
        &p.epr_stages(),
        &p.context(),
        &p.vacuum(),
    )
    .unwrap();
    let q = dist.success_probability();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 20_000;
    // ten bins of near-equal geometric mass
    let mut edges = vec![];
    for k in 1..10 {
        let x = ((1.0 - k as f64 / 10.0).ln() / (1.0 - q).ln()).ceil();
        edges.push(x as u64);
    }
    let cdf = |a: u64| 1.0 - (1.0 - q).powi(a as i32);
    let mut counts = [0u64; 10];
    for _ in 0..draws {
        let a = dist.sample(u64::MAX, &mut rng).attempts;
        counts[edges.iter().filter(|&&e| a > e).count()] += 1;
    }
    let mut lo = 0.0;
    let mut chi2 = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let hi = if i < 9 { cdf(edges[i]) } else { 1.0 };
        let expect = (hi - lo) * draws as f64;
        chi2 += (c as f64 - expect).powi(2) / expect;
        lo = hi;
    }
    // 0.1% point of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn epr_click_rate_matches_closed_form() {
    for p_e in [0.001, 0.005, 0.02, 0.1] {
        let p = Protocol::new(cfg(2, p_e, 0.0)).unwrap();
        let dist = wclass_sim::protocol::AttemptDistribution::exact(
            &p.epr_stages(),
            &p.context(),
            &p.vacuum(),
        )
        .unwrap();
        let expect = common::epr_click_probability(p_e);
        assert!((dist.success_probability() - expect).abs() < 1e-12);
    }
    let c = cfg(3, 0.005, 0.0);
    let rep = run_batch(&c, 4000).unwrap();
    let expect = common::epr_click_probability(0.005);
    let k = rep.stage_success_prob[0];
    let se = rep.confidence.stage_success_se[0];
    assert!((k - expect).abs() < 3.0 * se, "{k} vs {expect} ± {se}");
}

#[test]
fn standard_errors_shrink_with_trials() {
    let c = cfg(3, 0.01, 0.2);
    let small = run_batch(&c, 500).unwrap();
    let large = run_batch(&c, 8000).unwrap();
    let ratio = small.confidence.mean_attempts_se / large.confidence.mean_attempts_se;
    assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio}");
    let ratio = small.confidence.p_c_hat_se / large.confidence.p_c_hat_se;
    assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio}");
}

#[test]
fn batches_are_reproducible_across_workers() {
    let c = cfg(4, 0.01, 0.3);
    let one = run_batch_with_workers(&c, 300, 1).unwrap();
    let four = run_batch_with_workers(&c, 300, 4).unwrap();
    assert_eq!(one, four);
    let again = run_batch_with_workers(&c, 300, 3).unwrap();
    assert_eq!(one, again);
    let other = run_batch_with_workers(
        &ProtocolConfig {
            seed: c.seed + 1,
            ..c
        },
        300,
        1,
    )
    .unwrap();
    assert_ne!(one.mean_attempts, other.mean_attempts);
}

#[test]
fn first_order_without_loss_is_noise_free() {
    let c = ProtocolConfig {
        double_pair: false,
        ..cfg(3, 0.01, 0.0)
    };
    let (coef, mix) = estimate_vacuum_coefficient(&c, 2000).unwrap();
    assert_eq!(coef, 0.0);
    let target = Protocol::new(c).unwrap().ideal_w_state().unwrap();
    assert!((fidelity_mixture(&mix, &target).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn mixture_fidelity_follows_noise_ratio() {
    let c = cfg(3, 0.02, 0.3);
    let (coef, mix) = estimate_vacuum_coefficient(&c, 3000).unwrap();
    assert!(coef > 0.0);
    let target = Protocol::new(c).unwrap().ideal_w_state().unwrap();
    let f = fidelity_mixture(&mix, &target).unwrap();
    assert!(
        (f - 1.0 / (1.0 + coef)).abs() < 1e-10,
        "{f} vs {}",
        1.0 / (1.0 + coef)
    );
}
