//! Independent oracle: states as polynomials in `x₁ … x_k` acting on the
//! vacuum, with `s_k† = x_k ·` and `s_k = ∂/∂x_k`. The ket `|m⟩` corresponds
//! to `x^m / √(Π m_k!)`, so `⟨x^m|x^m⟩ = Π m_k!`.

#![allow(dead_code)]

pub mod algebra;

use std::collections::BTreeMap;

use num_complex::Complex64;
use wclass_sim::{FockState, ModeIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub vars: usize,
    pub terms: BTreeMap<Vec<u8>, Complex64>,
}

fn factorial(n: u8) -> f64 {
    (1..=u32::from(n)).map(f64::from).product()
}

impl Poly {
    pub fn one(vars: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; vars], Complex64::new(1.0, 0.0));
        Self { vars, terms }
    }

    fn clean(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() > 1e-14);
        self
    }

    /// Multiplication by `Σ c_k x_k`.
    pub fn times_linear(&self, coeffs: &[(usize, Complex64)]) -> Self {
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            for &(k, a) in coeffs {
                let mut e = m.clone();
                e[k] += 1;
                *out.entry(e).or_insert(Complex64::new(0.0, 0.0)) += c * a;
            }
        }
        Self {
            vars: self.vars,
            terms: out,
        }
        .clean()
    }

    pub fn create(&self, k: usize) -> Self {
        self.times_linear(&[(k, Complex64::new(1.0, 0.0))])
    }

    pub fn derivative(&self, k: usize) -> Self {
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            if m[k] > 0 {
                let mut e = m.clone();
                e[k] -= 1;
                *out.entry(e).or_insert(Complex64::new(0.0, 0.0)) += c * f64::from(m[k]);
            }
        }
        Self {
            vars: self.vars,
            terms: out,
        }
        .clean()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            vars: self.vars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c.norm_sqr() * m.iter().map(|&k| factorial(k)).product::<f64>())
            .sum()
    }

    /// Fock amplitude of `|m⟩`.
    pub fn amplitude(&self, m: &[u8]) -> Complex64 {
        self.terms
            .get(m)
            .map(|c| c * m.iter().map(|&k| factorial(k)).product::<f64>().sqrt())
            .unwrap_or_default()
    }
}

/// Largest amplitude difference between `state` and the oracle `poly`,
/// with oracle variable `k` living on mode `modes[k]` and every other mode
/// empty.
pub fn max_diff(state: &FockState, poly: &Poly, modes: &[ModeIndex]) -> f64 {
    let len = state.registry().len();
    let embed = |m: &[u8]| {
        let mut counts = vec![0u8; len];
        for (k, &mode) in modes.iter().enumerate() {
            counts[mode.id()] = m[k];
        }
        counts
    };
    let mut worst: f64 = 0.0;
    for m in poly.terms.keys() {
        worst = worst.max((state.amplitude(&embed(m)) - poly.amplitude(m)).norm());
    }
    for (occ, amp) in state.terms() {
        let counts = occ.counts();
        let inside: Vec<u8> = modes.iter().map(|m| counts[m.id()]).collect();
        if embed(&inside) != counts || !poly.terms.contains_key(&inside) {
            worst = worst.max(amp.norm());
        }
    }
    worst
}

pub fn phase(phi: f64) -> Complex64 {
    Complex64::from_polar(1.0, phi)
}

/// Oracle `W′ = Π s_i (s_i† + e^{iφ_{i,i+1}} s_{i+1}†)(s₁† + e^{iφ₁₂} s₂†)|vac⟩`
/// with `φ_{ij} = φ_{1j} − φ_{1i}`; variables are 0-based.
pub fn w_prime(phases: &[f64]) -> Poly {
    let n = phases.len();
    let link = |p: &Poly, i: usize, j: usize| {
        p.times_linear(&[
            (i, Complex64::new(1.0, 0.0)),
            (j, phase(phases[j] - phases[i])),
        ])
    };
    let mut p = link(&Poly::one(n), 0, 1);
    for i in 1..n - 1 {
        p = link(&p, i, i + 1).derivative(i);
    }
    p
}

/// Oracle `(1/(2√n)) s₁(s₁† + e^{iφ₁ₙ} sₙ†) W′`.
pub fn w_closed(phases: &[f64]) -> Poly {
    let n = phases.len();
    w_prime(phases)
        .times_linear(&[(0, Complex64::new(1.0, 0.0)), (n - 1, phase(phases[n - 1]))])
        .derivative(0)
        .scale(1.0 / (2.0 * (n as f64).sqrt()))
}

/// Oracle `(1/√n) Σ e^{iφ₁ᵢ} x_i`.
pub fn w_ideal(phases: &[f64]) -> Poly {
    let n = phases.len();
    let coeffs: Vec<(usize, Complex64)> = (0..n).map(|k| (k, phase(phases[k]))).collect();
    Poly::one(n)
        .times_linear(&coeffs)
        .scale(1.0 / (n as f64).sqrt())
}

/// Single-click probability of one link stage from vacuum with the pump
/// expanded jointly to second order in `√p_e`: one photon (`2p_e`), a double
/// pair from one ensemble (`p_e²`, half the time a single click) and one
/// pair from each ensemble (`p_e²`, always bunched into one port).
pub fn epr_click_probability(p_e: f64) -> f64 {
    let norm = 1.0 + 2.0 * p_e + 3.0 * p_e * p_e;
    (2.0 * p_e + 2.0 * p_e * p_e) / norm
}

/// Random phase vector with the reference phase fixed at zero.
pub fn random_phases(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    v[0] = 0.0;
    v
}
