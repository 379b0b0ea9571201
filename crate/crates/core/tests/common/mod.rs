//! Generators and checks shared by the property tests and the acceptance run.

#![allow(dead_code)]

use bsl_core::asymptotics::{lemma_a1_oracle, lemma_a2_oracle, majorization_transfer, RateFunction};
use bsl_core::toeplitz::CutPowerFunction;
use proptest::prelude::*;

/// A sequence sandwiched between 1/(c·ρ(n)) and c/ρ(n), sorted nonincreasingly.
#[derive(Debug, Clone)]
pub struct Sandwiched {
    pub a: Vec<f64>,
    pub rate: f64,
    pub c: f64,
}

pub fn sandwiched(min_rate: f64, max_rate: f64) -> impl Strategy<Value = Sandwiched> {
    (min_rate..max_rate, 1.0f64..8.0, 40usize..400).prop_flat_map(|(rate, c, len)| {
        prop::collection::vec(-1.0f64..1.0, len).prop_map(move |u| {
            let mut a: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(i, x)| c.powf(*x) / ((i + 1) as f64).powf(rate))
                .collect();
            a.sort_by(|x, y| y.total_cmp(x));
            Sandwiched { a, rate, c }
        })
    })
}

/// The convex sandwich holds with B = c for every δ strictly between the last and first terms.
pub fn a1_holds(s: &Sandwiched, beta: f64) -> bool {
    let rho = RateFunction::Power { a: s.rate };
    let hi = s.a[0].powf(beta);
    let lo = s.a[s.a.len() - 1].powf(beta);
    let grid: Vec<f64> = (1..=8).map(|k| lo * (hi / lo).powf(k as f64 / 9.0)).collect();
    lemma_a1_oracle(&s.a, &rho, s.c, beta, &grid).expect("oracle preconditions")
}

/// The concave sandwich holds with B = c on the same finite section.
pub fn a2_holds(s: &Sandwiched, p_fraction: f64) -> bool {
    let rho = RateFunction::Power { a: s.rate };
    let p = p_fraction / s.rate;
    lemma_a2_oracle(&s.a, &rho, s.c, p).expect("oracle preconditions")
}

/// (a, b, p, β) with a^{1/p} weakly majorised by b^{1/p} and βp ≥ 1.
#[derive(Debug, Clone)]
pub struct Majorized {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub p: f64,
    pub h: CutPowerFunction,
}

pub fn majorized() -> impl Strategy<Value = Majorized> {
    (1.0f64..3.0, 0.0f64..1.0, 0.0f64..0.05, 5usize..120).prop_flat_map(|(p, beta_extra, delta, len)| {
        (
            prop::collection::vec(0.0f64..1.0, len),
            prop::collection::vec(0.5f64..1.0, len),
            prop::collection::vec(any::<bool>(), len),
        )
            .prop_map(move |(raw, shrink, merge)| {
                let mut b = raw.clone();
                b.sort_by(|x, y| y.total_cmp(x));
                // Averaging adjacent pairs of b^{1/p} and shrinking yields a weakly majorised sequence.
                let mut x: Vec<f64> = b.iter().map(|v| v.powf(1.0 / p)).collect();
                let mut i = 0;
                while i + 1 < x.len() {
                    if merge[i] {
                        let m = 0.5 * (x[i] + x[i + 1]);
                        x[i] = m;
                        x[i + 1] = m;
                    }
                    i += 2;
                }
                let mut a: Vec<f64> = x.iter().zip(&shrink).map(|(v, s)| (v * s).powf(p)).collect();
                a.sort_by(|u, v| v.total_cmp(u));
                let beta = (1.0 + beta_extra) / p;
                Majorized { a, b, p, h: CutPowerFunction::new(beta, delta) }
            })
    })
}

pub fn majorization_holds(m: &Majorized) -> bool {
    majorization_transfer(&m.a, &m.b, m.p, &m.h).expect("transfer preconditions")
}
