//! Gauss–Legendre rules and globally adaptive Gauss–Kronrod (7, 15) integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{BslError, Result};

/// Default relative tolerance for adaptive integration.
pub const REL_TOL: f64 = 1e-10;
/// Default absolute tolerance for adaptive integration.
pub const ABS_TOL: f64 = 1e-14;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of a quadrature with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances and subdivision budget for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_pieces: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: REL_TOL, abs: ABS_TOL, max_pieces: 4000 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs, ..Default::default() }
    }
}

/// Globally adaptive integration over the consecutive intervals defined by `points`
/// (which must be sorted; use them to mark peaks and kinks).
pub fn adaptive_points(
    mut f: impl FnMut(f64) -> f64,
    points: &[f64],
    tol: Tolerance,
) -> Result<Quad> {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (v, e) = gk15(&mut f, a, b);
        value += v;
        error += e;
        heap.push(Piece { a, b, value: v, error: e });
    }
    while error > tol.abs.max(tol.rel * value.abs()) {
        if heap.len() >= tol.max_pieces {
            return Err(BslError::QuadratureNonConvergence { estimate: value, error_bound: error });
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval cannot be split further in floating point
            heap.push(Piece { error: 0.0, ..p });
            error -= p.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        value += v1 + v2 - p.value;
        error += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
    // re-sum to shed the drift of incremental updates
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(Quad { value, error })
}

/// Adaptive integration of `f` over [a, b].
pub fn adaptive(f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<Quad> {
    adaptive_points(f, &[a, b], tol)
}

/// Builds a sorted breakpoint list from an interval and interior hints.
pub fn breakpoints(a: f64, b: f64, hints: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(hints.iter().copied().filter(|&h| h > a && h < b && h.is_finite()));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Integrates exp(ln_f) over the breakpoint intervals and returns the natural log of the
/// result together with the relative error. The integrand is rescaled by its sampled maximum
/// so that values far below the f64 range survive.
pub fn ln_integrate(
    ln_f: impl Fn(f64) -> f64,
    points: &[f64],
    tol: Tolerance,
) -> Result<(f64, f64)> {
    let mut shift = f64::NEG_INFINITY;
    let samples = 256;
    for w in points.windows(2) {
        for k in 0..=samples {
            let x = w[0] + (w[1] - w[0]) * (k as f64 + 0.5) / (samples as f64 + 1.0);
            let v = ln_f(x);
            if v > shift {
                shift = v;
            }
        }
    }
    if !shift.is_finite() {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let q = adaptive_points(|x| (ln_f(x) - shift).exp(), points, Tolerance { abs: 0.0, ..tol })?;
    if q.value <= 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((shift + q.value.ln(), q.error / q.value))
}
