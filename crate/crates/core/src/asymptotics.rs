//! Rate functions, the rearrangement lemmas as executable checks, and the two-sided
//! verdict tester used to decide "a_n ≍ 1/ρ(n)" on a finite window.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, BslError, Result};
use crate::toeplitz::CutPowerFunction;

/// Default burn-in: windows must start at or after this index.
pub const DEFAULT_BURN_IN: usize = 16;
/// Minimum number of points in a verdict window.
pub const MIN_WINDOW: usize = 16;

/// Increasing rate function ρ on [1, ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateFunction {
    /// x^a
    Power { a: f64 },
    /// x^a log^b(e + x)
    PowerLog { a: f64, b: f64 },
    /// log^b(e + x)
    LogPower { b: f64 },
    /// e^{cx}
    Exp { c: f64 },
    /// Log-log linear interpolation through (x, ρ(x)) with end-slope extrapolation.
    Tabulated {
        x: Vec<f64>,
        y: Vec<f64>,
        #[serde(default)]
        a_upper: Option<f64>,
        #[serde(default)]
        gamma_lower: Option<f64>,
    },
}

/// Declared regularity: ρ(x)/x^{a_upper} nonincreasing, ρ(x)/x^{gamma_lower} nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub a_upper: Option<f64>,
    pub gamma_lower: Option<f64>,
}

impl RateFunction {
    pub fn power(a: f64) -> Self {
        RateFunction::Power { a }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RateFunction::Power { a } => *a > 0.0,
            RateFunction::PowerLog { a, b } => *a > 0.0 && *b >= 0.0 || *a >= 0.0 && *b > 0.0,
            RateFunction::LogPower { b } => *b > 0.0,
            RateFunction::Exp { c } => *c > 0.0,
            RateFunction::Tabulated { x, y, .. } => {
                x.len() >= 2
                    && x.len() == y.len()
                    && x.windows(2).all(|w| w[1] > w[0])
                    && y.windows(2).all(|w| w[1] > w[0])
                    && x[0] > 0.0
                    && y[0] > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("rate function is not increasing and positive: {self:?}"))
        }
    }

    /// ln ρ(x).
    pub fn ln_value(&self, x: f64) -> f64 {
        let e = std::f64::consts::E;
        match self {
            RateFunction::Power { a } => a * x.ln(),
            RateFunction::PowerLog { a, b } => a * x.ln() + b * (e + x).ln().ln(),
            RateFunction::LogPower { b } => b * (e + x).ln().ln(),
            RateFunction::Exp { c } => c * x,
            RateFunction::Tabulated { x: xs, y: ys, .. } => {
                let lx = x.ln();
                let n = xs.len();
                let k = match xs.iter().position(|&v| v > x) {
                    Some(0) => 0,
                    Some(k) => k - 1,
                    None => n - 2,
                };
                let (x0, x1) = (xs[k].ln(), xs[k + 1].ln());
                let (y0, y1) = (ys[k].ln(), ys[k + 1].ln());
                y0 + (y1 - y0) * (lx - x0) / (x1 - x0)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.ln_value(x).exp()
    }

    pub fn regularity(&self) -> Regularity {
        match self {
            RateFunction::Power { a } => Regularity { a_upper: Some(*a), gamma_lower: Some(*a) },
            // x/((e+x) log(e+x)) < 1 bounds the logarithmic factor's local exponent
            RateFunction::PowerLog { a, b } => {
                Regularity { a_upper: Some(a + b), gamma_lower: Some(*a) }
            }
            RateFunction::LogPower { b } => Regularity { a_upper: Some(*b), gamma_lower: Some(0.0) },
            RateFunction::Exp { .. } => Regularity { a_upper: None, gamma_lower: None },
            RateFunction::Tabulated { a_upper, gamma_lower, .. } => {
                Regularity { a_upper: *a_upper, gamma_lower: *gamma_lower }
            }
        }
    }

    /// Checks monotonicity and the declared exponents on a 10³-point log grid of [1, 10⁶].
    pub fn verify_regularity(&self) -> bool {
        let reg = self.regularity();
        let grid: Vec<f64> = (0..1000).map(|k| 10f64.powf(6.0 * k as f64 / 999.0)).collect();
        let tol = 1e-12;
        grid.windows(2).all(|w| {
            let (l0, l1) = (self.ln_value(w[0]), self.ln_value(w[1]));
            let (x0, x1) = (w[0].ln(), w[1].ln());
            let inc = l1 >= l0 - tol;
            let up = reg.a_upper.is_none_or(|a| l1 - a * x1 <= l0 - a * x0 + tol);
            let low = reg.gamma_lower.is_none_or(|g| l1 - g * x1 >= l0 - g * x0 - tol);
            inc && up && low
        })
    }

    /// ρ⁻¹(y), closed form where available and bisection to relative 1e−12 otherwise.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        self.inverse_ln(y.ln())
    }

    /// ρ⁻¹(e^{ln_y}).
    pub fn inverse_ln(&self, ln_y: f64) -> Result<f64> {
        let floor = self.ln_value(1.0);
        if ln_y < floor - 1e-14 * floor.abs().max(1.0) {
            return Err(BslError::BelowRange { y: ln_y.exp(), floor: floor.exp() });
        }
        match self {
            RateFunction::Power { a } => return Ok((ln_y / a).exp()),
            RateFunction::Exp { c } => return Ok(ln_y / c),
            _ => {}
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while self.ln_value(hi.exp()) < ln_y {
            lo = hi;
            hi *= 2.0;
            if hi > 700.0 {
                return invalid("rate inverse exceeds the representable range");
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.ln_value(mid.exp()) < ln_y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

/// Inclusive, 1-based index window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Window { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end + 1).saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum VerdictStatus {
    Equivalent { c_low: f64, c_high: f64 },
    UpperOnly { c_high: f64 },
    Fails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsympVerdict {
    pub status: VerdictStatus,
    pub window: Window,
    pub spread: f64,
    /// a_n·ρ(n) over the window.
    pub ratio_profile: Vec<f64>,
}

impl AsympVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self.status, VerdictStatus::Equivalent { .. })
    }

    /// Observed max/min of the ratio profile.
    pub fn observed_spread(&self) -> f64 {
        let (lo, hi) = self
            .ratio_profile
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        hi / lo
    }

    /// JSON summary {status, c_low, c_high, window, spread}.
    pub fn to_json(&self) -> serde_json::Value {
        let (status, lo, hi) = match self.status {
            VerdictStatus::Equivalent { c_low, c_high } => ("equivalent", Some(c_low), Some(c_high)),
            VerdictStatus::UpperOnly { c_high } => ("upper-only", None, Some(c_high)),
            VerdictStatus::Fails => ("fails", None, None),
        };
        serde_json::json!({
            "status": status,
            "c_low": lo,
            "c_high": hi,
            "window": [self.window.start, self.window.end],
            "spread": self.spread,
        })
    }
}

/// verdict with the default burn-in.
pub fn verdict(a: &[f64], rho: &RateFunction, window: Window, spread: f64) -> Result<AsympVerdict> {
    let ln_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    verdict_ln(&ln_a, rho, window, spread, DEFAULT_BURN_IN)
}

/// Verdict on a sequence given by its logarithms (so that values below the f64 range
/// can be judged), with an explicit burn-in.
pub fn verdict_ln(
    ln_a: &[f64],
    rho: &RateFunction,
    window: Window,
    spread: f64,
    burn_in: usize,
) -> Result<AsympVerdict> {
    if window.len() < MIN_WINDOW {
        return Err(BslError::WindowTooShort { len: window.len(), min: MIN_WINDOW });
    }
    if window.start < burn_in.max(1) {
        return invalid(format!("window starts at {} before burn-in {}", window.start, burn_in));
    }
    if window.end > ln_a.len() {
        return invalid(format!("window end {} beyond sequence length {}", window.end, ln_a.len()));
    }
    if !(spread >= 1.0) {
        return invalid("spread must be at least 1");
    }
    let ln_q: Vec<f64> =
        (window.start..=window.end).map(|n| ln_a[n - 1] + rho.ln_value(n as f64)).collect();
    let lo = ln_q.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ln_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratio_profile: Vec<f64> = ln_q.iter().map(|v| v.exp()).collect();
    let status = if lo.is_finite() && hi - lo <= spread.ln() + 1e-12 {
        VerdictStatus::Equivalent { c_low: lo.exp(), c_high: hi.exp() }
    } else if decays_to_zero(&ln_q, spread) {
        VerdictStatus::UpperOnly { c_high: hi.exp() }
    } else {
        VerdictStatus::Fails
    };
    Ok(AsympVerdict { status, window, spread, ratio_profile })
}

/// Chunk maxima over eight log-spaced chunks must be nonincreasing, and the profile must
/// fall by more than the spread from its first chunk to its last.
fn decays_to_zero(ln_q: &[f64], spread: f64) -> bool {
    let n = ln_q.len();
    let chunks = 8.min(n);
    let mut bounds = vec![0usize];
    for k in 1..chunks {
        let b = ((n as f64).powf(k as f64 / chunks as f64)).round() as usize;
        let prev = *bounds.last().unwrap();
        bounds.push(b.clamp(prev + 1, n - (chunks - k)));
    }
    bounds.push(n);
    let maxima: Vec<f64> = bounds
        .windows(2)
        .map(|w| ln_q[w[0]..w[1]].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let first_min = ln_q[bounds[0]..bounds[1]].iter().copied().fold(f64::INFINITY, f64::min);
    let monotone = maxima.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let last = *maxima.last().unwrap();
    monotone && (last == f64::NEG_INFINITY || first_min - last > spread.ln())
}

/// Σ_n (t_n^β − δ)⁺ for t_n = (scale/ρ(n))^{±1}, summed exactly up to the cutoff where
/// terms vanish.
fn rho_cut_sum(rho: &RateFunction, scale: f64, beta: f64, delta: f64) -> Result<f64> {
    // terms (scale/ρ(n))^β − δ are positive iff ρ(n) < scale·δ^{−1/β}
    let ln_thresh = scale.ln() - delta.ln() / beta;
    if ln_thresh < rho.ln_value(1.0) {
        return Ok(0.0);
    }
    let n_max = rho.inverse_ln(ln_thresh)?.floor();
    if n_max > 1e8 {
        return Err(BslError::TailCertificate(format!(
            "rate sum needs {n_max:e} terms at delta = {delta:e}"
        )));
    }
    let mut s = 0.0;
    for n in 1..=(n_max as u64 + 1) {
        let t = ((scale.ln() - rho.ln_value(n as f64)) * beta).exp() - delta;
        if t > 0.0 {
            s += t;
        }
    }
    Ok(s)
}

/// Checks the convex sandwich
/// Σ h_{β,δ}(1/(Bρ(n))) ≤ Σ h_{β,δ}(a_n) ≤ Σ h_{β,δ}(B/ρ(n)) for every δ in the grid.
/// The ρ-sums are exact; the a-sum is certified by requiring a_L^β < δ for the last term.
pub fn lemma_a1_oracle(
    a: &[f64],
    rho: &RateFunction,
    b: f64,
    beta: f64,
    delta_grid: &[f64],
) -> Result<bool> {
    if !(beta > 0.0 && beta <= 1.0) || !(b > 0.0) {
        return invalid("need beta in (0, 1] and B > 0");
    }
    let last = *a.last().ok_or_else(|| BslError::InvalidParameter("empty sequence".into()))?;
    for &delta in delta_grid {
        if last.powf(beta) >= delta {
            return Err(BslError::TailCertificate(format!(
                "last term {last:e} still contributes at delta = {delta:e}"
            )));
        }
        let h = CutPowerFunction::new(beta, delta);
        let s_a: f64 = a.iter().map(|&t| h.eval(t)).sum();
        let s_lo = rho_cut_sum(rho, 1.0 / b, beta, delta)?;
        let s_hi = rho_cut_sum(rho, b, beta, delta)?;
        let slack = 1e-12;
        if s_lo > s_a * (1.0 + slack) + 1e-300 || s_a > s_hi * (1.0 + slack) + 1e-300 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The test function from the concave lemma: t below δ, δ^{1−p}t^p above.
pub fn concave_test_function(t: f64, delta: f64, p: f64) -> f64 {
    if t < delta {
        t
    } else {
        delta.powf(1.0 - p) * t.powf(p)
    }
}

/// Default δ grid for the concave lemma: 10^{-1} down to 10^{-8}, four points per decade.
pub fn default_delta_grid() -> Vec<f64> {
    (4..=32).map(|k| 10f64.powf(-(k as f64) / 4.0)).collect()
}

/// Checks (1/B) Σ h(1/ρ(n)) ≤ Σ h(a_n) ≤ B Σ h(1/ρ(n)) for the piecewise concave test
/// functions over the δ grid. Both sums run over the same finite section n ≤ len(a).
pub fn lemma_a2_oracle(a: &[f64], rho: &RateFunction, b: f64, p: f64) -> Result<bool> {
    lemma_a2_oracle_with(a, rho, b, p, &default_delta_grid())
}

pub fn lemma_a2_oracle_with(
    a: &[f64],
    rho: &RateFunction,
    b: f64,
    p: f64,
    delta_grid: &[f64],
) -> Result<bool> {
    let reg = rho.regularity();
    reg.gamma_lower.filter(|&g| g > 1.0).ok_or_else(|| {
        BslError::RegularityNotDeclared("need rho(t)/t^gamma increasing for some gamma > 1".into())
    })?;
    let beta = reg.a_upper.ok_or_else(|| {
        BslError::RegularityNotDeclared("need rho(t)/t^beta decreasing for some beta".into())
    })?;
    if !(p > 0.0 && p < 1.0 / beta) {
        return invalid(format!("p = {p} must lie in (0, 1/beta) with beta = {beta}"));
    }
    let inv_rho: Vec<f64> = (1..=a.len()).map(|n| (-rho.ln_value(n as f64)).exp()).collect();
    for &delta in delta_grid {
        let s_a: f64 = a.iter().map(|&t| concave_test_function(t, delta, p)).sum();
        let s_r: f64 = inv_rho.iter().map(|&t| concave_test_function(t, delta, p)).sum();
        let slack = 1.0 + 1e-12;
        if s_r / b > s_a * slack || s_a > b * s_r * slack {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Verifies Σ_{k≤n} a_k^{1/p} ≤ Σ_{k≤n} b_k^{1/p} on all prefixes and then
/// Σ_{k≤n} h(a_k) ≤ Σ_{k≤n} h(b_k) on all prefixes; returns the conjunction.
pub fn majorization_transfer(a: &[f64], b: &[f64], p: f64, h: &CutPowerFunction) -> Result<bool> {
    if !(p >= 1.0) {
        return invalid("p must be at least 1");
    }
    if h.beta * p < 1.0 - 1e-15 {
        return invalid(format!("h(t^p) is not convex for beta = {}, p = {p}", h.beta));
    }
    let n = a.len().min(b.len());
    let tol = 1e-12;
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..n {
        sa += a[k].powf(1.0 / p);
        sb += b[k].powf(1.0 / p);
        if sa > sb * (1.0 + tol) + 1e-300 {
            return Ok(false);
        }
    }
    let (mut ha, mut hb) = (0.0, 0.0);
    for k in 0..n {
        ha += h.eval(a[k]);
        hb += h.eval(b[k]);
        if ha > hb * (1.0 + tol) + tol * h.eval(a[0]).max(1e-300) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverses() {
        assert!((RateFunction::power(2.0).inverse(100.0).unwrap() - 10.0).abs() < 1e-12);
        let e3 = 3f64.exp();
        assert!((RateFunction::Exp { c: 1.0 }.inverse(e3).unwrap() - 3.0).abs() < 1e-12);
        let pl = RateFunction::PowerLog { a: 1.0, b: 1.0 };
        let y = 10.0 * (std::f64::consts::E + 10.0).ln();
        assert!((pl.inverse(y).unwrap() - 10.0).abs() < 1e-10);
        assert!(matches!(RateFunction::power(2.0).inverse(0.5), Err(BslError::BelowRange { .. })));
    }

    #[test]
    fn declared_regularity_holds() {
        for r in [
            RateFunction::power(2.0),
            RateFunction::PowerLog { a: 1.0, b: 2.0 },
            RateFunction::LogPower { b: 3.0 },
            RateFunction::Exp { c: 0.5 },
        ] {
            assert!(r.verify_regularity(), "{r:?}");
        }
        let bad = RateFunction::Tabulated {
            x: vec![1.0, 10.0, 100.0],
            y: vec![1.0, 100.0, 1000.0],
            a_upper: Some(1.5),
            gamma_lower: None,
        };
        assert!(!bad.verify_regularity());
    }

    #[test]
    fn verdict_examples() {
        let a: Vec<f64> = (1..=300).map(|n| 1.0 / (n as f64).powi(2)).collect();
        let v = verdict(&a, &RateFunction::power(2.0), Window::new(16, 256), 2.0).unwrap();
        match v.status {
            VerdictStatus::Equivalent { c_low, c_high } => {
                assert!((c_low - 1.0).abs() < 1e-12 && (c_high - 1.0).abs() < 1e-12)
            }
            s => panic!("{s:?}"),
        }
        let a3: Vec<f64> = (1..=300).map(|n| 1.0 / (n as f64).powi(3)).collect();
        let v = verdict(&a3, &RateFunction::power(2.0), Window::new(16, 256), 2.0).unwrap();
        assert!(matches!(v.status, VerdictStatus::UpperOnly { .. }));
        let bumpy: Vec<f64> =
            (1..=300).map(|n| if n % 2 == 0 { 1.0 } else { 1e-3 } / (n as f64).powi(2)).collect();
        let v = verdict(&bumpy, &RateFunction::power(2.0), Window::new(16, 256), 2.0).unwrap();
        assert_eq!(v.status, VerdictStatus::Fails);
        assert!(matches!(
            verdict(&a, &RateFunction::power(2.0), Window::new(16, 20), 2.0),
            Err(BslError::WindowTooShort { .. })
        ));
        assert!(verdict(&a, &RateFunction::power(2.0), Window::new(2, 100), 2.0).is_err());
    }

    #[test]
    fn verdict_is_scale_equivariant() {
        let a: Vec<f64> = (1..=100).map(|n| (1.0 + 0.3 * (n as f64).sin()) / n as f64).collect();
        let v1 = verdict(&a, &RateFunction::power(1.0), Window::new(16, 100), 4.0).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| 7.5 * x).collect();
        let v2 = verdict(&scaled, &RateFunction::power(1.0), Window::new(16, 100), 4.0).unwrap();
        match (v1.status, v2.status) {
            (VerdictStatus::Equivalent { c_low: l1, .. }, VerdictStatus::Equivalent { c_low: l2, .. }) => {
                assert!((l2 / l1 - 7.5).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma_a1_examples() {
        let a: Vec<f64> = (1..=20_000).map(|n| 1.0 / n as f64).collect();
        let grid = [0.1, 0.01, 0.001];
        assert!(lemma_a1_oracle(&a, &RateFunction::power(1.0), 1.0, 1.0, &grid).unwrap());
        let v = verdict(&a, &RateFunction::power(1.0), Window::new(16, 20_000), 1.0).unwrap();
        assert!(v.is_equivalent());
        let mut spiked = a.clone();
        spiked[0] = 1e6;
        assert!(!lemma_a1_oracle(&spiked, &RateFunction::power(1.0), 2.0, 1.0, &grid).unwrap());
        assert!(matches!(
            lemma_a1_oracle(&a, &RateFunction::power(1.0), 1.0, 1.0, &[1e-5]),
            Err(BslError::TailCertificate(_))
        ));
    }

    #[test]
    fn lemma_a2_examples() {
        let rho = RateFunction::power(2.0);
        let a: Vec<f64> = (1..=100_000).map(|n| 1.0 / (n as f64).powi(2)).collect();
        assert!(lemma_a2_oracle(&a, &rho, 1.0, 0.3).unwrap());
        let steep: Vec<f64> = (1..=100_000).map(|n| (n as f64).powf(-2.5)).collect();
        assert!(!lemma_a2_oracle(&steep, &rho, 1.0, 0.3).unwrap());
        // multiplicative noise in [1/2, 2], then sorted
        let mut noisy: Vec<f64> = (1..=100_000u64)
            .map(|n| {
                let u = ((n.wrapping_mul(2654435761) % 1000) as f64) / 999.0;
                2f64.powf(2.0 * u - 1.0) / (n as f64).powi(2)
            })
            .collect();
        noisy.sort_by(|x, y| y.total_cmp(x));
        assert!(lemma_a2_oracle(&noisy, &rho, 4.0, 0.3).unwrap());
        assert!(matches!(
            lemma_a2_oracle(&a, &RateFunction::power(0.5), 1.0, 0.3),
            Err(BslError::RegularityNotDeclared(_))
        ));
    }

    #[test]
    fn majorization_examples() {
        let h = CutPowerFunction::new(1.0, 0.6);
        assert!(majorization_transfer(&[1.0, 1.0], &[2.0, 0.5], 1.0, &h).unwrap());
        let a = [0.9, 0.5, 0.2];
        assert!(majorization_transfer(&a, &a, 2.0, &CutPowerFunction::new(0.5, 0.1)).unwrap());
        assert!(majorization_transfer(&a, &a, 1.0, &CutPowerFunction::new(0.5, 0.1)).is_err());
    }
}
