//! Composition operators C_φ f = f∘φ on H² and on the spaces H_α normed by
//! ‖f‖² = |f(0)|² + ∫|f'|² dA_α, dA_α = ((α+1)/π)(1−|z|²)^α dA.
//!
//! Two independent routes to the singular values are provided: direct Gram truncation in
//! the monomial basis, and the reduction to a Toeplitz operator on the Bergman space A²_α
//! whose measure has density N_{φ,α}/ω²_α (the pull-back of dA_α under φ).

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{hermitian_eigenvalues, CMatrix};
use crate::error::{invalid, BslError, Result};
use crate::lattice::TWO_PI;
use crate::measures::{AreaProfile, CellMassTable, MeasureSpec, RadialProfile};
use crate::quadrature::GaussLegendre;
use crate::spaces::WeightModel;
use crate::toeplitz::{toeplitz_spectrum, CutPowerFunction, SpectrumResult};

pub use crate::profile::{
    predict_dirichlet_rate, predict_singular_values, write_prediction_csv, BoundaryProfile, Prediction,
    PredictionBranch, ProfileHypotheses,
};

/// Radius at which boundary values of explicit symbols are sampled.
const BOUNDARY_RADIUS: f64 = 1.0 - 1e-8;

/// A holomorphic self-map of the disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// Σ c_k z^k, coefficients as [re, im] pairs.
    Polynomial { coefficients: Vec<Complex64> },
    /// The involution z ↦ (a − z)/(1 − āz).
    Automorphism { point: Complex64 },
    /// z ↦ tanh(p·atanh z), a univalent map onto a lens with vertices ±1.
    Lens { exponent: f64 },
    /// outer ∘ inner.
    Composed { outer: Box<SymbolSpec>, inner: Box<SymbolSpec> },
    /// A conformal map onto a domain with polar boundary 1 − r = γ(|θ|); only accessible
    /// through harmonic measure.
    UnivalentPolar { profile: BoundaryProfile, cap_angle: Option<f64> },
    /// Boundary values φ(e^{it}) at M equispaced points t_k = 2πk/M.
    BoundaryTrace { samples: Vec<Complex64> },
}

impl SymbolSpec {
    pub fn identity() -> Self {
        Self::dilation(Complex64::new(1.0, 0.0))
    }

    /// z ↦ c·z.
    pub fn dilation(c: Complex64) -> Self {
        Self::monomial(c, 1)
    }

    /// z ↦ c·z^degree.
    pub fn monomial(c: Complex64, degree: usize) -> Self {
        let mut coefficients = vec![Complex64::new(0.0, 0.0); degree + 1];
        coefficients[degree] = c;
        SymbolSpec::Polynomial { coefficients }
    }

    pub fn rotation(angle: f64) -> Self {
        Self::dilation(Complex64::from_polar(1.0, angle))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SymbolSpec::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return invalid("polynomial symbol needs finite coefficients");
                }
                // maximum modulus: the boundary bound controls the interior
                let m = 4096.max(8 * coefficients.len());
                for k in 0..m {
                    let v = self.eval(Complex64::from_polar(1.0, TWO_PI * k as f64 / m as f64))?;
                    if v.norm() > 1.0 + 1e-12 {
                        return invalid(format!("polynomial symbol leaves the disc: |phi| = {}", v.norm()));
                    }
                }
                Ok(())
            }
            SymbolSpec::Automorphism { point } => {
                if point.norm() < 1.0 {
                    Ok(())
                } else {
                    invalid("automorphism point must lie in the disc")
                }
            }
            SymbolSpec::Lens { exponent } => {
                if *exponent > 0.0 && *exponent <= 1.0 {
                    Ok(())
                } else {
                    invalid("lens exponent must lie in (0, 1]")
                }
            }
            SymbolSpec::Composed { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            SymbolSpec::UnivalentPolar { profile, cap_angle } => {
                profile.validate()?;
                match cap_angle {
                    Some(t) if !(*t > 0.0 && *t <= PI) => invalid("cap angle must lie in (0, pi]"),
                    _ => Ok(()),
                }
            }
            SymbolSpec::BoundaryTrace { samples } => {
                if samples.len() < 8 {
                    return invalid("boundary trace needs at least 8 samples");
                }
                if samples.iter().any(|s| !s.is_finite() || s.norm() > 1.0 + 1e-9) {
                    return invalid("boundary trace leaves the closed disc");
                }
                Ok(())
            }
        }
    }

    /// φ(z) for explicit symbols.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(match self {
            SymbolSpec::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
            }
            SymbolSpec::Automorphism { point } => (point - z) / (1.0 - point.conj() * z),
            SymbolSpec::Lens { exponent } => (z.atanh() * exponent).tanh(),
            SymbolSpec::Composed { outer, inner } => outer.eval(inner.eval(z)?)?,
            SymbolSpec::UnivalentPolar { .. } => {
                return Err(BslError::SymbolNotEvaluable("polar-profile symbols have no explicit formula".into()))
            }
            SymbolSpec::BoundaryTrace { .. } => return self.explicit()?.eval(z),
        })
    }

    /// φ'(z) for explicit symbols.
    pub fn derivative(&self, z: Complex64) -> Result<Complex64> {
        Ok(match self {
            SymbolSpec::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, (k, c)| acc * z + c * k as f64),
            SymbolSpec::Automorphism { point } => {
                let d = 1.0 - point.conj() * z;
                Complex64::new(point.norm_sqr() - 1.0, 0.0) / (d * d)
            }
            SymbolSpec::Lens { exponent } => {
                let v = (z.atanh() * exponent).tanh();
                (1.0 - v * v) * exponent / (1.0 - z * z)
            }
            SymbolSpec::Composed { outer, inner } => outer.derivative(inner.eval(z)?)? * inner.derivative(z)?,
            SymbolSpec::UnivalentPolar { .. } => {
                return Err(BslError::SymbolNotEvaluable("polar-profile symbols have no explicit formula".into()))
            }
            SymbolSpec::BoundaryTrace { .. } => return self.explicit()?.derivative(z),
        })
    }

    /// An evaluable form: boundary traces become their Taylor polynomial (nonnegative
    /// Fourier modes of the samples).
    pub fn explicit(&self) -> Result<SymbolSpec> {
        match self {
            SymbolSpec::BoundaryTrace { samples } => {
                let m = samples.len();
                let coefficients = (0..=m / 2)
                    .into_par_iter()
                    .map(|k| {
                        let step = Complex64::from_polar(1.0, -TWO_PI * k as f64 / m as f64);
                        let mut e = Complex64::new(1.0, 0.0);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (i, s) in samples.iter().enumerate() {
                            if i % 64 == 0 {
                                // refresh the twiddle to keep rounding from accumulating
                                e = Complex64::from_polar(1.0, -TWO_PI * (k * i % m) as f64 / m as f64);
                            }
                            acc += s * e;
                            e *= step;
                        }
                        acc / m as f64
                    })
                    .collect();
                Ok(SymbolSpec::Polynomial { coefficients })
            }
            SymbolSpec::UnivalentPolar { .. } => {
                Err(BslError::SymbolNotEvaluable("polar-profile symbols have no explicit formula".into()))
            }
            other => Ok(other.clone()),
        }
    }

    /// φ(0).
    pub fn value_at_origin(&self) -> Result<Complex64> {
        match self {
            SymbolSpec::BoundaryTrace { samples } => {
                Ok(samples.iter().sum::<Complex64>() / samples.len() as f64)
            }
            SymbolSpec::UnivalentPolar { .. } => Ok(Complex64::new(0.0, 0.0)),
            other => other.eval(Complex64::new(0.0, 0.0)),
        }
    }

    pub fn fixes_origin(&self) -> Result<bool> {
        Ok(self.value_at_origin()?.norm() <= 1e-14)
    }

    /// Known univalent symbols (used to short-circuit preimage searches).
    pub fn is_univalent(&self) -> bool {
        match self {
            SymbolSpec::Polynomial { coefficients } => {
                coefficients.len() >= 2
                    && coefficients[1].norm() > 0.0
                    && coefficients[2..].iter().all(|c| c.norm() == 0.0)
            }
            SymbolSpec::Automorphism { .. } | SymbolSpec::Lens { .. } | SymbolSpec::UnivalentPolar { .. } => true,
            SymbolSpec::Composed { outer, inner } => outer.is_univalent() && inner.is_univalent(),
            SymbolSpec::BoundaryTrace { .. } => false,
        }
    }

    /// φ⁻¹(w) for univalent explicit symbols; `None` when w ∉ φ(D).
    pub fn inverse(&self, w: Complex64) -> Option<Complex64> {
        let z = match self {
            SymbolSpec::Polynomial { coefficients } if self.is_univalent() => (w - coefficients[0]) / coefficients[1],
            SymbolSpec::Automorphism { point } => (point - w) / (1.0 - point.conj() * w),
            SymbolSpec::Lens { exponent } => {
                let s = w.atanh();
                if s.im.abs() >= exponent * PI / 4.0 {
                    return None;
                }
                (s / exponent).tanh()
            }
            SymbolSpec::Composed { outer, inner } => inner.inverse(outer.inverse(w)?)?,
            _ => return None,
        };
        (z.norm() < 1.0).then_some(z)
    }

    /// If φ(0) ≠ 0, composes with the automorphism moving φ(0) to 0 (which leaves the
    /// singular values unchanged up to constants) and returns a note.
    pub fn normalized(&self) -> Result<(SymbolSpec, Option<String>)> {
        let a = self.value_at_origin()?;
        if a.norm() <= 1e-14 {
            return Ok((self.clone(), None));
        }
        let note = format!(
            "phi(0) = {}{:+}i; composed with the disc automorphism moving it to 0 (s_n(C_phi) comparable to s_n(C_(sigma o phi)))",
            a.re, a.im
        );
        log::info!("{note}");
        let sigma = SymbolSpec::Automorphism { point: a };
        let out = match self {
            SymbolSpec::BoundaryTrace { samples } => SymbolSpec::BoundaryTrace {
                samples: samples.iter().map(|s| sigma.eval(*s)).collect::<Result<_>>()?,
            },
            other => SymbolSpec::Composed { outer: Box::new(sigma), inner: Box::new(other.clone()) },
        };
        Ok((out, Some(note)))
    }

    /// Boundary values at M equispaced midpoints t_k = 2π(k + 1/2)/M (or the stored samples).
    pub fn boundary_values(&self, m: usize) -> Result<Vec<Complex64>> {
        match self {
            SymbolSpec::BoundaryTrace { samples } => Ok(samples.clone()),
            _ => (0..m)
                .into_par_iter()
                .map(|k| self.eval(Complex64::from_polar(BOUNDARY_RADIUS, TWO_PI * (k as f64 + 0.5) / m as f64)))
                .collect(),
        }
    }

    fn polynomial_degree(&self) -> Option<usize> {
        match self {
            SymbolSpec::Polynomial { coefficients } => {
                Some(coefficients.iter().rposition(|c| c.norm() > 0.0).unwrap_or(0))
            }
            _ => None,
        }
    }
}

/// Target space for C_φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CompositionSpace {
    Hardy,
    Weighted { alpha: f64 },
}

/// ln ‖z^n‖² in H_α.
pub fn ln_monomial_norm_sq(n: usize, alpha: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * n.ln() + libm::lgamma(n) + libm::lgamma(alpha + 2.0) - libm::lgamma(n + alpha + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramResult {
    /// s_n = √λ_n(G), nonincreasing.
    pub singular_values: Vec<f64>,
    pub spectrum: SpectrumResult,
    pub note: Option<String>,
}

fn accumulate_gram(rows: &[(f64, Vec<Complex64>)], n: usize) -> CMatrix {
    rows.par_chunks(256)
        .map(|chunk| {
            let mut g = CMatrix::zeros(n, n);
            for (w, v) in chunk {
                for col in 0..n {
                    let vc = v[col] * *w;
                    for row in 0..n {
                        g[(row, col)] += v[row].conj() * vc;
                    }
                }
            }
            g
        })
        .reduce(|| CMatrix::zeros(n, n), |a, b| a + b)
}

fn gram_to_result(g: CMatrix, n: usize, note: Option<String>) -> Result<GramResult> {
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let vals = hermitian_eigenvalues(&g)?;
    let top = vals.first().copied().unwrap_or(0.0).abs();
    let clipped = vals.iter().filter(|v| **v < 0.0).map(|v| -v).fold(0.0, f64::max);
    if clipped > 1e-10 * top {
        return Err(BslError::AssemblyError { value: -clipped, threshold: 1e-10 * top });
    }
    let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
    Ok(GramResult {
        singular_values: vals.iter().map(|v| v.sqrt()).collect(),
        spectrum: SpectrumResult {
            eigenvalues: vals,
            ln_eigenvalues: None,
            truncation_dim: n,
            assembly_error_bound: 0.0,
            clipped,
        },
        note,
    })
}

/// Singular values of the N×N compression of C_φ, from G_{mn} = ⟨C_φ e_n, C_φ e_m⟩.
pub fn gram_singular_values(symbol: &SymbolSpec, space: CompositionSpace, n: usize) -> Result<GramResult> {
    if n == 0 {
        return invalid("dimension must be positive");
    }
    symbol.validate()?;
    if matches!(symbol, SymbolSpec::UnivalentPolar { .. }) {
        return Err(BslError::SymbolNotEvaluable("Gram assembly needs an explicit symbol or a boundary trace".into()));
    }
    match space {
        CompositionSpace::Hardy => {
            // trapezoid rule on the circle, exact for trigonometric polynomials of degree < M
            let m = match symbol {
                SymbolSpec::BoundaryTrace { samples } => {
                    if samples.len() <= 2 * n {
                        return Err(BslError::InsufficientSampling(format!(
                            "{} boundary samples for dimension {n}",
                            samples.len()
                        )));
                    }
                    samples.len()
                }
                _ => (16 * n * symbol.polynomial_degree().unwrap_or(64).max(1)).max(4096),
            };
            let values = match symbol {
                SymbolSpec::BoundaryTrace { samples } => samples.clone(),
                _ => (0..m)
                    .into_par_iter()
                    .map(|k| symbol.eval(Complex64::from_polar(1.0, TWO_PI * (k as f64 + 0.5) / m as f64)))
                    .collect::<Result<Vec<_>>>()?,
            };
            let rows: Vec<(f64, Vec<Complex64>)> = values
                .iter()
                .map(|v| {
                    let mut p = Vec::with_capacity(n);
                    let mut e = Complex64::new(1.0, 0.0);
                    for _ in 0..n {
                        p.push(e);
                        e *= v;
                    }
                    (1.0 / m as f64, p)
                })
                .collect();
            gram_to_result(accumulate_gram(&rows, n), n, None)
        }
        CompositionSpace::Weighted { alpha } => {
            if !(alpha > -1.0) {
                return invalid("alpha must exceed -1");
            }
            let (phi, note) = symbol.normalized()?;
            let phi = phi.explicit()?;
            let a0 = phi.value_at_origin()?;
            let inv_norm: Vec<f64> = (0..n).map(|k| (-0.5 * ln_monomial_norm_sq(k, alpha)).exp()).collect();
            // polar rule for dA_α: graded Gauss-Legendre panels in r, trapezoid in θ
            let gl = GaussLegendre::new(32);
            let mut panels = vec![0.0, 0.5];
            let mut gap: f64 = 0.5;
            while gap > 1e-6 {
                gap *= 0.5;
                panels.push(1.0 - gap);
            }
            panels.push(1.0);
            let deg = phi.polynomial_degree().unwrap_or(16).max(1);
            let k_ang = 4 * n * deg + 64;
            let radial: Vec<(f64, f64)> = panels.windows(2).flat_map(|w| gl.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
            let scale = (alpha + 1.0) / PI * TWO_PI / k_ang as f64;
            let rows: Vec<(f64, Vec<Complex64>)> = radial
                .par_iter()
                .flat_map_iter(|&(r, wr)| {
                    let phi = &phi;
                    let inv_norm = &inv_norm;
                    (0..k_ang).map(move |k| {
                        let z = Complex64::from_polar(r, TWO_PI * (k as f64 + 0.5) / k_ang as f64);
                        let w = wr * r * (1.0 - r * r).powf(alpha) * scale;
                        let f = phi.eval(z)?;
                        let d = phi.derivative(z)?;
                        // (φⁿ)' = nφ^{n−1}φ'
                        let mut v = vec![Complex64::new(0.0, 0.0); n];
                        let mut pw = Complex64::new(1.0, 0.0);
                        for j in 1..n {
                            v[j] = pw * d * j as f64 * inv_norm[j];
                            pw *= f;
                        }
                        Ok((w, v))
                    })
                })
                .collect::<Result<_>>()?;
            let mut g = accumulate_gram(&rows, n);
            // value-at-origin term φ(0)^n conj(φ(0))^m
            let mut p0: Vec<Complex64> = Vec::with_capacity(n);
            let mut e = Complex64::new(1.0, 0.0);
            for k in 0..n {
                p0.push(e * inv_norm[k]);
                e *= a0;
            }
            for col in 0..n {
                for row in 0..n {
                    g[(row, col)] += p0[row].conj() * p0[col];
                }
            }
            gram_to_result(g, n, note)
        }
    }
}

/// The measure with density N_{φ,α}/ω²_α, closed form for monomials.
pub fn pullback_measure(symbol: &SymbolSpec, alpha: f64) -> Result<MeasureSpec> {
    if let SymbolSpec::Polynomial { coefficients } = symbol {
        let deg = symbol.polynomial_degree().unwrap_or(0);
        let pure = deg >= 1 && coefficients[..deg].iter().all(|c| c.norm() == 0.0);
        if pure {
            let modulus = coefficients[deg].norm();
            let profile = if deg == 1 {
                if modulus >= 1.0 {
                    return Ok(MeasureSpec::lebesgue());
                }
                RadialProfile::DilationPullback { modulus, alpha }
            } else {
                RadialProfile::MonomialPullback { degree: deg as u32, modulus, alpha }
            };
            return Ok(MeasureSpec::Radial { profile });
        }
    }
    Ok(MeasureSpec::Area { profile: AreaProfile::Counting { symbol: symbol.clone(), alpha } })
}

/// Singular values of C_φ on H_α via λ_k(T_μ) on A²_α: s = {1} ∪ {√λ_k}, sorted.
pub fn toeplitz_reduction_singular_values(symbol: &SymbolSpec, alpha: f64, n: usize) -> Result<GramResult> {
    if n == 0 {
        return invalid("dimension must be positive");
    }
    let (phi, note) = symbol.normalized()?;
    let phi = phi.explicit()?;
    let model = WeightModel::bergman(alpha)?;
    let spec = toeplitz_spectrum(&model, &pullback_measure(&phi, alpha)?, n.saturating_sub(1).max(1))?;
    let mut s: Vec<f64> = std::iter::once(1.0).chain(spec.eigenvalues.iter().map(|l| l.sqrt())).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(n);
    Ok(GramResult { singular_values: s, spectrum: spec, note })
}

/// Weight attached to each preimage in a counting function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "kebab-case")]
pub enum CountingWeight {
    /// Every preimage counts 1.
    Unit,
    /// Preimages count ω²(z) of the given model.
    Space { model: WeightModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub value: f64,
    pub preimages: Vec<Complex64>,
    /// False when the multi-start search found fewer preimages than the argument principle
    /// predicts; `value` is then only a lower bound.
    pub complete: bool,
}

/// Number of zeros of φ − w in the disc, by the winding number of the boundary curve.
fn zero_count(phi: &SymbolSpec, w: Complex64) -> Result<Option<usize>> {
    let m = 8192;
    let mut total = 0.0;
    let mut prev = phi.eval(Complex64::new(1.0, 0.0))? - w;
    for k in 1..=m {
        let cur = phi.eval(Complex64::from_polar(1.0, TWO_PI * k as f64 / m as f64))? - w;
        if cur.norm() < 1e-9 {
            return Ok(None);
        }
        total += (cur / prev).arg();
        prev = cur;
    }
    Ok(Some((total / TWO_PI).round().max(0.0) as usize))
}

fn newton(phi: &SymbolSpec, w: Complex64, mut z: Complex64) -> Option<Complex64> {
    for _ in 0..80 {
        let f = phi.eval(z).ok()? - w;
        let d = phi.derivative(z).ok()?;
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let step = f / d;
        z -= step;
        if !z.is_finite() || z.norm() > 2.0 {
            return None;
        }
        if step.norm() < 1e-15 * z.norm().max(1e-3) {
            break;
        }
    }
    let resid = (phi.eval(z).ok()? - w).norm();
    (z.norm() < 1.0 && resid < 1e-11).then_some(z)
}

/// N(w) = Σ_{φ(z)=w} weight(z).
pub fn counting_function(symbol: &SymbolSpec, weight: &CountingWeight, w: Complex64, depth: u32) -> Result<CountingResult> {
    if w.norm() >= 1.0 {
        return Err(BslError::PointOutsideDomain { re: w.re, im: w.im });
    }
    let phi = symbol.explicit()?;
    let wt = |z: Complex64| -> Result<f64> {
        match weight {
            CountingWeight::Unit => Ok(1.0),
            CountingWeight::Space { model } => model.weight_density(z),
        }
    };
    if phi.is_univalent() {
        return Ok(match phi.inverse(w) {
            Some(z) => CountingResult { value: wt(z)?, preimages: vec![z], complete: true },
            None => CountingResult { value: 0.0, preimages: vec![], complete: true },
        });
    }
    let expected = zero_count(&phi, w)?;
    let mut found: Vec<Complex64> = Vec::new();
    let mut level = depth.min(10);
    loop {
        let rings = 2usize.pow(level) + 1;
        let spokes = 4 * 2usize.pow(level);
        let starts: Vec<Complex64> = (0..rings)
            .flat_map(|i| {
                let r = 0.98 * (i as f64 + 0.5) / rings as f64;
                (0..spokes).map(move |k| Complex64::from_polar(r, TWO_PI * (k as f64 + 0.25 * i as f64) / spokes as f64))
            })
            .collect();
        let roots: Vec<Option<Complex64>> = starts.par_iter().map(|&z0| newton(&phi, w, z0)).collect();
        for z in roots.into_iter().flatten() {
            if found.iter().all(|f| (f - z).norm() > 1e-8) {
                found.push(z);
            }
        }
        match expected {
            Some(e) if found.len() < e && level < depth.min(10) + 3 => level += 1,
            _ => break,
        }
    }
    found.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let value = found.iter().map(|&z| wt(z)).sum::<Result<f64>>()?;
    let complete = expected.is_some_and(|e| found.len() >= e);
    if !complete {
        log::warn!("counting function at {w}: preimage search incomplete, value is a lower bound");
    }
    Ok(CountingResult { value, preimages: found, complete })
}

/// Density of the pull-back measure N_{φ,α}(w)/ω²_α(w) with respect to dA.
pub fn pullback_density(symbol: &SymbolSpec, alpha: f64, w: Complex64) -> Result<f64> {
    let model = WeightModel::bergman(alpha)?;
    let n = counting_function(symbol, &CountingWeight::Space { model }, w, 2)?;
    Ok(n.value / model.weight_density(w)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PullbackMethod {
    BoundarySampling,
    WalkOnSpheres,
}

impl PullbackMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PullbackMethod::BoundarySampling => "boundary-sampling",
            PullbackMethod::WalkOnSpheres => "walk-on-spheres",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullbackEntry {
    pub level: u32,
    pub index: u64,
    pub mass: f64,
    pub stderr: f64,
}

/// Masses m_φ(W_{n,j}) of Carleson boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackTable {
    pub entries: Vec<PullbackEntry>,
    pub method: PullbackMethod,
}

impl PullbackTable {
    pub fn level(&self, n: u32) -> impl Iterator<Item = &PullbackEntry> {
        self.entries.iter().filter(move |e| e.level == n)
    }

    pub fn max_level(&self) -> u32 {
        self.entries.iter().map(|e| e.level).max().unwrap_or(0)
    }

    /// Normalised box masses 2ⁿ·m(W_{n,j}) sorted nonincreasingly.
    pub fn rearranged(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().map(|e| e.mass * (e.level as f64).exp2()).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["n", "j", "mass", "stderr", "method"])?;
        for e in &self.entries {
            w.write_record([
                e.level.to_string(),
                e.index.to_string(),
                format!("{:e}", e.mass),
                format!("{:e}", e.stderr),
                self.method.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Box index (level n) of a point, or `None` when it is not within 2^{−n} of the circle.
pub fn box_of(v: Complex64, n: u32) -> Option<u64> {
    let r = v.norm();
    if r > 1.0 + 1e-9 || 1.0 - r > 0.5f64.powi(n as i32) {
        return None;
    }
    let count = 1u64 << n;
    let t = v.arg().rem_euclid(TWO_PI);
    Some(((t / TWO_PI * count as f64).floor() as u64).min(count - 1))
}

fn boundary_samples_for(symbol: &SymbolSpec, max_level: u32) -> Result<Vec<Complex64>> {
    symbol.validate()?;
    let needed = 1usize << (max_level + 4);
    match symbol {
        SymbolSpec::BoundaryTrace { samples } if samples.len() < needed => Err(BslError::InsufficientSampling(
            format!("{} samples, level {max_level} needs at least {needed}", samples.len()),
        )),
        SymbolSpec::UnivalentPolar { .. } => Err(BslError::SymbolNotEvaluable(
            "polar-profile symbols are sampled through harmonic measure".into(),
        )),
        _ => symbol.boundary_values(needed.max(1 << 12) * 4),
    }
}

fn masses_from_samples(values: &[Complex64], levels: std::ops::RangeInclusive<u32>) -> Vec<PullbackEntry> {
    let m = values.len() as f64;
    let mut out = Vec::new();
    for n in levels {
        let mut counts = vec![0u64; 1 << n];
        for v in values {
            if let Some(j) = box_of(*v, n) {
                counts[j as usize] += 1;
            }
        }
        out.extend(counts.into_iter().enumerate().map(|(j, c)| {
            let p = c as f64 / m;
            PullbackEntry { level: n, index: j as u64, mass: p, stderr: (p * (1.0 - p) / m).sqrt() }
        }));
    }
    out
}

/// m_φ(W_{n,j}) = |{ζ ∈ T : φ(ζ) ∈ W_{n,j}}| (normalised arc length) at one level.
pub fn pullback_boundary(symbol: &SymbolSpec, level: u32) -> Result<PullbackTable> {
    pullback_boundary_levels(symbol, level, level)
}

/// Box masses for all levels in [first, last] from a single boundary sample.
pub fn pullback_boundary_levels(symbol: &SymbolSpec, first: u32, last: u32) -> Result<PullbackTable> {
    if first > last || last > 24 {
        return invalid("levels must satisfy first <= last <= 24");
    }
    let values = boundary_samples_for(symbol, last)?;
    Ok(PullbackTable { entries: masses_from_samples(&values, first..=last), method: PullbackMethod::BoundarySampling })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCellComparison {
    pub box_sum: f64,
    pub cell_sum: f64,
    pub ratio: f64,
    /// Share of the box sum coming from the deepest level.
    pub tail_fraction: f64,
}

/// Σ_{n,j} h((2ⁿ m(W_{n,j}))^α) next to Σ_R h(μ(R)/A(R)), without the truncation check.
pub fn box_cell_sums(boxes: &PullbackTable, cells: &CellMassTable, h: &CutPowerFunction, alpha: f64) -> BoxCellComparison {
    let deepest = boxes.max_level();
    let mut box_sum = 0.0;
    let mut tail = 0.0;
    for e in &boxes.entries {
        let v = h.eval((2f64.powi(e.level as i32) * e.mass).powf(alpha));
        box_sum += v;
        if e.level == deepest {
            tail += v;
        }
    }
    let cell_sum: f64 = cells.entries.iter().map(|e| h.eval(e.average)).sum();
    BoxCellComparison {
        box_sum,
        cell_sum,
        ratio: if cell_sum > 0.0 { box_sum / cell_sum } else if box_sum == 0.0 { 1.0 } else { f64::INFINITY },
        tail_fraction: if box_sum > 0.0 { tail / box_sum } else { 0.0 },
    }
}

/// As [`box_cell_sums`], failing when the deepest level carries 10% or more of the box sum.
pub fn box_cell_sum_compare(
    boxes: &PullbackTable,
    cells: &CellMassTable,
    h: &CutPowerFunction,
    alpha: f64,
) -> Result<BoxCellComparison> {
    let c = box_cell_sums(boxes, cells, h, alpha);
    if c.tail_fraction >= 0.1 {
        return Err(BslError::TruncationInsufficient(format!(
            "deepest level carries {:.1}% of the box sum",
            100.0 * c.tail_fraction
        )));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlqrReport {
    /// sup of the unit-weight counting function over a grid in W(ζ, δ).
    pub sup_n: f64,
    /// True when some preimage search was incomplete, making `sup_n` a lower bound.
    pub sup_is_lower_bound: bool,
    /// m_φ(W(ζ, δ/4)).
    pub m_small: f64,
    /// m_φ(W(ζ, 4δ)).
    pub m_big: f64,
}

/// Inflation and deflation factor for the boxes around ζ.
pub const LLQR_INFLATION: f64 = 4.0;

/// W(ζ, δ) = {w : 1 − δ ≤ |w| ≤ 1, |arg(w/ζ)| ≤ πδ}.
fn in_box(v: Complex64, zeta: f64, delta: f64) -> bool {
    let r = v.norm();
    if r > 1.0 + 1e-9 || 1.0 - r > delta {
        return false;
    }
    let d = (v.arg() - zeta + PI).rem_euclid(TWO_PI) - PI;
    d.abs() <= PI * delta
}

/// Sup of the counting function on the box at ζ = e^{iθ} and pull-back masses of the
/// deflated and inflated boxes.
pub fn llqr_check(symbol: &SymbolSpec, zeta_angle: f64, delta: f64) -> Result<LlqrReport> {
    symbol.validate()?;
    let a = symbol.value_at_origin()?;
    if !(delta > 0.0 && delta < (1.0 - a.norm()) / 16.0) {
        return invalid("delta must lie in (0, (1 - |phi(0)|)/16)");
    }
    let mut sup_n: f64 = 0.0;
    let mut lower = false;
    let grid = 16;
    for i in 0..grid {
        let r = 1.0 - delta * 64f64.powf(-(i as f64) / (grid - 1) as f64);
        for k in 0..grid {
            let t = zeta_angle + PI * delta * (2.0 * (k as f64 + 0.5) / grid as f64 - 1.0);
            let c = counting_function(symbol, &CountingWeight::Unit, Complex64::from_polar(r, t), 3)?;
            sup_n = sup_n.max(c.value);
            lower |= !c.complete;
        }
    }
    let values = symbol.boundary_values(1 << 16)?;
    let m = values.len() as f64;
    let mass = |d: f64| values.iter().filter(|v| in_box(**v, zeta_angle, d)).count() as f64 / m;
    Ok(LlqrReport {
        sup_n,
        sup_is_lower_bound: lower,
        m_small: mass(delta / LLQR_INFLATION),
        m_big: mass(delta * LLQR_INFLATION),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_cells, LatticeParams};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn hardy_gram_for_dilation() {
        let g = gram_singular_values(&SymbolSpec::dilation(c(0.7)), CompositionSpace::Hardy, 64).unwrap();
        for (k, s) in g.singular_values.iter().enumerate() {
            let exact = 0.7f64.powi(k as i32);
            assert!((s - exact).abs() <= 1e-8 * exact, "k={k}: {s} vs {exact}");
        }
    }

    #[test]
    fn identity_and_square_are_isometric_on_hardy() {
        for phi in [SymbolSpec::identity(), SymbolSpec::monomial(c(1.0), 2)] {
            let g = gram_singular_values(&phi, CompositionSpace::Hardy, 32).unwrap();
            assert!(g.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn weighted_norms() {
        // α = 1: ‖zⁿ‖² = 2n/(n+1)
        for n in 1..20 {
            let v = ln_monomial_norm_sq(n, 1.0).exp();
            assert!((v - 2.0 * n as f64 / (n as f64 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_gram_and_reduction_agree() {
        let phi = SymbolSpec::dilation(c(0.7));
        let g = gram_singular_values(&phi, CompositionSpace::Weighted { alpha: 1.0 }, 24).unwrap();
        let t = toeplitz_reduction_singular_values(&phi, 1.0, 24).unwrap();
        for k in 0..24 {
            let exact = 0.7f64.powi(k as i32);
            assert!((g.singular_values[k] - exact).abs() < 1e-9 * exact, "gram k={k}");
            let (a, b) = (g.singular_values[k].powi(2), t.singular_values[k].powi(2));
            assert!((a - b).abs() < 1e-6 * a, "k={k}: {a} vs {b}");
        }
        let h = gram_singular_values(&phi, CompositionSpace::Hardy, 24).unwrap();
        for k in 0..24 {
            let r = g.singular_values[k] / h.singular_values[k];
            assert!((0.5..=2.0).contains(&r));
        }
    }

    #[test]
    fn non_fixing_symbol_is_normalised() {
        let phi = SymbolSpec::Polynomial { coefficients: vec![c(0.2), c(0.5)] };
        let g = gram_singular_values(&phi, CompositionSpace::Weighted { alpha: 1.0 }, 8).unwrap();
        assert!(g.note.is_some());
        assert!((g.singular_values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn counting_function_examples() {
        let sq = SymbolSpec::monomial(c(1.0), 2);
        let w = c(0.25);
        let unit = counting_function(&sq, &CountingWeight::Unit, w, 2).unwrap();
        assert!(unit.complete);
        assert_eq!(unit.value, 2.0);
        let model = WeightModel::bergman(0.0).unwrap();
        let b = counting_function(&sq, &CountingWeight::Space { model }, w, 2).unwrap();
        assert!((b.value - 2.0 / PI).abs() < 1e-12);
        let lens = SymbolSpec::Lens { exponent: 0.5 };
        let out = counting_function(&lens, &CountingWeight::Unit, Complex64::new(0.0, 0.9), 2).unwrap();
        assert_eq!(out.value, 0.0);
        let inside = counting_function(&lens, &CountingWeight::Unit, c(0.9), 2).unwrap();
        assert_eq!(inside.value, 1.0);
        assert!((lens.eval(inside.preimages[0]).unwrap() - c(0.9)).norm() < 1e-12);
    }

    #[test]
    fn pullback_density_matches_closed_form() {
        let sq = SymbolSpec::Polynomial { coefficients: vec![c(0.0), c(0.0), c(0.8)] };
        let closed = RadialProfile::MonomialPullback { degree: 2, modulus: 0.8, alpha: 1.0 };
        for r in [0.1, 0.4, 0.7] {
            let z = Complex64::from_polar(r, 0.3);
            let d = pullback_density(&sq, 1.0, z).unwrap();
            assert!((d - closed.density(r)).abs() < 1e-10 * d, "r={r}");
        }
    }

    #[test]
    fn boundary_pullback_examples() {
        for n in [1, 3, 5] {
            for phi in [SymbolSpec::identity(), SymbolSpec::monomial(c(1.0), 2)] {
                let t = pullback_boundary(&phi, n).unwrap();
                assert_eq!(t.entries.len(), 1 << n);
                assert!(t.entries.iter().all(|e| (e.mass - 0.5f64.powi(n as i32)).abs() < 1e-12));
            }
        }
        let id = pullback_boundary(&SymbolSpec::identity(), 3).unwrap();
        let rot = pullback_boundary(&SymbolSpec::rotation(TWO_PI / 8.0 * 2.0 + 1e-3), 3).unwrap();
        for j in 0..8 {
            assert_eq!(id.entries[j].mass, rot.entries[(j + 2) % 8].mass);
        }
        let coarse = SymbolSpec::BoundaryTrace { samples: vec![c(1.0); 32] };
        assert!(matches!(pullback_boundary(&coarse, 3), Err(BslError::InsufficientSampling(_))));
    }

    #[test]
    fn trace_symbol_reproduces_explicit() {
        let phi = SymbolSpec::Polynomial { coefficients: vec![c(0.0), c(0.5), c(0.25)] };
        let m = 256;
        let samples = (0..m).map(|k| phi.eval(Complex64::from_polar(1.0, TWO_PI * k as f64 / m as f64)).unwrap()).collect();
        let tr = SymbolSpec::BoundaryTrace { samples };
        let z = Complex64::new(0.3, -0.2);
        assert!((tr.eval(z).unwrap() - phi.eval(z).unwrap()).norm() < 1e-12);
        let a = gram_singular_values(&tr, CompositionSpace::Hardy, 16).unwrap();
        let b = gram_singular_values(&phi, CompositionSpace::Hardy, 16).unwrap();
        for k in 0..16 {
            assert!((a.singular_values[k] - b.singular_values[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn box_cell_examples() {
        let boxes = pullback_boundary_levels(&SymbolSpec::identity(), 1, 4).unwrap();
        let cells = CellMassTable::compute(&MeasureSpec::lebesgue(), &enumerate_cells(&LatticeParams::dyadic(4)).unwrap()).unwrap();
        let s = box_cell_sums(&boxes, &cells, &CutPowerFunction::identity(), 1.0);
        assert!((s.box_sum - 30.0).abs() < 1e-9);
        assert!((s.cell_sum - cells.entries.len() as f64).abs() < 1e-9);
        assert!(box_cell_sum_compare(&boxes, &cells, &CutPowerFunction::identity(), 1.0).is_err());
        let cut = CutPowerFunction::new(1.0, 10.0);
        let z = box_cell_sum_compare(&boxes, &cells, &cut, 1.0).unwrap();
        assert_eq!((z.box_sum, z.cell_sum), (0.0, 0.0));
    }

    #[test]
    fn llqr_examples() {
        let id = llqr_check(&SymbolSpec::identity(), 0.0, 0.05).unwrap();
        assert_eq!(id.sup_n, 1.0);
        assert!((id.m_small - 0.05 / 4.0).abs() < 1e-3 && (id.m_big - 0.2).abs() < 1e-3);
        let sq = llqr_check(&SymbolSpec::monomial(c(1.0), 2), 0.0, 0.05).unwrap();
        assert_eq!(sq.sup_n, 2.0);
        assert!((sq.m_big - 0.2).abs() < 1e-3);
    }
}
