//! Truncated Toeplitz matrices T_μ in the orthonormal monomial basis, their spectra,
//! trace functionals, and numerical checks of the two-sided trace estimates.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{hermitian_eigenvalues, CMatrix};
use crate::error::{invalid, BslError, Result};
use crate::lattice::{enumerate_cells, Cell, LatticeParams, Shape, TWO_PI};
use crate::measures::{rearrangement, CellMassTable, Component, MeasureSpec, RadialProfile};
use crate::quadrature::{ln_integrate, GaussLegendre, Tolerance};
use crate::spaces::WeightModel;

/// Default cap on the truncation dimension.
pub const DEFAULT_DIM_CAP: usize = 2048;

/// h_{β,δ}(t) = (t^β − δ)⁺.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPowerFunction {
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
}

impl CutPowerFunction {
    pub fn new(beta: f64, delta: f64) -> Self {
        CutPowerFunction { beta, delta }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (t.powf(self.beta) - self.delta).max(0.0)
    }

    pub fn is_convex(&self) -> bool {
        self.beta >= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta > 0.0 && self.delta >= 0.0 {
            Ok(())
        } else {
            invalid("cut-power function needs beta > 0 and delta >= 0")
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToeplitzMatrix {
    pub model: WeightModel,
    pub dimension: usize,
    pub entries: CMatrix,
    pub assembly_error_bound: f64,
    /// ln M_nn when the matrix is exactly diagonal (radial measures).
    pub ln_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// ln λ_n, available for diagonal matrices so that underflowing values keep their size.
    pub ln_eigenvalues: Option<Vec<f64>>,
    pub truncation_dim: usize,
    pub assembly_error_bound: f64,
    /// Magnitude of the most negative eigenvalue clipped to zero.
    pub clipped: f64,
}

/// Domain shape used for components without explicit support.
fn domain_shape(model: &WeightModel, n: usize) -> Shape {
    let r = if model.is_bergman() {
        1.0
    } else {
        let a = model.alpha();
        model.fock_truncation_radius().max((n as f64 / a).sqrt() + 10.0 / a.sqrt())
    };
    Shape::Polar { r0: 0.0, r1: r, t0: 0.0, t1: TWO_PI }
}

fn radial_breaks(r0: f64, r1: f64, model: &WeightModel, power: f64) -> Vec<f64> {
    let mut pts = vec![r0, r1];
    if model.is_bergman() {
        let mut h = 1.0 / (power + 1.0);
        while h < 1.0 {
            pts.push(1.0 - h);
            h *= 4.0;
        }
    } else {
        let peak = (power / (2.0 * model.alpha())).sqrt();
        let w = 1.0 / model.alpha().sqrt();
        for k in -8..=8 {
            pts.push(peak + k as f64 * w);
        }
    }
    pts.retain(|&x| x >= r0 && x <= r1);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// ln ∫_{r0}^{r1} r^{k+1} ω²(r) g(r) dr.
fn ln_weighted_moment(
    model: &WeightModel,
    profile: &RadialProfile,
    r0: f64,
    r1: f64,
    k: usize,
) -> Result<(f64, f64)> {
    let r1 = profile.support_radius().map_or(r1, |s| r1.min(s));
    if r1 <= r0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let p = k as f64 + 1.0;
    let f = |r: f64| {
        if r <= 0.0 {
            return if p == 0.0 { model.ln_weight_radial(0.0) + profile.ln_density(0.0) } else { f64::NEG_INFINITY };
        }
        p * r.ln() + model.ln_weight_radial(r) + profile.ln_density(r)
    };
    ln_integrate(f, &radial_breaks(r0, r1, model, p), Tolerance::new(1e-12, 0.0))
}

fn ln_coeffs(model: &WeightModel, n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 * model.ln_basis_coeff_sq(k)).collect()
}

/// Quadrature rule over a polar shape: radial nodes (r, w·r) and angular nodes (θ, w).
fn polar_rule(model: &WeightModel, r0: f64, r1: f64, t0: f64, t1: f64, n: usize, refine: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let gl = GaussLegendre::new(24);
    let mut panels = vec![r0];
    if model.is_bergman() && r1 >= 1.0 {
        let mut gap = 1.0 - r0;
        while gap > 1e-13 {
            gap *= 0.5;
            panels.push(1.0 - gap);
        }
        panels.push(1.0);
    } else {
        let m = 8 + (n / 16);
        for k in 1..=m {
            panels.push(r0 + (r1 - r0) * k as f64 / m as f64);
        }
    }
    let mut fine = Vec::new();
    for w in panels.windows(2) {
        for s in 0..refine {
            let a = w[0] + (w[1] - w[0]) * s as f64 / refine as f64;
            let b = w[0] + (w[1] - w[0]) * (s + 1) as f64 / refine as f64;
            fine.extend(gl.mapped(a, b).map(|(r, wr)| (r, wr * r)));
        }
    }
    let len = t1 - t0;
    let mut ang = Vec::new();
    if len >= TWO_PI {
        let k = (2 * n + 64) * refine;
        for i in 0..k {
            ang.push((t0 + TWO_PI * i as f64 / k as f64, TWO_PI / k as f64));
        }
    } else {
        let count = (((n as f64) * len / PI) as usize / 16 + 2) * refine;
        for s in 0..count {
            let a = t0 + len * s as f64 / count as f64;
            let b = t0 + len * (s + 1) as f64 / count as f64;
            ang.extend(gl.mapped(a, b));
        }
    }
    (fine, ang)
}

fn add_polar_density(
    m: &mut CMatrix,
    model: &WeightModel,
    comp: &Component,
    shape: &Shape,
    n: usize,
    refine: usize,
) -> f64 {
    let Shape::Polar { r0, r1, t0, t1 } = *shape else { unreachable!() };
    let (radial, ang) = polar_rule(model, r0, r1, t0, t1, n, refine);
    let lc = ln_coeffs(model, n);
    // angular Fourier sums F_d(r) = Σ w_θ f(r e^{iθ}) e^{idθ}, d = 0..n−1 (negative d by conjugation)
    let contributions: Vec<(CMatrix, f64)> = radial
        .par_chunks(32)
        .map(|chunk| {
            let mut local = CMatrix::zeros(n, n);
            let mut trace = 0.0;
            let mut fd = vec![Complex64::new(0.0, 0.0); n];
            for &(r, wr) in chunk {
                let lw = model.ln_weight_radial(r);
                if !lw.is_finite() || r <= 0.0 {
                    continue;
                }
                fd.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for &(t, wt) in &ang {
                    let f = comp.density(Complex64::from_polar(r, t));
                    if f == 0.0 {
                        continue;
                    }
                    let step = Complex64::from_polar(1.0, t);
                    let mut e = Complex64::new(wt * f, 0.0);
                    for v in fd.iter_mut() {
                        *v += e;
                        e *= step;
                    }
                }
                let lr = r.ln();
                let amp: Vec<f64> = (0..n).map(|k| (lc[k] + k as f64 * lr + 0.5 * lw).exp()).collect();
                for col in 0..n {
                    for row in 0..n {
                        // M_{row,col} = c_row c_col ∫ r^{row+col} e^{i(col−row)θ} …
                        let d = col as isize - row as isize;
                        let f = if d >= 0 { fd[d as usize] } else { fd[(-d) as usize].conj() };
                        local[(row, col)] += f * (wr * amp[row] * amp[col]);
                    }
                    trace += wr * amp[col] * amp[col] * fd[0].re;
                }
            }
            (local, trace)
        })
        .collect();
    let mut trace = 0.0;
    for (c, t) in contributions {
        *m += c;
        trace += t;
    }
    trace
}

fn add_rect_density(m: &mut CMatrix, model: &WeightModel, comp: &Component, shape: &Shape, n: usize, refine: usize) -> f64 {
    let Shape::Rect { x0, x1, y0, y1 } = *shape else { unreachable!() };
    let gl = GaussLegendre::new(16);
    let panels = 4 * refine;
    let nodes = |a: f64, b: f64| -> Vec<(f64, f64)> {
        (0..panels)
            .flat_map(|s| {
                let pa = a + (b - a) * s as f64 / panels as f64;
                let pb = a + (b - a) * (s + 1) as f64 / panels as f64;
                gl.mapped(pa, pb).collect::<Vec<_>>()
            })
            .collect()
    };
    let (xs, ys) = (nodes(x0, x1), nodes(y0, y1));
    let lc = ln_coeffs(model, n);
    let mut trace = 0.0;
    for &(x, wx) in &xs {
        for &(y, wy) in &ys {
            let z = Complex64::new(x, y);
            let f = comp.density(z);
            if f == 0.0 {
                continue;
            }
            let w = wx * wy * f * model.ln_weight_radial(z.norm()).exp();
            let (lr, th) = (z.norm().ln(), z.arg());
            let v: Vec<Complex64> = (0..n)
                .map(|k| Complex64::from_polar((lc[k] + k as f64 * lr).exp(), k as f64 * th))
                .collect();
            for col in 0..n {
                for row in 0..n {
                    m[(row, col)] += v[col] * v[row].conj() * w;
                }
                trace += w * v[col].norm_sqr();
            }
        }
    }
    trace
}

/// Assembles the N×N matrix M_{mn} = ∫ e_n conj(e_m) ω² dμ.
pub fn assemble(model: &WeightModel, mu: &MeasureSpec, n: usize) -> Result<ToeplitzMatrix> {
    assemble_with_cap(model, mu, n, DEFAULT_DIM_CAP)
}

pub fn assemble_with_cap(model: &WeightModel, mu: &MeasureSpec, n: usize, cap: usize) -> Result<ToeplitzMatrix> {
    if n == 0 {
        return invalid("dimension must be positive");
    }
    if n > cap {
        return Err(BslError::Capacity { requested: n as u64, cap: cap as u64 });
    }
    mu.validate()?;
    let domain = domain_shape(model, n);
    let mut comps = Vec::new();
    for c in mu.components()? {
        comps.extend(c.restricted(&domain).or_else(|_| Ok::<_, BslError>(vec![c.clone()]))?);
    }
    let mut m = CMatrix::zeros(n, n);
    let mut err = 0.0;
    let lc = ln_coeffs(model, n);
    let mut diag_logs: Option<Vec<f64>> = Some(vec![f64::NEG_INFINITY; n]);
    for comp in &comps {
        match comp {
            Component::Atoms(atoms) => {
                diag_logs = None;
                for a in atoms {
                    model.check_point(a.point)?;
                    let w = a.mass * model.ln_weight_radial(a.point.norm()).exp();
                    let (lr, th) = (a.point.norm().ln(), a.point.arg());
                    let v: Vec<Complex64> = (0..n)
                        .map(|k| {
                            if a.point.norm() == 0.0 {
                                Complex64::new(if k == 0 { lc[0].exp() } else { 0.0 }, 0.0)
                            } else {
                                Complex64::from_polar((lc[k] + k as f64 * lr).exp(), k as f64 * th)
                            }
                        })
                        .collect();
                    for col in 0..n {
                        for row in 0..n {
                            m[(row, col)] += v[col] * v[row].conj() * w;
                        }
                    }
                }
            }
            Component::Radial { profile, shape: Some(Shape::Polar { r0, r1, t0, t1 }) } => {
                let full = t1 - t0 >= TWO_PI;
                if full {
                    let moments: Vec<(f64, f64)> = (0..n)
                        .into_par_iter()
                        .map(|k| ln_weighted_moment(model, profile, *r0, *r1, 2 * k))
                        .collect::<Result<_>>()?;
                    for k in 0..n {
                        let ln_v = 2.0 * lc[k] + TWO_PI.ln() + moments[k].0;
                        let v = ln_v.exp();
                        m[(k, k)] += v;
                        err += v * moments[k].1;
                        if let Some(d) = diag_logs.as_mut() {
                            let top = d[k].max(ln_v);
                            if top.is_finite() {
                                d[k] = top + ((d[k] - top).exp() + (ln_v - top).exp()).ln();
                            }
                        }
                    }
                } else {
                    diag_logs = None;
                    let moments: Vec<(f64, f64)> = (0..(2 * n - 1))
                        .into_par_iter()
                        .map(|k| ln_weighted_moment(model, profile, *r0, *r1, k))
                        .collect::<Result<_>>()?;
                    for col in 0..n {
                        for row in 0..n {
                            let d = col as f64 - row as f64;
                            let ang = if d == 0.0 {
                                Complex64::new(t1 - t0, 0.0)
                            } else {
                                (Complex64::from_polar(1.0, d * t1) - Complex64::from_polar(1.0, d * t0))
                                    / Complex64::new(0.0, d)
                            };
                            let (lm, e) = moments[row + col];
                            let amp = (lc[row] + lc[col] + lm).exp();
                            m[(row, col)] += ang * amp;
                            err += amp * e * (t1 - t0);
                        }
                    }
                }
            }
            Component::Radial { shape: Some(s), .. } | Component::Area { shape: Some(s), .. } => {
                diag_logs = None;
                let t1 = match s {
                    Shape::Polar { .. } => add_polar_density(&mut m, model, comp, s, n, 1),
                    Shape::Rect { .. } => add_rect_density(&mut m, model, comp, s, n, 1),
                };
                let mut scratch = CMatrix::zeros(n, n);
                let t2 = match s {
                    Shape::Polar { .. } => add_polar_density(&mut scratch, model, comp, s, n, 2),
                    Shape::Rect { .. } => add_rect_density(&mut scratch, model, comp, s, n, 2),
                };
                err += (t1 - t2).abs();
            }
            Component::Radial { shape: None, .. } | Component::Area { shape: None, .. } => {
                return invalid("component without support after restriction to the domain");
            }
        }
    }
    // enforce exact Hermitian symmetry
    let mt = m.adjoint();
    let entries = (m + mt) * Complex64::new(0.5, 0.0);
    Ok(ToeplitzMatrix { model: *model, dimension: n, entries, assembly_error_bound: err, ln_diagonal: diag_logs })
}

/// Eigenvalues, sorted nonincreasing, with negative round-off clipped.
pub fn spectrum(matrix: &ToeplitzMatrix) -> Result<SpectrumResult> {
    let mut vals = hermitian_eigenvalues(&matrix.entries)?;
    let norm = vals.first().copied().unwrap_or(0.0).abs().max(vals.last().copied().unwrap_or(0.0).abs());
    let threshold = 1e-10 * norm;
    let mut clipped: f64 = 0.0;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if -*v > threshold {
                return Err(BslError::AssemblyError { value: *v, threshold });
            }
            clipped = clipped.max(-*v);
            *v = 0.0;
        }
    }
    let ln_eigenvalues = matrix.ln_diagonal.as_ref().map(|d| {
        let mut l = d.clone();
        l.sort_by(|a, b| b.total_cmp(a));
        l
    });
    Ok(SpectrumResult {
        eigenvalues: vals,
        ln_eigenvalues,
        truncation_dim: matrix.dimension,
        assembly_error_bound: matrix.assembly_error_bound,
        clipped,
    })
}

/// Convenience: assemble and diagonalise.
pub fn toeplitz_spectrum(model: &WeightModel, mu: &MeasureSpec, n: usize) -> Result<SpectrumResult> {
    if n <= DEFAULT_DIM_CAP {
        if let Some(s) = radial_spectrum(model, mu, n)? {
            return Ok(s);
        }
    }
    spectrum(&assemble(model, mu, n)?)
}

/// Largest dimension accepted by [`radial_spectrum`], which stores no matrix.
pub const RADIAL_DIM_CAP: usize = 1 << 20;

/// Spectrum of a rotation-invariant μ without forming the matrix: T_μ is diagonal in the
/// monomial basis, so the eigenvalues are the weighted radial moments. Returns None when
/// some component of μ is not a full-angle radial density.
pub fn radial_spectrum(model: &WeightModel, mu: &MeasureSpec, n: usize) -> Result<Option<SpectrumResult>> {
    if n == 0 {
        return invalid("dimension must be positive");
    }
    if n > RADIAL_DIM_CAP {
        return Err(BslError::Capacity { requested: n as u64, cap: RADIAL_DIM_CAP as u64 });
    }
    mu.validate()?;
    let domain = domain_shape(model, n);
    let mut comps = Vec::new();
    for c in mu.components()? {
        comps.extend(c.restricted(&domain).or_else(|_| Ok::<_, BslError>(vec![c.clone()]))?);
    }
    let mut pieces = Vec::new();
    for comp in &comps {
        match comp {
            Component::Radial { profile, shape: Some(Shape::Polar { r0, r1, t0, t1 }) } if t1 - t0 >= TWO_PI => {
                pieces.push((profile, *r0, *r1));
            }
            _ => return Ok(None),
        }
    }
    let lc = ln_coeffs(model, n);
    let mut ln_diag = vec![f64::NEG_INFINITY; n];
    let mut err = 0.0;
    for (profile, r0, r1) in pieces {
        let moments: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|k| ln_weighted_moment(model, profile, r0, r1, 2 * k))
            .collect::<Result<_>>()?;
        for k in 0..n {
            let ln_v = 2.0 * lc[k] + TWO_PI.ln() + moments[k].0;
            err += ln_v.exp() * moments[k].1;
            let top = ln_diag[k].max(ln_v);
            if top.is_finite() {
                ln_diag[k] = top + ((ln_diag[k] - top).exp() + (ln_v - top).exp()).ln();
            }
        }
    }
    ln_diag.sort_by(|a, b| b.total_cmp(a));
    Ok(Some(SpectrumResult {
        eigenvalues: ln_diag.iter().map(|l| l.exp()).collect(),
        ln_eigenvalues: Some(ln_diag),
        truncation_dim: n,
        assembly_error_bound: err,
        clipped: 0.0,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    /// Tail estimate N·λ_N^β, reported when the cut level is zero.
    pub tail_bound: Option<f64>,
}

/// Σ_n h(λ_n) over the computed spectrum.
pub fn trace_functional(spec: &SpectrumResult, h: &CutPowerFunction) -> SeriesValue {
    let value = spec.eigenvalues.iter().map(|&l| h.eval(l)).sum();
    let tail_bound = (h.delta == 0.0).then(|| {
        let last = spec.eigenvalues.last().copied().unwrap_or(0.0);
        spec.eigenvalues.len() as f64 * last.powf(h.beta)
    });
    SeriesValue { value, tail_bound }
}

/// (Σ λ_n^p)^{1/p}, computed with scaling by the largest term.
pub fn schatten_norm(spec: &SpectrumResult, p: f64) -> Result<SeriesValue> {
    if !(p > 0.0) {
        return invalid("Schatten exponent must be positive");
    }
    let top = spec.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(SeriesValue { value: 0.0, tail_bound: Some(0.0) });
    }
    let s: f64 = spec.eigenvalues.iter().map(|&l| (l / top).powf(p)).sum();
    let last = spec.eigenvalues.last().copied().unwrap_or(0.0);
    Ok(SeriesValue {
        value: top * s.powf(1.0 / p),
        tail_bound: Some(spec.eigenvalues.len() as f64 * last.powf(p)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// Σ h(a_n/B)/Tr h(T) at the witness.
    pub lower_ratio: f64,
    /// Σ h(B·a_n)/Tr h(T) at the witness (including the geometric comparator if used).
    pub upper_ratio: f64,
    pub b_witness: f64,
    pub trace: f64,
    pub convex_branch: bool,
}

/// Smallest B ≥ 1 with f(B) satisfying a monotone predicate, by bisection on log B.
fn smallest_b(pred: impl Fn(f64) -> bool) -> Option<f64> {
    if pred(1.0) {
        return Some(1.0);
    }
    let mut hi = 2.0f64;
    while !pred(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return None;
        }
    }
    let (mut lo, mut hi) = (hi.ln() - 2f64.ln(), hi.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if pred(mid.exp()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi.exp())
}

/// Smallest B with Σ h(a_n/B) ≤ Tr h(T_μ) ≤ Σ h(B a_n) on the truncated data; the concave
/// branch with δ > 0 adds Σ_k h(B e^{−γk}) to the upper side.
pub fn sandwich_witness(
    lambda: &[f64],
    a: &[f64],
    h: &CutPowerFunction,
    gamma: f64,
) -> Result<SandwichReport> {
    let trace: f64 = lambda.iter().map(|&l| h.eval(l)).sum();
    let convex = h.is_convex();
    let geometric = !convex && h.delta > 0.0;
    let upper = |b: f64| {
        let mut s: f64 = a.iter().map(|&x| h.eval(b * x)).sum();
        if geometric {
            let mut k = 0.0;
            loop {
                let t = h.eval(b * (-gamma * k).exp());
                if t == 0.0 {
                    break;
                }
                s += t;
                k += 1.0;
            }
        }
        s
    };
    let lower = |b: f64| a.iter().map(|&x| h.eval(x / b)).sum::<f64>();
    let slack = 1.0 + 1e-12;
    let b_lo = smallest_b(|b| lower(b) <= trace * slack)
        .ok_or_else(|| BslError::TruncationInsufficient("lower comparator never drops below the trace".into()))?;
    let b_hi = smallest_b(|b| upper(b) * slack >= trace)
        .ok_or_else(|| BslError::TruncationInsufficient("upper comparator never reaches the trace".into()))?;
    let b = b_lo.max(b_hi);
    let denom = if trace > 0.0 { trace } else { f64::MIN_POSITIVE };
    Ok(SandwichReport {
        lower_ratio: lower(b) / denom,
        upper_ratio: upper(b) / denom,
        b_witness: b,
        trace,
        convex_branch: convex,
    })
}

/// Computes Tr h(T_μ) from an N-dimensional spectrum and the sums over the lattice's
/// rearranged cell averages, and returns the smallest B making the sandwich hold.
pub fn verify_trace_sandwich(
    model: &WeightModel,
    mu: &MeasureSpec,
    lattice: &LatticeParams,
    h: &CutPowerFunction,
    n: usize,
) -> Result<SandwichReport> {
    h.validate()?;
    let spec = toeplitz_spectrum(model, mu, n)?;
    let tr = trace_functional(&spec, h);
    if let Some(tail) = tr.tail_bound {
        if tail > tr.value {
            return Err(BslError::TruncationInsufficient(format!(
                "tail estimate {tail:e} exceeds the truncated trace {:e}",
                tr.value
            )));
        }
    } else if spec.eigenvalues.last().is_some_and(|&l| h.eval(l) > 0.0) {
        return Err(BslError::TruncationInsufficient("h does not vanish on the last eigenvalue".into()));
    }
    let cells = enumerate_cells(lattice)?;
    let table = CellMassTable::compute(mu, &cells)?;
    let a = rearrangement(&table).values;
    sandwich_witness(&spec.eigenvalues, &a, h, 1.0)
}

fn shape_contains(outer: &Shape, inner: &Shape) -> bool {
    match (*outer, *inner) {
        (Shape::Polar { r0, r1, t0, t1 }, Shape::Polar { r0: s0, r1: s1, t0: u0, t1: u1 }) => {
            r0 <= s0 && s1 <= r1 && (t1 - t0 >= TWO_PI || {
                let start = crate::lattice::angle_from(u0, t0);
                start + (u1 - u0) <= t1 - t0 + 1e-15
            })
        }
        (Shape::Rect { x0, x1, y0, y1 }, Shape::Rect { x0: a0, x1: a1, y0: b0, y1: b1 }) => {
            x0 <= a0 && a1 <= x1 && y0 <= b0 && b1 <= y1
        }
        _ => false,
    }
}

/// Decides μ ≤ ν for the supported spec shapes.
pub fn dominated(mu: &MeasureSpec, nu: &MeasureSpec) -> Result<bool> {
    if mu == nu {
        return Ok(true);
    }
    match (mu, nu) {
        (MeasureSpec::Restriction { base: b1, region: r1 }, MeasureSpec::Restriction { base: b2, region: r2 })
            if b1 == b2 =>
        {
            Ok(shape_contains(&r2.shape(), &r1.shape()))
        }
        (MeasureSpec::Restriction { base, .. }, _) if dominated(base, nu).unwrap_or(false) => Ok(true),
        (MeasureSpec::Radial { profile: p }, MeasureSpec::Radial { profile: q }) => {
            Ok((0..4000).all(|k| {
                let r = k as f64 / 4000.0;
                p.ln_density(r) <= q.ln_density(r) + 1e-12
            }))
        }
        (MeasureSpec::Sum { parts }, _) if parts.len() == 1 => dominated(&parts[0], nu),
        _ => Err(BslError::IncomparableMeasures(
            "only restrictions of a common base and ordered radial densities are recognised".into(),
        )),
    }
}

/// λ_n(T_μ) ≤ λ_n(T_ν) + 1e−10 for all n ≤ N, after checking μ ≤ ν.
pub fn weyl_monotonicity_check(model: &WeightModel, mu: &MeasureSpec, nu: &MeasureSpec, n: usize) -> Result<bool> {
    if !dominated(mu, nu)? {
        return Err(BslError::IncomparableMeasures("mu is not dominated by nu".into()));
    }
    let a = toeplitz_spectrum(model, mu, n)?;
    let b = toeplitz_spectrum(model, nu, n)?;
    Ok(a.eigenvalues.iter().zip(&b.eigenvalues).all(|(x, y)| *x <= *y + 1e-10))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    /// λ_k(T_{μ_n}) ≤ λ_k(T_μ) for every k.
    pub lower_holds: bool,
    /// max_k (λ_k(T_μ) − λ_k(T_{μ_n}))/a_{n+1}(μ).
    pub constant: f64,
    pub a_next: f64,
}

/// Compares T_μ with T_{μ_n}, where μ_n is μ restricted to the n cells of largest average.
pub fn restriction_check(
    model: &WeightModel,
    mu: &MeasureSpec,
    lattice: &LatticeParams,
    top: usize,
    n: usize,
) -> Result<RestrictionReport> {
    let cells = enumerate_cells(lattice)?;
    let table = CellMassTable::compute(mu, &cells)?;
    let r = rearrangement(&table);
    if top >= r.cells.len() {
        return invalid("top-n exceeds the number of cells");
    }
    let parts: Vec<MeasureSpec> = r.cells[..top].iter().map(|c| mu.clone().restricted_to(c.shape)).collect();
    let mu_n = MeasureSpec::Sum { parts };
    let full = toeplitz_spectrum(model, mu, n)?;
    let part = toeplitz_spectrum(model, &mu_n, n)?;
    let a_next = r.values[top];
    let lower_holds = part.eigenvalues.iter().zip(&full.eigenvalues).all(|(p, f)| *p <= *f + 1e-10);
    let gap = full.eigenvalues.iter().zip(&part.eigenvalues).map(|(f, p)| f - p).fold(0.0, f64::max);
    Ok(RestrictionReport { lower_holds, constant: gap / a_next, a_next })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Intercept B of λ_k ≈ B e^{−γk}.
    pub b: f64,
    pub gamma: f64,
    pub points: usize,
}

/// Least-squares fit of ln λ_k against k over k ∈ [N/4, 3N/4] for the area measure on
/// one cell. Eigenvalues below the solver's noise floor are dropped.
pub fn geometric_decay_check(model: &WeightModel, shape: &Shape, n: usize) -> Result<DecayFit> {
    let spec = toeplitz_spectrum(model, &MeasureSpec::area_on(*shape), n)?;
    let logs: Vec<f64> = match &spec.ln_eigenvalues {
        Some(l) => l.clone(),
        None => spec.eigenvalues.iter().map(|v| v.ln()).collect(),
    };
    let floor = if spec.ln_eigenvalues.is_some() {
        f64::NEG_INFINITY
    } else {
        logs[0] + (1e-13f64).ln()
    };
    let pts: Vec<(f64, f64)> = (n / 4..=(3 * n / 4).min(n - 1))
        .filter(|&k| logs[k].is_finite() && logs[k] > floor)
        .map(|k| (k as f64, logs[k]))
        .collect();
    if pts.len() < 4 {
        return Err(BslError::FitDegenerate(format!("only {} eigenvalues above the noise floor", pts.len())));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if !(slope < -1e-9) {
        return Err(BslError::NoDecay);
    }
    Ok(DecayFit { b: (my - slope * mx).exp(), gamma: -slope, points: pts.len() })
}

/// Writes (n, lambda) with n starting at 1.
pub fn write_spectrum_csv<W: Write>(spec: &SpectrumResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["n", "lambda"])?;
    for (i, l) in spec.eigenvalues.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{l:e}")])?;
    }
    w.flush()?;
    Ok(())
}

const MAGIC: &[u8; 4] = b"TPLZ";

/// Dense binary export: "TPLZ", u32 N, u32 flags (bit 0 = complex), u32 reserved, then
/// row-major little-endian f64 (re, im) pairs.
pub fn write_matrix_binary<W: Write>(m: &CMatrix, mut out: W) -> Result<()> {
    let n = m.nrows();
    out.write_all(MAGIC)?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&1u32.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    for i in 0..n {
        for j in 0..n {
            out.write_all(&m[(i, j)].re.to_le_bytes())?;
            out.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R) -> Result<CMatrix> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return invalid("bad matrix magic");
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let complex = u32::from_le_bytes(head[8..12].try_into().unwrap()) & 1 == 1;
    let mut m = CMatrix::zeros(n, n);
    let mut buf = [0u8; 8];
    for i in 0..n {
        for j in 0..n {
            input.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            let im = if complex {
                input.read_exact(&mut buf)?;
                f64::from_le_bytes(buf)
            } else {
                0.0
            };
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

/// Σ λ_n and Σ M_nn, for the trace identity.
pub fn traces(matrix: &ToeplitzMatrix, spec: &SpectrumResult) -> (f64, f64) {
    let diag: f64 = (0..matrix.dimension).map(|k| matrix.entries[(k, k)].re).sum();
    (spec.eigenvalues.iter().sum(), diag)
}

/// Cell as a restriction target.
pub fn cell_measure(cell: &Cell) -> MeasureSpec {
    MeasureSpec::area_on(cell.shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeParams;

    fn b0() -> WeightModel {
        WeightModel::bergman(0.0).unwrap()
    }

    #[test]
    fn disc_measure_is_exact() {
        let spec = toeplitz_spectrum(&b0(), &MeasureSpec::disc(0.5), 32).unwrap();
        for (k, l) in spec.eigenvalues.iter().enumerate() {
            let exact = 0.5f64.powi(2 * k as i32 + 2);
            assert!((l - exact).abs() <= 1e-10 * exact, "k={k}");
        }
    }

    #[test]
    fn lebesgue_gives_identity() {
        let t = assemble(&b0(), &MeasureSpec::lebesgue(), 16).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((t.entries[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-10);
            }
        }
        let f = WeightModel::fock(1.5).unwrap();
        let t = assemble(&f, &MeasureSpec::lebesgue(), 24).unwrap();
        for i in 0..24 {
            assert!((t.entries[(i, i)].re - 1.0).abs() < 1e-10, "i={i}");
        }
    }

    #[test]
    fn power_law_diagonal() {
        let t = assemble(&b0(), &MeasureSpec::gap_power(2.0), 64).unwrap();
        for n in 0..64 {
            let exact = 2.0 / ((2 * n + 3) as f64 * (2 * n + 4) as f64);
            assert!((t.entries[(n, n)].re - exact).abs() < 1e-11 * exact);
        }
        assert!((t.entries[(10, 10)].re - 1.0 / 276.0).abs() < 1e-13);
    }

    #[test]
    fn sector_restriction_matches_quadrature_route() {
        // exact angular factors versus the general polar quadrature
        let shape = Shape::Polar { r0: 0.5, r1: 0.75, t0: 0.0, t1: PI / 2.0 };
        let exact = assemble(&b0(), &MeasureSpec::area_on(shape), 12).unwrap();
        let area = MeasureSpec::Area {
            profile: crate::measures::AreaProfile::AngularModulated { exponent: 0.0, amplitude: 0.0, frequency: 0 },
        }
        .restricted_to(shape);
        let quad = assemble(&b0(), &area, 12).unwrap();
        let d = (&exact.entries - &quad.entries).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn spectrum_of_small_matrix() {
        let m = CMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0].map(|x| Complex64::new(x, 0.0)));
        let t = ToeplitzMatrix { model: b0(), dimension: 2, entries: m, assembly_error_bound: 0.0, ln_diagonal: None };
        let s = spectrum(&t).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-14 && (s.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    fn spec_of(v: &[f64]) -> SpectrumResult {
        SpectrumResult { eigenvalues: v.to_vec(), ln_eigenvalues: None, truncation_dim: v.len(), assembly_error_bound: 0.0, clipped: 0.0 }
    }

    #[test]
    fn trace_and_schatten_examples() {
        let h = CutPowerFunction::new(1.0, 1.5);
        assert!((trace_functional(&spec_of(&[3.0, 1.0]), &h).value - 1.5).abs() < 1e-15);
        let geo: Vec<f64> = (0..32).map(|k| 0.5f64.powi(k)).collect();
        let v = trace_functional(&spec_of(&geo), &CutPowerFunction::identity()).value;
        assert!((v - (2.0 - 2f64.powi(-31))).abs() < 1e-15);
        let disc = toeplitz_spectrum(&b0(), &MeasureSpec::disc(0.5), 32).unwrap();
        let s = trace_functional(&disc, &CutPowerFunction::new(0.5, 0.0)).value;
        assert!((s - (1.0 - 2f64.powi(-32))).abs() < 1e-12);
        assert!((schatten_norm(&spec_of(&[3.0, 4.0]), 1.0).unwrap().value - 7.0).abs() < 1e-14);
        assert!((schatten_norm(&spec_of(&[3.0, 4.0]), 64.0).unwrap().value - 4.0).abs() < 1e-6);
        let s1 = schatten_norm(&disc, 1.0).unwrap().value;
        assert!((s1 - (1.0 - 0.25f64.powi(32)) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weyl_examples() {
        let m = b0();
        assert!(weyl_monotonicity_check(&m, &MeasureSpec::disc(0.4), &MeasureSpec::disc(0.5), 24).unwrap());
        assert!(weyl_monotonicity_check(&m, &MeasureSpec::disc(0.5), &MeasureSpec::disc(0.5), 24).unwrap());
        assert!(matches!(
            weyl_monotonicity_check(&m, &MeasureSpec::disc(0.5), &MeasureSpec::gap_power(2.0), 8),
            Err(BslError::IncomparableMeasures(_))
        ));
        assert!(matches!(
            weyl_monotonicity_check(&m, &MeasureSpec::disc(0.6), &MeasureSpec::disc(0.5), 8),
            Err(BslError::IncomparableMeasures(_))
        ));
    }

    #[test]
    fn decay_fit_examples() {
        let fit = geometric_decay_check(&b0(), &crate::measures::Region::Disc { radius: 0.5 }.shape(), 64).unwrap();
        assert!((fit.gamma - 2.0 * 2f64.ln()).abs() < 1e-9, "{fit:?}");
        let cell = LatticeParams::dyadic(1).disc_cell(1, 0).unwrap();
        let fit = geometric_decay_check(&b0(), &cell.shape, 64).unwrap();
        assert!(fit.gamma > 0.0);
        let full = Shape::Polar { r0: 0.0, r1: 1.0, t0: 0.0, t1: TWO_PI };
        assert!(matches!(geometric_decay_check(&b0(), &full, 32), Err(BslError::NoDecay)));
    }

    #[test]
    fn binary_round_trip() {
        let t = assemble(&b0(), &MeasureSpec::area_on(Shape::Polar { r0: 0.2, r1: 0.7, t0: 0.1, t1: 2.0 }), 6).unwrap();
        let mut buf = Vec::new();
        write_matrix_binary(&t.entries, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"TPLZ");
        assert_eq!(buf.len(), 16 + 6 * 6 * 16);
        let back = read_matrix_binary(&buf[..]).unwrap();
        assert_eq!(back, t.entries);
    }

    #[test]
    fn atoms_give_rank_one() {
        let mu = MeasureSpec::Atoms { atoms: vec![crate::measures::Atom { point: Complex64::new(0.3, 0.4), mass: 2.0 }] };
        let s = toeplitz_spectrum(&b0(), &mu, 10).unwrap();
        // λ_1 = mass·ω²(a)·Σ|e_n(a)|² (truncated kernel diagonal)
        let expect: f64 = 2.0 / PI * (0..10).map(|n| (n as f64 + 1.0) * 0.25f64.powi(n)).sum::<f64>();
        assert!((s.eigenvalues[0] - expect).abs() < 1e-12 * expect);
        assert!(s.eigenvalues[1].abs() < 1e-12);
    }
}
