//! Berezin transforms μ̃(z) = ⟨T_μ K_z, K_z⟩/‖K_z‖², lattice samples of μ̃, the constants
//! C_p = sup_R Σ_{R'} ν̃_R(z_{R'})^p for area measure on single cells, and the modified
//! transform with kernel (1 − z̄ζ)^{−(2+s)}.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BslError, Result};
use crate::lattice::{enumerate_cells, Cell, CellIndex, CellKind, LatticeParams, Shape, TWO_PI};
use crate::measures::{integrate_shape, Component, MeasureSpec, RadialProfile};
use crate::quadrature::{adaptive_points, breakpoints, GaussLegendre, Tolerance};
use crate::spaces::{ln_kernel_series_coeff, WeightModel};

/// Largest number of series terms used for ‖K^s_z‖².
pub const SERIES_TERM_CAP: usize = 10_000_000;

/// The normalised kernel weight ζ ↦ |K_z(ζ)|² ω²(ζ)/‖K_z‖².
#[derive(Debug, Clone, Copy)]
struct KernelWeight {
    model: WeightModel,
    z: Complex64,
    /// Exponent 2 + s of |1 − z̄ζ|^{−2}; unused for Fock.
    power: f64,
    /// ln ‖K_z‖².
    ln_norm: f64,
}

impl KernelWeight {
    fn standard(model: &WeightModel, z: Complex64) -> Self {
        KernelWeight {
            model: *model,
            z,
            power: 2.0 + model.alpha(),
            ln_norm: model.ln_kernel_diag(z.norm()),
        }
    }

    fn at(&self, w: Complex64) -> f64 {
        if self.model.is_bergman() {
            self.at_polar(w.norm(), w.arg() - self.z.arg())
        } else {
            let a = self.model.alpha();
            a / PI * (-a * (w - self.z).norm_sqr()).exp()
        }
    }

    /// Weight at r·e^{i(arg z + t)}. Uses |1 − z̄w|² = (1 − |z|r)² + 4|z|r sin²(t/2), which
    /// keeps full relative accuracy when both points approach the circle.
    fn at_polar(&self, r: f64, t: f64) -> f64 {
        if self.model.is_bergman() {
            if r >= 1.0 {
                return 0.0;
            }
            let rho = self.z.norm();
            let gap = (1.0 - rho) + rho * (1.0 - r);
            let h = (0.5 * t).sin();
            let d = gap * gap + 4.0 * rho * r * h * h;
            (-self.power * d.ln() - self.ln_norm + self.model.ln_weight_radial(r)).exp()
        } else {
            let (a, rho) = (self.model.alpha(), self.z.norm());
            let h = (0.5 * t).sin();
            a / PI * (-a * ((r - rho).powi(2) + 4.0 * rho * r * h * h)).exp()
        }
    }

    /// Length scale of the peak at z.
    fn width(&self) -> f64 {
        if self.model.is_bergman() {
            (1.0 - self.z.norm()).max(1e-300)
        } else {
            1.0 / self.model.alpha().sqrt()
        }
    }

    /// Radius around z beyond which the Fock weight is below e^{−81}.
    fn fock_reach(&self) -> f64 {
        9.0 / self.model.alpha().sqrt()
    }
}

fn radial_hints(k: &KernelWeight, r0: f64, r1: f64) -> Vec<f64> {
    let c = k.z.norm();
    let w = k.width();
    let mut hints = vec![c];
    for s in [0.25, 1.0, 4.0, 16.0, 64.0] {
        hints.push(c - s * w);
        hints.push(c + s * w);
    }
    if k.model.is_bergman() {
        let mut g = 0.5;
        while g > 1e-14 {
            hints.push(1.0 - g);
            g *= 0.25;
        }
    }
    breakpoints(r0, r1, &hints)
}

/// ∫_{r0}^{r1} g(r) [∫_0^{2π} weight(re^{iθ}) dθ] r dr for a radial density over full circles.
fn radial_average(k: &KernelWeight, profile: &RadialProfile, r0: f64, r1: f64, tol: Tolerance) -> Result<f64> {
    let (mut r0, mut r1) = (r0, profile.support_radius().map_or(r1, |s| r1.min(s)));
    if !k.model.is_bergman() {
        let c = k.z.norm();
        r0 = r0.max(c - k.fock_reach());
        r1 = r1.min(c + k.fock_reach());
    }
    if r1 <= r0 {
        return Ok(0.0);
    }
    let inner_tol = Tolerance { rel: tol.rel, abs: 0.0, ..tol };
    let mut failure: Option<BslError> = None;
    let mut angular = |r: f64| -> f64 {
        let scale = (1.0 - r * k.z.norm()).max(1e-300);
        let hints: Vec<f64> = [1.0, 4.0, 16.0, 64.0, 256.0].iter().map(|m| m * scale).collect();
        let pts = breakpoints(0.0, PI, &hints);
        match adaptive_points(|t| k.at_polar(r, t), &pts, inner_tol) {
            Ok(q) => 2.0 * q.value,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let q = adaptive_points(|r| r * profile.density(r) * angular(r), &radial_hints(k, r0, r1), tol)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q.value)
}

/// (1/4)[erf(√α(x1−x)) − erf(√α(x0−x))][erf(√α(y1−y)) − erf(√α(y0−y))].
fn fock_rect(alpha: f64, z: Complex64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let s = alpha.sqrt();
    let fx = libm::erf(s * (x1 - z.re)) - libm::erf(s * (x0 - z.re));
    let fy = libm::erf(s * (y1 - z.im)) - libm::erf(s * (y0 - z.im));
    0.25 * fx * fy
}

fn domain_disc(k: &KernelWeight) -> Shape {
    if k.model.is_bergman() {
        Shape::Polar { r0: 0.0, r1: 1.0, t0: 0.0, t1: TWO_PI }
    } else {
        let c = k.z.norm();
        Shape::Polar { r0: (c - k.fock_reach()).max(0.0), r1: c + k.fock_reach(), t0: 0.0, t1: TWO_PI }
    }
}

fn component_average(k: &KernelWeight, c: &Component, tol: Tolerance) -> Result<f64> {
    match c {
        Component::Atoms(atoms) => {
            let mut s = 0.0;
            for a in atoms {
                k.model.check_point(a.point)?;
                s += a.mass * k.at(a.point);
            }
            Ok(s)
        }
        Component::Radial { profile, shape: None } => {
            let Shape::Polar { r0, r1, .. } = domain_disc(k) else { unreachable!() };
            radial_average(k, profile, r0, r1, tol)
        }
        Component::Radial { profile, shape: Some(Shape::Polar { r0, r1, t0, t1 }) } if t1 - t0 >= TWO_PI => {
            radial_average(k, profile, *r0, *r1, tol)
        }
        Component::Radial { profile: RadialProfile::Constant { value }, shape: Some(Shape::Rect { x0, x1, y0, y1 }) }
            if !k.model.is_bergman() =>
        {
            Ok(value * fock_rect(k.model.alpha(), k.z, *x0, *x1, *y0, *y1))
        }
        Component::Area { shape: None, .. } => {
            let mut s = 0.0;
            for piece in c.restricted(&domain_disc(k))? {
                s += component_average(k, &piece, tol)?;
            }
            Ok(s)
        }
        Component::Radial { shape: Some(s), .. } | Component::Area { shape: Some(s), .. } => {
            // keep the quadrature box near the peak for Fock
            let shapes = match s {
                _ if k.model.is_bergman() => vec![*s],
                Shape::Polar { .. } => s.intersect(&domain_disc(k))?,
                Shape::Rect { .. } => {
                    let (d, z) = (k.fock_reach(), k.z);
                    s.intersect(&Shape::Rect { x0: z.re - d, x1: z.re + d, y0: z.im - d, y1: z.im + d })?
                }
            };
            let mut total = 0.0;
            for sh in shapes {
                total += integrate_shape(&sh, &|w| c.density(w) * k.at(w), &[k.z], tol)?;
            }
            Ok(total)
        }
    }
}

fn average(k: &KernelWeight, mu: &MeasureSpec, tol: Tolerance) -> Result<f64> {
    let mut s = 0.0;
    for c in mu.components()? {
        s += component_average(k, &c, tol)?;
    }
    Ok(s)
}

/// μ̃(z) = ∫ |K_z(ζ)|²/‖K_z‖² ω²(ζ) dμ(ζ).
pub fn berezin(model: &WeightModel, mu: &MeasureSpec, z: Complex64) -> Result<f64> {
    berezin_with(model, mu, z, Tolerance::default())
}

pub fn berezin_with(model: &WeightModel, mu: &MeasureSpec, z: Complex64, tol: Tolerance) -> Result<f64> {
    model.check_point(z)?;
    mu.validate()?;
    average(&KernelWeight::standard(model, z), mu, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerezinSample {
    pub cell: Cell,
    pub center: Complex64,
    pub value: f64,
}

/// Berezin values at the cell centres, in lattice order.
pub fn sample_centers(model: &WeightModel, mu: &MeasureSpec, params: &LatticeParams) -> Result<Vec<BerezinSample>> {
    let cells = enumerate_cells(params)?;
    mu.validate()?;
    // radial measures have radial transforms: evaluate once per distinct radius
    let radial = mu.is_radial()?;
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    if radial {
        let mut radii: Vec<f64> = cells.iter().map(|c| c.center.norm()).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
        let vals: Vec<f64> = radii
            .par_iter()
            .map(|&r| berezin(model, mu, Complex64::new(r, 0.0)))
            .collect::<Result<_>>()?;
        for (r, v) in radii.iter().zip(vals) {
            cache.insert(r.to_bits(), v);
        }
    }
    let lookup = |r: f64| -> Option<f64> {
        cache
            .range(..=(r * (1.0 + 1e-15) + 1e-300).to_bits())
            .next_back()
            .filter(|(k, _)| (f64::from_bits(**k) - r).abs() <= 1e-15 * r.max(1.0))
            .map(|(_, v)| *v)
    };
    cells
        .par_iter()
        .map(|c| {
            let value = match radial.then(|| lookup(c.center.norm())).flatten() {
                Some(v) => v,
                None => berezin(model, mu, c.center)?,
            };
            Ok(BerezinSample { cell: *c, center: c.center, value })
        })
        .collect()
}

/// b_n: Berezin values at the cell centres, sorted nonincreasingly with (level, index) ties.
pub fn sample_rearranged(model: &WeightModel, mu: &MeasureSpec, params: &LatticeParams) -> Result<Vec<BerezinSample>> {
    let mut s = sample_centers(model, mu, params)?;
    let bucket = |x: f64| if x > 0.0 { (x.ln() * 1e11).round() as i64 } else { i64::MIN };
    s.sort_by(|a, b| bucket(b.value).cmp(&bucket(a.value)).then(a.cell.key().cmp(&b.cell.key())));
    for k in 1..s.len() {
        s[k].value = s[k].value.min(s[k - 1].value);
    }
    Ok(s)
}

/// Writes (n, j, center_re, center_im, berezin_value).
pub fn write_samples_csv<W: Write>(samples: &[BerezinSample], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["n", "j", "center_re", "center_im", "berezin_value"])?;
    for s in samples {
        let (n, j) = match s.cell.index {
            CellIndex::Angular(j) => (s.cell.level as i64, j as i64),
            CellIndex::Grid(i, j) => (i, j),
        };
        w.write_record([
            n.to_string(),
            j.to_string(),
            format!("{:e}", s.center.re),
            format!("{:e}", s.center.im),
            format!("{:e}", s.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthClass {
    /// Successive depth ratios ≤ 1.05.
    Plateau,
    /// Successive depth ratios ≥ 1.5.
    Growth,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpProfile {
    /// Running supremum at the deepest level.
    pub partial_sup: f64,
    /// (depth, S(depth)) where S(D) = max over cells of level ≤ D of the sum over centres of level ≤ D.
    pub growth_profile: Vec<(u32, f64)>,
    /// S(D)/S(D−1).
    pub ratios: Vec<(u32, f64)>,
    /// Classification over the last three ratios.
    pub class: GrowthClass,
}

pub const PLATEAU_RATIO: f64 = 1.05;
pub const GROWTH_RATIO: f64 = 1.5;

/// Classifies the tail of a profile of successive ratios.
pub fn classify_growth(ratios: &[f64]) -> GrowthClass {
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    if tail.is_empty() {
        GrowthClass::Inconclusive
    } else if tail.iter().all(|r| *r <= PLATEAU_RATIO) {
        GrowthClass::Plateau
    } else if tail.iter().all(|r| *r >= GROWTH_RATIO) {
        GrowthClass::Growth
    } else {
        GrowthClass::Inconclusive
    }
}

/// ν̃_R(z) for area measure on a disc cell, with a 6×6 Gauss rule in the far field.
fn cell_transform(model: &WeightModel, cell: &Cell, z: Complex64, far: &[(f64, f64)]) -> Result<f64> {
    let k = KernelWeight::standard(model, z);
    let Shape::Polar { r0, r1, t0, t1 } = cell.shape else {
        return invalid("disc cell expected");
    };
    let lam = 2.0 + model.alpha();
    let sep = (Complex64::new(1.0, 0.0) - z.conj() * cell.center).norm();
    if 2.0 * lam * cell.diameter() / sep < 0.3 {
        let mut s = 0.0;
        for &(ur, wr) in far {
            let r = r0 + (r1 - r0) * ur;
            for &(ut, wt) in far {
                let t = t0 + (t1 - t0) * ut;
                s += wr * wt * r * k.at(Complex64::from_polar(r, t));
            }
        }
        return Ok(s * (r1 - r0) * (t1 - t0));
    }
    integrate_shape(&cell.shape, &|w| k.at(w), &[z], Tolerance::new(1e-9, 0.0))
}

/// C_p profile for dA restricted to single cells, up to the given depth.
pub fn cp_constant(model: &WeightModel, params: &LatticeParams, p: f64, depth: u32) -> Result<CpProfile> {
    if !(p > 0.0 && p < 1.0) {
        return invalid("p must lie in (0, 1)");
    }
    let params = LatticeParams { max_level: depth, ..*params };
    params.validate()?;
    let first = params.first_level();
    let levels: Vec<u32> = (first..=depth).collect();
    let profile: Vec<(u32, f64)> = match params.family {
        CellKind::PlaneSquare => {
            if model.is_bergman() {
                return invalid("plane squares need a Fock model");
            }
            // translation invariance: every square gives the same sum
            let q = params.plane_cell(0, 0);
            let Shape::Rect { x0, x1, y0, y1 } = q.shape else { unreachable!() };
            let a = model.alpha();
            let mut acc = 0.0;
            let mut out = Vec::new();
            for &l in &levels {
                for c in params.level_cells(l)? {
                    acc += fock_rect(a, c.center, x0, x1, y0, y1).powf(p);
                }
                out.push((l, acc));
            }
            out
        }
        _ => {
            if !model.is_bergman() {
                return invalid("disc lattices need a Bergman model");
            }
            let gl = GaussLegendre::new(6);
            let far: Vec<(f64, f64)> = gl.mapped(0.0, 1.0).collect();
            // table[n][l] = Σ_{j at level l} ν̃_{R(n,0)}(z_{l,j})^p, one representative per level
            let table: Vec<Vec<f64>> = levels
                .par_iter()
                .map(|&n| {
                    let rep = params.disc_cell(n, 0)?;
                    levels
                        .iter()
                        .map(|&l| {
                            let mut s = 0.0;
                            for c in params.level_cells(l)? {
                                s += cell_transform(model, &rep, c.center, &far)?.powf(p);
                            }
                            Ok(s)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            levels
                .iter()
                .enumerate()
                .map(|(d, &depth)| {
                    let best = (0..=d).map(|n| table[n][..=d].iter().sum::<f64>()).fold(0.0, f64::max);
                    (depth, best)
                })
                .collect()
        }
    };
    let ratios: Vec<(u32, f64)> = profile.windows(2).map(|w| (w[1].0, w[1].1 / w[0].1)).collect();
    let class = classify_growth(&ratios.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(CpProfile { partial_sup: profile.last().map_or(0.0, |v| v.1), growth_profile: profile, ratios, class })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModifiedBerezinParams {
    pub alpha: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    /// Lower bound on s that was checked.
    pub bound: f64,
    /// "trace" for s > (α−1)/2, "schatten" for s > (1+pα−2p)/(2p).
    pub active: &'static str,
    pub satisfied: bool,
}

impl ModifiedBerezinParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > -1.0 && self.s > -1.0 {
            Ok(())
        } else {
            invalid("modified Berezin transform needs alpha > -1 and s > -1")
        }
    }

    /// Reports the stricter of the two lower bounds on s for the regime of exponent p.
    pub fn hypothesis(&self, p: Option<f64>) -> HypothesisCheck {
        let trace = (self.alpha - 1.0) / 2.0;
        let (bound, active) = match p {
            Some(p) if p > 0.0 => {
                let sch = (1.0 + p * self.alpha - 2.0 * p) / (2.0 * p);
                if sch > trace {
                    (sch, "schatten")
                } else {
                    (trace, "trace")
                }
            }
            _ => (trace, "trace"),
        };
        HypothesisCheck { bound, active, satisfied: self.s > bound }
    }
}

/// ln ‖K^s_z‖²_α = ln Σ_n b_n(s)² r^{2n}/b_n(α), truncated at relative 1e−12.
pub fn ln_modified_kernel_norm(params: &ModifiedBerezinParams, r: f64) -> Result<f64> {
    params.validate()?;
    if !(0.0..1.0).contains(&r) {
        return invalid("|z| must lie in [0, 1)");
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let lr2 = 2.0 * r.ln();
    // online log-sum-exp: sum = e^m · acc
    let mut m = f64::NEG_INFINITY;
    let mut acc = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for n in 0..SERIES_TERM_CAP {
        let lt = 2.0 * ln_kernel_series_coeff(n, params.s) - ln_kernel_series_coeff(n, params.alpha) + n as f64 * lr2;
        if lt > m {
            acc = acc * (m - lt).exp() + 1.0;
            m = lt;
        } else {
            acc += (lt - m).exp();
        }
        // past the peak the terms decay at least geometrically
        if lt < prev && lt - m - acc.ln() < (1e-12f64).ln() + (1.0 - r * r).ln() {
            return Ok(m + acc.ln());
        }
        prev = lt;
    }
    Err(BslError::SeriesTruncation(format!("more than {SERIES_TERM_CAP} terms needed at |z| = {r}")))
}

/// B_{α,s}(μ)(z) = ∫ |K^s_z(ζ)|² ω²_α(ζ) dμ(ζ)/‖K^s_z‖²_α on the Bergman space A²_α.
pub fn modified_berezin(params: &ModifiedBerezinParams, mu: &MeasureSpec, z: Complex64) -> Result<f64> {
    let model = WeightModel::bergman(params.alpha)?;
    model.check_point(z)?;
    mu.validate()?;
    let ln_norm = ln_modified_kernel_norm(params, z.norm())?;
    let k = KernelWeight { model, z, power: 2.0 + params.s, ln_norm };
    average(&k, mu, Tolerance::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Atom;

    fn b0() -> WeightModel {
        WeightModel::bergman(0.0).unwrap()
    }

    #[test]
    fn spec_examples() {
        let v = berezin(&b0(), &MeasureSpec::lebesgue(), Complex64::new(0.0, 0.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let atom = MeasureSpec::Atoms { atoms: vec![Atom { point: Complex64::new(0.0, 0.0), mass: 1.0 }] };
        let v = berezin(&b0(), &atom, Complex64::new(0.0, 0.0)).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-14);
        // with ω² = (α/π)e^{−α|z|²} the Fock transform of Lebesgue measure is 1
        let f = WeightModel::fock(1.0).unwrap();
        for z in [Complex64::new(0.0, 0.0), Complex64::new(2.5, -1.0)] {
            let v = berezin(&f, &MeasureSpec::lebesgue(), z).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn lebesgue_is_invariant_near_boundary() {
        for r in [0.3, 0.9, 0.999, 1.0 - 2f64.powi(-12)] {
            let v = berezin(&b0(), &MeasureSpec::lebesgue(), Complex64::from_polar(r, 1.0)).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "r={r}: {v}");
        }
        let a1 = WeightModel::bergman(1.0).unwrap();
        let v = berezin(&a1, &MeasureSpec::lebesgue(), Complex64::new(0.95, 0.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sector_and_full_routes_agree() {
        // the sum of two half-discs equals the disc
        let z = Complex64::new(0.4, 0.7);
        let halves = MeasureSpec::Sum {
            parts: vec![
                MeasureSpec::gap_power(2.0).restricted_to(Shape::Polar { r0: 0.0, r1: 1.0, t0: 0.0, t1: PI }),
                MeasureSpec::gap_power(2.0).restricted_to(Shape::Polar { r0: 0.0, r1: 1.0, t0: PI, t1: TWO_PI }),
            ],
        };
        let a = berezin(&b0(), &halves, z).unwrap();
        let b = berezin(&b0(), &MeasureSpec::gap_power(2.0), z).unwrap();
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }

    #[test]
    fn monotone_in_the_measure() {
        let z = Complex64::new(-0.3, 0.5);
        let small = berezin(&b0(), &MeasureSpec::disc(0.4), z).unwrap();
        let big = berezin(&b0(), &MeasureSpec::disc(0.6), z).unwrap();
        assert!(small <= big);
    }

    #[test]
    fn rearranged_samples() {
        let p = LatticeParams::dyadic(4);
        let s = sample_rearranged(&b0(), &MeasureSpec::lebesgue(), &p).unwrap();
        assert!(s.iter().all(|x| (x.value - 1.0).abs() < 1e-8));
        let atom = MeasureSpec::Atoms { atoms: vec![Atom { point: Complex64::new(0.0, 0.0), mass: 1.0 }] };
        let s = sample_rearranged(&b0(), &atom, &p).unwrap();
        assert_eq!(s[0].cell.level, 1);
        assert!(s.windows(2).all(|w| w[0].value >= w[1].value));
    }

    #[test]
    fn modified_transform_examples() {
        let z = Complex64::new(0.6, 0.2);
        let same = ModifiedBerezinParams { alpha: 0.0, s: 0.0 };
        let a = modified_berezin(&same, &MeasureSpec::gap_power(1.0), z).unwrap();
        let b = berezin(&b0(), &MeasureSpec::gap_power(1.0), z).unwrap();
        assert!((a - b).abs() < 1e-9 * b);
        let s1 = ModifiedBerezinParams { alpha: 0.0, s: 1.0 };
        let v = modified_berezin(&s1, &MeasureSpec::lebesgue(), Complex64::new(0.0, 0.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        // atom at 0: (1/π)/‖K¹_r‖², with ‖K¹_r‖² = (2 + r²)/(2(1 − r²)⁴)
        let atom = MeasureSpec::Atoms { atoms: vec![Atom { point: Complex64::new(0.0, 0.0), mass: 1.0 }] };
        for r in [0.2, 0.7, 0.95] {
            let x: f64 = r * r;
            let norm = (2.0 + x) / (2.0 * (1.0 - x).powi(4));
            let v = modified_berezin(&s1, &atom, Complex64::new(r, 0.0)).unwrap();
            assert!((v - 1.0 / (PI * norm)).abs() < 1e-10 * v, "r={r}");
        }
        let h = s1.hypothesis(Some(0.4));
        assert_eq!(h.active, "schatten");
        assert!(matches!(
            ln_modified_kernel_norm(&s1, 1.0 - 1e-9),
            Err(BslError::SeriesTruncation(_))
        ));
    }

    #[test]
    fn cp_profile_plane_plateaus() {
        let f = WeightModel::fock(1.0).unwrap();
        let params = LatticeParams::new(CellKind::PlaneSquare, 2, 8);
        let c = cp_constant(&f, &params, 0.25, 8).unwrap();
        assert_eq!(c.class, GrowthClass::Plateau);
    }

    #[test]
    fn far_field_rule_matches_adaptive() {
        let p = LatticeParams::dyadic(6);
        let cell = p.disc_cell(3, 0).unwrap();
        let gl = GaussLegendre::new(6);
        let far: Vec<(f64, f64)> = gl.mapped(0.0, 1.0).collect();
        let z = Complex64::from_polar(0.97, 2.5);
        let a = cell_transform(&b0(), &cell, z, &far).unwrap();
        let k = KernelWeight::standard(&b0(), z);
        let b = integrate_shape(&cell.shape, &|w| k.at(w), &[z], Tolerance::default()).unwrap();
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }
}
