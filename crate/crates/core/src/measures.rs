//! Positive measures on the disc or the plane, cell masses, cell averages and their
//! decreasing rearrangements.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::RateFunction;
use crate::composition::SymbolSpec;
use crate::error::{invalid, BslError, Result};
use crate::lattice::{Cell, Shape, TWO_PI};
use crate::quadrature::{adaptive_points, breakpoints, ln_integrate, Tolerance};
use crate::spaces::WeightModel;

/// Radial densities g(|z|), with dμ = g(|z|) dA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RadialProfile {
    Constant { value: f64 },
    /// scale·(1 − r)^exponent on the disc.
    GapPower {
        #[serde(default = "one")]
        scale: f64,
        exponent: f64,
    },
    /// 1/ρ(1/(1 − r)) on the disc.
    InverseRate { rate: RateFunction },
    /// Density of the pull-back measure of z ↦ c·z on A²_α relative to ω_α² dA.
    DilationPullback { modulus: f64, alpha: f64 },
    /// Same for z ↦ c·z^degree.
    MonomialPullback { degree: u32, modulus: f64, alpha: f64 },
    /// scale·exp(−r²/width²).
    Gaussian { scale: f64, width: f64 },
}

fn one() -> f64 {
    1.0
}

impl RadialProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RadialProfile::Constant { value } => *value >= 0.0 && value.is_finite(),
            RadialProfile::GapPower { scale, exponent } => *scale >= 0.0 && exponent.is_finite(),
            RadialProfile::InverseRate { rate } => return rate.validate(),
            RadialProfile::DilationPullback { modulus, alpha } => {
                *modulus > 0.0 && *modulus < 1.0 && *alpha > -1.0
            }
            RadialProfile::MonomialPullback { degree, modulus, alpha } => {
                *degree >= 1 && *modulus > 0.0 && *modulus <= 1.0 && *alpha > -1.0
            }
            RadialProfile::Gaussian { scale, width } => *scale >= 0.0 && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid radial profile {self:?}"))
        }
    }

    /// ln g(r); −∞ where the density vanishes.
    pub fn ln_density(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Constant { value } => value.ln(),
            RadialProfile::GapPower { scale, exponent } => {
                if r >= 1.0 {
                    f64::NEG_INFINITY
                } else if *exponent == 0.0 {
                    scale.ln()
                } else {
                    scale.ln() + exponent * (1.0 - r).ln()
                }
            }
            RadialProfile::InverseRate { rate } => {
                if r >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    -rate.ln_value(1.0 / (1.0 - r))
                }
            }
            RadialProfile::DilationPullback { modulus, alpha } => {
                if r >= *modulus {
                    f64::NEG_INFINITY
                } else {
                    let u = r / modulus;
                    alpha * (((1.0 - u) * (1.0 + u)).ln() - ((1.0 - r) * (1.0 + r)).ln())
                }
            }
            RadialProfile::MonomialPullback { degree, modulus, alpha } => {
                if r >= *modulus {
                    f64::NEG_INFINITY
                } else {
                    let u = (r / modulus).powf(1.0 / *degree as f64);
                    (*degree as f64).ln()
                        + alpha * (((1.0 - u) * (1.0 + u)).ln() - ((1.0 - r) * (1.0 + r)).ln())
                }
            }
            RadialProfile::Gaussian { scale, width } => scale.ln() - (r / width).powi(2),
        }
    }

    pub fn density(&self, r: f64) -> f64 {
        self.ln_density(r).exp()
    }

    /// Radius beyond which the density vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            RadialProfile::GapPower { .. } | RadialProfile::InverseRate { .. } => Some(1.0),
            RadialProfile::DilationPullback { modulus, .. }
            | RadialProfile::MonomialPullback { modulus, .. } => Some(*modulus),
            _ => None,
        }
    }
}

/// Non-radial densities f(z), with dμ = f(z) dA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AreaProfile {
    /// (1 − r)^exponent·(1 + amplitude·cos(frequency·θ)) on the disc, |amplitude| ≤ 1.
    AngularModulated { exponent: f64, amplitude: f64, frequency: u32 },
    /// height·exp(−|z − center|²/width²).
    GaussianBump { center: Complex64, width: f64, height: f64 },
    /// Pull-back density N_{φ,α}(w)/ω_α²(w) of an explicit symbol on A²_α.
    Counting { symbol: SymbolSpec, alpha: f64 },
}

impl AreaProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AreaProfile::AngularModulated { amplitude, .. } => amplitude.abs() <= 1.0,
            AreaProfile::GaussianBump { width, height, .. } => *width > 0.0 && *height >= 0.0,
            AreaProfile::Counting { symbol, alpha } => {
                symbol.validate()?;
                *alpha > -1.0
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid area profile {self:?}"))
        }
    }

    pub fn density(&self, z: Complex64) -> f64 {
        match self {
            AreaProfile::AngularModulated { exponent, amplitude, frequency } => {
                let r = z.norm();
                if r >= 1.0 {
                    return 0.0;
                }
                (1.0 - r).powf(*exponent) * (1.0 + amplitude * (*frequency as f64 * z.arg()).cos())
            }
            AreaProfile::GaussianBump { center, width, height } => {
                height * (-(z - center).norm_sqr() / (width * width)).exp()
            }
            AreaProfile::Counting { symbol, alpha } => {
                crate::composition::pullback_density(symbol, *alpha, z).unwrap_or(0.0)
            }
        }
    }

    /// Points where the density has a peak, used as quadrature hints.
    fn peak(&self) -> Option<Complex64> {
        match self {
            AreaProfile::GaussianBump { center, .. } => Some(*center),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Complex64,
    pub mass: f64,
}

/// Regions used to restrict a measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    Disc { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Sector { r0: f64, r1: f64, t0: f64, t1: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Region {
    pub fn shape(&self) -> Shape {
        match *self {
            Region::Disc { radius } => Shape::Polar { r0: 0.0, r1: radius, t0: 0.0, t1: TWO_PI },
            Region::Annulus { inner, outer } => Shape::Polar { r0: inner, r1: outer, t0: 0.0, t1: TWO_PI },
            Region::Sector { r0, r1, t0, t1 } => Shape::Polar { r0, r1, t0, t1: t1.min(t0 + TWO_PI) },
            Region::Rect { x0, x1, y0, y1 } => Shape::Rect { x0, x1, y0, y1 },
        }
    }
}

impl From<Shape> for Region {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Polar { r0, r1, t0, t1 } => Region::Sector { r0, r1, t0, t1 },
            Shape::Rect { x0, x1, y0, y1 } => Region::Rect { x0, x1, y0, y1 },
        }
    }
}

/// A positive Borel measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Radial { profile: RadialProfile },
    Area { profile: AreaProfile },
    Atoms { atoms: Vec<Atom> },
    Restriction { base: Box<MeasureSpec>, region: Region },
    Sum { parts: Vec<MeasureSpec> },
}

/// A measure broken into pieces, each a density on a shape (None = whole domain) or atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Radial { profile: RadialProfile, shape: Option<Shape> },
    Area { profile: AreaProfile, shape: Option<Shape> },
    Atoms(Vec<Atom>),
}

fn restrict(shape: Option<Shape>, region: &Shape) -> Result<Vec<Option<Shape>>> {
    match shape {
        None => Ok(vec![Some(*region)]),
        Some(s) => Ok(s.intersect(region)?.into_iter().map(Some).collect()),
    }
}

impl Component {
    /// The component restricted to a further shape.
    pub fn restricted(&self, region: &Shape) -> Result<Vec<Component>> {
        Ok(match self {
            Component::Radial { profile, shape } => restrict(*shape, region)?
                .into_iter()
                .map(|s| Component::Radial { profile: profile.clone(), shape: s })
                .collect(),
            Component::Area { profile, shape } => restrict(*shape, region)?
                .into_iter()
                .map(|s| Component::Area { profile: profile.clone(), shape: s })
                .collect(),
            Component::Atoms(a) => {
                let kept: Vec<Atom> = a.iter().copied().filter(|x| region.contains(x.point)).collect();
                if kept.is_empty() {
                    vec![]
                } else {
                    vec![Component::Atoms(kept)]
                }
            }
        })
    }

    /// Density at z (atoms contribute nothing).
    pub fn density(&self, z: Complex64) -> f64 {
        match self {
            Component::Radial { profile, shape } => {
                if shape.is_none_or(|s| s.contains(z)) {
                    profile.density(z.norm())
                } else {
                    0.0
                }
            }
            Component::Area { profile, shape } => {
                if shape.is_none_or(|s| s.contains(z)) {
                    profile.density(z)
                } else {
                    0.0
                }
            }
            Component::Atoms(_) => 0.0,
        }
    }
}

impl MeasureSpec {
    /// Lebesgue area measure dA.
    pub fn lebesgue() -> Self {
        MeasureSpec::Radial { profile: RadialProfile::Constant { value: 1.0 } }
    }

    /// dA restricted to the disc of the given radius.
    pub fn disc(radius: f64) -> Self {
        MeasureSpec::Restriction { base: Box::new(Self::lebesgue()), region: Region::Disc { radius } }
    }

    /// (1 − r)^s dA on the unit disc.
    pub fn gap_power(exponent: f64) -> Self {
        MeasureSpec::Radial { profile: RadialProfile::GapPower { scale: 1.0, exponent } }
    }

    /// dA restricted to a shape.
    pub fn area_on(shape: Shape) -> Self {
        MeasureSpec::Restriction { base: Box::new(Self::lebesgue()), region: shape.into() }
    }

    pub fn restricted_to(self, shape: Shape) -> Self {
        MeasureSpec::Restriction { base: Box::new(self), region: shape.into() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureSpec::Radial { profile } => profile.validate(),
            MeasureSpec::Area { profile } => profile.validate(),
            MeasureSpec::Atoms { atoms } => {
                if atoms.iter().all(|a| a.mass > 0.0 && a.point.re.is_finite() && a.point.im.is_finite()) {
                    Ok(())
                } else {
                    invalid("atom masses must be positive")
                }
            }
            MeasureSpec::Restriction { base, .. } => base.validate(),
            MeasureSpec::Sum { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    pub fn components(&self) -> Result<Vec<Component>> {
        Ok(match self {
            MeasureSpec::Radial { profile } => vec![Component::Radial { profile: profile.clone(), shape: None }],
            MeasureSpec::Area { profile } => vec![Component::Area { profile: profile.clone(), shape: None }],
            MeasureSpec::Atoms { atoms } => vec![Component::Atoms(atoms.clone())],
            MeasureSpec::Restriction { base, region } => {
                let shape = region.shape();
                let mut out = Vec::new();
                for c in base.components()? {
                    out.extend(c.restricted(&shape)?);
                }
                out
            }
            MeasureSpec::Sum { parts } => {
                let mut out = Vec::new();
                for p in parts {
                    out.extend(p.components()?);
                }
                out
            }
        })
    }

    /// Total density at z, excluding atoms.
    pub fn density(&self, z: Complex64) -> Result<f64> {
        Ok(self.components()?.iter().map(|c| c.density(z)).sum())
    }

    /// True when every piece is a radial density over full circles (so T_μ is diagonal).
    pub fn is_radial(&self) -> Result<bool> {
        Ok(self.components()?.iter().all(|c| match c {
            Component::Radial { shape: None, .. } => true,
            Component::Radial { shape: Some(Shape::Polar { t0, t1, .. }), .. } => t1 - t0 >= TWO_PI,
            _ => false,
        }))
    }
}

/// The radial measure dμ = (1/ρ(1/(1 − r))) dA of the counterexample for fast rates.
pub fn radial_counterexample(rho: &RateFunction) -> Result<MeasureSpec> {
    rho.validate()?;
    Ok(MeasureSpec::Radial { profile: RadialProfile::InverseRate { rate: rho.clone() } })
}

/// Nested adaptive integral of f over a shape (r·dr·dθ for polar shapes). Peaks of f at the
/// given points are used as breakpoints in both coordinates.
pub fn integrate_shape(
    shape: &Shape,
    f: &dyn Fn(Complex64) -> f64,
    peaks: &[Complex64],
    tol: Tolerance,
) -> Result<f64> {
    let err: RefCell<Option<BslError>> = RefCell::new(None);
    let inner_tol = Tolerance { rel: tol.rel * 0.1, abs: tol.abs * 0.1, ..tol };
    let value = match *shape {
        Shape::Polar { r0, r1, t0, t1 } => {
            let r_hints: Vec<f64> = peaks.iter().map(|p| p.norm()).collect();
            let t_hints: Vec<f64> = peaks
                .iter()
                .flat_map(|p| {
                    let a = p.arg();
                    [a - TWO_PI, a, a + TWO_PI]
                })
                .collect();
            let t_pts = breakpoints(t0, t1, &t_hints);
            let outer = |r: f64| {
                let q = adaptive_points(|t| f(Complex64::from_polar(r, t)), &t_pts, inner_tol);
                match q {
                    Ok(q) => r * q.value,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            };
            adaptive_points(outer, &breakpoints(r0, r1, &r_hints), tol)?.value
        }
        Shape::Rect { x0, x1, y0, y1 } => {
            let y_pts = breakpoints(y0, y1, &peaks.iter().map(|p| p.im).collect::<Vec<_>>());
            let outer = |x: f64| {
                match adaptive_points(|y| f(Complex64::new(x, y)), &y_pts, inner_tol) {
                    Ok(q) => q.value,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            };
            let x_pts = breakpoints(x0, x1, &peaks.iter().map(|p| p.re).collect::<Vec<_>>());
            adaptive_points(outer, &x_pts, tol)?.value
        }
    };
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(value)
}

/// Domain shape used when a component has no explicit support.
pub fn default_support(cell_or_domain: Option<&Shape>, model: Option<&WeightModel>) -> Shape {
    if let Some(s) = cell_or_domain {
        return *s;
    }
    let r = match model {
        Some(m) if !m.is_bergman() => m.fock_truncation_radius(),
        _ => 1.0,
    };
    Shape::Polar { r0: 0.0, r1: r, t0: 0.0, t1: TWO_PI }
}

/// ln of ∫_{r0}^{r1} g(r) r dr.
pub fn ln_radial_moment(profile: &RadialProfile, r0: f64, r1: f64, extra_power: f64) -> Result<f64> {
    let r1 = profile.support_radius().map_or(r1, |s| r1.min(s));
    if r1 <= r0 {
        return Ok(f64::NEG_INFINITY);
    }
    let (v, _) = ln_integrate(
        |r| profile.ln_density(r) + (1.0 + extra_power) * r.ln(),
        &[r0, r1],
        Tolerance::default(),
    )?;
    Ok(v)
}

fn component_mass(c: &Component, cell: &Shape) -> Result<f64> {
    let mut total = 0.0;
    for piece in c.restricted(cell)? {
        total += match &piece {
            Component::Atoms(a) => a.iter().map(|x| x.mass).sum(),
            Component::Radial { profile, shape: Some(Shape::Polar { r0, r1, t0, t1 }) } => {
                (t1 - t0) * ln_radial_moment(profile, *r0, *r1, 0.0)?.exp()
            }
            Component::Radial { shape: Some(s), .. } | Component::Area { shape: Some(s), .. } => {
                let peaks: Vec<Complex64> = match &piece {
                    Component::Area { profile, .. } => profile.peak().into_iter().collect(),
                    _ => vec![],
                };
                integrate_shape(s, &|z| piece.density(z), &peaks, Tolerance::default())?
            }
            _ => unreachable!("restriction to a cell always yields a bounded shape"),
        };
    }
    Ok(total)
}

/// μ(cell).
pub fn cell_mass(mu: &MeasureSpec, cell: &Cell) -> Result<f64> {
    let mut total = 0.0;
    for c in mu.components()? {
        total += component_mass(&c, &cell.shape)?;
    }
    Ok(total)
}

/// ln μ(cell), exact in log form for radial pieces on polar cells.
pub fn ln_cell_mass(mu: &MeasureSpec, cell: &Cell) -> Result<f64> {
    let comps = mu.components()?;
    let mut logs = Vec::new();
    for c in &comps {
        for piece in c.restricted(&cell.shape)? {
            match &piece {
                Component::Radial { profile, shape: Some(Shape::Polar { r0, r1, t0, t1 }) } => {
                    logs.push((t1 - t0).ln() + ln_radial_moment(profile, *r0, *r1, 0.0)?)
                }
                other => {
                    let m = component_mass(other, &cell.shape)?;
                    logs.push(m.ln())
                }
            }
        }
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMass {
    pub cell: Cell,
    pub mass: f64,
    pub average: f64,
    /// ln(average); finite even when the average underflows.
    pub ln_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMassTable {
    pub entries: Vec<CellMass>,
}

impl CellMassTable {
    /// Masses of all cells, evaluated in parallel.
    pub fn compute(mu: &MeasureSpec, cells: &[Cell]) -> Result<Self> {
        mu.validate()?;
        let entries: Result<Vec<CellMass>> = cells
            .par_iter()
            .map(|cell| {
                let ln_mass = ln_cell_mass(mu, cell)?;
                let mass = ln_mass.exp();
                Ok(CellMass { cell: *cell, mass, average: mass / cell.area, ln_average: ln_mass - cell.area.ln() })
            })
            .collect();
        Ok(CellMassTable { entries: entries? })
    }

    /// Writes (n, j, mass, average).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["n", "j", "mass", "average"])?;
        for e in &self.entries {
            w.write_record([
                e.cell.level.to_string(),
                e.cell.index.to_string(),
                format!("{:e}", e.mass),
                format!("{:e}", e.average),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decreasing rearrangement of cell averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearrangedSequence {
    pub values: Vec<f64>,
    pub ln_values: Vec<f64>,
    pub cells: Vec<Cell>,
    /// Largest average among cells of the deepest level: bounds every unseen term when the
    /// level suprema decrease.
    pub tail_bound: f64,
}

pub fn rearrangement(table: &CellMassTable) -> RearrangedSequence {
    // averages agreeing to about eleven digits count as ties, broken by (level, index)
    let bucket = |x: f64| if x.is_finite() { (x * 1e11).round() as i64 } else { i64::MIN };
    let mut idx: Vec<usize> = (0..table.entries.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ea, eb) = (&table.entries[a], &table.entries[b]);
        bucket(eb.ln_average).cmp(&bucket(ea.ln_average)).then(ea.cell.key().cmp(&eb.cell.key()))
    });
    let deepest = table.entries.iter().map(|e| e.cell.level).max().unwrap_or(0);
    let tail_bound = table
        .entries
        .iter()
        .filter(|e| e.cell.level == deepest)
        .map(|e| e.average)
        .fold(0.0, f64::max);
    let mut values: Vec<f64> = idx.iter().map(|&i| table.entries[i].average).collect();
    let mut ln_values: Vec<f64> = idx.iter().map(|&i| table.entries[i].ln_average).collect();
    for k in 1..values.len() {
        values[k] = values[k].min(values[k - 1]);
        ln_values[k] = ln_values[k].min(ln_values[k - 1]);
    }
    RearrangedSequence {
        values,
        ln_values,
        cells: idx.iter().map(|&i| table.entries[i].cell).collect(),
        tail_bound,
    }
}

/// Sorts plain values nonincreasingly.
pub fn rearrange_values(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Area of the unit disc, for normalisation checks.
pub const DISC_AREA: f64 = PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_cells, locate, LatticeParams};

    #[test]
    fn lebesgue_masses_equal_areas() {
        let cells = enumerate_cells(&LatticeParams::dyadic(5)).unwrap();
        let t = CellMassTable::compute(&MeasureSpec::lebesgue(), &cells).unwrap();
        for e in &t.entries {
            assert!((e.average - 1.0).abs() < 1e-12);
        }
        let r = rearrangement(&t);
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        // ties broken by (level, index)
        assert_eq!(r.cells[0].level, 1);
        assert_eq!(r.cells.last().unwrap().level, 5);
    }

    #[test]
    fn atom_mass() {
        let p = LatticeParams::dyadic(4);
        let mu = MeasureSpec::Atoms { atoms: vec![Atom { point: Complex64::new(0.6, 0.0), mass: 1.0 }] };
        let cell = locate(Complex64::new(0.6, 0.0), &p).unwrap();
        assert_eq!(cell_mass(&mu, &cell).unwrap(), 1.0);
        let other = p.disc_cell(1, 1).unwrap();
        assert_eq!(cell_mass(&mu, &other).unwrap(), 0.0);
        // boundary atom follows the half-open convention
        let edge = MeasureSpec::Atoms { atoms: vec![Atom { point: Complex64::new(0.0, 0.6), mass: 2.0 }] };
        assert_eq!(cell_mass(&edge, &p.disc_cell(1, 1).unwrap()).unwrap(), 2.0);
        assert_eq!(cell_mass(&edge, &p.disc_cell(1, 0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn power_law_average_at_level_three() {
        let p = LatticeParams::dyadic(3);
        let mu = MeasureSpec::gap_power(2.0);
        for j in [0, 5, 15] {
            let cell = p.disc_cell(3, j).unwrap();
            let avg = cell_mass(&mu, &cell).unwrap() / cell.area;
            let s = 4f64.powi(-3);
            assert!(avg >= s / 4.0 && avg <= 4.0 * s, "{avg}");
            // closed form of ∫(1−r)² r dr
            let (a, b) = (1.0 - 0.125, 1.0 - 0.0625);
            let prim = |r: f64| -(1.0 - r).powi(3) / 3.0 + (1.0 - r).powi(4) / 4.0;
            let exact = (prim(b) - prim(a)) * (TWO_PI / 16.0);
            assert!((cell_mass(&mu, &cell).unwrap() - exact).abs() < 1e-10 * exact);
        }
    }

    #[test]
    fn area_density_matches_radial_when_unmodulated() {
        let p = LatticeParams::dyadic(3);
        let flat = MeasureSpec::Area {
            profile: AreaProfile::AngularModulated { exponent: 1.5, amplitude: 0.0, frequency: 3 },
        };
        let radial = MeasureSpec::gap_power(1.5);
        for j in [0, 7] {
            let cell = p.disc_cell(2, j).unwrap();
            let a = cell_mass(&flat, &cell).unwrap();
            let b = cell_mass(&radial, &cell).unwrap();
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn restriction_and_sum() {
        let cell = LatticeParams::dyadic(2).disc_cell(1, 0).unwrap();
        let half = MeasureSpec::disc(0.6);
        let m = cell_mass(&half, &cell).unwrap();
        let exact = 0.5 * (0.36 - 0.25) * (PI / 2.0);
        assert!((m - exact).abs() < 1e-14);
        let sum = MeasureSpec::Sum { parts: vec![half.clone(), half] };
        assert!((cell_mass(&sum, &cell).unwrap() - 2.0 * exact).abs() < 1e-14);
    }

    #[test]
    fn counterexample_profiles() {
        let sq = radial_counterexample(&RateFunction::power(2.0)).unwrap();
        let gp = MeasureSpec::gap_power(2.0);
        for r in [0.1, 0.5, 0.9, 0.999] {
            let z = Complex64::new(r, 0.0);
            assert!((sq.density(z).unwrap() - gp.density(z).unwrap()).abs() < 1e-14);
        }
        let ex = radial_counterexample(&RateFunction::Exp { c: 1.0 }).unwrap();
        assert!((ex.density(Complex64::new(0.5, 0.0)).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        // level averages sit below e^{−2ⁿ}, even where they underflow
        let p = LatticeParams::dyadic(10);
        for n in 4..=10 {
            let cell = p.disc_cell(n, 0).unwrap();
            let ln_avg = ln_cell_mass(&ex, &cell).unwrap() - cell.area.ln();
            assert!(ln_avg <= -(2f64.powi(n as i32)) + 1e-9, "level {n}: {ln_avg}");
            assert!(ln_avg.is_finite());
        }
    }

    #[test]
    fn additivity_over_box_decomposition() {
        let fam = LatticeParams::new(crate::lattice::CellKind::ArcDyadic, 2, 12);
        let mu = MeasureSpec::gap_power(0.5);
        let w = crate::lattice::carleson_box(2, 1).unwrap();
        let mut total = 0.0;
        for l in 2..=12u32 {
            for k in (1u64 << (l - 2))..(2u64 << (l - 2)) {
                total += cell_mass(&mu, &fam.disc_cell(l, k).unwrap()).unwrap();
            }
        }
        let box_mass = cell_mass(&mu, &w).unwrap();
        // residual ring [1 − 2^{−13}, 1) over the arc
        let residual = (PI / 2.0) * ln_radial_moment(&RadialProfile::GapPower { scale: 1.0, exponent: 0.5 }, 1.0 - 2f64.powi(-13), 1.0, 0.0).unwrap().exp();
        assert!((box_mass - total - residual).abs() < 1e-9 * box_mass);
    }

    #[test]
    fn rearrangement_is_a_permutation() {
        let cells = enumerate_cells(&LatticeParams::dyadic(4)).unwrap();
        let mu = MeasureSpec::Area {
            profile: AreaProfile::AngularModulated { exponent: 1.0, amplitude: 0.5, frequency: 2 },
        };
        let t = CellMassTable::compute(&mu, &cells).unwrap();
        let r = rearrangement(&t);
        let mut a: Vec<f64> = t.entries.iter().map(|e| e.average).collect();
        let mut b = r.values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10 * x.abs()));
        assert!(r.values.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(rearrange_values(&[0.2, 0.5, 0.1]), vec![0.5, 0.2, 0.1]);
    }

    #[test]
    fn monotone_in_density() {
        let cells = enumerate_cells(&LatticeParams::dyadic(3)).unwrap();
        let small = MeasureSpec::gap_power(2.0);
        let big = MeasureSpec::gap_power(1.0);
        for c in &cells {
            assert!(cell_mass(&small, c).unwrap() <= cell_mass(&big, c).unwrap());
        }
    }
}
