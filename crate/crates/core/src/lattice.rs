//! Lattices of cells: p-adic annulus sectors, the dyadic family paired with Carleson
//! boxes, the boxes themselves, and unit squares for the plane.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BslError, Result};

pub const TWO_PI: f64 = 2.0 * PI;
/// Hard cap on the number of cells a lattice may enumerate.
pub const MAX_CELLS: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    /// p-adic sectors: radial [1−p^{−n}, 1−p^{−n−1}), arc step 2π/p^{n+1}.
    Dyadic,
    /// Sectors paired with Carleson boxes: radial [1−2^{−n}, 1−2^{−n−1}), arc step 2π/2ⁿ.
    ArcDyadic,
    /// Carleson boxes W_{n,j}: radial [1−2^{−n}, 1), arc step 2π/2ⁿ.
    CarlesonBox,
    /// Unit squares centred on the integer grid.
    PlaneSquare,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Dyadic => "dyadic",
            CellKind::ArcDyadic => "arc-dyadic",
            CellKind::CarlesonBox => "carleson-box",
            CellKind::PlaneSquare => "plane-square",
        }
    }

    pub fn is_disc(&self) -> bool {
        !matches!(self, CellKind::PlaneSquare)
    }
}

/// Region of a cell in polar or Cartesian coordinates; ranges are half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Polar { r0: f64, r1: f64, t0: f64, t1: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Polar { r0, r1, t0, t1 } => 0.5 * (r1 - r0) * (r1 + r0) * (t1 - t0),
            Shape::Rect { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    /// Half-open membership test.
    pub fn contains(&self, z: Complex64) -> bool {
        match *self {
            Shape::Polar { r0, r1, t0, t1 } => {
                let r = z.norm();
                if !(r >= r0 && r < r1) {
                    return false;
                }
                if t1 - t0 >= TWO_PI {
                    return true;
                }
                let t = angle_from(z.arg(), t0);
                t < t1 - t0
            }
            Shape::Rect { x0, x1, y0, y1 } => z.re >= x0 && z.re < x1 && z.im >= y0 && z.im < y1,
        }
    }

    /// Intersection with another shape of the same coordinate type. Angular intervals are
    /// normalised so the result may consist of two polar pieces.
    pub fn intersect(&self, other: &Shape) -> Result<Vec<Shape>> {
        match (*self, *other) {
            (
                Shape::Polar { r0, r1, t0, t1 },
                Shape::Polar { r0: s0, r1: s1, t0: u0, t1: u1 },
            ) => {
                let (a, b) = (r0.max(s0), r1.min(s1));
                if b <= a {
                    return Ok(vec![]);
                }
                Ok(arc_intersection((t0, t1), (u0, u1))
                    .into_iter()
                    .map(|(c, d)| Shape::Polar { r0: a, r1: b, t0: c, t1: d })
                    .collect())
            }
            (
                Shape::Rect { x0, x1, y0, y1 },
                Shape::Rect { x0: a0, x1: a1, y0: b0, y1: b1 },
            ) => {
                let (xa, xb, ya, yb) = (x0.max(a0), x1.min(a1), y0.max(b0), y1.min(b1));
                if xb <= xa || yb <= ya {
                    Ok(vec![])
                } else {
                    Ok(vec![Shape::Rect { x0: xa, x1: xb, y0: ya, y1: yb }])
                }
            }
            _ => invalid("intersection of polar and rectangular regions is not supported"),
        }
    }
}

/// Angle of `t` measured counter-clockwise from `base`, in [0, 2π).
pub fn angle_from(t: f64, base: f64) -> f64 {
    let d = (t - base).rem_euclid(TWO_PI);
    if d >= TWO_PI {
        0.0
    } else {
        d
    }
}

/// Intersection of two arcs given as (start, end) with end − start ≤ 2π.
pub fn arc_intersection(a: (f64, f64), b: (f64, f64)) -> Vec<(f64, f64)> {
    let full_a = a.1 - a.0 >= TWO_PI;
    let full_b = b.1 - b.0 >= TWO_PI;
    if full_a && full_b {
        return vec![(a.0, a.0 + TWO_PI)];
    }
    if full_a {
        return vec![b];
    }
    if full_b {
        return vec![a];
    }
    let mut out = Vec::new();
    let la = a.1 - a.0;
    // shift b so its start lies within one turn after a's start
    let s = a.0 + angle_from(b.0, a.0);
    let lb = b.1 - b.0;
    for shift in [s - TWO_PI, s] {
        let (c, d) = (a.0.max(shift), (a.0 + la).min(shift + lb));
        if d > c {
            out.push((c, d));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellIndex {
    Angular(u64),
    Grid(i64, i64),
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellIndex::Angular(j) => write!(f, "{j}"),
            CellIndex::Grid(i, j) => write!(f, "{i}:{j}"),
        }
    }
}

/// One lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CellKind,
    pub level: u32,
    pub index: CellIndex,
    pub center: Complex64,
    pub area: f64,
    pub shape: Shape,
}

impl Cell {
    /// Sort key for deterministic tie-breaking.
    pub fn key(&self) -> (u32, CellIndex) {
        (self.level, self.index)
    }

    /// Boundary arc of a Carleson box.
    pub fn arc(&self) -> Option<(f64, f64)> {
        match (self.kind, self.shape) {
            (CellKind::CarlesonBox, Shape::Polar { t0, t1, .. }) => Some((t0, t1)),
            _ => None,
        }
    }

    pub fn angular_index(&self) -> Option<u64> {
        match self.index {
            CellIndex::Angular(j) => Some(j),
            CellIndex::Grid(..) => None,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.shape {
            Shape::Polar { r0, r1, t0, t1 } => {
                let chord = 2.0 * r1 * (0.5 * (t1 - t0).min(PI)).sin();
                (r1 - r0).hypot(chord)
            }
            Shape::Rect { x0, x1, y0, y1 } => (x1 - x0).hypot(y1 - y0),
        }
    }
}

fn default_p() -> u32 {
    2
}
fn default_max_level() -> u32 {
    12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    #[serde(default = "default_p")]
    pub p: u32,
    #[serde(default = "default_max_level")]
    pub max_level: u32,
    pub family: CellKind,
    /// First enumerated level; defaults to 1 for disc families and 0 for plane squares.
    #[serde(default)]
    pub min_level: Option<u32>,
}

impl LatticeParams {
    pub fn new(family: CellKind, p: u32, max_level: u32) -> Self {
        LatticeParams { p, max_level, family, min_level: None }
    }

    pub fn dyadic(max_level: u32) -> Self {
        Self::new(CellKind::Dyadic, 2, max_level)
    }

    pub fn with_min_level(mut self, min_level: u32) -> Self {
        self.min_level = Some(min_level);
        self
    }

    pub fn first_level(&self) -> u32 {
        self.min_level.unwrap_or(if self.family.is_disc() { 1 } else { 0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return invalid(format!("lattice base p must be at least 2, got {}", self.p));
        }
        if matches!(self.family, CellKind::ArcDyadic | CellKind::CarlesonBox) && self.p != 2 {
            return invalid("arc-dyadic cells and Carleson boxes are defined for p = 2 only");
        }
        if self.family.is_disc() && self.max_level < 1 {
            return invalid("max_level must be at least 1");
        }
        if self.first_level() > self.max_level {
            return invalid("min_level exceeds max_level");
        }
        let count = self.cell_count();
        if count > MAX_CELLS {
            return Err(BslError::Capacity { requested: count, cap: MAX_CELLS });
        }
        Ok(())
    }

    /// Number of cells at one level.
    pub fn level_count(&self, n: u32) -> u64 {
        match self.family {
            CellKind::Dyadic => (self.p as u64).saturating_pow(n + 1),
            CellKind::ArcDyadic | CellKind::CarlesonBox => 1u64 << n.min(63),
            CellKind::PlaneSquare => {
                if n == 0 {
                    1
                } else {
                    8 * n as u64
                }
            }
        }
    }

    pub fn cell_count(&self) -> u64 {
        (self.first_level()..=self.max_level)
            .map(|n| self.level_count(n))
            .fold(0u64, |a, b| a.saturating_add(b))
    }

    fn radial_range(&self, n: u32) -> (f64, f64) {
        let p = match self.family {
            CellKind::Dyadic => self.p as f64,
            _ => 2.0,
        };
        let r0 = 1.0 - p.powi(-(n as i32));
        match self.family {
            CellKind::CarlesonBox => (r0, 1.0),
            _ => (r0, 1.0 - p.powi(-(n as i32) - 1)),
        }
    }

    /// Cell at (level, angular index) for disc families.
    pub fn disc_cell(&self, n: u32, j: u64) -> Result<Cell> {
        if !self.family.is_disc() {
            return invalid("disc_cell called for a plane lattice");
        }
        let count = self.level_count(n);
        if j >= count {
            return Err(BslError::IndexOutOfRange(format!("j = {j} at level {n} (count {count})")));
        }
        let (r0, r1) = self.radial_range(n);
        let step = TWO_PI / count as f64;
        let (t0, t1) = (step * j as f64, step * (j + 1) as f64);
        let shape = Shape::Polar { r0, r1, t0, t1 };
        Ok(Cell {
            kind: self.family,
            level: n,
            index: CellIndex::Angular(j),
            center: Complex64::from_polar(0.5 * (r0 + r1), 0.5 * (t0 + t1)),
            area: shape.area(),
            shape,
        })
    }

    pub fn plane_cell(&self, i: i64, j: i64) -> Cell {
        let shape = Shape::Rect {
            x0: i as f64 - 0.5,
            x1: i as f64 + 0.5,
            y0: j as f64 - 0.5,
            y1: j as f64 + 0.5,
        };
        Cell {
            kind: CellKind::PlaneSquare,
            level: i.unsigned_abs().max(j.unsigned_abs()) as u32,
            index: CellIndex::Grid(i, j),
            center: Complex64::new(i as f64, j as f64),
            area: 1.0,
            shape,
        }
    }

    /// Cells of one level in angular (or ring) order.
    pub fn level_cells(&self, n: u32) -> Result<Vec<Cell>> {
        if self.family.is_disc() {
            (0..self.level_count(n)).map(|j| self.disc_cell(n, j)).collect()
        } else {
            let m = n as i64;
            let mut out = Vec::new();
            for i in -m..=m {
                for j in -m..=m {
                    if i.abs().max(j.abs()) == m {
                        out.push(self.plane_cell(i, j));
                    }
                }
            }
            Ok(out)
        }
    }

    /// Area of the region covered by the enumerated cells.
    pub fn covered_area(&self) -> f64 {
        match self.family {
            CellKind::PlaneSquare => {
                let s = 2.0 * self.max_level as f64 + 1.0;
                let h = 2.0 * self.first_level() as f64 - 1.0;
                s * s - if self.first_level() == 0 { 0.0 } else { h * h }
            }
            CellKind::CarlesonBox => (self.first_level()..=self.max_level)
                .map(|n| {
                    let (r0, _) = self.radial_range(n);
                    PI * (1.0 - r0 * r0)
                })
                .sum(),
            _ => {
                let (a, _) = self.radial_range(self.first_level());
                let (_, b) = self.radial_range(self.max_level);
                PI * (b * b - a * a)
            }
        }
    }
}

/// All cells in level-major, then angular-index order.
pub fn enumerate_cells(params: &LatticeParams) -> Result<Vec<Cell>> {
    params.validate()?;
    let mut out = Vec::with_capacity(params.cell_count() as usize);
    for n in params.first_level()..=params.max_level {
        out.extend(params.level_cells(n)?);
    }
    Ok(out)
}

/// The Carleson box W_{n,j}.
pub fn carleson_box(n: u32, j: u64) -> Result<Cell> {
    if n > 62 {
        return invalid("box level too deep");
    }
    LatticeParams::new(CellKind::CarlesonBox, 2, n.max(1)).disc_cell(n, j)
}

/// Snaps x to the nearest integer when it is within rounding noise of it.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// The cell containing z (deepest box for the Carleson family).
pub fn locate(z: Complex64, params: &LatticeParams) -> Result<Cell> {
    params.validate()?;
    let outside = || BslError::PointOutsideDomain { re: z.re, im: z.im };
    if !params.family.is_disc() {
        let (i, j) = (snapped_floor(z.re + 0.5) as i64, snapped_floor(z.im + 0.5) as i64);
        let cell = params.plane_cell(i, j);
        if cell.level > params.max_level || cell.level < params.first_level() {
            return Err(outside());
        }
        return Ok(cell);
    }
    let r = z.norm();
    if !(r < 1.0) {
        return Err(outside());
    }
    let base = if params.family == CellKind::Dyadic { params.p as f64 } else { 2.0 };
    let mut n = if r <= 0.0 { 0.0 } else { (-(1.0 - r).ln() / base.ln()).floor().max(0.0) } as i64;
    let lower = |n: i64| 1.0 - base.powi(-(n as i32));
    while n > 0 && lower(n) > r {
        n -= 1;
    }
    while lower(n + 1) <= r {
        n += 1;
    }
    let n = match params.family {
        CellKind::CarlesonBox => n.min(params.max_level as i64),
        _ => n,
    };
    if n < params.first_level() as i64 || n > params.max_level as i64 {
        return Err(outside());
    }
    let n = n as u32;
    let count = params.level_count(n);
    let t = angle_from(z.arg(), 0.0);
    let j = (snapped_floor(t / TWO_PI * count as f64) as u64) % count;
    params.disc_cell(n, j)
}

fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) < a.1.min(b.1) - 1e-13
}

fn arcs_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    arc_intersection(a, b).iter().any(|&(c, d)| d - c > 1e-13)
}

fn inflate(cell: &Cell, b: f64) -> Shape {
    match cell.shape {
        Shape::Polar { r0, r1, t0, t1 } => {
            let (rc, hr) = (0.5 * (r0 + r1), 0.5 * b * (r1 - r0));
            let (tc, ht) = (0.5 * (t0 + t1), (0.5 * b * (t1 - t0)).min(PI));
            Shape::Polar { r0: rc - hr, r1: rc + hr, t0: tc - ht, t1: tc + ht }
        }
        Shape::Rect { x0, x1, y0, y1 } => {
            let (xc, hx) = (0.5 * (x0 + x1), 0.5 * b * (x1 - x0));
            let (yc, hy) = (0.5 * (y0 + y1), 0.5 * b * (y1 - y0));
            Shape::Rect { x0: xc - hx, x1: xc + hx, y0: yc - hy, y1: yc + hy }
        }
    }
}

fn shapes_overlap(a: &Shape, b: &Shape) -> bool {
    match (*a, *b) {
        (Shape::Polar { r0, r1, t0, t1 }, Shape::Polar { r0: s0, r1: s1, t0: u0, t1: u1 }) => {
            intervals_overlap((r0, r1), (s0, s1)) && arcs_overlap((t0, t1), (u0, u1))
        }
        (Shape::Rect { x0, x1, y0, y1 }, Shape::Rect { x0: a0, x1: a1, y0: b0, y1: b1 }) => {
            intervals_overlap((x0, x1), (a0, a1)) && intervals_overlap((y0, y1), (b0, b1))
        }
        _ => false,
    }
}

/// Largest number of inflated cells (each scaled by `inflation` about its centre in the
/// (r, θ) chart) whose interiors meet a single inflated cell, the cell itself included.
/// Cells within two levels of either end of the lattice are excluded as reference cells,
/// since their neighbourhoods are cut off by the truncation.
pub fn multiplicity_report(params: &LatticeParams, inflation: f64) -> Result<usize> {
    let per_level = multiplicity_by_level(params, inflation)?;
    let (lo, hi) = (params.first_level() + 2, params.max_level.saturating_sub(2));
    let interior = per_level.iter().filter(|(l, _)| *l >= lo && *l <= hi).map(|&(_, m)| m).max();
    Ok(interior.unwrap_or_else(|| per_level.iter().map(|&(_, m)| m).max().unwrap_or(0)))
}

/// Per-level maximum of the overlap count used by [`multiplicity_report`].
pub fn multiplicity_by_level(params: &LatticeParams, inflation: f64) -> Result<Vec<(u32, usize)>> {
    if !(1.0..=3.0).contains(&inflation) {
        return invalid(format!("inflation must lie in [1, 3], got {inflation}"));
    }
    let cells = enumerate_cells(params)?;
    let inflated: Vec<Shape> = cells.iter().map(|c| inflate(c, inflation)).collect();
    let first = params.first_level();
    let nlev = (params.max_level - first + 1) as usize;
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); nlev];
    for (i, c) in cells.iter().enumerate() {
        by_level[(c.level - first) as usize].push(i);
    }
    let extent = |s: &Shape| match *s {
        Shape::Polar { r0, r1, .. } => (r0, r1),
        Shape::Rect { x0, x1, y0, y1 } => (x0.min(y0), x1.max(y1)),
    };
    let level_extent: Vec<(f64, f64)> = by_level
        .iter()
        .map(|ids| {
            ids.iter().map(|&i| extent(&inflated[i])).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| {
                (a.0.min(b.0), a.1.max(b.1))
            })
        })
        .collect();
    let mut out: Vec<(u32, usize)> = (0..nlev).map(|l| (first + l as u32, 0)).collect();
    for i in 0..cells.len() {
        let e = extent(&inflated[i]);
        let mut count = 0;
        for (l, ids) in by_level.iter().enumerate() {
            if params.family.is_disc() && !intervals_overlap(e, level_extent[l]) {
                continue;
            }
            count += ids.iter().filter(|&&k| shapes_overlap(&inflated[i], &inflated[k])).count();
        }
        let slot = &mut out[(cells[i].level - first) as usize].1;
        *slot = (*slot).max(count);
    }
    Ok(out)
}

/// Writes cells as CSV with columns (kind, n, j, center_re, center_im, area).
pub fn write_cells_csv<W: Write>(cells: &[Cell], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["kind", "n", "j", "center_re", "center_im", "area"])?;
    for c in cells {
        let (n, j) = match c.index {
            CellIndex::Angular(j) => (c.level as i64, j as i64),
            CellIndex::Grid(i, j) => (i, j),
        };
        w.write_record([
            c.kind.as_str().to_string(),
            n.to_string(),
            j.to_string(),
            format!("{:e}", c.center.re),
            format!("{:e}", c.center.im),
            format!("{:e}", c.area),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_cells() {
        let cells = enumerate_cells(&LatticeParams::dyadic(1)).unwrap();
        assert_eq!(cells.len(), 4);
        for c in &cells {
            let Shape::Polar { r0, r1, t0, t1 } = c.shape else { panic!() };
            assert_eq!((r0, r1), (0.5, 0.75));
            assert!((t1 - t0 - PI / 2.0).abs() < 1e-15);
        }
        let expect = PI * (0.75f64.powi(2) - 0.25) / 4.0;
        assert!((cells[0].area - expect).abs() < 1e-15);
    }

    #[test]
    fn counts() {
        assert_eq!(enumerate_cells(&LatticeParams::dyadic(3)).unwrap().len(), 28);
        let p3 = LatticeParams::new(CellKind::Dyadic, 3, 2);
        assert_eq!(p3.cell_count(), 9 + 27);
        let huge = LatticeParams::dyadic(25);
        assert!(matches!(enumerate_cells(&huge), Err(BslError::Capacity { .. })));
    }

    #[test]
    fn boxes() {
        let w = carleson_box(1, 0).unwrap();
        let Shape::Polar { r0, r1, t0, t1 } = w.shape else { panic!() };
        assert_eq!((r0, r1, t0), (0.5, 1.0, 0.0));
        assert!((t1 - PI).abs() < 1e-15);
        let (a, b) = carleson_box(3, 7).unwrap().arc().unwrap();
        assert!((a - 7.0 * PI / 4.0).abs() < 1e-15 && (b - TWO_PI).abs() < 1e-15);
        assert!(matches!(carleson_box(3, 8), Err(BslError::IndexOutOfRange(_))));
    }

    #[test]
    fn box_to_cell_area_ratio() {
        // A(W)/A(R) = (2 − h)/(1 − 3h/4) with h = 2^{−n}, tending to 2.
        let fam = LatticeParams::new(CellKind::ArcDyadic, 2, 30);
        for n in 1..=30 {
            let w = carleson_box(n, 0).unwrap();
            let r = fam.disc_cell(n, 0).unwrap();
            let h = 0.5f64.powi(n as i32);
            let ratio = w.area / r.area;
            assert!((ratio - (2.0 - h) / (1.0 - 0.75 * h)).abs() < 1e-9);
        }
    }

    #[test]
    fn locate_examples() {
        let p = LatticeParams::dyadic(6);
        let c = locate(Complex64::new(0.6, 0.0), &p).unwrap();
        assert_eq!((c.level, c.index), (1, CellIndex::Angular(0)));
        let c = locate(Complex64::from_polar(0.6, PI), &p).unwrap();
        assert_eq!((c.level, c.index), (1, CellIndex::Angular(2)));
        let c = locate(Complex64::from_polar(0.8, TWO_PI * 3.0 / 8.0), &p).unwrap();
        assert_eq!((c.level, c.index), (2, CellIndex::Angular(3)));
        assert!(locate(Complex64::new(0.2, 0.0), &p).is_err());
        assert!(locate(Complex64::new(0.999, 0.0), &p).is_err());
    }

    #[test]
    fn box_decomposition_is_exact_up_to_residual_ring() {
        let fam = LatticeParams::new(CellKind::ArcDyadic, 2, 12);
        for n in 1..=4u32 {
            for j in 0..(1u64 << n) {
                let w = carleson_box(n, j).unwrap();
                let (a, b) = w.arc().unwrap();
                let mut total = 0.0;
                for l in n..=12 {
                    let lo = j << (l - n);
                    let hi = (j + 1) << (l - n);
                    for k in lo..hi {
                        let r = fam.disc_cell(l, k).unwrap();
                        let Shape::Polar { t0, t1, .. } = r.shape else { panic!() };
                        assert!(t0 >= a - 1e-15 && t1 <= b + 1e-15);
                        total += r.area;
                    }
                }
                let rr = 1.0 - 0.5f64.powi(13);
                let residual = 0.5 * (1.0 - rr * rr) * (b - a);
                assert!((w.area - total - residual).abs() < 1e-12 * w.area);
                assert!(residual <= 2f64.powi(n as i32 - 12) * w.area);
            }
        }
    }

    #[test]
    fn plane_cells() {
        let p = LatticeParams::new(CellKind::PlaneSquare, 2, 3);
        let cells = enumerate_cells(&p).unwrap();
        assert_eq!(cells.len(), 49);
        assert!((cells.iter().map(|c| c.area).sum::<f64>() - p.covered_area()).abs() < 1e-12);
        let c = locate(Complex64::new(1.5, -0.2), &p).unwrap();
        assert_eq!(c.index, CellIndex::Grid(2, 0));
    }

    #[test]
    fn multiplicity() {
        let p = LatticeParams::dyadic(6);
        assert_eq!(multiplicity_report(&p, 1.0).unwrap(), 1);
        let by_level = multiplicity_by_level(&LatticeParams::dyadic(10), 2.0).unwrap();
        let m2: Vec<usize> = by_level.iter().filter(|(l, _)| (4..=8).contains(l)).map(|x| x.1).collect();
        assert!(m2.iter().all(|&m| m == m2[0] && m <= 30), "{m2:?}");
        assert_eq!(multiplicity_report(&LatticeParams::dyadic(10), 2.0).unwrap(), m2[0]);
        let plane = LatticeParams::new(CellKind::PlaneSquare, 2, 4);
        assert_eq!(multiplicity_report(&plane, 1.0).unwrap(), 1);
        assert_eq!(multiplicity_report(&plane, 2.0).unwrap(), 9);
    }

    #[test]
    fn arc_intersection_wraps() {
        let v = arc_intersection((-0.5, 0.5), (TWO_PI - 0.2, TWO_PI + 0.1));
        let total: f64 = v.iter().map(|(a, b)| b - a).sum();
        assert!((total - 0.3).abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let cells = enumerate_cells(&LatticeParams::dyadic(1)).unwrap();
        let mut buf = Vec::new();
        write_cells_csv(&cells, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("kind,n,j,center_re,center_im,area\ndyadic,1,0,"));
        assert_eq!(s.lines().count(), 5);
    }
}
