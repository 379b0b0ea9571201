//! Harmonic measure of boundary boxes by walk-on-spheres.
//!
//! Domains are star-shaped about the origin: near +1 the boundary follows the polar
//! equation 1 − r = γ(|θ|) and beyond the cap angle it closes along a circle.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{PullbackEntry, PullbackMethod, PullbackTable};
use crate::error::{invalid, BslError, Result};
use crate::profile::BoundaryProfile;

/// Maximal chord deviation tolerated when replacing the boundary curve by a polyline.
const CHORD_TOL: f64 = 1e-9;
const SAFETY: f64 = 0.99;
/// Points closer than this to the boundary are treated as boundary points.
const BOUNDARY_GUARD: f64 = 1e-12;
const BLOCK: u64 = 1000;
/// Segments per bounding circle in the distance search.
const CHUNK: usize = 32;

/// Domain whose boundary is 1 − r = γ(|θ|) for |θ| ≤ t₀ and the circle of radius
/// 1 − γ(t₀) beyond.
#[derive(Debug, Clone)]
pub struct PolarDomain {
    pub profile: BoundaryProfile,
    pub cap_angle: f64,
    cap_radius: f64,
    // Polyline vertices on the upper half of the curved part, angles increasing from 0.
    theta: Vec<f64>,
    points: Vec<Complex64>,
    // Bounding circle (center, radius) of each run of CHUNK segments.
    chunks: Vec<(Complex64, f64)>,
    chord_error: f64,
}

impl PolarDomain {
    /// Builds the domain. Without an explicit cap angle, t₀ solves γ(t₀) = 1/2
    /// (or t₀ = π if γ stays below 1/2).
    pub fn new(profile: BoundaryProfile, cap_angle: Option<f64>) -> Result<Self> {
        profile.validate()?;
        let t0 = match cap_angle {
            Some(t) => {
                if !(t > 0.0 && t <= PI) {
                    return invalid(format!("cap angle {t} outside (0, pi]"));
                }
                if !(profile.gamma(t) < 1.0) {
                    return invalid("cap angle leaves no room around the origin (gamma(t0) >= 1)");
                }
                t
            }
            None => {
                if profile.gamma(PI) <= 0.5 {
                    PI
                } else {
                    bisect_increasing(|t| profile.gamma(t) - 0.5, 0.0, PI)
                }
            }
        };
        let radius = |t: f64| 1.0 - profile.gamma(t);
        let point = |t: f64| Complex64::from_polar(radius(t), t);

        // Seed grid: geometric near the contact point, then uniform.
        let mut seeds = vec![0.0];
        let mut t = 1e-12_f64.min(t0 / 2.0);
        while t < t0.min(1e-3) {
            seeds.push(t);
            t *= 2.0;
        }
        let start = *seeds.last().unwrap();
        let uniform = 64;
        for k in 1..=uniform {
            let s = start + (t0 - start) * k as f64 / uniform as f64;
            if s > start {
                seeds.push(s);
            }
        }

        let deviation = |a: f64, b: f64| {
            let (pa, pb) = (point(a), point(b));
            let chord = pb - pa;
            let len = chord.norm();
            [0.25, 0.5, 0.75]
                .iter()
                .map(|&f| {
                    let q = point(a + f * (b - a)) - pa;
                    if len == 0.0 {
                        q.norm()
                    } else {
                        (chord.re * q.im - chord.im * q.re).abs() / len
                    }
                })
                .fold(0.0, f64::max)
        };

        let mut theta = vec![0.0];
        let mut chord_error = 0.0_f64;
        for w in seeds.windows(2) {
            let mut stack = vec![(w[0], w[1])];
            // Depth-first, right half pushed first so vertices come out in order.
            while let Some((a, b)) = stack.pop() {
                let dev = deviation(a, b);
                if dev <= CHORD_TOL / 2.0 || b - a < 1e-15 {
                    chord_error = chord_error.max(dev);
                    theta.push(b);
                } else {
                    let m = 0.5 * (a + b);
                    stack.push((m, b));
                    stack.push((a, m));
                }
            }
        }
        let points: Vec<Complex64> = theta.iter().map(|&t| point(t)).collect();
        let segments = points.len() - 1;
        let chunks = (0..segments.div_ceil(CHUNK))
            .map(|c| {
                let vs = &points[c * CHUNK..=((c + 1) * CHUNK).min(segments)];
                let (mut lo, mut hi) = (vs[0], vs[0]);
                for v in vs {
                    lo = Complex64::new(lo.re.min(v.re), lo.im.min(v.im));
                    hi = Complex64::new(hi.re.max(v.re), hi.im.max(v.im));
                }
                let center = 0.5 * (lo + hi);
                (center, vs.iter().map(|v| (v - center).norm()).fold(0.0, f64::max))
            })
            .collect();
        Ok(Self {
            chunks,
            cap_radius: radius(t0),
            profile,
            cap_angle: t0,
            theta,
            points,
            chord_error: chord_error.max(CHORD_TOL / 2.0),
        })
    }

    /// Boundary radius in direction θ.
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        let t = wrap_angle(theta).abs();
        if t >= self.cap_angle {
            self.cap_radius
        } else {
            1.0 - self.profile.gamma(t)
        }
    }

    pub fn cap_radius(&self) -> f64 {
        self.cap_radius
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    fn raw_distance(&self, z: Complex64) -> f64 {
        let rho = z.norm();
        let phi = z.im.atan2(z.re).abs();
        // The disc of radius cap_radius lies inside the domain.
        if rho <= 0.5 * self.cap_radius {
            return self.cap_radius - rho;
        }
        // Reflect into the upper half-plane; the lower half of the boundary is never closer.
        let z = Complex64::new(z.re, z.im.abs());
        let mut best = self.boundary_radius(phi) - rho;
        if phi >= self.cap_angle {
            best = best.min(self.cap_radius - rho);
        }
        // |z − b| ≥ 2·min(ρ, |b|)·|sin(Δθ/2)| restricts the search to an angular window.
        let m = rho.min(self.cap_radius);
        let window = if best >= 2.0 * m { PI } else { 2.0 * (best / (2.0 * m)).asin() };
        let lo_t = phi - window;
        let hi_t = phi + window;
        if lo_t <= self.cap_angle {
            let last = self.theta.len() - 1;
            let lo = self.theta.partition_point(|&t| t < lo_t).saturating_sub(1);
            let hi = self.theta.partition_point(|&t| t <= hi_t).min(last);
            if hi == last {
                best = best.min((z - self.points[last]).norm());
            }
            if lo < hi {
                // Scan the chunk facing z first so that the pruning bound is tight early.
                let own = (self.theta.partition_point(|&t| t < phi).saturating_sub(1)).clamp(lo, hi - 1) / CHUNK;
                let scan = |c: usize, best: &mut f64| {
                    let (center, radius) = self.chunks[c];
                    if (z - center).norm() - radius >= *best {
                        return;
                    }
                    for k in (c * CHUNK).max(lo)..((c + 1) * CHUNK).min(hi) {
                        *best = best.min(segment_distance(z, self.points[k], self.points[k + 1]));
                    }
                };
                scan(own, &mut best);
                for c in lo / CHUNK..=(hi - 1) / CHUNK {
                    if c != own {
                        scan(c, &mut best);
                    }
                }
            }
        }
        best
    }

    fn certified(&self, d: f64) -> f64 {
        ((d - 2.0 * self.chord_error) * SAFETY).max(0.0)
    }
}

/// Domain on which walks run.
#[derive(Debug, Clone)]
pub enum WosDomain {
    UnitDisc,
    Polar(Box<PolarDomain>),
}

/// Serialisable description of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disc,
    Polar { profile: BoundaryProfile, cap_angle: Option<f64> },
}

impl DomainSpec {
    pub fn build(&self) -> Result<WosDomain> {
        match self {
            DomainSpec::Disc => Ok(WosDomain::UnitDisc),
            DomainSpec::Polar { profile, cap_angle } => {
                Ok(WosDomain::Polar(Box::new(PolarDomain::new(profile.clone(), *cap_angle)?)))
            }
        }
    }
}

impl WosDomain {
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        match self {
            WosDomain::UnitDisc => 1.0,
            WosDomain::Polar(d) => d.boundary_radius(theta),
        }
    }

    fn fast_distance(&self, z: Complex64) -> f64 {
        match self {
            WosDomain::UnitDisc => 1.0 - z.norm(),
            WosDomain::Polar(d) => d.certified(d.raw_distance(z)),
        }
    }

    /// Certified lower bound on the distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, z: Complex64) -> Result<f64> {
        let r = z.norm();
        let theta = z.im.atan2(z.re);
        if !r.is_finite() || r >= self.boundary_radius(theta) - BOUNDARY_GUARD {
            return Err(BslError::PointOutsideDomain { re: z.re, im: z.im });
        }
        let d = self.fast_distance(z);
        if d <= BOUNDARY_GUARD {
            return Err(BslError::PointOutsideDomain { re: z.re, im: z.im });
        }
        Ok(d)
    }
}

/// Walk parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WosConfig {
    pub walks: u64,
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps_abs: f64,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
}

fn default_eps() -> f64 {
    1e-7
}

fn default_step_cap() -> u64 {
    100_000
}

impl WosConfig {
    pub fn new(walks: u64, seed: u64) -> Self {
        Self { walks, seed, eps_abs: default_eps(), step_cap: default_step_cap() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks == 0 {
            return invalid("walks must be positive");
        }
        if !(self.eps_abs > 0.0 && self.eps_abs < 0.1) {
            return invalid("eps_abs must lie in (0, 0.1)");
        }
        if self.step_cap == 0 {
            return invalid("step_cap must be positive");
        }
        Ok(())
    }
}

/// Exit points of a batch of walks, projected radially onto the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSample {
    /// Exit angle in (−π, π] for each completed walk.
    pub angles: Vec<f64>,
    /// 1 − |ψ| of the projected exit point.
    pub gaps: Vec<f64>,
    pub walks: u64,
    pub capped: u64,
}

/// Bernoulli estimate of a harmonic measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WosEstimate {
    pub level: u32,
    pub index: u64,
    pub hits: u64,
    pub walks: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl WosEstimate {
    fn from_hits(level: u32, index: u64, hits: u64, walks: u64) -> Self {
        let p = hits as f64 / walks as f64;
        Self { level, index, hits, walks, estimate: p, stderr: (p * (1.0 - p) / walks as f64).sqrt() }
    }
}

/// Runs `config.walks` walks from `start` and records the projected exit points.
/// Blocks of walks use independent streams of one seed, so the result does not
/// depend on scheduling.
pub fn exit_sample(domain: &WosDomain, start: Complex64, config: &WosConfig) -> Result<ExitSample> {
    config.validate()?;
    domain.distance_to_boundary(start)?;
    let blocks = config.walks.div_ceil(BLOCK);
    let parts: Vec<(Vec<(f64, f64)>, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b);
            let count = BLOCK.min(config.walks - b * BLOCK);
            let mut exits = Vec::with_capacity(count as usize);
            let mut capped = 0;
            for _ in 0..count {
                match single_walk(domain, start, config, &mut rng) {
                    Some(e) => exits.push(e),
                    None => capped += 1,
                }
            }
            (exits, capped)
        })
        .collect();
    let mut angles = Vec::with_capacity(config.walks as usize);
    let mut gaps = Vec::with_capacity(config.walks as usize);
    let mut capped = 0;
    for (exits, c) in parts {
        capped += c;
        for (a, g) in exits {
            angles.push(a);
            gaps.push(g);
        }
    }
    if capped as f64 >= 1e-3 * config.walks as f64 {
        return Err(BslError::StepCapExceeded { capped, walks: config.walks });
    }
    if capped > 0 {
        log::warn!("{capped} of {} walks hit the step cap and were excluded", config.walks);
    }
    Ok(ExitSample { angles, gaps, walks: config.walks, capped })
}

fn single_walk(
    domain: &WosDomain,
    start: Complex64,
    config: &WosConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let mut z = start;
    for _ in 0..config.step_cap {
        let d = domain.fast_distance(z);
        if d < config.eps_abs {
            let theta = z.im.atan2(z.re);
            return Some((theta, 1.0 - domain.boundary_radius(theta)));
        }
        let u: f64 = rng.random::<f64>() * TAU;
        z += Complex64::from_polar(d, u);
    }
    None
}

impl ExitSample {
    /// Number of walks that ended in the arc from `a` to `b` (counterclockwise, radians).
    pub fn arc_hits(&self, a: f64, b: f64) -> u64 {
        let len = b - a;
        if len >= TAU {
            return self.angles.len() as u64;
        }
        self.angles.iter().filter(|&&t| (t - a).rem_euclid(TAU) < len).count() as u64
    }

    pub fn arc_estimate(&self, a: f64, b: f64) -> WosEstimate {
        WosEstimate::from_hits(0, 0, self.arc_hits(a, b), self.walks)
    }

    /// Estimates for every box W_{n,j} = {1 − 2^{−n} ≤ |w| ≤ 1, arg w ∈ [2πj/2ⁿ, 2π(j+1)/2ⁿ)}.
    pub fn box_estimates(&self, level: u32) -> Vec<WosEstimate> {
        let m = 1u64 << level;
        let depth = (-(level as f64)).exp2();
        let mut hits = vec![0u64; m as usize];
        for (&t, &g) in self.angles.iter().zip(&self.gaps) {
            if g <= depth {
                let j = ((t.rem_euclid(TAU) / TAU) * m as f64).floor() as u64;
                hits[j.min(m - 1) as usize] += 1;
            }
        }
        hits.into_iter()
            .enumerate()
            .map(|(j, h)| WosEstimate::from_hits(level, j as u64, h, self.walks))
            .collect()
    }
}

/// Harmonic measures of the level-n boxes seen from `start`.
pub fn walk_on_spheres(
    domain: &WosDomain,
    start: Complex64,
    level: u32,
    config: &WosConfig,
) -> Result<Vec<WosEstimate>> {
    if level > 30 {
        return invalid("level must be at most 30");
    }
    Ok(exit_sample(domain, start, config)?.box_estimates(level))
}

/// Harmonic measure at `z` of the counterclockwise arc (a, b) of the unit circle.
pub fn poisson_arc(z: Complex64, a: f64, b: f64) -> f64 {
    let len = b - a;
    if len >= TAU {
        return 1.0;
    }
    let ea = Complex64::from_polar(1.0, a) - z;
    let eb = Complex64::from_polar(1.0, b) - z;
    let angle = (eb / ea).arg().rem_euclid(TAU);
    angle / PI - len / TAU
}

/// Box masses for levels `first..=last` from a single exit sample, as a pull-back table.
pub fn pullback_wos(sample: &ExitSample, first: u32, last: u32) -> Result<PullbackTable> {
    if first > last || last > 30 {
        return invalid("need first <= last <= 30");
    }
    let mut entries = Vec::new();
    for n in first..=last {
        entries.extend(sample.box_estimates(n).into_iter().filter(|e| e.hits > 0).map(|e| {
            PullbackEntry { level: n, index: e.index, mass: e.estimate, stderr: e.stderr }
        }));
    }
    Ok(PullbackTable { entries, method: PullbackMethod::WalkOnSpheres })
}

/// One row of the box-mass versus bound comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstharRow {
    pub j: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound_value: f64,
    pub ratio: f64,
}

/// Lower-bound pass fraction over one dyadic block of indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockFraction {
    pub k: u32,
    pub size: u64,
    pub passed: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstharReport {
    pub level: u32,
    /// j_n = (2ⁿ/2π)·γ⁻¹(2π/2ⁿ).
    pub j_limit: f64,
    pub fitted_c: f64,
    pub fit_index: u64,
    pub eta: f64,
    pub rows: Vec<EstharRow>,
    /// Every row with j < j_n satisfies estimate − 3·stderr ≤ 4·bound.
    pub upper_holds: bool,
    pub blocks: Vec<BlockFraction>,
    /// Every complete dyadic block below j_n has at least a quarter of its indices passing.
    pub cardinality_holds: bool,
}

impl EstharReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["n", "j", "estimate", "stderr", "bound_value", "ratio"])?;
        for r in &self.rows {
            w.write_record([
                self.level.to_string(),
                r.j.to_string(),
                format!("{:e}", r.estimate),
                format!("{:e}", r.stderr),
                format!("{:e}", r.bound_value),
                format!("{:e}", r.ratio),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compares WoS box masses near the contact point +1 with (C/2ⁿ)·exp[−Γ(2π(j+1)/2ⁿ)].
///
/// Boxes j and 2ⁿ−1−j are mirror images, so their hits are pooled. C is fitted at
/// j = ⌊j_n/2⌋ and η at the first index block.
pub fn esthar_compare(domain: &WosDomain, level: u32, config: &WosConfig) -> Result<EstharReport> {
    if level == 0 || level > 10 {
        return invalid("esthar level must lie in 1..=10");
    }
    let m = 1u64 << level;
    let scale = TAU / m as f64;
    let (j_limit, big_gamma): (f64, Box<dyn Fn(f64) -> Result<f64>>) = match domain {
        WosDomain::UnitDisc => (m as f64 / 2.0, Box::new(|_| Ok(0.0))),
        WosDomain::Polar(d) => {
            let p = d.profile.clone();
            let jl = (m as f64 / TAU) * d.profile.gamma_inverse(scale)?;
            (jl, Box::new(move |t: f64| if t >= 1.0 { Ok(0.0) } else { p.big_gamma(t) }))
        }
    };
    let sample = exit_sample(domain, Complex64::new(0.0, 0.0), config)?;
    let boxes = sample.box_estimates(level);
    let count = (j_limit.ceil() as u64).clamp(1, m / 2);
    let mut rows = Vec::with_capacity(count as usize);
    for j in 0..count {
        let hits = boxes[j as usize].hits + boxes[(m - 1 - j) as usize].hits;
        let e = WosEstimate::from_hits(level, j, hits, 2 * config.walks);
        let bound = (-big_gamma(scale * (j + 1) as f64)?).exp() / m as f64;
        rows.push(EstharRow { j, estimate: e.estimate, stderr: e.stderr, bound_value: bound, ratio: 0.0 });
    }
    let fit_index = ((j_limit / 2.0).floor() as u64).min(count - 1);
    let fit = rows[fit_index as usize];
    if fit.estimate == 0.0 || fit.stderr > 0.5 * fit.estimate {
        return Err(BslError::Undersampled(format!(
            "box {fit_index} at level {level}: estimate {:e} with stderr {:e}",
            fit.estimate, fit.stderr
        )));
    }
    let fitted_c = fit.estimate / fit.bound_value;
    for r in &mut rows {
        r.bound_value *= fitted_c;
        r.ratio = r.estimate / r.bound_value;
    }
    let upper_holds = rows
        .iter()
        .filter(|r| (r.j as f64) < j_limit)
        .all(|r| r.estimate - 3.0 * r.stderr <= 4.0 * r.bound_value);

    // Dyadic blocks [2^k, 2^{k+1}) below j_n, plus the block {0}.
    let mut ranges = vec![(0u32, 0u64, 1u64)];
    let mut k = 0;
    while (2u64 << k) as f64 <= j_limit && (2u64 << k) <= count {
        ranges.push((k + 1, 1u64 << k, 2u64 << k));
        k += 1;
    }
    let (_, a0, b0) = ranges[ranges.len().min(2) - 1];
    let eta = rows[a0 as usize..b0 as usize].iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let blocks: Vec<BlockFraction> = ranges
        .iter()
        .map(|&(k, a, b)| {
            let passed = rows[a as usize..b as usize].iter().filter(|r| r.ratio >= eta).count() as u64;
            BlockFraction { k, size: b - a, passed, fraction: passed as f64 / (b - a) as f64 }
        })
        .collect();
    let cardinality_holds = blocks.iter().all(|b| b.fraction >= 0.25);
    Ok(EstharReport {
        level,
        j_limit,
        fitted_c,
        fit_index,
        eta,
        rows,
        upper_holds,
        blocks,
        cardinality_holds,
    })
}

fn wrap_angle(t: f64) -> f64 {
    let r = (t + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = ((z - a).re * ab.re + (z - a).im * ab.im) / len2;
    (z - (a + ab * s.clamp(0.0, 1.0))).norm()
}

fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}
