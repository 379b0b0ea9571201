//! Weighted spaces of analytic functions with explicit kernels: standard Bergman spaces
//! on the unit disc and Fock spaces on the plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BslError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    StandardBergman,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    UnitDisc,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: SpaceKind,
    alpha: f64,
}

/// A concrete weighted space A²_ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct WeightModel {
    kind: SpaceKind,
    alpha: f64,
}

impl TryFrom<RawModel> for WeightModel {
    type Error = BslError;
    fn try_from(r: RawModel) -> Result<Self> {
        WeightModel::new(r.kind, r.alpha)
    }
}

impl From<WeightModel> for RawModel {
    fn from(m: WeightModel) -> Self {
        RawModel { kind: m.kind, alpha: m.alpha }
    }
}

/// K(z, w) together with the diagonal values K(z, z) and K(w, w).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: Complex64,
    pub norm_sq_at_z: f64,
    pub norm_sq_at_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleValue {
    pub tau_sq: f64,
}

impl WeightModel {
    pub fn new(kind: SpaceKind, alpha: f64) -> Result<Self> {
        match kind {
            SpaceKind::StandardBergman if !(alpha > -1.0 && alpha.is_finite()) => {
                invalid(format!("Bergman weight needs alpha > -1, got {alpha}"))
            }
            SpaceKind::Fock if !(alpha > 0.0 && alpha.is_finite()) => {
                invalid(format!("Fock weight needs alpha > 0, got {alpha}"))
            }
            _ => Ok(WeightModel { kind, alpha }),
        }
    }

    pub fn bergman(alpha: f64) -> Result<Self> {
        Self::new(SpaceKind::StandardBergman, alpha)
    }

    pub fn fock(alpha: f64) -> Result<Self> {
        Self::new(SpaceKind::Fock, alpha)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            SpaceKind::StandardBergman => Domain::UnitDisc,
            SpaceKind::Fock => Domain::Plane,
        }
    }

    pub fn is_bergman(&self) -> bool {
        self.kind == SpaceKind::StandardBergman
    }

    pub fn check_point(&self, z: Complex64) -> Result<()> {
        let ok = z.re.is_finite()
            && z.im.is_finite()
            && (self.kind == SpaceKind::Fock || z.norm_sqr() < 1.0);
        if ok {
            Ok(())
        } else {
            Err(BslError::PointOutsideDomain { re: z.re, im: z.im })
        }
    }

    /// Radius beyond which the Fock weight is negligible at relative level 1e-16.
    pub fn fock_truncation_radius(&self) -> f64 {
        (16.0 * std::f64::consts::LN_10 / self.alpha).sqrt() + 5.0
    }

    /// ω²(z).
    pub fn weight_density(&self, z: Complex64) -> Result<f64> {
        self.check_point(z)?;
        Ok(self.ln_weight_radial(z.norm()).exp())
    }

    /// ln ω² as a function of |z| (−∞ outside the domain).
    pub fn ln_weight_radial(&self, r: f64) -> f64 {
        let a = self.alpha;
        match self.kind {
            SpaceKind::StandardBergman => {
                if r >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let gap = (1.0 - r) * (1.0 + r);
                ((a + 1.0) / PI).ln() + if a == 0.0 { 0.0 } else { a * gap.ln() }
            }
            SpaceKind::Fock => (a / PI).ln() - a * r * r,
        }
    }

    /// ln K(z, z) as a function of |z|.
    pub fn ln_kernel_diag(&self, r: f64) -> f64 {
        match self.kind {
            SpaceKind::StandardBergman => -(2.0 + self.alpha) * ((1.0 - r) * (1.0 + r)).ln(),
            SpaceKind::Fock => self.alpha * r * r,
        }
    }

    /// K(z, w) = K_z(w), holomorphic in w.
    pub fn kernel_value(&self, z: Complex64, w: Complex64) -> Complex64 {
        let t = z.conj() * w;
        match self.kind {
            SpaceKind::StandardBergman => {
                (-(2.0 + self.alpha) * (Complex64::new(1.0, 0.0) - t).ln()).exp()
            }
            SpaceKind::Fock => (self.alpha * t).exp(),
        }
    }

    /// |K_z(w)|² / K(z, z), computed without forming the possibly huge factors.
    pub fn normalized_kernel_sq(&self, z: Complex64, w: Complex64) -> f64 {
        match self.kind {
            SpaceKind::StandardBergman => {
                let lam = 2.0 + self.alpha;
                let gap = (1.0 - z.norm()) * (1.0 + z.norm());
                let d = (Complex64::new(1.0, 0.0) - z.conj() * w).norm_sqr();
                (lam * (gap.ln() - d.ln())).exp()
            }
            SpaceKind::Fock => {
                let t = z.conj() * w;
                (self.alpha * (2.0 * t.re - z.norm_sqr())).exp()
            }
        }
    }

    pub fn kernel(&self, z: Complex64, w: Complex64) -> Result<KernelValue> {
        self.check_point(z)?;
        self.check_point(w)?;
        Ok(KernelValue {
            value: self.kernel_value(z, w),
            norm_sq_at_z: self.ln_kernel_diag(z.norm()).exp(),
            norm_sq_at_w: self.ln_kernel_diag(w.norm()).exp(),
        })
    }

    /// τ²(z) = 1/(ω²(z)‖K_z‖²).
    pub fn tau(&self, z: Complex64) -> Result<ScaleValue> {
        self.check_point(z)?;
        let r = z.norm();
        Ok(ScaleValue { tau_sq: (-(self.ln_weight_radial(r) + self.ln_kernel_diag(r))).exp() })
    }

    /// ln c_n² where e_n = c_n zⁿ is the orthonormal monomial basis.
    pub fn ln_basis_coeff_sq(&self, n: usize) -> f64 {
        let nf = n as f64;
        let a = self.alpha;
        match self.kind {
            SpaceKind::StandardBergman => {
                libm::lgamma(nf + 2.0 + a) - libm::lgamma(nf + 1.0) - libm::lgamma(2.0 + a)
            }
            SpaceKind::Fock => nf * a.ln() - libm::lgamma(nf + 1.0),
        }
    }

    /// c_n with e_n = c_n zⁿ orthonormal.
    pub fn orthonormal_basis_coeff(&self, n: usize) -> f64 {
        (0.5 * self.ln_basis_coeff_sq(n)).exp()
    }
}

/// Binomial coefficient of (1 − x)^{−(2+s)}: Γ(n+2+s)/(n! Γ(2+s)), in log form.
pub fn ln_kernel_series_coeff(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    libm::lgamma(nf + 2.0 + s) - libm::lgamma(nf + 1.0) - libm::lgamma(2.0 + s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn weight_examples() {
        let b0 = WeightModel::bergman(0.0).unwrap();
        assert!((b0.weight_density(c(0.0, 0.0)).unwrap() - 1.0 / PI).abs() < 1e-15);
        let b2 = WeightModel::bergman(2.0).unwrap();
        let v = b2.weight_density(c(0.5, 0.0)).unwrap();
        assert!((v - 27.0 / (16.0 * PI)).abs() < 1e-14);
        let f1 = WeightModel::fock(1.0).unwrap();
        assert!((f1.weight_density(c(0.0, 0.0)).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!(matches!(
            b0.weight_density(c(1.0, 0.0)),
            Err(BslError::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn parameter_validation() {
        assert!(WeightModel::bergman(-1.0).is_err());
        assert!(WeightModel::fock(0.0).is_err());
        let bad: std::result::Result<WeightModel, _> =
            serde_json::from_str(r#"{"kind":"standard-bergman","alpha":-2}"#);
        assert!(bad.is_err());
        let ok: WeightModel = serde_json::from_str(r#"{"kind":"fock","alpha":2}"#).unwrap();
        assert_eq!(ok.domain(), Domain::Plane);
    }

    #[test]
    fn kernel_examples() {
        let b0 = WeightModel::bergman(0.0).unwrap();
        let k = b0.kernel(c(0.0, 0.0), c(0.3, -0.4)).unwrap();
        assert!((k.value - c(1.0, 0.0)).norm() < 1e-15 && (k.norm_sq_at_z - 1.0).abs() < 1e-15);
        let f1 = WeightModel::fock(1.0).unwrap();
        let k = f1.kernel(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((k.value.re - e).abs() < 1e-14 && (k.norm_sq_at_z - e).abs() < 1e-14);
        let b1 = WeightModel::bergman(1.0).unwrap();
        let k = b1.kernel(c(0.5, 0.0), c(0.5, 0.0)).unwrap();
        assert!((k.value.re - 64.0 / 27.0).abs() < 1e-13);
    }

    #[test]
    fn hermitian_symmetry() {
        let b = WeightModel::bergman(0.7).unwrap();
        let (z, w) = (c(0.3, 0.5), c(-0.6, 0.2));
        let d = b.kernel_value(z, w) - b.kernel_value(w, z).conj();
        assert!(d.norm() < 1e-14);
    }

    #[test]
    fn tau_examples() {
        let b0 = WeightModel::bergman(0.0).unwrap();
        assert!((b0.tau(c(0.0, 0.0)).unwrap().tau_sq - PI).abs() < 1e-14);
        let f2 = WeightModel::fock(2.0).unwrap();
        for z in [c(0.0, 0.0), c(1.5, -2.0)] {
            assert!((f2.tau(z).unwrap().tau_sq - PI / 2.0).abs() < 1e-12);
        }
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let t = b0.tau(c(k as f64 / 50.0, 0.0)).unwrap().tau_sq;
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn diagonal_consistency() {
        for m in [WeightModel::bergman(0.0).unwrap(), WeightModel::bergman(2.5).unwrap(), WeightModel::fock(1.3).unwrap()] {
            for z in [c(0.1, 0.2), c(-0.5, 0.6), c(0.0, -0.95)] {
                let k = m.kernel(z, z).unwrap().norm_sq_at_z;
                let prod = k * m.weight_density(z).unwrap() * m.tau(z).unwrap().tau_sq;
                assert!((prod - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_coefficients() {
        let b0 = WeightModel::bergman(0.0).unwrap();
        assert!((b0.orthonormal_basis_coeff(0) - 1.0).abs() < 1e-15);
        assert!((b0.orthonormal_basis_coeff(1) - 2f64.sqrt()).abs() < 1e-14);
        let f1 = WeightModel::fock(1.0).unwrap();
        assert!((f1.orthonormal_basis_coeff(2) - 0.5f64.sqrt()).abs() < 1e-14);
        // log-domain keeps n = 10⁴ finite
        assert!(f1.ln_basis_coeff_sq(10_000).is_finite());
        assert!(b0.ln_basis_coeff_sq(10_000).is_finite());
    }

    /// Polar tensor rule on the disc: GL in r on [0,1] and trapezoid in θ.
    fn disc_rule(nr: usize, nt: usize) -> Vec<(Complex64, f64)> {
        let gl = GaussLegendre::new(nr);
        let mut out = Vec::new();
        for (r, wr) in gl.mapped(0.0, 1.0) {
            for k in 0..nt {
                let t = 2.0 * PI * k as f64 / nt as f64;
                out.push((Complex64::from_polar(r, t), wr * r * 2.0 * PI / nt as f64));
            }
        }
        out
    }

    #[test]
    fn basis_gram_is_identity() {
        for alpha in [0.0, 1.0, 2.0] {
            let m = WeightModel::bergman(alpha).unwrap();
            let rule = disc_rule(64, 128);
            for p in 0..=30usize {
                for q in [p, (p + 3) % 31] {
                    let mut g = Complex64::new(0.0, 0.0);
                    for &(z, w) in &rule {
                        let ep = z.powu(p as u32) * m.orthonormal_basis_coeff(p);
                        let eq = z.powu(q as u32) * m.orthonormal_basis_coeff(q);
                        g += ep * eq.conj() * m.weight_density(z).unwrap() * w;
                    }
                    let expect = if p == q { 1.0 } else { 0.0 };
                    assert!((g - Complex64::new(expect, 0.0)).norm() < 1e-8, "alpha {alpha} p {p} q {q}");
                }
            }
        }
    }

    #[test]
    fn reproducing_identity() {
        let m = WeightModel::bergman(0.0).unwrap();
        let rule = disc_rule(96, 160);
        let z = c(0.3, -0.2);
        let poly = |w: Complex64| {
            (0..=20).fold(Complex64::new(0.0, 0.0), |acc, k| {
                acc * w + Complex64::new(1.0 / (k as f64 + 1.0), 0.1 * k as f64)
            })
        };
        let mut s = Complex64::new(0.0, 0.0);
        for &(w, wt) in &rule {
            s += poly(w) * m.kernel_value(z, w).conj() * m.weight_density(w).unwrap() * wt;
        }
        let exact = poly(z);
        assert!((s - exact).norm() < 1e-8 * exact.norm());
    }
}
