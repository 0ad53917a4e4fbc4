//! Radius fields `ψ = (m_x)` for coarse graining.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hfunc::HFunction;
use crate::error::{Error, Result};
use crate::lattice::{d_l, norm2};

/// `s_L = L / (log L)^3`.
pub fn s_l(l: f64) -> f64 {
    l / l.ln().powi(3)
}

/// `r_L = L / (log L)^15`.
pub fn r_l(l: f64) -> f64 {
    l / l.ln().powi(15)
}

pub const PAPER_SCALE: f64 = 1.0 / 20.0;

/// `h_{L,r}(x) = scale * max{s h(d_L(x)/s), r}`.
///
/// With `s = s_L`, `scale = 1/20` this is the scheme on `V_L`; desk-scale runs
/// override `s`, `r` and `scale` explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HProfile {
    pub l: f64,
    pub s: f64,
    pub r: f64,
    pub scale: f64,
}

impl HProfile {
    pub fn paper(l: f64) -> HProfile {
        HProfile { l, s: s_l(l), r: r_l(l), scale: PAPER_SCALE }
    }

    pub fn with_r(l: f64, r: f64) -> HProfile {
        HProfile { l, s: s_l(l), r, scale: PAPER_SCALE }
    }

    pub fn overridden(l: f64, s: f64, r: f64, scale: f64) -> Result<HProfile> {
        if !(r > 0.0 && r <= s && s <= l && scale > 0.0) {
            return Err(Error::Config(format!(
                "schedule must satisfy 0 < r <= s <= L and scale > 0 (L={l}, s={s}, r={r}, scale={scale})"
            )));
        }
        Ok(HProfile { l, s, r, scale })
    }

    pub fn eval(&self, x: &[i32]) -> f64 {
        self.eval_at_distance(d_l(x, self.l))
    }

    pub fn eval_at_distance(&self, dist: f64) -> f64 {
        let h = HFunction::get();
        self.scale * (self.s * h.eval(dist / self.s)).max(self.r)
    }

    /// Largest value over the ball, attained in the bulk.
    pub fn max_value(&self) -> f64 {
        self.scale * self.s.max(self.r)
    }

    /// The same profile on scale `t`, with `s` and `r` shrunk in proportion.
    pub fn rescaled(&self, t: f64) -> HProfile {
        HProfile { l: t, s: self.s * t / self.l, r: self.r * t / self.l, scale: self.scale }
    }
}

/// `h_eval(L, r, x)` with the default schedule `s_L` and factor `1/20`.
pub fn h_eval(l: f64, r: f64, x: &[i32]) -> f64 {
    HProfile::with_r(l, r).eval(x)
}

pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A field on `U_L = {L/2 < |x| < 2L}` given as a function on R^d.
#[derive(Clone)]
pub struct ClassField {
    pub l: f64,
    pub f: FieldFn,
}

impl fmt::Debug for ClassField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassField {{ l: {} }}", self.l)
    }
}

impl ClassField {
    /// Checks range `(L/10, 5L)` and finite-difference bounds on derivatives
    /// of order 1..4 at every lattice point of `U_L` (step 1/2, tolerance 0.5).
    pub fn validate(&self, d: usize) -> Result<()> {
        let l = self.l;
        let r = (2.0 * l).ceil() as i32;
        let h = 0.5;
        let bound = 10.0 + 0.5;
        let mut x = vec![-r; d];
        loop {
            let n2 = norm2(&x) as f64;
            if n2 > (l / 2.0).powi(2) + 2.0 && n2 < (2.0 * l).powi(2) - 2.0 {
                let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
                let v = (self.f)(&xf);
                if !(v > l / 10.0 && v < 5.0 * l) {
                    return Err(Error::DegenerateField(format!("value {v} outside (L/10, 5L) at {x:?}")));
                }
                for i in 0..d {
                    let g = |k: i32| {
                        let mut y = xf.clone();
                        y[i] += k as f64 * h;
                        (self.f)(&y)
                    };
                    let (fm2, fm1, f0, f1, f2) = (g(-2), g(-1), g(0), g(1), g(2));
                    let derivs = [
                        (f1 - fm1) / (2.0 * h),
                        (f1 - 2.0 * f0 + fm1) / (h * h),
                        (f2 - 2.0 * f1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h),
                        (f2 - 4.0 * f1 + 6.0 * f0 - 4.0 * fm1 + fm2) / (h * h * h * h),
                    ];
                    if let Some(k) = derivs.iter().position(|v| v.abs() > bound) {
                        return Err(Error::DegenerateField(format!(
                            "derivative of order {} along axis {} is {} at {x:?}",
                            k + 1,
                            i + 1,
                            derivs[k]
                        )));
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(());
                }
                x[k] += 1;
                if x[k] <= r {
                    break;
                }
                x[k] = -r;
                k += 1;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum SmoothingField {
    Constant(f64),
    Profile(HProfile),
    Class(ClassField),
}

impl SmoothingField {
    pub fn value(&self, x: &[i32]) -> f64 {
        match self {
            SmoothingField::Constant(m) => *m,
            SmoothingField::Profile(p) => p.eval(x),
            SmoothingField::Class(c) => {
                let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
                (c.f)(&xf)
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            SmoothingField::Constant(m) if !(*m > 0.0) => {
                Err(Error::DegenerateField(format!("constant radius {m} must be positive")))
            }
            SmoothingField::Profile(p) if !(p.r > 0.0 && p.s > 0.0 && p.scale > 0.0) => {
                Err(Error::DegenerateField("profile parameters must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bulk_and_boundary_values() {
        let l = 1e6;
        let p = HProfile::paper(l);
        // deep interior: s_L / 20
        let x = [0, 0, 0];
        assert!((p.eval(&x) - s_l(l) / 20.0).abs() < 1e-9);
        // r_L <= d_L(x) <= s_L / 2 gives d_L(x) / 20
        let dist = s_l(l) / 4.0;
        assert!(dist >= r_l(l));
        let x = [(l - dist).round() as i32, 0, 0];
        let dl = d_l(&x, l);
        assert!((p.eval(&x) - dl / 20.0).abs() < 1e-9);
        // on the sphere: r / 20
        assert!((h_eval(10.0, 3.0, &[10, 0, 0]) - 3.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_along_rays() {
        let p = HProfile::overridden(100.0, 30.0, 2.0, 1.0 / 20.0).unwrap();
        for k in 0..100 {
            let a = p.eval(&[k, 0, 0]);
            let b = p.eval(&[k + 1, 0, 0]);
            assert!((a - b).abs() <= 1.0 / 20.0 + 1e-12);
        }
    }

    #[test]
    fn override_ordering_enforced() {
        assert!(HProfile::overridden(12.0, 4.0, 5.0, 0.5).is_err());
        assert!(HProfile::overridden(12.0, 4.0, 2.0, 0.5).is_ok());
    }

    #[test]
    fn class_field_validation() {
        let ok = ClassField { l: 8.0, f: Arc::new(|_x: &[f64]| 8.0) };
        ok.validate(3).unwrap();
        let steep = ClassField { l: 8.0, f: Arc::new(|x: &[f64]| 8.0 + 3.0 * (5.0 * x[0]).sin()) };
        assert!(steep.validate(3).is_err());
        let out_of_range = ClassField { l: 8.0, f: Arc::new(|_x: &[f64]| 0.5) };
        assert!(out_of_range.validate(3).is_err());
    }
}
