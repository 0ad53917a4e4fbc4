//! The profile function `h` behind the scheme radii.
//!
//! `h(x) = x` on `[0, 1/2]`, `h = 1` on `[2, ∞)`, and on `(1/2, 2)`
//! `h'(x) = (1 - B((x - 1/2)/1.5))^p` with the smooth step
//! `B(s) = f(s)/(f(s) + f(1-s))`, `f(s) = exp(-1/s)`. The exponent `p` is
//! calibrated so that `h(2) = 1`.

use std::sync::OnceLock;

use crate::reference::special::gauss_legendre;

const TABLE: usize = 4096;

pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let f = |u: f64| (-1.0 / u).exp();
    let a = f(s);
    a / (a + f(1.0 - s))
}

#[derive(Clone, Debug)]
pub struct HFunction {
    pub p_cal: f64,
    cum: Vec<f64>,
}

fn integrand(p: f64) -> impl Fn(f64) -> f64 {
    move |s: f64| (1.0 - smooth_step(s)).powf(p)
}

impl HFunction {
    fn calibrate() -> f64 {
        // ∫_0^1 (1 - B)^p ds = 1/3 makes h(2) = 1/2 + 1.5 * 1/3 = 1
        let target = 1.0 / 3.0;
        let (mut lo, mut hi) = (1.0f64, 64.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = gauss_legendre(integrand(mid), 0.0, 1.0, 256);
            if v > target {
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

    fn build() -> HFunction {
        let p_cal = Self::calibrate();
        let f = integrand(p_cal);
        let mut cum = Vec::with_capacity(TABLE + 1);
        cum.push(0.0);
        let h = 1.0 / TABLE as f64;
        let mut acc = 0.0;
        for k in 0..TABLE {
            acc += gauss_legendre(&f, k as f64 * h, (k + 1) as f64 * h, 1);
            cum.push(acc);
        }
        HFunction { p_cal, cum }
    }

    pub fn get() -> &'static HFunction {
        static H: OnceLock<HFunction> = OnceLock::new();
        H.get_or_init(Self::build)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.5 {
            return x;
        }
        if x >= 2.0 {
            return 1.0;
        }
        let s = (x - 0.5) / 1.5;
        let pos = s * TABLE as f64;
        let k = (pos.floor() as usize).min(TABLE - 1);
        let a = k as f64 / TABLE as f64;
        let partial = gauss_legendre(integrand(self.p_cal), a, s, 1);
        0.5 + 1.5 * (self.cum[k] + partial)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= 0.5 {
            1.0
        } else if x >= 2.0 {
            0.0
        } else {
            (1.0 - smooth_step((x - 0.5) / 1.5)).powf(self.p_cal)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_shape() {
        let h = HFunction::get();
        assert!(h.p_cal > 1.0);
        assert_eq!(h.eval(0.3), 0.3);
        assert_eq!(h.eval(3.0), 1.0);
        assert!((h.eval(2.0 - 1e-12) - 1.0).abs() < 1e-10);
        assert!((h.eval(0.5 + 1e-12) - 0.5).abs() < 1e-10);
        let mut prev = h.eval(0.5);
        let mut prev_slope = 1.0;
        for k in 1..=300 {
            let x = 0.5 + 1.5 * k as f64 / 300.0;
            let v = h.eval(x);
            let slope = (v - prev) / (1.5 / 300.0);
            assert!(v >= prev && (v > prev || x > 1.75), "monotone at {x}");
            assert!(slope <= prev_slope + 1e-9, "concave at {x}");
            assert!((0.0..=1.0 + 1e-9).contains(&slope));
            prev = v;
            prev_slope = slope;
        }
    }
}
