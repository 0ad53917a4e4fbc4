//! The smoothing density `φ` on `(1, 2)` and its CDF.

use std::sync::OnceLock;

use crate::reference::special::{GL8_NODES, GL8_WEIGHTS};

pub const DEFAULT_INTERVALS: usize = 4096;

/// Unnormalized bump `exp(-1/((t-1)(2-t)))` on `(1, 2)`.
pub fn bump(t: f64) -> f64 {
    if t <= 1.0 || t >= 2.0 {
        return 0.0;
    }
    (-1.0 / ((t - 1.0) * (2.0 - t))).exp()
}

fn gl8(a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
        s += w * (bump(mid - half * x) + bump(mid + half * x));
    }
    s * half
}

#[derive(Clone, Debug)]
pub struct Mollifier {
    intervals: usize,
    cum: Vec<f64>,
    z: f64,
}

impl Mollifier {
    pub fn new(intervals: usize) -> Mollifier {
        let h = 1.0 / intervals as f64;
        let mut cum = Vec::with_capacity(intervals + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..intervals {
            acc += gl8(1.0 + k as f64 * h, 1.0 + (k + 1) as f64 * h);
            cum.push(acc);
        }
        Mollifier { intervals, cum, z: acc }
    }

    /// Shared instance with [`DEFAULT_INTERVALS`].
    pub fn standard() -> &'static Mollifier {
        static M: OnceLock<Mollifier> = OnceLock::new();
        M.get_or_init(|| Mollifier::new(DEFAULT_INTERVALS))
    }

    /// Normalization constant `Z = ∫ bump`.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn density(&self, t: f64) -> f64 {
        bump(t) / self.z
    }

    /// `∫_1^t φ`, clamped to `[0, 1]` outside `(1, 2)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 1.0 {
            return 0.0;
        }
        if t >= 2.0 {
            return 1.0;
        }
        let pos = (t - 1.0) * self.intervals as f64;
        let k = (pos.floor() as usize).min(self.intervals - 1);
        let a = 1.0 + k as f64 / self.intervals as f64;
        (self.cum[k] + gl8(a, t)) / self.z
    }

    /// Weight of `[a, b)` under the rescaled density `(1/m) φ(t/m) dt`.
    pub fn weight(&self, a: f64, b: f64, m: f64) -> f64 {
        self.cdf(b / m) - self.cdf(a / m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_and_supported() {
        let m = Mollifier::standard();
        assert_eq!(m.cdf(1.0), 0.0);
        assert_eq!(m.cdf(2.0), 1.0);
        assert!((m.cdf(1.999_999_999) - 1.0).abs() < 1e-10);
        assert!((m.cdf(1.5) - 0.5).abs() < 1e-13);
        assert_eq!(m.density(0.5), 0.0);
        assert_eq!(m.density(2.5), 0.0);
    }

    #[test]
    fn refinement_is_stable() {
        let a = Mollifier::new(2048);
        let b = Mollifier::new(4096);
        assert!((a.z() - b.z()).abs() < 1e-14);
        for k in 0..=100 {
            let t = 1.0 + k as f64 / 100.0;
            assert!((a.cdf(t) - b.cdf(t)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let m = Mollifier::standard();
        let mut last = 0.0;
        for k in 0..=1000 {
            let c = m.cdf(1.0 + k as f64 / 1000.0);
            assert!(c >= last);
            last = c;
        }
    }
}
