//! Gamma function and ball constants.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos approximation, reflection for x < 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `α(d)`, the volume of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Surface area `d α(d)` of the unit sphere in R^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// `c(d) = (2 π^{d/2})^{-1} ∫_0^∞ t^{-d/2} e^{-1/t} dt = Γ(d/2 - 1) / (2 π^{d/2})`.
pub fn green_constant(d: usize) -> f64 {
    assert!(d >= 3, "green constant needs d >= 3");
    gamma(d as f64 / 2.0 - 1.0) / (2.0 * PI.powf(d as f64 / 2.0))
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes Chebyshev fit, |err| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Two-sided normal quantile for a confidence level, e.g. 0.95 -> 1.96.
pub fn normal_quantile(p: f64) -> f64 {
    // Acklam's rational approximation, refined by one Newton step
    let a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02, 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00];
    let b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02, 6.680131188771972e+01, -1.328068155288572e+01];
    let c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00, -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00];
    let dd = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    let pl = 0.02425;
    let x = if p < pl {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0)
    } else if p <= 1.0 - pl {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0)
    };
    x
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Composite Gauss-Legendre rule on `[a, b]` with `panels` panels of 8 nodes.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            s += w * (f(mid - 0.5 * h * x) + f(mid + 0.5 * h * x));
        }
    }
    s * 0.5 * h
}

pub const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
pub const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma(1.5) - 0.5 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-13);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-13);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn green_constant_d3_is_one_over_two_pi() {
        let c3 = green_constant(3);
        assert!((c3 - 1.0 / (2.0 * PI)).abs() < 1e-13);
        // ∫_0^∞ t^{-3/2} e^{-1/t} dt after t = s^{-2}
        let integral = gauss_legendre(|s: f64| 2.0 * (-s * s).exp(), 0.0, 10.0, 200);
        let q = integral / (2.0 * PI.powf(1.5));
        assert!((q - c3).abs() < 1e-6, "{q} vs {c3}");
    }

    #[test]
    fn normal_functions() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-4);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }
}
