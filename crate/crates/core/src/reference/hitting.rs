//! Hitting and exit probabilities: Brownian closed forms, the Poisson
//! kernel of a ball, and exact lattice values from harmonic solves.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::special::{gauss_legendre, unit_ball_volume};
use crate::error::{Error, Result};
use crate::kernels::srw_kernel;
use crate::lattice::{dist, isqrt, norm2, sq_threshold, Domain};
use crate::solver::green;

fn fnorm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Density of Brownian exit from `C_L` at `z ∈ ∂C_L`, started at `y`.
pub fn poisson_kernel(l: f64, y: &[f64], z: &[f64]) -> Result<f64> {
    let d = y.len();
    if z.len() != d {
        return Err(Error::Domain("dimension mismatch".into()));
    }
    let ny = fnorm(y);
    let nz = fnorm(z);
    if ny >= l || (nz - l).abs() > 1e-9 * l.max(1.0) {
        return Err(Error::Domain(format!("need |y| < L = |z| (|y| = {ny}, |z| = {nz}, L = {l})")));
    }
    let diff: Vec<f64> = y.iter().zip(z).map(|(a, b)| a - b).collect();
    Ok((l * l - ny * ny) / (d as f64 * unit_ball_volume(d) * l * fnorm(&diff).powi(d as i32)))
}

/// `∫_{∂C_L} π^BM_L(y, z) dσ(z)` for `d ∈ {2, 3}` by product quadrature.
pub fn poisson_surface_integral(l: f64, y: &[f64], panels: usize) -> Result<f64> {
    match y.len() {
        2 => Ok(gauss_legendre(
            |t| poisson_kernel(l, y, &[l * t.cos(), l * t.sin()]).unwrap_or(0.0) * l,
            0.0,
            2.0 * PI,
            panels,
        )),
        3 => Ok(gauss_legendre(
            |th| {
                let inner = gauss_legendre(
                    |ph| {
                        let z = [l * th.sin() * ph.cos(), l * th.sin() * ph.sin(), l * th.cos()];
                        poisson_kernel(l, y, &z).unwrap_or(0.0)
                    },
                    0.0,
                    2.0 * PI,
                    panels,
                );
                inner * l * l * th.sin()
            },
            0.0,
            PI,
            panels,
        )),
        d => Err(Error::Domain(format!("surface quadrature not available for d = {d}"))),
    }
}

/// A closed-form probability, or an upper bound when `is_bound` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub is_bound: bool,
}

/// `P^BM_x(T_{C_a(y)} < ∞) = (a / |x - y|)^{d-2}`.
pub fn bm_hit_ball(a: f64, x: &[f64], y: &[f64]) -> Result<Bounded> {
    let d = x.len();
    let r = fnorm(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
    if r < a {
        return Err(Error::Domain(format!("start point inside the ball (|x-y| = {r} < a = {a})")));
    }
    Ok(Bounded { value: (a / r).powi(d as i32 - 2), is_bound: false })
}

/// `K a^{d-2} d_L(y) d_L(x) / |x - y|^d`, an upper bound on hitting `C_a(y)`
/// before leaving `C_L`.
pub fn bm_hit_ball_bound(a: f64, x: &[f64], y: &[f64], l: f64, k: f64) -> Result<Bounded> {
    let d = x.len();
    if fnorm(y) + 2.0 * a > l {
        return Err(Error::Domain("C_2a(y) must lie inside C_L".into()));
    }
    let r = fnorm(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
    let value = k * a.powi(d as i32 - 2) * (l - fnorm(y)) * (l - fnorm(x)) / r.powi(d as i32);
    Ok(Bounded { value, is_bound: true })
}

/// `P_x(T_target < τ_{V_{l_out}})` for simple random walk, by one harmonic solve.
pub fn srw_hit_before_exit(
    l_out: f64,
    x: &[i32],
    target: impl Fn(&[i32]) -> bool,
) -> Result<f64> {
    let d = x.len();
    let n_out = sq_threshold(l_out).ok_or_else(|| Error::Domain("negative radius".into()))?;
    if target(x) {
        return Ok(1.0);
    }
    if norm2(x) > n_out {
        return Ok(0.0);
    }
    let r = isqrt(n_out) as i32;
    let dom = Arc::new(Domain::from_predicate(&vec![-r; d], &vec![r; d], |y| {
        norm2(y) <= n_out && !target(y)
    })?);
    let k = srw_kernel(&dom);
    let n = dom.n_interior();
    let b: Vec<f64> = (0..n)
        .map(|i| {
            let (c, v) = k.row(i);
            c.iter().zip(v).filter(|(&j, _)| target(dom.point(j as usize))).map(|(_, p)| p).sum()
        })
        .collect();
    let u = green(&k)?.solve(&b)?;
    let i = dom.index_of(x).expect("start point is interior");
    Ok(u[i])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HitReport {
    pub a: f64,
    pub distance: f64,
    pub l_out: f64,
    /// `P_x(T_{V_a(y)} < τ_{L_out})` from the harmonic solve
    pub exact: f64,
    /// `(a / |x - y|)^{d-2}`
    pub free_space: f64,
    /// `(a / L_out)^{d-2}`
    pub killing: f64,
}

impl HitReport {
    pub fn ratio(&self) -> f64 {
        self.exact / self.free_space
    }

    /// Smallest `K` with `exact ∈ free·[1 - K/a - killing, 1 + K/a + killing]`.
    pub fn k_relative(&self) -> f64 {
        let q = self.ratio();
        let lo = self.a * (1.0 - self.killing - q);
        let hi = self.a * (q - 1.0 - self.killing);
        lo.max(hi).max(0.0)
    }

    /// Smallest `K` with `exact ∈ [free(1 - K/a) - killing, free(1 + K/a)]`.
    pub fn k_absolute(&self) -> f64 {
        let lo = self.a * (1.0 - (self.exact + self.killing) / self.free_space);
        let hi = self.a * (self.ratio() - 1.0);
        lo.max(hi).max(0.0)
    }
}

/// Exact probability that simple random walk from `x` hits `V_a(y)` before
/// leaving `V_{l_out}`, with the free-space reference values.
pub fn srw_hit_ball_empirical(a: f64, x: &[i32], y: &[i32], l_out: f64) -> Result<HitReport> {
    let d = x.len();
    let na = sq_threshold(a).ok_or_else(|| Error::Domain("negative radius".into()))?;
    let yy = y.to_vec();
    let exact = srw_hit_before_exit(l_out, x, move |z| crate::lattice::dist2(z, &yy) <= na)?;
    let r = dist(x, y);
    Ok(HitReport {
        a,
        distance: r,
        l_out,
        exact,
        free_space: (a / r).min(1.0).powi(d as i32 - 2),
        killing: (a / l_out).powi(d as i32 - 2),
    })
}

/// Main term of `P_x(τ_L < T_{V_l})` for `l < |x| < L`.
pub fn annulus_exit(l: f64, x_norm: f64, big_l: f64, d: usize) -> Result<f64> {
    if !(0.0 < l && l < x_norm && x_norm < big_l) {
        return Err(Error::Domain(format!("need 0 < l < |x| < L (l={l}, |x|={x_norm}, L={big_l})")));
    }
    if d == 2 {
        return Ok((x_norm / l).ln() / (big_l / l).ln());
    }
    let e = 2.0 - d as f64;
    Ok((l.powf(e) - x_norm.powf(e)) / (l.powf(e) - big_l.powf(e)))
}

/// Exact `P_x(τ_L < T_{V_l})` for simple random walk.
pub fn annulus_exit_exact(l: f64, x: &[i32], big_l: f64) -> Result<f64> {
    let nl = sq_threshold(l).ok_or_else(|| Error::Domain("negative radius".into()))?;
    Ok(1.0 - srw_hit_before_exit(big_l, x, move |z| norm2(z) <= nl)?)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShellSum {
    /// `Σ_{y ∈ R_l} (a + |x - y|)^{-m}` with `R_l = V_l \ V_{l-1}`
    pub sum: f64,
    /// the case-split majorant without its constant
    pub majorant: f64,
    pub is_bound: bool,
}

impl ShellSum {
    pub fn ratio(&self) -> f64 {
        self.sum / self.majorant
    }
}

/// Shell sum against its majorant `l^{d-(m+1)}`, `max{log(l/α), 1}` or
/// `α^{d-(m+1)}`, with `α = max{||x| - l|, a}`.
pub fn bound_shell_sum(a: f64, l: f64, m: i32, x: &[i32]) -> Result<ShellSum> {
    if !(a > 0.0 && l >= 1.0 && m >= 1) {
        return Err(Error::Domain("need a > 0, l >= 1, m >= 1".into()));
    }
    let d = x.len() as i32;
    let outer = Domain::ball(&vec![0; x.len()], l)?;
    let inner_sq = sq_threshold(l - 1.0).unwrap_or(-1);
    let sum = outer
        .interior()
        .filter(|y| norm2(y) > inner_sq)
        .map(|y| (a + dist(x, y)).powi(-m))
        .sum();
    let alpha = ((norm2(x) as f64).sqrt() - l).abs().max(a);
    let majorant = if m < d - 1 {
        l.powi(d - (m + 1))
    } else if m == d - 1 {
        (l / alpha).ln().max(1.0)
    } else {
        alpha.powi(d - (m + 1))
    };
    Ok(ShellSum { sum, majorant, is_bound: true })
}
