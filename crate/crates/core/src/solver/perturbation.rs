//! Truncated perturbation expansions around a reference kernel.
//!
//! With `g = g_V(p)`, `G = g_V(P)` and `Δ = 1_V (P - p)`, the resolvent
//! identity gives `G - g = gΔG = GΔg = Σ_{k≥1} (gΔ)^k g`. The rearranged
//! form `G = g Σ_m (R g)^m Σ_k Δ^k` with `R = Σ_{k≥1} Δ^k p` is evaluated
//! with every series cut at the same order.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;

pub const DENSE_PERTURBATION_MAX: usize = 1200;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub n_states: usize,
    pub order: usize,
    /// `‖G - g - gΔG‖_∞`
    pub resolvent_left: f64,
    /// `‖G - g - GΔg‖_∞`
    pub resolvent_right: f64,
    /// `‖(gΔ)^k g‖_∞` for `k = 1..=order`
    pub term_norms: Vec<f64>,
    /// `‖G - g - Σ_{k≤order} (gΔ)^k g‖_∞`
    pub series_residual: f64,
    /// residual of the rearranged expansion cut at `n = 0..=order`
    pub rearranged_residuals: Vec<f64>,
    /// geometric rate fitted to the tail of `term_norms`
    pub contraction: f64,
    pub diverges: bool,
    #[serde(skip)]
    pub truncation: Vec<f64>,
}

fn norm_inf(a: &Mat<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn green_dense(p: &Mat<f64>) -> Mat<f64> {
    let n = p.nrows();
    let a = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - p[(i, j)]);
    let lu: PartialPivLu<f64> = a.partial_piv_lu();
    lu.solve(Mat::<f64>::identity(n, n))
}

/// Log-linear fit of the rate over the second half of a sequence.
fn fitted_rate(v: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = v
        .iter()
        .enumerate()
        .skip(v.len() / 2)
        .filter(|(_, &x)| x > 1e-300)
        .map(|(k, &x)| (k as f64, x.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxy / sxx).exp()
}

/// Expansion of `G = g_V(P)` around `g = g_V(p)` for dense `1_V p`, `1_V P`.
///
/// Both matrices are `n × n` row-major over a state space whose rows outside
/// `V` are zero. Rows need not be stochastic.
pub fn perturbation_dense(p: &[f64], big_p: &[f64], n: usize, order: usize) -> Result<PerturbationReport> {
    if p.len() != n * n || big_p.len() != n * n {
        return Err(Error::Domain("matrix sizes do not match".into()));
    }
    let pm = Mat::<f64>::from_fn(n, n, |i, j| p[i * n + j]);
    let bm = Mat::<f64>::from_fn(n, n, |i, j| big_p[i * n + j]);
    let delta = &bm - &pm;
    let g = green_dense(&pm);
    let gg = green_dense(&bm);
    let diff = &gg - &g;
    let resolvent_left = norm_inf(&(&diff - &g * &delta * &gg));
    let resolvent_right = norm_inf(&(&diff - &gg * &delta * &g));

    let gd = &g * &delta;
    let mut term = g.clone();
    let mut sum = Mat::<f64>::zeros(n, n);
    let mut term_norms = Vec::with_capacity(order);
    for _ in 0..order {
        term = &gd * &term;
        sum += &term;
        term_norms.push(norm_inf(&term));
    }
    let series_residual = norm_inf(&(&diff - &sum));

    let eye = Mat::<f64>::identity(n, n);
    let mut rearranged_residuals = Vec::with_capacity(order + 1);
    let mut dpow = eye.clone();
    let mut dsum = eye.clone();
    for cut in 0..=order {
        if cut > 0 {
            dpow = &dpow * &delta;
            dsum += &dpow;
        }
        // R cut at the same order, then Σ_{m≤cut} (R g)^m
        let r = &(&dsum - &eye) * &pm;
        let rg = &r * &g;
        let mut pw = eye.clone();
        let mut msum = eye.clone();
        for _ in 0..cut {
            pw = &pw * &rg;
            msum += &pw;
        }
        let approx = &g * &msum * &dsum;
        rearranged_residuals.push(norm_inf(&(&gg - &approx)));
    }

    let contraction = fitted_rate(&term_norms);
    let grows = term_norms.windows(2).rev().take(3).any(|w| w[1] > w[0] * (1.0 + 1e-9) && w[1] > 1e-200);
    let diverges = !term_norms.iter().all(|v| v.is_finite()) || contraction >= 1.0 || grows;
    let truncation = (0..n * n).map(|k| sum[(k / n, k % n)]).collect();
    Ok(PerturbationReport {
        n_states: n,
        order,
        resolvent_left,
        resolvent_right,
        term_norms,
        series_residual,
        rearranged_residuals,
        contraction,
        diverges,
        truncation,
    })
}

fn dense_kernel(k: &Kernel) -> Vec<f64> {
    let n = k.domain().len();
    let mut a = vec![0.0; n * n];
    for i in 0..k.n_states() {
        let (c, v) = k.row(i);
        for (&j, &p) in c.iter().zip(v) {
            a[i * n + j as usize] += p;
        }
    }
    a
}

/// Expansion of `g_V(P)` around `g_V(p)` on the closure of a shared domain,
/// truncated at `order`.
pub fn perturbation_truncation(p: &Kernel, big_p: &Kernel, order: usize) -> Result<PerturbationReport> {
    let n = p.domain().len();
    if n > DENSE_PERTURBATION_MAX {
        return Err(Error::Capacity { needed: n, limit: DENSE_PERTURBATION_MAX });
    }
    if big_p.domain().len() != n || big_p.n_states() != p.n_states() {
        return Err(Error::Domain("kernels live on different domains".into()));
    }
    perturbation_dense(&dense_kernel(p), &dense_kernel(big_p), n, order)
}

/// `‖e_x (gΔ)^k g‖_1` for `k = 1..=order`, by repeated transposed solves.
///
/// Row-wise version of the term norms for domains too large for dense
/// matrices; `delta` is a signed kernel such as `P.diff(p)`.
pub fn term_row_norms(g: &super::GreenOperator, delta: &Kernel, x: usize, order: usize) -> Result<Vec<f64>> {
    let n = g.n();
    let len = delta.domain().len();
    let mut u = g.full_row(x)?;
    let mut out = Vec::with_capacity(order);
    for _ in 0..order {
        let mut v = vec![0.0; len];
        for (i, &ui) in u.iter().enumerate().take(n) {
            if ui == 0.0 {
                continue;
            }
            let (c, d) = delta.row(i);
            for (&j, &p) in c.iter().zip(d) {
                v[j as usize] += ui * p;
            }
        }
        let a = g.solve_transpose(&v[..n])?;
        u = g.extend_row(&a);
        for j in n..len {
            u[j] += v[j];
        }
        out.push(u.iter().map(|a| a.abs()).sum());
    }
    Ok(out)
}
