//! Smoothed exit laws `φ_{L,m} = π_L π̂_m` against their Brownian analogue.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{DenseBox, StepCache};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::kernels::mollifier::Mollifier;
use crate::kernels::{rwre_kernel, srw_kernel};
use crate::lattice::{isqrt, sq_threshold, Domain};
use crate::reference::special::{GL8_NODES, GL8_WEIGHTS};
use crate::solver::{exit_measure, green};

/// Quadrature resolution for the Brownian density in `d = 3`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BmQuadrature {
    /// Gauss-Legendre panels (8 nodes each) in `u = cos θ`
    pub panels: usize,
    /// equispaced azimuth nodes
    pub azimuth: usize,
}

impl Default for BmQuadrature {
    fn default() -> Self {
        BmQuadrature { panels: 4, azimuth: 48 }
    }
}

/// `φ^BM_{L,m}(x, z)` in `d = 3`, as a density in `z`.
///
/// The surface integral over `y ∈ ∂C_L` is taken in a frame whose polar axis
/// is `z`, where `|z - y|` depends on the polar coordinate only; the `u`
/// range is cut to the band `m < |z - y| < 2m`.
pub fn bm_smoothed_density(l: f64, m: f64, x: &[f64; 3], z: &[f64; 3], q: BmQuadrature) -> f64 {
    let mol = Mollifier::standard();
    let area = 4.0 * PI;
    let x2 = x.iter().map(|a| a * a).sum::<f64>();
    let pois = |y: &[f64; 3]| {
        let dd = (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>();
        (l * l - x2) / (area * l * dd.powf(1.5))
    };
    let step = |r: f64| mol.density(r / m) / m / (area * r * r);
    let rho = z.iter().map(|a| a * a).sum::<f64>().sqrt();
    if rho < 1e-12 {
        return step(l);
    }
    let e3 = [z[0] / rho, z[1] / rho, z[2] / rho];
    // orthonormal completion
    let pick = if e3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = pick[0] * e3[0] + pick[1] * e3[1] + pick[2] * e3[2];
    let mut e1 = [pick[0] - dot * e3[0], pick[1] - dot * e3[1], pick[2] - dot * e3[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [e3[1] * e1[2] - e3[2] * e1[1], e3[2] * e1[0] - e3[0] * e1[2], e3[0] * e1[1] - e3[1] * e1[0]];
    let lo = ((l * l + rho * rho - 4.0 * m * m) / (2.0 * l * rho)).max(-1.0);
    let hi = ((l * l + rho * rho - m * m) / (2.0 * l * rho)).min(1.0);
    if lo >= hi {
        return 0.0;
    }
    let h = (hi - lo) / q.panels as f64;
    let da = 2.0 * PI / q.azimuth as f64;
    let mut total = 0.0;
    for p in 0..q.panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (node, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            for u in [mid - 0.5 * h * node, mid + 0.5 * h * node] {
                let r = (l * l + rho * rho - 2.0 * l * rho * u).max(0.0).sqrt();
                let k = step(r);
                if k == 0.0 {
                    continue;
                }
                let s = (1.0 - u * u).max(0.0).sqrt();
                let mut ring = 0.0;
                for a in 0..q.azimuth {
                    let (sa, ca) = (a as f64 * da).sin_cos();
                    let y: [f64; 3] = std::array::from_fn(|c| l * (s * ca * e1[c] + s * sa * e2[c] + u * e3[c]));
                    ring += pois(&y);
                }
                total += w * 0.5 * h * k * ring * da;
            }
        }
    }
    total * l * l
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothedPoint {
    pub x: Vec<i32>,
    /// `Σ_z φ_{L,m}(x, z)`
    pub lattice_mass: f64,
    /// `Σ_z φ^BM_{L,m}(x, z)` over the lattice
    pub bm_mass: f64,
    pub sup_diff: f64,
    pub argmax: Vec<i32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothedExitReport {
    pub l: f64,
    pub m: f64,
    pub srw: bool,
    pub quadrature: BmQuadrature,
    pub points: Vec<SmoothedPoint>,
    pub sup_diff: f64,
    /// `sup_diff * L^{d+1/4}`
    pub scaled: f64,
}

/// Default starting points: `0`, `L/4 e_1`, `L/2 e_1`.
pub fn default_starts(l: f64) -> Vec<Vec<i32>> {
    let mut out: Vec<Vec<i32>> = [0.0, 0.25, 0.5].iter().map(|f| vec![(f * l).round() as i32, 0, 0]).collect();
    out.dedup();
    out
}

/// `sup_z |φ_{L,m}(x, z) - φ^BM_{L,m}(x, z)|` for each `x` in `starts`,
/// with `π_L` from simple random walk (`env = None`) or an environment.
pub fn smoothed_exit_compare(
    env: Option<&Environment>,
    l: f64,
    m: f64,
    starts: &[Vec<i32>],
    q: BmQuadrature,
) -> Result<SmoothedExitReport> {
    let d = 3;
    if !(m > 0.0) {
        return Err(Error::DegenerateField(format!("radius {m} must be positive")));
    }
    let dom = Arc::new(Domain::ball(&[0, 0, 0], l)?);
    let srw = env.is_none_or(|e| e.is_srw());
    let kernel = match env {
        Some(e) if !e.is_srw() => rwre_kernel(&e.materialize(&dom), &dom)?,
        _ => srw_kernel(&dom),
    };
    let g = green(&kernel)?;
    let step = StepCache::default().get(m, d)?;
    let reach = isqrt(sq_threshold(l).unwrap_or(0)) as i32 + 2 + (2.0 * m).ceil() as i32;
    let mut points = Vec::new();
    for x in starts {
        if !dom.is_interior(x) {
            return Err(Error::Domain(format!("start {x:?} outside V_{l}")));
        }
        let ex = exit_measure(&g, x)?.dense(dom.len());
        let mut bx = DenseBox::new(d, reach);
        for j in dom.n_interior()..dom.len() {
            if ex[j] != 0.0 {
                bx.add_step(dom.point(j), ex[j], &step);
            }
        }
        // with SRW and x on the first axis both sides are invariant under
        // sign flips and exchange of the other two axes
        let on_axis = srw && x[1] == 0 && x[2] == 0;
        let xf = [x[0] as f64, x[1] as f64, x[2] as f64];
        let (lo2, hi2) = ((l - 2.0 * m - 1.0).max(0.0).powi(2), (l + 2.0 * m + 1.0).powi(2));
        let cells: Vec<(usize, f64)> = (0..bx.vals.len())
            .filter_map(|k| {
                let z = bx.point(k, d);
                let r2 = z.iter().map(|&c| (c as f64).powi(2)).sum::<f64>();
                if bx.vals[k] == 0.0 && !(r2 > lo2 && r2 < hi2) {
                    return None;
                }
                if on_axis && !(z[1] >= z[2] && z[2] >= 0) {
                    return None;
                }
                let mult = if on_axis {
                    let flips = if z[1] != 0 { 2.0 } else { 1.0 } * if z[2] != 0 { 2.0 } else { 1.0 };
                    flips * if z[1] != z[2] { 2.0 } else { 1.0 }
                } else {
                    1.0
                };
                Some((k, mult))
            })
            .collect();
        let vals: Vec<(f64, f64)> = cells
            .par_iter()
            .map(|&(k, _)| {
                let z = bx.point(k, d);
                let zf = [z[0] as f64, z[1] as f64, z[2] as f64];
                (bx.vals[k], bm_smoothed_density(l, m, &xf, &zf, q))
            })
            .collect();
        let mut sup_diff = 0.0;
        let mut argmax = vec![0; d];
        let mut lattice_mass = 0.0;
        let mut bm_mass = 0.0;
        for (&(k, mult), &(a, b)) in cells.iter().zip(&vals) {
            lattice_mass += mult * a;
            bm_mass += mult * b;
            if (a - b).abs() > sup_diff {
                sup_diff = (a - b).abs();
                argmax = bx.point(k, d);
            }
        }
        points.push(SmoothedPoint { x: x.clone(), lattice_mass, bm_mass, sup_diff, argmax });
    }
    let sup_diff = points.iter().map(|p| p.sup_diff).fold(0.0, f64::max);
    Ok(SmoothedExitReport { l, m, srw, quadrature: q, points, sup_diff, scaled: sup_diff * l.powf(d as f64 + 0.25) })
}
