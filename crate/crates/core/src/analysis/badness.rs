//! Good and bad points, environment classes and boundary layer statistics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ball_exit_tv, bitmap_hex, breakpoints};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::kernels::coarse::{coarse_grain_env, coarse_grain_srw};
use crate::kernels::{HProfile, SmoothingField};
use crate::lattice::{d_l, dist2, sq_threshold, Domain};

/// What replaces `(log h)^{-9}` style thresholds when `h <= e`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// the smoothed clause is dropped
    #[default]
    Disabled,
    /// the smoothed clause is compared against `δ`
    Delta,
}

/// `(log h)^{exp}` for `h > e`, otherwise per `mode`.
pub fn log_threshold(h: f64, exp: f64, delta: f64, mode: ThresholdMode) -> f64 {
    if h > std::f64::consts::E {
        h.ln().powf(exp)
    } else {
        match mode {
            ThresholdMode::Disabled => f64::INFINITY,
            ThresholdMode::Delta => delta,
        }
    }
}

/// Per-point classification on `V_L` for one coarse graining scheme.
#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub profile: HProfile,
    pub delta: f64,
    pub mode: ThresholdMode,
    /// interior points of `V_L`, lexicographic
    pub points: Vec<Vec<i32>>,
    pub h: Vec<f64>,
    pub d_l: Vec<f64>,
    /// `max_t ||(Π_{V_t(x)} - π_{V_t(x)})(x, ·)||_1` over `t ∈ [h, 2h]`
    pub tv_max: Vec<f64>,
    /// `||(Π̂ - π̂) π̂(x, ·)||_1`, for points with `d_L(x) > 2r`
    pub smoothed: Vec<Option<f64>>,
    /// the smoothed clause threshold `(log h)^{-9}`, infinite when dropped
    pub threshold: Vec<f64>,
    pub good: Vec<bool>,
}

impl PointReport {
    pub fn bad_indices(&self) -> Vec<u32> {
        (0..self.points.len()).filter(|&i| !self.good[i]).map(|i| i as u32).collect()
    }

    pub fn in_bulk(&self, i: usize) -> bool {
        self.d_l[i] > 2.0 * self.profile.r
    }
}

/// Smoothed differences `||(Π̂ - π̂) π̂(x, ·)||_1` for the scheme `field` on
/// `dom`, at the requested interior indices.
pub(crate) fn smoothed_differences(env: &Environment, field: &SmoothingField, dom: &Arc<Domain>, at: &[usize]) -> Result<Vec<f64>> {
    if env.is_srw() {
        return Ok(vec![0.0; at.len()]);
    }
    let cs = coarse_grain_srw(field, dom)?.kernel;
    let ce = coarse_grain_env(env, field, dom)?.kernel;
    Ok(at
        .par_iter()
        .map(|&i| {
            let mut nu = vec![0.0; dom.len()];
            let (c, v) = ce.row(i);
            for (&k, &p) in c.iter().zip(v) {
                nu[k as usize] += p;
            }
            let (c, v) = cs.row(i);
            for (&k, &p) in c.iter().zip(v) {
                nu[k as usize] -= p;
            }
            cs.left_apply(&nu).iter().map(|a| a.abs()).sum()
        })
        .collect())
}

/// Good/bad flags on `V_L` for the scheme `profile` (which carries `L`, `s`, `r`).
pub fn classify_points(env: &Environment, profile: &HProfile, delta: f64, mode: ThresholdMode) -> Result<PointReport> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta = {delta} must be positive")));
    }
    let d = env.d();
    let dom = Arc::new(Domain::ball(&vec![0; d], profile.l)?);
    let points: Vec<Vec<i32>> = dom.interior().map(|x| x.to_vec()).collect();
    let h: Vec<f64> = points.iter().map(|x| profile.eval(x)).collect();
    let dl: Vec<f64> = points.iter().map(|x| d_l(x, profile.l)).collect();
    let tv_max: Vec<f64> = points
        .par_iter()
        .zip(&h)
        .map(|(x, &hx)| {
            let mut worst: f64 = 0.0;
            for n in breakpoints(hx, 2.0 * hx, d) {
                worst = worst.max(ball_exit_tv(env, x, n)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let bulk: Vec<usize> = (0..points.len()).filter(|&i| dl[i] > 2.0 * profile.r).collect();
    let threshold: Vec<f64> = h.iter().map(|&hx| log_threshold(hx, -9.0, delta, mode)).collect();
    let mut smoothed = vec![None; points.len()];
    if bulk.iter().any(|&i| threshold[i].is_finite()) {
        let vals = smoothed_differences(env, &SmoothingField::Profile(*profile), &dom, &bulk)?;
        for (&i, v) in bulk.iter().zip(vals) {
            smoothed[i] = Some(v);
        }
    }
    let good = (0..points.len())
        .map(|i| tv_max[i] <= delta && smoothed[i].is_none_or(|v| v <= threshold[i]))
        .collect();
    Ok(PointReport { profile: *profile, delta, mode, points, h, d_l: dl, tv_max, smoothed, threshold, good })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EnvClass {
    Good,
    /// all bad points lie in `V_{4h(center)}(center)`
    OneBad { level: u8, center: Vec<i32> },
    ManyBad,
}

/// Occupancy of one boundary layer `Λ_j`.
#[derive(Clone, Debug, Serialize)]
pub struct LayerStats {
    pub j: u32,
    /// `[a, b)` range of `d_L`
    pub range: (f64, f64),
    pub box_side: f64,
    /// nonempty boxes `N_j`
    pub n_boxes: usize,
    /// boxes meeting `B^∂` (`Y_j`)
    pub n_bad: usize,
    /// `(log r + j)^{-3/2}`
    pub fraction: f64,
    pub bad: bool,
    /// classes of the greedy colouring, with their sizes
    pub colour_sizes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BadnessReport {
    pub l: f64,
    pub delta: f64,
    pub r: f64,
    pub r_l: f64,
    pub n_points: usize,
    /// `B_L`, interior indices
    pub bad: Vec<u32>,
    /// `B^∂_{L,r} = B_{L,r} ∩ Sh_L(r_L)`
    pub boundary_bad: Vec<u32>,
    /// `B* = B^∂_{L,r} ∪ B_L`
    pub star: Vec<u32>,
    pub bad_bitmap: String,
    pub boundary_bad_bitmap: String,
    pub star_bitmap: String,
    pub class: EnvClass,
    pub layers: Vec<LayerStats>,
    pub bd_bad: bool,
}

/// A center `c ∈ V_L` with `bad ⊂ V_{4h(c)}(c)`, first in lexicographic order.
pub fn enclosing_center(points: &[Vec<i32>], h: &[f64], bad: &[u32]) -> Option<usize> {
    (0..points.len()).find(|&c| {
        let n = sq_threshold(4.0 * h[c]).unwrap_or(0);
        bad.iter().all(|&b| dist2(&points[b as usize], &points[c]) <= n)
    })
}

/// Level 1..=4 of an environment whose bad set is enclosed.
fn level(rep: &PointReport) -> u8 {
    if rep.tv_max.iter().any(|&v| v > rep.delta) {
        return 4;
    }
    for i in 1..=3 {
        let exp = -9.0 + 9.0 * i as f64 / 4.0;
        let ok = (0..rep.points.len()).all(|k| match rep.smoothed[k] {
            Some(v) if rep.in_bulk(k) => v <= log_threshold(rep.h[k], exp, rep.delta, rep.mode),
            _ => true,
        });
        if ok {
            return i;
        }
    }
    4
}

fn set_distance2(a: &[usize], b: &[usize], points: &[Vec<i32>]) -> i64 {
    let mut best = i64::MAX;
    for &i in a {
        for &j in b {
            best = best.min(dist2(&points[i], &points[j]));
        }
    }
    best
}

/// Greedy colouring: boxes within distance `sep` of each other get different colours.
pub fn greedy_colouring(boxes: &[Vec<usize>], points: &[Vec<i32>], sep: f64) -> Vec<usize> {
    let mut colour = vec![usize::MAX; boxes.len()];
    for a in 0..boxes.len() {
        let mut used = Vec::new();
        for b in 0..a {
            if (set_distance2(&boxes[a], &boxes[b], points) as f64) <= sep * sep {
                used.push(colour[b]);
            }
        }
        colour[a] = (0..).find(|c| !used.contains(c)).unwrap();
    }
    colour
}

fn layer_stats(rep_r: &PointReport, r_l: f64, boundary_bad: &[u32]) -> Vec<LayerStats> {
    let r = rep_r.profile.r;
    let j1 = ((r_l / r).ln() / 2f64.ln()).floor().max(0.0) as u32 + 1;
    let mut is_bad = vec![false; rep_r.points.len()];
    for &b in boundary_bad {
        is_bad[b as usize] = true;
    }
    let mut out = Vec::new();
    for j in 0..=j1 {
        let (lo, hi) = if j == 0 { (0.0, 2.0 * r) } else { (r * 2f64.powi(j as i32), r * 2f64.powi(j as i32 + 1)) };
        let side = r * 2f64.powi(j as i32);
        let mut cells: std::collections::BTreeMap<Vec<i64>, Vec<usize>> = Default::default();
        let mut h_max: f64 = 0.0;
        for (i, x) in rep_r.points.iter().enumerate() {
            let dl = rep_r.d_l[i];
            if dl < lo || dl >= hi {
                continue;
            }
            h_max = h_max.max(rep_r.h[i]);
            // I_k = (k side, (k+1) side]
            let key: Vec<i64> = x.iter().map(|&c| (c as f64 / side).ceil() as i64 - 1).collect();
            cells.entry(key).or_default().push(i);
        }
        let boxes: Vec<Vec<usize>> = cells.into_values().collect();
        let n_boxes = boxes.len();
        let n_bad = boxes.iter().filter(|b| b.iter().any(|&i| is_bad[i])).count();
        let base = r.ln() + j as f64;
        let fraction = if base > 0.0 { base.powf(-1.5) } else { f64::INFINITY };
        let colours = greedy_colouring(&boxes, &rep_r.points, 4.0 * h_max);
        let n_colours = colours.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut colour_sizes = vec![0; n_colours];
        for c in colours {
            colour_sizes[c] += 1;
        }
        out.push(LayerStats {
            j,
            range: (lo, hi),
            box_side: side,
            n_boxes,
            n_bad,
            fraction,
            bad: n_boxes > 0 && n_bad as f64 >= fraction * n_boxes as f64,
            colour_sizes,
        });
    }
    out
}

/// Environment class from the `r_L` scheme report, and boundary layer
/// statistics from the constant-`r` scheme report (which may be the same).
pub fn classify_environment(rep_rl: &PointReport, rep_r: &PointReport) -> Result<BadnessReport> {
    if rep_rl.points != rep_r.points {
        return Err(Error::Domain("point reports cover different balls".into()));
    }
    let l = rep_rl.profile.l;
    let r_l = rep_rl.profile.r;
    let bad = rep_rl.bad_indices();
    let boundary_bad: Vec<u32> = rep_r.bad_indices().into_iter().filter(|&i| rep_r.d_l[i as usize] < r_l).collect();
    let mut star: Vec<u32> = bad.iter().chain(&boundary_bad).copied().collect();
    star.sort_unstable();
    star.dedup();
    let class = if bad.is_empty() {
        EnvClass::Good
    } else {
        match enclosing_center(&rep_rl.points, &rep_rl.h, &bad) {
            Some(c) => EnvClass::OneBad { level: level(rep_rl), center: rep_rl.points[c].clone() },
            None => EnvClass::ManyBad,
        }
    };
    let layers = layer_stats(rep_r, r_l, &boundary_bad);
    let n = rep_rl.points.len();
    Ok(BadnessReport {
        l,
        delta: rep_rl.delta,
        r: rep_r.profile.r,
        r_l,
        n_points: n,
        bad_bitmap: bitmap_hex(&bad, n),
        boundary_bad_bitmap: bitmap_hex(&boundary_bad, n),
        star_bitmap: bitmap_hex(&star, n),
        bad,
        boundary_bad,
        star,
        class,
        bd_bad: layers.iter().any(|s| s.bad),
        layers,
    })
}
