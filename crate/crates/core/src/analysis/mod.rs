//! Exit-law distances, good/bad classification, conditions on environment
//! laws, isotropy diagnostics and time classification.

pub mod badness;
pub mod conditions;
pub mod isotropy;
pub mod metrics;
pub mod smoothed;
pub mod time;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::environment::Environment;
use crate::error::Result;
use crate::kernels::coarse::{mixed_exit, srw_coarse_step, BaseWalk, LocalExit};
use crate::lattice::attainable_sq_norms;

pub use badness::{classify_environment, classify_points, BadnessReport, EnvClass, PointReport, ThresholdMode};
pub use conditions::{c1_threshold, check_c1, f_eta, C1Table};
pub use isotropy::{isotropy_cancellation, symmetrize, IsotropyCancellation};
pub use metrics::{d_metrics, DMetrics};
pub use smoothed::{smoothed_exit_compare, SmoothedExitReport};
pub use time::{time_classify, TimeBadnessReport};

/// Squared radii of the distinct balls `V_t` for `t ∈ [lo, hi]`: the largest
/// attainable squared norm `<= lo^2` followed by every attainable one in
/// `(lo^2, hi^2]`.
pub fn breakpoints(lo: f64, hi: f64, d: usize) -> Vec<i64> {
    let top = (hi * hi + 1e-9).floor() as i64;
    let norms = attainable_sq_norms(d, top.max(0));
    let lo2 = lo * lo + 1e-9;
    let start = norms.partition_point(|&n| (n as f64) <= lo2).saturating_sub(1);
    norms[start..].to_vec()
}

/// Exit laws from the full ball `{y : |y - x|^2 <= n}` for the environment
/// and for simple random walk, over a shared offset table.
pub fn ball_exit_pair(env: &Environment, x: &[i32], n: i64) -> Result<(LocalExit, LocalExit)> {
    let all = |_: &[i32]| true;
    let rw = mixed_exit(BaseWalk::Env(env), x, &[(n, 1.0)], &all)?;
    let srw = mixed_exit(BaseWalk::Srw, x, &[(n, 1.0)], &all)?;
    Ok((rw, srw))
}

/// `||(Π_{V}(x,·) - π_{V}(x,·))||_1` for `V = {y : |y - x|^2 <= n}`.
pub fn ball_exit_tv(env: &Environment, x: &[i32], n: i64) -> Result<f64> {
    Ok(ball_exit_stats(env, x, n)?.tv)
}

/// Exit law distance and mean exit times for one full ball.
#[derive(Clone, Copy, Debug)]
pub struct BallStats {
    pub tv: f64,
    pub mean_env: f64,
    pub mean_srw: f64,
}

pub fn ball_exit_stats(env: &Environment, x: &[i32], n: i64) -> Result<BallStats> {
    if env.is_srw() {
        let all = |_: &[i32]| true;
        let m = mixed_exit(BaseWalk::Srw, x, &[(n, 1.0)], &all)?.mean_time;
        return Ok(BallStats { tv: 0.0, mean_env: m, mean_srw: m });
    }
    let (a, b) = ball_exit_pair(env, x, n)?;
    let mut diff: BTreeMap<u32, f64> = BTreeMap::new();
    for &(k, p) in &a.exits {
        *diff.entry(k).or_default() += p;
    }
    for &(k, p) in &b.exits {
        *diff.entry(k).or_default() -= p;
    }
    Ok(BallStats { tv: diff.values().map(|v| v.abs()).sum(), mean_env: a.mean_time, mean_srw: b.mean_time })
}

/// Uncut coarse SRW steps `π̂_m(0, ·)`, cached by radius.
#[derive(Default)]
pub struct StepCache {
    steps: HashMap<u64, Arc<Vec<(Vec<i32>, f64)>>>,
}

impl StepCache {
    pub fn get(&mut self, m: f64, d: usize) -> Result<Arc<Vec<(Vec<i32>, f64)>>> {
        if let Some(s) = self.steps.get(&m.to_bits()) {
            return Ok(s.clone());
        }
        let s = Arc::new(srw_coarse_step(m, d)?);
        self.steps.insert(m.to_bits(), s.clone());
        Ok(s)
    }
}

/// Signed values on the cube `[-r, r]^d`.
pub struct DenseBox {
    r: i32,
    side: usize,
    pub vals: Vec<f64>,
}

impl DenseBox {
    pub fn new(d: usize, r: i32) -> Self {
        let side = (2 * r + 1) as usize;
        DenseBox { r, side, vals: vec![0.0; side.pow(d as u32)] }
    }

    pub fn offset(&self, z: &[i32]) -> Option<usize> {
        let mut k = 0usize;
        for &c in z {
            if c.abs() > self.r {
                return None;
            }
            k = k * self.side + (c + self.r) as usize;
        }
        Some(k)
    }

    /// Adds `w π̂_m(y, ·)`.
    pub fn add_step(&mut self, y: &[i32], w: f64, step: &[(Vec<i32>, f64)]) {
        let mut z = vec![0i32; y.len()];
        for (o, p) in step {
            for k in 0..y.len() {
                z[k] = y[k] + o[k];
            }
            let k = self.offset(&z).expect("smoothing target inside the box");
            self.vals[k] += w * p;
        }
    }

    pub fn point(&self, k: usize, d: usize) -> Vec<i32> {
        let mut out = vec![0i32; d];
        let mut k = k;
        for i in (0..d).rev() {
            out[i] = (k % self.side) as i32 - self.r;
            k /= self.side;
        }
        out
    }

    pub fn l1(&self) -> f64 {
        self.vals.iter().map(|v| v.abs()).sum()
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Index bitmap as lowercase hex, least significant bit first within each byte.
pub fn bitmap_hex(indices: &[u32], len: usize) -> String {
    let mut bytes = vec![0u8; len.div_ceil(8)];
    for &i in indices {
        bytes[i as usize / 8] |= 1 << (i % 8);
    }
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakpoints_cover_interval() {
        assert_eq!(breakpoints(1.0, 2.0, 3), vec![1, 2, 3, 4]);
        assert_eq!(breakpoints(1.5, 2.0, 3), vec![2, 3, 4]);
        // 7 is not a sum of three squares
        assert_eq!(breakpoints(2.5, 3.0, 3), vec![6, 8, 9]);
    }

    #[test]
    fn bitmap_layout() {
        assert_eq!(bitmap_hex(&[0, 9], 10), "0102");
    }
}
