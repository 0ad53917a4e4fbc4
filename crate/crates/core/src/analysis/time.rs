//! Space-good and time-good points, and the sojourn bound event.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::badness::{classify_points, enclosing_center, log_threshold, smoothed_differences, ThresholdMode};
use super::conditions::f_eta;
use super::{ball_exit_stats, bitmap_hex, breakpoints, BallStats};
use crate::environment::Environment;
use crate::error::Result;
use crate::kernels::coarse::coarse_grain_env;
use crate::kernels::field::ClassField;
use crate::kernels::{HProfile, SmoothingField};
use crate::lattice::{dist, Domain};

#[derive(Clone, Debug, Serialize)]
pub struct TimeBadnessReport {
    pub profile: HProfile,
    pub eta: f64,
    pub delta: f64,
    pub n_points: usize,
    /// `B^sp_L`, interior indices of `V_L`
    pub space_bad: Vec<u32>,
    /// `B^tm_L`
    pub time_bad: Vec<u32>,
    pub space_bad_bitmap: String,
    pub time_bad_bitmap: String,
    pub good_sp: bool,
    pub good_tm: bool,
    pub one_bad_tm: bool,
    pub many_bad_tm: bool,
    /// `Λ_L(x) <= (log L)^{-2} L^2` for all `x`
    pub not_too_bad: bool,
    pub lambda_max: f64,
    pub not_too_bad_bound: f64,
    /// `f_η(s_L)`
    pub f_eta_s: f64,
}

struct Memo<'a> {
    env: &'a Environment,
    cache: HashMap<(Vec<i32>, i64), BallStats>,
}

impl Memo<'_> {
    fn get(&mut self, y: &[i32], n: i64) -> Result<BallStats> {
        if let Some(s) = self.cache.get(&(y.to_vec(), n)) {
            return Ok(*s);
        }
        let s = ball_exit_stats(self.env, y, n)?;
        self.cache.insert((y.to_vec(), n), s);
        Ok(s)
    }
}

fn within(s: &BallStats, f: f64) -> bool {
    s.mean_env >= (1.0 - f) * s.mean_srw && s.mean_env <= (1.0 + f) * s.mean_srw
}

/// The scheme on `V_t(x)`: `y ↦ h_t(t - |y - x|)` with the rescaled schedule.
fn inner_field(prof: HProfile, x: &[i32]) -> SmoothingField {
    let c: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let t = prof.l;
    SmoothingField::Class(ClassField {
        l: t,
        f: Arc::new(move |y: &[f64]| {
            let r = y.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prof.eval_at_distance(t - r)
        }),
    })
}

/// Second level checks at a bulk point: `(space ok, time ok)`.
fn second_level(
    memo: &mut Memo<'_>,
    profile: &HProfile,
    x: &[i32],
    hx: f64,
    delta: f64,
    eta: f64,
    mode: ThresholdMode,
) -> Result<(bool, bool)> {
    let d = x.len();
    let mut space = true;
    let mut time = true;
    let bps = breakpoints(hx, 2.0 * hx, d);
    for &n in &bps {
        // inner schemes are evaluated at the left end of each constant piece
        let t = (n as f64).sqrt().max(hx);
        let prof_t = profile.rescaled(t);
        let f_t = f_eta(eta, prof_t.s);
        let dom = Arc::new(Domain::ball_sq(x, n)?);
        let mut smoothed_at = Vec::new();
        for (i, y) in dom.interior().enumerate() {
            let dy = t - dist(y, x);
            let hy = prof_t.eval_at_distance(dy);
            for m in breakpoints(hy, 2.0 * hy, d) {
                let s = memo.get(y, m)?;
                space &= s.tv <= delta;
                time &= within(&s, f_t);
            }
            if dy > 2.0 * prof_t.r && log_threshold(hy, -9.0, delta, mode).is_finite() {
                smoothed_at.push((i, log_threshold(hy, -9.0, delta, mode)));
            }
        }
        if space && !smoothed_at.is_empty() {
            let idx: Vec<usize> = smoothed_at.iter().map(|p| p.0).collect();
            let vals = smoothed_differences(memo.env, &inner_field(prof_t, x), &dom, &idx)?;
            space &= vals.iter().zip(&smoothed_at).all(|(v, p)| *v <= p.1);
        }
        if !space && !time {
            break;
        }
    }
    Ok((space, time))
}

/// Space and time classification on `V_L` for the scheme `profile`.
pub fn time_classify(
    env: &Environment,
    profile: &HProfile,
    eta: f64,
    delta: f64,
    mode: ThresholdMode,
) -> Result<TimeBadnessReport> {
    let base = classify_points(env, profile, delta, mode)?;
    let d = env.d();
    let dom = Arc::new(Domain::ball(&vec![0; d], profile.l)?);
    let f_s = f_eta(eta, profile.s);
    let flags: Vec<(bool, bool)> = (0..base.points.len())
        .into_par_iter()
        .map(|i| {
            let x = &base.points[i];
            let hx = base.h[i];
            let mut memo = Memo { env, cache: HashMap::new() };
            let mut time = true;
            for n in breakpoints(hx, 2.0 * hx, d) {
                time &= within(&memo.get(x, n)?, f_s);
            }
            let mut space = base.good[i];
            if base.d_l[i] > 2.0 * profile.s {
                let (sp, tm) = second_level(&mut memo, profile, x, hx, delta, eta, mode)?;
                space &= sp;
                time &= tm;
            }
            Ok((space, time))
        })
        .collect::<Result<_>>()?;
    let n = base.points.len();
    let space_bad: Vec<u32> = (0..n).filter(|&i| !flags[i].0).map(|i| i as u32).collect();
    let time_bad: Vec<u32> = (0..n).filter(|&i| !flags[i].1).map(|i| i as u32).collect();
    let one_bad_tm = time_bad.is_empty() || enclosing_center(&base.points, &base.h, &time_bad).is_some();
    let lambda = coarse_grain_env(env, &SmoothingField::Profile(*profile), &dom)?.sojourn;
    let lambda_max = lambda.iter().copied().fold(0.0, f64::max);
    let bound = profile.l.ln().powi(-2) * profile.l * profile.l;
    Ok(TimeBadnessReport {
        profile: *profile,
        eta,
        delta,
        n_points: n,
        space_bad_bitmap: bitmap_hex(&space_bad, n),
        time_bad_bitmap: bitmap_hex(&time_bad, n),
        good_sp: space_bad.is_empty(),
        good_tm: time_bad.is_empty(),
        one_bad_tm,
        many_bad_tm: !one_bad_tm,
        space_bad,
        time_bad,
        not_too_bad: lambda_max <= bound,
        lambda_max,
        not_too_bad_bound: bound,
        f_eta_s: f_s,
    })
}

/// `d/(1 - 2εd) (L+1)^2`, the mean exit time bound for environments balanced
/// along one axis.
pub fn balanced_bound(d: usize, eps: f64, l: f64) -> f64 {
    d as f64 / (1.0 - 2.0 * eps * d as f64) * (l + 1.0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, Family, FamilySpec};

    #[test]
    fn srw_is_space_and_time_good() {
        let env = sample_environment(FamilySpec::new(3, Family::Srw, 0.0).unwrap(), 1).unwrap();
        let p = HProfile::overridden(8.0, 2.0, 1.0, 0.5).unwrap();
        let r = time_classify(&env, &p, 0.3, 1e-9, ThresholdMode::Delta).unwrap();
        assert!(r.good_sp && r.good_tm && r.one_bad_tm && r.not_too_bad);
    }

    #[test]
    fn tilted_env_with_loose_tolerances_is_good() {
        let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, 0.02).unwrap(), 5).unwrap();
        let p = HProfile::overridden(8.0, 2.0, 1.0, 0.5).unwrap();
        let r = time_classify(&env, &p, 0.99, 2.0, ThresholdMode::Disabled).unwrap();
        assert!(r.good_sp);
        let tight = time_classify(&env, &p, 1e-6, 1e-6, ThresholdMode::Disabled).unwrap();
        assert!(!tight.good_sp && !tight.good_tm);
    }

    #[test]
    fn balanced_sojourn_bound() {
        let eps = 0.1;
        let env = sample_environment(FamilySpec::new(3, Family::BalancedAxis { axis: 0 }, eps).unwrap(), 2).unwrap();
        let p = HProfile::overridden(8.0, 2.0, 1.0, 0.5).unwrap();
        let r = time_classify(&env, &p, 0.5, 0.5, ThresholdMode::Disabled).unwrap();
        // Λ(x) is a mixture of mean exit times from balls of radius <= 2h + 1
        let hmax = p.max_value();
        assert!(r.lambda_max <= balanced_bound(3, eps, 2.0 * hmax + 1.0));
    }
}
