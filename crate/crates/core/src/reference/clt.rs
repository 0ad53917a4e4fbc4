//! Convolution powers of the coarse-grained simple random walk step, the
//! local CLT comparison, and Monte Carlo estimates of its Z^d Green function.
//!
//! The step law `π̂_m(0, ·)` is even in every coordinate, so its powers are
//! stored on the nonnegative orthant and transformed with DCT-I along each
//! axis. A DCT-I of length `N` is the DFT of the even extension of length
//! `2(N-1)`, so the computation is a circular convolution on a torus wider
//! than the support of `π̂_m^n` for `n <= n_max`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::coarse::{pieces, srw_coarse_step};
use crate::kernels::templates::srw_ball_mean_times;
use crate::lattice::capacity_limit;
use crate::reference::special::{green_constant, normal_quantile};
use crate::rng::{stream, TAG_WALK};

/// Per-axis variance `γ_m` of one coarse step, via `E|X_τ|^2 = E τ`.
pub fn gamma_m(m: f64, d: usize) -> Result<f64> {
    let pcs = pieces(m, d)?;
    let ns: Vec<i64> = pcs.iter().map(|p| p.0).collect();
    let times = srw_ball_mean_times(d, &ns)?;
    Ok(pcs.iter().zip(&times).map(|(p, t)| p.1 * t).sum::<f64>() / d as f64)
}

/// `γ_m` as the second moment of the tabulated step law.
pub fn gamma_m_second_moment(m: f64, d: usize) -> Result<f64> {
    let step = srw_coarse_step(m, d)?;
    Ok(step.iter().map(|(o, p)| p * (o[0] as f64).powi(2)).sum())
}

/// Orthant array of side `n` in `d` dimensions, row-major.
struct Orthant {
    d: usize,
    n: usize,
    data: Vec<f64>,
}

impl Orthant {
    fn coords(&self, mut k: usize, out: &mut [usize]) {
        for i in (0..self.d).rev() {
            out[i] = k % self.n;
            k /= self.n;
        }
    }

    /// DCT-I along every axis.
    fn dct1(&mut self, planner: &mut FftPlanner<f64>) {
        let n = self.n;
        let m = 2 * (n - 1);
        let fft = planner.plan_fft_forward(m);
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let total = self.data.len();
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            for start in 0..total {
                // visit each line once, from its first element
                if (start / stride) % n != 0 {
                    continue;
                }
                for j in 0..n {
                    buf[j] = Complex::new(self.data[start + j * stride], 0.0);
                }
                for j in 1..n - 1 {
                    buf[m - j] = buf[j];
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for j in 0..n {
                    self.data[start + j * stride] = buf[j].re;
                }
            }
        }
    }
}

/// `π̂_m^n(0, x)` on the orthant `0 <= x_i <= 2 m n_max + 1` for each requested `n`.
pub fn convolution_powers(
    m: f64,
    d: usize,
    ns: &[usize],
    mut visit: impl FnMut(usize, &[f64], usize),
) -> Result<()> {
    let n_max = ns.iter().copied().max().unwrap_or(1);
    let reach = (2.0 * m).ceil() as usize;
    // one spare cell so the torus of side 2(side-1) exceeds the support width
    let side = reach * n_max + 2;
    let cells = side.checked_pow(d as u32).unwrap_or(usize::MAX);
    if cells > capacity_limit() {
        return Err(Error::Capacity { needed: cells, limit: capacity_limit() });
    }
    let step = srw_coarse_step(m, d)?;
    let mut orth = Orthant { d, n: side, data: vec![0.0; cells] };
    for (o, p) in &step {
        if o.iter().all(|&c| c >= 0) {
            let k = o.iter().fold(0usize, |acc, &c| acc * side + c as usize);
            orth.data[k] = *p;
        }
    }
    let mut planner = FftPlanner::new();
    orth.dct1(&mut planner);
    let spectrum = orth.data.clone();
    let norm = (2.0 * (side - 1) as f64).powi(d as i32);
    for &n in ns {
        orth.data.iter_mut().zip(&spectrum).for_each(|(v, s)| *v = s.powi(n as i32));
        orth.dct1(&mut planner);
        orth.data.iter_mut().for_each(|v| *v /= norm);
        visit(n, &orth.data, side);
    }
    Ok(())
}

fn orthant_multiplicity(c: &[usize]) -> f64 {
    (1u64 << c.iter().filter(|&&v| v != 0).count()) as f64
}

/// `(2π γ n)^{-d/2} exp(-|x|^2 / (2 γ n))`.
pub fn gaussian(gamma: f64, n: f64, x2: f64, d: usize) -> f64 {
    (2.0 * PI * gamma * n).powf(-(d as f64) / 2.0) * (-x2 / (2.0 * gamma * n)).exp()
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub m: f64,
    pub d: usize,
    pub side: usize,
    pub gamma_m: f64,
    pub n_values: Vec<usize>,
    /// `sup_x |π̂_m^n(0, x) - gaussian|`
    pub sup_errors: Vec<f64>,
    /// `Σ_x gaussian(x)` over the lattice
    pub gaussian_mass: Vec<f64>,
    /// `Σ_x π̂_m^n(0, x)`
    pub kernel_mass: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Lattice sum of the Gaussian main term, one axis at a time.
fn gaussian_lattice_mass(gamma: f64, n: f64, d: usize) -> f64 {
    let s2 = gamma * n;
    let k_max = (40.0 * s2.sqrt()).ceil() as i64 + 1;
    let axis: f64 = (-k_max..=k_max).map(|k| (-(k * k) as f64 / (2.0 * s2)).exp()).sum();
    (axis / (2.0 * PI * s2).sqrt()).powi(d as i32)
}

pub fn local_clt_scan(m: f64, ns: &[usize], d: usize) -> Result<CltReport> {
    let gamma = gamma_m(m, d)?;
    let mut sup_errors = Vec::new();
    let mut kernel_mass = Vec::new();
    let mut side_seen = 0;
    convolution_powers(m, d, ns, |n, vals, side| {
        side_seen = side;
        let mut c = vec![0usize; d];
        let mut sup: f64 = 0.0;
        let mut mass = 0.0;
        let orth = Orthant { d, n: side, data: Vec::new() };
        for (k, &v) in vals.iter().enumerate() {
            orth.coords(k, &mut c);
            let x2: f64 = c.iter().map(|&a| (a * a) as f64).sum();
            sup = sup.max((v - gaussian(gamma, n as f64, x2, d)).abs());
            mass += v * orthant_multiplicity(&c);
        }
        sup_errors.push(sup);
        kernel_mass.push(mass);
    })?;
    let pts: Vec<(f64, f64)> =
        ns.iter().zip(&sup_errors).map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    let (slope, intercept) = if pts.len() >= 2 { fit_line(&pts) } else { (f64::NAN, f64::NAN) };
    Ok(CltReport {
        m,
        d,
        side: side_seen,
        gamma_m: gamma,
        n_values: ns.to_vec(),
        gaussian_mass: ns.iter().map(|&n| gaussian_lattice_mass(gamma, n as f64, d)).collect(),
        sup_errors,
        kernel_mass,
        slope,
        intercept,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LdFit {
    pub m: f64,
    pub c2: f64,
    /// smallest `c1` with `π̂_m^n(x) <= c1 m^{-d} exp(-|x|^2 / (c2 n m^2))`
    /// over the scanned `n` and `|x| >= 3m`
    pub c1: f64,
}

/// Fitted large-deviation constants for each `c2` in `c2s`.
pub fn ld_fit(m: f64, d: usize, ns: &[usize], c2s: &[f64]) -> Result<Vec<LdFit>> {
    let mut c1 = vec![0.0f64; c2s.len()];
    let floor = 9.0 * m * m;
    convolution_powers(m, d, ns, |n, vals, side| {
        let orth = Orthant { d, n: side, data: Vec::new() };
        let mut c = vec![0usize; d];
        for (k, &v) in vals.iter().enumerate() {
            orth.coords(k, &mut c);
            let x2: f64 = c.iter().map(|&a| (a * a) as f64).sum();
            if x2 < floor || v <= 1e-300 {
                continue;
            }
            for (i, &c2) in c2s.iter().enumerate() {
                let bound_shape = m.powi(-(d as i32)) * (-x2 / (c2 * n as f64 * m * m)).exp();
                c1[i] = c1[i].max(v / bound_shape);
            }
        }
    })?;
    Ok(c2s.iter().zip(c1).map(|(&c2, c1)| LdFit { m, c2, c1 }).collect())
}

/// `Σ_{n > n0} (2πγn)^{-d/2} exp(-x2 / (2γn))`: the Gaussian main term of
/// the Green function beyond `n0` steps.
pub fn gaussian_tail(gamma: f64, x2: f64, d: usize, n0: usize) -> f64 {
    let n_end = n0 + 200_000;
    let mut s: f64 = ((n0 + 1)..=n_end).map(|n| gaussian(gamma, n as f64, x2, d)).sum();
    // integral remainder, where the exponential factor is ~1
    let e = d as f64 / 2.0 - 1.0;
    s += (2.0 * PI * gamma).powf(-(d as f64) / 2.0) * (n_end as f64 + 0.5).powf(-e) / e;
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenShellEstimate {
    pub radius: u32,
    pub n_points: usize,
    /// mean over `k <= |x| < k+1` of `ĝ(0, x) γ_m |x|`
    pub value: f64,
    pub ci: (f64, f64),
    /// part of `value` contributed by the Gaussian tail beyond the walk horizon
    pub tail: f64,
    /// `c(d)`
    pub target: f64,
}

/// Coarse walk sampler for `π̂_m`.
pub struct CoarseStepSampler {
    offsets: Vec<Vec<i32>>,
    alias: WeightedAliasIndex<f64>,
}

impl CoarseStepSampler {
    pub fn new(m: f64, d: usize) -> Result<Self> {
        let step = srw_coarse_step(m, d)?;
        let weights: Vec<f64> = step.iter().map(|s| s.1).collect();
        let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::Domain(format!("step law: {e}")))?;
        Ok(CoarseStepSampler { offsets: step.into_iter().map(|s| s.0).collect(), alias })
    }

    pub fn step<R: Rng>(&self, rng: &mut R, x: &mut [i32]) {
        let o = &self.offsets[self.alias.sample(rng)];
        for (a, b) in x.iter_mut().zip(o) {
            *a += b;
        }
    }
}

/// Monte Carlo estimate of `ĝ_{m,Z^d}(0, x) γ_m |x|` averaged over the lattice
/// shells `k <= |x| < k+1`, `k ∈ radii`.
///
/// Visits are counted during the first `horizon` steps of each walk; the
/// remaining steps are replaced by the Gaussian main term of the local CLT.
pub fn green_zd_shells(
    m: f64,
    d: usize,
    radii: &[u32],
    n_walks: u64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<GreenShellEstimate>> {
    let gamma = gamma_m(m, d)?;
    let sampler = CoarseStepSampler::new(m, d)?;
    let r_max = radii.iter().copied().max().unwrap_or(0) as i64 + 1;
    // shell index per squared norm
    let mut shell_of = vec![u32::MAX; (r_max * r_max) as usize];
    for (s, &k) in radii.iter().enumerate() {
        for n2 in (k as i64 * k as i64)..((k as i64 + 1) * (k as i64 + 1)) {
            shell_of[n2 as usize] = s as u32;
        }
    }
    // per-shell point counts and tail sums, grouped by squared norm
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let lim = r_max as i32;
    let mut x = vec![-lim; d];
    loop {
        let n2: i64 = x.iter().map(|&c| c as i64 * c as i64).sum();
        if n2 < r_max * r_max && shell_of[n2 as usize] != u32::MAX {
            *counts.entry(n2).or_default() += 1;
        }
        let mut i = 0;
        while i < d {
            x[i] += 1;
            if x[i] <= lim {
                break;
            }
            x[i] = -lim;
            i += 1;
        }
        if i == d {
            break;
        }
    }
    let ns = radii.len();
    let mut n_points = vec![0usize; ns];
    let mut tail = vec![0.0; ns];
    for (&n2, &c) in &counts {
        let s = shell_of[n2 as usize] as usize;
        n_points[s] += c;
        tail[s] += c as f64 * gaussian_tail(gamma, n2 as f64, d, horizon) * gamma * (n2 as f64).sqrt();
    }
    for s in 0..ns {
        tail[s] /= n_points[s].max(1) as f64;
    }
    const BATCH: u64 = 1000;
    let n_batches = n_walks.div_ceil(BATCH);
    // per batch: sum and sum of squares of per-walk shell scores
    let stats: Vec<Vec<(f64, f64)>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, TAG_WALK, &[b as i64]);
            let mut acc = vec![(0.0, 0.0); ns];
            let mut score = vec![0.0; ns];
            let mut pos = vec![0i32; d];
            let walks = BATCH.min(n_walks - b * BATCH);
            for _ in 0..walks {
                pos.iter_mut().for_each(|c| *c = 0);
                score.iter_mut().for_each(|s| *s = 0.0);
                for _ in 0..horizon {
                    sampler.step(&mut rng, &mut pos);
                    let n2: i64 = pos.iter().map(|&c| c as i64 * c as i64).sum();
                    if n2 < r_max * r_max {
                        let s = shell_of[n2 as usize];
                        if s != u32::MAX {
                            score[s as usize] += (n2 as f64).sqrt();
                        }
                    }
                }
                for s in 0..ns {
                    acc[s].0 += score[s];
                    acc[s].1 += score[s] * score[s];
                }
            }
            acc
        })
        .collect();
    let z = normal_quantile(0.975);
    let target = green_constant(d);
    Ok((0..ns)
        .map(|s| {
            let (sum, sq) = stats.iter().fold((0.0, 0.0), |a, b| (a.0 + b[s].0, a.1 + b[s].1));
            let nw = n_walks as f64;
            let mean = sum / nw;
            let var = (sq / nw - mean * mean).max(0.0);
            let scale = gamma / n_points[s].max(1) as f64;
            let value = mean * scale + tail[s];
            let half = z * (var / nw).sqrt() * scale;
            GreenShellEstimate {
                radius: radii[s],
                n_points: n_points[s],
                value,
                ci: (value - half, value + half),
                tail: tail[s],
                target,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn gamma_routes_agree_and_lie_in_band() {
        for m in [1.0, 2.0, 3.0, 5.0] {
            let a = gamma_m(m, 3).unwrap();
            let b = gamma_m_second_moment(m, 3).unwrap();
            assert!((a - b).abs() < 1e-10 * a, "m={m}: {a} vs {b}");
        }
        let g = gamma_m(5.0, 3).unwrap() / 25.0;
        assert!(g > 1.0 / 3.0 && g < 4.0 / 3.0);
    }

    #[test]
    fn powers_match_direct_convolution() {
        let m = 1.0;
        let step = srw_coarse_step(m, 2).unwrap();
        let mut direct: HashMap<(i32, i32), f64> = HashMap::new();
        direct.insert((0, 0), 1.0);
        for _ in 0..3 {
            let mut next = HashMap::new();
            for (&(a, b), &p) in &direct {
                for (o, q) in &step {
                    *next.entry((a + o[0], b + o[1])).or_insert(0.0) += p * q;
                }
            }
            direct = next;
        }
        convolution_powers(m, 2, &[3], |_, vals, side| {
            for i in 0..side {
                for j in 0..side {
                    let want = direct.get(&(i as i32, j as i32)).copied().unwrap_or(0.0);
                    assert!((vals[i * side + j] - want).abs() < 1e-15, "{i},{j}");
                    let mirror = direct.get(&(-(i as i32), j as i32)).copied().unwrap_or(0.0);
                    assert!((mirror - want).abs() < 1e-15);
                }
            }
        })
        .unwrap();
    }

    #[test]
    fn clt_mass_and_decay() {
        let r = local_clt_scan(2.0, &[2, 4, 8], 3).unwrap();
        for (k, g) in r.kernel_mass.iter().zip(&r.gaussian_mass) {
            assert!((k - 1.0).abs() < 1e-12);
            assert!((g - 1.0).abs() < 0.05);
        }
        assert!(r.sup_errors.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ld_constants_are_finite() {
        let fits = ld_fit(2.0, 3, &[2, 4, 6], &[24.0, 72.0]).unwrap();
        assert!(fits.iter().all(|f| f.c1.is_finite() && f.c1 > 0.0));
        assert!(fits[1].c1 <= fits[0].c1 * (1.0 + 1e-12) || fits[1].c1 < 1.0);
    }

    #[test]
    fn gaussian_tail_matches_integral() {
        // for x = 0 the tail is close to (2πγ)^{-d/2} · 2 / sqrt(n0)
        let t = gaussian_tail(1.0, 0.0, 3, 100);
        let approx = (2.0 * PI).powf(-1.5) * 2.0 / 100.5f64.sqrt();
        assert!((t - approx).abs() < 1e-3 * approx);
    }
}
