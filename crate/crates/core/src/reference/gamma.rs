//! The comparison kernel `Γ` and its neighbourhood-sum domination checks.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::coarse::coarse_grain_srw;
use crate::kernels::field::s_l;
use crate::kernels::{HProfile, SmoothingField};
use crate::lattice::{attainable_sq_norms, dist, isqrt, norm2, sq_threshold, Domain};
use crate::rng::{stream, TAG_TEST};
use crate::solver::green;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaKernelSpec {
    pub l: f64,
    pub r: f64,
    pub s: f64,
    pub d: usize,
}

impl GammaKernelSpec {
    pub fn new(l: f64, r: f64, s: f64, d: usize) -> Result<Self> {
        if !(r > 0.0 && r <= s && s <= l) || d < 2 {
            return Err(Error::Config(format!("need 0 < r <= s <= L and d >= 2 (L={l}, s={s}, r={r}, d={d})")));
        }
        Ok(GammaKernelSpec { l, r, s, d })
    }

    /// Default schedule `s = s_L`.
    pub fn with_default_s(l: f64, r: f64, d: usize) -> Result<Self> {
        Self::new(l, r, s_l(l).max(r), d)
    }

    pub fn outer_radius(&self) -> f64 {
        self.l + self.r
    }

    /// `ã(x) = max{d_{L+r}(x)/2, 3r}`.
    pub fn a_tilde(&self, x: &[i32]) -> f64 {
        self.a_tilde_at(norm2(x) as f64)
    }

    fn a_tilde_at(&self, n2: f64) -> f64 {
        ((self.outer_radius() - n2.sqrt()) / 2.0).max(3.0 * self.r)
    }

    /// `a(x) = min{ã(x), s}`.
    pub fn a(&self, x: &[i32]) -> f64 {
        self.a_tilde(x).min(self.s)
    }

    pub fn gamma1(&self, x: &[i32], y: &[i32]) -> f64 {
        let ay = self.a(y);
        self.a_tilde(x) * self.a_tilde(y) / (ay * ay * (ay + dist(x, y)).powi(self.d as i32))
    }

    pub fn gamma2(&self, x: &[i32], y: &[i32]) -> f64 {
        let ay = self.a(y);
        1.0 / (ay * ay * (ay + dist(x, y)).powi(self.d as i32 - 2))
    }

    pub fn contains(&self, x: &[i32]) -> bool {
        sq_threshold(self.outer_radius()).is_some_and(|n| norm2(x) <= n)
    }

    /// `U(x) = V_{a(x)}(x) ∩ V_{L+r}`.
    pub fn neighborhood(&self, x: &[i32]) -> Vec<Vec<i32>> {
        let n = sq_threshold(self.a(x)).unwrap_or(0);
        ball_offsets(self.d, n)
            .into_iter()
            .map(|o| o.iter().zip(x).map(|(a, b)| a + b).collect::<Vec<i32>>())
            .filter(|z| self.contains(z))
            .collect()
    }
}

fn ball_offsets(d: usize, n: i64) -> Vec<Vec<i32>> {
    let r = isqrt(n) as i32;
    let mut out = Vec::new();
    let mut o = vec![-r; d];
    loop {
        if norm2(&o) <= n {
            out.push(o.clone());
        }
        let mut i = 0;
        while i < d {
            o[i] += 1;
            if o[i] <= r {
                break;
            }
            o[i] = -r;
            i += 1;
        }
        if i == d {
            return out;
        }
    }
}

/// `Γ(x, y) = min{Γ^{(1)}, Γ^{(2)}}`.
pub fn gamma_kernel(spec: &GammaKernelSpec, x: &[i32], y: &[i32]) -> f64 {
    spec.gamma1(x, y).min(spec.gamma2(x, y))
}

/// `Σ_{z ∈ U(y)} Γ(x, z)`.
pub fn gamma_on_neighborhood(spec: &GammaKernelSpec, x: &[i32], y: &[i32]) -> f64 {
    spec.neighborhood(y).iter().map(|z| gamma_kernel(spec, x, z)).sum()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LipschitzReport {
    /// largest `|ã(x) - ã(y)| / |x - y|` over lattice pairs
    pub a_tilde: f64,
    /// same for `a`
    pub a: f64,
}

/// Both functions depend on `|x|` only and `|x - y| >= ||x| - |y||`, so the
/// largest difference quotient over all lattice pairs is bounded by the largest
/// quotient between consecutive attainable norms (a chord slope is an average
/// of consecutive slopes).
pub fn lipschitz_constants(spec: &GammaKernelSpec) -> LipschitzReport {
    let top = sq_threshold(spec.outer_radius()).unwrap_or(0);
    let norms = attainable_sq_norms(spec.d, top);
    let mut rep = LipschitzReport { a_tilde: 0.0, a: 0.0 };
    for w in norms.windows(2) {
        let (u, v) = (w[0] as f64, w[1] as f64);
        let gap = v.sqrt() - u.sqrt();
        let (tu, tv) = (spec.a_tilde_at(u), spec.a_tilde_at(v));
        rep.a_tilde = rep.a_tilde.max((tu - tv).abs() / gap);
        rep.a = rep.a.max((tu.min(spec.s) - tv.min(spec.s)).abs() / gap);
    }
    rep
}

/// Uniform point of `V_{L+r}`.
fn sample_point<R: Rng>(spec: &GammaKernelSpec, rng: &mut R) -> Vec<i32> {
    let n = sq_threshold(spec.outer_radius()).unwrap_or(0);
    let r = isqrt(n) as i32;
    loop {
        let x: Vec<i32> = (0..spec.d).map(|_| rng.random_range(-r..=r)).collect();
        if norm2(&x) <= n {
            return x;
        }
    }
}

/// Uniform point of `U(x)`, by rejection from the enclosing cube.
fn sample_neighbor<R: Rng>(spec: &GammaKernelSpec, x: &[i32], rng: &mut R) -> Vec<i32> {
    let n = sq_threshold(spec.a(x)).unwrap_or(0);
    let r = isqrt(n) as i32;
    loop {
        let z: Vec<i32> = x.iter().map(|c| c + rng.random_range(-r..=r)).collect();
        if crate::lattice::dist2(&z, x) <= n && spec.contains(&z) {
            return z;
        }
    }
}

/// Largest violation of `a(y) + |x-y| <= a(x) + (3/2)|x-y|` over sampled pairs
/// (nonpositive when the bound holds).
pub fn triangle_excess(spec: &GammaKernelSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, TAG_TEST, &[1]);
    (0..samples)
        .map(|_| {
            let x = sample_point(spec, &mut rng);
            let y = sample_point(spec, &mut rng);
            let dxy = dist(&x, &y);
            spec.a(&y) + dxy - spec.a(&x) - 1.5 * dxy
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `max(ρ, 1/ρ)` with `ρ = Γ(x', y') / Γ(x, y)` over sampled
/// `x, y ∈ V_{L+r}`, `x' ∈ U(x)`, `y' ∈ U(y)`.
pub fn comparability_ratio(spec: &GammaKernelSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, TAG_TEST, &[2]);
    (0..samples)
        .map(|_| {
            let x = sample_point(spec, &mut rng);
            let y = sample_point(spec, &mut rng);
            let xp = sample_neighbor(spec, &x, &mut rng);
            let yp = sample_neighbor(spec, &y, &mut rng);
            let rho = gamma_kernel(spec, &xp, &yp) / gamma_kernel(spec, &x, &y);
            rho.max(1.0 / rho)
        })
        .fold(1.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaBoundsReport {
    pub spec: GammaKernelSpec,
    pub profile: HProfile,
    pub starts: Vec<Vec<i32>>,
    /// `sup_y ĝ(x, U(y)) / Γ(x, U(y))` per start `x`
    pub sup_ratio: Vec<f64>,
    /// `inf_y` of the same ratio over `y` with `ĝ(x, U(y)) > 0`
    pub inf_ratio: Vec<f64>,
    /// empirical `C_1`
    pub c1: f64,
    /// `max_x Γ(x, E_j)` for `j = 1, 2, ...`
    pub level_sums: Vec<f64>,
    /// `max_j max_x Γ(x, E_j) / log(j+1)`
    pub level_constant: f64,
}

/// Dense values over the box `[-R, R]^d`, zero off `V_{L+r}`.
struct BoxField {
    r: i32,
    side: usize,
    vals: Vec<f64>,
}

impl BoxField {
    fn new(d: usize, r: i32) -> Self {
        let side = (2 * r + 1) as usize;
        BoxField { r, side, vals: vec![0.0; side.pow(d as u32)] }
    }

    fn offset(&self, z: &[i32]) -> Option<usize> {
        let mut k = 0usize;
        for &c in z {
            if c.abs() > self.r {
                return None;
            }
            k = k * self.side + (c + self.r) as usize;
        }
        Some(k)
    }

    fn get(&self, z: &[i32]) -> f64 {
        self.offset(z).map_or(0.0, |k| self.vals[k])
    }
}

/// Compares the coarse SRW Green function `ĝ` on `V_L` (radius field
/// `profile`) with `Γ` in the neighbourhood-sum order, from each start in
/// `starts`, over all `y ∈ V_{L+r}`.
pub fn gamma_bounds_report(
    spec: &GammaKernelSpec,
    profile: HProfile,
    starts: &[Vec<i32>],
    levels: usize,
) -> Result<GammaBoundsReport> {
    let d = spec.d;
    let origin = vec![0i32; d];
    let dom = Arc::new(Domain::ball(&origin, spec.l)?);
    let cg = coarse_grain_srw(&SmoothingField::Profile(profile), &dom)?;
    let g = green(&cg.kernel)?;
    let n_outer = sq_threshold(spec.outer_radius()).unwrap_or(0);
    let rad = isqrt(n_outer) as i32;
    let points: Vec<Vec<i32>> = ball_offsets(d, n_outer);
    let mut sup_ratio = Vec::new();
    let mut inf_ratio = Vec::new();
    let mut level_sums = vec![0.0f64; levels];
    let mut offsets_cache: Vec<(i64, Vec<Vec<i32>>)> = Vec::new();
    for x in starts {
        if !spec.contains(x) {
            return Err(Error::Domain(format!("start {x:?} outside V_(L+r)")));
        }
        let mut gf = BoxField::new(d, rad);
        let mut gam = BoxField::new(d, rad);
        match dom.index_of(x) {
            Some(i) if i < dom.n_interior() => {
                let row = g.full_row(i)?;
                for (j, v) in row.iter().enumerate() {
                    if let Some(k) = gf.offset(dom.point(j)) {
                        gf.vals[k] = *v;
                    }
                }
            }
            _ => {
                let k = gf.offset(x).expect("start lies in the box");
                gf.vals[k] = 1.0;
            }
        }
        for z in &points {
            let k = gam.offset(z).expect("point lies in the box");
            gam.vals[k] = gamma_kernel(spec, x, z);
        }
        for (j, sum) in level_sums.iter_mut().enumerate() {
            let cut = 3.0 * (j + 1) as f64 * spec.r;
            let s: f64 = points.iter().filter(|z| spec.a_tilde(z) <= cut).map(|z| gam.get(z)).sum();
            *sum = sum.max(s);
        }
        let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
        let mut z = vec![0i32; d];
        for y in &points {
            let n = sq_threshold(spec.a(y)).unwrap_or(0);
            let offs = match offsets_cache.iter().position(|c| c.0 == n) {
                Some(p) => &offsets_cache[p].1,
                None => {
                    offsets_cache.push((n, ball_offsets(d, n)));
                    &offsets_cache.last().unwrap().1
                }
            };
            let (mut gs, mut ts) = (0.0, 0.0);
            for o in offs {
                for k in 0..d {
                    z[k] = y[k] + o[k];
                }
                if norm2(&z) > n_outer {
                    continue;
                }
                gs += gf.get(&z);
                ts += gam.get(&z);
            }
            if gs > 0.0 {
                let q = gs / ts;
                hi = hi.max(q);
                lo = lo.min(q);
            }
        }
        sup_ratio.push(hi);
        inf_ratio.push(lo);
    }
    let c1 = sup_ratio.iter().copied().fold(0.0, f64::max);
    let level_constant = level_sums
        .iter()
        .enumerate()
        .map(|(j, s)| s / ((j + 2) as f64).ln())
        .fold(0.0, f64::max);
    Ok(GammaBoundsReport {
        spec: *spec,
        profile,
        starts: starts.to_vec(),
        sup_ratio,
        inf_ratio,
        c1,
        level_sums,
        level_constant,
    })
}

/// Starts along a coordinate axis and a diagonal, from the centre towards the
/// boundary of `V_L`.
pub fn ray_starts(l: f64, d: usize, per_ray: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let li = l.floor() as i32;
    for k in 0..per_ray {
        let t = li * k as i32 / per_ray as i32;
        let mut e = vec![0; d];
        e[0] = t;
        out.push(e);
        if k > 0 {
            let c = (t as f64 / (d as f64).sqrt()).floor() as i32;
            out.push(vec![c; d]);
        }
    }
    out.push({
        let mut e = vec![0; d];
        e[0] = li - 1;
        e
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_value_when_a_equals_a_tilde() {
        let spec = GammaKernelSpec::new(100.0, 1.0, 10.0, 3).unwrap();
        let x = [0, 0, 0];
        let a = spec.a(&x);
        assert_eq!(a, 10.0);
        assert!((gamma_kernel(&spec, &x, &x) - a.powi(-3)).abs() < 1e-15);
        // ã = 50.5 > a here, so Γ^(2) is the smaller branch
        assert!(spec.gamma1(&x, &x) > spec.gamma2(&x, &x));
    }

    #[test]
    fn gamma_is_below_second_branch() {
        let spec = GammaKernelSpec::new(40.0, 2.0, 8.0, 3).unwrap();
        let mut rng = stream(3, TAG_TEST, &[0]);
        for _ in 0..500 {
            let x = sample_point(&spec, &mut rng);
            let y = sample_point(&spec, &mut rng);
            assert!(gamma_kernel(&spec, &x, &y) <= spec.gamma2(&x, &y));
        }
    }

    #[test]
    fn lipschitz_half() {
        let spec = GammaKernelSpec::new(60.0, 5.0, 12.0, 3).unwrap();
        let rep = lipschitz_constants(&spec);
        assert!(rep.a_tilde <= 0.5 + 1e-9 && rep.a <= 0.5 + 1e-9);
        assert!(rep.a_tilde > 0.49);
        // brute force over a small set of pairs
        let pts = ball_offsets(3, 100);
        let mut worst: f64 = 0.0;
        for x in pts.iter().step_by(7) {
            for y in pts.iter().step_by(5) {
                if x != y {
                    worst = worst.max((spec.a(x) - spec.a(y)).abs() / dist(x, y));
                }
            }
        }
        assert!(worst <= rep.a + 1e-12);
        assert!(triangle_excess(&spec, 2000, 1) <= 1e-9);
    }

    #[test]
    fn neighborhood_is_clipped() {
        let spec = GammaKernelSpec::new(10.0, 1.0, 3.0, 3).unwrap();
        let u = spec.neighborhood(&[11, 0, 0]);
        assert!(u.iter().all(|z| spec.contains(z)));
        assert!(u.contains(&vec![11, 0, 0]));
        assert_eq!(spec.neighborhood(&[0, 0, 0]).len(), ball_offsets(3, 9).len());
    }

    #[test]
    fn bounds_report_is_finite() {
        let spec = GammaKernelSpec::new(8.0, 1.0, 2.0, 3).unwrap();
        let prof = HProfile::overridden(8.0, 2.0, 1.0, 0.5).unwrap();
        let rep = gamma_bounds_report(&spec, prof, &ray_starts(8.0, 3, 3), 3).unwrap();
        assert!(rep.c1.is_finite() && rep.c1 > 0.0);
        assert!(rep.inf_ratio.iter().all(|&r| r > 0.0 && r.is_finite()));
        assert!(rep.level_sums.windows(2).all(|w| w[0] <= w[1]));
    }
}
