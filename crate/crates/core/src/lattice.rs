//! Lattice balls, shells and outer boundaries in Z^d.
//!
//! Radii are real, but ball membership is decided on integer squared norms:
//! a real radius `t` is converted once to the largest integer `n` with
//! `sqrt(n) <= t`, and `V_t(x) = {y : |y - x|^2 <= n}`.

use std::cell::Cell;
use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 5_000_000;

static GLOBAL_CAPACITY: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static LOCAL_CAPACITY: Cell<Option<usize>> = const { Cell::new(None) };
}

/// Interior-point limit for any single domain.
///
/// Resolution order: a scoped override from [`with_capacity`], the value set
/// by [`set_capacity_limit`], `RWRE_CAPACITY`, then [`DEFAULT_CAPACITY`].
pub fn capacity_limit() -> usize {
    if let Some(c) = LOCAL_CAPACITY.with(|c| c.get()) {
        return c;
    }
    match GLOBAL_CAPACITY.load(Ordering::Relaxed) {
        0 => {
            static ENV: OnceLock<usize> = OnceLock::new();
            *ENV.get_or_init(|| {
                std::env::var("RWRE_CAPACITY")
                    .ok()
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .filter(|&c| c > 0)
                    .unwrap_or(DEFAULT_CAPACITY)
            })
        }
        c => c,
    }
}

pub fn set_capacity_limit(limit: usize) {
    GLOBAL_CAPACITY.store(limit, Ordering::Relaxed);
}

/// Runs `f` with a capacity limit that applies to the current thread only.
pub fn with_capacity<R>(limit: usize, f: impl FnOnce() -> R) -> R {
    let prev = LOCAL_CAPACITY.with(|c| c.replace(Some(limit)));
    let out = f();
    LOCAL_CAPACITY.with(|c| c.set(prev));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point(pub SmallVec<[i32; 4]>);

impl Point {
    pub fn new(coords: &[i32]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Point(SmallVec::from_elem(0, d))
    }

    pub fn unit(d: usize, i: usize, sign: i32) -> Self {
        let mut p = Self::origin(d);
        p.0[i] = sign;
        p
    }

    pub fn norm2(&self) -> i64 {
        norm2(&self.0)
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn add(&self, other: &[i32]) -> Point {
        Point(self.0.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &[i32]) -> Point {
        Point(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }
}

impl Deref for Point {
    type Target = [i32];
    fn deref(&self) -> &[i32] {
        &self.0
    }
}

impl From<Vec<i32>> for Point {
    fn from(v: Vec<i32>) -> Self {
        Point(SmallVec::from_vec(v))
    }
}

pub fn norm2(x: &[i32]) -> i64 {
    x.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

pub fn dist2(x: &[i32], y: &[i32]) -> i64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let t = a as i64 - b as i64;
            t * t
        })
        .sum()
}

pub fn dist(x: &[i32], y: &[i32]) -> f64 {
    (dist2(x, y) as f64).sqrt()
}

/// Largest integer `n >= 0` with `sqrt(n) <= t`, or `None` when `t < 0`.
pub fn sq_threshold(t: f64) -> Option<i64> {
    if !(t >= 0.0) {
        return None;
    }
    let mut n = (t * t).floor() as i64;
    while ((n + 1) as f64).sqrt() <= t {
        n += 1;
    }
    while n > 0 && (n as f64).sqrt() > t {
        n -= 1;
    }
    Some(n)
}

/// `d_L(x) = L - |x|`.
pub fn d_l(x: &[i32], l: f64) -> f64 {
    l - (norm2(x) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Ball { center: Point, sq_radius: i64 },
    Intersected { center: Point, sq_radius: i64, outer: Box<DomainKind> },
    Explicit,
}

/// A finite set of interior sites plus its outer boundary.
///
/// Indices `0..n_interior` are interior points in lexicographic order,
/// followed by boundary points, also lexicographic.
#[derive(Clone, Debug)]
pub struct Domain {
    d: usize,
    kind: DomainKind,
    coords: Vec<i32>,
    n_interior: usize,
    lo: Vec<i32>,
    extent: Vec<usize>,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

struct Grid {
    lo: Vec<i32>,
    extent: Vec<usize>,
}

impl Grid {
    fn size(&self) -> usize {
        self.extent.iter().product()
    }

    fn coords(&self, mut off: usize, out: &mut [i32]) {
        for i in (0..out.len()).rev() {
            out[i] = self.lo[i] + (off % self.extent[i]) as i32;
            off /= self.extent[i];
        }
    }
}

impl Domain {
    fn build(
        d: usize,
        kind: DomainKind,
        lo: &[i32],
        hi: &[i32],
        inside: impl Fn(&[i32]) -> bool,
    ) -> Result<Domain> {
        let limit = capacity_limit();
        let empty = lo.iter().zip(hi).any(|(a, b)| a > b);
        let (glo, extent): (Vec<i32>, Vec<usize>) = if empty {
            (vec![0; d], vec![1; d])
        } else {
            (
                lo.iter().map(|&a| a - 1).collect(),
                lo.iter().zip(hi).map(|(&a, &b)| (b - a + 3) as usize).collect(),
            )
        };
        let grid = Grid { lo: glo, extent };
        let size = grid.size();
        if size > limit.saturating_mul(64) {
            return Err(Error::Capacity { needed: size / 64, limit });
        }
        // 0 = outside, 1 = interior, 2 = boundary
        let mut mark = vec![0u8; size];
        let mut x = vec![0i32; d];
        let mut n_int = 0usize;
        if !empty {
            for off in 0..size {
                grid.coords(off, &mut x);
                let on_frame = (0..d).any(|i| x[i] < lo[i] || x[i] > hi[i]);
                if !on_frame && inside(&x) {
                    mark[off] = 1;
                    n_int += 1;
                }
            }
        }
        if n_int > limit {
            return Err(Error::Capacity { needed: n_int, limit });
        }
        let strides: Vec<usize> = (0..d)
            .map(|i| grid.extent[i + 1..].iter().product())
            .collect();
        for off in 0..size {
            if mark[off] == 1 {
                for s in &strides {
                    for nb in [off - s, off + s] {
                        if mark[nb] == 0 {
                            mark[nb] = 2;
                        }
                    }
                }
            }
        }
        let mut lookup = vec![ABSENT; size];
        let mut coords = Vec::new();
        let mut idx = 0u32;
        for pass in [1u8, 2u8] {
            for off in 0..size {
                if mark[off] == pass {
                    grid.coords(off, &mut x);
                    coords.extend_from_slice(&x);
                    lookup[off] = idx;
                    idx += 1;
                }
            }
        }
        Ok(Domain {
            d,
            kind,
            coords,
            n_interior: n_int,
            lo: grid.lo,
            extent: grid.extent,
            lookup,
        })
    }

    /// `V_t(center)` for a real radius `t`.
    pub fn ball(center: &[i32], t: f64) -> Result<Domain> {
        let n = sq_threshold(t).ok_or_else(|| Error::Domain(format!("negative radius {t}")))?;
        Self::ball_sq(center, n)
    }

    /// `{x : |x - center|^2 <= n}`.
    pub fn ball_sq(center: &[i32], n: i64) -> Result<Domain> {
        if n < 0 {
            return Err(Error::Domain(format!("negative squared radius {n}")));
        }
        let d = center.len();
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let r = isqrt(n) as i32;
        let lo: Vec<i32> = center.iter().map(|c| c - r).collect();
        let hi: Vec<i32> = center.iter().map(|c| c + r).collect();
        let c = center.to_vec();
        Self::build(
            d,
            DomainKind::Ball { center: Point::new(center), sq_radius: n },
            &lo,
            &hi,
            move |x| dist2(x, &c) <= n,
        )
    }

    /// `V_t(center) ∩ outer` with interior taken from `outer`'s interior.
    pub fn intersected_sq(center: &[i32], n: i64, outer: &Domain) -> Result<Domain> {
        let d = center.len();
        if d != outer.d {
            return Err(Error::Domain("dimension mismatch".into()));
        }
        let r = isqrt(n.max(0)) as i32;
        let (olo, ohi) = outer.interior_bbox();
        let lo: Vec<i32> = (0..d).map(|i| (center[i] - r).max(olo[i])).collect();
        let hi: Vec<i32> = (0..d).map(|i| (center[i] + r).min(ohi[i])).collect();
        let c = center.to_vec();
        Self::build(
            d,
            DomainKind::Intersected {
                center: Point::new(center),
                sq_radius: n,
                outer: Box::new(outer.kind.clone()),
            },
            &lo,
            &hi,
            move |x| dist2(x, &c) <= n && outer.is_interior(x),
        )
    }

    pub fn intersected(center: &[i32], t: f64, outer: &Domain) -> Result<Domain> {
        let n = sq_threshold(t).ok_or_else(|| Error::Domain(format!("negative radius {t}")))?;
        Self::intersected_sq(center, n, outer)
    }

    /// Domain whose interior is exactly the given point set.
    pub fn explicit(d: usize, points: &[Point]) -> Result<Domain> {
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Domain("point of wrong dimension".into()));
        }
        let mut lo = vec![i32::MAX; d];
        let mut hi = vec![i32::MIN; d];
        for p in points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let set: std::collections::HashSet<&[i32]> = points.iter().map(|p| &p.0[..]).collect();
        Self::build(d, DomainKind::Explicit, &lo, &hi, |x| set.contains(x))
    }

    /// Domain with interior given by a predicate on a bounding box.
    pub fn from_predicate(
        lo: &[i32],
        hi: &[i32],
        inside: impl Fn(&[i32]) -> bool,
    ) -> Result<Domain> {
        Self::build(lo.len(), DomainKind::Explicit, lo, hi, inside)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n_interior == 0
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.len() - self.n_interior
    }

    pub fn point(&self, i: usize) -> &[i32] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn index_of(&self, x: &[i32]) -> Option<usize> {
        let mut off = 0usize;
        for i in 0..self.d {
            let c = x[i] as i64 - self.lo[i] as i64;
            if c < 0 || c >= self.extent[i] as i64 {
                return None;
            }
            off = off * self.extent[i] + c as usize;
        }
        match self.lookup[off] {
            ABSENT => None,
            v => Some(v as usize),
        }
    }

    pub fn is_interior(&self, x: &[i32]) -> bool {
        matches!(self.index_of(x), Some(i) if i < self.n_interior)
    }

    pub fn is_interior_index(&self, i: usize) -> bool {
        i < self.n_interior
    }

    pub fn interior(&self) -> impl Iterator<Item = &[i32]> + '_ {
        (0..self.n_interior).map(move |i| self.point(i))
    }

    pub fn boundary(&self) -> impl Iterator<Item = &[i32]> + '_ {
        (self.n_interior..self.len()).map(move |i| self.point(i))
    }

    /// Index of `point(i) ± e_axis`; always present for interior `i`.
    pub fn neighbor(&self, i: usize, dir: usize) -> Option<usize> {
        let mut y: SmallVec<[i32; 4]> = SmallVec::from_slice(self.point(i));
        y[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
        self.index_of(&y)
    }

    fn interior_bbox(&self) -> (Vec<i32>, Vec<i32>) {
        if self.n_interior == 0 {
            return (vec![1; self.d], vec![0; self.d]);
        }
        let mut lo = vec![i32::MAX; self.d];
        let mut hi = vec![i32::MIN; self.d];
        for x in self.interior() {
            for i in 0..self.d {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        (lo, hi)
    }
}

/// `enumerate_ball` in the functional form: `V_L(center)` in dimension `d`.
pub fn enumerate_ball(center: &Point, l: f64, d: usize) -> Result<Domain> {
    if center.len() != d {
        return Err(Error::Domain("center dimension differs from d".into()));
    }
    Domain::ball(center, l)
}

pub fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub a: f64,
    pub b: f64,
    pub l: f64,
}

impl ShellSpec {
    pub fn contains(&self, x: &[i32]) -> bool {
        let dl = d_l(x, self.l);
        self.a <= dl && dl < self.b
    }
}

/// Points of `V_L` (centered at the origin) with `a <= d_L(x) < b`.
pub fn shell_points(spec: ShellSpec, d: usize) -> Result<Vec<Point>> {
    if !(spec.a >= 0.0 && spec.b > spec.a) {
        return Err(Error::Domain(format!("bad shell bounds a={} b={}", spec.a, spec.b)));
    }
    let dom = Domain::ball(&Point::origin(d), spec.l)?;
    Ok(dom.interior().filter(|x| spec.contains(x)).map(Point::new).collect())
}

/// Squared norms `|y|^2 <= max_n` attained by some `y` in Z^d, ascending.
pub fn attainable_sq_norms(d: usize, max_n: i64) -> Vec<i64> {
    let mut hit = vec![false; (max_n.max(0) + 1) as usize];
    fn rec(d: usize, start: i64, acc: i64, max_n: i64, hit: &mut [bool]) {
        if d == 0 {
            hit[acc as usize] = true;
            return;
        }
        let mut k = start;
        while acc + k * k <= max_n {
            rec(d - 1, k, acc + k * k, max_n, hit);
            k += 1;
        }
    }
    if max_n >= 0 {
        rec(d, 0, 0, max_n, &mut hit);
    }
    hit.iter().enumerate().filter(|(_, &h)| h).map(|(n, _)| n as i64).collect()
}

/// Unit ball volume `alpha(d) = pi^{d/2} / Gamma(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    crate::reference::special::unit_ball_volume(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_ball(d: usize, l: i32) -> usize {
        let mut count = 0;
        let r = l;
        let side = (2 * r + 1) as usize;
        let total = side.pow(d as u32);
        for k in 0..total {
            let mut k2 = k;
            let mut s = 0i64;
            for _ in 0..d {
                let c = (k2 % side) as i64 - r as i64;
                k2 /= side;
                s += c * c;
            }
            if s <= (l as i64) * (l as i64) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn ball_counts_small() {
        let o = Point::origin(3);
        let v0 = enumerate_ball(&o, 0.0, 3).unwrap();
        assert_eq!(v0.n_interior(), 1);
        assert_eq!(v0.n_boundary(), 6);
        assert_eq!(enumerate_ball(&o, 1.0, 3).unwrap().n_interior(), 7);
        let v2 = enumerate_ball(&o, 2.0, 3).unwrap();
        assert_eq!(v2.n_interior(), brute_ball(3, 2));
        assert_eq!(v2.n_interior(), 33);
    }

    #[test]
    fn distance_to_boundary() {
        assert_eq!(d_l(&[0, 0, 0], 10.0), 10.0);
        assert_eq!(d_l(&[10, 0, 0], 10.0), 0.0);
        assert_eq!(d_l(&[3, 4, 0], 10.0), 5.0);
        assert!(d_l(&[11, 0, 0], 10.0) < 0.0);
    }

    #[test]
    fn shell_examples() {
        let sh = shell_points(ShellSpec { a: 0.0, b: 1.0, l: 2.0 }, 3).unwrap();
        let inner = Domain::ball(&[0, 0, 0], 1.0).unwrap().n_interior();
        let v2 = Domain::ball(&[0, 0, 0], 2.0).unwrap().n_interior();
        assert_eq!(sh.len(), v2 - inner);
        assert_eq!(sh.len(), 26);
        for x in shell_points(ShellSpec { a: 3.0, b: 3.5, l: 10.0 }, 3).unwrap() {
            let n = x.norm();
            assert!(n > 6.5 && n <= 7.0);
        }
        let all = shell_points(ShellSpec { a: 0.0, b: 10.0, l: 10.0 }, 3).unwrap();
        let center = 1; // d_L(0) = L is excluded by the half-open bound
        assert_eq!(all.len() + center, Domain::ball(&[0, 0, 0], 10.0).unwrap().n_interior());
    }

    #[test]
    fn sq_threshold_exact_on_roots() {
        for n in 0..500i64 {
            let t = (n as f64).sqrt();
            assert_eq!(sq_threshold(t), Some(n));
        }
        assert_eq!(sq_threshold(2.5), Some(6));
        assert_eq!(sq_threshold(-0.1), None);
    }

    #[test]
    fn attainable_norms_three_dims() {
        let v = attainable_sq_norms(3, 30);
        assert!(!v.contains(&7) && !v.contains(&15) && !v.contains(&23) && !v.contains(&28));
        assert!(v.contains(&0) && v.contains(&29) && v.contains(&6));
        assert_eq!(attainable_sq_norms(1, 10), vec![0, 1, 4, 9]);
    }

    #[test]
    fn boundary_count_band() {
        let d = 3;
        let c = 4.0 * d as f64 * unit_ball_volume(d);
        for l in [4, 8, 16, 32, 64] {
            let dom = Domain::ball(&[0, 0, 0], l as f64).unwrap();
            let ratio = dom.n_boundary() as f64 / (l as f64).powi(d as i32 - 1);
            assert!(ratio >= 1.0 && ratio <= c, "L={l} ratio={ratio}");
        }
    }

    #[test]
    fn intersected_ball_is_subset() {
        let outer = Domain::ball(&[0, 0, 0], 5.0).unwrap();
        let cut = Domain::intersected(&[4, 0, 0], 3.0, &outer).unwrap();
        for x in cut.interior() {
            assert!(outer.is_interior(x));
            assert!(dist2(x, &[4, 0, 0]) <= 9);
        }
        let full = Domain::ball(&[4, 0, 0], 3.0).unwrap();
        assert!(cut.n_interior() < full.n_interior());
    }

    #[test]
    fn explicit_domain_one_dim() {
        let pts: Vec<Point> = (-1..=1).map(|k| Point::new(&[k])).collect();
        let dom = Domain::explicit(1, &pts).unwrap();
        assert_eq!(dom.n_interior(), 3);
        assert_eq!(dom.boundary().collect::<Vec<_>>(), vec![&[-2][..], &[2][..]]);
        let empty = Domain::explicit(2, &[]).unwrap();
        assert_eq!(empty.len(), 0);
    }

    #[test]
    fn capacity_is_enforced() {
        let r = with_capacity(100, || Domain::ball(&[0, 0, 0], 5.0));
        assert!(matches!(r, Err(Error::Capacity { .. })));
    }

    proptest! {
        #[test]
        fn closure_and_disjointness(l in 0.0f64..6.0, cx in -3i32..3, cy in -3i32..3) {
            let dom = Domain::ball(&[cx, cy, 1], l).unwrap();
            for i in 0..dom.n_interior() {
                for dir in 0..6 {
                    prop_assert!(dom.neighbor(i, dir).is_some());
                }
            }
            for j in dom.n_interior()..dom.len() {
                let y = dom.point(j);
                prop_assert!(!dom.is_interior(y));
                let adjacent = (0..6).any(|dir| {
                    let mut z = y.to_vec();
                    z[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
                    dom.is_interior(&z)
                });
                prop_assert!(adjacent);
            }
            for i in 0..dom.len() {
                prop_assert_eq!(dom.index_of(dom.point(i)), Some(i));
            }
        }

        #[test]
        fn enumeration_is_deterministic_and_sorted(l in 0.0f64..5.0) {
            let a = Domain::ball(&[0, 0, 0], l).unwrap();
            let b = Domain::ball(&[0, 0, 0], l).unwrap();
            prop_assert_eq!(&a.coords, &b.coords);
            for i in 1..a.n_interior() {
                prop_assert!(a.point(i - 1) < a.point(i));
            }
            for i in a.n_interior() + 1..a.len() {
                prop_assert!(a.point(i - 1) < a.point(i));
            }
        }
    }
}
