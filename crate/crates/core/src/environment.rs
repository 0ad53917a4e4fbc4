//! I.i.d. nearest-neighbour environments on Z^d.
//!
//! Site laws are indexed by direction `k = 2 * axis + (0 for +e, 1 for -e)`.
//! A law at `x` is a pure function of `(seed, x)`; nothing is cached, so an
//! [`Environment`] can be shared freely across threads.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{Domain, Point};
use crate::rng;

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"RWRE";
const LAW_TOL: f64 = 1e-12;

pub type Probs = SmallVec<[f64; 8]>;

#[derive(Clone, Debug, PartialEq)]
pub struct SiteLaw {
    pub probs: Probs,
}

impl SiteLaw {
    pub fn uniform(d: usize) -> Self {
        SiteLaw { probs: SmallVec::from_elem(1.0 / (2 * d) as f64, 2 * d) }
    }

    pub fn d(&self) -> usize {
        self.probs.len() / 2
    }

    pub fn prob(&self, axis: usize, sign: i32) -> f64 {
        self.probs[2 * axis + usize::from(sign < 0)]
    }

    /// Checks nonnegativity, normalization and A0(eps).
    pub fn validate(&self, eps: f64) -> Result<()> {
        let d = self.d();
        let c = 1.0 / (2 * d) as f64;
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-14 * (2 * d) as f64 {
            return Err(Error::Domain(format!("site law sums to {sum}")));
        }
        for &p in &self.probs {
            if p < 0.0 || (p - c).abs() > eps + LAW_TOL {
                return Err(Error::Domain(format!("site law entry {p} violates A0({eps})")));
            }
        }
        Ok(())
    }
}

/// Direction index of `±e_axis`.
pub fn dir_index(axis: usize, sign: i32) -> usize {
    2 * axis + usize::from(sign < 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Srw,
    IsotropicTilt,
    BalancedAxis { axis: usize },
    SymmetricBalanced,
}

impl Family {
    fn tag(self) -> (u8, u8) {
        match self {
            Family::Srw => (0, 0),
            Family::IsotropicTilt => (1, 0),
            Family::BalancedAxis { axis } => (2, axis as u8),
            Family::SymmetricBalanced => (3, 0),
        }
    }

    fn from_tag(tag: u8, param: u8) -> Result<Family> {
        Ok(match tag {
            0 => Family::Srw,
            1 => Family::IsotropicTilt,
            2 => Family::BalancedAxis { axis: param as usize },
            3 => Family::SymmetricBalanced,
            t => return Err(Error::CorruptPayload(format!("unknown family tag {t}"))),
        })
    }

    pub fn name(self) -> String {
        match self {
            Family::Srw => "srw".into(),
            Family::IsotropicTilt => "isotropic_tilt".into(),
            Family::BalancedAxis { axis } => format!("balanced_axis({})", axis + 1),
            Family::SymmetricBalanced => "symmetric_balanced".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub d: usize,
    pub family: Family,
    pub epsilon: f64,
}

fn uniform_sym(rng: &mut ChaCha8Rng, eps: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * eps
}

/// Centers `u` and shrinks it into the cube `[-eps, eps]^n` if needed.
fn center_and_clip(u: &mut [f64], eps: f64) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let m = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > eps && m > 0.0 {
        let s = eps / m;
        u.iter_mut().for_each(|v| *v *= s);
    }
}

fn finish(d: usize, u: &[f64]) -> SiteLaw {
    let c = 1.0 / (2 * d) as f64;
    let mut probs: Probs = u.iter().map(|v| c + v).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    SiteLaw { probs }
}

/// A uniformly random signed permutation acting on direction indices.
pub fn random_signed_permutation(d: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut axes: Vec<usize> = (0..d).collect();
    axes.shuffle(rng);
    let mut map = vec![0; 2 * d];
    for a in 0..d {
        let flip = rng.random::<bool>();
        for s in 0..2 {
            let t = if flip { 1 - s } else { s };
            map[2 * a + s] = 2 * axes[a] + t;
        }
    }
    map
}

impl FamilySpec {
    pub fn new(d: usize, family: Family, epsilon: f64) -> Result<Self> {
        let spec = FamilySpec { d, family, epsilon };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        let bound = 1.0 / (2 * self.d) as f64;
        if !(self.epsilon >= 0.0 && self.epsilon < bound) {
            return Err(Error::InvalidEpsilon { eps: self.epsilon, bound });
        }
        if let Family::BalancedAxis { axis } = self.family {
            if axis >= self.d {
                return Err(Error::Domain(format!("balanced axis {axis} out of range")));
            }
        }
        Ok(())
    }

    /// One draw from the site-law distribution.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> SiteLaw {
        let d = self.d;
        let eps = self.epsilon;
        match self.family {
            Family::Srw => SiteLaw::uniform(d),
            Family::IsotropicTilt => {
                let mut u: Vec<f64> = (0..2 * d).map(|_| uniform_sym(rng, eps)).collect();
                center_and_clip(&mut u, eps);
                let g = random_signed_permutation(d, rng);
                let v: Vec<f64> = (0..2 * d).map(|k| u[g[k]]).collect();
                finish(d, &v)
            }
            Family::BalancedAxis { axis } => {
                let mut u: Vec<f64> = (0..2 * d).map(|_| uniform_sym(rng, eps)).collect();
                center_and_clip(&mut u, eps);
                let m = 0.5 * (u[2 * axis] + u[2 * axis + 1]);
                u[2 * axis] = m;
                u[2 * axis + 1] = m;
                finish(d, &u)
            }
            Family::SymmetricBalanced => {
                let mut w: Vec<f64> = (0..d).map(|_| uniform_sym(rng, eps)).collect();
                center_and_clip(&mut w, eps);
                w.shuffle(rng);
                let u: Vec<f64> = (0..2 * d).map(|k| w[k / 2]).collect();
                finish(d, &u)
            }
        }
    }
}

/// Anything that can report the site law at a lattice point.
pub trait LawSource: Sync {
    fn d(&self) -> usize;
    fn law_into(&self, x: &[i32], out: &mut [f64]);
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub spec: FamilySpec,
    pub seed: u64,
    pub version: u16,
    overrides: BTreeMap<Point, SiteLaw>,
}

/// `sample_environment`: the i.i.d. environment with the given family and seed.
pub fn sample_environment(spec: FamilySpec, seed: u64) -> Result<Environment> {
    spec.check()?;
    Ok(Environment { spec, seed, version: FORMAT_VERSION, overrides: BTreeMap::new() })
}

impl Environment {
    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    pub fn is_srw(&self) -> bool {
        self.spec.family == Family::Srw && self.overrides.is_empty()
    }

    pub fn law(&self, x: &[i32]) -> SiteLaw {
        if let Some(l) = self.overrides.get(&Point::new(x)) {
            return l.clone();
        }
        let counters: SmallVec<[i64; 4]> = x.iter().map(|&c| c as i64).collect();
        let mut r = rng::stream(self.seed, rng::TAG_SITE, &counters);
        self.spec.draw(&mut r)
    }

    /// Replaces the law at one site; the law must satisfy A0(eps).
    pub fn set_override(&mut self, x: &[i32], law: SiteLaw) -> Result<()> {
        if law.d() != self.d() {
            return Err(Error::Domain("override law has wrong dimension".into()));
        }
        law.validate(self.epsilon())?;
        self.overrides.insert(Point::new(x), law);
        Ok(())
    }

    pub fn overrides(&self) -> impl Iterator<Item = (&Point, &SiteLaw)> {
        self.overrides.iter()
    }

    /// Precomputes laws on the interior of `dom` for fast repeated lookup.
    pub fn materialize(&self, dom: &Domain) -> LawField {
        LawField::from_points(self, dom.interior())
    }

    /// Precomputes laws on the box `lo..=hi`.
    pub fn materialize_box(&self, lo: &[i32], hi: &[i32]) -> LawField {
        LawField::from_box(self, lo, hi)
    }
}

impl LawSource for Environment {
    fn d(&self) -> usize {
        self.spec.d
    }

    fn law_into(&self, x: &[i32], out: &mut [f64]) {
        out.copy_from_slice(&self.law(x).probs);
    }
}

/// Site laws tabulated on a box, falling back to the environment outside.
#[derive(Clone, Debug)]
pub struct LawField {
    d: usize,
    lo: Vec<i32>,
    extent: Vec<usize>,
    probs: Vec<f64>,
    fallback: Environment,
}

impl LawField {
    fn from_box(env: &Environment, lo: &[i32], hi: &[i32]) -> LawField {
        use rayon::prelude::*;
        let d = env.d();
        let extent: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (b - a + 1).max(0) as usize).collect();
        let size: usize = extent.iter().product();
        let mut probs = vec![0.0; size * 2 * d];
        probs.par_chunks_mut(2 * d).enumerate().for_each(|(off, out)| {
            let mut x = vec![0i32; d];
            let mut o = off;
            for i in (0..d).rev() {
                x[i] = lo[i] + (o % extent[i]) as i32;
                o /= extent[i];
            }
            env.law_into(&x, out);
        });
        LawField { d, lo: lo.to_vec(), extent, probs, fallback: env.clone() }
    }

    fn from_points<'a>(env: &Environment, pts: impl Iterator<Item = &'a [i32]>) -> LawField {
        let d = env.d();
        let mut lo = vec![i32::MAX; d];
        let mut hi = vec![i32::MIN; d];
        for x in pts {
            for i in 0..d {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        if lo[0] > hi[0] {
            lo = vec![0; d];
            hi = vec![-1; d];
        }
        Self::from_box(env, &lo, &hi)
    }

    fn offset(&self, x: &[i32]) -> Option<usize> {
        let mut off = 0usize;
        for i in 0..self.d {
            let c = x[i] as i64 - self.lo[i] as i64;
            if c < 0 || c >= self.extent[i] as i64 {
                return None;
            }
            off = off * self.extent[i] + c as usize;
        }
        Some(off)
    }
}

impl LawSource for LawField {
    fn d(&self) -> usize {
        self.d
    }

    fn law_into(&self, x: &[i32], out: &mut [f64]) {
        match self.offset(x) {
            Some(off) => out.copy_from_slice(&self.probs[off * 2 * self.d..(off + 1) * 2 * self.d]),
            None => self.fallback.law_into(x, out),
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptPayload("truncated payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes the laws on the interior of `region`.
///
/// Layout (little-endian): magic, version u16, d u8, family tag u8, family
/// parameter u8, epsilon f64, seed u64, region box (i32 min and max per axis),
/// point count u64, then per point its coordinates (i32) and 2d laws (f64),
/// and finally a CRC32 of everything before it.
pub fn serialize(env: &Environment, region: &Domain) -> Result<Vec<u8>> {
    let d = env.d();
    if region.d() != d {
        return Err(Error::Domain("region dimension differs from environment".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&env.version.to_le_bytes());
    buf.push(d as u8);
    let (tag, param) = env.spec.family.tag();
    buf.push(tag);
    buf.push(param);
    push_f64(&mut buf, env.spec.epsilon);
    buf.extend_from_slice(&env.seed.to_le_bytes());
    let mut lo = vec![0i32; d];
    let mut hi = vec![0i32; d];
    if region.n_interior() > 0 {
        lo.fill(i32::MAX);
        hi.fill(i32::MIN);
        for x in region.interior() {
            for i in 0..d {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
    }
    for v in lo.iter().chain(hi.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(region.n_interior() as u64).to_le_bytes());
    for x in region.interior() {
        for c in x {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        for p in env.law(x).probs {
            push_f64(&mut buf, p);
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Inverse of [`serialize`]; serialized laws become site overrides.
pub fn deserialize(bytes: &[u8]) -> Result<(Environment, Vec<Point>)> {
    if bytes.len() < 4 + 4 || &bytes[..4] != MAGIC {
        return Err(Error::CorruptPayload("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let crc = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != crc {
        return Err(Error::CorruptPayload("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let d = r.u8()? as usize;
    if d == 0 {
        return Err(Error::CorruptPayload("zero dimension".into()));
    }
    let tag = r.u8()?;
    let param = r.u8()?;
    let family = Family::from_tag(tag, param)?;
    let epsilon = r.f64()?;
    let seed = r.u64()?;
    for _ in 0..2 * d {
        r.i32()?;
    }
    let count = r.u64()? as usize;
    let spec = FamilySpec::new(d, family, epsilon)
        .map_err(|e| Error::CorruptPayload(format!("invalid header: {e}")))?;
    let mut env = Environment { spec, seed, version, overrides: BTreeMap::new() };
    let mut points = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let x: Vec<i32> = (0..d).map(|_| r.i32()).collect::<Result<_>>()?;
        let probs: Probs = (0..2 * d).map(|_| r.f64()).collect::<Result<_>>()?;
        let p = Point::from(x);
        env.overrides.insert(p.clone(), SiteLaw { probs });
        points.push(p);
    }
    if r.pos != body.len() {
        return Err(Error::CorruptPayload("trailing bytes".into()));
    }
    Ok((env, points))
}

// ---------------------------------------------------------------------------
// Isotropy check

/// Generators of the signed permutation group acting on direction indices.
pub fn group_generators(d: usize) -> Vec<(String, Vec<usize>)> {
    let mut gens = Vec::new();
    if d >= 2 {
        for i in 0..d {
            let j = (i + 1) % d;
            if d == 2 && i == 1 {
                break;
            }
            let mut map: Vec<usize> = (0..2 * d).collect();
            for s in 0..2 {
                map[2 * i + s] = 2 * j + s;
                map[2 * j + s] = 2 * i + s;
            }
            gens.push((format!("swap({},{})", i + 1, j + 1), map));
        }
    }
    for i in 0..d {
        let mut map: Vec<usize> = (0..2 * d).collect();
        map[2 * i] = 2 * i + 1;
        map[2 * i + 1] = 2 * i;
        gens.push((format!("flip({})", i + 1), map));
    }
    gens
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub n_samples: usize,
    pub distances: Vec<(String, f64)>,
    pub max_distance: f64,
    pub threshold: f64,
    pub permutations: usize,
}

impl IsotropyReport {
    pub fn passes(&self) -> bool {
        self.max_distance <= self.threshold
    }

    pub fn distance(&self, name: &str) -> Option<f64> {
        self.distances.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn features(w: &[f64]) -> Vec<f64> {
    let d = w.len() / 2;
    let mut f: Vec<f64> = w.to_vec();
    f.extend((0..d).map(|i| w[2 * i] - w[2 * i + 1]));
    f
}

/// Two-sample KS distance on a pooled sorted sample with membership labels.
fn ks_labeled(sorted: &[(f64, u32, u8)], coins: &[bool]) -> f64 {
    let n = coins.len() as f64;
    let (mut ca, mut cb, mut best) = (0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            let (_, k, which) = sorted[i];
            let in_a = (which == 0) != coins[k as usize];
            if in_a {
                ca += 1.0;
            } else {
                cb += 1.0;
            }
            i += 1;
        }
        best = best.max((ca - cb).abs() / n);
    }
    best
}

/// `check_isotropy`: max two-sample distance between the laws of
/// `(ω(Oe))_e` and `(ω(e))_e` over group generators `O`, with a paired
/// permutation-test threshold at level 1%.
pub fn check_isotropy(spec: FamilySpec, n_samples: usize, seed: u64) -> Result<IsotropyReport> {
    use rayon::prelude::*;
    spec.check()?;
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let d = spec.d;
    let laws: Vec<SiteLaw> = (0..n_samples)
        .into_par_iter()
        .map(|k| spec.draw(&mut rng::stream(seed, rng::TAG_SITE, &[k as i64])))
        .collect();
    let gens = group_generators(d);
    let nf = 3 * d;
    // pooled[g][j]: sorted (value, sample, which) for generator g and feature j
    let pooled: Vec<Vec<Vec<(f64, u32, u8)>>> = gens
        .iter()
        .map(|(_, map)| {
            let mut per: Vec<Vec<(f64, u32, u8)>> = vec![Vec::with_capacity(2 * n_samples); nf];
            for (k, law) in laws.iter().enumerate() {
                let orig = features(&law.probs);
                let moved: Vec<f64> = (0..2 * d).map(|e| law.probs[map[e]]).collect();
                let img = features(&moved);
                for j in 0..nf {
                    per[j].push((orig[j], k as u32, 0));
                    per[j].push((img[j], k as u32, 1));
                }
            }
            for v in per.iter_mut() {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            per
        })
        .collect();
    let stat = |coins_for: &dyn Fn(usize) -> Vec<bool>| -> Vec<f64> {
        pooled
            .iter()
            .enumerate()
            .map(|(g, per)| {
                let coins = coins_for(g);
                per.iter().map(|s| ks_labeled(s, &coins)).fold(0.0, f64::max)
            })
            .collect()
    };
    let observed = stat(&|_| vec![false; n_samples]);
    const B: usize = 199;
    let mut null: Vec<f64> = (0..B)
        .into_par_iter()
        .map(|b| {
            let s = stat(&|g| {
                let mut r = rng::stream(seed, rng::TAG_TEST, &[b as i64, g as i64]);
                (0..n_samples).map(|_| r.random::<bool>()).collect()
            });
            s.into_iter().fold(0.0, f64::max)
        })
        .collect();
    null.sort_by(f64::total_cmp);
    let threshold = null[((B as f64) * 0.99).ceil() as usize - 1];
    let max_distance = observed.iter().cloned().fold(0.0, f64::max);
    Ok(IsotropyReport {
        n_samples,
        distances: gens.iter().map(|(n, _)| n.clone()).zip(observed).collect(),
        max_distance,
        threshold,
        permutations: B,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(f: Family, eps: f64) -> FamilySpec {
        FamilySpec::new(3, f, eps).unwrap()
    }

    #[test]
    fn srw_is_uniform() {
        let env = sample_environment(spec(Family::Srw, 0.1), 1).unwrap();
        for x in [[0, 0, 0], [5, -3, 2]] {
            assert_eq!(env.law(&x), SiteLaw::uniform(3));
        }
    }

    #[test]
    fn invalid_epsilon_rejected() {
        assert!(matches!(
            FamilySpec::new(3, Family::IsotropicTilt, 1.0 / 6.0),
            Err(Error::InvalidEpsilon { .. })
        ));
        assert!(FamilySpec::new(3, Family::IsotropicTilt, 0.16).is_ok());
    }

    #[test]
    fn balanced_axis_is_balanced() {
        let env = sample_environment(spec(Family::BalancedAxis { axis: 0 }, 0.05), 3).unwrap();
        for k in 0..200 {
            let l = env.law(&[k, -k, 2 * k]);
            assert_eq!(l.probs[0], l.probs[1]);
            l.validate(0.05).unwrap();
        }
    }

    #[test]
    fn tilt_means_are_uniform() {
        // 3-sigma test on each direction over 1e5 independent sites
        let s = spec(Family::IsotropicTilt, 0.05);
        let n = 100_000;
        let mut sum = [0.0f64; 6];
        let mut sq = [0.0f64; 6];
        for k in 0..n {
            let l = s.draw(&mut rng::stream(11, rng::TAG_SITE, &[k]));
            for e in 0..6 {
                sum[e] += l.probs[e];
                sq[e] += l.probs[e] * l.probs[e];
            }
        }
        for e in 0..6 {
            let m = sum[e] / n as f64;
            let var = sq[e] / n as f64 - m * m;
            let se = (var / n as f64).sqrt();
            assert!((m - 1.0 / 6.0).abs() <= 3.0 * se, "dir {e}: mean {m} se {se}");
        }
    }

    #[test]
    fn symmetric_balanced_is_balanced_in_all_axes() {
        let env = sample_environment(spec(Family::SymmetricBalanced, 0.1), 5).unwrap();
        for k in 0..100 {
            let l = env.law(&[k, 1, -k]);
            for a in 0..3 {
                assert_eq!(l.probs[2 * a], l.probs[2 * a + 1]);
            }
            l.validate(0.1).unwrap();
        }
    }

    #[test]
    fn isotropy_reports() {
        let r = check_isotropy(spec(Family::Srw, 0.05), 500, 1).unwrap();
        assert!(r.distances.iter().all(|(_, v)| *v == 0.0));
        let r = check_isotropy(spec(Family::IsotropicTilt, 0.05), 10_000, 2).unwrap();
        assert!(r.passes(), "{r:?}");
        let r = check_isotropy(spec(Family::BalancedAxis { axis: 0 }, 0.05), 10_000, 3).unwrap();
        assert!(r.distance("swap(1,2)").unwrap() > r.threshold, "{r:?}");
    }

    #[test]
    fn serialization_round_trip() {
        let env = sample_environment(spec(Family::IsotropicTilt, 0.05), 42).unwrap();
        let region = Domain::ball(&[1, 2, 3], 3.0).unwrap();
        let bytes = serialize(&env, &region).unwrap();
        let (back, pts) = deserialize(&bytes).unwrap();
        assert_eq!(pts.len(), region.n_interior());
        assert_eq!(back.seed, 42);
        assert_eq!(back.spec, env.spec);
        for x in region.interior() {
            let a = env.law(x);
            let b = back.law(x);
            for (p, q) in a.probs.iter().zip(&b.probs) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn tampered_and_versioned_payloads() {
        let env = sample_environment(spec(Family::IsotropicTilt, 0.05), 42).unwrap();
        let region = Domain::ball(&[0, 0, 0], 1.0).unwrap();
        let mut bytes = serialize(&env, &region).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0xff;
        assert!(matches!(deserialize(&bytes), Err(Error::CorruptPayload(_))));
        let mut bytes = serialize(&env, &region).unwrap();
        bytes[20] ^= 0x01;
        assert!(matches!(deserialize(&bytes), Err(Error::CorruptPayload(_))));
        let mut bytes = serialize(&env, &region).unwrap();
        bytes[4] = 9;
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(deserialize(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn empty_region_is_header_only() {
        let env = sample_environment(spec(Family::Srw, 0.0), 1).unwrap();
        let region = Domain::explicit(3, &[]).unwrap();
        let bytes = serialize(&env, &region).unwrap();
        assert_eq!(bytes.len(), 4 + 2 + 3 + 8 + 8 + 24 + 8 + 4);
        let (_, pts) = deserialize(&bytes).unwrap();
        assert!(pts.is_empty());
    }

    proptest! {
        #[test]
        fn laws_are_deterministic_and_valid(
            seed in any::<u64>(),
            x in proptest::collection::vec(-50i32..50, 3),
            fam in 0usize..4,
            eps in 0.0f64..0.16,
        ) {
            let family = [Family::Srw, Family::IsotropicTilt, Family::BalancedAxis { axis: 2 }, Family::SymmetricBalanced][fam];
            let env = sample_environment(spec(family, eps), seed).unwrap();
            let a = env.law(&x);
            prop_assert_eq!(&a, &env.law(&x));
            prop_assert!(a.validate(eps).is_ok());
        }
    }
}
