//! Coarse-grained kernels.
//!
//! For a radius `m` the ball `V_t(x) ∩ W` is piecewise constant in `t`, with
//! breaks where `t^2` crosses an attainable squared norm. The mixture over
//! `t ~ (1/m) φ(t/m) dt` is therefore a finite sum of exit laws, each
//! weighted by a CDF increment of `φ`. All pieces for one `x` are prefixes of
//! the norm-sorted ball around `x`, so a single envelope LU covers them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use super::field::SmoothingField;
use super::mollifier::Mollifier;
use super::templates::srw_ball_templates;
use super::Kernel;
use crate::environment::{Environment, LawSource};
use crate::error::{Error, Result};
use crate::lattice::{attainable_sq_norms, capacity_limit, isqrt, Domain};
use crate::solver::linalg::{Csr, SkylineLu};

#[derive(Clone, Copy)]
pub enum BaseWalk<'a> {
    Srw,
    Env(&'a dyn LawSource),
}

/// `(squared radius, weight)` pieces of the mixture for radius `m` in dimension `d`.
pub fn pieces(m: f64, d: usize) -> Result<Vec<(i64, f64)>> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::DegenerateField(format!("radius {m} must be positive")));
    }
    let m2 = m * m;
    let top = (4.0 * m2).ceil() as i64;
    let norms = attainable_sq_norms(d, top);
    let start = norms.partition_point(|&n| (n as f64) <= m2) - 1;
    let mut br: Vec<i64> = vec![norms[start]];
    br.extend(norms[start + 1..].iter().copied().filter(|&n| (n as f64) < 4.0 * m2));
    let mol = Mollifier::standard();
    let mut out = Vec::with_capacity(br.len());
    for k in 0..br.len() {
        let lo = (br[k] as f64).sqrt().max(m);
        let hi = if k + 1 < br.len() { (br[k + 1] as f64).sqrt().min(2.0 * m) } else { 2.0 * m };
        let w = mol.weight(lo, hi, m);
        if w > 0.0 {
            out.push((br[k], w));
        }
    }
    Ok(out)
}

/// Offsets of a centred ball plus one layer, sorted by squared norm.
#[derive(Debug)]
pub struct BallOffsets {
    pub d: usize,
    pub n_inner: i64,
    pub radius: i32,
    coords: Vec<i32>,
    pub norms: Vec<i64>,
    nbr: Vec<u32>,
    grid: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl BallOffsets {
    fn build(d: usize, n_inner: i64) -> BallOffsets {
        let n_outer = n_inner + 2 * isqrt(n_inner) + 1;
        let radius = isqrt(n_outer) as i32;
        let side = (2 * radius + 1) as usize;
        let mut pts: Vec<(i64, Vec<i32>)> = Vec::new();
        let mut x = vec![-radius; d];
        loop {
            let n2: i64 = x.iter().map(|&c| (c as i64) * (c as i64)).sum();
            if n2 <= n_outer {
                pts.push((n2, x.clone()));
            }
            let mut k = d;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                x[k] += 1;
                if x[k] <= radius {
                    k = usize::MAX;
                    break;
                }
                x[k] = -radius;
            }
            if k != usize::MAX {
                break;
            }
        }
        pts.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut grid = vec![NONE; side.pow(d as u32)];
        let gidx = |x: &[i32]| -> usize {
            x.iter().fold(0usize, |acc, &c| acc * side + (c + radius) as usize)
        };
        for (k, (_, p)) in pts.iter().enumerate() {
            grid[gidx(p)] = k as u32;
        }
        let mut nbr = vec![NONE; pts.len() * 2 * d];
        for (k, (n2, p)) in pts.iter().enumerate() {
            if *n2 > n_inner {
                continue;
            }
            let mut y = p.clone();
            for dir in 0..2 * d {
                let s = if dir % 2 == 0 { 1 } else { -1 };
                y[dir / 2] += s;
                nbr[k * 2 * d + dir] = grid[gidx(&y)];
                y[dir / 2] -= s;
            }
        }
        BallOffsets {
            d,
            n_inner,
            radius,
            norms: pts.iter().map(|p| p.0).collect(),
            coords: pts.into_iter().flat_map(|p| p.1).collect(),
            nbr,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn offset(&self, k: usize) -> &[i32] {
        &self.coords[k * self.d..(k + 1) * self.d]
    }

    pub fn position(&self, o: &[i32]) -> Option<usize> {
        let side = (2 * self.radius + 1) as usize;
        let mut g = 0usize;
        for &c in o {
            if c.abs() > self.radius {
                return None;
            }
            g = g * side + (c + self.radius) as usize;
        }
        match self.grid[g] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    /// Number of offsets with squared norm `<= n`.
    pub fn prefix(&self, n: i64) -> usize {
        self.norms.partition_point(|&v| v <= n)
    }
}

/// Shared offset table for a centred ball of squared radius `n_inner`.
pub fn ball_offsets(d: usize, n_inner: i64) -> Arc<BallOffsets> {
    type Cache = Mutex<HashMap<(usize, i64), Arc<BallOffsets>>>;
    static C: OnceLock<Cache> = OnceLock::new();
    let c = C.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = c.lock().unwrap().get(&(d, n_inner)) {
        return b.clone();
    }
    let b = Arc::new(BallOffsets::build(d, n_inner));
    c.lock().unwrap().entry((d, n_inner)).or_insert(b).clone()
}

/// A mixture of exit laws from `x`, over positions in a [`BallOffsets`] table.
#[derive(Clone, Debug)]
pub struct LocalExit {
    pub offsets: Arc<BallOffsets>,
    pub exits: Vec<(u32, f64)>,
    pub mean_time: f64,
}

impl LocalExit {
    pub fn offset(&self, pos: u32) -> &[i32] {
        self.offsets.offset(pos as usize)
    }
}

/// `Σ_k w_k ex_{V_k}(x, ·)` with `V_k = {y : |y-x|^2 <= n_k, inside(y)}`,
/// together with `Σ_k w_k E_x[τ_{V_k}]`.
pub fn mixed_exit(
    base: BaseWalk<'_>,
    x: &[i32],
    pieces: &[(i64, f64)],
    inside: &(dyn Fn(&[i32]) -> bool + Sync),
) -> Result<LocalExit> {
    let d = x.len();
    let n_max = pieces.iter().map(|p| p.0).max().unwrap_or(0);
    let bo = ball_offsets(d, n_max);
    let cap = bo.prefix(n_max);
    if cap > capacity_limit() {
        return Err(Error::Capacity { needed: cap, limit: capacity_limit() });
    }
    let mut y = vec![0i32; d];
    let point = |k: usize, y: &mut Vec<i32>| {
        for i in 0..d {
            y[i] = x[i] + bo.offset(k)[i];
        }
    };
    // local states: positions inside the domain within the largest ball
    let mut local = vec![NONE; bo.len()];
    let mut states: Vec<usize> = Vec::new();
    for k in 0..cap {
        point(k, &mut y);
        if inside(&y) {
            local[k] = states.len() as u32;
            states.push(k);
        }
    }
    if states.first() != Some(&0) {
        return Err(Error::Domain(format!("start point {x:?} is not inside the domain")));
    }
    let counts: Vec<usize> = pieces
        .iter()
        .map(|&(n, _)| states.partition_point(|&k| bo.norms[k] <= n))
        .collect();
    let uncut: Vec<bool> = pieces.iter().zip(&counts).map(|(&(n, _), &c)| c == bo.prefix(n)).collect();
    let mut acc = vec![0.0; bo.len()];
    let mut mean = 0.0;
    let srw = matches!(base, BaseWalk::Srw);
    if srw && uncut.iter().any(|&u| u) {
        let ns: Vec<i64> = pieces.iter().zip(&uncut).filter(|p| *p.1).map(|p| p.0 .0).collect();
        let temps = srw_ball_templates(d, &ns)?;
        let mut ti = 0;
        for (k, &(_, w)) in pieces.iter().enumerate() {
            if !uncut[k] {
                continue;
            }
            let t = &temps[ti];
            ti += 1;
            for (o, p) in &t.exits {
                acc[bo.position(o).expect("template exit inside offset table")] += w * p;
            }
            mean += w * t.mean_time;
        }
    }
    if !(srw && uncut.iter().all(|&u| u)) {
        let ns = states.len();
        let mut law = vec![1.0 / (2 * d) as f64; 2 * d];
        let mut trans: Vec<(u32, f64)> = Vec::with_capacity(ns * 2 * d);
        let mut t_int = Vec::with_capacity(ns * (2 * d + 1));
        for (i, &k) in states.iter().enumerate() {
            if let BaseWalk::Env(env) = base {
                point(k, &mut y);
                env.law_into(&y, &mut law);
            }
            t_int.push((i as u32, i as u32, 1.0));
            for dir in 0..2 * d {
                let j = bo.nbr[k * 2 * d + dir];
                trans.push((j, law[dir]));
                if local[j as usize] != NONE {
                    t_int.push((i as u32, local[j as usize], -law[dir]));
                }
            }
        }
        let a = Csr::from_triplets(ns, ns, t_int);
        let lu = SkylineLu::factor(&a)?;
        let mut e = vec![0.0; ns];
        e[0] = 1.0;
        let yv = lu.forward_ut(&e);
        for (pk, &(_, w)) in pieces.iter().enumerate() {
            if srw && uncut[pk] {
                continue;
            }
            let c = counts[pk];
            let u = lu.backward_lt(&yv, c);
            for (i, &ui) in u.iter().enumerate() {
                if ui == 0.0 {
                    continue;
                }
                for &(j, p) in &trans[i * 2 * d..(i + 1) * 2 * d] {
                    let l = local[j as usize];
                    if l == NONE || l as usize >= c {
                        acc[j as usize] += w * ui * p;
                    }
                }
            }
            mean += w * u.iter().sum::<f64>();
        }
    }
    let exits = acc
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(k, &v)| (k as u32, v))
        .collect();
    Ok(LocalExit { offsets: bo, exits, mean_time: mean })
}

/// A coarse kernel together with its mixture of mean exit times.
///
/// For the nearest-neighbour walk of an environment the second field is the
/// sojourn weight `Λ(x)`; for simple random walk it is `λ(x)`.
#[derive(Clone, Debug)]
pub struct CoarseOutput {
    pub kernel: Kernel,
    pub sojourn: Vec<f64>,
}

/// Coarse graining of `base` on `W` with radius field `field`.
pub fn coarse_grain(base: BaseWalk<'_>, field: &SmoothingField, w: &Arc<Domain>) -> Result<CoarseOutput> {
    field.check()?;
    let inside = |y: &[i32]| w.is_interior(y);
    let rows: Vec<(Vec<(u32, f64)>, f64)> = (0..w.n_interior())
        .into_par_iter()
        .map(|i| {
            let x = w.point(i);
            let m = field.value(x);
            let pcs = pieces(m, x.len())?;
            let le = mixed_exit(base, x, &pcs, &inside)?;
            let mut z = vec![0i32; x.len()];
            let row = le
                .exits
                .iter()
                .map(|&(pos, p)| {
                    let o = le.offset(pos);
                    for k in 0..x.len() {
                        z[k] = x[k] + o[k];
                    }
                    let j = w.index_of(&z).expect("exit point lies in the domain closure");
                    (j as u32, p)
                })
                .collect();
            Ok((row, le.mean_time))
        })
        .collect::<Result<_>>()?;
    let (rows, sojourn): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(CoarseOutput { kernel: Kernel::from_rows(w.clone(), rows)?, sojourn })
}

pub fn coarse_grain_srw(field: &SmoothingField, w: &Arc<Domain>) -> Result<CoarseOutput> {
    coarse_grain(BaseWalk::Srw, field, w)
}

/// Coarse graining of an environment's walk, with laws tabulated on `W` first.
pub fn coarse_grain_env(env: &Environment, field: &SmoothingField, w: &Arc<Domain>) -> Result<CoarseOutput> {
    if env.is_srw() {
        return coarse_grain_srw(field, w);
    }
    let laws = env.materialize(w);
    coarse_grain(BaseWalk::Env(&laws), field, w)
}

/// One row of the uncut coarse SRW kernel `π̂_m(0, ·)`, over offsets.
pub fn srw_coarse_step(m: f64, d: usize) -> Result<Vec<(Vec<i32>, f64)>> {
    let pcs = pieces(m, d)?;
    let le = mixed_exit(BaseWalk::Srw, &vec![0; d], &pcs, &|_| true)?;
    Ok(le.exits.iter().map(|&(pos, p)| (le.offset(pos).to_vec(), p)).collect())
}
