//! Direct simulation of the nearest-neighbour walk.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{Environment, LawSource};
use crate::error::{Error, Result};
use crate::kernels::rwre_kernel;
use crate::lattice::{isqrt, norm2, sq_threshold, Domain};
use crate::reference::special::wilson_interval;
use crate::rng::{stream, TAG_WALK};
use crate::solver::green;

pub const STEP_CAP: u64 = 100_000_000;
const BATCH: u64 = 256;

/// Cumulative step laws and neighbour indices for every interior point.
struct WalkTable {
    dirs: usize,
    cum: Vec<f64>,
    next: Vec<u32>,
}

impl WalkTable {
    fn new(env: &Environment, dom: &Domain) -> WalkTable {
        let d = dom.d();
        let dirs = 2 * d;
        let n = dom.n_interior();
        let laws = env.materialize(dom);
        let mut cum = vec![0.0; n * dirs];
        let mut next = vec![0u32; n * dirs];
        let mut p = vec![0.0; dirs];
        for i in 0..n {
            laws.law_into(dom.point(i), &mut p);
            let mut acc = 0.0;
            for k in 0..dirs {
                acc += p[k];
                cum[i * dirs + k] = acc;
                next[i * dirs + k] = dom.neighbor(i, k).expect("interior points have all neighbours") as u32;
            }
            cum[i * dirs + dirs - 1] = f64::INFINITY;
        }
        WalkTable { dirs, cum, next }
    }

    #[inline]
    fn step<R: Rng>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cum[i * self.dirs..(i + 1) * self.dirs];
        let k = row.iter().position(|&c| u < c).unwrap_or(self.dirs - 1);
        self.next[i * self.dirs + k] as usize
    }
}

/// Runs walks from `start` until `stop(index)` holds or the walk leaves the
/// interior; returns per-index counts of the stopping position and the number
/// of walks that hit the step cap.
fn run_walks(
    table: &WalkTable,
    dom: &Domain,
    start: usize,
    stop: &(dyn Fn(usize) -> bool + Sync),
    n_walks: u64,
    seed: u64,
    counters: &[i64],
    cap: u64,
) -> (Vec<u64>, u64) {
    let n_batches = n_walks.div_ceil(BATCH);
    let n_int = dom.n_interior();
    (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut c: Vec<i64> = counters.to_vec();
            c.push(b as i64);
            let mut rng = stream(seed, TAG_WALK, &c);
            let mut counts = vec![0u64; dom.len()];
            let mut aborted = 0u64;
            for _ in (b * BATCH)..((b + 1) * BATCH).min(n_walks) {
                let mut i = start;
                let mut steps = 0u64;
                loop {
                    if i >= n_int || stop(i) {
                        counts[i] += 1;
                        break;
                    }
                    if steps == cap {
                        aborted += 1;
                        break;
                    }
                    i = table.step(i, &mut rng);
                    steps += 1;
                }
            }
            (counts, aborted)
        })
        .reduce(
            || (vec![0u64; dom.len()], 0),
            |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                (a.0, a.1 + b.1)
            },
        )
}

#[derive(Clone, Debug, Serialize)]
pub struct McExit {
    pub l: f64,
    pub x: Vec<i32>,
    pub n_walks: u64,
    /// walks stopped at the step cap; excluded from the frequencies
    pub aborted: u64,
    pub boundary: Vec<Vec<i32>>,
    pub counts: Vec<u64>,
    pub freq: Vec<f64>,
    /// Wilson 95% interval per boundary point
    pub ci: Vec<(f64, f64)>,
}

impl McExit {
    /// `||freq - exact||_1` with `exact` indexed like `boundary`.
    pub fn l1_to(&self, exact: &[f64]) -> f64 {
        self.freq.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Empirical exit law of `V_L` from `x`.
pub fn mc_exit(env: &Environment, x: &[i32], l: f64, n_walks: u64, seed: u64, cap: u64) -> Result<McExit> {
    let d = env.d();
    let dom = Domain::ball(&vec![0; d], l)?;
    let boundary: Vec<Vec<i32>> = dom.boundary().map(|p| p.to_vec()).collect();
    let nb = boundary.len();
    let Some(start) = dom.index_of(x).filter(|&i| i < dom.n_interior()) else {
        return Err(Error::Domain(format!("start {x:?} outside V_{l}")));
    };
    let table = WalkTable::new(env, &dom);
    let (counts, aborted) = run_walks(&table, &dom, start, &|_| false, n_walks, seed, &[0], cap);
    let counts: Vec<u64> = counts[dom.n_interior()..].to_vec();
    let done = n_walks - aborted;
    let freq = counts.iter().map(|&c| if done > 0 { c as f64 / done as f64 } else { 0.0 }).collect();
    let ci = counts.iter().map(|&c| wilson_interval(c, done, 1.96)).collect();
    debug_assert_eq!(counts.len(), nb);
    Ok(McExit { l, x: x.to_vec(), n_walks, aborted, boundary, counts, freq, ci })
}

/// `V_{l_out}` with the ball `V_{l_in}` removed from the interior.
fn annulus(d: usize, l_in: f64, l_out: f64) -> Result<(Domain, i64)> {
    if !(l_in >= 0.0 && l_in < l_out) {
        return Err(Error::Config(format!("need 0 <= l_in < l_out, got ({l_in}, {l_out})")));
    }
    let n_in = sq_threshold(l_in).unwrap_or(-1);
    let n_out = sq_threshold(l_out).unwrap_or(0);
    let r = isqrt(n_out) as i32;
    let dom = Domain::from_predicate(&vec![-r; d], &vec![r; d], |y| {
        let n = norm2(y);
        n <= n_out && n > n_in
    })?;
    Ok((dom, n_in))
}

/// Exact `P_{x,ω}(T_{V_{l_in}} < τ_{V_{l_out}})` by one harmonic solve.
pub fn hit_before_exit_exact(env: &Environment, l_in: f64, l_out: f64, x: &[i32]) -> Result<f64> {
    let (dom, n_in) = annulus(env.d(), l_in, l_out)?;
    if norm2(x) <= n_in {
        return Ok(1.0);
    }
    let Some(ix) = dom.index_of(x).filter(|&i| i < dom.n_interior()) else {
        return Ok(0.0);
    };
    let dom = Arc::new(dom);
    let k = rwre_kernel(&env.materialize(&dom), &dom)?;
    let b: Vec<f64> = (0..dom.n_interior())
        .map(|i| {
            let (c, v) = k.row(i);
            c.iter().zip(v).filter(|(&j, _)| norm2(dom.point(j as usize)) <= n_in).map(|(_, p)| p).sum()
        })
        .collect();
    Ok(green(&k)?.solve(&b)?[ix])
}

#[derive(Clone, Debug, Serialize)]
pub struct TransienceRow {
    pub l_in: f64,
    pub l_out: f64,
    pub k: u32,
    pub x: Vec<i32>,
    pub n_walks: u64,
    pub aborted: u64,
    pub hits: u64,
    /// `P_x(T_{V_{l_in}} < τ_{V_{l_out}})` estimate
    pub estimate: f64,
    pub ci: (f64, f64),
    /// `(2/3)^k`, printed for reference
    pub majorant: f64,
}

/// Escape table: for each pair `(l_in, l_out)` and `k = 1..=k_max`, walks
/// start at `round(l_in ρ^k) e_1` while that point lies strictly inside the
/// annulus.
pub fn transience_probe(
    env: &Environment,
    pairs: &[(f64, f64)],
    rho: f64,
    k_max: u32,
    n_walks: u64,
    seed: u64,
    cap: u64,
) -> Result<Vec<TransienceRow>> {
    let d = env.d();
    let mut out = Vec::new();
    for (p, &(l_in, l_out)) in pairs.iter().enumerate() {
        if l_in == l_out {
            return Err(Error::Config(format!("degenerate pair l_in = l_out = {l_in}")));
        }
        let (dom, n_in) = annulus(d, l_in, l_out)?;
        let table = WalkTable::new(env, &dom);
        let n_dom = dom.n_interior();
        for k in 1..=k_max {
            let mut x = vec![0; d];
            x[0] = (l_in * rho.powi(k as i32)).round() as i32;
            let Some(start) = dom.index_of(&x).filter(|&i| i < n_dom) else {
                break;
            };
            let (counts, aborted) =
                run_walks(&table, &dom, start, &|_| false, n_walks, seed, &[p as i64, k as i64], cap);
            let hits: u64 = (n_dom..dom.len()).filter(|&j| norm2(dom.point(j)) <= n_in).map(|j| counts[j]).sum();
            let done = n_walks - aborted;
            out.push(TransienceRow {
                l_in,
                l_out,
                k,
                x,
                n_walks,
                aborted,
                hits,
                estimate: if done > 0 { hits as f64 / done as f64 } else { 0.0 },
                ci: wilson_interval(hits, done, 1.96),
                majorant: (2.0f64 / 3.0).powi(k as i32),
            });
        }
    }
    Ok(out)
}
