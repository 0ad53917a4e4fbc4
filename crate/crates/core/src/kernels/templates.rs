//! Exit laws of simple random walk from centred lattice balls.
//!
//! The walk started at the centre commutes with the signed permutation
//! group, so it is solved on orbit representatives (sorted absolute values)
//! and the orbit exit probabilities are spread uniformly over each orbit.
//! States are ordered by squared norm, so the balls `{|y|^2 <= n}` are
//! prefixes and one envelope LU serves every radius.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{capacity_limit, isqrt};
use crate::solver::linalg::{Csr, SkylineLu};

pub type Offset = SmallVec<[i32; 4]>;

#[derive(Clone, Debug)]
pub struct BallTemplate {
    pub d: usize,
    pub n: i64,
    /// Number of lattice points with `|y|^2 <= n`.
    pub size: usize,
    /// `E_0[τ]` in steps.
    pub mean_time: f64,
    /// Exit law from the centre, over offsets.
    pub exits: Vec<(Offset, f64)>,
}

fn canonical(y: &[i32]) -> Offset {
    let mut r: Offset = y.iter().map(|c| c.abs()).collect();
    r.sort_unstable_by(|a, b| b.cmp(a));
    r
}

fn rep_norm2(r: &[i32]) -> i64 {
    r.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

/// Size of the signed-permutation orbit of a representative.
pub fn orbit_size(rep: &[i32]) -> usize {
    let d = rep.len();
    let mut size: usize = (1..=d).product();
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && rep[j] == rep[i] {
            j += 1;
        }
        size /= (1..=(j - i)).product::<usize>();
        i = j;
    }
    size << rep.iter().filter(|&&c| c != 0).count()
}

/// All points in the orbit of a representative.
pub fn orbit_points(rep: &[i32]) -> Vec<Offset> {
    let mut perm: Vec<i32> = rep.to_vec();
    perm.sort_unstable();
    let mut out = Vec::new();
    loop {
        let nz: Vec<usize> = (0..perm.len()).filter(|&i| perm[i] != 0).collect();
        for mask in 0..(1u32 << nz.len()) {
            let mut p: Offset = perm.iter().copied().collect();
            for (b, &i) in nz.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    p[i] = -p[i];
                }
            }
            out.push(p);
        }
        // next lexicographic permutation of the multiset
        let Some(i) = (0..perm.len().saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..perm.len()).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    out
}

/// Orbit representatives with `|r|^2 <= max_n`, sorted by norm then lexicographically.
pub fn orbit_reps(d: usize, max_n: i64) -> Vec<Offset> {
    let mut out = Vec::new();
    let mut cur: Offset = SmallVec::new();
    fn rec(d: usize, max_n: i64, cap: i32, cur: &mut Offset, acc: i64, out: &mut Vec<Offset>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for c in 0..=cap {
            let a = acc + (c as i64) * (c as i64);
            if a > max_n {
                break;
            }
            cur.push(c);
            rec(d, max_n, c, cur, a, out);
            cur.pop();
        }
    }
    let top = isqrt(max_n.max(0)) as i32;
    rec(d, max_n, top, &mut cur, 0, &mut out);
    out.sort_by(|a, b| rep_norm2(a).cmp(&rep_norm2(b)).then_with(|| a.cmp(b)));
    out
}

/// The lumped chain on a centred ball and its envelope factorization.
pub struct LumpedBall {
    pub d: usize,
    pub n_max: i64,
    pub reps: Vec<Offset>,
    pub norms: Vec<i64>,
    /// Number of interior states for `n_max`.
    pub n_int: usize,
    /// Lumped transitions, rows over interior states, columns over all reps.
    pub m: Csr,
    pub lu: SkylineLu,
}

impl LumpedBall {
    pub fn new(d: usize, n_max: i64) -> Result<LumpedBall> {
        let outer = n_max + 2 * isqrt(n_max) + 1;
        let reps = orbit_reps(d, outer);
        let norms: Vec<i64> = reps.iter().map(|r| rep_norm2(r)).collect();
        let n_int = norms.partition_point(|&v| v <= n_max);
        if n_int > capacity_limit() {
            return Err(Error::Capacity { needed: n_int, limit: capacity_limit() });
        }
        let index: HashMap<&[i32], u32> =
            reps.iter().enumerate().map(|(i, r)| (&r[..], i as u32)).collect();
        let w = 1.0 / (2 * d) as f64;
        let mut t = Vec::with_capacity(n_int * 2 * d);
        for (i, rep) in reps.iter().take(n_int).enumerate() {
            for axis in 0..d {
                for s in [1, -1] {
                    let mut y = rep.clone();
                    y[axis] += s;
                    let c = canonical(&y);
                    t.push((i as u32, index[&c[..]], w));
                }
            }
        }
        let m = Csr::from_triplets(n_int, reps.len(), t);
        let mut a_t = Vec::with_capacity(m.nnz() + n_int);
        for i in 0..n_int {
            a_t.push((i as u32, i as u32, 1.0));
            let (c, v) = m.row(i);
            for (&j, &p) in c.iter().zip(v) {
                if (j as usize) < n_int {
                    a_t.push((i as u32, j, -p));
                }
            }
        }
        let a = Csr::from_triplets(n_int, n_int, a_t);
        let lu = SkylineLu::factor(&a)?;
        Ok(LumpedBall { d, n_max, reps, norms, n_int, m, lu })
    }

    /// Number of interior representatives for squared radius `n`.
    pub fn prefix(&self, n: i64) -> usize {
        self.norms.partition_point(|&v| v <= n)
    }

    /// `E_0[τ]` for each squared radius in `ns` (all `<= n_max`).
    pub fn mean_times(&self, ns: &[i64]) -> Vec<f64> {
        let mut e = vec![0.0; self.n_int];
        e[0] = 1.0;
        let y = self.lu.forward_ut(&e);
        let v = self.lu.forward_l(&vec![1.0; self.n_int]);
        let mut partial = Vec::with_capacity(self.n_int + 1);
        partial.push(0.0);
        let mut acc = 0.0;
        for i in 0..self.n_int {
            acc += y[i] * v[i];
            partial.push(acc);
        }
        ns.iter().map(|&n| partial[self.prefix(n)]).collect()
    }

    /// Exit law over representatives for squared radius `n`, and `E_0[τ]`.
    pub fn orbit_exit(&self, n: i64) -> (Vec<(usize, f64)>, f64) {
        let c = self.prefix(n);
        let mut e = vec![0.0; self.n_int];
        e[0] = 1.0;
        let y = self.lu.forward_ut(&e);
        let u = self.lu.backward_lt(&y, c);
        let mut ex: HashMap<usize, f64> = HashMap::new();
        for (i, &ui) in u.iter().enumerate() {
            let (cols, vals) = self.m.row(i);
            for (&j, &p) in cols.iter().zip(vals) {
                if j as usize >= c {
                    *ex.entry(j as usize).or_insert(0.0) += ui * p;
                }
            }
        }
        let mut ex: Vec<(usize, f64)> = ex.into_iter().collect();
        ex.sort_unstable_by_key(|e| e.0);
        (ex, u.iter().sum())
    }

    pub fn size(&self, n: i64) -> usize {
        self.reps[..self.prefix(n)].iter().map(|r| orbit_size(r)).sum()
    }
}

type Cache = Mutex<HashMap<(usize, i64), Arc<BallTemplate>>>;

fn cache() -> &'static Cache {
    static C: OnceLock<Cache> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Exit templates for the given squared radii, cached process-wide.
pub fn srw_ball_templates(d: usize, ns: &[i64]) -> Result<Vec<Arc<BallTemplate>>> {
    let missing: Vec<i64> = {
        let c = cache().lock().unwrap();
        let mut m: Vec<i64> = ns.iter().copied().filter(|n| !c.contains_key(&(d, *n))).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    if let Some(&n_max) = missing.last() {
        let ball = LumpedBall::new(d, n_max.max(0))?;
        let mut built = Vec::with_capacity(missing.len());
        for &n in &missing {
            let (ex, mean_time) = ball.orbit_exit(n);
            let mut exits = Vec::new();
            for (j, p) in ex {
                let pts = orbit_points(&ball.reps[j]);
                let share = p / pts.len() as f64;
                exits.extend(pts.into_iter().map(|o| (o, share)));
            }
            exits.sort_by(|a, b| a.0.cmp(&b.0));
            built.push(BallTemplate { d, n, size: ball.size(n), mean_time, exits });
        }
        let mut c = cache().lock().unwrap();
        for t in built {
            c.entry((d, t.n)).or_insert_with(|| Arc::new(t));
        }
    }
    let c = cache().lock().unwrap();
    Ok(ns.iter().map(|n| c[&(d, *n)].clone()).collect())
}

/// `E_0[τ]` on centred balls of squared radius `n` without building templates.
pub fn srw_ball_mean_times(d: usize, ns: &[i64]) -> Result<Vec<f64>> {
    let n_max = ns.iter().copied().max().unwrap_or(0).max(0);
    Ok(LumpedBall::new(d, n_max)?.mean_times(ns))
}

/// `E_0|X_τ|^2` on centred balls, from the lumped exit laws.
pub fn srw_ball_exit_second_moments(d: usize, ns: &[i64]) -> Result<Vec<f64>> {
    let n_max = ns.iter().copied().max().unwrap_or(0).max(0);
    let ball = LumpedBall::new(d, n_max)?;
    Ok(ns
        .iter()
        .map(|&n| {
            let (ex, _) = ball.orbit_exit(n);
            ex.iter().map(|&(j, p)| p * ball.norms[j] as f64).sum()
        })
        .collect())
}
