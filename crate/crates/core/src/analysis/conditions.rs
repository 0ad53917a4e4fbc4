//! Frequencies of the `b_i` events and the mean exit time condition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{d_metrics_multi, srw_green};
use crate::environment::{sample_environment, FamilySpec};
use crate::error::Result;
use crate::kernels::{rwre_kernel, srw_kernel, SmoothingField};
use crate::lattice::Domain;
use crate::reference::special::wilson_interval;
use crate::rng::child_seed;
use crate::solver::{green, mean_exit_time};

/// `f_η(L) = (η/3) Σ_{k=1}^{⌈log L⌉} k^{-3/2}`, with at least one term.
pub fn f_eta(eta: f64, l: f64) -> f64 {
    let top = l.ln().ceil().max(1.0) as u64;
    eta / 3.0 * (1..=top).map(|k| (k as f64).powf(-1.5)).sum::<f64>()
}

/// `(1/4) exp(-((3+i)/4) (log L)^2)`.
pub fn c1_threshold(l: f64, i: u8) -> f64 {
    0.25 * (-((3.0 + i as f64) / 4.0) * l.ln().powi(2)).exp()
}

/// Which of the disjoint events `b_1..b_4` holds, if any.
pub fn b_event(l: f64, d_star: f64, d_star_psi: f64, delta: f64) -> Option<u8> {
    let lg = l.ln();
    let thr = |i: u8| lg.powf(-9.0 + 9.0 * i as f64 / 4.0);
    if d_star > delta || d_star_psi > thr(3) {
        return Some(4);
    }
    (1..=3).find(|&i| d_star_psi > thr(i - 1) && d_star_psi <= thr(i))
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Sample {
    pub env_index: u64,
    pub env_seed: u64,
    pub l: f64,
    pub psi: usize,
    pub d_star: f64,
    pub d_star_psi: f64,
    pub event: Option<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Row {
    pub l: f64,
    pub psi: usize,
    pub i: u8,
    pub count: u64,
    pub n: u64,
    pub freq: f64,
    pub ci: (f64, f64),
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Table {
    pub delta: f64,
    pub samples: Vec<C1Sample>,
    pub rows: Vec<C1Row>,
}

/// Aggregates per-sample events into one row per `(L, ψ, i)`.
pub fn c1_rows(samples: &[C1Sample], ls: &[f64], n_psi: usize) -> Vec<C1Row> {
    let mut rows = Vec::new();
    for &l in ls {
        for psi in 0..n_psi {
            let sel: Vec<&C1Sample> = samples.iter().filter(|s| s.l == l && s.psi == psi).collect();
            let n = sel.len() as u64;
            for i in 1..=4u8 {
                let count = sel.iter().filter(|s| s.event == Some(i)).count() as u64;
                let freq = if n > 0 { count as f64 / n as f64 } else { 0.0 };
                let threshold = c1_threshold(l, i);
                rows.push(C1Row {
                    l,
                    psi,
                    i,
                    count,
                    n,
                    freq,
                    ci: wilson_interval(count, n, 1.96),
                    threshold,
                    pass: freq <= threshold,
                });
            }
        }
    }
    rows
}

/// Monte Carlo frequencies of the `b_i` events over `n_envs` environments
/// with seeds `child_seed(seed, k)`.
pub fn check_c1(
    spec: &FamilySpec,
    delta: f64,
    ls: &[f64],
    psis: &[SmoothingField],
    n_envs: u64,
    seed: u64,
) -> Result<C1Table> {
    let mut samples = Vec::new();
    for &l in ls {
        let gs = srw_green(l, spec.d)?;
        let per_env: Vec<Vec<C1Sample>> = (0..n_envs)
            .into_par_iter()
            .map(|k| {
                let env_seed = child_seed(seed, k);
                let env = sample_environment(*spec, env_seed)?;
                let ms = d_metrics_multi(&env, l, psis, l / 5.0, Some(&gs))?;
                Ok(ms
                    .into_iter()
                    .enumerate()
                    .map(|(psi, m)| C1Sample {
                        env_index: k,
                        env_seed,
                        l,
                        psi,
                        d_star: m.d_star,
                        d_star_psi: m.d_star_psi,
                        event: b_event(l, m.d_star, m.d_star_psi, delta),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        samples.extend(per_env.into_iter().flatten());
    }
    let rows = c1_rows(&samples, ls, psis.len());
    Ok(C1Table { delta, samples, rows })
}

/// `E_{0,ω}[τ_L]` against `[1 ± f_η(L)] E_0[τ_L]`.
#[derive(Clone, Debug, Serialize)]
pub struct C2Indicator {
    pub l: f64,
    pub eta: f64,
    pub quenched: f64,
    pub srw: f64,
    pub f_eta: f64,
    pub pass: bool,
}

pub fn c2_indicator(env: &crate::Environment, l: f64, eta: f64, srw_mean: Option<f64>) -> Result<C2Indicator> {
    let d = env.d();
    let dom = Arc::new(Domain::ball(&vec![0; d], l)?);
    let origin = vec![0; d];
    let srw = match srw_mean {
        Some(v) => v,
        None => mean_exit_time(&green(&srw_kernel(&dom))?, &origin, None)?,
    };
    let quenched = if env.is_srw() {
        srw
    } else {
        mean_exit_time(&green(&rwre_kernel(&env.materialize(&dom), &dom)?)?, &origin, None)?
    };
    let f = f_eta(eta, l);
    let pass = quenched >= (1.0 - f) * srw && quenched <= (1.0 + f) * srw;
    Ok(C2Indicator { l, eta, quenched, srw, f_eta: f, pass })
}

/// The threshold `L^{-6d}` for the frequency of failing environments.
pub fn c2_threshold(l: f64, d: usize) -> f64 {
    l.powf(-6.0 * d as f64)
}
