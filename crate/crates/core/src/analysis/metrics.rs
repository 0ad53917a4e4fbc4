//! `D_t`, `D_{t,ψ}` and their suprema.

use std::sync::Arc;

use serde::Serialize;

use super::{DenseBox, StepCache};
use crate::environment::Environment;
use crate::error::Result;
use crate::kernels::{rwre_kernel, srw_kernel, SmoothingField};
use crate::lattice::{isqrt, norm2, sq_threshold, Domain};
use crate::solver::{exit_measure, green, GreenOperator};

#[derive(Clone, Debug, Serialize)]
pub struct DMetrics {
    pub t: f64,
    /// supremum over `V_{sup_radius}`
    pub sup_radius: f64,
    pub points: Vec<Vec<i32>>,
    /// `||(Π_{V_t} - π_{V_t})(x, ·)||_1`
    pub d_t: Vec<f64>,
    /// `||(Π_{V_t} - π_{V_t}) π̂_ψ(x, ·)||_1`
    pub d_t_psi: Vec<f64>,
    pub d_star: f64,
    pub d_star_psi: f64,
}

/// Simple random walk Green function on `V_t`, shared across environments.
pub fn srw_green(t: f64, d: usize) -> Result<GreenOperator> {
    let dom = Arc::new(Domain::ball(&vec![0; d], t)?);
    green(&srw_kernel(&dom))
}

/// Metrics over `x ∈ V_{sup_radius}`; `srw` may carry a precomputed
/// [`srw_green`] for the same `t`.
pub fn d_metrics_with(
    env: &Environment,
    t: f64,
    psi: &SmoothingField,
    sup_radius: f64,
    srw: Option<&GreenOperator>,
) -> Result<DMetrics> {
    Ok(d_metrics_multi(env, t, std::slice::from_ref(psi), sup_radius, srw)?.remove(0))
}

/// One [`DMetrics`] per smoothing field, sharing the exit solves.
pub fn d_metrics_multi(
    env: &Environment,
    t: f64,
    psis: &[SmoothingField],
    sup_radius: f64,
    srw: Option<&GreenOperator>,
) -> Result<Vec<DMetrics>> {
    for psi in psis {
        psi.check()?;
    }
    let d = env.d();
    let own;
    let gs = match srw {
        Some(g) => g,
        None => {
            own = srw_green(t, d)?;
            &own
        }
    };
    let dom = gs.kernel().domain().clone();
    let n_sup = sq_threshold(sup_radius).unwrap_or(0);
    let points: Vec<Vec<i32>> = dom.interior().filter(|x| norm2(x) <= n_sup).map(|x| x.to_vec()).collect();
    let finish = |d_t: Vec<f64>, d_t_psi: Vec<f64>| {
        let d_star = d_t.iter().copied().fold(0.0, f64::max);
        let d_star_psi = d_t_psi.iter().copied().fold(0.0, f64::max);
        DMetrics { t, sup_radius, points: points.clone(), d_t, d_t_psi, d_star, d_star_psi }
    };
    if env.is_srw() {
        let z = vec![0.0; points.len()];
        return Ok(psis.iter().map(|_| finish(z.clone(), z.clone())).collect());
    }
    let ge = green(&rwre_kernel(&env.materialize(&dom), &dom)?)?;
    let mut cache = StepCache::default();
    let mut boxes = Vec::with_capacity(psis.len());
    for psi in psis {
        let m_max = dom.boundary().map(|y| psi.value(y)).fold(0.0, f64::max);
        let reach = isqrt(sq_threshold(t).unwrap_or(0)) as i32 + 2 + (2.0 * m_max).ceil() as i32;
        boxes.push(DenseBox::new(d, reach));
    }
    let mut d_t = Vec::with_capacity(points.len());
    let mut d_t_psi = vec![Vec::with_capacity(points.len()); psis.len()];
    for x in &points {
        let a = exit_measure(&ge, x)?.dense(dom.len());
        let b = exit_measure(gs, x)?.dense(dom.len());
        boxes.iter_mut().for_each(|b| b.clear());
        let mut tv = 0.0;
        for j in dom.n_interior()..dom.len() {
            let w = a[j] - b[j];
            if w == 0.0 {
                continue;
            }
            tv += w.abs();
            let y = dom.point(j);
            for (psi, bx) in psis.iter().zip(boxes.iter_mut()) {
                let step = cache.get(psi.value(y), d)?;
                bx.add_step(y, w, &step);
            }
        }
        d_t.push(tv);
        for (k, bx) in boxes.iter().enumerate() {
            d_t_psi[k].push(bx.l1());
        }
    }
    Ok(d_t_psi.into_iter().map(|v| finish(d_t.clone(), v)).collect())
}

/// [`d_metrics_with`] with the supremum over `V_{t/5}`.
pub fn d_metrics(env: &Environment, t: f64, psi: &SmoothingField) -> Result<DMetrics> {
    d_metrics_with(env, t, psi, t / 5.0, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, Family, FamilySpec};

    #[test]
    fn zero_for_srw_and_contracted_by_smoothing() {
        let srw = sample_environment(FamilySpec::new(3, Family::Srw, 0.0).unwrap(), 1).unwrap();
        let m = d_metrics(&srw, 6.0, &SmoothingField::Constant(2.0)).unwrap();
        assert_eq!(m.d_star, 0.0);
        assert_eq!(m.d_star_psi, 0.0);
        let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, 0.1).unwrap(), 4).unwrap();
        let m = d_metrics_with(&env, 6.0, &SmoothingField::Constant(2.0), 6.0, None).unwrap();
        assert!(m.d_star > 0.0 && m.d_star <= 2.0);
        for (a, b) in m.d_t.iter().zip(&m.d_t_psi) {
            assert!(*b <= a + 1e-9);
        }
        let inner = d_metrics(&env, 6.0, &SmoothingField::Constant(2.0)).unwrap();
        assert!(inner.d_star <= m.d_star + 1e-15);
    }
}
