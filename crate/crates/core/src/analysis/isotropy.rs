//! Cancellation of symmetric signed measures against smoothed exit laws.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{DenseBox, StepCache};
use crate::error::{Error, Result};
use crate::kernels::srw_kernel;
use crate::kernels::templates::orbit_points;
use crate::lattice::{norm2, sq_threshold, Domain};
use crate::solver::green;

pub const SYMMETRY_TOL: f64 = 1e-12;

/// A signed measure on `Z^d` as `point -> mass`.
pub type SignedMeasure = BTreeMap<Vec<i32>, f64>;

#[derive(Clone, Debug, Serialize)]
pub struct IsotropyCancellation {
    pub l: f64,
    pub big_l: f64,
    pub m: f64,
    pub mass: f64,
    pub l1: f64,
    /// `Σ ν(y) y`
    pub first_moment: Vec<f64>,
    /// `Σ ν(y) y_i y_j`
    pub second_moment: Vec<Vec<f64>>,
    /// common diagonal value `c`
    pub c: f64,
    /// `max_{i,j} |Σ ν(y) y_i y_j - c δ_ij|`
    pub second_defect: f64,
    /// `sup_z |Σ_y ν(y) φ_{L,m}(y, z)|`
    pub sup_value: f64,
    /// `||ν||_1 (L^{-(d+1/4)} + (l/L)^3 L^{-d})`
    pub bound_shape: f64,
    pub ratio: f64,
}

/// Orbit average of `ν` over the signed permutation group.
pub fn symmetrize(nu: &SignedMeasure) -> SignedMeasure {
    let mut out = SignedMeasure::new();
    for x in nu.keys() {
        let rep: Vec<i32> = x.iter().map(|c| c.abs()).collect();
        let orbit = orbit_points(&rep);
        let mean = orbit.iter().map(|p| nu.get(p.as_slice()).copied().unwrap_or(0.0)).sum::<f64>() / orbit.len() as f64;
        for p in orbit {
            out.insert(p.to_vec(), mean);
        }
    }
    out
}

/// Checks invariance under coordinate sign flips and exchanges.
pub fn check_symmetry(nu: &SignedMeasure) -> Result<()> {
    let get = |p: &[i32]| nu.get(p).copied().unwrap_or(0.0);
    for (x, &v) in nu {
        let d = x.len();
        for i in 0..d {
            let mut y = x.clone();
            y[i] = -y[i];
            if (get(&y) - v).abs() > SYMMETRY_TOL {
                return Err(Error::SymmetryViolation(format!("ν({x:?}) != ν({y:?}) under sign flip of axis {}", i + 1)));
            }
            for j in i + 1..d {
                let mut y = x.clone();
                y.swap(i, j);
                if (get(&y) - v).abs() > SYMMETRY_TOL {
                    return Err(Error::SymmetryViolation(format!(
                        "ν({x:?}) != ν({y:?}) under exchange of axes {} and {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

/// First and second moments of `ν`.
pub fn moments(nu: &SignedMeasure, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut first = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    for (y, &v) in nu {
        for i in 0..d {
            first[i] += v * y[i] as f64;
            for j in 0..d {
                second[i][j] += v * (y[i] * y[j]) as f64;
            }
        }
    }
    (first, second)
}

/// Validates `ν` on `V_l` and measures `sup_z |Σ_y ν(y) φ_{L,m}(y, z)|` with
/// `φ_{L,m} = π_L π̂_m` for simple random walk.
pub fn isotropy_cancellation(nu: &SignedMeasure, l: f64, big_l: f64, m: f64) -> Result<IsotropyCancellation> {
    let d = nu.keys().next().map(|x| x.len()).ok_or_else(|| Error::Domain("empty measure".into()))?;
    let nl = sq_threshold(l).unwrap_or(0);
    if let Some(x) = nu.keys().find(|x| norm2(x) > nl) {
        return Err(Error::Domain(format!("support point {x:?} outside V_{l}")));
    }
    if l > big_l {
        return Err(Error::Domain(format!("V_{l} is not inside V_{big_l}")));
    }
    check_symmetry(nu)?;
    let mass: f64 = nu.values().sum();
    let l1: f64 = nu.values().map(|v| v.abs()).sum();
    if mass.abs() > SYMMETRY_TOL * l1.max(1.0) {
        return Err(Error::Domain(format!("total mass {mass} is not zero")));
    }
    let (first, second) = moments(nu, d);
    let c = (0..d).map(|i| second[i][i]).sum::<f64>() / d as f64;
    let mut second_defect: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { c } else { 0.0 };
            second_defect = second_defect.max((second[i][j] - target).abs());
        }
    }
    let dom = Arc::new(Domain::ball(&vec![0; d], big_l)?);
    let g = green(&srw_kernel(&dom))?;
    let mut rhs = vec![0.0; g.n()];
    for (y, &v) in nu {
        let i = dom.index_of(y).expect("support inside the ball");
        rhs[i] = v;
    }
    let exit = g.extend_row(&g.solve_transpose(&rhs)?);
    let step = StepCache::default().get(m, d)?;
    let reach = crate::lattice::isqrt(sq_threshold(big_l).unwrap_or(0)) as i32 + 2 + (2.0 * m).ceil() as i32;
    let mut bx = DenseBox::new(d, reach);
    for j in dom.n_interior()..dom.len() {
        if exit[j] != 0.0 {
            bx.add_step(dom.point(j), exit[j], &step);
        }
    }
    let sup_value = bx.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let df = d as f64;
    let bound_shape = l1 * (big_l.powf(-(df + 0.25)) + (l / big_l).powi(3) * big_l.powf(-df));
    Ok(IsotropyCancellation {
        l,
        big_l,
        m,
        mass,
        l1,
        first_moment: first,
        second_moment: second,
        c,
        second_defect,
        sup_value,
        bound_shape,
        ratio: if bound_shape > 0.0 { sup_value / bound_shape } else { 0.0 },
    })
}

/// `δ_0 - uniform(V_l)`, symmetrized.
pub fn centered_uniform(l: f64, d: usize) -> Result<SignedMeasure> {
    let ball = Domain::ball(&vec![0; d], l)?;
    let n = ball.n_interior() as f64;
    let mut nu: SignedMeasure = ball.interior().map(|x| (x.to_vec(), -1.0 / n)).collect();
    *nu.get_mut(&vec![0; d]).unwrap() += 1.0;
    Ok(symmetrize(&nu))
}
