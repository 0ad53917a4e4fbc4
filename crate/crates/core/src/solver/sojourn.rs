//! Coarse-grained sojourn weights and the mean exit time decomposition
//! `E_x[τ_V] = Ĝ Λ(x)`.

use std::sync::Arc;

use serde::Serialize;

use super::{green, mean_exit_times};
use crate::environment::Environment;
use crate::error::Result;
use crate::kernels::coarse::coarse_grain_env;
use crate::kernels::{rwre_kernel, srw_kernel, Kernel, SmoothingField};
use crate::lattice::Domain;

/// `Λ(x)` (or `λ(x)` for simple random walk) on the interior of a domain,
/// in steps of the nearest-neighbour walk.
#[derive(Clone, Debug)]
pub struct SojournField {
    pub domain: Arc<Domain>,
    pub values: Vec<f64>,
    pub kernel: Kernel,
}

impl SojournField {
    /// Zero outside the interior.
    pub fn get(&self, x: &[i32]) -> f64 {
        match self.domain.index_of(x) {
            Some(i) if i < self.values.len() => self.values[i],
            _ => 0.0,
        }
    }
}

pub fn sojourn_field(env: &Environment, field: &SmoothingField, dom: &Arc<Domain>) -> Result<SojournField> {
    let out = coarse_grain_env(env, field, dom)?;
    Ok(SojournField { domain: dom.clone(), values: out.sojourn, kernel: out.kernel })
}

#[derive(Clone, Debug, Serialize)]
pub struct SojournDecomposition {
    /// `Ĝ Λ` per interior point
    pub coarse: Vec<f64>,
    /// `E_x[τ_V]` from the nearest-neighbour walk
    pub direct: Vec<f64>,
    pub max_residual: f64,
}

/// Both sides of the decomposition for every interior point.
pub fn sojourn_decomposition(env: &Environment, field: &SmoothingField, dom: &Arc<Domain>) -> Result<SojournDecomposition> {
    let sf = sojourn_field(env, field, dom)?;
    let coarse = mean_exit_times(&green(&sf.kernel)?, Some(&sf.values))?;
    let nn = if env.is_srw() { srw_kernel(dom) } else { rwre_kernel(&env.materialize(dom), dom)? };
    let direct = mean_exit_times(&green(&nn)?, None)?;
    let max_residual = coarse.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(SojournDecomposition { coarse, direct, max_residual })
}

/// `|E_x[τ_V] - ĜΛ(x)|`; both sides vanish off the interior.
pub fn sojourn_decomposition_check(env: &Environment, field: &SmoothingField, dom: &Arc<Domain>, x: &[i32]) -> Result<f64> {
    match dom.index_of(x) {
        Some(i) if i < dom.n_interior() => {
            let dec = sojourn_decomposition(env, field, dom)?;
            Ok((dec.coarse[i] - dec.direct[i]).abs())
        }
        _ => Ok(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, Family, FamilySpec};
    use crate::kernels::HProfile;

    fn setup(eps: f64, l: f64) -> (Environment, SmoothingField, Arc<Domain>) {
        let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, eps).unwrap(), 11).unwrap();
        let field = SmoothingField::Profile(HProfile::overridden(l, 2.0, 1.0, 0.5).unwrap());
        let dom = Arc::new(Domain::ball(&[0, 0, 0], l).unwrap());
        (env, field, dom)
    }

    #[test]
    fn decomposition_holds() {
        for eps in [0.0, 0.05] {
            let (env, field, dom) = setup(eps, 5.0);
            let dec = sojourn_decomposition(&env, &field, &dom).unwrap();
            assert!(dec.max_residual < 1e-8, "eps {eps}: {}", dec.max_residual);
        }
    }

    #[test]
    fn srw_sojourn_is_reference() {
        let (env, field, dom) = setup(0.0, 4.0);
        let sf = sojourn_field(&env, &field, &dom).unwrap();
        let reference = crate::kernels::coarse_grain_srw(&field, &dom).unwrap();
        for (a, b) in sf.values.iter().zip(&reference.sojourn) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(sf.get(&[9, 0, 0]), 0.0);
        assert!(sf.values.iter().all(|&v| v > 0.0));
        assert_eq!(sojourn_decomposition_check(&env, &field, &dom, &[5, 0, 0]).unwrap(), 0.0);
    }
}
