//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use rwre_core::environment::sample_environment;
use rwre_core::kernels::field::HProfile;
use rwre_core::{Domain, Environment, Family, FamilySpec, SmoothingField};

pub fn tilted(eps: f64, seed: u64) -> Environment {
    sample_environment(FamilySpec::new(3, Family::IsotropicTilt, eps).expect("valid spec"), seed).expect("valid environment")
}

pub fn ball(l: f64) -> Arc<Domain> {
    Arc::new(Domain::ball(&[0, 0, 0], l).expect("ball fits the capacity limit"))
}

/// The desk-scale radius field on `V_l`: `s = l/3`, `r = l/6`, scale 1/2.
pub fn desk_field(l: f64) -> SmoothingField {
    SmoothingField::Profile(HProfile::overridden(l, l / 3.0, l / 6.0, 0.5).expect("ordered schedule"))
}
