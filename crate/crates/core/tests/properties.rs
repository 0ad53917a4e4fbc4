use std::sync::Arc;

use proptest::prelude::*;

use rwre_core::analysis::conditions::f_eta;
use rwre_core::analysis::metrics::d_metrics;
use rwre_core::environment::{deserialize, sample_environment, serialize};
use rwre_core::kernels::coarse::srw_coarse_step;
use rwre_core::kernels::field::HProfile;
use rwre_core::kernels::hfunc::HFunction;
use rwre_core::kernels::mollifier::Mollifier;
use rwre_core::kernels::{rwre_kernel, srw_kernel};
use rwre_core::lattice::norm2;
use rwre_core::reference::gamma::GammaKernelSpec;
use rwre_core::solver::perturbation::perturbation_dense;
use rwre_core::solver::{exit_measure, mean_exit_time};
use rwre_core::{green, Domain, Family, FamilySpec, SmoothingField};

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::IsotropicTilt), Just(Family::SymmetricBalanced), (0usize..3).prop_map(|axis| Family::BalancedAxis { axis })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn domains_are_closed_under_one_step(d in 1usize..=4, l in 0.5f64..6.0, c in prop::collection::vec(-5i32..5, 4)) {
        let dom = Domain::ball(&c[..d], l).unwrap();
        for i in 0..dom.n_interior() {
            for k in 0..2 * d {
                prop_assert!(dom.neighbor(i, k).is_some());
            }
        }
        let again = Domain::ball(&c[..d], l).unwrap();
        prop_assert!((0..dom.len()).all(|i| dom.point(i) == again.point(i)));
    }

    #[test]
    fn site_laws_are_pure_and_near_uniform(fam in family(), eps in 0.0f64..0.15, seed: u64, x in prop::collection::vec(-50i32..50, 3)) {
        let env = sample_environment(FamilySpec::new(3, fam, eps).unwrap(), seed).unwrap();
        let a = env.law(&x);
        prop_assert_eq!(&a.probs, &env.law(&x).probs);
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in &a.probs {
            prop_assert!((p - 1.0 / 6.0).abs() <= eps + 1e-12);
        }
    }

    #[test]
    fn environment_files_roundtrip(fam in family(), eps in 0.0f64..0.1, seed: u64) {
        let env = sample_environment(FamilySpec::new(3, fam, eps).unwrap(), seed).unwrap();
        let region = Domain::ball(&[0, 0, 0], 2.0).unwrap();
        let bytes = serialize(&env, &region).unwrap();
        let (back, points) = deserialize(&bytes).unwrap();
        prop_assert_eq!(points.len(), region.n_interior());
        for p in &points {
            prop_assert_eq!(&env.law(&p.0).probs, &back.law(&p.0).probs);
        }
    }

    #[test]
    fn exit_laws_are_probability_measures(eps in 0.0f64..0.15, seed: u64, l in 1.0f64..4.0, k in 0usize..50) {
        let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, eps).unwrap(), seed).unwrap();
        let dom = Arc::new(Domain::ball(&[0, 0, 0], l).unwrap());
        let g = green(&rwre_kernel(&env.materialize(&dom), &dom).unwrap()).unwrap();
        let x = dom.point(k % dom.n_interior()).to_vec();
        let ex = exit_measure(&g, &x).unwrap();
        prop_assert!(ex.weights.iter().all(|w| w.1 >= 0.0));
        prop_assert!((ex.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_balanced_mean_time_bracket(eps in 0.0f64..0.15, seed: u64, l in 1u32..6) {
        let env = sample_environment(FamilySpec::new(3, Family::SymmetricBalanced, eps).unwrap(), seed).unwrap();
        let l = l as f64;
        let dom = Arc::new(Domain::ball(&[0, 0, 0], l).unwrap());
        let t = mean_exit_time(&green(&rwre_kernel(&env.materialize(&dom), &dom).unwrap()).unwrap(), &[0, 0, 0], None).unwrap();
        prop_assert!(t >= l * l - 1e-9 && t <= (l + 1.0) * (l + 1.0) + 1e-9, "{}", t);
    }

    #[test]
    fn smoothing_contracts_total_variation(eps in 0.01f64..0.1, seed: u64, m in 0.6f64..2.5) {
        let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, eps).unwrap(), seed).unwrap();
        let r = d_metrics(&env, 4.0, &SmoothingField::Constant(m)).unwrap();
        for (a, b) in r.d_t_psi.iter().zip(&r.d_t) {
            prop_assert!(*a <= b + 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(b));
        }
        prop_assert!(r.d_star_psi <= r.d_star + 1e-12);
    }

    #[test]
    fn resolvent_identity_on_random_pairs(n in 2usize..12, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 0.8 / n as f64).collect();
        let q: Vec<f64> = p.iter().map(|v| v * rng.random_range(0.8..1.2)).collect();
        let r = perturbation_dense(&p, &q, n, 20).unwrap();
        prop_assert!(r.resolvent_left < 1e-10 && r.resolvent_right < 1e-10);
    }

    #[test]
    fn coarse_steps_are_symmetric_and_short(m in 0.5f64..4.0) {
        let step = srw_coarse_step(m, 3).unwrap();
        let total: f64 = step.iter().map(|s| s.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let reach = (2.0 * m + 1.0) * (2.0 * m + 1.0);
        prop_assert!(step.iter().all(|(y, _)| (norm2(y) as f64) < reach));
        let law: std::collections::HashMap<Vec<i32>, f64> = step.into_iter().collect();
        for (y, p) in &law {
            let flipped = vec![-y[0], y[2], y[1]];
            prop_assert!((law.get(&flipped).copied().unwrap_or(0.0) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbourhood_radius_properties(l in 20.0f64..120.0, rf in 0.02f64..0.2, x in prop::collection::vec(-60i32..60, 3), y in prop::collection::vec(-60i32..60, 3)) {
        let r = (rf * l).max(1.0);
        let spec = GammaKernelSpec::with_default_s(l, r, 3).unwrap();
        let dxy = rwre_core::lattice::dist(&x, &y);
        prop_assert!((spec.a(&x) - spec.a(&y)).abs() <= dxy / 2.0 + 1e-9);
        prop_assert!((spec.a_tilde(&x) - spec.a_tilde(&y)).abs() <= dxy / 2.0 + 1e-9);
        prop_assert!(spec.a(&y) + dxy <= spec.a(&x) + 1.5 * dxy + 1e-9);
    }

    #[test]
    fn tolerance_sequence_is_bounded(eta in 0.01f64..0.99, l in 1.0f64..1e12) {
        let f = f_eta(eta, l);
        prop_assert!(f >= eta / 3.0 - 1e-15 && f < eta);
    }

    #[test]
    fn profile_is_lipschitz_along_rays(l in 8.0f64..60.0) {
        let p = HProfile::overridden(l, l / 4.0, l / 12.0, 0.5).unwrap();
        let n = l as i32;
        let mut prev = p.eval(&[0, 0, 0]);
        for i in 1..=n {
            let v = p.eval(&[i, 0, 0]);
            prop_assert!((v - prev).abs() <= 0.5 + 1e-12);
            prev = v;
        }
    }
}

#[test]
fn h_function_shape() {
    let h = HFunction::get();
    for i in 0..=50 {
        let x = i as f64 / 100.0;
        assert!((h.eval(x) - x).abs() < 1e-12);
    }
    for x in [2.0, 2.5, 10.0] {
        assert!((h.eval(x) - 1.0).abs() < 1e-12);
    }
    let mut prev = h.eval(0.5);
    for i in 1..=300 {
        let x = 0.5 + 1.5 * i as f64 / 300.0;
        let v = h.eval(x);
        assert!(v >= prev - 1e-15);
        let dv = h.derivative(x);
        assert!((-1e-12..=1.0 + 1e-12).contains(&dv));
        prev = v;
    }
}

#[test]
fn mollifier_is_a_density_on_the_unit_interval_shift() {
    let m = Mollifier::standard();
    assert!((m.cdf(2.0) - 1.0).abs() < 1e-10);
    assert_eq!(m.density(1.0), 0.0);
    assert_eq!(m.density(2.0), 0.0);
    assert!((0..=100).all(|i| m.density(1.0 + i as f64 / 100.0) >= 0.0));
}

#[test]
fn srw_kernel_rows_sum_to_one() {
    let dom = Arc::new(Domain::ball(&[0, 0, 0], 5.0).unwrap());
    let k = srw_kernel(&dom);
    assert!((0..dom.n_interior()).all(|i| (k.row_sum(i) - 1.0).abs() < 1e-12));
}

#[test]
fn modified_green_is_dominated_by_the_coarse_green() {
    use rwre_core::kernels::coarse::coarse_grain_env;
    use rwre_core::kernels::modify_level4;
    let l = 12.0;
    let env = sample_environment(FamilySpec::new(3, Family::IsotropicTilt, 0.05).unwrap(), 4).unwrap();
    let dom = Arc::new(Domain::ball(&[0, 0, 0], l).unwrap());
    let field = SmoothingField::Profile(HProfile::overridden(l, 4.0, 2.0, 0.5).unwrap());
    let cg = coarse_grain_env(&env, &field, &dom).unwrap().kernel;
    let bad: Vec<usize> = [[0, 0, 0], [1, 0, 0], [0, 1, 1]].iter().map(|x| dom.index_of(x).unwrap()).collect();
    let modified = modify_level4(&cg, &bad, 4.0, &field).unwrap();
    modified.check_stochastic().unwrap();
    let (g, gm) = (green(&cg).unwrap(), green(&modified).unwrap());
    for x in [[0, 0, 0], [3, -1, 0], [7, 2, 2]] {
        let i = dom.index_of(&x).unwrap();
        let (u, um) = (g.row(i).unwrap(), gm.row(i).unwrap());
        assert!(um.iter().zip(&u).all(|(a, b)| *a <= b + 1e-9), "{x:?}");
        assert!(um.iter().zip(&u).any(|(a, b)| *a < b - 1e-6), "{x:?}");
    }
}
