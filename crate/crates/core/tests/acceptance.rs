//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rwre_core::analysis::badness::{classify_environment, classify_points, EnvClass, ThresholdMode};
use rwre_core::analysis::conditions::{c2_indicator, check_c1};
use rwre_core::analysis::isotropy::{centered_uniform, check_symmetry, isotropy_cancellation, SignedMeasure};
use rwre_core::analysis::metrics::{d_metrics_multi, srw_green};
use rwre_core::analysis::time::balanced_bound;
use rwre_core::environment::sample_environment;
use rwre_core::harness::experiments::coarse_step_difference;
use rwre_core::harness::{run_with_threads, Experiment, ExperimentConfig};
use rwre_core::kernels::coarse::coarse_grain_env;
use rwre_core::kernels::field::HProfile;
use rwre_core::kernels::{rwre_kernel, srw_kernel};
use rwre_core::lattice::norm2;
use rwre_core::reference::clt::{gamma_m, green_zd_shells, local_clt_scan};
use rwre_core::reference::gamma::{
    comparability_ratio, gamma_bounds_report, lipschitz_constants, ray_starts, triangle_excess, GammaKernelSpec,
};
use rwre_core::reference::hitting::{annulus_exit, annulus_exit_exact, srw_hit_ball_empirical};
use rwre_core::rng::child_seed;
use rwre_core::solver::perturbation::perturbation_dense;
use rwre_core::solver::sojourn::sojourn_decomposition;
use rwre_core::solver::{exit_measure, mean_exit_time, mean_exit_times};
use rwre_core::{green, Domain, Environment, Family, FamilySpec, Kernel, SmoothingField};

fn report(id: &str, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{id}] {verdict} {name}: {detail}");
    assert!(pass, "{id} {name}: {detail}");
}

fn env(family: Family, eps: f64, seed: u64) -> Environment {
    let family = if eps == 0.0 { Family::Srw } else { family };
    sample_environment(FamilySpec::new(3, family, eps).unwrap(), seed).unwrap()
}

fn ball(l: f64) -> Arc<Domain> {
    Arc::new(Domain::ball(&[0, 0, 0], l).unwrap())
}

fn nn_kernel(e: &Environment, dom: &Arc<Domain>) -> Kernel {
    if e.is_srw() {
        srw_kernel(dom)
    } else {
        rwre_kernel(&e.materialize(dom), dom).unwrap()
    }
}

fn sample_interior(dom: &Domain, k: usize, seed: u64) -> Vec<Vec<i32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| dom.point(rng.random_range(0..dom.n_interior())).to_vec()).collect()
}

fn desk_profile(l: f64, s: f64, r: f64) -> HProfile {
    HProfile::overridden(l, s, r, 0.5).unwrap()
}

/// Gauss-Jordan inverse of `I - a`.
fn inverse_i_minus(a: &[f64], n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 } - a[k]).collect();
    let mut inv: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
        for k in 0..n {
            m.swap(c * n + k, piv * n + k);
            inv.swap(c * n + k, piv * n + k);
        }
        let d = m[c * n + c];
        for k in 0..n {
            m[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for i in (0..n).filter(|&i| i != c) {
            let f = m[i * n + c];
            if f != 0.0 {
                for k in 0..n {
                    m[i * n + k] -= f * m[c * n + k];
                    inv[i * n + k] -= f * inv[c * n + k];
                }
            }
        }
    }
    inv
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let v = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += v * b[k * n + j];
            }
        }
    }
    c
}

fn row_norm(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[test]
fn resolvent_identity_and_rearranged_truncation() {
    let t = Instant::now();
    let n = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_lib, mut worst_oracle, mut worst_tail, mut worst_rate) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let mut p = vec![0.0; n * n];
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            let mass: f64 = rng.random_range(0.3..0.6);
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            for j in 0..n {
                p[i * n + j] = mass * w[j] / s;
                q[i * n + j] = p[i * n + j] * (1.0 + 0.2 * (2.0 * rng.random::<f64>() - 1.0));
            }
        }
        let rep = perturbation_dense(&p, &q, n, 30).unwrap();
        worst_lib = worst_lib.max(rep.resolvent_left);

        let g = inverse_i_minus(&p, n);
        let gg = inverse_i_minus(&q, n);
        let delta: Vec<f64> = q.iter().zip(&p).map(|(a, b)| a - b).collect();
        let rhs = matmul(&matmul(&g, &delta, n), &gg, n);
        let resid: Vec<f64> = (0..n * n).map(|k| gg[k] - g[k] - rhs[k]).collect();
        worst_oracle = worst_oracle.max(row_norm(&resid, n));

        let res = &rep.rearranged_residuals;
        worst_tail = worst_tail.max(*res.last().unwrap() / res[0]);
        let live: Vec<(f64, f64)> =
            res.iter().enumerate().filter(|(_, &v)| v > 1e-13).map(|(k, &v)| (k as f64, v.ln())).collect();
        if live.len() >= 3 {
            let (slope, _) = rwre_core::reference::clt::fit_line(&live);
            worst_rate = worst_rate.max(slope.exp());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst_lib <= 1e-10 && worst_oracle <= 1e-10 && worst_tail < 1e-10 && worst_rate < 1.0 && secs < 5.0;
    report(
        "A1",
        "resolvent identity",
        pass,
        format!(
            "max ||G-g-gDG|| lib {worst_lib:.2e} oracle {worst_oracle:.2e} (<= 1e-10); \
             truncation tail/head {worst_tail:.2e}, rate {worst_rate:.3} (< 1); {secs:.2}s (< 5s)"
        ),
    );
}

#[test]
fn exit_law_equals_green_columns_at_the_boundary() {
    let mut worst = 0.0f64;
    let mut cases = vec![(8.0, env(Family::Srw, 0.0, 0))];
    for k in 0..10 {
        cases.push((6.0, env(Family::IsotropicTilt, 0.05, child_seed(31, k))));
    }
    for (c, (l, e)) in cases.iter().enumerate() {
        let dom = ball(*l);
        let kern = nn_kernel(e, &dom);
        let g = green(&kern).unwrap();
        let n = dom.n_interior();
        let xs = sample_interior(&dom, 4, c as u64);
        let xi: Vec<usize> = xs.iter().map(|x| dom.index_of(x).unwrap()).collect();
        // ex(x, z) = Σ_y G(x, y) P(y, z) over interior y adjacent to the boundary
        let mut oracle = vec![vec![0.0; dom.len()]; xs.len()];
        for y in 0..n {
            let (cols, vals) = kern.row(y);
            let out: Vec<(usize, f64)> =
                cols.iter().zip(vals).filter(|(&j, _)| j as usize >= n).map(|(&j, &p)| (j as usize, p)).collect();
            if out.is_empty() {
                continue;
            }
            let col = g.column(y).unwrap();
            for (o, &i) in oracle.iter_mut().zip(&xi) {
                for &(z, p) in &out {
                    o[z] += col[i] * p;
                }
            }
        }
        for (x, o) in xs.iter().zip(&oracle) {
            let ex = exit_measure(&g, x).unwrap().dense(dom.len());
            worst = worst.max(ex.iter().zip(o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    report("A2", "exit/green duality", worst <= 1e-10, format!("max deviation {worst:.2e} (<= 1e-10)"));
}

#[test]
fn srw_mean_exit_time_bracket() {
    let mut violation = 0.0f64;
    for l in 1..=10 {
        let dom = ball(l as f64);
        let times = mean_exit_times(&green(&srw_kernel(&dom)).unwrap(), None).unwrap();
        let (lo, hi) = ((l * l) as f64, ((l + 1) * (l + 1)) as f64);
        for (i, t) in times.iter().enumerate() {
            let x2 = norm2(dom.point(i)) as f64;
            violation = violation.max((lo - x2) - t).max(t - (hi - x2));
        }
    }
    // V_1 = {0, ±e_i}: E_0 = 1 + E_e, E_e = 1 + E_0 / 6
    let (mut e0, mut ee) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        e0 = 1.0 + ee;
        ee = 1.0 + e0 / 6.0;
    }
    let v1 = mean_exit_time(&green(&srw_kernel(&ball(1.0))).unwrap(), &[0, 0, 0], None).unwrap();
    let err = (v1 - e0).abs().max((v1 - 2.4).abs());
    let pass = violation <= 1e-9 && err <= 1e-12;
    report(
        "A3",
        "srw mean exit time",
        pass,
        format!("bracket violation {violation:.2e} (<= 0); E_0 tau_V1 = {v1:.15} vs 12/5, err {err:.1e} (<= 1e-12)"),
    );
}

#[test]
fn coarse_graining_preserves_the_exit_law() {
    let t = Instant::now();
    let l = 12.0;
    let dom = ball(l);
    let field = SmoothingField::Profile(desk_profile(l, 4.0, 2.0));
    let xs = sample_interior(&dom, 10, 4);
    let mut worst = 0.0f64;
    for (eps, seed) in [(0.0, 0), (0.05, 17)] {
        let e = env(Family::IsotropicTilt, eps, seed);
        let cg = coarse_grain_env(&e, &field, &dom).unwrap();
        let g_cg = green(&cg.kernel).unwrap();
        let g_nn = green(&nn_kernel(&e, &dom)).unwrap();
        for x in &xs {
            let a = exit_measure(&g_cg, x).unwrap().dense(dom.len());
            let b = exit_measure(&g_nn, x).unwrap().dense(dom.len());
            worst = worst.max(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    report(
        "A4",
        "coarse-graining exit invariance",
        worst <= 1e-8 && secs < 120.0,
        format!("max L1 {worst:.2e} (<= 1e-8); {secs:.1}s (< 120s)"),
    );
}

#[test]
fn sojourn_decomposition_matches_mean_exit_time() {
    let l = 12.0;
    let dom = ball(l);
    let field = SmoothingField::Profile(desk_profile(l, 4.0, 2.0));
    let mut worst = 0.0f64;
    for k in 0..10 {
        let e = env(Family::IsotropicTilt, 0.05, child_seed(5, k));
        worst = worst.max(sojourn_decomposition(&e, &field, &dom).unwrap().max_residual);
    }
    let tol = 1e-7 * l * l;
    report("A5", "sojourn decomposition", worst <= tol, format!("max residual {worst:.2e} (<= {tol:.1e})"));
}

#[test]
fn coarse_step_variance_band() {
    let ratios: Vec<f64> = [5.0, 10.0, 20.0].iter().map(|&m| gamma_m(m, 3).unwrap() / (m * m)).collect();
    let pass = ratios.iter().all(|&q| q > 1.0 / 3.0 && q < 4.0 / 3.0);
    report("A6", "gamma_m band", pass, format!("gamma_m/m^2 = {ratios:.4?} (in (1/3, 4/3))"));
}

#[test]
fn local_clt_error_scaling() {
    let t = Instant::now();
    let ns: Vec<usize> = (4..=16).collect();
    let rep = local_clt_scan(3.0, &ns, 3).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = (-3.0..=-2.0).contains(&rep.slope) && secs < 600.0;
    report(
        "A7",
        "local CLT scaling",
        pass,
        format!("slope {:.3} (in [-3, -2], target -2.5); {secs:.1}s (< 600s)", rep.slope),
    );
}

#[test]
fn coarse_green_function_asymptote() {
    let m = 3.0;
    let radii: Vec<u32> = (30..=60).collect();
    let est = green_zd_shells(m, 3, &radii, 1_000_000, 400, 77).unwrap();
    let target = 1.0 / (2.0 * std::f64::consts::PI);
    let worst = est.iter().map(|e| (e.value / target - 1.0).abs()).fold(0.0, f64::max);
    let mean = est.iter().map(|e| e.value).sum::<f64>() / est.len() as f64;
    report(
        "A8",
        "green asymptote",
        worst <= 0.15,
        format!("max relative deviation {worst:.3} over |x| in 30..=60 (<= 0.15); shell mean {mean:.4} vs {target:.4}"),
    );
}

#[test]
fn hitting_probability_law_and_annulus_formula() {
    let l_out = 40.0;
    let mut k_rel = 0.0f64;
    let mut k_abs = 0.0f64;
    let mut per_a = Vec::new();
    for a in [2.0f64, 4.0, 8.0] {
        let h = (2.0 * a) as i32;
        let r = srw_hit_ball_empirical(a, &[-h, 0, 0], &[h, 0, 0], l_out).unwrap();
        let q = r.exact / r.free_space;
        let kill = a / l_out;
        // smallest K with q in [1 - K/a - a/L_out, 1 + K/a + a/L_out]
        let k = (a * (1.0 - kill - q)).max(a * (q - 1.0 - kill)).max(0.0);
        k_rel = k_rel.max(k);
        k_abs = k_abs.max(r.k_absolute());
        per_a.push(format!("a={a}: K={k:.3}"));
    }
    let (l, x, big) = (4.0, 10.0, 20.0);
    let formula = annulus_exit(l, x, big, 3).unwrap();
    let exact = annulus_exit_exact(l, &[10, 0, 0], big).unwrap();
    let ann = (formula / exact - 1.0).abs();
    report(
        "A9",
        "hitting probability law",
        k_rel <= 2.0 && ann <= 0.05,
        format!(
            "fitted K {k_rel:.3} (<= 2) [{}], K with absolute killing term {k_abs:.3}; \
             annulus rel err {ann:.4} (<= 0.05)",
            per_a.join(", ")
        ),
    );
}

#[test]
fn gamma_kernel_properties() {
    // the default s is clamped up to r, which makes a constant; s = 150 exercises the cut at s
    let specs = [
        GammaKernelSpec::with_default_s(200.0, 20.0, 3).unwrap(),
        GammaKernelSpec::new(200.0, 20.0, 150.0, 3).unwrap(),
    ];
    let (mut lip_t, mut lip_a, mut tri, mut ratio) = (0.0f64, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    for (k, spec) in specs.iter().enumerate() {
        let lip = lipschitz_constants(spec);
        lip_t = lip_t.max(lip.a_tilde);
        lip_a = lip_a.max(lip.a);
        tri = tri.max(triangle_excess(spec, 10_000, 11 + k as u64));
        ratio = ratio.max(comparability_ratio(spec, 10_000, 21 + k as u64));
    }
    let mut c1 = Vec::new();
    for l in [12.0, 16.0, 24.0] {
        let p = desk_profile(l, l / 4.0, l / 12.0);
        let s = GammaKernelSpec::new(l, p.r, p.s, 3).unwrap();
        c1.push(gamma_bounds_report(&s, p, &ray_starts(l, 3, 4), 4).unwrap().c1);
    }
    let mean = c1.iter().sum::<f64>() / c1.len() as f64;
    let spread = c1.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max);
    let pass = lip_t <= 0.5 + 1e-9 && lip_a <= 0.5 + 1e-9 && tri <= 0.0 && ratio <= 100.0 && spread <= 0.5;
    report(
        "A10",
        "gamma machinery",
        pass,
        format!(
            "Lipschitz {lip_t:.6}/{lip_a:.6} (<= 1/2); triangle excess {tri:.3e} (<= 0); ratio {ratio:.2} (<= 100); \
             C1 {c1:.3?} max deviation from mean {spread:.3} (<= 0.5)"
        ),
    );
}

fn own_moments(nu: &SignedMeasure) -> (f64, f64) {
    let mut first = [0.0f64; 3];
    let mut second = [[0.0f64; 3]; 3];
    for (y, v) in nu {
        for i in 0..3 {
            first[i] += v * y[i] as f64;
            for j in 0..3 {
                second[i][j] += v * (y[i] * y[j]) as f64;
            }
        }
    }
    let c = (second[0][0] + second[1][1] + second[2][2]) / 3.0;
    let f = first.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut s = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            s = s.max((second[i][j] - if i == j { c } else { 0.0 }).abs());
        }
    }
    (f, s)
}

#[test]
fn isotropy_cancellation_diagnostics() {
    let m = 2.0;
    let mut measures = vec![centered_uniform(3.0, 3).unwrap()];
    for k in 0..3 {
        measures.push(coarse_step_difference(&env(Family::IsotropicTilt, 0.05, child_seed(8, k)), m).unwrap());
    }
    let mut worst = 0.0f64;
    for nu in &measures {
        let r = isotropy_cancellation(nu, 2.0 * m + 1.0, 12.0, m).unwrap();
        let (f, s) = own_moments(nu);
        let lib_first = r.first_moment.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = worst.max(f).max(s).max(lib_first).max(r.second_defect);
    }
    let mut skew = SignedMeasure::new();
    skew.insert(vec![1, 0, 0], 1.0);
    skew.insert(vec![0, 0, 0], -1.0);
    let rejected = check_symmetry(&skew).is_err() && isotropy_cancellation(&skew, 3.0, 12.0, m).is_err();
    report(
        "A11",
        "isotropy cancellation",
        worst <= 1e-10 && rejected,
        format!("max moment defect {worst:.2e} (<= 1e-10); non-symmetric measure rejected: {rejected}"),
    );
}

#[test]
fn zero_perturbation_and_balanced_environments() {
    let l = 12.0;
    let srw = env(Family::Srw, 0.0, 3);
    let profile = desk_profile(l, 4.0, 2.0);
    let pr = classify_points(&srw, &profile, 1e-9, ThresholdMode::Delta).unwrap();
    let good = classify_environment(&pr, &pr).unwrap().class == EnvClass::Good;
    let psis = [SmoothingField::Constant(2.0), SmoothingField::Profile(profile)];
    let ms = d_metrics_multi(&srw, l, &psis, 0.2 * l, None).unwrap();
    let dmax = ms
        .iter()
        .flat_map(|m| m.d_t.iter().chain(&m.d_t_psi).chain([&m.d_star, &m.d_star_psi]))
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    let c1 = check_c1(&srw.spec, 1e-3, &[8.0, l], &psis, 3, 1).unwrap();
    let c1_pass = c1.samples.iter().all(|s| s.event.is_none());
    let c2_pass = c2_indicator(&srw, l, 0.5, None).unwrap().pass;

    let eps = 0.05;
    let bound = balanced_bound(3, eps, l);
    let dom = ball(l);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let e = env(Family::BalancedAxis { axis: 0 }, eps, child_seed(12, k));
        let t = mean_exit_time(&green(&nn_kernel(&e, &dom)).unwrap(), &[0, 0, 0], None).unwrap();
        worst = worst.max(t);
    }
    let pass = good && dmax == 0.0 && c1_pass && c2_pass && worst <= bound;
    report(
        "A12",
        "environment classes",
        pass,
        format!(
            "eps=0: good {good}, max D-metric {dmax:.1e}, C1 pass {c1_pass}, C2 pass {c2_pass}; \
             balanced max E_0 tau {worst:.2} (<= {bound:.2})"
        ),
    );
}

fn small_configs() -> Vec<String> {
    let desk = r#""r_mode": {"override": {"s": 2, "r": 1}}, "h_scale": 0.5"#;
    Experiment::ALL
        .iter()
        .map(|e| {
            let body = match e {
                Experiment::Dstar => format!(r#""L": 6, "epsilon": [0, 0.05], "n_envs": 2, "classify": true, {desk}, "psi": [{{"constant": 2}}, "profile"]"#),
                Experiment::C1scan => format!(r#""L": [5, 6], "epsilon": 0.05, "n_envs": 2, {desk}"#),
                Experiment::C2scan => r#""L": 6, "epsilon": 0.05, "n_envs": 3"#.to_string(),
                Experiment::Sojourn => format!(r#""L": 6, "epsilon": 0.05, "n_envs": 2, "classify": true, {desk}"#),
                Experiment::Cltscan => r#""m": 2, "n_steps": [2, 3, 4]"#.to_string(),
                Experiment::Greenasym => r#""m": 2, "shells": [6, 8], "n_walks": 3000, "horizon": 60"#.to_string(),
                Experiment::Gammacheck => r#""L": 8, "r_mode": {"override": {"s": 2, "r": 1}}, "samples": 200"#.to_string(),
                Experiment::Hitprob => r#""a": [1, 2], "l_out": 12, "annulus": [2, 4, 8]"#.to_string(),
                Experiment::Smoothcmp => r#""L": 5, "epsilon": 0.05, "n_envs": 1, "m": 1"#.to_string(),
                Experiment::Transience => r#""epsilon": 0.05, "n_envs": 2, "pairs": [[2, 8]], "n_walks": 1500, "k_max": 2"#.to_string(),
                Experiment::Isotropy => r#""L": [6, 8], "epsilon": 0.05, "n_envs": 2, "m": 1"#.to_string(),
            };
            format!(r#"{{"experiment": "{}", "seed": 99, {body}}}"#, e.name())
        })
        .collect()
}

fn payload(path: &std::path::Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            if let Some(o) = v.as_object_mut() {
                o.remove("timestamp");
            }
            v.to_string()
        })
        .collect()
}

#[test]
fn experiments_are_thread_count_invariant() {
    let mut mismatched = Vec::new();
    let mut rows = 0;
    for text in small_configs() {
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let (d1, d8) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = run_with_threads(&cfg, Some(d1.path()), 1).unwrap();
        let b = run_with_threads(&cfg, Some(d8.path()), 8).unwrap();
        let (pa, pb) = (payload(&a.jsonl), payload(&b.jsonl));
        rows += pa.len() - 1;
        if pa != pb || a.n_errors > 0 || pa.len() < 2 {
            mismatched.push(cfg.experiment.name());
        }
    }
    report(
        "A13",
        "determinism across workers",
        mismatched.is_empty(),
        format!("{} experiments, {rows} rows; mismatched or errored: {mismatched:?}", Experiment::ALL.len()),
    );
}

#[test]
fn perturbation_distance_grows_with_epsilon() {
    let l = 12.0;
    let gs = srw_green(l, 3).unwrap();
    let psis = [SmoothingField::Constant(2.0)];
    let mut means = Vec::new();
    let mut contraction_ok = true;
    for eps in [0.01, 0.03, 0.05] {
        let (mut sum, mut sum_psi) = (0.0, 0.0);
        for k in 0..50 {
            let e = env(Family::IsotropicTilt, eps, child_seed(14, k));
            let m = d_metrics_multi(&e, l, &psis, 0.2 * l, Some(&gs)).unwrap().remove(0);
            contraction_ok &= m.d_star_psi <= m.d_star + 1e-12;
            sum += m.d_star;
            sum_psi += m.d_star_psi;
        }
        means.push((sum / 50.0, sum_psi / 50.0));
    }
    let monotone = means.windows(2).all(|w| w[0].0 <= w[1].0);
    let psi_below = means.iter().all(|m| m.1 <= m.0);
    report(
        "A14",
        "perturbation contraction trend",
        monotone && psi_below && contraction_ok,
        format!(
            "mean (D*, D*_psi) at eps 0.01/0.03/0.05: {means:.4?}; nondecreasing {monotone}, \
             psi below {psi_below}, per-sample contraction {contraction_ok}"
        ),
    );
}
