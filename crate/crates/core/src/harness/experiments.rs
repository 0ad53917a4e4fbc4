//! Task lists for each experiment.
//!
//! Every experiment expands into an ordered list of independent tasks. A task
//! returns its rows or an error, which becomes a single `error` row.

use std::sync::Arc;

use super::config::{Experiment, ExperimentConfig};
use super::record::{Row, RowContext};
use super::walks::{hit_before_exit_exact, transience_probe};
use crate::analysis::badness::{classify_environment, classify_points, EnvClass};
use crate::analysis::conditions::{b_event, c1_threshold, c2_indicator, c2_threshold, f_eta};
use crate::analysis::isotropy::{isotropy_cancellation, symmetrize, SignedMeasure};
use crate::analysis::metrics::{d_metrics_multi, srw_green};
use crate::analysis::smoothed::{default_starts, smoothed_exit_compare, BmQuadrature};
use crate::analysis::time::{balanced_bound, time_classify};
use crate::environment::{sample_environment, Environment, Family};
use crate::error::Result;
use crate::kernels::coarse::{mixed_exit, pieces, srw_coarse_step, BaseWalk};
use crate::kernels::{srw_kernel, SmoothingField};
use crate::lattice::Domain;
use crate::reference::clt::{green_zd_shells, local_clt_scan};
use crate::reference::gamma::{
    comparability_ratio, gamma_bounds_report, lipschitz_constants, ray_starts, triangle_excess, GammaKernelSpec,
};
use crate::reference::hitting::{annulus_exit, annulus_exit_exact, srw_hit_ball_empirical};
use crate::rng::{child_seed, key, TAG_TEST, TAG_WALK};
use crate::solver::sojourn::sojourn_decomposition;
use crate::solver::{green, mean_exit_time, GreenOperator};

type TaskFn = Box<dyn Fn(&RowContext) -> Result<Vec<Row>> + Send + Sync>;

pub struct Task {
    pub ctx: RowContext,
    pub f: TaskFn,
}

impl Task {
    fn new(ctx: RowContext, f: impl Fn(&RowContext) -> Result<Vec<Row>> + Send + Sync + 'static) -> Task {
        Task { ctx, f: Box::new(f) }
    }

    pub fn run(&self) -> Vec<Row> {
        match (self.f)(&self.ctx) {
            Ok(rows) => rows,
            Err(e) => vec![self.ctx.error(&e)],
        }
    }
}

fn env_ctx(l: Option<f64>, eps: f64, k: u64, seed: u64) -> RowContext {
    RowContext { env_index: Some(k), env_seed: Some(child_seed(seed, k)), l, epsilon: Some(eps), ..Default::default() }
}

fn env_for(cfg: &ExperimentConfig, ctx: &RowContext) -> Result<Environment> {
    sample_environment(cfg.family_spec(ctx.epsilon.unwrap_or(0.0))?, ctx.env_seed.unwrap_or(0))
}

/// `(L, ε, k)` contexts in canonical order.
fn env_grid(cfg: &ExperimentConfig, seed: u64, with_l: bool) -> Vec<RowContext> {
    let ls: Vec<Option<f64>> = if with_l { cfg.l.iter().map(|&l| Some(l)).collect() } else { vec![None] };
    let mut out = Vec::new();
    for &l in &ls {
        for &eps in &cfg.epsilon {
            for k in 0..cfg.n_envs {
                out.push(env_ctx(l, eps, k, seed));
            }
        }
    }
    out
}

/// Shared SRW Green operators, one per `L`.
fn srw_greens(cfg: &ExperimentConfig) -> Result<Vec<(f64, Arc<GreenOperator>)>> {
    cfg.l.iter().map(|&l| Ok((l, Arc::new(srw_green(l, cfg.d)?)))).collect()
}

fn lookup<T: Clone>(table: &[(f64, T)], l: f64) -> T {
    table.iter().find(|e| e.0 == l).expect("value precomputed for every L").1.clone()
}

fn class_rows(ctx: &RowContext, env: &Environment, cfg: &ExperimentConfig, l: f64) -> Result<Vec<Row>> {
    let profile = cfg.profile(l)?;
    let rep = classify_points(env, &profile, cfg.delta, cfg.threshold_mode)?;
    let br = classify_environment(&rep, &rep)?;
    let (code, level) = match br.class {
        EnvClass::Good => (0.0, 0.0),
        EnvClass::OneBad { level, .. } => (1.0, level as f64),
        EnvClass::ManyBad => (2.0, 0.0),
    };
    Ok(vec![
        ctx.flag("good", br.class == EnvClass::Good),
        ctx.row("class", code),
        ctx.row("level", level),
        ctx.row("n_bad", br.bad.len() as f64),
        ctx.row("n_boundary_bad", br.boundary_bad.len() as f64),
        ctx.flag("bd_bad", br.bd_bad),
    ])
}

fn dstar(cfg: &Arc<ExperimentConfig>, seed: u64) -> Result<Vec<Task>> {
    let greens = srw_greens(cfg)?;
    let mut tasks = Vec::new();
    for ctx in env_grid(cfg, seed, true) {
        let cfg = cfg.clone();
        let gs = lookup(&greens, ctx.l.unwrap());
        tasks.push(Task::new(ctx, move |ctx| {
            let l = ctx.l.unwrap();
            let env = env_for(&cfg, ctx)?;
            let psis = cfg.smoothing_fields(l)?;
            let ms = d_metrics_multi(&env, l, &psis, cfg.sup_fraction * l, Some(&gs))?;
            let mut rows = vec![ctx.row("d_star", ms[0].d_star)];
            for (j, m) in ms.iter().enumerate() {
                rows.push(ctx.with_psi(j).row("d_star_psi", m.d_star_psi));
            }
            if cfg.classify {
                rows.extend(class_rows(ctx, &env, &cfg, l)?);
            }
            Ok(rows)
        }));
    }
    Ok(tasks)
}

fn c1scan(cfg: &Arc<ExperimentConfig>, seed: u64) -> Result<Vec<Task>> {
    let greens = srw_greens(cfg)?;
    let mut tasks = Vec::new();
    for ctx in env_grid(cfg, seed, true) {
        let cfg = cfg.clone();
        let gs = lookup(&greens, ctx.l.unwrap());
        tasks.push(Task::new(ctx, move |ctx| {
            let l = ctx.l.unwrap();
            let env = env_for(&cfg, ctx)?;
            let psis = cfg.smoothing_fields(l)?;
            let ms = d_metrics_multi(&env, l, &psis, cfg.sup_fraction * l, Some(&gs))?;
            let mut rows = vec![ctx.row("d_star", ms[0].d_star)];
            for (j, m) in ms.iter().enumerate() {
                let c = ctx.with_psi(j);
                rows.push(c.row("d_star_psi", m.d_star_psi));
                let ev = b_event(l, m.d_star, m.d_star_psi, cfg.delta);
                for i in 1..=4u8 {
                    let ci = c.with_key("i", i as f64).with_key("threshold", c1_threshold(l, i));
                    rows.push(ci.flag("b_event", ev == Some(i)));
                }
            }
            Ok(rows)
        }));
    }
    Ok(tasks)
}

fn c2scan(cfg: &Arc<ExperimentConfig>, seed: u64) -> Result<Vec<Task>> {
    let srw_means: Vec<(f64, f64)> = cfg
        .l
        .iter()
        .map(|&l| {
            let dom = Arc::new(Domain::ball(&vec![0; cfg.d], l)?);
            Ok((l, mean_exit_time(&green(&srw_kernel(&dom))?, &vec![0; cfg.d], None)?))
        })
        .collect::<Result<_>>()?;
    let mut tasks = Vec::new();
    for ctx in env_grid(cfg, seed, true) {
        let cfg = cfg.clone();
        let srw = lookup(&srw_means, ctx.l.unwrap());
        tasks.push(Task::new(ctx, move |ctx| {
            let l = ctx.l.unwrap();
            let env = env_for(&cfg, ctx)?;
            let ind = c2_indicator(&env, l, cfg.eta, Some(srw))?;
            let c = ctx.with_key("f_eta", f_eta(cfg.eta, l)).with_key("threshold", c2_threshold(l, cfg.d));
            Ok(vec![
                ctx.row("quenched_mean", ind.quenched),
                ctx.row("srw_mean", ind.srw),
                c.flag("pass", ind.pass),
            ])
        }));
    }
    Ok(tasks)
}

fn sojourn(cfg: &Arc<ExperimentConfig>, seed: u64) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for ctx in env_grid(cfg, seed, true) {
        let cfg = cfg.clone();
        tasks.push(Task::new(ctx, move |ctx| {
            let l = ctx.l.unwrap();
            let d = cfg.d;
            let env = env_for(&cfg, ctx)?;
            let profile = cfg.profile(l)?;
            let dom = Arc::new(Domain::ball(&vec![0; d], l)?);
            let dec = sojourn_decomposition(&env, &SmoothingField::Profile(profile), &dom)?;
            let o = dom.index_of(&vec![0; d]).expect("origin is interior");
            let field = crate::solver::sojourn::sojourn_field(&env, &SmoothingField::Profile(profile), &dom)?;
            let lambda_max = field.values.iter().copied().fold(0.0, f64::max);
            let bound = l.ln().powi(-2) * l * l;
            let mut rows = vec![
                ctx.row("residual_over_l2", dec.max_residual / (l * l)),
                ctx.row("quenched_mean", dec.direct[o]),
                ctx.row("lambda_max", lambda_max),
                ctx.with_key("bound", bound).flag("not_too_bad", lambda_max <= bound),
            ];
            if matches!(env.spec.family, Family::BalancedAxis { .. }) {
                let b = balanced_bound(d, env.epsilon(), l);
                rows.push(ctx.with_key("bound", b).flag("balanced_bound_holds", dec.direct[o] <= b));
            }
            if cfg.classify {
                let t = time_classify(&env, &profile, cfg.eta, cfg.delta, cfg.threshold_mode)?;
                rows.push(ctx.flag("good_sp", t.good_sp));
                rows.push(ctx.flag("good_tm", t.good_tm));
                rows.push(ctx.flag("one_bad_tm", t.one_bad_tm));
                rows.push(ctx.row("n_space_bad", t.space_bad.len() as f64));
                rows.push(ctx.row("n_time_bad", t.time_bad.len() as f64));
            }
            Ok(rows)
        }));
    }
    Ok(tasks)
}

fn cltscan(cfg: &Arc<ExperimentConfig>) -> Vec<Task> {
    let cfg = cfg.clone();
    let ctx = RowContext::default().with_key("m", cfg.m);
    vec![Task::new(ctx, move |ctx| {
        let r = local_clt_scan(cfg.m, &cfg.n_steps, cfg.d)?;
        let mut rows = Vec::new();
        for (i, &n) in r.n_values.iter().enumerate() {
            let c = ctx.with_key("n", n as f64);
            rows.push(c.row("sup_error", r.sup_errors[i]));
            rows.push(c.row("kernel_mass", r.kernel_mass[i]));
            rows.push(c.row("gaussian_mass", r.gaussian_mass[i]));
        }
        rows.push(ctx.row("gamma_m", r.gamma_m));
        rows.push(ctx.row("slope", r.slope));
        rows.push(ctx.row("intercept", r.intercept));
        Ok(rows)
    })]
}

fn greenasym(cfg: &Arc<ExperimentConfig>, seed: u64) -> Vec<Task> {
    let cfg = cfg.clone();
    let ctx = RowContext::default().with_key("m", cfg.m);
    vec![Task::new(ctx, move |ctx| {
        let est = green_zd_shells(cfg.m, cfg.d, &cfg.shells, cfg.n_walks, cfg.horizon, seed)?;
        let mut rows = Vec::new();
        for e in est {
            let c = ctx.with_key("radius", e.radius as f64);
            rows.push(c.row_ci("scaled_green", e.value, e.ci));
            rows.push(c.row("tail", e.tail));
            rows.push(c.row("target", e.target));
            rows.push(c.row("rel_err", (e.value / e.target - 1.0).abs()));
        }
        Ok(rows)
    })]
}

fn gammacheck(cfg: &Arc<ExperimentConfig>, seed: u64) -> Vec<Task> {
    cfg.l
        .iter()
        .enumerate()
        .map(|(t, &l)| {
            let cfg = cfg.clone();
            let ctx = RowContext { l: Some(l), ..Default::default() };
            Task::new(ctx, move |ctx| {
                let p = cfg.profile(l)?;
                let spec = GammaKernelSpec::new(l, p.r, p.s, cfg.d)?;
                let rep = gamma_bounds_report(&spec, p, &ray_starts(l, cfg.d, 4), 4)?;
                let lip = lipschitz_constants(&spec);
                let s = key(seed, TAG_TEST, &[t as i64]);
                Ok(vec![
                    ctx.row("c1", rep.c1),
                    ctx.row("level_constant", rep.level_constant),
                    ctx.row("lipschitz_a_tilde", lip.a_tilde),
                    ctx.row("lipschitz_a", lip.a),
                    ctx.row("triangle_excess", triangle_excess(&spec, cfg.samples, s)),
                    ctx.row("comparability_ratio", comparability_ratio(&spec, cfg.samples, s)),
                ])
            })
        })
        .collect()
}

fn hitprob(cfg: &Arc<ExperimentConfig>) -> Vec<Task> {
    let mut tasks: Vec<Task> = cfg
        .a
        .iter()
        .map(|&a| {
            let cfg = cfg.clone();
            let ctx = RowContext::default().with_key("a", a).with_key("l_out", cfg.l_out);
            Task::new(ctx, move |ctx| {
                let d = cfg.d;
                let mut x = vec![0; d];
                x[0] = (4.0 * a).round() as i32;
                let r = srw_hit_ball_empirical(a, &x, &vec![0; d], cfg.l_out)?;
                Ok(vec![
                    ctx.row("exact", r.exact),
                    ctx.row("free_space", r.free_space),
                    ctx.row("ratio", r.ratio()),
                    ctx.row("k_relative", r.k_relative()),
                    ctx.row("k_absolute", r.k_absolute()),
                ])
            })
        })
        .collect();
    let cfg = cfg.clone();
    let [l, xn, big] = cfg.annulus;
    let ctx = RowContext::default().with_key("l", l).with_key("x", xn).with_key("big_l", big);
    tasks.push(Task::new(ctx, move |ctx| {
        let mut x = vec![0; cfg.d];
        x[0] = xn.round() as i32;
        let formula = annulus_exit(l, xn, big, cfg.d)?;
        let exact = annulus_exit_exact(l, &x, big)?;
        Ok(vec![
            ctx.row("annulus_formula", formula),
            ctx.row("annulus_exact", exact),
            ctx.row("annulus_rel_err", (exact / formula - 1.0).abs()),
        ])
    }));
    tasks
}

fn smoothcmp(cfg: &Arc<ExperimentConfig>, seed: u64) -> Vec<Task> {
    env_grid(cfg, seed, true)
        .into_iter()
        .map(|ctx| {
            let cfg = cfg.clone();
            Task::new(ctx.with_key("m", cfg.m), move |ctx| {
                let l = ctx.l.unwrap();
                let env = env_for(&cfg, ctx)?;
                let r = smoothed_exit_compare(Some(&env), l, cfg.m, &default_starts(l), BmQuadrature::default())?;
                let mut rows = vec![ctx.row("sup_diff", r.sup_diff), ctx.row("scaled", r.scaled)];
                for p in &r.points {
                    let c = ctx.with_key("x1", p.x[0] as f64);
                    rows.push(c.row("lattice_mass", p.lattice_mass));
                    rows.push(c.row("point_sup_diff", p.sup_diff));
                }
                Ok(rows)
            })
        })
        .collect()
}

fn transience(cfg: &Arc<ExperimentConfig>, seed: u64) -> Vec<Task> {
    env_grid(cfg, seed, false)
        .into_iter()
        .map(|ctx| {
            let cfg = cfg.clone();
            Task::new(ctx, move |ctx| {
                let env = env_for(&cfg, ctx)?;
                let k = ctx.env_index.unwrap_or(0);
                let walk_seed = key(seed, TAG_WALK, &[k as i64]);
                let table =
                    transience_probe(&env, &cfg.pairs, cfg.rho, cfg.k_max, cfg.n_walks, walk_seed, cfg.step_cap)?;
                let mut rows = Vec::new();
                for t in table {
                    let c = ctx.with_key("l_in", t.l_in).with_key("l_out", t.l_out).with_key("k", t.k as f64);
                    rows.push(c.row_ci("escape_probability", t.estimate, t.ci));
                    rows.push(c.row("exact", hit_before_exit_exact(&env, t.l_in, t.l_out, &t.x)?));
                    rows.push(c.row("majorant", t.majorant));
                    rows.push(c.row("aborted", t.aborted as f64));
                }
                Ok(rows)
            })
        })
        .collect()
}

/// `ν`: the symmetrized difference between one coarse step of the environment
/// walk from the origin and the SRW coarse step.
pub fn coarse_step_difference(env: &Environment, m: f64) -> Result<SignedMeasure> {
    let d = env.d();
    let le = mixed_exit(BaseWalk::Env(env), &vec![0; d], &pieces(m, d)?, &|_| true)?;
    let mut nu = SignedMeasure::new();
    for &(k, p) in &le.exits {
        *nu.entry(le.offset(k).to_vec()).or_default() += p;
    }
    for (o, p) in srw_coarse_step(m, d)? {
        *nu.entry(o).or_default() -= p;
    }
    Ok(symmetrize(&nu))
}

fn isotropy(cfg: &Arc<ExperimentConfig>, seed: u64) -> Vec<Task> {
    env_grid(cfg, seed, false)
        .into_iter()
        .map(|ctx| {
            let cfg = cfg.clone();
            Task::new(ctx.with_key("m", cfg.m), move |ctx| {
                let env = env_for(&cfg, ctx)?;
                let nu = coarse_step_difference(&env, cfg.m)?;
                let small = 2.0 * cfg.m + 1.0;
                let mut rows = Vec::new();
                for &l in &cfg.l {
                    let r = isotropy_cancellation(&nu, small, l, cfg.m)?;
                    let c = RowContext { l: Some(l), ..ctx.clone() };
                    rows.push(c.row("first_moment", r.first_moment.iter().fold(0.0, |a, v| a.max(v.abs()))));
                    rows.push(c.row("second_defect", r.second_defect));
                    rows.push(c.row("l1", r.l1));
                    rows.push(c.row("sup_value", r.sup_value));
                    rows.push(c.row("bound_shape", r.bound_shape));
                    rows.push(c.row("ratio", r.ratio));
                }
                Ok(rows)
            })
        })
        .collect()
}

/// The ordered task list for `cfg`.
pub fn tasks(cfg: &ExperimentConfig) -> Result<Vec<Task>> {
    let seed = cfg.seed()?;
    let cfg = Arc::new(cfg.clone());
    Ok(match cfg.experiment {
        Experiment::Dstar => dstar(&cfg, seed)?,
        Experiment::C1scan => c1scan(&cfg, seed)?,
        Experiment::C2scan => c2scan(&cfg, seed)?,
        Experiment::Sojourn => sojourn(&cfg, seed)?,
        Experiment::Cltscan => cltscan(&cfg),
        Experiment::Greenasym => greenasym(&cfg, seed),
        Experiment::Gammacheck => gammacheck(&cfg, seed),
        Experiment::Hitprob => hitprob(&cfg),
        Experiment::Smoothcmp => smoothcmp(&cfg, seed),
        Experiment::Transience => transience(&cfg, seed),
        Experiment::Isotropy => isotropy(&cfg, seed),
    })
}
