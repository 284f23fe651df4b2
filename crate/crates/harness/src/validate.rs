//! Oracle, gradient and experiment checks shared by the `validate`
//! subcommand and the acceptance tests.

use std::fmt;

use isac_core::channel::{complex_normal, noiseless_observation};
use isac_core::geometry::uniform_grid;
use isac_core::linalg::CMatrix;
use isac_core::mstep::{surrogate_gradient, surrogate_value, SurrogateContext};
use isac_core::oracle::{central_difference, dense_gaussian_posterior, enumerate_module_b};
use isac_core::prior::{PriorHyperParams, UserPrior};
use isac_core::solver::sea_turbo_sbi;
use isac_core::turbo::{lmmse_module_a, module_b, GaussianMessage, SupportModel, VarClamp};
use isac_core::{Cx, SensingParams64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Method, PlacementCfg};
use crate::scenario::{self, generate_scene, hyper_params, make_trial, scene_seed, solver_config, xi_prior};
use crate::sweep::{metric_value, SweepRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs_diff_c(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn rel_err_c(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Module B against brute-force enumeration on `instances` random inputs
/// with one to three columns, both support models and both user priors.
pub fn module_b_oracle(instances: usize, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for i in 0..instances {
        let q1 = 1 + i % 3;
        let model = if i % 2 == 0 { SupportModel::Joint } else { SupportModel::Separate };
        let user = if i % 5 == 4 {
            UserPrior::Known {
                radar_visible: rng.random_bool(0.5),
            }
        } else {
            UserPrior::Shared
        };
        let mut hyper = PriorHyperParams::uniform(
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
            q1,
            1.0,
            user,
        );
        for v in hyper.slab_var_r.iter_mut().chain(hyper.slab_var_c.iter_mut()) {
            *v = rng.random_range(0.1..4.0);
        }
        let mean: Vec<Cx<f64>> = (0..2 * q1).map(|_| complex_normal(&mut rng, 2.0)).collect();
        let var: Vec<f64> = (0..2 * q1).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
        let input = GaussianMessage::new(mean, var).expect("positive variances");
        let clamp = VarClamp { min: 1e-12, max: 1e12 };
        let Ok((fast, _)) = module_b(&input, &hyper, model, clamp) else {
            errors += 1;
            continue;
        };
        let slow = enumerate_module_b(&input, &hyper, model);
        let e = max_abs_diff_c(&fast.mean, &slow.mean)
            .max(max_abs_diff(&fast.var, &slow.var))
            .max(max_abs_diff(&fast.prob_r, &slow.prob_r))
            .max(max_abs_diff(&fast.prob_c, &slow.prob_c))
            .max(max_abs_diff(&fast.prob_joint, &slow.prob_joint));
        worst = worst.max(e);
    }
    CheckResult::new(
        "module B vs enumeration",
        errors == 0 && worst <= tol,
        format!("{instances} instances, max abs error {worst:.3e} (tol {tol:.0e}), {errors} errors"),
    )
}

/// Module A against observation-space Gaussian conditioning on random
/// dense instances of up to `max_rows x max_cols`.
pub fn module_a_oracle(instances: usize, max_rows: usize, max_cols: usize, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for i in 0..instances {
        let (rows, cols) = if i == 0 {
            (max_rows, max_cols)
        } else {
            (rng.random_range(2..=max_rows), rng.random_range(1..=max_cols))
        };
        let phi = CMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng, 1.0 / rows as f64));
        let y: Vec<Cx<f64>> = (0..rows).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let nv = 10f64.powf(rng.random_range(-3.0..0.0));
        let mean: Vec<Cx<f64>> = (0..cols).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let var: Vec<f64> = (0..cols).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
        let prior = GaussianMessage::new(mean.clone(), var.clone()).expect("positive variances");
        let fast = lmmse_module_a(&phi, &y, nv, &prior, VarClamp { min: 1e-12, max: 1e12 });
        let slow = dense_gaussian_posterior(&phi, &y, nv, &mean, &var);
        let (Ok((post, _)), Ok((m, cov))) = (fast, slow) else {
            errors += 1;
            continue;
        };
        let dvar: Vec<f64> = cov.diag().iter().map(|z| z.re).collect();
        let full = post.covariance();
        let cov_err = (full.sub(&cov).expect("same shape").frobenius_norm_sqr() / cov.frobenius_norm_sqr()).sqrt();
        let var_err = post
            .var
            .iter()
            .zip(&dvar)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max);
        worst = worst.max(rel_err_c(&post.mean, &m)).max(cov_err).max(var_err);
    }
    CheckResult::new(
        "module A vs dense conditioning",
        errors == 0 && worst <= tol,
        format!("{instances} instances up to {max_rows}x{max_cols}, max relative error {worst:.3e} (tol {tol:.0e}), {errors} errors"),
    )
}

/// Analytic surrogate gradient against central differences at random
/// perturbed parameters and random posterior moments on trials of `cfg`.
pub fn gradient_check(cfg: &ExperimentConfig, states: usize, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = xi_prior(cfg);
    let d = cfg.system.resolution;
    let mut worst = 0.0f64;
    let mut coords = 0;
    for s in 0..states {
        let Ok(trial) = make_trial(cfg, s, s % cfg.sweep.snr_db.len()) else {
            return CheckResult::new("surrogate gradient", false, format!("scene generation failed at state {s}"));
        };
        let grid = uniform_grid(&trial.problem.grid).expect("valid grid");
        let jitter = grid
            .iter()
            .map(|p| {
                prior
                    .area
                    .project(&p.offset(rng.random_range(-0.4..0.4) * d, rng.random_range(-0.4..0.4) * d))
            })
            .collect();
        let user = prior.area.project(&trial.scene.user.offset(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let xi = SensingParams64::new(jitter, user, rng.random_range(-0.5..0.5) * prior.tau_bound);
        let q1 = xi.grid_len() + 1;
        let mut moments = || {
            let x: Vec<Cx<f64>> = (0..q1).map(|_| complex_normal(&mut rng, 0.5)).collect();
            let b = CMatrix::from_fn(q1, q1, |_, _| complex_normal(&mut rng, 0.01));
            (x, b.matmul(&b.adjoint()).expect("square"))
        };
        let (r, c) = (moments(), moments());
        let ctx = SurrogateContext::from_moments(&trial.problem.sys, &trial.problem.pilots, &trial.obs, &prior, r, c);
        let active: Vec<usize> = (0..xi.grid_len()).collect();
        let g = surrogate_gradient(&xi, &ctx, &active);
        let f = |x: &SensingParams64| surrogate_value(x, &ctx);
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        let hp = 1e-4;
        for &i in &active {
            let nx = central_difference(|h| { let mut x = xi.clone(); x.grid[i].x += h; f(&x) }, 0.0, hp);
            let ny = central_difference(|h| { let mut x = xi.clone(); x.grid[i].y += h; f(&x) }, 0.0, hp);
            pairs.push((g.grid[i].0, nx));
            pairs.push((g.grid[i].1, ny));
        }
        pairs.push((g.user.0, central_difference(|h| { let mut x = xi.clone(); x.user.x += h; f(&x) }, 0.0, hp)));
        pairs.push((g.user.1, central_difference(|h| { let mut x = xi.clone(); x.user.y += h; f(&x) }, 0.0, hp)));
        let ht = 1e-4 / cfg.system.bandwidth();
        pairs.push((g.time_offset, central_difference(|h| { let mut x = xi.clone(); x.time_offset += h; f(&x) }, 0.0, ht)));
        let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        for (a, n) in pairs {
            // coordinates whose derivative is negligible next to the largest are
            // compared relative to a small fraction of that scale
            worst = worst.max((a - n).abs() / n.abs().max(1e-6 * scale));
            coords += 1;
        }
    }
    CheckResult::new(
        "surrogate gradient vs central differences",
        worst <= tol,
        format!("{states} states, {coords} coordinates, max relative error {worst:.3e} (tol {tol:.0e})"),
    )
}

/// Surrogate never decreases across accepted M-steps of the full solver.
pub fn em_monotonicity(cfg: &ExperimentConfig, trials: usize) -> CheckResult {
    let mut violations = 0;
    let mut steps = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for t in 0..trials {
        let Ok(trial) = make_trial(cfg, t, t % cfg.sweep.snr_db.len()) else {
            failures += 1;
            continue;
        };
        let Ok(est) = scenario::run_method(cfg, Method::SbiJoint, &trial) else {
            failures += 1;
            continue;
        };
        for &(before, after) in &est.diagnostics.surrogate_trace {
            steps += 1;
            if after < before || !after.is_finite() {
                violations += 1;
                worst = worst.max(before - after);
            }
        }
    }
    CheckResult::new(
        "EM surrogate monotonicity",
        violations == 0 && failures == 0,
        format!("{trials} trials, {steps} M-steps, {violations} violations (worst drop {worst:.3e}), {failures} failed trials"),
    )
}

/// On-grid scene with the user at its prior mean and zero time offset,
/// observed without noise while the estimator assumes `noise_var`.
pub fn exact_recovery(cfg: &ExperimentConfig, trials: usize, noise_var: f64, coeff_tol: f64, min_rate: f64) -> CheckResult {
    let mut c = cfg.clone();
    c.scene.placement = PlacementCfg::OnGrid;
    c.scene.user_from_prior = false;
    c.scene.time_offset_from_prior = false;
    let (hyper, solver, prior) = match hyper_params(&c) {
        Ok(h) => (h, solver_config(&c), xi_prior(&c)),
        Err(e) => return CheckResult::new("exact recovery", false, format!("hyperparameters: {e}")),
    };
    let mut exact = 0;
    let mut support_ok = 0;
    let mut worst_ok = 0.0f64;
    for t in 0..trials {
        let Ok((problem, scene)) = generate_scene(&c, scene_seed(c.sweep.seed, t)) else { continue };
        let obs = noiseless_observation(&problem.sys, &scene, &problem.pilots, (noise_var, noise_var));
        let Ok(est) = sea_turbo_sbi(&problem, &obs, &hyper, &solver, &prior) else { continue };
        let q1 = est.coeff_r.len();
        let mut xr = vec![Cx::new(0.0, 0.0); q1];
        let mut xc = vec![Cx::new(0.0, 0.0); q1];
        xr[0] = scene.user_radar_gain;
        xc[0] = scene.los_gain;
        for (list, x) in [(&scene.targets, &mut xr), (&scene.scatterers, &mut xc)] {
            for e in list.iter() {
                let (idx, _) = problem.grid.nearest_point(&e.position).expect("inside the grid");
                x[idx + 1] = e.gain;
            }
        }
        let th = solver.detection_threshold;
        let sup_r = (0..q1).all(|q| (est.prob_r[q] > th) == (xr[q] != Cx::new(0.0, 0.0)));
        let sup_c = (0..q1).all(|q| (est.prob_c[q] > th) == (xc[q] != Cx::new(0.0, 0.0)));
        let est_all: Vec<Cx<f64>> = est.coeff_r.iter().chain(&est.coeff_c).copied().collect();
        let true_all: Vec<Cx<f64>> = xr.iter().chain(&xc).copied().collect();
        let err = rel_err_c(&est_all, &true_all);
        if sup_r && sup_c {
            support_ok += 1;
            if err < coeff_tol {
                exact += 1;
                worst_ok = worst_ok.max(err);
            }
        }
    }
    let rate = exact as f64 / trials as f64;
    CheckResult::new(
        "exact recovery",
        rate >= min_rate,
        format!(
            "{exact}/{trials} exact (support exact in {support_ok}, coefficient tol {coeff_tol:.0e}), rate {rate:.3} vs {min_rate}; worst passing error {worst_ok:.3e}"
        ),
    )
}

fn values(records: &[SweepRecord], method: Method, snr: f64, metric: &str) -> Vec<(usize, f64)> {
    records
        .iter()
        .filter(|r| r.is_ok() && r.method == method.name() && r.snr_db == snr)
        .filter_map(|r| metric_value(r, metric).map(|v| (r.trial, v)))
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Dynamic grid beats the fixed grid at `snr`, whose RMSE sits within
/// `[0.5, 2]` of `d / sqrt(6)`, for both entity classes.
pub fn off_grid_refinement(records: &[SweepRecord], snr: f64, resolution: f64) -> CheckResult {
    let floor = resolution / 6f64.sqrt();
    let mut passed = true;
    let mut detail = Vec::new();
    for metric in ["rmse_target", "rmse_scatterer"] {
        let fixed: Vec<f64> = values(records, Method::TurboCs, snr, metric).into_iter().map(|v| v.1).collect();
        let dynamic: Vec<f64> = values(records, Method::SbiJoint, snr, metric).into_iter().map(|v| v.1).collect();
        if fixed.is_empty() || dynamic.is_empty() {
            return CheckResult::new("off-grid refinement", false, format!("no {metric} records at {snr} dB"));
        }
        let (mf, _) = mean_se(&fixed);
        let (md, _) = mean_se(&dynamic);
        let ok = md < mf && mf >= 0.5 * floor && mf <= 2.0 * floor;
        passed &= ok;
        detail.push(format!(
            "{metric}: dynamic {md:.3} vs fixed {mf:.3} (floor {floor:.3}, band [{:.3}, {:.3}], n={})",
            0.5 * floor,
            2.0 * floor,
            fixed.len()
        ));
    }
    CheckResult::new("off-grid refinement", passed, detail.join("; "))
}

/// Paired joint-vs-separate gaps at each SNR: mean(separate - joint) must
/// exceed `k` standard errors of the paired difference.
pub fn joint_vs_separate(records: &[SweepRecord], snrs: &[f64], k: f64) -> CheckResult {
    let mut passed = true;
    let mut detail = Vec::new();
    for &snr in snrs {
        for metric in ["rmse_target", "rmse_scatterer", "nmse_radar", "nmse_comm"] {
            let joint = values(records, Method::SbiJoint, snr, metric);
            let sep = values(records, Method::SbiSeparate, snr, metric);
            let diffs: Vec<f64> = sep
                .iter()
                .filter_map(|(t, s)| joint.iter().find(|(u, _)| u == t).map(|(_, j)| s - j))
                .collect();
            if diffs.len() < 2 {
                passed = false;
                detail.push(format!("{snr} dB {metric}: too few paired trials"));
                continue;
            }
            let (m, se) = mean_se(&diffs);
            let ok = m > k * se;
            passed &= ok;
            detail.push(format!(
                "{snr} dB {metric}: gap {m:.4} ({:.1} SE, n={}){}",
                m / se.max(f64::MIN_POSITIVE),
                diffs.len(),
                if ok { "" } else { " FAIL" }
            ));
        }
    }
    CheckResult::new("joint vs separate", passed, detail.join("; "))
}

/// Every method's mean RMSE and NMSE is non-increasing in SNR, allowing one
/// inversion per curve no larger than one standard error.
pub fn monotone_curves(records: &[SweepRecord], methods: &[Method], snrs: &[f64]) -> CheckResult {
    let mut passed = true;
    let mut detail = Vec::new();
    for &m in methods {
        for metric in ["rmse_target", "rmse_scatterer", "nmse_radar", "nmse_comm"] {
            let pts: Vec<(f64, f64)> = snrs
                .iter()
                .map(|&s| {
                    let v: Vec<f64> = values(records, m, s, metric).into_iter().map(|v| v.1).collect();
                    if v.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&v) }
                })
                .collect();
            let mut inversions = 0;
            let mut large = 0;
            for w in pts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if !(a.0.is_finite() && b.0.is_finite()) {
                    large += 1;
                } else if b.0 > a.0 {
                    inversions += 1;
                    if b.0 - a.0 > a.1.max(b.1) {
                        large += 1;
                    }
                }
            }
            let ok = large == 0 && inversions <= 1;
            passed &= ok;
            if !ok {
                let curve: Vec<String> = pts.iter().map(|p| format!("{:.4}±{:.4}", p.0, p.1)).collect();
                detail.push(format!("{} {metric}: {}", m.name(), curve.join(" > ")));
            }
        }
    }
    if detail.is_empty() {
        detail.push(format!("{} methods x 4 metrics over {} SNR points", methods.len(), snrs.len()));
    }
    CheckResult::new("monotone SNR curves", passed, detail.join("; "))
}

/// Fast checks for the `validate` subcommand.
pub fn run_checks(cfg: &ExperimentConfig) -> Vec<CheckResult> {
    vec![
        module_b_oracle(300, cfg.sweep.seed, 1e-9),
        module_a_oracle(50, 128, 64, cfg.sweep.seed, 1e-8),
        gradient_check(cfg, 5, cfg.sweep.seed, 1e-5),
        em_monotonicity(cfg, 10),
        exact_recovery(cfg, 10, 1e-12, 1e-6, 0.95),
    ]
}
