//! Trial construction: seeds, pilots, scenes, SNR-matched noise, and the
//! mapping from configuration to estimator inputs.

use isac_core::baselines::{omp_estimates, sea_turbo_sbi_separate, turbo_cs_fixed_grid};
use isac_core::channel::{
    add_noise, clean_signals, complex_normal, generate_pilots, pilot_subcarriers, Observation, Scene, SystemGeometry,
};
use isac_core::geometry::{Area, ArrayGeometry, GridSpec, Position};
use isac_core::mstep::{ArmijoParams, StepSizes, XiPrior};
use isac_core::prior::{scene_from_counts, Placement, PriorHyperParams, SceneRequest, UserPrior};
use isac_core::solver::{sea_turbo_sbi, Estimates, Mode, Problem, SolverConfig};
use isac_core::turbo::{TurboControl, VarClamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Method, PlacementCfg, UserColumn};

/// SplitMix64 finalizer applied to `a + golden * (b + 1)`; used to derive
/// independent child seeds from a parent seed and a counter.
pub fn split_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t`'s scene and pilots; shared by every SNR and method.
pub fn scene_seed(master: u64, trial: usize) -> u64 {
    split_seed(master, trial as u64)
}

pub fn noise_seed(scene_seed: u64, snr_index: usize) -> u64 {
    split_seed(scene_seed ^ 0x5DEE_CE66_D1CE_5EED, snr_index as u64)
}

pub fn area(cfg: &ExperimentConfig) -> Area<f64> {
    Area::centered_square(cfg.system.area_side)
}

pub fn grid_spec(cfg: &ExperimentConfig) -> GridSpec<f64> {
    GridSpec::new(area(cfg), cfg.system.resolution)
}

pub fn system_geometry(cfg: &ExperimentConfig) -> SystemGeometry<f64> {
    let bs = cfg.system.bs;
    SystemGeometry::new(
        Position::new(bs[0], bs[1]),
        ArrayGeometry::new(cfg.system.antennas).expect("validated antenna count"),
    )
}

pub fn tau_bound(cfg: &ExperimentConfig) -> f64 {
    cfg.prior.tau_bound_factor / cfg.system.bandwidth()
}

pub fn xi_prior(cfg: &ExperimentConfig) -> XiPrior<f64> {
    XiPrior {
        user_mean: Position::new(cfg.scene.user_mean[0], cfg.scene.user_mean[1]),
        user_var: cfg.prior.user_var,
        tau_bound: tau_bound(cfg),
        area: area(cfg),
    }
}

pub fn user_prior(cfg: &ExperimentConfig) -> UserPrior {
    match cfg.prior.user_column {
        UserColumn::Known => UserPrior::Known {
            radar_visible: cfg.scene.user_radar_visible,
        },
        UserColumn::Shared => UserPrior::Shared,
    }
}

pub fn hyper_params(cfg: &ExperimentConfig) -> isac_core::Result<PriorHyperParams<f64>> {
    let q = grid_spec(cfg).count()?;
    let sc = &cfg.scene;
    let mut h = PriorHyperParams::for_scene_counts(sc.targets, sc.scatterers, sc.overlap, q, user_prior(cfg))?;
    h.slab_var_r = vec![cfg.prior.slab_var; q + 1];
    h.slab_var_c = vec![cfg.prior.slab_var; q + 1];
    Ok(h)
}

pub fn solver_config(cfg: &ExperimentConfig) -> SolverConfig<f64> {
    let b = cfg.system.bandwidth();
    let s = &cfg.solver;
    let t = &cfg.turbo;
    SolverConfig {
        em_max_iters: s.em_max_iters,
        em_tol: s.em_tol,
        turbo: TurboControl {
            max_iters: t.max_iters,
            tol: t.tol,
            damping: if t.undamped { 1.0 } else { t.damping },
            clamp: VarClamp {
                min: t.var_min,
                max: t.var_max,
            },
        },
        detection_threshold: s.detection_threshold,
        mode: Mode::Joint,
        armijo: ArmijoParams {
            shrink: cfg.armijo.shrink,
            sufficient_increase: cfg.armijo.sufficient_increase,
            max_backtracks: cfg.armijo.max_backtracks,
            max_expansions: cfg.armijo.max_expansions,
        },
        steps: StepSizes {
            eps_r: s.eps_r,
            eps_p: s.eps_p,
            eps_t: s.eps_t_factor / b,
        },
        step_decay: s.step_decay,
        active_threshold: s.active_threshold,
        collision_cells: s.collision_cells,
    }
}

/// Per-trial randomness: pilots, then the scene.
pub fn generate_scene(cfg: &ExperimentConfig, seed: u64) -> isac_core::Result<(Problem<f64>, Scene<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = system_geometry(cfg);
    let subcarriers = pilot_subcarriers(cfg.system.subcarriers, cfg.system.pilot_spacing)?;
    let pilots = generate_pilots(cfg.system.antennas, subcarriers, cfg.system.f0, &mut rng);
    let problem = Problem {
        sys,
        pilots,
        grid: grid_spec(cfg),
    };
    let prior = xi_prior(cfg);
    let sc = &cfg.scene;
    let user = if sc.user_from_prior {
        let d = complex_normal(&mut rng, cfg.prior.user_var);
        prior
            .area
            .project(&prior.user_mean.offset(d.re, d.im))
    } else {
        prior.user_mean
    };
    let time_offset = if sc.time_offset_from_prior {
        rng.random_range(-prior.tau_bound..=prior.tau_bound)
    } else {
        0.0
    };
    let req = SceneRequest {
        targets: sc.targets,
        scatterers: sc.scatterers,
        overlap: sc.overlap,
        grid: problem.grid,
        placement: match sc.placement {
            PlacementCfg::OnGrid => Placement::OnGrid,
            PlacementCfg::OffGrid => Placement::OffGrid,
        },
        min_separation_cells: sc.min_separation_cells,
        user,
        user_radar_visible: sc.user_radar_visible,
        time_offset,
        gain_var: sc.gain_var,
    };
    let scene = scene_from_counts(&req, &mut rng)?;
    Ok((problem, scene))
}

/// Noise variances giving `snr_db` per block relative to the realized
/// clean-signal energy per sample.
pub fn noise_variances(clean: &(Vec<isac_core::Cx<f64>>, Vec<isac_core::Cx<f64>>), snr_db: f64) -> (f64, f64) {
    let lin = 10f64.powf(snr_db / 10.0);
    let per_sample = |v: &[isac_core::Cx<f64>]| {
        let e = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len().max(1) as f64;
        (e / lin).max(1e-300)
    };
    (per_sample(&clean.0), per_sample(&clean.1))
}

/// One fully specified estimation instance.
#[derive(Debug, Clone)]
pub struct Trial {
    pub trial: usize,
    pub snr_db: f64,
    pub problem: Problem<f64>,
    pub scene: Scene<f64>,
    pub obs: Observation<f64>,
}

pub fn make_trial(cfg: &ExperimentConfig, trial: usize, snr_index: usize) -> isac_core::Result<Trial> {
    let seed = scene_seed(cfg.sweep.seed, trial);
    let (problem, scene) = generate_scene(cfg, seed)?;
    let snr_db = cfg.sweep.snr_db[snr_index];
    let clean = clean_signals(&problem.sys, &scene, &problem.pilots);
    let vars = noise_variances(&clean, snr_db);
    let obs = add_noise(clean, vars, noise_seed(seed, snr_index));
    Ok(Trial {
        trial,
        snr_db,
        problem,
        scene,
        obs,
    })
}

pub fn run_method(cfg: &ExperimentConfig, method: Method, trial: &Trial) -> isac_core::Result<Estimates<f64>> {
    let hyper = hyper_params(cfg)?;
    let solver = solver_config(cfg);
    let prior = xi_prior(cfg);
    let (p, o) = (&trial.problem, &trial.obs);
    match method {
        Method::Omp => {
            let counts = cfg
                .omp
                .use_true_counts
                .then_some((cfg.scene.targets, cfg.scene.scatterers));
            omp_estimates(p, o, &prior, counts, cfg.omp.residual_tol)
        }
        Method::TurboCs => turbo_cs_fixed_grid(p, o, &hyper, &solver, &prior),
        Method::SbiSeparate => sea_turbo_sbi_separate(p, o, &hyper, &solver, &prior),
        Method::SbiJoint => sea_turbo_sbi(p, o, &hyper, &solver, &prior),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::quick;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|t| scene_seed(7, t)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(scene_seed(7, 3), a[3]);
        assert_ne!(noise_seed(a[0], 0), noise_seed(a[0], 1));
    }

    #[test]
    fn trials_share_scene_across_snr() {
        let cfg = quick();
        let t0 = make_trial(&cfg, 4, 0).unwrap();
        let t1 = make_trial(&cfg, 4, 1).unwrap();
        assert_eq!(t0.scene, t1.scene);
        assert_ne!(t0.obs.y_r, t1.obs.y_r);
        let again = make_trial(&cfg, 4, 1).unwrap();
        assert_eq!(again.obs, t1.obs);
    }

    #[test]
    fn realized_snr_matches_request() {
        let cfg = quick();
        let t = make_trial(&cfg, 0, 2).unwrap();
        let clean = clean_signals(&t.problem.sys, &t.scene, &t.problem.pilots);
        let e = clean.0.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.0.len() as f64;
        assert!((10.0 * (e / t.obs.noise_var_r).log10() - cfg.sweep.snr_db[2]).abs() < 1e-9);
        t.scene.validate(&area(&cfg), tau_bound(&cfg)).unwrap();
    }
}
