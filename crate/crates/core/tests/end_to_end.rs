use isac_core::channel::{clean_signals, generate_pilots, noiseless_observation, pilot_subcarriers, Entity, Scene};
use isac_core::geometry::{uniform_grid, Area, ArrayGeometry, GridSpec, Position};
use isac_core::linalg::{CMatrix, LinearOperator};
use isac_core::measurement::MeasurementPair;
use isac_core::mstep::{armijo_ascent, ArmijoParams, StepSizes, SurrogateContext};
use isac_core::prior::{scene_from_counts, Placement, PriorHyperParams, SceneRequest, UserPrior};
use isac_core::solver::{sea_turbo_sbi, Mode, Problem, SolverConfig};
use isac_core::{Cx, SensingParams64, SystemGeometry64, XiPrior64};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BANDWIDTH: f64 = 512.0 * 30e3;

fn problem(seed: u64) -> Problem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Problem {
        sys: SystemGeometry64::new(Position::new(-25.0, 0.0), ArrayGeometry::new(16).unwrap()),
        pilots: generate_pilots(16, pilot_subcarriers(512, 64).unwrap(), 30e3, &mut rng),
        grid: GridSpec::new(Area::centered_square(50.0), 10.0),
    }
}

fn prior(user: Position<f64>) -> XiPrior64 {
    XiPrior64 {
        user_mean: user,
        user_var: 1.0,
        tau_bound: 2.0 / BANDWIDTH,
        area: Area::centered_square(50.0),
    }
}

fn request(k: usize, l: usize, o: usize, grid: GridSpec<f64>) -> SceneRequest<f64> {
    SceneRequest {
        targets: k,
        scatterers: l,
        overlap: o,
        grid,
        placement: Placement::OnGrid,
        min_separation_cells: 1.5,
        user: Position::new(15.0, 5.0),
        user_radar_visible: true,
        time_offset: 0.0,
        gain_var: 1.0,
    }
}

fn truth_vectors(p: &Problem<f64>, scene: &Scene<f64>) -> (Vec<Cx<f64>>, Vec<Cx<f64>>) {
    let q1 = p.grid.count().unwrap() + 1;
    let mut xr = vec![Complex::new(0.0, 0.0); q1];
    let mut xc = xr.clone();
    xr[0] = scene.user_radar_gain;
    xc[0] = scene.los_gain;
    for e in &scene.targets {
        xr[p.grid.nearest_point(&e.position).unwrap().0 + 1] = e.gain;
    }
    for e in &scene.scatterers {
        xc[p.grid.nearest_point(&e.position).unwrap().0 + 1] = e.gain;
    }
    (xr, xc)
}

#[test]
fn on_grid_scene_replays_through_the_operators() {
    for seed in 0..5 {
        let p = problem(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let scene = scene_from_counts(&request(3, 4, 2, p.grid), &mut rng).unwrap();
        let (xr, xc) = truth_vectors(&p, &scene);
        let xi = SensingParams64::new(uniform_grid(&p.grid).unwrap(), scene.user, scene.time_offset);
        let ops = MeasurementPair::build(&p.sys, &xi, &p.pilots);
        let (yr, yc) = clean_signals(&p.sys, &scene, &p.pilots);
        let err = |a: &[Cx<f64>], b: &[Cx<f64>]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err(&ops.radar.apply(&xr), &yr) < 1e-10);
        assert!(err(&ops.comm.apply(&xc), &yc) < 1e-10);
    }
}

#[test]
fn noiseless_multi_entity_recovery() {
    let hyper = PriorHyperParams::for_scene_counts(3, 4, 2, 25, UserPrior::Known { radar_visible: true }).unwrap();
    let cfg = SolverConfig::for_bandwidth(BANDWIDTH);
    for seed in 0..5 {
        let p = problem(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let scene = scene_from_counts(&request(3, 4, 2, p.grid), &mut rng).unwrap();
        let obs = noiseless_observation(&p.sys, &scene, &p.pilots, (1e-12, 1e-12));
        let est = sea_turbo_sbi(&p, &obs, &hyper, &cfg, &prior(scene.user)).unwrap();
        assert_eq!(est.detected_targets.len(), 3, "seed {seed}");
        assert_eq!(est.detected_scatterers.len(), 4, "seed {seed}");
        let (xr, xc) = truth_vectors(&p, &scene);
        for (e, t) in est.coeff_r.iter().zip(&xr).chain(est.coeff_c.iter().zip(&xc)) {
            assert!((e - t).norm() < 1e-6, "seed {seed}: {e} vs {t}");
        }
    }
}

// Steepest ascent zigzags across the range/angle valley, so convergence is
// linear and slow; the budget reflects that.
#[test]
fn displaced_grid_point_returns_to_target() {
    let p = problem(7);
    let user = Position::new(15.0, 5.0);
    let target = Position::new(0.0, -10.0);
    let mut scene = Scene::empty(user);
    scene.los_gain = Complex::new(1.0, 0.0);
    scene.user_radar_gain = Complex::new(0.3, 0.1);
    scene.targets.push(Entity { position: target, gain: Complex::new(0.8, -0.5) });
    let obs = noiseless_observation(&p.sys, &scene, &p.pilots, (1e-6, 1e-6));
    let mut xi = SensingParams64::new(uniform_grid(&p.grid).unwrap(), user, 0.0);
    let g = p.grid.nearest_point(&target).unwrap().0;
    xi.grid[g] = target.offset(0.6, -0.8);
    let (xr, xc) = truth_vectors(&p, &scene);
    let q1 = xr.len();
    let pr = prior(user);
    let ctx = SurrogateContext::from_moments(&p.sys, &p.pilots, &obs, &pr, (xr, CMatrix::zeros(q1, q1)), (xc, CMatrix::zeros(q1, q1)));
    let steps = StepSizes::for_bandwidth(BANDWIDTH);
    let mut calls = 0;
    while xi.grid[g].distance(&target) >= 1e-2 && calls < 300 {
        let out = armijo_ascent(&xi, &ctx, &[g], &steps, &ArmijoParams::default());
        assert!(out.value_after >= out.value_before);
        xi = out.xi;
        calls += 1;
    }
    assert!(xi.grid[g].distance(&target) < 1e-2, "after {calls} calls: {:?}", xi.grid[g]);
}

#[test]
fn joint_and_separate_agree_without_overlap() {
    let p = problem(11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scene = scene_from_counts(&request(2, 2, 0, p.grid), &mut rng).unwrap();
    let obs = noiseless_observation(&p.sys, &scene, &p.pilots, (1e-10, 1e-10));
    let hyper = PriorHyperParams::for_scene_counts(2, 2, 0, 25, UserPrior::Known { radar_visible: true }).unwrap();
    let cfg = SolverConfig::for_bandwidth(BANDWIDTH);
    let joint = sea_turbo_sbi(&p, &obs, &hyper, &cfg, &prior(scene.user)).unwrap();
    let sep = sea_turbo_sbi(&p, &obs, &hyper, &cfg.clone().with_mode(Mode::Separate), &prior(scene.user)).unwrap();
    let cols = |d: &[isac_core::solver::Detection<f64>]| d.iter().map(|x| x.column).collect::<Vec<_>>();
    assert_eq!(cols(&joint.detected_targets), cols(&sep.detected_targets));
    assert_eq!(cols(&joint.detected_scatterers), cols(&sep.detected_scatterers));
    for (a, b) in joint.coeff_r.iter().zip(&sep.coeff_r) {
        assert!((a - b).norm() < 1e-6);
    }
}

#[test]
fn solver_is_deterministic() {
    let p = problem(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut req = request(3, 4, 2, p.grid);
    req.placement = Placement::OffGrid;
    let scene = scene_from_counts(&req, &mut rng).unwrap();
    let obs = isac_core::channel::synthesize_observation(&p.sys, &scene, &p.pilots, (1e-2, 1e-2), 4);
    let hyper = PriorHyperParams::for_scene_counts(3, 4, 2, 25, UserPrior::Known { radar_visible: true }).unwrap();
    let cfg = SolverConfig::for_bandwidth(BANDWIDTH);
    let a = sea_turbo_sbi(&p, &obs, &hyper, &cfg, &prior(Position::new(15.0, 5.0))).unwrap();
    let b = sea_turbo_sbi(&p, &obs, &hyper, &cfg, &prior(Position::new(15.0, 5.0))).unwrap();
    assert_eq!(a, b);
    for (before, after) in &a.diagnostics.surrogate_trace {
        assert!(after >= before);
    }
}
