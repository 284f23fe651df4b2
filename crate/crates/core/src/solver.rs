//! Full estimator: alternating turbo E-steps and Armijo M-steps over the
//! sensing parameters, then detection and channel reconstruction.

use crate::channel::{delay_diagonals, Observation, PilotSet, SensingParams, SystemGeometry};
use crate::error::{Error, Result};
use crate::geometry::{uniform_grid, GridSpec, Position};
use crate::linalg::CMatrix;
use crate::measurement::MeasurementPair;
use crate::mstep::{active_set, armijo_ascent, ArmijoParams, StepSizes, SurrogateContext, XiPrior};
use crate::prior::PriorHyperParams;
use crate::scalar::{czero, Cx, Real};
use crate::turbo::{initial_message, turbo_estep, LmmseSystem, PosteriorState, SupportModel, TurboControl};

/// Fixed hardware and pilot configuration of one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    pub sys: SystemGeometry<T>,
    pub pilots: PilotSet<T>,
    /// Initial (uniform) position grid.
    pub grid: GridSpec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Joint support prior with grid refinement.
    Joint,
    /// Independent branch priors with grid refinement.
    Separate,
    /// Joint support prior, M-step disabled.
    FixedGrid,
}

impl Mode {
    pub fn support_model(self) -> SupportModel {
        match self {
            Mode::Separate => SupportModel::Separate,
            Mode::Joint | Mode::FixedGrid => SupportModel::Joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub em_max_iters: usize,
    /// Stop once the largest parameter change (time offset in meters via
    /// the speed of light) falls below this.
    pub em_tol: T,
    pub turbo: TurboControl<T>,
    pub detection_threshold: T,
    pub mode: Mode,
    pub armijo: ArmijoParams<T>,
    pub steps: StepSizes<T>,
    /// Per-EM-iteration multiplier of the Armijo initial steps.
    pub step_decay: T,
    /// Joint posterior above which a grid point is refined.
    pub active_threshold: T,
    /// Minimum distance between refined points, in grid cells.
    pub collision_cells: T,
}

impl<T: Real> SolverConfig<T> {
    /// Defaults for a system of bandwidth `B` (Hz).
    pub fn for_bandwidth(bandwidth: T) -> Self {
        Self {
            em_max_iters: 30,
            em_tol: T::lit(1e-3),
            turbo: TurboControl::default(),
            detection_threshold: T::lit(0.5),
            mode: Mode::Joint,
            armijo: ArmijoParams::default(),
            steps: StepSizes::for_bandwidth(bandwidth),
            step_decay: T::lit(0.8),
            active_threshold: T::lit(0.1),
            collision_cells: T::lit(0.1),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit_open = |p: T| p > T::zero() && p < T::one();
        if self.em_max_iters == 0 || !(self.em_tol > T::zero()) {
            return Err(Error::Config("em_max_iters and em_tol must be positive".into()));
        }
        if !unit_open(self.detection_threshold) || !unit_open(self.active_threshold) {
            return Err(Error::Config("thresholds must lie in (0, 1)".into()));
        }
        if !(self.step_decay > T::zero() && self.step_decay <= T::one()) {
            return Err(Error::Config("step_decay must lie in (0, 1]".into()));
        }
        if !(self.collision_cells >= T::zero()) {
            return Err(Error::Config("collision_cells must be non-negative".into()));
        }
        self.turbo.validate()?;
        self.armijo.validate()?;
        self.steps.validate()
    }
}

/// One reported entity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub position: Position<T>,
    pub gain: Cx<T>,
    pub prob: T,
    /// Basis column the detection came from (>= 1).
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics<T> {
    pub em_iters: usize,
    /// Turbo iterations of every E-step, in order.
    pub turbo_iters: Vec<usize>,
    /// False if any E-step stopped at its iteration cap.
    pub turbo_converged: bool,
    /// Surrogate `(before, after)` of every M-step.
    pub surrogate_trace: Vec<(T, T)>,
    /// Largest Module-A diagonal loading.
    pub regularization: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates<T> {
    pub detected_targets: Vec<Detection<T>>,
    pub detected_scatterers: Vec<Detection<T>>,
    pub user_pos: Position<T>,
    pub time_offset: T,
    /// Final sensing parameters.
    pub xi: SensingParams<T>,
    /// Coefficient estimates over all `Q + 1` columns.
    pub coeff_r: Vec<Cx<T>>,
    pub coeff_c: Vec<Cx<T>>,
    pub prob_r: Vec<T>,
    pub prob_c: Vec<T>,
    pub prob_joint: Vec<T>,
    /// One `M x M` radar channel per pilot subcarrier.
    pub channel_r: Vec<CMatrix<T>>,
    /// One length-`M` uplink channel per pilot subcarrier.
    pub channel_c: Vec<Vec<Cx<T>>>,
    pub diagnostics: Diagnostics<T>,
}

/// `H_n = A diag(D_n^r x^r) A^T` and `h_n = A diag(D_n^c) x^c` on every
/// pilot subcarrier.
pub fn reconstruct_channels<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    pilots: &PilotSet<T>,
    x_r: &[Cx<T>],
    x_c: &[Cx<T>],
) -> (Vec<CMatrix<T>>, Vec<Vec<Cx<T>>>) {
    let m = sys.antennas();
    let atoms: Vec<Vec<Cx<T>>> = (0..=xi.grid_len()).map(|q| sys.atom(xi.column_position(q))).collect();
    let mut hr = Vec::with_capacity(pilots.len());
    let mut hc = Vec::with_capacity(pilots.len());
    for &n in &pilots.subcarriers {
        let (dr, dc) = delay_diagonals(sys, xi, n, pilots.f0);
        let mut h = CMatrix::zeros(m, m);
        let mut v = vec![czero(); m];
        for (q, a) in atoms.iter().enumerate() {
            let cr = x_r[q] * dr[q];
            if cr != czero() {
                for r in 0..m {
                    let ar = cr * a[r];
                    for (hv, ac) in h.row_mut(r).iter_mut().zip(a) {
                        *hv += ar * *ac;
                    }
                }
            }
            let cc = x_c[q] * dc[q];
            for (hv, av) in v.iter_mut().zip(a) {
                *hv += cc * *av;
            }
        }
        hr.push(h);
        hc.push(v);
    }
    (hr, hc)
}

fn estep<T: Real>(
    problem: &Problem<T>,
    obs: &Observation<T>,
    hyper: &PriorHyperParams<T>,
    config: &SolverConfig<T>,
    xi: &SensingParams<T>,
    init: &crate::turbo::GaussianMessage<T>,
) -> Result<PosteriorState<T>> {
    let ops = MeasurementPair::build(&problem.sys, xi, &problem.pilots);
    let sr = LmmseSystem::new(&ops.radar, &obs.y_r, obs.noise_var_r)?;
    let sc = LmmseSystem::new(&ops.comm, &obs.y_c, obs.noise_var_c)?;
    turbo_estep(&sr, &sc, hyper, config.mode.support_model(), init, &config.turbo)
}

/// The full estimator. `FixedGrid` mode runs a single E-step at the initial
/// parameters.
pub fn sea_turbo_sbi<T: Real>(
    problem: &Problem<T>,
    obs: &Observation<T>,
    hyper: &PriorHyperParams<T>,
    config: &SolverConfig<T>,
    prior_xi: &XiPrior<T>,
) -> Result<Estimates<T>> {
    config.validate()?;
    prior_xi.validate()?;
    problem.pilots.validate(problem.sys.antennas(), usize::MAX)?;
    obs.validate(problem.sys.antennas(), problem.pilots.len())?;
    let grid = uniform_grid(&problem.grid)?;
    hyper.validate(grid.len() + 1)?;

    let mut xi = SensingParams::new(grid, prior_xi.user_mean, T::zero());
    let mut msg = initial_message(hyper, config.turbo.clamp);
    let mut diag = Diagnostics {
        turbo_converged: true,
        ..Diagnostics::default()
    };
    let record = |post: &PosteriorState<T>, diag: &mut Diagnostics<T>| {
        diag.turbo_iters.push(post.iterations);
        diag.turbo_converged &= post.converged;
        diag.regularization = diag.regularization.max(post.regularization);
    };

    let mut post = estep(problem, obs, hyper, config, &xi, &msg)?;
    record(&post, &mut diag);
    if config.mode != Mode::FixedGrid {
        let min_gap = config.collision_cells * problem.grid.resolution;
        let mut scale = T::one();
        for _ in 0..config.em_max_iters {
            msg = post.message_to_a.clone();
            let ctx = SurrogateContext::new(&problem.sys, &problem.pilots, obs, prior_xi, &post);
            let active = active_set(&xi, &post.prob_joint, config.active_threshold, min_gap);
            let out = armijo_ascent(&xi, &ctx, &active, &config.steps.scaled(scale), &config.armijo);
            diag.surrogate_trace.push((out.value_before, out.value_after));
            diag.em_iters += 1;
            scale *= config.step_decay;
            let change = xi.max_change(&out.xi);
            xi = out.xi;
            post = estep(problem, obs, hyper, config, &xi, &msg)?;
            record(&post, &mut diag);
            if change < config.em_tol {
                break;
            }
        }
    }
    Ok(extract(problem, config, xi, post, diag))
}

fn extract<T: Real>(
    problem: &Problem<T>,
    config: &SolverConfig<T>,
    xi: SensingParams<T>,
    post: PosteriorState<T>,
    diagnostics: Diagnostics<T>,
) -> Estimates<T> {
    let lite = PosteriorLite {
        coeff_r: post.radar_mean().to_vec(),
        coeff_c: post.comm_mean().to_vec(),
        prob_r: post.prob_r,
        prob_c: post.prob_c,
        prob_joint: post.prob_joint,
    };
    lite.into_estimates(problem, xi, diagnostics, config.detection_threshold)
}

/// Detection list from hard supports and coefficients over fixed parameters;
/// used by estimators that produce no posterior (reported probability 1).
pub fn estimates_from_supports<T: Real>(
    problem: &Problem<T>,
    xi: SensingParams<T>,
    coeff_r: Vec<Cx<T>>,
    coeff_c: Vec<Cx<T>>,
    support_r: &[bool],
    support_c: &[bool],
    diagnostics: Diagnostics<T>,
) -> Estimates<T> {
    let to_prob = |s: &[bool]| s.iter().map(|b| if *b { T::one() } else { T::zero() }).collect::<Vec<T>>();
    let prob_r = to_prob(support_r);
    let prob_c = to_prob(support_c);
    let prob_joint = support_r
        .iter()
        .zip(support_c)
        .map(|(a, b)| if *a || *b { T::one() } else { T::zero() })
        .collect();
    let post_like = PosteriorLite { prob_r, prob_c, prob_joint, coeff_r, coeff_c };
    post_like.into_estimates(problem, xi, diagnostics, T::lit(0.5))
}

struct PosteriorLite<T> {
    prob_r: Vec<T>,
    prob_c: Vec<T>,
    prob_joint: Vec<T>,
    coeff_r: Vec<Cx<T>>,
    coeff_c: Vec<Cx<T>>,
}

impl<T: Real> PosteriorLite<T> {
    fn into_estimates(
        self,
        problem: &Problem<T>,
        xi: SensingParams<T>,
        diagnostics: Diagnostics<T>,
        threshold: T,
    ) -> Estimates<T> {
        let pick = |probs: &[T], coeff: &[Cx<T>]| -> Vec<Detection<T>> {
            (1..probs.len())
                .filter(|&q| probs[q] > threshold)
                .map(|q| Detection {
                    position: xi.grid[q - 1],
                    gain: coeff[q],
                    prob: probs[q],
                    column: q,
                })
                .collect()
        };
        let detected_targets = pick(&self.prob_r, &self.coeff_r);
        let detected_scatterers = pick(&self.prob_c, &self.coeff_c);
        let (channel_r, channel_c) = reconstruct_channels(&problem.sys, &xi, &problem.pilots, &self.coeff_r, &self.coeff_c);
        Estimates {
            detected_targets,
            detected_scatterers,
            user_pos: xi.user,
            time_offset: xi.time_offset,
            coeff_r: self.coeff_r,
            coeff_c: self.coeff_c,
            prob_r: self.prob_r,
            prob_c: self.prob_c,
            prob_joint: self.prob_joint,
            xi,
            channel_r,
            channel_c,
            diagnostics,
        }
    }
}
