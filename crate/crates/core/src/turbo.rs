//! Turbo E-step: an LMMSE module (A) over the stacked linear model and an
//! exact sum-product module (B) over the sparse support prior, exchanging
//! extrinsic Gaussian messages until the posterior means settle.
//!
//! Stacked vectors of length `2(Q+1)` hold the radar block first and the
//! communication block second.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_regularized, Cholesky, CMatrix, LinearOperator};
use crate::prior::{PriorHyperParams, UserPrior};
use crate::scalar::{czero, ln_prob, log_add_exp, sigmoid, Cx, Real};

/// Diagonal-covariance complex Gaussian message.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMessage<T> {
    pub mean: Vec<Cx<T>>,
    pub var: Vec<T>,
}

impl<T: Real> GaussianMessage<T> {
    pub fn new(mean: Vec<Cx<T>>, var: Vec<T>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Dimension("message mean/variance lengths differ".into()));
        }
        if var.iter().any(|v| !(*v > T::zero() && v.is_finite())) {
            return Err(Error::Domain("message variances must be positive".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn zero_mean(var: Vec<T>) -> Self {
        Self {
            mean: vec![czero(); var.len()],
            var,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Columns per block of a stacked radar/comm message.
    pub fn columns(&self) -> usize {
        self.len() / 2
    }

    /// `(mean, var)` of block `b` (0 radar, 1 comm) of a stacked message.
    pub fn block(&self, b: usize) -> (&[Cx<T>], &[T]) {
        let q1 = self.columns();
        (&self.mean[b * q1..(b + 1) * q1], &self.var[b * q1..(b + 1) * q1])
    }

    /// `beta * self + (1 - beta) * old`, applied to means and variances.
    pub fn damped(&self, old: &Self, beta: T) -> Self {
        let keep = T::one() - beta;
        Self {
            mean: self
                .mean
                .iter()
                .zip(&old.mean)
                .map(|(n, o)| n.scale(beta) + o.scale(keep))
                .collect(),
            var: self.var.iter().zip(&old.var).map(|(n, o)| beta * *n + keep * *o).collect(),
        }
    }
}

/// Variance clamp bounds for extrinsic messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarClamp<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> Default for VarClamp<T> {
    fn default() -> Self {
        Self {
            min: T::lit(1e-12),
            max: T::lit(1e12),
        }
    }
}

impl<T: Real> VarClamp<T> {
    pub fn apply(&self, v: T) -> T {
        if v.is_nan() {
            self.max
        } else {
            v.max(self.min).min(self.max)
        }
    }
}

/// Extrinsic message obtained by removing the incoming prior from a
/// posterior: `1/v_ext = 1/v_post - 1/v_pri`,
/// `x_ext = v_ext (x_post / v_post - x_pri / v_pri)`.
///
/// When the posterior is no more precise than the prior the result is
/// uninformative (`v_max`, centered on the posterior mean); a vanishing
/// posterior variance yields `v_min` at the posterior mean.
pub fn extrinsic<T: Real>(
    post_mean: &[Cx<T>],
    post_var: &[T],
    pri_mean: &[Cx<T>],
    pri_var: &[T],
    clamp: VarClamp<T>,
) -> GaussianMessage<T> {
    let n = post_mean.len();
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    for i in 0..n {
        let (xp, vp, xa, va) = (post_mean[i], post_var[i], pri_mean[i], pri_var[i]);
        if !(vp > clamp.min) {
            mean.push(xp);
            var.push(clamp.min);
            continue;
        }
        let prec = vp.recip() - va.recip();
        if !(prec > clamp.max.recip()) {
            mean.push(xp);
            var.push(clamp.max);
            continue;
        }
        let v = clamp.apply(prec.recip());
        mean.push((xp.unscale(vp) - xa.unscale(va)).scale(v));
        var.push(v);
    }
    GaussianMessage { mean, var }
}

/// Precomputed quantities of one observation block `y = Phi x + z`.
#[derive(Debug, Clone)]
pub struct LmmseSystem<T> {
    pub gram: CMatrix<T>,
    pub phi_h_y: Vec<Cx<T>>,
    pub noise_var: T,
}

impl<T: Real> LmmseSystem<T> {
    pub fn new<O: LinearOperator<T> + ?Sized>(phi: &O, y: &[Cx<T>], noise_var: T) -> Result<Self> {
        if y.len() != phi.nrows() {
            return Err(Error::Dimension(format!(
                "observation length {} vs operator rows {}",
                y.len(),
                phi.nrows()
            )));
        }
        if !(noise_var > T::zero()) {
            return Err(Error::Domain("noise variance must be positive".into()));
        }
        Ok(Self {
            gram: phi.gram(),
            phi_h_y: phi.adjoint_apply(y),
            noise_var,
        })
    }

    pub fn columns(&self) -> usize {
        self.phi_h_y.len()
    }

    /// Gaussian posterior under prior `CN(prior_mean, diag(prior_var))`.
    pub fn posterior(&self, prior_mean: &[Cx<T>], prior_var: &[T]) -> Result<LmmsePosterior<T>> {
        let n = self.columns();
        if prior_mean.len() != n || prior_var.len() != n {
            return Err(Error::Dimension("prior length vs system columns".into()));
        }
        let inv_noise = self.noise_var.recip();
        let mut precision = self.gram.scale(Cx::new(inv_noise, T::zero()));
        let mut rhs = Vec::with_capacity(n);
        for i in 0..n {
            let p = prior_var[i].recip();
            precision[(i, i)].re += p;
            precision[(i, i)].im = T::zero();
            rhs.push(self.phi_h_y[i].scale(inv_noise) + prior_mean[i].scale(p));
        }
        let (chol, load) = cholesky_regularized(&precision)?;
        let mean = chol.solve(&rhs);
        let (var, inv_factor) = chol.inverse_diag();
        Ok(LmmsePosterior {
            mean,
            var,
            inv_factor,
            load,
        })
    }
}

/// Module-A posterior of one block.
#[derive(Debug, Clone)]
pub struct LmmsePosterior<T> {
    pub mean: Vec<Cx<T>>,
    /// Diagonal of the posterior covariance.
    pub var: Vec<T>,
    /// `L^{-1}` for the precision factor `L L^H`; the covariance is
    /// `L^{-H} L^{-1}`.
    inv_factor: CMatrix<T>,
    /// Diagonal loading added to the precision matrix (zero normally).
    pub load: T,
}

impl<T: Real> LmmsePosterior<T> {
    pub fn covariance(&self) -> CMatrix<T> {
        Cholesky::inverse_from_factor(&self.inv_factor)
    }
}

/// Module A on a single block: posterior and extrinsic message.
pub fn lmmse_module_a<T: Real, O: LinearOperator<T> + ?Sized>(
    phi: &O,
    y: &[Cx<T>],
    noise_var: T,
    prior: &GaussianMessage<T>,
    clamp: VarClamp<T>,
) -> Result<(LmmsePosterior<T>, GaussianMessage<T>)> {
    let post = LmmseSystem::new(phi, y, noise_var)?.posterior(&prior.mean, &prior.var)?;
    let ext = extrinsic(&post.mean, &post.var, &prior.mean, &prior.var, clamp);
    Ok((post, ext))
}

/// `ln [CN(x; 0, slab + v) / CN(x; 0, v)]`.
pub fn log_likelihood_ratio<T: Real>(x: Cx<T>, v: T, slab_var: T) -> T {
    let s = slab_var + v;
    (v / s).ln() + x.norm_sqr() * slab_var / (v * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPosterior<T> {
    pub mean: Cx<T>,
    pub var: T,
    pub active_prob: T,
    pub likelihood_ratio: T,
}

/// Spike-and-slab posterior of one coefficient observed as
/// `x_pri = x + CN(0, v_pri)`, with activity prior given as a log-odds.
pub fn spike_slab_from_logit<T: Real>(x_pri: Cx<T>, v_pri: T, slab_var: T, prior_logit: T) -> BranchPosterior<T> {
    let llr = log_likelihood_ratio(x_pri, v_pri, slab_var);
    let p = sigmoid(prior_logit + llr);
    let s = slab_var + v_pri;
    let mu = x_pri.scale(slab_var / s);
    let nu = slab_var * v_pri / s;
    BranchPosterior {
        mean: mu.scale(p),
        var: p * nu + p * (T::one() - p) * mu.norm_sqr(),
        active_prob: p,
        likelihood_ratio: llr.exp(),
    }
}

pub fn spike_slab_branch_update<T: Real>(x_pri: Cx<T>, v_pri: T, slab_var: T, prior_active_prob: T) -> BranchPosterior<T> {
    spike_slab_from_logit(x_pri, v_pri, slab_var, logit(prior_active_prob))
}

fn logit<T: Real>(p: T) -> T {
    ln_prob(p) - ln_prob(T::one() - p)
}

/// Support model used by Module B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportModel {
    /// Joint support layer coupling the radar and communication branches.
    Joint,
    /// Independent `Bernoulli(lambda rho_t)` branch priors.
    Separate,
}

/// Module-B posterior over a stacked coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPosterior<T> {
    pub mean: Vec<Cx<T>>,
    pub var: Vec<T>,
    pub prob_r: Vec<T>,
    pub prob_c: Vec<T>,
    pub prob_joint: Vec<T>,
}

/// Module B: exact sum-product on the per-index tree
/// `x^r - s^r - s - s^c - x^c` given the AWGN-like message from Module A,
/// followed by the extrinsic message back to Module A.
pub fn module_b<T: Real>(
    input: &GaussianMessage<T>,
    hyper: &PriorHyperParams<T>,
    model: SupportModel,
    clamp: VarClamp<T>,
) -> Result<(SupportPosterior<T>, GaussianMessage<T>)> {
    let q1 = input.columns();
    if input.len() != 2 * q1 {
        return Err(Error::Dimension("stacked message must have even length".into()));
    }
    hyper.validate(q1)?;
    let (mr, vr) = input.block(0);
    let (mc, vc) = input.block(1);

    let ln_l = ln_prob(hyper.lambda);
    let ln_nl = ln_prob(T::one() - hyper.lambda);
    let (ln_rr, ln_nrr) = (ln_prob(hyper.rho_r), ln_prob(T::one() - hyper.rho_r));
    let (ln_rc, ln_nrc) = (ln_prob(hyper.rho_c), ln_prob(T::one() - hyper.rho_c));
    let inf = T::infinity();

    let mut post = SupportPosterior {
        mean: vec![czero(); 2 * q1],
        var: vec![T::zero(); 2 * q1],
        prob_r: vec![T::zero(); q1],
        prob_c: vec![T::zero(); q1],
        prob_joint: vec![T::zero(); q1],
    };
    for q in 0..q1 {
        let (sr, sc) = (hyper.slab_var_r[q], hyper.slab_var_c[q]);
        let llr_r = log_likelihood_ratio(mr[q], vr[q], sr);
        let llr_c = log_likelihood_ratio(mc[q], vc[q], sc);

        let (logit_r, logit_c) = match (q, hyper.user, model) {
            (0, UserPrior::Known { radar_visible }, _) => (if radar_visible { inf } else { -inf }, inf),
            (_, _, SupportModel::Separate) => {
                let (ar, ac) = hyper.marginal_activity(q);
                (logit(ar), logit(ac))
            }
            (_, _, SupportModel::Joint) => {
                // upward branch messages mu_t(s = 1) relative to mu_t(s = 0) = 1
                let up_r = log_add_exp(ln_nrr, ln_rr + llr_r);
                let up_c = log_add_exp(ln_nrc, ln_rc + llr_c);
                // downward extrinsic branch priors
                let pr = ln_l + ln_rr + up_c - log_add_exp(ln_l + ln_nrr + up_c, ln_nl);
                let pc = ln_l + ln_rc + up_r - log_add_exp(ln_l + ln_nrc + up_r, ln_nl);
                (pr, pc)
            }
        };
        let br = spike_slab_from_logit(mr[q], vr[q], sr, logit_r);
        let bc = spike_slab_from_logit(mc[q], vc[q], sc, logit_c);
        post.mean[q] = br.mean;
        post.var[q] = br.var;
        post.mean[q1 + q] = bc.mean;
        post.var[q1 + q] = bc.var;
        post.prob_r[q] = br.active_prob;
        post.prob_c[q] = bc.active_prob;
        post.prob_joint[q] = match (q, hyper.user, model) {
            (0, UserPrior::Known { .. }, _) => T::one(),
            (_, _, SupportModel::Separate) => {
                T::one() - (T::one() - br.active_prob) * (T::one() - bc.active_prob)
            }
            (_, _, SupportModel::Joint) => {
                let up_r = log_add_exp(ln_nrr, ln_rr + llr_r);
                let up_c = log_add_exp(ln_nrc, ln_rc + llr_c);
                sigmoid(ln_l - ln_nl + up_r + up_c)
            }
        };
    }
    let ext = extrinsic(&post.mean, &post.var, &input.mean, &input.var, clamp);
    Ok((post, ext))
}

/// Turbo loop controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurboControl<T> {
    pub max_iters: usize,
    /// Stop once the largest change of a Module-B posterior mean is below.
    pub tol: T,
    /// Weight of the new B-to-A message; 1 disables damping.
    pub damping: T,
    pub clamp: VarClamp<T>,
}

impl<T: Real> Default for TurboControl<T> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: T::lit(1e-6),
            damping: T::lit(0.5),
            clamp: VarClamp::default(),
        }
    }
}

impl<T: Real> TurboControl<T> {
    pub fn undamped() -> Self {
        Self {
            damping: T::one(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > T::zero()) {
            return Err(Error::Config("turbo max_iters and tol must be positive".into()));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::Config("damping must lie in (0, 1]".into()));
        }
        if !(self.clamp.min > T::zero() && self.clamp.min < self.clamp.max) {
            return Err(Error::Config("variance clamp must satisfy 0 < min < max".into()));
        }
        Ok(())
    }
}

/// Initial B-to-A message: zero mean, variance `P(active) * slab`.
pub fn initial_message<T: Real>(hyper: &PriorHyperParams<T>, clamp: VarClamp<T>) -> GaussianMessage<T> {
    let q1 = hyper.columns();
    let mut var = Vec::with_capacity(2 * q1);
    for q in 0..q1 {
        var.push(clamp.apply(hyper.marginal_activity(q).0 * hyper.slab_var_r[q]));
    }
    for q in 0..q1 {
        var.push(clamp.apply(hyper.marginal_activity(q).1 * hyper.slab_var_c[q]));
    }
    GaussianMessage::zero_mean(var)
}

/// Output of the turbo E-step.
#[derive(Debug, Clone)]
pub struct PosteriorState<T> {
    /// Module-B posterior means, radar block then comm block.
    pub x_mean: Vec<Cx<T>>,
    pub x_var: Vec<T>,
    pub prob_r: Vec<T>,
    pub prob_c: Vec<T>,
    pub prob_joint: Vec<T>,
    /// Module-A posteriors (radar, comm) retained for the M-step.
    pub dense_radar: LmmsePosterior<T>,
    pub dense_comm: LmmsePosterior<T>,
    /// Final B-to-A message, usable as a warm start.
    pub message_to_a: GaussianMessage<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest diagonal loading Module A had to apply.
    pub regularization: T,
}

impl<T: Real> PosteriorState<T> {
    pub fn columns(&self) -> usize {
        self.prob_r.len()
    }

    pub fn radar_mean(&self) -> &[Cx<T>] {
        &self.x_mean[..self.columns()]
    }

    pub fn comm_mean(&self) -> &[Cx<T>] {
        &self.x_mean[self.columns()..]
    }

    /// Module-A posterior of block `b` (0 radar, 1 comm).
    pub fn dense(&self, b: usize) -> &LmmsePosterior<T> {
        if b == 0 {
            &self.dense_radar
        } else {
            &self.dense_comm
        }
    }
}

/// Alternates Module A and Module B until the Module-B posterior means move
/// by less than `ctrl.tol` or `ctrl.max_iters` is reached. Without convergence
/// the iterate that moved least is returned and
/// [`PosteriorState::converged`] is false.
pub fn turbo_estep<T: Real>(
    radar: &LmmseSystem<T>,
    comm: &LmmseSystem<T>,
    hyper: &PriorHyperParams<T>,
    model: SupportModel,
    init: &GaussianMessage<T>,
    ctrl: &TurboControl<T>,
) -> Result<PosteriorState<T>> {
    ctrl.validate()?;
    let q1 = radar.columns();
    if comm.columns() != q1 || init.len() != 2 * q1 {
        return Err(Error::Dimension("radar/comm/init column counts disagree".into()));
    }
    let mut to_a = init.clone();
    let mut prev: Option<Vec<Cx<T>>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut last = None;
    let mut best: Option<(T, _)> = None;
    while iterations < ctrl.max_iters {
        iterations += 1;
        let (pm_r, pv_r) = to_a.block(0);
        let (pm_c, pv_c) = to_a.block(1);
        let post_r = radar.posterior(pm_r, pv_r)?;
        let post_c = comm.posterior(pm_c, pv_c)?;
        let a_mean: Vec<Cx<T>> = post_r.mean.iter().chain(&post_c.mean).copied().collect();
        let a_var: Vec<T> = post_r.var.iter().chain(&post_c.var).copied().collect();
        let to_b = extrinsic(&a_mean, &a_var, &to_a.mean, &to_a.var, ctrl.clamp);

        let (post_b, ext_b) = module_b(&to_b, hyper, model, ctrl.clamp)?;
        to_a = ext_b.damped(&to_a, ctrl.damping);

        let change = prev.as_ref().map(|p| {
            p.iter()
                .zip(&post_b.mean)
                .map(|(a, b)| (*a - *b).norm())
                .fold(T::zero(), T::max)
        });
        prev = Some(post_b.mean.clone());
        if change.is_some_and(|c| c < ctrl.tol) {
            converged = true;
            last = Some((post_b, post_r, post_c, to_a.clone()));
            break;
        }
        if let Some(c) = change {
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, (post_b.clone(), post_r.clone(), post_c.clone(), to_a.clone())));
            }
        }
        last = Some((post_b, post_r, post_c, to_a.clone()));
    }
    // Without convergence, fall back to the iterate that moved least.
    let chosen = match (converged, best) {
        (false, Some((_, b))) => Some(b),
        _ => last,
    };
    let (post_b, dense_radar, dense_comm, to_a) = chosen.expect("at least one turbo iteration");
    let regularization = dense_radar.load.max(dense_comm.load);
    Ok(PosteriorState {
        x_mean: post_b.mean,
        x_var: post_b.var,
        prob_r: post_b.prob_r,
        prob_c: post_b.prob_c,
        prob_joint: post_b.prob_joint,
        dense_radar,
        dense_comm,
        message_to_a: to_a,
        iterations,
        converged,
        regularization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_gaussian_posterior, enumerate_module_b};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Cx<f64> {
        Complex::new(re, im)
    }

    fn hyper(lambda: f64, rr: f64, rc: f64, q1: usize) -> PriorHyperParams<f64> {
        PriorHyperParams::uniform(lambda, rr, rc, q1, 1.0, UserPrior::Shared)
    }

    #[test]
    fn identity_system_averages_prior_and_data() {
        let phi = CMatrix::<f64>::identity(3);
        let y = vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)];
        let prior = GaussianMessage::new(vec![c(1.0, 1.0); 3], vec![1.0; 3]).unwrap();
        let (post, _) = lmmse_module_a(&phi, &y, 1.0, &prior, VarClamp::default()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!((post.mean[i] - (prior.mean[i] + y[i]) / 2.0).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(post.var[i], 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn least_squares_limit() {
        let phi = CMatrix::from_rows(2, 2, vec![c(2.0, 0.0), c(1.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]).unwrap();
        let x = vec![c(0.5, -1.0), c(1.5, 0.25)];
        let y = phi.matvec(&x);
        let prior = GaussianMessage::zero_mean(vec![1e8; 2]);
        let (post, _) = lmmse_module_a(&phi, &y, 1e-10, &prior, VarClamp::default()).unwrap();
        for i in 0..2 {
            assert!((post.mean[i] - x[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn lmmse_matches_dense_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let phi = CMatrix::from_fn(8, 4, |_, _| crate::channel::complex_normal(&mut rng, 1.0));
            let y: Vec<_> = (0..8).map(|_| crate::channel::complex_normal(&mut rng, 1.0)).collect();
            let mean: Vec<_> = (0..4).map(|_| crate::channel::complex_normal(&mut rng, 1.0)).collect();
            let var: Vec<f64> = vec![0.5, 1.0, 2.0, 0.25];
            let prior = GaussianMessage::new(mean.clone(), var.clone()).unwrap();
            let (post, _) = lmmse_module_a(&phi, &y, 0.3, &prior, VarClamp::default()).unwrap();
            let (om, ocov): (Vec<Cx<f64>>, CMatrix<f64>) = dense_gaussian_posterior(&phi, &y, 0.3, &mean, &var).unwrap();
            let cov = post.covariance();
            for i in 0..4 {
                assert!((post.mean[i] - om[i]).norm() < 1e-10 * om[i].norm().max(1.0));
                assert!((post.var[i] - ocov[(i, i)].re).abs() < 1e-10);
                for j in 0..4 {
                    assert!((cov[(i, j)] - ocov[(i, j)]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn extrinsic_precision_additivity() {
        let post_m = vec![c(1.0, 0.0), c(0.2, 0.1)];
        let post_v = vec![0.2, 0.5];
        let pri_m = vec![c(0.0, 0.0), c(-1.0, 0.3)];
        let pri_v = vec![1.0, 2.0];
        let e = extrinsic(&post_m, &post_v, &pri_m, &pri_v, VarClamp::default());
        for i in 0..2 {
            assert_abs_diff_eq!(1.0 / post_v[i], 1.0 / pri_v[i] + 1.0 / e.var[i], epsilon = 1e-12);
            let fused = (pri_m[i] / pri_v[i] + e.mean[i] / e.var[i]) * post_v[i];
            assert!((fused - post_m[i]).norm() < 1e-12);
        }
        // posterior no sharper than prior: uninformative extrinsic
        let e = extrinsic(&[c(1.0, 0.0)], &[2.0], &[c(0.0, 0.0)], &[1.0], VarClamp::default());
        assert_eq!(e.var[0], 1e12);
    }

    #[test]
    fn spike_slab_trivial_cases() {
        let b = spike_slab_branch_update(c(0.7, -0.2), 0.3, 1.0, 0.0);
        assert_eq!(b.active_prob, 0.0);
        assert_eq!(b.mean, c(0.0, 0.0));
        let pi = 0.3;
        let v = 0.4;
        let b = spike_slab_branch_update(c(0.0, 0.0), v, 1.0, pi);
        assert_eq!(b.mean, c(0.0, 0.0));
        let r = v / (1.0 + v);
        assert_abs_diff_eq!(b.active_prob, pi * r / (pi * r + 1.0 - pi), epsilon = 1e-15);
        assert!(b.active_prob < pi);
    }

    #[test]
    fn spike_slab_matches_quadrature() {
        // exact posterior of x ~ 0.5 delta + 0.5 CN(0, 1) given CN(1; x, 0.1)
        let (xp, v, slab, pi) = (c(1.0, 0.0), 0.1, 1.0, 0.5);
        let b = spike_slab_branch_update(xp, v, slab, pi);
        let h = 0.004;
        let half = 6.0;
        let steps = (2.0 * half / h) as usize;
        let (mut z_slab, mut m1, mut m2) = (0.0, c(0.0, 0.0), 0.0);
        for i in 0..steps {
            for j in 0..steps {
                let x = c(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
                let w = (-(x.norm_sqr()) / slab).exp() / (std::f64::consts::PI * slab)
                    * (-(xp - x).norm_sqr() / v).exp()
                    / (std::f64::consts::PI * v)
                    * h
                    * h;
                z_slab += w;
                m1 += x * w;
                m2 += x.norm_sqr() * w;
            }
        }
        let z_spike = (-(xp.norm_sqr()) / v).exp() / (std::f64::consts::PI * v);
        let z = pi * z_slab + (1.0 - pi) * z_spike;
        let p = pi * z_slab / z;
        let mean = m1 * (pi / z);
        let var = m2 * pi / z - mean.norm_sqr();
        assert!((b.active_prob - p).abs() < 1e-6, "{} vs {p}", b.active_prob);
        assert!((b.mean - mean).norm() < 1e-6);
        assert!((b.var - var).abs() < 1e-6);
    }

    #[test]
    fn module_b_pure_slab() {
        let h = hyper(1.0, 1.0, 1.0, 2);
        let input = GaussianMessage::new(vec![c(0.5, 0.5), c(-1.0, 0.0), c(0.1, 0.0), c(2.0, -1.0)], vec![0.5; 4]).unwrap();
        let (post, _) = module_b(&input, &h, SupportModel::Joint, VarClamp::default()).unwrap();
        for i in 0..4 {
            assert!((post.mean[i] - input.mean[i] * (1.0 / 1.5)).norm() < 1e-14);
            assert_abs_diff_eq!(post.var[i], 0.5 / 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn module_b_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q1 in 1..=3 {
            for trial in 0..20 {
                let mut h = hyper(
                    rand::Rng::random_range(&mut rng, 0.05..0.95),
                    rand::Rng::random_range(&mut rng, 0.05..0.95),
                    rand::Rng::random_range(&mut rng, 0.05..0.95),
                    q1,
                );
                h.slab_var_r = (0..q1).map(|_| rand::Rng::random_range(&mut rng, 0.2..3.0)).collect();
                h.slab_var_c = (0..q1).map(|_| rand::Rng::random_range(&mut rng, 0.2..3.0)).collect();
                if trial % 3 == 1 {
                    h.user = UserPrior::Known { radar_visible: trial % 2 == 0 };
                }
                let mean = (0..2 * q1).map(|_| crate::channel::complex_normal(&mut rng, 1.5)).collect();
                let var = (0..2 * q1).map(|_| rand::Rng::random_range(&mut rng, 0.05..2.0)).collect();
                let input = GaussianMessage::new(mean, var).unwrap();
                for model in [SupportModel::Joint, SupportModel::Separate] {
                    let (post, _) = module_b(&input, &h, model, VarClamp::default()).unwrap();
                    let oracle = enumerate_module_b(&input, &h, model);
                    for q in 0..q1 {
                        assert_abs_diff_eq!(post.prob_r[q], oracle.prob_r[q], epsilon = 1e-9);
                        assert_abs_diff_eq!(post.prob_c[q], oracle.prob_c[q], epsilon = 1e-9);
                        assert_abs_diff_eq!(post.prob_joint[q], oracle.prob_joint[q], epsilon = 1e-9);
                    }
                    for i in 0..2 * q1 {
                        assert!((post.mean[i] - oracle.mean[i]).norm() < 1e-9);
                        assert_abs_diff_eq!(post.var[i], oracle.var[i], epsilon = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn joint_layer_transfers_evidence() {
        let h = hyper(0.2, 1.0, 1.0, 1);
        // strong radar evidence, weak comm evidence
        let input = GaussianMessage::new(vec![c(3.0, 0.0), c(0.1, 0.0)], vec![0.01, 1.0]).unwrap();
        let (joint, _) = module_b(&input, &h, SupportModel::Joint, VarClamp::default()).unwrap();
        let (sep, _) = module_b(&input, &h, SupportModel::Separate, VarClamp::default()).unwrap();
        assert!(joint.prob_c[0] > sep.prob_c[0] + 0.1);
    }

    fn systems(phi_r: &CMatrix<f64>, phi_c: &CMatrix<f64>, yr: &[Cx<f64>], yc: &[Cx<f64>], nv: f64) -> (LmmseSystem<f64>, LmmseSystem<f64>) {
        (LmmseSystem::new(phi_r, yr, nv).unwrap(), LmmseSystem::new(phi_c, yc, nv).unwrap())
    }

    #[test]
    fn zero_observation_gives_zero_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = CMatrix::from_fn(12, 6, |_, _| crate::channel::complex_normal(&mut rng, 1.0));
        let (sr, sc) = systems(&phi, &phi, &[c(0.0, 0.0); 12], &[c(0.0, 0.0); 12], 0.1);
        let h = hyper(0.3, 0.5, 0.5, 6);
        let ctrl = TurboControl::default();
        let st = turbo_estep(&sr, &sc, &h, SupportModel::Joint, &initial_message(&h, ctrl.clamp), &ctrl).unwrap();
        assert!(st.x_mean.iter().all(|z| z.norm() < 1e-12));
        assert!(st.prob_joint.iter().all(|p| *p < 0.3));
    }

    #[test]
    fn noiseless_one_sparse_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, q1) = (24, 8);
        let phi_r = CMatrix::from_fn(n, q1, |_, _| crate::channel::complex_normal(&mut rng, 1.0 / n as f64));
        let phi_c = CMatrix::from_fn(n, q1, |_, _| crate::channel::complex_normal(&mut rng, 1.0 / n as f64));
        let mut x = vec![c(0.0, 0.0); q1];
        x[3] = c(0.8, -0.6);
        let (sr, sc) = systems(&phi_r, &phi_c, &phi_r.matvec(&x), &phi_c.matvec(&x), 1e-12);
        let h = hyper(1.0 / q1 as f64, 0.5, 0.5, q1);
        let ctrl = TurboControl { max_iters: 50, ..TurboControl::default() };
        let st = turbo_estep(&sr, &sc, &h, SupportModel::Joint, &initial_message(&h, ctrl.clamp), &ctrl).unwrap();
        for q in 0..q1 {
            let expect = if q == 3 { 1.0 } else { 0.0 };
            assert!((st.prob_r[q] - expect).abs() < 1e-6, "q={q} p={}", st.prob_r[q]);
            assert!((st.prob_c[q] - expect).abs() < 1e-6);
        }
        assert!((st.radar_mean()[3] - x[3]).norm() / x[3].norm() < 1e-6);
        assert!((st.comm_mean()[3] - x[3]).norm() / x[3].norm() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn probabilities_are_consistent(seed in 0u64..10_000, lambda in 0.01f64..0.99, rr in 0.0f64..1.0, rc in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q1 = 5;
            let mean = (0..2 * q1).map(|_| crate::channel::complex_normal(&mut rng, 2.0)).collect();
            let var = (0..2 * q1).map(|_| rand::Rng::random_range(&mut rng, 1e-3..3.0)).collect();
            let input = GaussianMessage::new(mean, var).unwrap();
            let (post, ext) = module_b(&input, &hyper(lambda, rr, rc, q1), SupportModel::Joint, VarClamp::default()).unwrap();
            for q in 0..q1 {
                for p in [post.prob_r[q], post.prob_c[q], post.prob_joint[q]] {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
                prop_assert!(post.prob_joint[q] + 1e-12 >= post.prob_r[q].max(post.prob_c[q]));
            }
            prop_assert!(post.var.iter().all(|v| *v >= 0.0));
            prop_assert!(ext.var.iter().all(|v| *v >= 1e-12 && *v <= 1e12));
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..10_000, shift in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, q1) = (16, 6);
            let phi_r = CMatrix::from_fn(n, q1, |_, _| crate::channel::complex_normal(&mut rng, 0.2));
            let phi_c = CMatrix::from_fn(n, q1, |_, _| crate::channel::complex_normal(&mut rng, 0.2));
            let yr: Vec<_> = (0..n).map(|_| crate::channel::complex_normal(&mut rng, 1.0)).collect();
            let yc: Vec<_> = (0..n).map(|_| crate::channel::complex_normal(&mut rng, 1.0)).collect();
            let mut h = hyper(0.3, 0.6, 0.7, q1);
            h.slab_var_r = (0..q1).map(|i| 1.0 + i as f64 * 0.1).collect();
            let perm: Vec<usize> = (0..q1).map(|i| (i + shift) % q1).collect();
            let mut hp = h.clone();
            hp.slab_var_r = perm.iter().map(|&i| h.slab_var_r[i]).collect();
            let ctrl = TurboControl::default();
            let (sr, sc) = systems(&phi_r, &phi_c, &yr, &yc, 0.5);
            let (pr, pc) = systems(&phi_r.select_columns(&perm), &phi_c.select_columns(&perm), &yr, &yc, 0.5);
            let a = turbo_estep(&sr, &sc, &h, SupportModel::Joint, &initial_message(&h, ctrl.clamp), &ctrl).unwrap();
            let b = turbo_estep(&pr, &pc, &hp, SupportModel::Joint, &initial_message(&hp, ctrl.clamp), &ctrl).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((a.prob_joint[i] - b.prob_joint[k]).abs() < 1e-9);
                prop_assert!((a.x_mean[i] - b.x_mean[k]).norm() < 1e-9);
                prop_assert!((a.x_mean[q1 + i] - b.x_mean[q1 + k]).norm() < 1e-9);
            }
        }
    }
}
