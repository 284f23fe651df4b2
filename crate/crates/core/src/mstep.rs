//! M-step: EM surrogate over the sensing parameters, its analytic gradient
//! and block-wise Armijo gradient ascent.
//!
//! Per observation block the data term is
//! `f(xi) = ||y - Phi(xi) x||^2 + tr(V Phi(xi)^H Phi(xi))` with `x`, `V` the
//! Module-A posterior; the surrogate is `-sum f / sigma^2 + ln p(xi)`.

use crate::channel::{Observation, PilotSet, SensingParams, SystemGeometry};
use crate::error::{Error, Result};
use crate::geometry::{
    comm_relative_delay, comm_relative_delay_gradients, radar_delay, radar_delay_gradient, sin_aoa_gradient,
    steering_sin_derivative, Area, Position,
};
use crate::linalg::{dot, dotc, CMatrix, LinearOperator};
use crate::measurement::{comm_column, comm_operator, radar_column, radar_operator, KhatriRao};
use crate::scalar::{cis, czero, Cx, Real};
use crate::turbo::PosteriorState;

/// Prior on the sensing parameters: Gaussian user position, uniform time
/// offset on `[-tau_bound, tau_bound]`, uniform grid inside `area`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiPrior<T> {
    pub user_mean: Position<T>,
    /// `sigma_p^2`: the log-density is `-|p_u - mean|^2 / sigma_p^2`.
    pub user_var: T,
    pub tau_bound: T,
    pub area: Area<T>,
}

impl<T: Real> XiPrior<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.user_var > T::zero()) || !(self.tau_bound > T::zero()) {
            return Err(Error::Config("sigma_p^2 and the time-offset bound must be positive".into()));
        }
        Ok(())
    }

    /// `ln p(xi)` up to a constant; `-inf` outside the prior support.
    pub fn ln_density(&self, xi: &SensingParams<T>) -> T {
        let inside = self.area.contains(&xi.user)
            && xi.grid.iter().all(|p| self.area.contains(p))
            && xi.time_offset.abs() <= self.tau_bound;
        if !inside {
            return T::neg_infinity();
        }
        let dx = xi.user.x - self.user_mean.x;
        let dy = xi.user.y - self.user_mean.y;
        -(dx * dx + dy * dy) / self.user_var
    }
}

/// Everything the surrogate needs besides `xi`.
#[derive(Debug, Clone)]
pub struct SurrogateContext<'a, T> {
    pub sys: &'a SystemGeometry<T>,
    pub pilots: &'a PilotSet<T>,
    pub obs: &'a Observation<T>,
    pub prior: &'a XiPrior<T>,
    pub x_r: Vec<Cx<T>>,
    pub x_c: Vec<Cx<T>>,
    pub cov_r: CMatrix<T>,
    pub cov_c: CMatrix<T>,
}

impl<'a, T: Real> SurrogateContext<'a, T> {
    pub fn new(
        sys: &'a SystemGeometry<T>,
        pilots: &'a PilotSet<T>,
        obs: &'a Observation<T>,
        prior: &'a XiPrior<T>,
        post: &PosteriorState<T>,
    ) -> Self {
        Self::from_moments(
            sys,
            pilots,
            obs,
            prior,
            (post.dense_radar.mean.clone(), post.dense_radar.covariance()),
            (post.dense_comm.mean.clone(), post.dense_comm.covariance()),
        )
    }

    pub fn from_moments(
        sys: &'a SystemGeometry<T>,
        pilots: &'a PilotSet<T>,
        obs: &'a Observation<T>,
        prior: &'a XiPrior<T>,
        radar: (Vec<Cx<T>>, CMatrix<T>),
        comm: (Vec<Cx<T>>, CMatrix<T>),
    ) -> Self {
        Self {
            sys,
            pilots,
            obs,
            prior,
            x_r: radar.0,
            cov_r: radar.1,
            x_c: comm.0,
            cov_c: comm.1,
        }
    }
}

fn residual<T: Real>(op: &KhatriRao<T>, y: &[Cx<T>], x: &[Cx<T>]) -> Vec<Cx<T>> {
    y.iter().zip(op.apply(x)).map(|(a, b)| *a - b).collect()
}

/// `tr(V G)` with `G = WW .* AA`.
fn trace_term<T: Real>(v: &CMatrix<T>, ww: &CMatrix<T>, aa: &CMatrix<T>) -> T {
    let n = v.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            acc += (v[(i, j)] * ww[(j, i)] * aa[(j, i)]).re;
        }
    }
    acc
}


fn combine<T: Real>(fr: T, fc: T, lp: T, ctx: &SurrogateContext<'_, T>) -> T {
    -fr / ctx.obs.noise_var_r - fc / ctx.obs.noise_var_c + lp
}

/// EM surrogate at `xi` (constant dropped); `-inf` outside the prior support.
pub fn surrogate_value<T: Real>(xi: &SensingParams<T>, ctx: &SurrogateContext<'_, T>) -> T {
    let lp = ctx.prior.ln_density(xi);
    if lp == T::neg_infinity() {
        return lp;
    }
    let (radar, comm) = blocks(xi, ctx);
    combine(radar.cost(), comm.cost(), lp, ctx)
}

/// Gradient of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGradient<T> {
    /// One `(d/dx, d/dy)` per grid point; zero outside the active set.
    pub grid: Vec<(T, T)>,
    pub user: (T, T),
    pub time_offset: T,
}

/// One block of the data term at a fixed `xi`, cached so that a single
/// column can be replaced in `O((Q+1)(M + N_p))`.
#[derive(Clone)]
struct BlockDerivs<T> {
    op: KhatriRao<T>,
    ww: CMatrix<T>,
    aa: CMatrix<T>,
    /// `y - Phi x`, subcarrier-major.
    r: Vec<Cx<T>>,
    /// `tr(V G)`.
    trace: T,
}

/// A candidate replacement of column `q` with its cost.
struct ColumnUpdate<T> {
    q: usize,
    w: Vec<Cx<T>>,
    a: Vec<Cx<T>>,
    ww_col: Vec<Cx<T>>,
    aa_col: Vec<Cx<T>>,
    r: Vec<Cx<T>>,
    trace: T,
    cost: T,
}

impl<T: Real> BlockDerivs<T> {
    fn new(op: KhatriRao<T>, y: &[Cx<T>], x: &[Cx<T>], v: &CMatrix<T>) -> Self {
        let r = residual(&op, y, x);
        let (ww, aa) = op.gram_factors();
        let trace = trace_term(v, &ww, &aa);
        Self { op, ww, aa, r, trace }
    }

    fn cost(&self) -> T {
        self.r.iter().map(|z| z.norm_sqr()).sum::<T>() + self.trace
    }

    /// `R-bar v` with `R-bar` the conjugated residual as `N_p x M`.
    fn rbar_times(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        self.r.chunks(self.op.antennas()).map(|rn| dotc(rn, v)).collect()
    }

    /// Cost after replacing column `q` by `w (x) a`.
    fn try_column(&self, q: usize, w: Vec<Cx<T>>, a: Vec<Cx<T>>, x: &[Cx<T>], v: &CMatrix<T>) -> ColumnUpdate<T> {
        let m = self.op.antennas();
        let (w0, a0) = (self.op.weights().row(q), self.op.atoms().row(q));
        let mut r = self.r.clone();
        let xq = x[q];
        for (n, rn) in r.chunks_mut(m).enumerate() {
            let (c_new, c_old) = (xq * w[n], xq * w0[n]);
            for (k, z) in rn.iter_mut().enumerate() {
                *z -= c_new * a[k] - c_old * a0[k];
            }
        }
        let q1 = self.ww.rows();
        let mut ww_col: Vec<Cx<T>> = (0..q1).map(|j| dotc(self.op.weights().row(j), &w)).collect();
        let mut aa_col: Vec<Cx<T>> = (0..q1).map(|j| dotc(self.op.atoms().row(j), &a)).collect();
        ww_col[q] = dotc(&w, &w);
        aa_col[q] = dotc(&a, &a);
        let mut delta = T::zero();
        for j in 0..q1 {
            let dg = ww_col[j] * aa_col[j] - self.ww[(j, q)] * self.aa[(j, q)];
            if j == q {
                delta += (v[(q, q)] * dg).re;
            } else {
                delta += (v[(q, j)] * dg + v[(j, q)] * dg.conj()).re;
            }
        }
        let trace = self.trace + delta;
        let cost = r.iter().map(|z| z.norm_sqr()).sum::<T>() + trace;
        ColumnUpdate { q, w, a, ww_col, aa_col, r, trace, cost }
    }

    fn apply(&mut self, u: ColumnUpdate<T>) {
        let q = u.q;
        self.op.set_column(q, &u.w, &u.a);
        for j in 0..self.ww.rows() {
            self.ww[(j, q)] = u.ww_col[j];
            self.ww[(q, j)] = u.ww_col[j].conj();
            self.aa[(j, q)] = u.aa_col[j];
            self.aa[(q, j)] = u.aa_col[j].conj();
        }
        self.r = u.r;
        self.trace = u.trace;
    }

    /// Directional derivative of `f` when column `q` moves by
    /// `dw (x) a_q + w_q (x) da`:
    /// `2 Re[sum_j V_qj phi_j^H dphi_q - x_q r^H dphi_q]`.
    fn column_sensitivity(
        &self,
        q: usize,
        x: &[Cx<T>],
        v: &CMatrix<T>,
        dw: Option<&[Cx<T>]>,
        da: Option<&[Cx<T>]>,
    ) -> T {
        let w = self.op.weights();
        let a = self.op.atoms();
        let q1 = w.rows();
        let vq = v.row(q);
        let mut acc = czero::<T>();
        if let Some(dw) = dw {
            for j in 0..q1 {
                acc += vq[j] * dotc(w.row(j), dw) * self.aa[(j, q)];
            }
            acc -= x[q] * dot(dw, &self.rbar_times(a.row(q)));
        }
        if let Some(da) = da {
            for j in 0..q1 {
                acc += vq[j] * self.ww[(j, q)] * dotc(a.row(j), da);
            }
            acc -= x[q] * dot(w.row(q), &self.rbar_times(da));
        }
        T::lit(2.0) * acc.re
    }

    /// Sensitivity of `f` to a delay shift of column `q`.
    fn delay_sensitivity(&self, q: usize, x: &[Cx<T>], v: &CMatrix<T>, kappa: &[Cx<T>]) -> T {
        let dw: Vec<Cx<T>> = self.op.weights().row(q).iter().zip(kappa).map(|(w, k)| *w * *k).collect();
        self.column_sensitivity(q, x, v, Some(&dw), None)
    }
}

/// Per-column sensitivities of both blocks to `sin(theta)` and to delay.
struct Sensitivities<T> {
    radar_sin: T,
    radar_delay: T,
    comm_sin: T,
}

fn angle_and_radar_sensitivities<T: Real>(
    q: usize,
    xi: &SensingParams<T>,
    ctx: &SurrogateContext<'_, T>,
    radar: &BlockDerivs<T>,
    comm: &BlockDerivs<T>,
    kappa: &[Cx<T>],
) -> Sensitivities<T> {
    let atom = radar.op.atoms().row(q);
    let da = steering_sin_derivative(atom);
    let tau = radar_delay(&ctx.sys.bs, xi.column_position(q));
    let dw_r: Vec<Cx<T>> = ctx
        .pilots
        .subcarriers
        .iter()
        .zip(&ctx.pilots.downlink)
        .map(|(&n, v)| {
            dot(&da, v) * cis(-T::TAU() * T::from_usize(n).unwrap() * ctx.pilots.f0 * tau)
        })
        .collect();
    Sensitivities {
        radar_sin: radar.column_sensitivity(q, &ctx.x_r, &ctx.cov_r, Some(&dw_r), Some(&da)),
        radar_delay: radar.delay_sensitivity(q, &ctx.x_r, &ctx.cov_r, kappa),
        comm_sin: comm.column_sensitivity(q, &ctx.x_c, &ctx.cov_c, None, Some(&da)),
    }
}

fn blocks<T: Real>(xi: &SensingParams<T>, ctx: &SurrogateContext<'_, T>) -> (BlockDerivs<T>, BlockDerivs<T>) {
    (
        BlockDerivs::new(radar_operator(ctx.sys, xi, ctx.pilots), &ctx.obs.y_r, &ctx.x_r, &ctx.cov_r),
        BlockDerivs::new(comm_operator(ctx.sys, xi, ctx.pilots), &ctx.obs.y_c, &ctx.x_c, &ctx.cov_c),
    )
}

fn delay_kernel<T: Real>(ctx: &SurrogateContext<'_, T>) -> Vec<Cx<T>> {
    ctx.pilots
        .phase_slopes()
        .into_iter()
        .map(|s| Cx::new(T::zero(), s))
        .collect()
}

fn grid_point_gradient<T: Real>(
    g: usize,
    xi: &SensingParams<T>,
    ctx: &SurrogateContext<'_, T>,
    radar: &BlockDerivs<T>,
    comm: &BlockDerivs<T>,
    kappa: &[Cx<T>],
    comm_delay: T,
) -> (T, T) {
    let (ir, ic) = (ctx.obs.noise_var_r.recip(), ctx.obs.noise_var_c.recip());
    let bs = &ctx.sys.bs;
    let p = &xi.grid[g];
    let s = angle_and_radar_sensitivities(g + 1, xi, ctx, radar, comm, kappa);
    let ds = sin_aoa_gradient(bs, p);
    let dr = radar_delay_gradient(bs, p);
    let (dc, _) = comm_relative_delay_gradients(bs, p, &xi.user);
    let f = |k: usize| {
        let pick = |t: (T, T)| if k == 0 { t.0 } else { t.1 };
        -ir * (s.radar_sin * pick(ds) + s.radar_delay * pick(dr)) - ic * (s.comm_sin * pick(ds) + comm_delay * pick(dc))
    };
    (f(0), f(1))
}

/// Analytic surrogate gradient. Grid-point gradients are computed only for
/// indices in `active` (0-based positions in `xi.grid`).
pub fn surrogate_gradient<T: Real>(
    xi: &SensingParams<T>,
    ctx: &SurrogateContext<'_, T>,
    active: &[usize],
) -> SurrogateGradient<T> {
    let (radar, comm) = blocks(xi, ctx);
    let kappa = delay_kernel(ctx);
    let (ir, ic) = (ctx.obs.noise_var_r.recip(), ctx.obs.noise_var_c.recip());
    let q1 = xi.grid_len() + 1;
    let bs = &ctx.sys.bs;

    // comm delay sensitivities for every column feed tau_o, p_u and r_q
    let comm_delay: Vec<T> = (0..q1)
        .map(|q| comm.delay_sensitivity(q, &ctx.x_c, &ctx.cov_c, &kappa))
        .collect();

    let mut grid = vec![(T::zero(), T::zero()); xi.grid_len()];
    for &g in active {
        grid[g] = grid_point_gradient(g, xi, ctx, &radar, &comm, &kappa, comm_delay[g + 1]);
    }

    let s0 = angle_and_radar_sensitivities(0, xi, ctx, &radar, &comm, &kappa);
    let ds = sin_aoa_gradient(bs, &xi.user);
    let dr = radar_delay_gradient(bs, &xi.user);
    let mut via_comm = (T::zero(), T::zero());
    for (g, p) in xi.grid.iter().enumerate() {
        let (_, du) = comm_relative_delay_gradients(bs, p, &xi.user);
        let sens = comm_delay[g + 1];
        if comm_relative_delay(bs, p, &xi.user) > T::zero() {
            via_comm.0 += sens * du.0;
            via_comm.1 += sens * du.1;
        }
    }
    let two = T::lit(2.0);
    let user = (
        -ir * (s0.radar_sin * ds.0 + s0.radar_delay * dr.0) - ic * (s0.comm_sin * ds.0 + via_comm.0)
            - two * (xi.user.x - ctx.prior.user_mean.x) / ctx.prior.user_var,
        -ir * (s0.radar_sin * ds.1 + s0.radar_delay * dr.1) - ic * (s0.comm_sin * ds.1 + via_comm.1)
            - two * (xi.user.y - ctx.prior.user_mean.y) / ctx.prior.user_var,
    );
    let time_offset = -ic * comm_delay.iter().copied().sum::<T>();
    SurrogateGradient {
        grid,
        user,
        time_offset,
    }
}

/// Initial Armijo steps: a displacement length in meters for the grid and
/// the user position, seconds for the time offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes<T> {
    pub eps_r: T,
    pub eps_p: T,
    pub eps_t: T,
}

impl<T: Real> StepSizes<T> {
    /// `1 m`, `1 m` and `1 / (10 B)` for bandwidth `B`.
    pub fn for_bandwidth(bandwidth: T) -> Self {
        Self {
            eps_r: T::one(),
            eps_p: T::one(),
            eps_t: (T::lit(10.0) * bandwidth).recip(),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            eps_r: self.eps_r * factor,
            eps_p: self.eps_p * factor,
            eps_t: self.eps_t * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.eps_r, self.eps_p, self.eps_t].iter().any(|e| !(*e > T::zero())) {
            return Err(Error::Config("Armijo step sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams<T> {
    pub shrink: T,
    pub sufficient_increase: T,
    pub max_backtracks: usize,
    /// When the initial step is accepted outright, keep growing it by
    /// `1 / shrink` up to this many times while the value keeps rising.
    pub max_expansions: usize,
}

impl<T: Real> Default for ArmijoParams<T> {
    fn default() -> Self {
        Self {
            shrink: T::lit(0.5),
            sufficient_increase: T::lit(1e-4),
            max_backtracks: 20,
            max_expansions: 0,
        }
    }
}

impl<T: Real> ArmijoParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > T::zero() && self.shrink < T::one()) {
            return Err(Error::Config("Armijo shrink must lie in (0, 1)".into()));
        }
        if !(self.sufficient_increase > T::zero() && self.sufficient_increase < T::one()) {
            return Err(Error::Config("Armijo constant must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of one three-block ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome<T> {
    pub xi: SensingParams<T>,
    pub value_before: T,
    pub value_after: T,
    /// Whether the grid, user and time-offset blocks moved.
    pub accepted: [bool; 3],
}

/// Grid indices whose joint support posterior exceeds `threshold`. Of two
/// active points closer than `min_gap`, the one with lower posterior is left
/// out.
pub fn active_set<T: Real>(xi: &SensingParams<T>, prob_joint: &[T], threshold: T, min_gap: T) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..xi.grid_len()).filter(|&g| prob_joint[g + 1] > threshold).collect();
    cand.sort_by(|&a, &b| {
        prob_joint[b + 1]
            .partial_cmp(&prob_joint[a + 1])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::with_capacity(cand.len());
    for g in cand {
        if kept.iter().all(|&k| xi.grid[k].distance(&xi.grid[g]) >= min_gap) {
            kept.push(g);
        }
    }
    kept.sort_unstable();
    kept
}

/// Backtracking line search: `eval(eps)` returns the candidate, the
/// directional slope and the surrogate value. Accepts the first step with
/// positive slope and sufficient increase.
fn line_search<T: Real, S>(
    f0: T,
    eps0: T,
    params: &ArmijoParams<T>,
    mut eval: impl FnMut(T) -> (S, T, T),
) -> Option<(S, T)> {
    let mut accept = |eps: T| {
        let (state, slope, f) = eval(eps);
        (slope > T::zero() && f >= f0 + params.sufficient_increase * slope).then_some((state, f))
    };
    let mut eps = eps0;
    for k in 0..=params.max_backtracks {
        if let Some(mut best) = accept(eps) {
            if k == 0 {
                for _ in 0..params.max_expansions {
                    eps /= params.shrink;
                    match accept(eps) {
                        Some(next) if next.1 > best.1 => best = next,
                        _ => break,
                    }
                }
            }
            return Some(best);
        }
        eps *= params.shrink;
    }
    None
}

fn unit<T: Real>(g: (T, T)) -> (T, T) {
    let n = g.0.hypot(g.1);
    if n > T::zero() && n.is_finite() {
        (g.0 / n, g.1 / n)
    } else {
        (T::zero(), T::zero())
    }
}

/// Sequential Armijo ascent over the grid points in `active`, then the user
/// position, then the time offset, each block using the gradient at the
/// parameters updated so far. A block whose line search fails stays put.
pub fn armijo_ascent<T: Real>(
    xi: &SensingParams<T>,
    ctx: &SurrogateContext<'_, T>,
    active: &[usize],
    steps: &StepSizes<T>,
    params: &ArmijoParams<T>,
) -> AscentOutcome<T> {
    let area = &ctx.prior.area;
    let value_before = surrogate_value(xi, ctx);
    let mut cur = xi.clone();
    let mut f = value_before;
    let mut accepted = [false; 3];

    // each active point gets its own line search along its own gradient,
    // taken at the positions updated so far; only one column of each
    // operator changes, so the blocks are updated in place
    if !active.is_empty() {
        let (mut radar, mut comm) = blocks(&cur, ctx);
        let kappa = delay_kernel(ctx);
        let lp = ctx.prior.ln_density(&cur);
        for &i in active {
            let q = i + 1;
            let cd = comm.delay_sensitivity(q, &ctx.x_c, &ctx.cov_c, &kappa);
            let gi = grid_point_gradient(i, &cur, ctx, &radar, &comm, &kappa, cd);
            let d = unit(gi);
            if d == (T::zero(), T::zero()) {
                continue;
            }
            let p = cur.grid[i];
            let found = line_search(f, steps.eps_r, params, |eps| {
                let np = area.project(&Position::new(p.x + eps * d.0, p.y + eps * d.1));
                let slope = gi.0 * (np.x - p.x) + gi.1 * (np.y - p.y);
                if !(slope > T::zero()) {
                    return (None, slope, T::neg_infinity());
                }
                let (wr, ar) = radar_column(ctx.sys, &np, ctx.pilots);
                let ur = radar.try_column(q, wr, ar, &ctx.x_r, &ctx.cov_r);
                let delay = comm_relative_delay(&ctx.sys.bs, &np, &cur.user) + cur.time_offset;
                let (wc, ac) = comm_column(ctx.sys, &np, delay, ctx.pilots);
                let uc = comm.try_column(q, wc, ac, &ctx.x_c, &ctx.cov_c);
                let v = combine(ur.cost, uc.cost, lp, ctx);
                (Some((np, ur, uc)), slope, v)
            });
            if let Some((Some((np, ur, uc)), v)) = found {
                cur.grid[i] = np;
                radar.apply(ur);
                comm.apply(uc);
                f = v;
                accepted[0] = true;
            }
        }
        if accepted[0] {
            // re-anchor on a full evaluation; drop the block if rounding in
            // the running updates hid a net decrease
            f = surrogate_value(&cur, ctx);
            if !(f >= value_before) {
                cur = xi.clone();
                f = value_before;
                accepted[0] = false;
            }
        }
    }

    let g = surrogate_gradient(&cur, ctx, &[]);
    let d = unit(g.user);
    let found = line_search(f, steps.eps_p, params, |eps| {
        let mut next = cur.clone();
        let p = cur.user;
        next.user = area.project(&Position::new(p.x + eps * d.0, p.y + eps * d.1));
        let slope = g.user.0 * (next.user.x - p.x) + g.user.1 * (next.user.y - p.y);
        let v = if slope > T::zero() { surrogate_value(&next, ctx) } else { T::neg_infinity() };
        (next, slope, v)
    });
    if let Some((next, v)) = found {
        cur = next;
        f = v;
        accepted[1] = true;
    }

    let g = surrogate_gradient(&cur, ctx, &[]);
    let sign = if g.time_offset > T::zero() {
        T::one()
    } else if g.time_offset < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    let bound = ctx.prior.tau_bound;
    let found = line_search(f, steps.eps_t, params, |eps| {
        let mut next = cur.clone();
        next.time_offset = (cur.time_offset + sign * eps).max(-bound).min(bound);
        let slope = g.time_offset * (next.time_offset - cur.time_offset);
        let v = if slope > T::zero() { surrogate_value(&next, ctx) } else { T::neg_infinity() };
        (next, slope, v)
    });
    if let Some((next, v)) = found {
        cur = next;
        f = v;
        accepted[2] = true;
    }

    AscentOutcome {
        xi: cur,
        value_before,
        value_after: f,
        accepted,
    }
}
