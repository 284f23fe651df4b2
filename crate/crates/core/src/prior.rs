//! Three-layer sparse prior: a joint support `s`, branch supports
//! `s^r`, `s^c` that can only be active where `s` is, and spike-and-slab
//! gains on each branch.

use rand::Rng;

use crate::channel::{complex_normal, Entity, Scene};
use crate::error::{Error, Result};
use crate::geometry::{uniform_grid, GridSpec, Position};
use crate::scalar::{czero, Cx, Real};

/// Treatment of basis index 0 (the user / line-of-sight column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPrior {
    /// Index 0 follows the same support model as grid indices.
    Shared,
    /// The LoS path is always present; the radar echo of the user is present
    /// iff `radar_visible`.
    Known { radar_visible: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorHyperParams<T> {
    /// Sparsity level of the joint support.
    pub lambda: T,
    /// `P(s^r = 1 | s = 1)`.
    pub rho_r: T,
    /// `P(s^c = 1 | s = 1)`.
    pub rho_c: T,
    /// Slab variances, one per basis index (length `Q + 1`).
    pub slab_var_r: Vec<T>,
    pub slab_var_c: Vec<T>,
    pub user: UserPrior,
}

impl<T: Real> PriorHyperParams<T> {
    pub fn uniform(lambda: T, rho_r: T, rho_c: T, columns: usize, slab_var: T, user: UserPrior) -> Self {
        Self {
            lambda,
            rho_r,
            rho_c,
            slab_var_r: vec![slab_var; columns],
            slab_var_c: vec![slab_var; columns],
            user,
        }
    }

    /// Default hyperparameters matched to a scene with `k` targets, `l`
    /// scatterers of which `overlap` coincide, on a grid of `q` points:
    /// `lambda = (k + l - overlap) / q`, `rho_r = k / (k + l - overlap + 1)`,
    /// `rho_c = l / (k + l - overlap + 1)`, unit slab variances.
    pub fn for_scene_counts(k: usize, l: usize, overlap: usize, q: usize, user: UserPrior) -> Result<Self> {
        if overlap > k.min(l) {
            return Err(Error::Config("overlap exceeds min(K, L)".into()));
        }
        if q == 0 {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        let distinct = (k + l - overlap) as f64;
        let hyper = Self::uniform(
            T::lit((distinct / q as f64).min(1.0)),
            T::lit(k as f64 / (distinct + 1.0)),
            T::lit(l as f64 / (distinct + 1.0)),
            q + 1,
            T::one(),
            user,
        );
        hyper.validate(q + 1)?;
        Ok(hyper)
    }

    pub fn columns(&self) -> usize {
        self.slab_var_r.len()
    }

    pub fn validate(&self, columns: usize) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !(unit(self.lambda) && unit(self.rho_r) && unit(self.rho_c)) {
            return Err(Error::Config("prior probabilities must lie in [0, 1]".into()));
        }
        if self.slab_var_r.len() != columns || self.slab_var_c.len() != columns {
            return Err(Error::Dimension(format!(
                "slab variances for {} / {} columns, expected {columns}",
                self.slab_var_r.len(),
                self.slab_var_c.len()
            )));
        }
        if self
            .slab_var_r
            .iter()
            .chain(&self.slab_var_c)
            .any(|v| !(*v > T::zero() && v.is_finite()))
        {
            return Err(Error::Config("slab variances must be positive".into()));
        }
        Ok(())
    }

    /// Marginal prior activity `(P(s_q^r = 1), P(s_q^c = 1))`.
    pub fn marginal_activity(&self, q: usize) -> (T, T) {
        match (q, self.user) {
            (0, UserPrior::Known { radar_visible }) => {
                (if radar_visible { T::one() } else { T::zero() }, T::one())
            }
            _ => (self.lambda * self.rho_r, self.lambda * self.rho_c),
        }
    }

    /// Whether index `q` has its supports fixed by [`UserPrior::Known`].
    pub fn is_fixed(&self, q: usize) -> bool {
        q == 0 && matches!(self.user, UserPrior::Known { .. })
    }
}

/// Joint and branch supports, index 0 being the user column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportTriple {
    pub s: Vec<bool>,
    pub s_r: Vec<bool>,
    pub s_c: Vec<bool>,
}

impl SupportTriple {
    pub fn zeros(columns: usize) -> Self {
        Self {
            s: vec![false; columns],
            s_r: vec![false; columns],
            s_c: vec![false; columns],
        }
    }

    /// Branch activity implies joint activity everywhere.
    pub fn is_consistent(&self) -> bool {
        self.s
            .iter()
            .zip(self.s_r.iter().zip(&self.s_c))
            .all(|(s, (r, c))| (!r || *s) && (!c || *s))
    }
}

/// Draws `s ~ Bernoulli(lambda)` and, where active, `s^t ~ Bernoulli(rho_t)`
/// over `q + 1` columns.
pub fn sample_supports<T: Real, R: Rng>(hyper: &PriorHyperParams<T>, q: usize, rng: &mut R) -> SupportTriple {
    let mut t = SupportTriple::zeros(q + 1);
    let bern = |p: T, rng: &mut R| rng.random::<f64>() < p.to_f64_lossy();
    for i in 0..=q {
        if let (0, UserPrior::Known { radar_visible }) = (i, hyper.user) {
            t.s[0] = true;
            t.s_r[0] = radar_visible;
            t.s_c[0] = true;
            continue;
        }
        if bern(hyper.lambda, rng) {
            t.s[i] = true;
            t.s_r[i] = bern(hyper.rho_r, rng);
            t.s_c[i] = bern(hyper.rho_c, rng);
        }
    }
    t
}

/// Spike-and-slab gains for the given supports.
pub fn sample_gains<T: Real, R: Rng>(
    supports: &SupportTriple,
    hyper: &PriorHyperParams<T>,
    rng: &mut R,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let draw = |active: &[bool], var: &[T], rng: &mut R| -> Vec<Cx<T>> {
        active
            .iter()
            .zip(var)
            .map(|(a, v)| if *a { complex_normal(rng, *v) } else { czero() })
            .collect()
    };
    let xr = draw(&supports.s_r, &hyper.slab_var_r, rng);
    let xc = draw(&supports.s_c, &hyper.slab_var_c, rng);
    (xr, xc)
}

/// Where scene entities sit relative to the generating grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Exactly on grid points.
    OnGrid,
    /// Grid point plus a uniform offset within its cell.
    OffGrid,
}

/// Fixed-count scene description.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRequest<T> {
    pub targets: usize,
    pub scatterers: usize,
    /// Number of positions that are both a target and a scatterer.
    pub overlap: usize,
    pub grid: GridSpec<T>,
    pub placement: Placement,
    /// Minimum spacing between entity cells (and from the user), in cells.
    pub min_separation_cells: T,
    pub user: Position<T>,
    pub user_radar_visible: bool,
    pub time_offset: T,
    pub gain_var: T,
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Places `overlap` shared positions followed by the target-only and
/// scatterer-only remainders, draws complex gains, and records the
/// generating supports.
pub fn scene_from_counts<T: Real, R: Rng>(req: &SceneRequest<T>, rng: &mut R) -> Result<Scene<T>> {
    if req.overlap > req.targets.min(req.scatterers) {
        return Err(Error::Config("overlap exceeds min(K, L)".into()));
    }
    let grid = uniform_grid(&req.grid)?;
    let distinct = req.targets + req.scatterers - req.overlap;
    let min_dist = req.min_separation_cells * req.grid.resolution;
    let cells = pick_cells(&grid, distinct, min_dist, &req.user, rng)?;

    let mut supports = SupportTriple::zeros(grid.len() + 1);
    supports.s[0] = true;
    supports.s_c[0] = true;
    supports.s_r[0] = req.user_radar_visible;

    let half = T::lit(0.5);
    let mut scene = Scene::empty(req.user);
    scene.time_offset = req.time_offset;
    scene.los_gain = complex_normal(rng, req.gain_var);
    scene.user_radar_gain = if req.user_radar_visible {
        complex_normal(rng, req.gain_var)
    } else {
        czero()
    };
    for (rank, &cell) in cells.iter().enumerate() {
        let mut pos = grid[cell];
        if req.placement == Placement::OffGrid {
            let ox = T::lit(rng.random::<f64>()) - half;
            let oy = T::lit(rng.random::<f64>()) - half;
            pos = pos.offset(ox * req.grid.resolution, oy * req.grid.resolution);
        }
        let is_target = rank < req.targets;
        let is_scatterer = rank < req.overlap || rank >= req.targets;
        supports.s[cell + 1] = true;
        if is_target {
            supports.s_r[cell + 1] = true;
            scene.targets.push(Entity {
                position: pos,
                gain: complex_normal(rng, req.gain_var),
            });
        }
        if is_scatterer {
            supports.s_c[cell + 1] = true;
            scene.scatterers.push(Entity {
                position: pos,
                gain: complex_normal(rng, req.gain_var),
            });
        }
    }
    scene.supports = Some(supports);
    Ok(scene)
}

fn pick_cells<T: Real, R: Rng>(
    grid: &[Position<T>],
    count: usize,
    min_dist: T,
    user: &Position<T>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..grid.len())
        .filter(|&i| grid[i].distance(user) >= min_dist)
        .collect();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut chosen: Vec<usize> = Vec::with_capacity(count);
        let mut pool = eligible.clone();
        while chosen.len() < count && !pool.is_empty() {
            let pick = pool.swap_remove(rng.random_range(0..pool.len()));
            pool.retain(|&i| grid[i].distance(&grid[pick]) >= min_dist);
            chosen.push(pick);
        }
        if chosen.len() == count {
            return Ok(chosen);
        }
    }
    Err(Error::Generation(format!(
        "could not place {count} entities with separation {min_dist}"
    )))
}
