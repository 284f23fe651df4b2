//! Ground-truth radar and communication channels, the location-domain basis
//! and noisy observation synthesis.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{
    comm_relative_delay, radar_delay, sin_aoa, steering_from_sin, Area, ArrayGeometry, Position,
};
use crate::linalg::{dot, CMatrix};
use crate::prior::SupportTriple;
use crate::scalar::{cis, czero, Cx, Real};

/// Fixed hardware layout: base-station position and its receive array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemGeometry<T> {
    pub bs: Position<T>,
    pub array: ArrayGeometry,
}

impl<T: Real> SystemGeometry<T> {
    pub fn new(bs: Position<T>, array: ArrayGeometry) -> Self {
        Self { bs, array }
    }

    pub fn antennas(&self) -> usize {
        self.array.antennas()
    }

    /// Array response towards `p`.
    pub fn atom(&self, p: &Position<T>) -> Vec<Cx<T>> {
        steering_from_sin(sin_aoa(&self.bs, p), self.antennas())
    }
}

/// A point reflector with its complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entity<T> {
    pub position: Position<T>,
    pub gain: Cx<T>,
}

/// Ground truth for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub user: Position<T>,
    /// Radar echo gain of the user itself; zero when the user is not visible.
    pub user_radar_gain: Cx<T>,
    /// Gain of the line-of-sight uplink path.
    pub los_gain: Cx<T>,
    pub targets: Vec<Entity<T>>,
    pub scatterers: Vec<Entity<T>>,
    pub time_offset: T,
    /// Supports over the generating grid, index 0 being the user.
    pub supports: Option<SupportTriple>,
}

impl<T: Real> Scene<T> {
    /// Scene with no reflectors and no user echo or LoS path.
    pub fn empty(user: Position<T>) -> Self {
        Self {
            user,
            user_radar_gain: czero(),
            los_gain: czero(),
            targets: Vec::new(),
            scatterers: Vec::new(),
            time_offset: T::zero(),
            supports: None,
        }
    }

    /// Checks positions against `area` and the time offset against
    /// `[-bound, bound]`.
    pub fn validate(&self, area: &Area<T>, time_offset_bound: T) -> Result<()> {
        let all = std::iter::once(&self.user)
            .chain(self.targets.iter().map(|e| &e.position))
            .chain(self.scatterers.iter().map(|e| &e.position));
        for p in all {
            if !p.is_finite() || !area.contains(p) {
                return Err(Error::Domain(format!("scene position {p:?} outside area")));
            }
        }
        if self.time_offset.abs() > time_offset_bound {
            return Err(Error::Domain("time offset outside its prior support".into()));
        }
        if let Some(s) = &self.supports {
            let kr = s.s_r.iter().skip(1).filter(|b| **b).count();
            let kc = s.s_c.iter().skip(1).filter(|b| **b).count();
            if kr != self.targets.len() || kc != self.scatterers.len() {
                return Err(Error::Domain("supports disagree with entity counts".into()));
            }
        }
        Ok(())
    }
}

/// Sensing parameters: dynamic grid, user position and time offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingParams<T> {
    pub grid: Vec<Position<T>>,
    pub user: Position<T>,
    pub time_offset: T,
}

impl<T: Real> SensingParams<T> {
    pub fn new(grid: Vec<Position<T>>, user: Position<T>, time_offset: T) -> Self {
        Self {
            grid,
            user,
            time_offset,
        }
    }

    /// Number of grid points `Q` (the basis has `Q + 1` columns).
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Position behind basis column `q` (column 0 is the user).
    pub fn column_position(&self, q: usize) -> &Position<T> {
        if q == 0 {
            &self.user
        } else {
            &self.grid[q - 1]
        }
    }

    /// Largest parameter change, with the time offset converted to meters.
    pub fn max_change(&self, other: &Self) -> T {
        let c = crate::geometry::speed_of_light::<T>();
        self.grid
            .iter()
            .zip(&other.grid)
            .map(|(a, b)| a.distance(b))
            .fold(self.user.distance(&other.user), T::max)
            .max((self.time_offset - other.time_offset).abs() * c)
    }
}

/// Downlink/uplink pilots on the pilot subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet<T> {
    /// Unit-norm downlink beams, one per pilot subcarrier.
    pub downlink: Vec<Vec<Cx<T>>>,
    /// Unit-modulus uplink symbols.
    pub uplink: Vec<Cx<T>>,
    /// Subcarrier indices `n`, strictly increasing.
    pub subcarriers: Vec<usize>,
    /// Subcarrier spacing in Hz.
    pub f0: T,
}

impl<T: Real> PilotSet<T> {
    pub fn len(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subcarriers.is_empty()
    }

    pub fn validate(&self, antennas: usize, total_subcarriers: usize) -> Result<()> {
        let n = self.len();
        if self.downlink.len() != n || self.uplink.len() != n {
            return Err(Error::Dimension("pilot vectors disagree in count".into()));
        }
        if self.subcarriers.windows(2).any(|w| w[0] >= w[1])
            || self.subcarriers.iter().any(|&k| k < 1 || k > total_subcarriers)
        {
            return Err(Error::Config("pilot subcarriers must increase within [1, N]".into()));
        }
        let tol = T::lit(1e-6);
        for v in &self.downlink {
            let e: T = v.iter().map(|z| z.norm_sqr()).sum();
            if v.len() != antennas || (e - T::one()).abs() > tol {
                return Err(Error::Config("downlink pilot must be unit norm".into()));
            }
        }
        if self.uplink.iter().any(|u| (u.norm() - T::one()).abs() > tol) {
            return Err(Error::Config("uplink pilot must be unit modulus".into()));
        }
        Ok(())
    }

    /// `-2 pi n f0` for each pilot subcarrier: the delay-to-phase slope.
    pub fn phase_slopes(&self) -> Vec<T> {
        self.subcarriers
            .iter()
            .map(|&n| -T::TAU() * T::from_usize(n).unwrap() * self.f0)
            .collect()
    }
}

/// Pilot subcarrier indices `1, 1 + spacing, ...` within `[1, total]`.
pub fn pilot_subcarriers(total: usize, spacing: usize) -> Result<Vec<usize>> {
    if spacing == 0 || total < spacing {
        return Err(Error::Config("pilot spacing must be in [1, N]".into()));
    }
    Ok((0..total / spacing).map(|k| 1 + k * spacing).collect())
}

/// Draws unit-norm complex-Gaussian downlink beams and QPSK uplink symbols.
pub fn generate_pilots<T: Real, R: rand::Rng>(
    antennas: usize,
    subcarriers: Vec<usize>,
    f0: T,
    rng: &mut R,
) -> PilotSet<T> {
    let downlink = subcarriers
        .iter()
        .map(|_| {
            let v: Vec<Cx<T>> = (0..antennas).map(|_| complex_normal(rng, T::one())).collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            v.into_iter().map(|z| z.unscale(norm)).collect()
        })
        .collect();
    let uplink = subcarriers
        .iter()
        .map(|_| {
            let k: u32 = rng.random_range(0..4);
            cis(T::FRAC_PI_4() * T::from_u32(2 * k + 1).unwrap())
        })
        .collect();
    PilotSet {
        downlink,
        uplink,
        subcarriers,
        f0,
    }
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<T: Real, R: rand::Rng>(rng: &mut R, var: T) -> Cx<T> {
    let s = (var.to_f64_lossy() / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

#[inline]
pub(crate) fn delay_phase<T: Real>(n: usize, f0: T, tau: T) -> Cx<T> {
    cis(-T::TAU() * T::from_usize(n).unwrap() * f0 * tau)
}

/// Radar channel `H_n = sum_k x_k e^{-j2pi n f0 tau_k} a(theta_k) a(theta_k)^T`,
/// the user being the `k = 0` term.
pub fn radar_channel_matrix<T: Real>(
    sys: &SystemGeometry<T>,
    scene: &Scene<T>,
    n: usize,
    f0: T,
) -> CMatrix<T> {
    let m = sys.antennas();
    let mut h = CMatrix::zeros(m, m);
    let user = Entity {
        position: scene.user,
        gain: scene.user_radar_gain,
    };
    for e in std::iter::once(&user).chain(&scene.targets) {
        if e.gain == czero() {
            continue;
        }
        let a = sys.atom(&e.position);
        let coef = e.gain * delay_phase(n, f0, radar_delay(&sys.bs, &e.position));
        for r in 0..m {
            let ar = coef * a[r];
            for (c, ac) in a.iter().enumerate() {
                h[(r, c)] += ar * *ac;
            }
        }
    }
    h
}

/// Uplink channel `h_n = sum_l x_l e^{-j2pi n f0 (tau_l + tau_o)} a(theta_l)`,
/// the line-of-sight path being `l = 0`.
pub fn comm_channel_vector<T: Real>(
    sys: &SystemGeometry<T>,
    scene: &Scene<T>,
    n: usize,
    f0: T,
) -> Vec<Cx<T>> {
    let m = sys.antennas();
    let mut h = vec![czero(); m];
    let los = Entity {
        position: scene.user,
        gain: scene.los_gain,
    };
    for (l, e) in std::iter::once(&los).chain(&scene.scatterers).enumerate() {
        if e.gain == czero() {
            continue;
        }
        let rel = if l == 0 {
            T::zero()
        } else {
            comm_relative_delay(&sys.bs, &e.position, &scene.user)
        };
        let coef = e.gain * delay_phase(n, f0, rel + scene.time_offset);
        for (hm, am) in h.iter_mut().zip(sys.atom(&e.position)) {
            *hm += coef * am;
        }
    }
    h
}

/// Location-domain basis `A(r, p_u)`: column 0 points at the user, column
/// `q` at grid point `r_q`.
pub fn sparse_basis<T: Real>(sys: &SystemGeometry<T>, xi: &SensingParams<T>) -> CMatrix<T> {
    let cols: Vec<Vec<Cx<T>>> = (0..=xi.grid_len())
        .map(|q| sys.atom(xi.column_position(q)))
        .collect();
    CMatrix::from_fn(sys.antennas(), cols.len(), |m, q| cols[q][m])
}

/// Diagonals of `D_n^r` and `D_n^c`.
pub fn delay_diagonals<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    n: usize,
    f0: T,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let radar = (0..=xi.grid_len())
        .map(|q| delay_phase(n, f0, radar_delay(&sys.bs, xi.column_position(q))))
        .collect();
    let comm = (0..=xi.grid_len())
        .map(|q| {
            let rel = if q == 0 {
                T::zero()
            } else {
                comm_relative_delay(&sys.bs, &xi.grid[q - 1], &xi.user)
            };
            delay_phase(n, f0, rel + xi.time_offset)
        })
        .collect();
    (radar, comm)
}

/// Stacked noise-free signals `(stack H_n v_n, stack h_n u_n)`.
pub fn clean_signals<T: Real>(
    sys: &SystemGeometry<T>,
    scene: &Scene<T>,
    pilots: &PilotSet<T>,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let m = sys.antennas();
    let mut yr = Vec::with_capacity(m * pilots.len());
    let mut yc = Vec::with_capacity(m * pilots.len());
    for (k, &n) in pilots.subcarriers.iter().enumerate() {
        let h = radar_channel_matrix(sys, scene, n, pilots.f0);
        yr.extend((0..m).map(|r| dot(h.row(r), &pilots.downlink[k])));
        let u = pilots.uplink[k];
        yc.extend(comm_channel_vector(sys, scene, n, pilots.f0).into_iter().map(|z| z * u));
    }
    (yr, yc)
}

/// Radar echo and uplink observations, each stacked over pilot subcarriers
/// (subcarrier-major, antenna-minor).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub y_r: Vec<Cx<T>>,
    pub y_c: Vec<Cx<T>>,
    pub noise_var_r: T,
    pub noise_var_c: T,
}

impl<T: Real> Observation<T> {
    pub fn validate(&self, antennas: usize, pilots: usize) -> Result<()> {
        let len = antennas * pilots;
        if self.y_r.len() != len || self.y_c.len() != len {
            return Err(Error::Dimension(format!(
                "observation lengths {} / {} vs M*Np = {len}",
                self.y_r.len(),
                self.y_c.len()
            )));
        }
        if !(self.noise_var_r > T::zero() && self.noise_var_c > T::zero()) {
            return Err(Error::Domain("noise variances must be positive".into()));
        }
        Ok(())
    }
}

/// Adds circular complex Gaussian noise of the given variances to the clean
/// signals. Deterministic for a fixed `seed`.
pub fn add_noise<T: Real>(
    clean: (Vec<Cx<T>>, Vec<Cx<T>>),
    noise_vars: (T, T),
    seed: u64,
) -> Observation<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y_r, mut y_c) = clean;
    for z in y_r.iter_mut() {
        *z += complex_normal(&mut rng, noise_vars.0);
    }
    for z in y_c.iter_mut() {
        *z += complex_normal(&mut rng, noise_vars.1);
    }
    Observation {
        y_r,
        y_c,
        noise_var_r: noise_vars.0,
        noise_var_c: noise_vars.1,
    }
}

pub fn synthesize_observation<T: Real>(
    sys: &SystemGeometry<T>,
    scene: &Scene<T>,
    pilots: &PilotSet<T>,
    noise_vars: (T, T),
    seed: u64,
) -> Observation<T> {
    add_noise(clean_signals(sys, scene, pilots), noise_vars, seed)
}

/// Noise-free observation whose recorded noise variances are `assumed_vars`
/// (what the estimator is told), for exact-recovery experiments.
pub fn noiseless_observation<T: Real>(
    sys: &SystemGeometry<T>,
    scene: &Scene<T>,
    pilots: &PilotSet<T>,
    assumed_vars: (T, T),
) -> Observation<T> {
    let (y_r, y_c) = clean_signals(sys, scene, pilots);
    Observation {
        y_r,
        y_c,
        noise_var_r: assumed_vars.0,
        noise_var_c: assumed_vars.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{steering, ArrayGeometry, SPEED_OF_LIGHT};
    use approx::assert_abs_diff_eq;

    fn sys(m: usize) -> SystemGeometry<f64> {
        SystemGeometry::new(Position::new(-50.0, 0.0), ArrayGeometry::new(m).unwrap())
    }

    fn one(x: f64, y: f64) -> Cx<f64> {
        Complex::new(x, y)
    }

    #[test]
    fn empty_scene_gives_zero_channels() {
        let s = sys(4);
        let scene = Scene::empty(Position::new(50.0, 0.0));
        assert!(radar_channel_matrix(&s, &scene, 3, 30e3).frobenius_norm_sqr() == 0.0);
        assert!(comm_channel_vector(&s, &scene, 3, 30e3).iter().all(|z| *z == czero()));
    }

    #[test]
    fn single_target_radar_matrix() {
        let s = sys(2);
        let mut scene = Scene::empty(Position::new(50.0, 0.0));
        let x = one(0.3, -1.1);
        scene.targets.push(Entity {
            position: Position::new(0.0, 0.0),
            gain: x,
        });
        let h0 = radar_channel_matrix(&s, &scene, 0, 30e3);
        for z in h0.as_slice() {
            assert_abs_diff_eq!((*z - x / 2.0).norm(), 0.0, epsilon = 1e-15);
        }
        let h1 = radar_channel_matrix(&s, &scene, 1, 30e3);
        let phase = cis(-std::f64::consts::TAU * 30e3 * 100.0 / SPEED_OF_LIGHT);
        for z in h1.as_slice() {
            assert_abs_diff_eq!((*z - x * phase / 2.0).norm(), 0.0, epsilon = 1e-15);
        }
        assert_eq!(h1, h1.transpose());
    }

    #[test]
    fn comm_vector_los_and_nlos() {
        let s = sys(8);
        let user = Position::new(50.0, 0.0);
        let mut scene = Scene::empty(user);
        scene.los_gain = one(0.7, 0.2);
        let a_u = steering(0.0, &s.array);
        let h = comm_channel_vector(&s, &scene, 17, 30e3);
        for (hm, am) in h.iter().zip(&a_u) {
            assert_abs_diff_eq!((*hm - scene.los_gain * *am).norm(), 0.0, epsilon = 1e-15);
        }
        scene.time_offset = 40e-9;
        let rot = cis(-std::f64::consts::TAU * 17.0 * 30e3 * 40e-9);
        let h2 = comm_channel_vector(&s, &scene, 17, 30e3);
        for (a, b) in h2.iter().zip(&h) {
            assert_abs_diff_eq!((*a - *b * rot).norm(), 0.0, epsilon = 1e-14);
        }
        let mut nlos = Scene::empty(user);
        nlos.scatterers.push(Entity {
            position: Position::new(0.0, 50.0),
            gain: one(1.0, 0.0),
        });
        let tau = (100.0 * 2f64.sqrt() - 100.0) / SPEED_OF_LIGHT;
        let expect = cis(-std::f64::consts::TAU * 5.0 * 30e3 * tau);
        let a45 = steering(std::f64::consts::FRAC_PI_4, &s.array);
        for (hm, am) in comm_channel_vector(&s, &nlos, 5, 30e3).iter().zip(&a45) {
            assert_abs_diff_eq!((*hm - expect * *am).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn basis_and_diagonals() {
        let s = sys(6);
        let xi = SensingParams::new(
            vec![Position::new(0.0, 0.0), Position::new(20.0, 0.0)],
            Position::new(50.0, 0.0),
            0.0,
        );
        let a = sparse_basis(&s, &xi);
        assert_eq!((a.rows(), a.cols()), (6, 3));
        for q in 0..3 {
            let col = a.column(q);
            for (x, y) in col.iter().zip(a.column(0).iter()) {
                assert_abs_diff_eq!((*x - *y).norm(), 0.0, epsilon = 1e-15);
            }
        }
        let (dr, dc) = delay_diagonals(&s, &xi, 0, 30e3);
        assert!(dr.iter().chain(&dc).all(|z| (*z - one(1.0, 0.0)).norm() < 1e-15));
        let (dr, dc) = delay_diagonals(&s, &xi, 29, 30e3);
        assert!(dr.iter().chain(&dc).all(|z| (z.norm() - 1.0).abs() < 1e-14));
        // grid points on the bs-user segment: zero relative delay, tau_o = 0
        assert!(dc.iter().all(|z| (*z - one(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn pilots_are_valid_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sc = pilot_subcarriers(1024, 32).unwrap();
        assert_eq!(sc.len(), 32);
        let p: PilotSet<f64> = generate_pilots(8, sc.clone(), 30e3, &mut rng);
        p.validate(8, 1024).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p, generate_pilots(8, sc, 30e3, &mut rng2));
    }

    #[test]
    fn synthesis_is_deterministic_and_noise_free_when_asked() {
        let s = sys(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pilots: PilotSet<f64> = generate_pilots(4, vec![1, 9, 17], 30e3, &mut rng);
        let empty = Scene::empty(Position::new(50.0, 0.0));
        let obs = synthesize_observation(&s, &empty, &pilots, (0.0, 0.0), 3);
        assert!(obs.y_r.iter().chain(&obs.y_c).all(|z| *z == czero()));
        let a = synthesize_observation(&s, &empty, &pilots, (0.1, 0.2), 11);
        let b = synthesize_observation(&s, &empty, &pilots, (0.1, 0.2), 11);
        assert_eq!(a, b);
        assert_ne!(a, synthesize_observation(&s, &empty, &pilots, (0.1, 0.2), 12));
    }
}
