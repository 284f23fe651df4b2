//! Planar geometry of the cell: positions, angles of arrival, propagation
//! delays, ULA array responses and the uniform position grid.
//!
//! Angles are measured anticlockwise from the x-axis as seen from an anchor
//! (normally the base station). The array is a half-wavelength ULA, so the
//! response only depends on `sin(theta)`; most internal code works with that
//! sine directly instead of the angle.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cis, Cx, Real};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[inline]
pub fn speed_of_light<T: Real>() -> T {
    T::lit(SPEED_OF_LIGHT)
}

/// 2-D coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Position<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Self::new(T::lit(x), T::lit(y))
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector pointing from `from` to `self`; zero when coincident.
    pub fn unit_from(&self, from: &Self) -> (T, T) {
        let d = self.distance(from);
        if d > T::zero() {
            ((self.x - from.x) / d, (self.y - from.y) / d)
        } else {
            (T::zero(), T::zero())
        }
    }

    pub fn offset(&self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area<T> {
    pub x_min: T,
    pub y_min: T,
    pub width: T,
    pub height: T,
}

impl<T: Real> Area<T> {
    pub fn new(x_min: T, y_min: T, width: T, height: T) -> Self {
        Self {
            x_min,
            y_min,
            width,
            height,
        }
    }

    /// Square of side `side` centered on the origin.
    pub fn centered_square(side: T) -> Self {
        let half = side / T::lit(2.0);
        Self::new(-half, -half, side, side)
    }

    pub fn x_max(&self) -> T {
        self.x_min + self.width
    }

    pub fn y_max(&self) -> T {
        self.y_min + self.height
    }

    pub fn contains(&self, p: &Position<T>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max() && p.y >= self.y_min && p.y <= self.y_max()
    }

    /// Euclidean projection onto the rectangle.
    pub fn project(&self, p: &Position<T>) -> Position<T> {
        Position::new(
            p.x.max(self.x_min).min(self.x_max()),
            p.y.max(self.y_min).min(self.y_max()),
        )
    }
}

/// Half-wavelength uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    antennas: usize,
}

impl ArrayGeometry {
    pub fn new(antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::Config("array needs at least one antenna".into()));
        }
        Ok(Self { antennas })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// Uniform grid over an area with square cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub area: Area<T>,
    pub resolution: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(area: Area<T>, resolution: T) -> Self {
        Self { area, resolution }
    }

    /// Cell counts along x and y, or a configuration error when the
    /// resolution does not tile the area.
    pub fn dims(&self) -> Result<(usize, usize)> {
        if !(self.resolution > T::zero()) {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        let count = |len: T, axis: &str| -> Result<usize> {
            let q = len / self.resolution;
            let r = q.round();
            if r < T::one() || (q - r).abs() > T::lit(1e-9) * r.max(T::one()) {
                return Err(Error::Config(format!(
                    "resolution {} does not divide the {axis} extent {}",
                    self.resolution, len
                )));
            }
            Ok(r.to_usize().unwrap_or(0))
        };
        Ok((
            count(self.area.width, "x")?,
            count(self.area.height, "y")?,
        ))
    }

    /// Number of grid points `Q`.
    pub fn count(&self) -> Result<usize> {
        self.dims().map(|(nx, ny)| nx * ny)
    }

    /// Center of the cell containing `p` (clamped to the area).
    pub fn nearest_point(&self, p: &Position<T>) -> Result<(usize, Position<T>)> {
        let (nx, ny) = self.dims()?;
        let cell = |v: T, lo: T, n: usize| -> usize {
            let i = ((v - lo) / self.resolution).floor().to_isize().unwrap_or(0);
            i.clamp(0, n as isize - 1) as usize
        };
        let i = cell(p.x, self.area.x_min, nx);
        let j = cell(p.y, self.area.y_min, ny);
        Ok((j * nx + i, self.cell_center(i, j)))
    }

    fn cell_center(&self, i: usize, j: usize) -> Position<T> {
        let half = T::lit(0.5);
        Position::new(
            self.area.x_min + (T::from_usize(i).unwrap() + half) * self.resolution,
            self.area.y_min + (T::from_usize(j).unwrap() + half) * self.resolution,
        )
    }
}

/// Cell-center lattice of `spec`, row-major (x varies fastest).
pub fn uniform_grid<T: Real>(spec: &GridSpec<T>) -> Result<Vec<Position<T>>> {
    let (nx, ny) = spec.dims()?;
    let mut points = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            points.push(spec.cell_center(i, j));
        }
    }
    Ok(points)
}

/// Angle of arrival of `point` seen from `anchor`, anticlockwise from the
/// x-axis, in `(-pi/2, 3pi/2]`.
pub fn aoa<T: Real>(anchor: &Position<T>, point: &Position<T>) -> Result<T> {
    let dx = point.x - anchor.x;
    let dy = point.y - anchor.y;
    if dx == T::zero() && dy == T::zero() {
        return Err(Error::Domain("angle of arrival of coincident points".into()));
    }
    let theta = dy.atan2(dx);
    if theta <= -T::FRAC_PI_2() {
        Ok(theta + T::TAU())
    } else {
        Ok(theta)
    }
}

/// `sin` of the angle of arrival, defined as 0 for coincident points.
#[inline]
pub fn sin_aoa<T: Real>(anchor: &Position<T>, point: &Position<T>) -> T {
    let rho = point.distance(anchor);
    if rho > T::zero() {
        (point.y - anchor.y) / rho
    } else {
        T::zero()
    }
}

/// Gradient of [`sin_aoa`] with respect to `point`.
#[inline]
pub fn sin_aoa_gradient<T: Real>(anchor: &Position<T>, point: &Position<T>) -> (T, T) {
    let dx = point.x - anchor.x;
    let dy = point.y - anchor.y;
    let rho = dx.hypot(dy);
    if rho > T::zero() {
        let rho3 = rho * rho * rho;
        (-dx * dy / rho3, dx * dx / rho3)
    } else {
        (T::zero(), T::zero())
    }
}

/// Round-trip delay `2 |bs - point| / c`.
pub fn radar_delay<T: Real>(bs: &Position<T>, point: &Position<T>) -> T {
    T::lit(2.0) * bs.distance(point) / speed_of_light()
}

/// Excess delay of the bounce path bs-scatterer-user over the direct path.
pub fn comm_relative_delay<T: Real>(
    bs: &Position<T>,
    scatterer: &Position<T>,
    user: &Position<T>,
) -> T {
    let excess = bs.distance(scatterer) + user.distance(scatterer) - bs.distance(user);
    (excess / speed_of_light()).max(T::zero())
}

/// Gradients of [`comm_relative_delay`] with respect to the scatterer and the
/// user position, as `((d/dsx, d/dsy), (d/dux, d/duy))`.
pub fn comm_relative_delay_gradients<T: Real>(
    bs: &Position<T>,
    scatterer: &Position<T>,
    user: &Position<T>,
) -> ((T, T), (T, T)) {
    let c = speed_of_light::<T>();
    let (sbx, sby) = scatterer.unit_from(bs);
    let (sux, suy) = scatterer.unit_from(user);
    let (usx, usy) = user.unit_from(scatterer);
    let (ubx, uby) = user.unit_from(bs);
    (
        ((sbx + sux) / c, (sby + suy) / c),
        ((usx - ubx) / c, (usy - uby) / c),
    )
}

/// Gradient of [`radar_delay`] with respect to `point`.
pub fn radar_delay_gradient<T: Real>(bs: &Position<T>, point: &Position<T>) -> (T, T) {
    let (ux, uy) = point.unit_from(bs);
    let k = T::lit(2.0) / speed_of_light::<T>();
    (k * ux, k * uy)
}

/// ULA response `a(theta)`: entry `m` is `e^{j m pi sin(theta)} / sqrt(M)`.
pub fn steering<T: Real>(theta: T, geom: &ArrayGeometry) -> Vec<Cx<T>> {
    steering_from_sin(theta.sin(), geom.antennas())
}

/// ULA response parameterized by `sin(theta)`.
pub fn steering_from_sin<T: Real>(sin_theta: T, antennas: usize) -> Vec<Cx<T>> {
    let norm = T::one() / T::from_usize(antennas).unwrap().sqrt();
    let step = T::PI() * sin_theta;
    (0..antennas)
        .map(|m| cis(step * T::from_usize(m).unwrap()).scale(norm))
        .collect()
}

/// Derivative of [`steering_from_sin`] with respect to `sin(theta)`.
pub fn steering_sin_derivative<T: Real>(atom: &[Cx<T>]) -> Vec<Cx<T>> {
    atom.iter()
        .enumerate()
        .map(|(m, a)| *a * Complex::new(T::zero(), T::PI() * T::from_usize(m).unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Position<f64> {
        Position::new(x, y)
    }

    #[test]
    fn aoa_cardinal_directions() {
        let bs = p(-50.0, 0.0);
        assert_abs_diff_eq!(aoa(&bs, &p(0.0, 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(aoa(&bs, &p(-100.0, 0.0)).unwrap(), std::f64::consts::PI);
        assert_abs_diff_eq!(
            aoa(&bs, &p(0.0, 50.0)).unwrap(),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-15
        );
        assert!(matches!(aoa(&bs, &bs), Err(Error::Domain(_))));
    }

    #[test]
    fn aoa_matches_arctan_plus_indicator_off_axis() {
        let bs = p(-50.0, 0.0);
        for pt in [p(-80.0, -10.0), p(-80.0, 20.0), p(30.0, -40.0), p(0.0, 7.0)] {
            let dx = pt.x - bs.x;
            let reference = ((pt.y - bs.y) / dx).atan() + if dx < 0.0 { std::f64::consts::PI } else { 0.0 };
            assert_abs_diff_eq!(aoa(&bs, &pt).unwrap(), reference, epsilon = 1e-12);
        }
    }

    #[test]
    fn delays() {
        let bs = p(-50.0, 0.0);
        assert_eq!(radar_delay(&bs, &bs), 0.0);
        assert_abs_diff_eq!(radar_delay(&bs, &p(0.0, 0.0)), 100.0 / SPEED_OF_LIGHT);
        assert_abs_diff_eq!(radar_delay(&bs, &p(0.0, 0.0)), 333.564e-9, epsilon = 1e-12);
        assert_abs_diff_eq!(radar_delay(&bs, &p(-50.0, 30.0)), 200.138e-9, epsilon = 1e-12);
        let user = p(50.0, 0.0);
        assert_eq!(comm_relative_delay(&bs, &user, &user), 0.0);
        assert_abs_diff_eq!(comm_relative_delay(&bs, &p(10.0, 0.0), &user), 0.0, epsilon = 1e-22);
        let d = comm_relative_delay(&bs, &p(0.0, 50.0), &user);
        assert_abs_diff_eq!(d, (100.0 * 2f64.sqrt() - 100.0) / SPEED_OF_LIGHT, epsilon = 1e-20);
        assert_abs_diff_eq!(d, 138.16e-9, epsilon = 1e-11);
    }

    #[test]
    fn steering_examples() {
        let g4 = ArrayGeometry::new(4).unwrap();
        for (a, e) in steering(0.0, &g4).iter().zip([1.0, 1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(a.re, e / 2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
        for (a, e) in steering(std::f64::consts::FRAC_PI_2, &g4).iter().zip([1.0, -1.0, 1.0, -1.0]) {
            assert_abs_diff_eq!(a.re, e / 2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
        let g1 = ArrayGeometry::new(1).unwrap();
        assert_eq!(steering(1.234, &g1), vec![Complex::new(1.0, 0.0)]);
        assert!(ArrayGeometry::new(0).is_err());
    }

    #[test]
    fn grid_examples() {
        let spec = GridSpec::new(Area::centered_square(100.0), 5.0);
        let g = uniform_grid(&spec).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g[0], p(-47.5, -47.5));
        assert_eq!(g[1], p(-42.5, -47.5));
        assert_eq!(g[20], p(-47.5, -42.5));
        let one = uniform_grid(&GridSpec::new(Area::new(0.0, 0.0, 10.0, 10.0), 10.0)).unwrap();
        assert_eq!(one, vec![p(5.0, 5.0)]);
        let bad = GridSpec::new(Area::centered_square(100.0), 7.0);
        assert!(matches!(uniform_grid(&bad), Err(Error::Config(_))));
        let (q, c) = spec.nearest_point(&p(-46.0, -46.0)).unwrap();
        assert_eq!((q, c), (0, p(-47.5, -47.5)));
    }

    #[test]
    fn works_in_single_precision() {
        let a = steering_from_sin(0.3f32, 8);
        let n: f32 = a.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-6);
        let d = radar_delay(&Position::<f32>::new(-50.0, 0.0), &Position::new(0.0, 0.0));
        assert!((d - 333.564e-9).abs() < 1e-11);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let bs = p(-50.0, 0.0);
        let user = p(48.0, 1.5);
        let s = p(3.0, 21.0);
        let h = 1e-5;
        let (gs, gu) = comm_relative_delay_gradients(&bs, &s, &user);
        let fd_sx = (comm_relative_delay(&bs, &s.offset(h, 0.0), &user)
            - comm_relative_delay(&bs, &s.offset(-h, 0.0), &user))
            / (2.0 * h);
        let fd_uy = (comm_relative_delay(&bs, &s, &user.offset(0.0, h))
            - comm_relative_delay(&bs, &s, &user.offset(0.0, -h)))
            / (2.0 * h);
        assert_abs_diff_eq!(gs.0 * 1e9, fd_sx * 1e9, epsilon = 1e-6);
        assert_abs_diff_eq!(gu.1 * 1e9, fd_uy * 1e9, epsilon = 1e-6);
        let (gx, gy) = sin_aoa_gradient(&bs, &s);
        let fdx = (sin_aoa(&bs, &s.offset(h, 0.0)) - sin_aoa(&bs, &s.offset(-h, 0.0))) / (2.0 * h);
        let fdy = (sin_aoa(&bs, &s.offset(0.0, h)) - sin_aoa(&bs, &s.offset(0.0, -h))) / (2.0 * h);
        assert_abs_diff_eq!(gx, fdx, epsilon = 1e-9);
        assert_abs_diff_eq!(gy, fdy, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn steering_is_unit_norm(theta in -10.0f64..10.0, m in 1usize..80) {
            let g = ArrayGeometry::new(m).unwrap();
            let n: f64 = steering(theta, &g).iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn aoa_rotates_with_point(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0,
            r in 1.0f64..80.0, phi0 in 0.0f64..std::f64::consts::TAU, dphi in -3.0f64..3.0,
        ) {
            let anchor = p(ax, ay);
            let a = p(ax + r * phi0.cos(), ay + r * phi0.sin());
            let b = p(ax + r * (phi0 + dphi).cos(), ay + r * (phi0 + dphi).sin());
            let diff = aoa(&anchor, &b).unwrap() - aoa(&anchor, &a).unwrap() - dphi;
            let wrapped = diff - std::f64::consts::TAU * (diff / std::f64::consts::TAU).round();
            prop_assert!(wrapped.abs() < 1e-9);
        }

        #[test]
        fn relative_delay_nonnegative(
            sx in -50.0f64..50.0, sy in -50.0f64..50.0,
            ux in -50.0f64..50.0, uy in -50.0f64..50.0,
        ) {
            let d = comm_relative_delay(&p(-50.0, 0.0), &p(sx, sy), &p(ux, uy));
            prop_assert!(d >= 0.0);
        }

        #[test]
        fn relative_delay_vanishes_on_segment(t in 0.0f64..1.0, ux in -40.0f64..50.0, uy in -50.0f64..50.0) {
            let bs = p(-50.0, 0.0);
            let user = p(ux, uy);
            let s = p(bs.x + t * (user.x - bs.x), bs.y + t * (user.y - bs.y));
            prop_assert!(comm_relative_delay(&bs, &s, &user) * SPEED_OF_LIGHT < 1e-9);
        }

        #[test]
        fn radar_delay_is_linear_in_range(dx in -60.0f64..60.0, dy in -60.0f64..60.0) {
            let bs = p(-50.0, 0.0);
            let d1 = radar_delay(&bs, &p(bs.x + dx, bs.y + dy));
            let d2 = radar_delay(&bs, &p(bs.x + 2.0 * dx, bs.y + 2.0 * dy));
            prop_assert!((d2 - 2.0 * d1).abs() <= 1e-12 * d1.abs().max(1e-12));
        }
    }
}
