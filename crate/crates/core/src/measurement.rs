//! Measurement matrices `Phi^r(xi)` and `Phi^c(xi)`.
//!
//! Every column of either matrix is a Kronecker product `w_q (x) a_q` of a
//! per-subcarrier weight vector (length `N_p`) and an array atom (length
//! `M`), stacked subcarrier-major. [`KhatriRao`] keeps the two factors
//! instead of the dense `(M N_p) x (Q+1)` matrix, so products and the Gram
//! matrix cost `O((Q+1)(M + N_p))` per column rather than `O(M N_p)`.
//!
//! * communication: `w_q[n] = u_n D_n^c[q]`
//! * radar: `w_q[n] = (a_q^T v_n) D_n^r[q]`, which is the column of the
//!   Kronecker construction whose transmit and receive responses belong to
//!   the same grid point.

use crate::channel::{delay_phase, PilotSet, SensingParams, SystemGeometry};
use crate::geometry::{comm_relative_delay, radar_delay, Position};
use crate::linalg::{dot, dotc, CMatrix, LinearOperator};
use crate::scalar::{czero, Cx, Real};

/// Column-wise Kronecker (Khatri-Rao) product operator.
#[derive(Debug, Clone, PartialEq)]
pub struct KhatriRao<T> {
    /// Row `q` holds `w_q`.
    weights: CMatrix<T>,
    /// Row `q` holds `a_q`.
    atoms: CMatrix<T>,
}

impl<T: Real> KhatriRao<T> {
    pub fn new(weights: CMatrix<T>, atoms: CMatrix<T>) -> Self {
        assert_eq!(weights.rows(), atoms.rows(), "column count mismatch");
        Self { weights, atoms }
    }

    pub fn weights(&self) -> &CMatrix<T> {
        &self.weights
    }

    pub fn atoms(&self) -> &CMatrix<T> {
        &self.atoms
    }

    pub fn pilots(&self) -> usize {
        self.weights.cols()
    }

    pub fn antennas(&self) -> usize {
        self.atoms.cols()
    }

    /// Replaces column `q`.
    pub fn set_column(&mut self, q: usize, weight: &[Cx<T>], atom: &[Cx<T>]) {
        self.weights.row_mut(q).copy_from_slice(weight);
        self.atoms.row_mut(q).copy_from_slice(atom);
    }

    /// Hermitian Gram factors `(W^H W, A^H A)`: the Gram matrix of the
    /// operator is their elementwise product.
    pub fn gram_factors(&self) -> (CMatrix<T>, CMatrix<T>) {
        (row_gram(&self.weights), row_gram(&self.atoms))
    }
}

/// `G[i][j] = rows[i]^H rows[j]`.
fn row_gram<T: Real>(rows: &CMatrix<T>) -> CMatrix<T> {
    let n = rows.rows();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dotc(rows.row(i), rows.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

impl<T: Real> LinearOperator<T> for KhatriRao<T> {
    fn nrows(&self) -> usize {
        self.pilots() * self.antennas()
    }

    fn ncols(&self) -> usize {
        self.weights.rows()
    }

    fn apply(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(x.len(), self.ncols(), "apply dimension");
        let m = self.antennas();
        let mut y = vec![czero(); self.nrows()];
        for (q, xq) in x.iter().enumerate() {
            if xq.re == T::zero() && xq.im == T::zero() {
                continue;
            }
            let atom = self.atoms.row(q);
            for (n, w) in self.weights.row(q).iter().enumerate() {
                let c = *xq * *w;
                for (yv, a) in y[n * m..(n + 1) * m].iter_mut().zip(atom) {
                    *yv += c * *a;
                }
            }
        }
        y
    }

    fn adjoint_apply(&self, y: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(y.len(), self.nrows(), "adjoint dimension");
        let m = self.antennas();
        (0..self.ncols())
            .map(|q| {
                let atom = self.atoms.row(q);
                self.weights
                    .row(q)
                    .iter()
                    .enumerate()
                    .fold(czero(), |acc, (n, w)| acc + w.conj() * dotc(atom, &y[n * m..(n + 1) * m]))
            })
            .collect()
    }

    fn gram(&self) -> CMatrix<T> {
        let (ww, aa) = self.gram_factors();
        let n = self.ncols();
        CMatrix::from_fn(n, n, |i, j| ww[(i, j)] * aa[(i, j)])
    }

    fn column(&self, q: usize) -> Vec<Cx<T>> {
        let atom = self.atoms.row(q);
        self.weights
            .row(q)
            .iter()
            .flat_map(|w| atom.iter().map(move |a| *w * *a))
            .collect()
    }

    fn to_dense(&self) -> CMatrix<T> {
        let cols: Vec<Vec<Cx<T>>> = (0..self.ncols()).map(|q| self.column(q)).collect();
        CMatrix::from_fn(self.nrows(), self.ncols(), |r, q| cols[q][r])
    }
}

/// Factors `(w, a)` of the radar column for a point at `pos`.
pub fn radar_column<T: Real>(
    sys: &SystemGeometry<T>,
    pos: &Position<T>,
    pilots: &PilotSet<T>,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let atom = sys.atom(pos);
    let tau = radar_delay(&sys.bs, pos);
    let w = pilots
        .subcarriers
        .iter()
        .zip(&pilots.downlink)
        .map(|(&n, v)| dot(&atom, v) * delay_phase(n, pilots.f0, tau))
        .collect();
    (w, atom)
}

/// Factors of the communication column for a path at `pos` with total
/// delay `delay` (relative delay plus time offset).
pub fn comm_column<T: Real>(
    sys: &SystemGeometry<T>,
    pos: &Position<T>,
    delay: T,
    pilots: &PilotSet<T>,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let w = pilots
        .subcarriers
        .iter()
        .zip(&pilots.uplink)
        .map(|(&n, u)| *u * delay_phase(n, pilots.f0, delay))
        .collect();
    (w, sys.atom(pos))
}

/// Total communication delay of column `q`.
pub fn comm_column_delay<T: Real>(sys: &SystemGeometry<T>, xi: &SensingParams<T>, q: usize) -> T {
    let rel = if q == 0 {
        T::zero()
    } else {
        comm_relative_delay(&sys.bs, &xi.grid[q - 1], &xi.user)
    };
    rel + xi.time_offset
}

fn build<T: Real>(
    q1: usize,
    pilots: usize,
    antennas: usize,
    column: impl Fn(usize) -> (Vec<Cx<T>>, Vec<Cx<T>>),
) -> KhatriRao<T> {
    let mut op = KhatriRao::new(CMatrix::zeros(q1, pilots), CMatrix::zeros(q1, antennas));
    for q in 0..q1 {
        let (w, a) = column(q);
        op.set_column(q, &w, &a);
    }
    op
}

/// Structured communication measurement operator.
pub fn comm_operator<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    pilots: &PilotSet<T>,
) -> KhatriRao<T> {
    build(xi.grid_len() + 1, pilots.len(), sys.antennas(), |q| {
        comm_column(sys, xi.column_position(q), comm_column_delay(sys, xi, q), pilots)
    })
}

/// Structured radar measurement operator.
pub fn radar_operator<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    pilots: &PilotSet<T>,
) -> KhatriRao<T> {
    build(xi.grid_len() + 1, pilots.len(), sys.antennas(), |q| {
        radar_column(sys, xi.column_position(q), pilots)
    })
}

/// Dense `Phi^c`: `u_n A(xi) diag(D_n^c)` stacked over pilot subcarriers.
pub fn comm_measurement_matrix<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    pilots: &PilotSet<T>,
) -> CMatrix<T> {
    comm_operator(sys, xi, pilots).to_dense()
}

/// Dense `Phi^r`; column `q` stacks `(a_q^T v_n) D_n^r[q] a_q`.
pub fn radar_measurement_matrix<T: Real>(
    sys: &SystemGeometry<T>,
    xi: &SensingParams<T>,
    pilots: &PilotSet<T>,
) -> CMatrix<T> {
    radar_operator(sys, xi, pilots).to_dense()
}

/// Both operators at one sensing-parameter hypothesis.
#[derive(Debug, Clone)]
pub struct MeasurementPair<T> {
    pub radar: KhatriRao<T>,
    pub comm: KhatriRao<T>,
}

impl<T: Real> MeasurementPair<T> {
    pub fn build(sys: &SystemGeometry<T>, xi: &SensingParams<T>, pilots: &PilotSet<T>) -> Self {
        Self {
            radar: radar_operator(sys, xi, pilots),
            comm: comm_operator(sys, xi, pilots),
        }
    }
}

/// Column norms of a dense matrix.
pub fn column_norms<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| m[(r, c)].norm_sqr()).sum::<T>().sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use crate::channel::{clean_signals, generate_pilots, Entity, Scene};
    use crate::geometry::{ArrayGeometry, Position};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize, np: usize) -> (SystemGeometry<f64>, PilotSet<f64>, SensingParams<f64>) {
        let sys = SystemGeometry::new(Position::new(-50.0, 0.0), ArrayGeometry::new(m).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sc = (0..np).map(|k| 1 + 32 * k).collect();
        let pilots = generate_pilots(m, sc, 30e3, &mut rng);
        let grid = vec![
            Position::new(-20.0, 15.0),
            Position::new(10.0, -30.0),
            Position::new(35.0, 40.0),
        ];
        let xi = SensingParams::new(grid, Position::new(49.0, 0.7), 23e-9);
        (sys, pilots, xi)
    }

    fn max_diff(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn structured_products_match_dense() {
        let (sys, pilots, xi) = setup(5, 4);
        for op in [radar_operator(&sys, &xi, &pilots), comm_operator(&sys, &xi, &pilots)] {
            let dense = op.to_dense();
            let x: Vec<_> = (0..4).map(|i| Complex::new(i as f64 - 1.0, 0.5)).collect();
            assert!(max_diff(&op.apply(&x), &dense.matvec(&x)) < 1e-13);
            let y: Vec<_> = (0..20).map(|i| Complex::new(0.1 * i as f64, -0.3)).collect();
            assert!(max_diff(&op.adjoint_apply(&y), &dense.adjoint_matvec(&y)) < 1e-13);
            let g = LinearOperator::gram(&op);
            assert!(max_diff(g.as_slice(), dense.gram().as_slice()) < 1e-13);
        }
    }

    #[test]
    fn comm_single_pilot_at_dc_is_the_basis() {
        let (sys, mut pilots, xi) = setup(6, 1);
        pilots.subcarriers = vec![0];
        pilots.uplink = vec![Complex::new(1.0, 0.0)];
        let phi = comm_measurement_matrix(&sys, &xi, &pilots);
        let a = crate::channel::sparse_basis(&sys, &xi);
        assert!(max_diff(phi.as_slice(), a.as_slice()) < 1e-15);
    }

    #[test]
    fn comm_column_norms_are_sqrt_pilots() {
        let (sys, pilots, xi) = setup(8, 6);
        for n in column_norms(&comm_measurement_matrix(&sys, &xi, &pilots)) {
            assert!((n - 6f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn radar_column_vanishes_for_orthogonal_beam() {
        let (sys, mut pilots, xi) = setup(4, 2);
        let a = sys.atom(&xi.grid[0]);
        // v orthogonal to conj(a) so that a^T v = 0
        let mut v = vec![Complex::new(0.0, 0.0); 4];
        v[0] = a[1];
        v[1] = -a[0];
        let norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let v: Vec<_> = v.into_iter().map(|z| z / norm).collect();
        pilots.downlink = vec![v.clone(), v];
        let phi = radar_measurement_matrix(&sys, &xi, &pilots);
        assert!(phi.column(1).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn on_grid_scene_is_represented_exactly() {
        let (sys, pilots, xi) = setup(6, 5);
        let mut scene = Scene::empty(xi.user);
        scene.time_offset = xi.time_offset;
        scene.user_radar_gain = Complex::new(0.4, 0.1);
        scene.los_gain = Complex::new(-0.2, 0.9);
        scene.targets.push(Entity { position: xi.grid[1], gain: Complex::new(1.2, -0.5) });
        scene.scatterers.push(Entity { position: xi.grid[1], gain: Complex::new(0.3, 0.3) });
        scene.scatterers.push(Entity { position: xi.grid[2], gain: Complex::new(-0.7, 0.0) });
        let (yr, yc) = clean_signals(&sys, &scene, &pilots);
        let xr = vec![scene.user_radar_gain, czero(), scene.targets[0].gain, czero()];
        let xc = vec![scene.los_gain, czero(), scene.scatterers[0].gain, scene.scatterers[1].gain];
        assert!(max_diff(&radar_operator(&sys, &xi, &pilots).apply(&xr), &yr) < 1e-13);
        assert!(max_diff(&comm_operator(&sys, &xi, &pilots).apply(&xc), &yc) < 1e-13);
    }
}
