//! Comparison estimators: per-block OMP on the fixed grid, the fixed-grid
//! joint-prior solver and the separate-prior solver.

use crate::channel::{Observation, SensingParams};
use crate::error::{Error, Result};
use crate::geometry::uniform_grid;
use crate::linalg::{cholesky_regularized, dotc, norm_sqr, CMatrix, LinearOperator};
use crate::measurement::MeasurementPair;
use crate::mstep::XiPrior;
use crate::prior::PriorHyperParams;
use crate::scalar::{czero, Cx, Real};
use crate::solver::{estimates_from_supports, sea_turbo_sbi, Diagnostics, Estimates, Mode, Problem, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpConfig<T> {
    pub max_atoms: usize,
    /// Stop once `||r|| <= residual_tol ||y||`.
    pub residual_tol: T,
}

impl<T: Real> OmpConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_atoms == 0 {
            return Err(Error::Config("OMP needs max_atoms >= 1".into()));
        }
        if !(self.residual_tol >= T::zero()) {
            return Err(Error::Config("OMP residual_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult<T> {
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    /// Coefficients over all columns (zero off the support).
    pub coefficients: Vec<Cx<T>>,
    /// Residual norm after each selection, starting with `||y||`.
    pub residual_norms: Vec<T>,
}

/// Orthogonal matching pursuit with a least-squares refit every round.
pub fn omp<T: Real, O: LinearOperator<T> + ?Sized>(y: &[Cx<T>], phi: &O, config: &OmpConfig<T>) -> Result<OmpResult<T>> {
    config.validate()?;
    let n = phi.ncols();
    if y.len() != phi.nrows() {
        return Err(Error::Dimension("OMP observation length".into()));
    }
    let columns: Vec<Vec<Cx<T>>> = (0..n).map(|q| phi.column(q)).collect();
    let norms: Vec<T> = columns.iter().map(|c| norm_sqr(c).sqrt()).collect();
    let y_norm = norm_sqr(y).sqrt();
    let mut support: Vec<usize> = Vec::new();
    let mut coef: Vec<Cx<T>> = Vec::new();
    let mut resid = y.to_vec();
    let mut residual_norms = vec![y_norm];
    while support.len() < config.max_atoms.min(n) && *residual_norms.last().unwrap() > config.residual_tol * y_norm {
        let best = (0..n)
            .filter(|q| !support.contains(q) && norms[*q] > T::zero())
            .map(|q| (q, dotc(&columns[q], &resid).norm() / norms[q]))
            .fold(None, |acc: Option<(usize, T)>, (q, s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((q, s)),
            });
        let Some((q, _)) = best else { break };
        support.push(q);
        let k = support.len();
        let gram = CMatrix::from_fn(k, k, |i, j| dotc(&columns[support[i]], &columns[support[j]]));
        let rhs: Vec<Cx<T>> = support.iter().map(|&s| dotc(&columns[s], y)).collect();
        let (chol, _) = cholesky_regularized(&gram)?;
        coef = chol.solve(&rhs);
        resid = y.to_vec();
        for (s, c) in support.iter().zip(&coef) {
            for (r, v) in resid.iter_mut().zip(&columns[*s]) {
                *r -= *c * *v;
            }
        }
        residual_norms.push(norm_sqr(&resid).sqrt());
    }
    let mut coefficients = vec![czero(); n];
    for (s, c) in support.iter().zip(&coef) {
        coefficients[*s] = *c;
    }
    Ok(OmpResult {
        support,
        coefficients,
        residual_norms,
    })
}

/// OMP run separately on the radar and communication blocks over the
/// initial grid, at the prior-mean user position and zero time offset.
/// `counts = Some((K, L))` caps the atoms at `K + 1` and `L + 1`; otherwise
/// only `residual_tol` stops the pursuit.
pub fn omp_estimates<T: Real>(
    problem: &Problem<T>,
    obs: &Observation<T>,
    prior_xi: &XiPrior<T>,
    counts: Option<(usize, usize)>,
    residual_tol: T,
) -> Result<Estimates<T>> {
    let grid = uniform_grid(&problem.grid)?;
    let q1 = grid.len() + 1;
    let xi = SensingParams::new(grid, prior_xi.user_mean, T::zero());
    let ops = MeasurementPair::build(&problem.sys, &xi, &problem.pilots);
    let cap = |k: Option<usize>| OmpConfig {
        max_atoms: k.map_or(q1, |k| k + 1),
        residual_tol,
    };
    let rr = omp(&obs.y_r, &ops.radar, &cap(counts.map(|c| c.0)))?;
    let rc = omp(&obs.y_c, &ops.comm, &cap(counts.map(|c| c.1)))?;
    let mask = |s: &[usize]| {
        let mut m = vec![false; q1];
        for &q in s {
            m[q] = true;
        }
        m
    };
    Ok(estimates_from_supports(
        problem,
        xi,
        rr.coefficients,
        rc.coefficients,
        &mask(&rr.support),
        &mask(&rc.support),
        Diagnostics {
            turbo_converged: true,
            ..Diagnostics::default()
        },
    ))
}

/// The solver with its M-step disabled.
pub fn turbo_cs_fixed_grid<T: Real>(
    problem: &Problem<T>,
    obs: &Observation<T>,
    hyper: &PriorHyperParams<T>,
    config: &SolverConfig<T>,
    prior_xi: &XiPrior<T>,
) -> Result<Estimates<T>> {
    sea_turbo_sbi(problem, obs, hyper, &config.clone().with_mode(Mode::FixedGrid), prior_xi)
}

/// The solver with independent branch priors.
pub fn sea_turbo_sbi_separate<T: Real>(
    problem: &Problem<T>,
    obs: &Observation<T>,
    hyper: &PriorHyperParams<T>,
    config: &SolverConfig<T>,
    prior_xi: &XiPrior<T>,
) -> Result<Estimates<T>> {
    sea_turbo_sbi(problem, obs, hyper, &config.clone().with_mode(Mode::Separate), prior_xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_normal;
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: usize) -> OmpConfig<f64> {
        OmpConfig { max_atoms: k, residual_tol: 1e-12 }
    }

    #[test]
    fn orthonormal_dictionary_exact() {
        let phi = CMatrix::<f64>::identity(6);
        let mut x = vec![czero(); 6];
        x[1] = Complex::new(2.0, 0.0);
        x[4] = Complex::new(0.0, -1.0);
        let y = phi.matvec(&x);
        let r = omp(&y, &phi, &cfg(2)).unwrap();
        let mut s = r.support.clone();
        s.sort();
        assert_eq!(s, vec![1, 4]);
        assert_eq!(r.support[0], 1);
        for q in 0..6 {
            assert!((r.coefficients[q] - x[q]).norm() < 1e-14);
        }
    }

    #[test]
    fn residual_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = CMatrix::from_fn(20, 12, |_, _| complex_normal(&mut rng, 1.0));
        let y: Vec<_> = (0..20).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let r = omp(&y, &phi, &cfg(8)).unwrap();
        assert_eq!(r.support.len(), 8);
        for w in r.residual_norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn one_sparse_picks_max_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = CMatrix::from_fn(10, 7, |_, _| complex_normal(&mut rng, 1.0));
        let mut x = vec![czero(); 7];
        x[5] = Complex::new(1.0, 1.0);
        let y = phi.matvec(&x);
        let r = omp(&y, &phi, &cfg(1)).unwrap();
        let scores: Vec<f64> = (0..7)
            .map(|q| {
                let c = phi.column(q);
                dotc(&c, &y).norm() / norm_sqr(&c).sqrt()
            })
            .collect();
        let best = (0..7).max_by(|a, b| scores[*a].partial_cmp(&scores[*b]).unwrap()).unwrap();
        assert_eq!(r.support, vec![best]);
    }

    #[test]
    fn coherent_dictionary_against_subset_search() {
        // mismatches against the exhaustive search are counted, not asserted
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut agree = 0;
        for _ in 0..20 {
            let base: Vec<Cx<f64>> = (0..6).map(|_| complex_normal(&mut rng, 1.0)).collect();
            let phi = CMatrix::from_fn(6, 5, |r, _| base[r] + complex_normal(&mut rng, 0.3));
            let mut x = vec![czero(); 5];
            x[0] = Complex::new(1.0, 0.0);
            x[3] = Complex::new(-0.5, 0.5);
            let y = phi.matvec(&x);
            let r = omp(&y, &phi, &cfg(2)).unwrap();
            let mut best = (f64::INFINITY, (0, 0));
            for a in 0..5 {
                for b in a + 1..5 {
                    let sub = phi.select_columns(&[a, b]);
                    let fit = omp(&y, &sub, &cfg(2)).unwrap();
                    let res = *fit.residual_norms.last().unwrap();
                    if res < best.0 {
                        best = (res, (a, b));
                    }
                }
            }
            let mut s = r.support.clone();
            s.sort();
            if (s[0], s[1]) == best.1 {
                agree += 1;
            }
        }
        assert!(agree > 0);
    }
}
