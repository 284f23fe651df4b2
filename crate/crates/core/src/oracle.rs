//! Brute-force reference computations used to cross-check the fast paths:
//! exhaustive support enumeration for Module B, direct Gaussian
//! conditioning for Module A, and central finite differences.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::prior::{PriorHyperParams, UserPrior};
use crate::scalar::{czero, ln_prob, Cx, Real};
use crate::turbo::{GaussianMessage, SupportModel, SupportPosterior};

fn ln_cn<T: Real>(x: Cx<T>, var: T) -> T {
    -x.norm_sqr() / var - (T::PI() * var).ln()
}

/// Exact posterior of the support/coefficient model by enumerating every
/// joint configuration of `(s, s^r, s^c)` over all indices. Exponential in
/// the column count; intended for at most three columns.
pub fn enumerate_module_b<T: Real>(
    input: &GaussianMessage<T>,
    hyper: &PriorHyperParams<T>,
    model: SupportModel,
) -> SupportPosterior<T> {
    let q1 = input.columns();
    assert!(q1 <= 4, "enumeration oracle is exponential in the column count");
    let (mr, vr) = input.block(0);
    let (mc, vc) = input.block(1);

    let ln_prior = |q: usize, s: bool, r: bool, c: bool| -> T {
        if let (0, UserPrior::Known { radar_visible }) = (q, hyper.user) {
            return if s && c && r == radar_visible { T::zero() } else { T::neg_infinity() };
        }
        let bern = |p: T, b: bool| ln_prob(if b { p } else { T::one() - p });
        match model {
            SupportModel::Joint => {
                if !s {
                    if r || c {
                        T::neg_infinity()
                    } else {
                        bern(hyper.lambda, false)
                    }
                } else {
                    bern(hyper.lambda, true) + bern(hyper.rho_r, r) + bern(hyper.rho_c, c)
                }
            }
            SupportModel::Separate => {
                if s != (r || c) {
                    T::neg_infinity()
                } else {
                    bern(hyper.lambda * hyper.rho_r, r) + bern(hyper.lambda * hyper.rho_c, c)
                }
            }
        }
    };
    let ln_evidence = |m: Cx<T>, v: T, slab: T, active: bool| {
        if active {
            ln_cn(m, v + slab)
        } else {
            ln_cn(m, v)
        }
    };

    let configs = 1usize << (3 * q1);
    let mut logw = Vec::with_capacity(configs);
    for code in 0..configs {
        let mut lw = T::zero();
        for q in 0..q1 {
            let bits = (code >> (3 * q)) & 7;
            let (s, r, c) = (bits & 1 == 1, bits & 2 == 2, bits & 4 == 4);
            lw += ln_prior(q, s, r, c)
                + ln_evidence(mr[q], vr[q], hyper.slab_var_r[q], r)
                + ln_evidence(mc[q], vc[q], hyper.slab_var_c[q], c);
        }
        logw.push(lw);
    }
    let top = logw.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = logw.iter().map(|l| (*l - top).exp()).collect();
    let total: T = weights.iter().copied().sum();

    let mut out = SupportPosterior {
        mean: vec![czero(); 2 * q1],
        var: vec![T::zero(); 2 * q1],
        prob_r: vec![T::zero(); q1],
        prob_c: vec![T::zero(); q1],
        prob_joint: vec![T::zero(); q1],
    };
    let mut second = vec![T::zero(); 2 * q1];
    for (code, w) in weights.iter().enumerate() {
        let w = *w / total;
        for q in 0..q1 {
            let bits = (code >> (3 * q)) & 7;
            if bits & 1 == 1 {
                out.prob_joint[q] += w;
            }
            for (branch, bit, m, v, slab) in [
                (0, 2, mr[q], vr[q], hyper.slab_var_r[q]),
                (1, 4, mc[q], vc[q], hyper.slab_var_c[q]),
            ] {
                if bits & bit == 0 {
                    continue;
                }
                let mu = m.scale(slab / (slab + v));
                let nu = slab * v / (slab + v);
                let i = branch * q1 + q;
                out.mean[i] += mu.scale(w);
                second[i] += w * (nu + mu.norm_sqr());
                if branch == 0 {
                    out.prob_r[q] += w;
                } else {
                    out.prob_c[q] += w;
                }
            }
        }
    }
    for i in 0..2 * q1 {
        out.var[i] = second[i] - out.mean[i].norm_sqr();
    }
    out
}

/// Posterior of `x ~ CN(m, diag(v))` given `y = Phi x + CN(0, noise I)`,
/// computed in observation space:
/// `K = Lambda Phi^H (Phi Lambda Phi^H + noise I)^{-1}`,
/// `mean = m + K (y - Phi m)`, `cov = Lambda - K Phi Lambda`.
pub fn dense_gaussian_posterior<T: Real>(
    phi: &CMatrix<T>,
    y: &[Cx<T>],
    noise_var: T,
    prior_mean: &[Cx<T>],
    prior_var: &[T],
) -> Result<(Vec<Cx<T>>, CMatrix<T>)> {
    let (rows, cols) = (phi.rows(), phi.cols());
    let lambda = CMatrix::from_diag(&prior_var.iter().map(|v| Cx::new(*v, T::zero())).collect::<Vec<_>>());
    let phi_lambda = phi.matmul(&lambda)?;
    let mut s = phi_lambda.matmul(&phi.adjoint())?;
    for i in 0..rows {
        s[(i, i)].re += noise_var;
    }
    let resid: Vec<Cx<T>> = y.iter().zip(phi.matvec(prior_mean)).map(|(a, b)| *a - b).collect();
    // solve S [z | Z] = [resid | Phi Lambda]
    let mut rhs = CMatrix::zeros(rows, cols + 1);
    for r in 0..rows {
        rhs[(r, 0)] = resid[r];
        for c in 0..cols {
            rhs[(r, c + 1)] = phi_lambda[(r, c)];
        }
    }
    let sol = lu_solve(s, rhs)?;
    let lambda_phi_h = phi_lambda.adjoint();
    let mut mean = prior_mean.to_vec();
    let mut cov = lambda;
    for i in 0..cols {
        for r in 0..rows {
            let k = lambda_phi_h[(i, r)];
            mean[i] += k * sol[(r, 0)];
            for j in 0..cols {
                cov[(i, j)] -= k * sol[(r, j + 1)];
            }
        }
    }
    Ok((mean, cov))
}

/// Gaussian elimination with partial pivoting, solving `A X = B`.
pub fn lu_solve<T: Real>(mut a: CMatrix<T>, mut b: CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Dimension("lu_solve shape".into()));
    }
    let nb = b.cols();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[(i, k)].norm().partial_cmp(&a[(j, k)].norm()).unwrap())
            .unwrap();
        if a[(piv, k)].norm() == T::zero() {
            return Err(Error::Numerical("singular matrix in lu_solve".into()));
        }
        if piv != k {
            for c in 0..n {
                let t = a[(k, c)];
                a[(k, c)] = a[(piv, c)];
                a[(piv, c)] = t;
            }
            for c in 0..nb {
                let t = b[(k, c)];
                b[(k, c)] = b[(piv, c)];
                b[(piv, c)] = t;
            }
        }
        let inv = a[(k, k)].inv();
        for r in k + 1..n {
            let f = a[(r, k)] * inv;
            if f == czero() {
                continue;
            }
            for c in k..n {
                let v = a[(k, c)];
                a[(r, c)] -= f * v;
            }
            for c in 0..nb {
                let v = b[(k, c)];
                b[(r, c)] -= f * v;
            }
        }
    }
    let mut x = CMatrix::zeros(n, nb);
    for c in 0..nb {
        for r in (0..n).rev() {
            let mut s = b[(r, c)];
            for k in r + 1..n {
                s -= a[(r, k)] * x[(k, c)];
            }
            x[(r, c)] = s / a[(r, r)];
        }
    }
    Ok(x)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<T: Real>(mut f: impl FnMut(T) -> T, x: T, h: T) -> T {
    (f(x + h) - f(x - h)) / (T::lit(2.0) * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn lu_solves_small_system() {
        let a = CMatrix::from_rows(2, 2, vec![
            Complex::new(0.0, 0.0), Complex::new(1.0, 1.0),
            Complex::new(2.0, 0.0), Complex::new(0.5, 0.0),
        ]).unwrap();
        let x = CMatrix::from_rows(2, 1, vec![Complex::new(1.0, -1.0), Complex::new(0.25, 2.0)]).unwrap();
        let b = a.matmul(&x).unwrap();
        let sol = lu_solve(a, b).unwrap();
        for r in 0..2 {
            assert!((sol[(r, 0)] - x[(r, 0)]).norm() < 1e-14);
        }
    }

    #[test]
    fn central_difference_of_cubic() {
        let d = central_difference(|x: f64| x * x * x, 2.0, 1e-4);
        assert!((d - 12.0).abs() < 1e-6);
    }
}
