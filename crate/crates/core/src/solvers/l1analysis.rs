//! l1-analysis recovery `min ||Dict^+ g||_1 s.t. ||A g - y|| <= eta` over `g` in `range(Dict)`.
//!
//! `Dict^+` is the canonical dual analysis map. When `Dict` has full column
//! rank every `g` in its range is `Dict c` with `c = Dict^+ g`, so the problem
//! is exactly synthesis BPDN on `A Dict`. Otherwise a dedicated ADMM runs in
//! coordinates of an orthonormal basis of `range(Dict)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::bpdn::{bpdn_matrix, soft_threshold};
use super::lsq::min_norm_lsq;
use super::SolverOptions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSolution {
    pub signal: DVector<f64>,
    /// `Dict^+ signal`.
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||A signal - y||_2`.
    pub residual: f64,
}

const RANK_TOL: f64 = 1e-10;

fn check(a: &DMatrix<f64>, dict: &DMatrix<f64>, y: &DVector<f64>, eta: f64) -> Result<()> {
    if a.ncols() != dict.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: dict.nrows(),
            context: "dictionary rows vs sensing matrix columns",
        });
    }
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: y.len(),
            context: "l1-analysis measurement",
        });
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("eta = {eta} must be finite and >= 0")));
    }
    Ok(())
}

pub fn l1_analysis(
    a: &DMatrix<f64>,
    dict: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
    opts: &SolverOptions,
) -> Result<AnalysisSolution> {
    check(a, dict, y, eta)?;
    if dict.ncols() == 0 {
        return l1_analysis_admm(a, dict, y, eta, opts);
    }
    if let Some(chol) = full_column_rank(dict) {
        let sol = bpdn_matrix(&(a * dict), y, eta, opts)?;
        let signal = dict * &sol.x;
        // Dict^+ Dict = I on full column rank, but recompute for the record.
        let coefficients = chol.solve(&dict.tr_mul(&signal));
        return Ok(AnalysisSolution {
            residual: (a * &signal - y).norm(),
            signal,
            coefficients,
            iterations: sol.iterations,
            converged: sol.converged,
        });
    }
    l1_analysis_admm(a, dict, y, eta, opts)
}

fn full_column_rank(dict: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if dict.ncols() > dict.nrows() {
        return None;
    }
    let chol = Cholesky::new(dict.tr_mul(dict))?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..dict.ncols()).map(|i| l[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    // Cholesky pivots are square roots of the Gram pivots.
    (min > 1e-7 * max).then_some(chol)
}

/// The general analysis ADMM, used regardless of the dictionary's rank.
pub fn l1_analysis_admm(
    a: &DMatrix<f64>,
    dict: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
    opts: &SolverOptions,
) -> Result<AnalysisSolution> {
    check(a, dict, y, eta)?;
    opts.validate()?;
    let n = dict.nrows();
    let p = dict.ncols();

    // Dict = U S V^T; Q = U_r, T = Dict^+ Q = V_r S_r^{-1}.
    let svd = dict.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .collect();
    let r = keep.len();
    let q = u.select_columns(&keep);
    let mut t = v_t.select_rows(&keep).transpose();
    for (j, &idx) in keep.iter().enumerate() {
        let inv = 1.0 / svd.singular_values[idx];
        t.column_mut(j).scale_mut(inv);
    }
    let b = a * &q;

    let y_norm = y.norm();
    if y_norm <= eta || r == 0 {
        if y_norm > eta + opts.tol_abs {
            return Err(Error::Infeasible {
                residual: y_norm,
                eta,
            });
        }
        return Ok(AnalysisSolution {
            signal: DVector::zeros(n),
            coefficients: DVector::zeros(p),
            iterations: 0,
            converged: true,
            residual: y_norm,
        });
    }

    let mut gram = t.tr_mul(&t) + b.tr_mul(&b);
    gram.fill_lower_triangle_with_upper_triangle();
    let chol = Cholesky::new(gram).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let project = |v: &DVector<f64>| {
        let d = v - y;
        let dn = d.norm();
        if dn <= eta {
            v.clone()
        } else {
            y + d * (eta / dn)
        }
    };

    let m = a.nrows();
    let mut rho = opts.penalty;
    let mut z1 = DVector::zeros(p);
    let mut u1 = DVector::zeros(p);
    let mut z2 = project(&DVector::zeros(m));
    let mut u2 = DVector::zeros(m);
    let mut w = DVector::zeros(r);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        w = chol.solve(&(t.tr_mul(&(&z1 - &u1)) + b.tr_mul(&(&z2 - &u2))));
        let tw = &t * &w;
        let bw = &b * &w;
        let z1_old = z1.clone();
        let z2_old = z2.clone();
        z1 = soft_threshold(&(&tw + &u1), 1.0 / rho);
        z2 = project(&(&bw + &u2));
        u1 += &tw - &z1;
        u2 += &bw - &z2;

        let r_pri = ((&tw - &z1).norm_squared() + (&bw - &z2).norm_squared()).sqrt();
        let s_dual = rho * (t.tr_mul(&(&z1 - &z1_old)) + b.tr_mul(&(&z2 - &z2_old))).norm();
        let scale = (tw.norm_squared() + bw.norm_squared())
            .sqrt()
            .max((z1.norm_squared() + z2.norm_squared()).sqrt());
        let eps_pri = ((p + m) as f64).sqrt() * opts.tol_abs + opts.tol_rel * scale;
        let eps_dual =
            (r as f64).sqrt() * opts.tol_abs + opts.tol_rel * rho * (t.tr_mul(&u1) + b.tr_mul(&u2)).norm();
        if r_pri <= eps_pri && s_dual <= eps_dual {
            converged = true;
            break;
        }
        if it % 10 == 0 {
            if r_pri > 10.0 * s_dual {
                rho *= 2.0;
                u1 /= 2.0;
                u2 /= 2.0;
            } else if s_dual > 10.0 * r_pri {
                rho /= 2.0;
                u1 *= 2.0;
                u2 *= 2.0;
            }
        }
    }

    let feasible = eta + opts.tol_abs;
    if (&b * &w - y).norm() > feasible {
        let w_ls = min_norm_lsq(&b, y);
        let rl = &b * &w_ls - y;
        if rl.norm() > feasible {
            return Err(Error::Infeasible {
                residual: rl.norm(),
                eta,
            });
        }
        let r1 = &b * &w - y;
        let d = &rl - &r1;
        let (qa, qb, qc) = (d.norm_squared(), 2.0 * r1.dot(&d), r1.norm_squared() - eta * eta);
        let s = if qa == 0.0 {
            1.0
        } else {
            ((-qb - (qb * qb - 4.0 * qa * qc).max(0.0).sqrt()) / (2.0 * qa)).clamp(0.0, 1.0)
        };
        w = &w * (1.0 - s) + w_ls * s;
    }
    let signal = &q * &w;
    Ok(AnalysisSolution {
        residual: (a * &signal - y).norm(),
        coefficients: &t * &w,
        signal,
        iterations,
        converged,
    })
}
