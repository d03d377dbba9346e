use crate::error::{Error, Result};
use crate::optics::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// `||rhs - G x|| / ||rhs||` as tracked by the recurrence.
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator given as
/// `apply(x, out)` (writes `G x` into `out`). Stops once the relative
/// residual drops to `tol` or after `max_iters` steps.
pub fn cg_solve<F>(mut apply: F, rhs: &[f64], x0: &[f64], tol: f64, max_iters: usize) -> Result<(Vec<f64>, CgStats)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("cg tolerance must be positive, got {tol}")));
    }
    if rhs.len() != x0.len() {
        return Err(Error::invalid("cg initial guess and rhs lengths differ"));
    }
    let n = rhs.len();
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let mut x = x0.to_vec();
    let mut r = rhs.to_vec();
    let mut gp = vec![0.0; n];
    if x.iter().any(|&v| v != 0.0) {
        apply(&x, &mut gp);
        r.iter_mut().zip(&gp).for_each(|(r, g)| *r -= g);
    }
    let mut rs = dot(&r, &r);
    let mut rel = rs.sqrt() / rhs_norm;
    if rel <= tol {
        return Ok((
            x,
            CgStats {
                iterations: 0,
                relative_residual: rel,
            },
        ));
    }

    let mut p = r.clone();
    for k in 1..=max_iters {
        apply(&p, &mut gp);
        let curvature = dot(&p, &gp);
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::CgBreakdown { iteration: k, curvature });
        }
        let alpha = rs / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * gp[i];
        }
        let rs_next = dot(&r, &r);
        rel = rs_next.sqrt() / rhs_norm;
        if rel <= tol || k == max_iters {
            return Ok((
                x,
                CgStats {
                    iterations: k,
                    relative_residual: rel,
                },
            ));
        }
        let beta = rs_next / rs;
        rs = rs_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Ok((
        x,
        CgStats {
            iterations: max_iters,
            relative_residual: rel,
        },
    ))
}
