use crate::error::{Error, Result};

/// Central finite-difference gradient `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("finite difference at coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

/// Central finite-difference Jacobian of a vector map; row `i` is output `i`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + eps;
        let up = f(&probe);
        probe[j] = orig - eps;
        let down = f(&probe);
        probe[j] = orig;
        for i in 0..m {
            let d = (up[i] - down[i]) / (2.0 * eps);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("finite-difference Jacobian entry ({i}, {j})")));
            }
            jac[i][j] = d;
        }
    }
    Ok(jac)
}
