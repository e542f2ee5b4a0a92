use super::Tensor;
use crate::error::{Error, Result};

/// Magnitude below which gradient entries are compared absolutely rather
/// than relatively. Central differences at step 1e-5 carry round-off of
/// roughly `ulp(f) / h`, about 2e-10 for objectives of order 10, which
/// swamps relative comparisons for entries much smaller than this.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

/// Central-difference estimate `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` for
/// every coordinate of every tensor in `params`.
pub fn finite_diff_grad<F>(params: &[Tensor], h: f64, mut f: F) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = Tensor::zeros(params[t].shape());
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            work[t].data_mut()[i] = orig + h;
            let plus = f(&work)?;
            work[t].data_mut()[i] = orig - h;
            let minus = f(&work)?;
            work[t].data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// `|a − b| / max(|a|, |b|, GRADCHECK_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADCHECK_FLOOR)
}

/// Largest [`relative_error`] over corresponding entries.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
