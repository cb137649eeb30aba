//! Central finite differences for checking analytic gradients.

use crate::tensor::Tensor;

/// Numerical gradient of the scalar `f` at `x` with step `h`.
pub fn central_difference(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Numerical gradient restricted to the flat indices `coords`; other entries are zero.
pub fn central_difference_at(x: &Tensor, h: f64, coords: &[usize], mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Max-norm relative error `max|a - b| / max(max|a|, max|b|)`; zero when both vanish.
pub fn rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    rel_error_at(analytic, numeric, &(0..analytic.len()).collect::<Vec<_>>())
}

/// Like [`rel_error`], comparing only `coords` but scaling by the full analytic tensor.
pub fn rel_error_at(analytic: &Tensor, numeric: &Tensor, coords: &[usize]) -> f64 {
    let scale = coords
        .iter()
        .map(|&i| numeric.data()[i].abs())
        .fold(analytic.max_abs(), f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    coords
        .iter()
        .map(|&i| (analytic.data()[i] - numeric.data()[i]).abs())
        .fold(0.0, f64::max)
        / scale
}
