//! Central finite differences, the reference oracle for tape gradients.

use super::Tensor;

/// Estimates the gradient of `f` at `x` by central differences,
/// `(f(x + h e_i) - f(x - h e_i)) / (2 h)` per element.
///
/// `f` must be deterministic and must not retain state across calls. The
/// estimate is only meaningful where `f` is smooth; probing across a ReLU
/// kink or a pooling boundary produces one-sided garbage by construction.
pub fn finite_diff_gradient<F>(f: F, x: &Tensor, step: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    assert!(step > 0.0, "step must be positive");
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_analytic_gradient_of_quadratic() {
        // f(x) = sum x_i^2 has gradient 2x.
        let x = Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let g = finite_diff_gradient(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        for (gi, xi) in g.data().iter().zip(x.data()) {
            assert!((gi - 2.0 * xi).abs() < 1e-9, "fd {gi} vs analytic {}", 2.0 * xi);
        }
    }
}
