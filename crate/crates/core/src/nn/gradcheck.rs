//! Central-difference verification of analytic backward passes, in f64.

use rand::Rng;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub trials: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            tolerance: 1e-4,
            trials: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub trials: usize,
    pub passed: bool,
}

/// Uniform values in [-1, 1] kept at least `margin` away from zero, so that a
/// piecewise-linear op never sees its kink within the difference step.
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng, margin: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() >= margin {
                break v;
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn perturbed(inputs: &[Tensor<f64>], dirs: &[Tensor<f64>], h: f64) -> Vec<Tensor<f64>> {
    inputs
        .iter()
        .zip(dirs)
        .map(|(x, d)| {
            let data = x
                .data()
                .iter()
                .zip(d.data())
                .map(|(a, b)| a + h * b)
                .collect();
            Tensor::from_vec(x.shape(), data).expect("same shape")
        })
        .collect()
}

/// Compares `<u, J v>` from central differences of `forward` with `sum_i <backward(u)_i, v_i>`
/// for random directions `v` and cotangents `u`.
///
/// `backward(inputs, u)` must return one gradient per input, in input order.
pub fn finite_difference_check<F, B>(
    forward: F,
    backward: B,
    inputs: &[Tensor<f64>],
    cfg: GradCheckConfig,
    rng: &mut impl Rng,
) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
    B: Fn(&[Tensor<f64>], &Tensor<f64>) -> Vec<Tensor<f64>>,
{
    let y = forward(inputs);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let dirs: Vec<Tensor<f64>> = inputs
            .iter()
            .map(|x| random_tensor(x.shape(), rng, 0.0))
            .collect();
        let u = random_tensor(y.shape(), rng, 0.0);
        let plus = forward(&perturbed(inputs, &dirs, cfg.step));
        let minus = forward(&perturbed(inputs, &dirs, -cfg.step));
        let numeric = (dot(&u, &plus) - dot(&u, &minus)) / (2.0 * cfg.step);
        let grads = backward(inputs, &u);
        let analytic: f64 = grads.iter().zip(&dirs).map(|(g, d)| dot(g, d)).sum();
        let scale = numeric.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max((numeric - analytic).abs() / scale);
    }
    GradCheckReport {
        max_relative_error: worst,
        trials: cfg.trials,
        passed: worst < cfg.tolerance,
    }
}
