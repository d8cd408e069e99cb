//! Randomized finite-difference checks of the layer backward passes.

use pixels2pose::nn::{
    conv2d, conv2d_backward, conv3d, conv3d_backward, finite_difference_check, mse_loss,
    random_tensor, relu, relu_backward, upsample_bilinear_2x, upsample_bilinear_2x_backward,
    GradCheckConfig, GradCheckReport, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub what: String,
    pub report: GradCheckReport,
}

fn cfg() -> GradCheckConfig {
    GradCheckConfig::default()
}

/// Random conv2d shapes with at most 200 elements per tensor.
pub fn conv2d_cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let b = rng.random_range(1..=2);
        let c = rng.random_range(1..=3);
        let f = rng.random_range(1..=3);
        let h = rng.random_range(2..=7);
        let w = rng.random_range(2..=7);
        let k = rng.random_range(1..=3);
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=1);
        if k > h + 2 * pad || k > w + 2 * pad || b * c * h * w > 200 || f * c * k * k > 200 {
            continue;
        }
        let (xs, ws) = ([b, c, h, w], [f, c, k, k]);
        let inputs = vec![
            random_tensor(&xs, &mut rng, 0.0),
            random_tensor(&ws, &mut rng, 0.0),
            random_tensor(&[f], &mut rng, 0.0),
        ];
        let report = finite_difference_check(
            |p| conv2d(&p[0], &p[1], &p[2], stride, pad).unwrap(),
            |p, u| {
                let g = conv2d_backward(&p[0], &p[1], &p[2], u, stride, pad).unwrap();
                vec![g.input.unwrap(), g.weight, g.bias]
            },
            &inputs,
            cfg(),
            &mut rng,
        );
        out.push(Case {
            what: format!("conv2d {xs:?} {ws:?} s{stride} p{pad}"),
            report,
        });
    }
    out
}

pub fn conv3d_cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let c = rng.random_range(1..=2);
        let f = rng.random_range(1..=2);
        let dims = [
            rng.random_range(2..=8),
            rng.random_range(2..=4),
            rng.random_range(2..=4),
        ];
        let k = [
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        ];
        let stride = [rng.random_range(1..=3), 1, rng.random_range(1..=2)];
        let pad = [rng.random_range(0..=1), 1, 0];
        let fits = (0..3).all(|a| k[a] <= dims[a] + 2 * pad[a]);
        let xs = [1, c, dims[0], dims[1], dims[2]];
        let ws = [f, c, k[0], k[1], k[2]];
        if !fits || xs.iter().product::<usize>() > 200 || ws.iter().product::<usize>() > 200 {
            continue;
        }
        let inputs = vec![
            random_tensor(&xs, &mut rng, 0.0),
            random_tensor(&ws, &mut rng, 0.0),
            random_tensor(&[f], &mut rng, 0.0),
        ];
        let report = finite_difference_check(
            |p| conv3d(&p[0], &p[1], &p[2], stride, pad).unwrap(),
            |p, u| {
                let g = conv3d_backward(&p[0], &p[1], &p[2], u, stride, pad).unwrap();
                vec![g.input.unwrap(), g.weight, g.bias]
            },
            &inputs,
            cfg(),
            &mut rng,
        );
        out.push(Case {
            what: format!("conv3d {xs:?} {ws:?} s{stride:?} p{pad:?}"),
            report,
        });
    }
    out
}

fn small_shape(rng: &mut ChaCha8Rng) -> [usize; 4] {
    [
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=5),
        rng.random_range(1..=5),
    ]
}

pub fn upsample_cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let shape = small_shape(&mut rng);
            let x = vec![random_tensor(&shape, &mut rng, 0.0)];
            let report = finite_difference_check(
                |p| upsample_bilinear_2x(&p[0]).unwrap(),
                |p, u| vec![upsample_bilinear_2x_backward(p[0].shape(), u).unwrap()],
                &x,
                cfg(),
                &mut rng,
            );
            Case {
                what: format!("upsample {shape:?}"),
                report,
            }
        })
        .collect()
}

pub fn relu_cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let shape = small_shape(&mut rng);
            // Inputs kept clear of the kink so the step never crosses it.
            let x = vec![random_tensor(&shape, &mut rng, 0.05)];
            let report = finite_difference_check(
                |p| relu(&p[0]),
                |p, u| vec![relu_backward(&p[0], u).unwrap()],
                &x,
                cfg(),
                &mut rng,
            );
            Case {
                what: format!("relu {shape:?}"),
                report,
            }
        })
        .collect()
}

pub fn mse_cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let shape = small_shape(&mut rng);
            let x = vec![random_tensor(&shape, &mut rng, 0.0)];
            let target = random_tensor(&shape, &mut rng, 0.0);
            let mask =
                random_tensor(&shape, &mut rng, 0.0).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let report = finite_difference_check(
                |p| Tensor::scalar(mse_loss(&p[0], &target, Some(&mask)).unwrap().0),
                |p, u| {
                    let (_, g) = mse_loss(&p[0], &target, Some(&mask)).unwrap();
                    vec![g.map(|v| v * u.data()[0])]
                },
                &x,
                cfg(),
                &mut rng,
            );
            Case {
                what: format!("mse {shape:?}"),
                report,
            }
        })
        .collect()
}
