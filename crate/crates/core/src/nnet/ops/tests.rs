use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, w: usize, h: usize) -> Tensor<f64> {
    let data = (0..n * c * w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(n, c, w, h, data).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

const EPS: f64 = 1e-5;

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let tol = 1e-6 + 1e-5 * analytic.abs().max(numeric.abs());
    assert!((analytic - numeric).abs() <= tol, "{what}: analytic {analytic} numeric {numeric}");
}

/// Checks input and parameter gradients of `f(x, p)` against central
/// differences of `sum(f(x, p) * r)`.
fn check<F, B>(x: &Tensor<f64>, p: &[f64], out_shape: [usize; 4], f: F, back: B)
where
    F: Fn(&Tensor<f64>, &[f64]) -> Tensor<f64>,
    B: Fn(&Tensor<f64>, &[f64], &Tensor<f64>, &mut [f64]) -> Tensor<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let [n, c, w, h] = out_shape;
    let r = random_tensor(&mut rng, n, c, w, h);
    let y = f(x, p);
    assert_eq!(y.shape(), out_shape);
    let mut dp = vec![0.0; p.len()];
    let dx = back(x, p, &r, &mut dp);
    for k in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[k] += EPS;
        let mut xm = x.clone();
        xm.data[k] -= EPS;
        let num = (weighted_sum(&f(&xp, p), &r) - weighted_sum(&f(&xm, p), &r)) / (2.0 * EPS);
        assert_close(dx.data[k], num, &format!("input {k}"));
    }
    for k in 0..p.len() {
        let mut pp = p.to_vec();
        pp[k] += EPS;
        let mut pm = p.to_vec();
        pm[k] -= EPS;
        let num = (weighted_sum(&f(x, &pp), &r) - weighted_sum(&f(x, &pm), &r)) / (2.0 * EPS);
        assert_close(dp[k], num, &format!("param {k}"));
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, 2, 2, 4, 6);
    let p = random_vec(&mut rng, 3 * 2 * 9);
    check(&x, &p, [2, 3, 4, 6], |x, p| conv_forward(x, p, 3, 3), |x, p, dy, dp| conv_backward(x, p, 3, dy, dp));
}

#[test]
fn depthwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, 2, 3, 3, 7);
    let p = random_vec(&mut rng, 3 * 25);
    check(&x, &p, [2, 3, 3, 7], |x, p| depthwise_forward(x, p, 5), |x, p, dy, dp| depthwise_backward(x, p, 5, dy, dp));
}

#[test]
fn pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, 2, 3, 2, 5);
    let p = random_vec(&mut rng, 4 * 3 + 4);
    check(
        &x,
        &p,
        [2, 4, 2, 5],
        |x, p| pointwise_forward(x, &p[..12], Some(&p[12..]), 4),
        |x, p, dy, dp| {
            let (dw, db) = dp.split_at_mut(12);
            pointwise_backward(x, &p[..12], dy, dw, Some(db))
        },
    );
}

#[test]
fn batchnorm_gradients_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, 2, 3, 3, 4);
    let mut p = random_vec(&mut rng, 6);
    p[..3].iter_mut().for_each(|v| *v += 1.5);
    let rm = vec![0.1, -0.2, 0.3];
    let rv = vec![0.5, 1.5, 2.0];
    for training in [true, false] {
        check(
            &x,
            &p,
            [2, 3, 3, 4],
            |x, p| batchnorm_forward(x, &p[..3], &p[3..], (&rm, &rv), 1e-5, training).0,
            |x, p, dy, dp| {
                let (_, cache) = batchnorm_forward(x, &p[..3], &p[3..], (&rm, &rv), 1e-5, training);
                let (ds, dh) = dp.split_at_mut(3);
                batchnorm_backward(&cache, &p[..3], dy, ds, dh)
            },
        );
    }
}

#[test]
fn batchnorm_normalizes_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(&mut rng, 3, 2, 4, 4);
    let (y, cache) = batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], (&[0.0, 0.0], &[1.0, 1.0]), 1e-5, true);
    for c in 0..2 {
        let vals: Vec<f64> = (0..3).flat_map(|b| y.plane(b, c).to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
    }
    assert_eq!(cache.mean.len(), 2);
}

#[test]
fn relu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(&mut rng, 1, 2, 3, 3);
    check(&x, &[], [1, 2, 3, 3], |x, _| relu_forward(x), |x, _, dy, _| relu_backward(&relu_forward(x), dy));
}

fn se_split(p: &[f64], c: usize, r: usize) -> SeWeights<'_, f64> {
    let (w1, rest) = p.split_at(r * c);
    let (b1, rest) = rest.split_at(r);
    let (w2, b2) = rest.split_at(c * r);
    SeWeights { w1, b1, w2, b2, r }
}

#[test]
fn squeeze_excite_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (c, r) = (4, 2);
    let x = random_tensor(&mut rng, 2, c, 3, 5);
    let p = random_vec(&mut rng, r * c + r + c * r + c);
    check(
        &x,
        &p,
        [2, c, 3, 5],
        |x, p| se_forward(x, &se_split(p, c, r)).0,
        |x, p, dy, dp| {
            let weights = se_split(p, c, r);
            let (_, cache) = se_forward(x, &weights);
            let (w1, rest) = dp.split_at_mut(r * c);
            let (b1, rest) = rest.split_at_mut(r);
            let (w2, b2) = rest.split_at_mut(c * r);
            se_backward(x, &cache, &weights, dy, SeGrads { w1, b1, w2, b2 })
        },
    );
}

#[test]
fn squeeze_excite_zero_weights_halve() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, 2, 4, 3, 3);
    let p = vec![0.0; 4 * 2 + 2 + 4 * 2 + 4];
    let (y, cache) = se_forward(&x, &se_split(&p, 4, 2));
    assert!(cache.gates.iter().all(|&g| g == 0.5));
    for (a, b) in y.data.iter().zip(&x.data) {
        assert_eq!(*a, 0.5 * b);
    }
}

#[test]
fn squeeze_excite_single_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_tensor(&mut rng, 1, 1, 4, 4);
    let p = random_vec(&mut rng, 4);
    let (y, cache) = se_forward(&x, &se_split(&p, 1, 1));
    assert_eq!(cache.gates.len(), 1);
    let g = cache.gates[0];
    for (a, b) in y.data.iter().zip(&x.data) {
        assert!((a - g * b).abs() < 1e-15);
    }
}

#[test]
fn maxpool_values_and_gradients() {
    let x = Tensor::from_vec(1, 1, 2, 4, vec![1.0f64, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0]).unwrap();
    let (y, _) = maxpool_forward(&x, 1, 2);
    assert_eq!(y.data, vec![5.0, 2.0, 4.0, 7.0]);
    let (y, _) = maxpool_forward(&x, 2, 2);
    assert_eq!(y.data, vec![5.0, 7.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_tensor(&mut rng, 2, 2, 4, 8);
    check(
        &x,
        &[],
        [2, 2, 2, 4],
        |x, _| maxpool_forward(x, 2, 2).0,
        |x, _, dy, _| maxpool_backward(&maxpool_forward(x, 2, 2).1, dy, x.shape()),
    );
}

#[test]
fn upsample_values_and_gradients() {
    let x = Tensor::from_vec(1, 1, 1, 2, vec![0.0f64, 4.0]).unwrap();
    let y = upsample_forward(&x, 1, 2);
    assert_eq!(y.data, vec![0.0, 1.0, 3.0, 4.0]);
    let c = Tensor::from_vec(1, 1, 2, 2, vec![2.5f64; 4]).unwrap();
    assert!(upsample_forward(&c, 2, 2).data.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&mut rng, 2, 2, 3, 4);
    check(
        &x,
        &[],
        [2, 2, 6, 8],
        |x, _| upsample_forward(x, 2, 2),
        |x, _, dy, _| upsample_backward(dy, x.shape(), 2, 2),
    );
}

#[test]
fn concat_split_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = random_tensor(&mut rng, 2, 3, 2, 2);
    let b = random_tensor(&mut rng, 2, 1, 2, 2);
    let c = concat(&a, &b);
    assert_eq!(c.shape(), [2, 4, 2, 2]);
    let (a2, b2) = split(&c, 3);
    assert_eq!((a2, b2), (a, b));
}
