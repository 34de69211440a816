//! Resampling helpers shared by the augmentations.

use serde::{Deserialize, Serialize};

/// Polynomial order for resampling at fractional positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpOrder {
    Linear = 1,
    Quadratic = 2,
    Cubic = 3,
}

impl InterpOrder {
    pub const ALL: [InterpOrder; 3] = [Self::Linear, Self::Quadratic, Self::Cubic];
}

/// Lagrange weights for sampling a length-`n` sequence at position `x`,
/// clamped to the sequence. Returns `(first index, weights)`; only the
/// first `order + 1` weights (fewer for short sequences) are meaningful.
pub fn lagrange_weights(x: f64, n: usize, order: InterpOrder) -> (usize, [f64; 4], usize) {
    let mut w = [0.0; 4];
    if n <= 1 {
        w[0] = 1.0;
        return (0, w, 1);
    }
    let x = x.clamp(0.0, (n - 1) as f64);
    let points = (order as usize + 1).min(n);
    let base = match points {
        2 => (x.floor() as usize).min(n - 2),
        3 => (x.round() as usize).saturating_sub(1).min(n - 3),
        _ => (x.floor() as usize).saturating_sub(1).min(n - points),
    };
    for k in 0..points {
        let pk = (base + k) as f64;
        let mut acc = 1.0;
        for m in 0..points {
            if m != k {
                let pm = (base + m) as f64;
                acc *= (x - pm) / (pk - pm);
            }
        }
        w[k] = acc;
    }
    (base, w, points)
}

/// Nearest-neighbour source index when resizing `n_in` samples to `n_out`.
pub fn nearest_index(k: usize, n_in: usize, n_out: usize) -> usize {
    (((k as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
}

/// Inverts a monotone non-decreasing sampling map `p` (output index to
/// source position) at source position `f`, by linear interpolation.
pub fn invert_monotone(p: &[f64], f: f64) -> f64 {
    let n = p.len();
    if n == 1 {
        return 0.0;
    }
    if f <= p[0] {
        return f - p[0];
    }
    if f >= p[n - 1] {
        return (n - 1) as f64 + (f - p[n - 1]);
    }
    let k = p.partition_point(|&v| v <= f);
    let (a, b) = (p[k - 1], p[k]);
    if b > a {
        (k - 1) as f64 + (f - a) / (b - a)
    } else {
        (k - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_reproduce_polynomials() {
        let n = 9;
        for order in InterpOrder::ALL {
            for &x in &[0.0, 0.3, 2.5, 4.75, 7.9, 8.0] {
                let (base, w, m) = lagrange_weights(x, n, order);
                let s: f64 = w[..m].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                let deg = order as i32;
                let val: f64 = (0..m).map(|k| w[k] * ((base + k) as f64).powi(deg)).sum();
                assert!((val - x.powi(deg)).abs() < 1e-9, "{order:?} {x}");
            }
        }
    }

    #[test]
    fn weights_exact_at_nodes() {
        for order in InterpOrder::ALL {
            for i in 0..6 {
                let (base, w, m) = lagrange_weights(i as f64, 6, order);
                for k in 0..m {
                    let want = if base + k == i { 1.0 } else { 0.0 };
                    assert!((w[k] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nearest_halves() {
        let idx: Vec<usize> = (0..4).map(|k| nearest_index(k, 8, 4)).collect();
        assert_eq!(idx, vec![1, 3, 5, 7]);
        assert_eq!((0..5).map(|k| nearest_index(k, 5, 5)).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn inversion_of_shift() {
        let p: Vec<f64> = (0..10).map(|j| j as f64 + 1.5).collect();
        assert!((invert_monotone(&p, 4.0) - 2.5).abs() < 1e-12);
        assert!((invert_monotone(&p, 12.0) - 10.5).abs() < 1e-12);
    }
}
