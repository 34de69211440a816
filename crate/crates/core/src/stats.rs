//! Robust statistics shared by preprocessing, augmentation and inference.

/// Linear-interpolation quantile (Hyndman & Fan type 7) of already sorted
/// data. `q` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

fn sorted_finite(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(values: impl IntoIterator<Item = f64>, q: f64) -> Option<f64> {
    quantile_sorted(&sorted_finite(values), q)
}

pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    quantile(values, 0.5)
}

/// Interquartile range.
pub fn iqr(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v = sorted_finite(values);
    Some(quantile_sorted(&v, 0.75)? - quantile_sorted(&v, 0.25)?)
}

/// Interdecile range.
pub fn idr(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v = sorted_finite(values);
    Some(quantile_sorted(&v, 0.9)? - quantile_sorted(&v, 0.1)?)
}

/// Robust standard deviation from the interquartile range.
pub fn sigma_from_iqr(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    iqr(values).map(|r| r / 1.35)
}

/// Robust standard deviation from the interdecile range.
pub fn sigma_from_idr(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    idr(values).map(|r| r / 2.56)
}

/// Running median with an odd window length. Windows are truncated at the
/// ends of the sequence rather than padded.
pub fn median_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            buf.sort_by(f64::total_cmp);
            quantile_sorted(&buf, 0.5).unwrap_or(f64::NAN)
        })
        .collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Standard error of the mean. Undefined for fewer than two values.
pub fn sem(values: &[f64]) -> Option<f64> {
    sample_std(values).map(|s| s / (values.len() as f64).sqrt())
}

/// Normalized 1-D Gaussian kernel with the given radius.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma <= 0.0 {
        let mut k = vec![0.0; 2 * radius + 1];
        k[radius] = 1.0;
        return k;
    }
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * (x / sigma).powi(2)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|x| x / total).collect()
}

/// Gaussian smoothing of a sequence with reflected boundaries.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let n = values.len();
    if n == 0 || sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let kernel = gaussian_kernel(sigma, radius);
    let reflect = |i: isize| -> usize {
        let n = n as isize;
        if n == 1 {
            return 0;
        }
        let period = 2 * n;
        let mut m = i.rem_euclid(period);
        if m >= n {
            m = period - 1 - m;
        }
        m as usize
    };
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[reflect(i as isize + k as isize - radius as isize)])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(v, 0.5), Some(2.5));
        assert_eq!(quantile(v, 0.25), Some(1.75));
        assert_eq!(quantile(v, 0.0), Some(1.0));
        assert_eq!(quantile(v, 1.0), Some(4.0));
        // numpy.percentile([0..10], [10, 90]) -> 1.0, 9.0
        let w: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(idr(w.clone()), Some(8.0));
        assert_eq!(iqr(w), Some(5.0));
    }

    #[test]
    fn median_ignores_non_finite() {
        assert_eq!(median([f64::NAN, 1.0, 3.0]), Some(2.0));
        assert_eq!(median(Vec::<f64>::new()), None);
    }

    #[test]
    fn median_filter_truncates_windows() {
        let v = [1.0, 5.0, 2.0, 8.0, 3.0];
        let out = median_filter(&v, 3);
        assert_eq!(out, vec![3.0, 2.0, 5.0, 3.0, 5.5]);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![2.5; 17];
        for x in gaussian_smooth(&v, 3.0) {
            assert!((x - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sem_needs_two_values() {
        assert_eq!(sem(&[1.0]), None);
        let s = sem(&[1.0, 3.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
