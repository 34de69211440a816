//! Composite training objective and its gradient with respect to the
//! logits.

use serde::{Deserialize, Serialize};

use crate::augment::TrainingView;
use crate::nnet::{ModelKind, Real, Tensor, PLANES_PER_GROUP, PLANE_BAD_PERIOD, PLANE_PASSIVE, PLANE_PATCH};
use crate::preprocess::Orientation;
use crate::{Error, Result};

pub const TERM_NAMES: [&str; 10] = [
    "air",
    "air_original",
    "seafloor",
    "seafloor_original",
    "surface",
    "passive",
    "bad_period",
    "patch_expanded",
    "patch_original",
    "patch_mixed",
];

/// Per-term losses summed over head groups, already scaled so that
/// `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: [f64; 10],
    pub total: f64,
}

impl LossBreakdown {
    /// Sum of the five line terms.
    pub fn line_total(&self) -> f64 {
        self.terms[..5].iter().sum()
    }
}

/// Log of the mean of exponentials, stabilized by the maximum.
pub fn log_avg_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("log-avg-exp of an empty sequence".into()));
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::INFINITY {
        return Ok(m);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + (s / values.len() as f64).ln())
}

/// Numerically stable `log(1 + exp(x)) - y x`.
fn bce_with_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of a column into `out`; returns the log-sum-exp.
fn softmax(col: &[f64], out: &mut [f64]) -> f64 {
    let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(col) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
    m + s.ln()
}

fn group_matches(group: usize, orientation: Orientation) -> bool {
    match group {
        0 => true,
        1 => orientation == Orientation::Downfacing,
        _ => orientation == Orientation::Upfacing,
    }
}

/// Line terms are per-ping categorical cross-entropy over depth against the
/// target bin; passive and bad-period terms are binary cross-entropy on the
/// log-avg-exp of each ping's column; patch terms are per-pixel binary
/// cross-entropy. Every term is a mean over pings (or pixels) and then over
/// the samples its head group applies to. With conditioned groups every
/// sample counts twice, so the total is halved.
pub fn composite_loss<T: Real>(
    logits: &Tensor<T>,
    views: &[TrainingView],
    kind: ModelKind,
) -> Result<(LossBreakdown, Tensor<T>)> {
    let groups = kind.groups();
    if logits.n != views.len() || logits.c != groups * PLANES_PER_GROUP {
        return Err(Error::Structure(format!(
            "{} samples with {} planes for {} views and {} planes",
            logits.n,
            logits.c,
            views.len(),
            groups * PLANES_PER_GROUP
        )));
    }
    let (w, h) = (logits.w, logits.h);
    for v in views {
        if v.input.shape() != (w, h) {
            return Err(Error::Alignment(format!("view {:?} for logits {w}x{h}", v.input.shape())));
        }
    }
    let halve = if groups > 1 { 0.5 } else { 1.0 };
    let mut terms = [0.0f64; 10];
    let mut grad = vec![0.0f64; logits.data.len()];
    let mut col = vec![0.0f64; h];
    let mut prob = vec![0.0f64; h];
    let plane_base = |b: usize, c: usize| (b * logits.c + c) * w * h;
    for g in 0..groups {
        let members: Vec<usize> = (0..views.len())
            .filter(|&b| groups == 1 || group_matches(g, views[b].orientation))
            .collect();
        if members.is_empty() {
            continue;
        }
        let scale = halve / members.len() as f64;
        for &b in &members {
            let v = &views[b];
            let off = g * PLANES_PER_GROUP;
            for line in 0..5 {
                let valid = v.line_valid[line].iter().filter(|&&x| x).count();
                if valid == 0 {
                    log::warn!("every ping of line {} is masked; term contributes zero", TERM_NAMES[line]);
                    continue;
                }
                let weight = scale / valid as f64;
                let base = plane_base(b, off + line);
                for i in (0..w).filter(|&i| v.line_valid[line][i]) {
                    let row = base + i * h;
                    for (c, x) in col.iter_mut().zip(&logits.data[row..row + h]) {
                        *c = x.to_f64().unwrap_or(0.0);
                    }
                    let lse = softmax(&col, &mut prob);
                    let t = v.line_index[line][i];
                    terms[line] += weight * (lse - col[t]);
                    for j in 0..h {
                        grad[row + j] += weight * (prob[j] - if j == t { 1.0 } else { 0.0 });
                    }
                }
            }
            for (term, plane, flags) in [(5, PLANE_PASSIVE, &v.passive), (6, PLANE_BAD_PERIOD, &v.bad_period)] {
                let weight = scale / w as f64;
                let base = plane_base(b, off + plane);
                for i in 0..w {
                    let row = base + i * h;
                    for (c, x) in col.iter_mut().zip(&logits.data[row..row + h]) {
                        *c = x.to_f64().unwrap_or(0.0);
                    }
                    // log-avg-exp and its softmax weights
                    let s = softmax(&col, &mut prob) - (h as f64).ln();
                    let y = if flags[i] { 1.0 } else { 0.0 };
                    terms[term] += weight * bce_with_logit(s, y);
                    let ds = weight * (sigmoid(s) - y);
                    for j in 0..h {
                        grad[row + j] += ds * prob[j];
                    }
                }
            }
            for p in 0..3 {
                let weight = scale / (w * h) as f64;
                let base = plane_base(b, off + PLANE_PATCH + p);
                let mask = v.patches[p].as_slice();
                for k in 0..w * h {
                    let x = logits.data[base + k].to_f64().unwrap_or(0.0);
                    let y = if mask[k] { 1.0 } else { 0.0 };
                    terms[7 + p] += weight * bce_with_logit(x, y);
                    grad[base + k] += weight * (sigmoid(x) - y);
                }
            }
        }
    }
    let total = terms.iter().sum();
    let grad = Tensor {
        data: grad.into_iter().map(|g| T::from_f64(g).unwrap_or(T::zero())).collect(),
        ..*logits
    };
    Ok((LossBreakdown { terms, total }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;
    use proptest::prelude::*;

    fn view(w: usize, h: usize, orientation: Orientation, line: usize) -> TrainingView {
        TrainingView {
            input: Matrix::filled(w, h, 0.0),
            line_index: std::array::from_fn(|_| vec![line; w]),
            line_valid: std::array::from_fn(|_| vec![true; w]),
            passive: (0..w).map(|i| i % 3 == 0).collect(),
            bad_period: (0..w).map(|i| i % 4 == 1).collect(),
            patches: std::array::from_fn(|p| Matrix::from_fn(w, h, |i, j| (i + j + p) % 5 == 0)),
            orientation,
            extent: (0.0, h as f64),
            record: None,
        }
    }

    /// Logits that agree with the view everywhere by a wide margin.
    fn perfect(views: &[TrainingView], groups: usize, margin: f64) -> Tensor<f64> {
        let (w, h) = views[0].input.shape();
        let mut t = Tensor::zeros(views.len(), groups * PLANES_PER_GROUP, w, h);
        for (b, v) in views.iter().enumerate() {
            for g in 0..groups {
                let off = g * PLANES_PER_GROUP;
                for i in 0..w {
                    for j in 0..h {
                        let at = |c: usize| ((b * t.c + off + c) * w + i) * h + j;
                        for l in 0..5 {
                            t.data[at(l)] = if v.line_index[l][i] == j { margin } else { -margin };
                        }
                        t.data[at(5)] = if v.passive[i] { margin } else { -margin };
                        t.data[at(6)] = if v.bad_period[i] { margin } else { -margin };
                        for p in 0..3 {
                            t.data[at(7 + p)] = if v.patches[p][(i, j)] { margin } else { -margin };
                        }
                    }
                }
            }
        }
        t
    }

    #[test]
    fn log_avg_exp_examples() {
        assert!((log_avg_exp(&[1.5, 1.5, 1.5]).unwrap() - 1.5).abs() < 1e-15);
        assert!((log_avg_exp(&[0.0, 3f64.ln()]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(log_avg_exp(&[]).is_err());
        assert!((log_avg_exp(&[1000.0, 1000.0]).unwrap() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_no_loss() {
        let views = vec![view(4, 16, Orientation::Downfacing, 3), view(4, 16, Orientation::Upfacing, 9)];
        let (loss, _) = composite_loss(&perfect(&views, 3, 50.0), &views, ModelKind::Bifacing).unwrap();
        assert!(loss.total < 1e-5, "{loss:?}");
        assert!(loss.line_total() <= 1e-6);
    }

    #[test]
    fn uniform_logits_give_log_bins() {
        let views = vec![view(3, 512, Orientation::Downfacing, 100)];
        for kind in [ModelKind::Single, ModelKind::Bifacing] {
            let t = Tensor::<f64>::zeros(1, kind.groups() * 10, 3, 512);
            let (loss, _) = composite_loss(&t, &views, kind).unwrap();
            for l in 0..5 {
                assert!((loss.terms[l] - 512f64.ln()).abs() < 1e-12, "{kind:?} {l}");
            }
        }
    }

    #[test]
    fn conditioned_planes_ignore_other_orientation() {
        let views = vec![view(4, 8, Orientation::Downfacing, 2), view(4, 8, Orientation::Downfacing, 5)];
        let mut rng_logits = Tensor::<f64>::zeros(2, 30, 4, 8);
        for (k, v) in rng_logits.data.iter_mut().enumerate() {
            *v = ((k * 37 % 101) as f64 - 50.0) / 17.0;
        }
        let (_, grad) = composite_loss(&rng_logits, &views, ModelKind::Bifacing).unwrap();
        for b in 0..2 {
            for c in 20..30 {
                assert!(grad.plane(b, c).iter().all(|&g| g == 0.0));
            }
            assert!(grad.plane(b, 12).iter().any(|&g| g != 0.0));
        }
    }

    #[test]
    fn masked_surface_is_excluded() {
        let mut v = view(4, 8, Orientation::Upfacing, 2);
        v.line_valid[4] = vec![false; 4];
        let t = Tensor::<f64>::zeros(1, 10, 4, 8);
        let (loss, grad) = composite_loss(&t, &[v], ModelKind::Single).unwrap();
        assert_eq!(loss.terms[4], 0.0);
        assert!(grad.plane(0, 4).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_differences() {
        let views = vec![view(3, 6, Orientation::Upfacing, 1), view(3, 6, Orientation::Downfacing, 4)];
        let mut t = Tensor::<f64>::zeros(2, 30, 3, 6);
        for (k, v) in t.data.iter_mut().enumerate() {
            *v = ((k * 53 % 97) as f64 - 48.0) / 20.0;
        }
        let (_, grad) = composite_loss(&t, &views, ModelKind::Bifacing).unwrap();
        for k in (0..t.data.len()).step_by(7) {
            let mut p = t.clone();
            p.data[k] += 1e-6;
            let mut m = t.clone();
            m.data[k] -= 1e-6;
            let num = (composite_loss(&p, &views, ModelKind::Bifacing).unwrap().0.total
                - composite_loss(&m, &views, ModelKind::Bifacing).unwrap().0.total)
                / 2e-6;
            assert!((num - grad.data[k]).abs() < 1e-7, "{k}: {num} vs {}", grad.data[k]);
        }
    }

    proptest! {
        #[test]
        fn log_avg_exp_between_mean_and_max(values in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let r = log_avg_exp(&values).unwrap();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r >= mean - 1e-9 && r <= max + 1e-9);
        }

        #[test]
        fn terms_are_non_negative(seed in 0u64..500) {
            let views = vec![view(3, 8, Orientation::Upfacing, (seed % 8) as usize)];
            let mut t = Tensor::<f64>::zeros(1, 30, 3, 8);
            for (k, v) in t.data.iter_mut().enumerate() {
                *v = (((k as u64 * 31 + seed * 17) % 89) as f64 - 44.0) / 7.0;
            }
            let (loss, _) = composite_loss(&t, &views, ModelKind::Bifacing).unwrap();
            prop_assert!(loss.terms.iter().all(|&x| x >= 0.0));
            prop_assert!((loss.total - loss.terms.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}
