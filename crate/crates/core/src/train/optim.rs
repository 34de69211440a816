//! Rectified Adam with lookahead, gradient centralization and decoupled
//! weight decay.

use serde::{Deserialize, Serialize};

use crate::nnet::{ParamInfo, ParamKind, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fast steps between lookahead synchronizations.
    pub lookahead_k: usize,
    /// Interpolation factor toward the fast weights at each sync.
    pub lookahead_alpha: f64,
    /// Rectification applies once the variance length exceeds this.
    pub rectify_threshold: f64,
    pub centralize: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta2: 0.999,
            eps: 1e-5,
            weight_decay: 1e-5,
            lookahead_k: 6,
            lookahead_alpha: 0.5,
            rectify_threshold: 5.0,
            centralize: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("β₂ must be in [0, 1), eps positive and decay non-negative".into()));
        }
        if self.lookahead_k == 0 || !(0.0..=1.0).contains(&self.lookahead_alpha) {
            return Err(Error::Config("lookahead needs k ≥ 1 and α in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-parameter moments and lookahead slow weights.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    /// Running product of the β₁ values used so far, for bias correction
    /// under a varying β₁.
    beta1_product: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    slow: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<T: Real>(params: &[Vec<T>]) -> Self {
        Self {
            step: 0,
            beta1_product: 1.0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            slow: params.iter().map(|p| p.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect()).collect(),
        }
    }
}

/// Subtracts each output unit's mean gradient over the remaining axes.
/// Tensors with fewer than two axes are left alone.
pub fn centralize(grad: &mut [f64], shape: &[usize]) {
    if shape.len() < 2 || shape[0] == 0 {
        return;
    }
    let per = grad.len() / shape[0];
    for unit in grad.chunks_mut(per) {
        let mean = unit.iter().sum::<f64>() / per as f64;
        unit.iter_mut().for_each(|g| *g -= mean);
    }
}

fn is_centralized(info: &ParamInfo) -> bool {
    info.kind == ParamKind::Weight && info.shape.len() > 1
}

/// One optimizer step. Gradients are checked for finiteness before any
/// parameter changes, so a rejected step leaves params and state intact.
pub fn optimizer_step<T: Real>(
    params: &mut [Vec<T>],
    grads: &[Vec<T>],
    info: &[ParamInfo],
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    lr: f64,
    beta1: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != info.len() || params.len() != state.m.len() {
        return Err(Error::Structure("optimizer state does not match the parameters".into()));
    }
    for ((p, g), i) in params.iter().zip(grads).zip(info) {
        if p.len() != g.len() {
            return Err(Error::Structure(format!("gradient of {} has {} entries, expected {}", i.name, g.len(), p.len())));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i.name.clone()));
        }
    }
    state.step += 1;
    state.beta1_product *= beta1;
    let t = state.step as f64;
    let b2 = config.beta2;
    let bias1 = 1.0 - state.beta1_product;
    let bias2 = 1.0 - b2.powf(t);
    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
    let rho = rho_inf - 2.0 * t * b2.powf(t) / bias2;
    let rect = (rho > config.rectify_threshold).then(|| {
        ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
    });
    let sync = state.step.is_multiple_of(config.lookahead_k as u64);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let mut g: Vec<f64> = g.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect();
        if config.centralize && is_centralized(&info[k]) {
            centralize(&mut g, &info[k].shape);
        }
        let decay = if info[k].kind == ParamKind::Weight { config.weight_decay } else { 0.0 };
        let (m, v, slow) = (&mut state.m[k], &mut state.v[k], &mut state.slow[k]);
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let update = match rect {
                Some(r) => r * m_hat / ((v[j] / bias2).sqrt() + config.eps),
                None => m_hat,
            };
            let mut w = p[j].to_f64().unwrap_or(0.0);
            w -= lr * decay * w;
            w -= lr * update;
            if sync {
                slow[j] += config.lookahead_alpha * (w - slow[j]);
                w = slow[j];
            }
            p[j] = T::from_f64(w).unwrap_or(T::zero());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_info(kind: ParamKind) -> Vec<ParamInfo> {
        vec![ParamInfo { name: "w".into(), shape: vec![1], kind, fan_in: 1 }]
    }

    fn descend(config: &OptimizerConfig, steps: usize) -> Vec<f64> {
        let info = scalar_info(ParamKind::Bias);
        let mut p = vec![vec![1.0f64]];
        let mut state = OptimizerState::new(&p);
        let mut trace = vec![p[0][0]];
        for _ in 0..steps {
            let g = vec![vec![2.0 * p[0][0]]];
            optimizer_step(&mut p, &g, &info, &mut state, config, 0.005, 0.95).unwrap();
            trace.push(p[0][0]);
        }
        trace
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let info = vec![ParamInfo { name: "k".into(), shape: vec![2, 3], kind: ParamKind::Weight, fan_in: 3 }];
        let mut p = vec![vec![0.5f32, -1.0, 2.0, 0.0, 3.0, -0.25]];
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let config = OptimizerConfig { weight_decay: 0.0, ..Default::default() };
        for _ in 0..20 {
            optimizer_step(&mut p, &[vec![0.0; 6]], &info, &mut state, &config, 0.01, 0.9).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_descends() {
        // without lookahead every fast step lowers f
        let plain = OptimizerConfig { lookahead_alpha: 1.0, ..Default::default() };
        let trace = descend(&plain, 100);
        for w in trace.windows(2) {
            assert!(w[1] * w[1] < w[0] * w[0], "{trace:?}");
        }
        // with lookahead the synchronized weights descend
        let cfg = OptimizerConfig::default();
        let trace = descend(&cfg, 100);
        let synced: Vec<f64> = trace.iter().step_by(cfg.lookahead_k).copied().collect();
        for w in synced.windows(2) {
            assert!(w[1] * w[1] < w[0] * w[0], "{synced:?}");
        }
        assert!(trace[100].abs() < 1.0);
    }

    #[test]
    fn constant_gradient_centralizes_to_zero() {
        let mut g = vec![3.5; 12];
        centralize(&mut g, &[3, 2, 2]);
        assert!(g.iter().all(|&x| x == 0.0));
        let mut b = vec![1.0, 2.0];
        centralize(&mut b, &[2]);
        assert_eq!(b, [1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let info = scalar_info(ParamKind::Weight);
        let mut p = vec![vec![1.0f32]];
        let mut state = OptimizerState::new(&p);
        let err = optimizer_step(&mut p, &[vec![f32::NAN]], &info, &mut state, &OptimizerConfig::default(), 0.1, 0.9);
        assert!(matches!(err, Err(Error::NonFinite(name)) if name == "w"));
        assert_eq!(p, [vec![1.0]]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn decay_is_decoupled() {
        let info = scalar_info(ParamKind::Weight);
        let mut p = vec![vec![2.0f64]];
        let mut state = OptimizerState::new(&p);
        let config = OptimizerConfig { weight_decay: 0.1, lookahead_alpha: 1.0, ..Default::default() };
        optimizer_step(&mut p, &[vec![0.0]], &info, &mut state, &config, 0.5, 0.9).unwrap();
        assert!((p[0][0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn centralized_units_have_zero_mean(values in prop::collection::vec(-10.0f64..10.0, 24)) {
            let mut g = values;
            centralize(&mut g, &[4, 6]);
            for unit in g.chunks(6) {
                prop_assert!(unit.iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }
}
