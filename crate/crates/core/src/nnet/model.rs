use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{
    batchnorm_backward, batchnorm_forward, concat, conv_backward, conv_forward, depthwise_backward, depthwise_forward,
    maxpool_backward, maxpool_forward, pointwise_backward, pointwise_forward, relu_backward, relu_forward, se_backward,
    se_forward, split, upsample_backward, upsample_forward, BnCache, SeCache, SeGrads, SeWeights,
};
use super::{ModelConfig, Real, Tensor};
use crate::{Error, Result};

/// Channel counts of one MBConv block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub cin: usize,
    pub cout: usize,
    pub expanded: usize,
    /// Squeeze-excite hidden width, `max(1, expanded / reduction)`.
    pub reduced: usize,
}

impl BlockShape {
    pub fn new(cin: usize, cout: usize, expansion: usize, reduction: usize) -> Self {
        let expanded = cin * expansion;
        Self {
            cin,
            cout,
            expanded,
            reduced: (expanded / reduction).max(1),
        }
    }

    pub fn has_expand(&self) -> bool {
        self.expanded != self.cin
    }

    pub fn has_residual_conv(&self) -> bool {
        self.cin != self.cout
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    /// Inputs feeding each output unit, for initialization.
    pub fan_in: usize,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct BnIds {
    scale: usize,
    shift: usize,
    buffer: usize,
}

#[derive(Debug, Clone)]
struct BlockIds {
    shape: BlockShape,
    expand: Option<(usize, BnIds)>,
    dw: (usize, BnIds),
    se: [usize; 4],
    project: (usize, BnIds),
    residual: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Arch {
    stem: (usize, BnIds),
    blocks: Vec<BlockIds>,
    head: (usize, usize),
    bn_widths: Vec<usize>,
}

#[derive(Default)]
struct Builder {
    params: Vec<ParamInfo>,
    bn_widths: Vec<usize>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: ParamKind, fan_in: usize) -> usize {
        self.params.push(ParamInfo {
            name,
            shape,
            kind,
            fan_in,
        });
        self.params.len() - 1
    }

    fn bn(&mut self, prefix: &str, c: usize) -> BnIds {
        let scale = self.push(format!("{prefix}.scale"), vec![c], ParamKind::BnScale, 1);
        let shift = self.push(format!("{prefix}.shift"), vec![c], ParamKind::BnShift, 1);
        self.bn_widths.push(c);
        BnIds {
            scale,
            shift,
            buffer: self.bn_widths.len() - 1,
        }
    }

    fn block(&mut self, prefix: &str, s: BlockShape, k: usize) -> BlockIds {
        let expand = s.has_expand().then(|| {
            let w = self.push(format!("{prefix}.expand.weight"), vec![s.expanded, s.cin], ParamKind::Weight, s.cin);
            (w, self.bn(&format!("{prefix}.expand_bn"), s.expanded))
        });
        let dw = self.push(format!("{prefix}.depthwise.weight"), vec![s.expanded, k, k], ParamKind::Weight, k * k);
        let dw = (dw, self.bn(&format!("{prefix}.depthwise_bn"), s.expanded));
        let (e, r) = (s.expanded, s.reduced);
        let se = [
            self.push(format!("{prefix}.se.reduce.weight"), vec![r, e], ParamKind::Weight, e),
            self.push(format!("{prefix}.se.reduce.bias"), vec![r], ParamKind::Bias, e),
            self.push(format!("{prefix}.se.expand.weight"), vec![e, r], ParamKind::Weight, r),
            self.push(format!("{prefix}.se.expand.bias"), vec![e], ParamKind::Bias, r),
        ];
        let pw = self.push(format!("{prefix}.project.weight"), vec![s.cout, e], ParamKind::Weight, e);
        let project = (pw, self.bn(&format!("{prefix}.project_bn"), s.cout));
        let residual = s.has_residual_conv().then(|| {
            (
                self.push(format!("{prefix}.residual.weight"), vec![s.cout, s.cin], ParamKind::Weight, s.cin),
                self.push(format!("{prefix}.residual.bias"), vec![s.cout], ParamKind::Bias, s.cin),
            )
        });
        BlockIds {
            shape: s,
            expand,
            dw,
            se,
            project,
            residual,
        }
    }
}

fn build(config: &ModelConfig) -> (Vec<ParamInfo>, Arch) {
    let mut b = Builder::default();
    let (c, k) = (config.width, config.kernel);
    let stem_w = b.push("stem.conv.weight".into(), vec![c, 1, k, k], ParamKind::Weight, k * k);
    let stem = (stem_w, b.bn("stem.bn", c));
    let mut blocks = Vec::new();
    for (i, shape) in config.blocks().into_iter().enumerate() {
        let prefix = if i < config.depth {
            format!("down{}", i + 1)
        } else {
            format!("up{}", 2 * config.depth - i)
        };
        blocks.push(b.block(&prefix, shape, k));
    }
    let p = config.planes();
    let head = (
        b.push("head.weight".into(), vec![p, c], ParamKind::Weight, c),
        b.push("head.bias".into(), vec![p], ParamKind::Bias, c),
    );
    let arch = Arch {
        stem,
        blocks,
        head,
        bn_widths: b.bn_widths,
    };
    (b.params, arch)
}

pub(super) fn layout(config: &ModelConfig) -> Vec<ParamInfo> {
    build(config).0
}

/// Per-parameter gradients, parallel to [`UNet::params`].
pub type Grads<T> = Vec<Vec<T>>;

#[derive(Debug, Clone)]
struct BlockTape<T> {
    input: Tensor<T>,
    expand: Option<(BnCache<T>, Tensor<T>)>,
    dw_bn: BnCache<T>,
    dw_out: Tensor<T>,
    se: SeCache<T>,
    se_out: Tensor<T>,
    project_bn: BnCache<T>,
}

impl<T> BlockTape<T> {
    fn dw_input(&self) -> &Tensor<T> {
        self.expand.as_ref().map_or(&self.input, |(_, h)| h)
    }
}

#[derive(Debug, Clone)]
struct Tape<T> {
    input: Tensor<T>,
    stem_bn: BnCache<T>,
    stem_out: Tensor<T>,
    blocks: Vec<BlockTape<T>>,
    pools: Vec<(Vec<u32>, [usize; 4])>,
    up_inputs: Vec<[usize; 4]>,
    head_input: Tensor<T>,
}

/// Result of a forward pass. Carries the recorded activations when run in
/// training mode.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logits: Tensor<T>,
    tape: Option<Tape<T>>,
}

impl<T> Forward<T> {
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

/// Segmentation network with its trainable parameters and batch-norm
/// running statistics.
#[derive(Debug, Clone)]
pub struct UNet<T> {
    pub config: ModelConfig,
    pub info: Vec<ParamInfo>,
    pub params: Vec<Vec<T>>,
    /// Running `(mean, variance)` of every batch-norm layer.
    pub running: Vec<(Vec<T>, Vec<T>)>,
    arch: Arch,
}

fn from_f64<T: Real>(v: f64) -> T {
    T::from_f64(v).unwrap_or(T::zero())
}

fn take_many<T, const N: usize>(grads: &mut [Vec<T>], ids: [usize; N]) -> [Vec<T>; N] {
    ids.map(|i| std::mem::take(&mut grads[i]))
}

fn put_many<T, const N: usize>(grads: &mut [Vec<T>], ids: [usize; N], values: [Vec<T>; N]) {
    for (i, v) in ids.into_iter().zip(values) {
        grads[i] = v;
    }
}

impl<T: Real> UNet<T> {
    /// Fan-in scaled uniform weights and biases, unit BN scale, zero shift.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (info, arch) = build(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = info
            .iter()
            .map(|p| match p.kind {
                ParamKind::Weight | ParamKind::Bias => {
                    let bound = 1.0 / (p.fan_in as f64).sqrt();
                    (0..p.len()).map(|_| from_f64(rng.random_range(-bound..bound))).collect()
                }
                ParamKind::BnScale => vec![T::one(); p.len()],
                ParamKind::BnShift => vec![T::zero(); p.len()],
            })
            .collect();
        let running = arch.bn_widths.iter().map(|&c| (vec![T::zero(); c], vec![T::one(); c])).collect();
        Ok(Self {
            config,
            info,
            params,
            running,
            arch,
        })
    }

    /// Assembles a model from stored tensors, checking every shape.
    pub fn from_parts(config: ModelConfig, params: Vec<Vec<T>>, running: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        config.validate()?;
        let (info, arch) = build(&config);
        if params.len() != info.len() || running.len() != arch.bn_widths.len() {
            return Err(Error::Structure(format!(
                "{} tensors and {} norm buffers for a model with {} and {}",
                params.len(),
                running.len(),
                info.len(),
                arch.bn_widths.len()
            )));
        }
        for (p, i) in params.iter().zip(&info) {
            if p.len() != i.len() {
                return Err(Error::Structure(format!("{} has {} values, expected {}", i.name, p.len(), i.len())));
            }
        }
        for ((m, v), &c) in running.iter().zip(&arch.bn_widths) {
            if m.len() != c || v.len() != c {
                return Err(Error::Structure("batch-norm buffer width mismatch".into()));
            }
        }
        Ok(Self {
            config,
            info,
            params,
            running,
            arch,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn cast<U: Real>(&self) -> UNet<U> {
        let conv = |v: &Vec<T>| -> Vec<U> { v.iter().map(|x| from_f64(x.to_f64().unwrap_or(0.0))).collect() };
        UNet {
            config: self.config.clone(),
            info: self.info.clone(),
            params: self.params.iter().map(conv).collect(),
            running: self.running.iter().map(|(m, v)| (conv(m), conv(v))).collect(),
            arch: self.arch.clone(),
        }
    }

    fn bn(&self, ids: BnIds, x: &Tensor<T>, training: bool) -> (Tensor<T>, BnCache<T>) {
        let (m, v) = &self.running[ids.buffer];
        batchnorm_forward(
            x,
            &self.params[ids.scale],
            &self.params[ids.shift],
            (m, v),
            self.config.bn_eps,
            training,
        )
    }

    fn se_weights(&self, ids: &BlockIds) -> SeWeights<'_, T> {
        SeWeights {
            w1: &self.params[ids.se[0]],
            b1: &self.params[ids.se[1]],
            w2: &self.params[ids.se[2]],
            b2: &self.params[ids.se[3]],
            r: ids.shape.reduced,
        }
    }

    fn block_forward(&self, ids: &BlockIds, x: Tensor<T>, training: bool) -> (Tensor<T>, BlockTape<T>) {
        let s = ids.shape;
        debug_assert_eq!(x.c, s.cin, "block input channels");
        let expand = ids.expand.map(|(w, bn)| {
            let z = pointwise_forward(&x, &self.params[w], None, s.expanded);
            let (z, cache) = self.bn(bn, &z, training);
            (cache, relu_forward(&z))
        });
        let dw_in = expand.as_ref().map_or(&x, |(_, h)| h);
        let z = depthwise_forward(dw_in, &self.params[ids.dw.0], self.config.kernel);
        let (z, dw_bn) = self.bn(ids.dw.1, &z, training);
        let dw_out = relu_forward(&z);
        let (se_out, se) = se_forward(&dw_out, &self.se_weights(ids));
        let z = pointwise_forward(&se_out, &self.params[ids.project.0], None, s.cout);
        let (mut y, project_bn) = self.bn(ids.project.1, &z, training);
        match ids.residual {
            Some((w, b)) => y.add_assign(&pointwise_forward(&x, &self.params[w], Some(&self.params[b]), s.cout)),
            None => y.add_assign(&x),
        }
        let tape = BlockTape {
            input: x,
            expand,
            dw_bn,
            dw_out,
            se,
            se_out,
            project_bn,
        };
        (y, tape)
    }

    fn block_backward(&self, ids: &BlockIds, tape: &BlockTape<T>, dy: &Tensor<T>, grads: &mut Grads<T>) -> Tensor<T> {
        let (pw, pbn) = ids.project;
        let [mut gs, mut gh] = take_many(grads, [pbn.scale, pbn.shift]);
        let dz = batchnorm_backward(&tape.project_bn, &self.params[pbn.scale], dy, &mut gs, &mut gh);
        put_many(grads, [pbn.scale, pbn.shift], [gs, gh]);
        let dse_out = pointwise_backward(&tape.se_out, &self.params[pw], &dz, &mut grads[pw], None);
        let [mut g1, mut g2, mut g3, mut g4] = take_many(grads, ids.se);
        let ddw_out = se_backward(
            &tape.dw_out,
            &tape.se,
            &self.se_weights(ids),
            &dse_out,
            SeGrads {
                w1: &mut g1,
                b1: &mut g2,
                w2: &mut g3,
                b2: &mut g4,
            },
        );
        put_many(grads, ids.se, [g1, g2, g3, g4]);
        let dz = relu_backward(&tape.dw_out, &ddw_out);
        let (dww, dbn) = ids.dw;
        let [mut gs, mut gh] = take_many(grads, [dbn.scale, dbn.shift]);
        let dz = batchnorm_backward(&tape.dw_bn, &self.params[dbn.scale], &dz, &mut gs, &mut gh);
        put_many(grads, [dbn.scale, dbn.shift], [gs, gh]);
        let dh = depthwise_backward(tape.dw_input(), &self.params[dww], self.config.kernel, &dz, &mut grads[dww]);
        let mut dx = match (ids.expand, &tape.expand) {
            (Some((ew, ebn)), Some((cache, h))) => {
                let dz = relu_backward(h, &dh);
                let [mut gs, mut gh] = take_many(grads, [ebn.scale, ebn.shift]);
                let dz = batchnorm_backward(cache, &self.params[ebn.scale], &dz, &mut gs, &mut gh);
                put_many(grads, [ebn.scale, ebn.shift], [gs, gh]);
                pointwise_backward(&tape.input, &self.params[ew], &dz, &mut grads[ew], None)
            }
            _ => dh,
        };
        match ids.residual {
            Some((w, b)) => {
                let [mut gw, mut gb] = take_many(grads, [w, b]);
                let dr = pointwise_backward(&tape.input, &self.params[w], dy, &mut gw, Some(&mut gb));
                put_many(grads, [w, b], [gw, gb]);
                dx.add_assign(&dr);
            }
            None => dx.add_assign(dy),
        }
        dx
    }

    /// Runs the network on a batch `[n, 1, pings, depth]`. Training mode
    /// normalizes with batch statistics and records a tape for
    /// [`UNet::backward`].
    pub fn forward(&self, input: &Tensor<T>, training: bool) -> Result<Forward<T>> {
        if input.c != 1 {
            return Err(Error::Structure(format!("input has {} channels, expected 1", input.c)));
        }
        self.config.check_input(input.w, input.h)?;
        let depth = self.config.depth;
        let (sw, sbn) = self.arch.stem;
        let z = conv_forward(input, &self.params[sw], self.config.width, self.config.kernel);
        let (z, stem_bn) = self.bn(sbn, &z, training);
        let stem_out = relu_forward(&z);
        let mut cur = stem_out.clone();
        let mut tapes = Vec::with_capacity(2 * depth);
        let mut pools = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        for k in 0..depth {
            let (s, t) = self.block_forward(&self.arch.blocks[k], cur, training);
            tapes.push(t);
            let (kw, kh) = self.config.pool(k);
            let (p, arg) = maxpool_forward(&s, kw, kh);
            pools.push((arg, s.shape()));
            skips.push(s);
            cur = p;
        }
        let mut up_inputs = Vec::with_capacity(depth);
        for k in (0..depth).rev() {
            let (kw, kh) = self.config.pool(k);
            up_inputs.push(cur.shape());
            let u = upsample_forward(&cur, kw, kh);
            let skip = skips.pop().expect("one skip per level");
            let c = concat(&u, &skip);
            let (y, t) = self.block_forward(&self.arch.blocks[2 * depth - 1 - k], c, training);
            tapes.push(t);
            cur = y;
        }
        let (hw, hb) = self.arch.head;
        let logits = pointwise_forward(&cur, &self.params[hw], Some(&self.params[hb]), self.config.planes());
        let tape = training.then(|| Tape {
            input: input.clone(),
            stem_bn,
            stem_out,
            blocks: tapes,
            pools,
            up_inputs,
            head_input: cur,
        });
        Ok(Forward { logits, tape })
    }

    /// Inference-mode logits using running batch-norm statistics.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(input, false)?.logits)
    }

    /// Gradients of a scalar loss given its gradient with respect to the
    /// logits of a recorded forward pass.
    pub fn backward(&self, fwd: &Forward<T>, dlogits: &Tensor<T>) -> Result<Grads<T>> {
        let tape = fwd
            .tape
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs a forward pass recorded in training mode".into()))?;
        if dlogits.shape() != fwd.logits.shape() {
            return Err(Error::Structure("logit gradient shape differs from the logits".into()));
        }
        let depth = self.config.depth;
        let mut grads = self.zero_grads();
        let (hw, hb) = self.arch.head;
        let [mut gw, mut gb] = take_many(&mut grads, [hw, hb]);
        let mut d = pointwise_backward(&tape.head_input, &self.params[hw], dlogits, &mut gw, Some(&mut gb));
        put_many(&mut grads, [hw, hb], [gw, gb]);
        let mut dskips: Vec<Option<Tensor<T>>> = vec![None; depth];
        for (i, k) in (0..depth).enumerate() {
            let idx = 2 * depth - 1 - k;
            let dc = self.block_backward(&self.arch.blocks[idx], &tape.blocks[idx], &d, &mut grads);
            let (du, ds) = split(&dc, self.config.width);
            dskips[k] = Some(ds);
            let (kw, kh) = self.config.pool(k);
            d = upsample_backward(&du, tape.up_inputs[depth - 1 - i], kw, kh);
        }
        for k in (0..depth).rev() {
            let (arg, shape) = &tape.pools[k];
            let mut ds = maxpool_backward(arg, &d, *shape);
            ds.add_assign(dskips[k].as_ref().expect("decoder visited every level"));
            d = self.block_backward(&self.arch.blocks[k], &tape.blocks[k], &ds, &mut grads);
        }
        let (sw, sbn) = self.arch.stem;
        let dz = relu_backward(&tape.stem_out, &d);
        let [mut gs, mut gh] = take_many(&mut grads, [sbn.scale, sbn.shift]);
        let dz = batchnorm_backward(&tape.stem_bn, &self.params[sbn.scale], &dz, &mut gs, &mut gh);
        put_many(&mut grads, [sbn.scale, sbn.shift], [gs, gh]);
        conv_backward(&tape.input, &self.params[sw], self.config.kernel, &dz, &mut grads[sw]);
        Ok(grads)
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates.
    pub fn update_running(&mut self, fwd: &Forward<T>) {
        let Some(tape) = &fwd.tape else { return };
        let mut caches: Vec<(BnIds, &BnCache<T>)> = vec![(self.arch.stem.1, &tape.stem_bn)];
        for (ids, t) in self.arch.blocks.iter().zip(&tape.blocks) {
            if let (Some((_, bn)), Some((c, _))) = (ids.expand, &t.expand) {
                caches.push((bn, c));
            }
            caches.push((ids.dw.1, &t.dw_bn));
            caches.push((ids.project.1, &t.project_bn));
        }
        let mom = self.config.bn_momentum;
        for (ids, cache) in caches {
            let (m, v) = &mut self.running[ids.buffer];
            for c in 0..m.len() {
                let rm = m[c].to_f64().unwrap_or(0.0);
                let rv = v[c].to_f64().unwrap_or(1.0);
                m[c] = from_f64((1.0 - mom) * rm + mom * cache.mean[c]);
                v[c] = from_f64((1.0 - mom) * rv + mom * cache.var_unbiased[c]);
            }
        }
    }
}
