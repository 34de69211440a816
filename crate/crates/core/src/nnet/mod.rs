//! U-Net segmentation network built from MBConv blocks with
//! squeeze-and-excite, with a hand-written reverse-mode backward pass.
//!
//! Layout: a 5×5 stem convolution, `depth` encoder blocks each followed by
//! max pooling (depth-only on odd blocks, depth and time on even blocks),
//! then `depth` decoder units that upsample bilinearly, concatenate the
//! encoder output at that resolution and apply an MBConv block mapping
//! `2C` channels back to `C`. A pointwise head emits `10 × groups` logit
//! planes at input resolution.

mod checkpoint;
mod model;
pub mod ops;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use model::{BlockShape, Forward, Grads, ParamInfo, ParamKind, UNet};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::preprocess::Orientation;
use crate::{Error, Result};

/// Floating-point element type for network computations.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Logit planes per head group, in output order.
pub const PLANES_PER_GROUP: usize = 10;
pub const PLANE_AIR: usize = 0;
pub const PLANE_AIR_ORIGINAL: usize = 1;
pub const PLANE_SEAFLOOR: usize = 2;
pub const PLANE_SEAFLOOR_ORIGINAL: usize = 3;
pub const PLANE_SURFACE: usize = 4;
pub const PLANE_PASSIVE: usize = 5;
pub const PLANE_BAD_PERIOD: usize = 6;
/// First of the three patch planes, ordered as the patch variants.
pub const PLANE_PATCH: usize = 7;

/// Head groups a model emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One unconditional group, for single-orientation training.
    Single,
    /// Unconditional, downfacing-conditioned and upfacing-conditioned
    /// groups.
    Bifacing,
}

impl ModelKind {
    pub fn groups(self) -> usize {
        match self {
            Self::Single => 1,
            Self::Bifacing => 3,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Self::Single),
            "bifacing" => Ok(Self::Bifacing),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Which head group to read predictions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadGroup {
    Unconditional,
    Conditioned(Orientation),
}

impl HeadGroup {
    /// Plane offset of the group; conditioned groups fall back to the
    /// unconditional one on single-group models.
    pub fn offset(self, kind: ModelKind) -> usize {
        match (kind, self) {
            (ModelKind::Single, _) | (_, Self::Unconditional) => 0,
            (ModelKind::Bifacing, Self::Conditioned(Orientation::Downfacing)) => PLANES_PER_GROUP,
            (ModelKind::Bifacing, Self::Conditioned(Orientation::Upfacing)) => 2 * PLANES_PER_GROUP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Backbone channel count C.
    pub width: usize,
    /// Encoder blocks; the decoder mirrors it.
    pub depth: usize,
    pub kernel: usize,
    pub expansion: usize,
    pub first_expansion: usize,
    pub se_reduction: usize,
    pub kind: ModelKind,
    /// Input (pings, depth bins).
    pub input: (usize, usize),
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 32,
            depth: 6,
            kernel: 5,
            expansion: 6,
            first_expansion: 1,
            se_reduction: 2,
            kind: ModelKind::Bifacing,
            input: (128, 512),
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn planes(&self) -> usize {
        PLANES_PER_GROUP * self.kind.groups()
    }

    /// Number of encoder blocks that also halve the ping axis.
    pub fn time_pools(&self) -> usize {
        self.depth / 2
    }

    /// Pool kernel `(ping, depth)` after encoder block `k` (0-based).
    pub fn pool(&self, k: usize) -> (usize, usize) {
        if k.is_multiple_of(2) {
            (1, 2)
        } else {
            (2, 2)
        }
    }

    /// Bottleneck spatial shape for an input shape.
    pub fn bottleneck(&self, input: (usize, usize)) -> (usize, usize) {
        (input.0 >> self.time_pools(), input.1 >> self.depth)
    }

    pub fn check_input(&self, w: usize, h: usize) -> Result<()> {
        let tw = 1usize << self.time_pools();
        let th = 1usize << self.depth;
        if w == 0 || h == 0 || !w.is_multiple_of(tw) || !h.is_multiple_of(th) {
            return Err(Error::Structure(format!(
                "input {w}x{h} must be a multiple of {tw}x{th} for depth {}",
                self.depth
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.expansion == 0 || self.first_expansion == 0 {
            return Err(Error::Config("width, depth and expansions must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        if self.se_reduction == 0 {
            return Err(Error::Config("squeeze-excite reduction must be positive".into()));
        }
        self.check_input(self.input.0, self.input.1)
    }

    /// Shapes of every MBConv block: encoder blocks then decoder blocks
    /// from the deepest level up.
    pub fn blocks(&self) -> Vec<BlockShape> {
        let c = self.width;
        let mut out = Vec::with_capacity(2 * self.depth);
        for k in 0..self.depth {
            let e = if k == 0 { self.first_expansion } else { self.expansion };
            out.push(BlockShape::new(c, c, e, self.se_reduction));
        }
        for _ in 0..self.depth {
            out.push(BlockShape::new(2 * c, c, self.expansion, self.se_reduction));
        }
        out
    }
}

/// Exact number of trainable scalars.
pub fn param_count(config: &ModelConfig) -> usize {
    model::layout(config).iter().map(|p| p.len()).sum()
}
