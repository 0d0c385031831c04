use serde::{Deserialize, Serialize};

use crate::error::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Skip connections pass through pyramid pooling blocks.
    Csegnet,
    /// Identity skip connections.
    UnetBaseline,
}

impl std::str::FromStr for Variant {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csegnet" => Ok(Self::Csegnet),
            "unet_baseline" => Ok(Self::UnetBaseline),
            other => Err(TensorError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Csegnet => "csegnet",
            Self::UnetBaseline => "unet_baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub stages: usize,
    pub base_channels: usize,
    pub stem_strides: Vec<usize>,
    pub pyramid_fuse_kernel: usize,
    /// Loss weight of the main head followed by one weight per auxiliary
    /// head, highest resolution first.
    pub deep_supervision_weights: Vec<f64>,
    pub input_size: (usize, usize),
    pub variant: Variant,
    /// Average upsampled auxiliary probabilities into the prediction.
    pub aggregate_aux: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_scale(5, 16, 256)
    }
}

impl ModelConfig {
    /// Four stages, 8 base channels, 128×128 input.
    pub fn desk() -> Self {
        Self::with_scale(4, 8, 128)
    }

    /// Five stages, 64 base channels, 256×256 input.
    pub fn full() -> Self {
        Self::with_scale(5, 64, 256)
    }

    pub fn with_scale(stages: usize, base_channels: usize, input: usize) -> Self {
        Self {
            num_classes: 4,
            stages,
            base_channels,
            stem_strides: vec![1, 2, 4],
            pyramid_fuse_kernel: 1,
            deep_supervision_weights: default_supervision_weights(stages),
            input_size: (input, input),
            variant: Variant::Csegnet,
            aggregate_aux: false,
        }
    }

    pub fn variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    /// Channel width of encoder stage `s`.
    pub fn channels(&self, s: usize) -> usize {
        (self.base_channels << s.min(4)).min(16 * self.base_channels)
    }

    /// Spatial size of the features at stage `s`.
    pub fn stage_size(&self, s: usize) -> (usize, usize) {
        (self.input_size.0 >> s, self.input_size.1 >> s)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let fail = |msg: String| Err(TensorError::InvalidConfig(msg));
        if self.stages < 2 {
            return fail(format!("stages must be at least 2, got {}", self.stages));
        }
        if self.num_classes < 2 || self.num_classes > 255 {
            return fail(format!("num_classes must be in 2..=255, got {}", self.num_classes));
        }
        if self.base_channels == 0 {
            return fail("base_channels must be positive".into());
        }
        if self.stem_strides.is_empty() || self.stem_strides.contains(&0) {
            return fail(format!("stem_strides must be non-empty and positive, got {:?}", self.stem_strides));
        }
        if self.pyramid_fuse_kernel.is_multiple_of(2) {
            return fail(format!("pyramid_fuse_kernel must be odd, got {}", self.pyramid_fuse_kernel));
        }
        if self.deep_supervision_weights.len() != self.stages {
            return fail(format!(
                "deep_supervision_weights needs {} entries (main + {} auxiliary), got {}",
                self.stages,
                self.stages - 1,
                self.deep_supervision_weights.len()
            ));
        }
        if self.deep_supervision_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return fail("deep_supervision_weights must be finite and non-negative".into());
        }
        let (h, w) = self.input_size;
        let factor = 1usize << (self.stages - 1);
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return fail(format!("input size {h}x{w} must be divisible by 2^(stages-1) = {factor}"));
        }
        let max_stride = *self.stem_strides.iter().max().expect("non-empty");
        if h % max_stride != 0 || w % max_stride != 0 {
            return fail(format!("input size {h}x{w} must be divisible by the largest stem stride {max_stride}"));
        }
        let (dh, dw) = self.stage_size(self.stages - 1);
        if self.variant == Variant::Csegnet && (dh < 3 || dw < 3) {
            return fail(format!("deepest stage is {dh}x{dw}; pyramid pooling needs at least 3x3"));
        }
        Ok(())
    }
}

/// `[1.0, 0.4, 0.2, 0.1]`, halving further for deeper networks.
pub fn default_supervision_weights(stages: usize) -> Vec<f64> {
    let mut w = vec![1.0, 0.4, 0.2, 0.1];
    while w.len() < stages {
        let last = *w.last().expect("non-empty");
        w.push(last / 2.0);
    }
    w.truncate(stages);
    w
}
