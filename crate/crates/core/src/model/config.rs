use serde::{Deserialize, Serialize};

use crate::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// K azimuths.
    OneD,
    /// K azimuths followed by K elevations.
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub sources: usize,
    pub elements: usize,
    pub output: OutputMode,
}

impl ModelConfig {
    /// Desk-scale encoder (D = 64, L = 2, h = 4).
    pub fn desk(elements: usize, sources: usize, output: OutputMode) -> Self {
        ModelConfig { embed_dim: 64, depth: 2, heads: 4, mlp_ratio: 4, sources, elements, output }
    }

    /// Full-size encoder (D = 768, L = 6, h = 12).
    pub fn full(elements: usize, sources: usize, output: OutputMode) -> Self {
        ModelConfig { embed_dim: 768, depth: 6, heads: 12, mlp_ratio: 4, sources, elements, output }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.embed_dim, self.depth, self.heads, self.mlp_ratio, self.sources];
        if positive.contains(&0) {
            return Err(DoaError::InvalidArgument(format!("model sizes must be positive: {self:?}")));
        }
        if self.elements < 2 {
            return Err(DoaError::InvalidArgument("model needs at least 2 array elements".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(DoaError::InvalidArgument(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.elements + 1
    }

    pub fn label_dims(&self) -> usize {
        match self.output {
            OutputMode::OneD => 1,
            OutputMode::TwoD => 2,
        }
    }

    pub fn outputs(&self) -> usize {
        self.sources * self.label_dims()
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let hidden = self.mlp_ratio * d;
        let layer = 4 * d * d + 4 * d + 2 * hidden * d + hidden + d;
        d * 2 * self.elements + d + d * self.seq_len() + self.depth * layer + 2 * d + self.outputs() * (d + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::desk(8, 3, OutputMode::OneD).validate().unwrap();
        ModelConfig::full(12, 5, OutputMode::TwoD).validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads_and_empty_sizes() {
        let c = ModelConfig::desk(8, 3, OutputMode::OneD);
        assert!(ModelConfig { heads: 5, ..c }.validate().is_err());
        assert!(ModelConfig { depth: 0, ..c }.validate().is_err());
        assert!(ModelConfig { elements: 1, ..c }.validate().is_err());
    }

    #[test]
    fn output_count_follows_mode() {
        assert_eq!(ModelConfig::desk(8, 3, OutputMode::OneD).outputs(), 3);
        assert_eq!(ModelConfig::desk(12, 5, OutputMode::TwoD).outputs(), 10);
        assert_eq!(serde_json::to_string(&OutputMode::TwoD).unwrap(), "\"twod\"");
    }
}
