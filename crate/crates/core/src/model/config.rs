use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token / feature dimension.
    pub dim: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Number of slide-level labels.
    pub slide_classes: usize,
    /// Number of instance classes.
    pub instance_classes: usize,
    /// Scale of the positional encoding added to instance tokens.
    pub pos_weight: f64,
    /// Pixel coordinates are divided by this before encoding.
    pub pos_divisor: f64,
    pub max_pos: f64,
    pub head_hidden: usize,
    pub ffn_expansion: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Defaults for a given token dimension and class count.
    pub fn new(dim: usize, classes: usize) -> Self {
        Self {
            dim,
            blocks: 2,
            heads: 6,
            slide_classes: classes,
            instance_classes: classes,
            pos_weight: 0.1,
            pos_divisor: 100.0,
            max_pos: 200.0,
            head_hidden: (dim / 4).max(1),
            ffn_expansion: 4,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 || self.dim % 2 != 0 {
            return fail(format!("model dim must be even and positive, got {}", self.dim));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return fail(format!("model dim {} not divisible by {} heads", self.dim, self.heads));
        }
        if self.slide_classes == 0 || self.instance_classes == 0 {
            return fail("class counts must be positive".into());
        }
        if !(self.pos_weight >= 0.0 && self.pos_weight.is_finite()) {
            return fail(format!("pos_weight must be >= 0, got {}", self.pos_weight));
        }
        if !(self.pos_divisor > 0.0) {
            return fail(format!("pos_divisor must be positive, got {}", self.pos_divisor));
        }
        if !(self.max_pos >= 1.0) {
            return fail(format!("max_pos must be >= 1, got {}", self.max_pos));
        }
        if self.head_hidden == 0 || self.ffn_expansion == 0 {
            return fail("head_hidden and ffn_expansion must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let mut c = ModelConfig::new(1280, 4);
        assert_eq!((c.blocks, c.heads, c.pos_weight, c.max_pos), (2, 6, 0.1, 200.0));
        assert!(c.validate().is_err(), "1280 is not divisible by 6");
        c.heads = 8;
        c.validate().unwrap();
        c.dim = 33;
        assert!(c.validate().is_err());
    }
}
