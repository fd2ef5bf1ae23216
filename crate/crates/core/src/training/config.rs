use crate::model::Variant;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Optimizer, schedule and model settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_factor: f64,
    /// Epochs without a strict validation-loss decrease before the rate drops.
    pub plateau_patience: usize,
    pub seed: u64,
    pub window: usize,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0003,
            weight_decay: 0.0012,
            batch_size: 64,
            epochs: 110,
            plateau_factor: 0.6,
            plateau_patience: 10,
            seed: 0,
            window: 4,
            variant: Variant::DeepConv,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.learning_rate) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !positive(self.plateau_factor) || self.plateau_factor >= 1.0 {
            return bad(format!("plateau_factor must be in (0, 1), got {}", self.plateau_factor));
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        crate::model::block_count(self.window)?;
        Ok(())
    }
}

/// Mixes `seed` with a stream tag (splitmix64 finalizer) so that weight
/// initialization, batch shuffling and data splitting draw from unrelated
/// generators.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        let cases: [fn(&mut TrainConfig); 5] = [
            |c| c.learning_rate = 0.0,
            |c| c.batch_size = 1,
            |c| c.plateau_patience = 0,
            |c| c.plateau_factor = 1.0,
            |c| c.window = 12,
        ];
        for f in cases {
            let mut c = TrainConfig::default();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
