use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model and optimization settings. Defaults are the full-scale
/// configuration; [`Hyperparams::toy`] is the desk-scale one used in tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub d_emb: usize,
    /// Size of the final EDU representations and of the decoder state.
    /// The bidirectional encoder uses `d_hidden / 2` per direction.
    pub d_hidden: usize,
    /// Width of the classifier's projected span features.
    pub d_label: usize,
    pub window: usize,
    pub stride: usize,
    pub dropout: f64,
    pub lr: f64,
    /// L2 strength λ in `L_s + L_l + λ‖θ‖²`.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub finetune_last_k_layers: usize,
    pub encoder_layers: usize,
    pub grad_clip: f64,
    pub init_range: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d_emb: 768,
            d_hidden: 384,
            d_label: 384,
            window: 500,
            stride: 200,
            dropout: 0.5,
            lr: 1e-4,
            weight_decay: 5e-5,
            batch_size: 3,
            epochs: 30,
            finetune_last_k_layers: 4,
            encoder_layers: 1,
            grad_clip: 5.0,
            init_range: 0.1,
        }
    }
}

impl Hyperparams {
    /// Small dimensions for CPU-scale experiments.
    pub fn toy() -> Self {
        Hyperparams {
            d_emb: 16,
            d_hidden: 16,
            d_label: 16,
            lr: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_emb == 0 || self.d_hidden == 0 || self.d_label == 0 {
            return bad("dimensions must be positive");
        }
        if !self.d_hidden.is_multiple_of(2) {
            return bad("d_hidden must be even (split across encoder directions)");
        }
        if !(self.window > self.stride && self.stride > 0) {
            return bad("need window > stride > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 || self.encoder_layers == 0 {
            return bad("batch_size and encoder_layers must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.weight_decay < 0.0 {
            return bad("lr must be positive and weight_decay non-negative");
        }
        Ok(())
    }

    /// Applies a `key = value` override using the long option names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        let key = key.replace('_', "-");
        match key.as_str() {
            "d-emb" => self.d_emb = p(&key, value)?,
            "d-hidden" => self.d_hidden = p(&key, value)?,
            "d-label" => self.d_label = p(&key, value)?,
            "window" => self.window = p(&key, value)?,
            "stride" => self.stride = p(&key, value)?,
            "dropout" => self.dropout = p(&key, value)?,
            "lr" => self.lr = p(&key, value)?,
            "weight-decay" => self.weight_decay = p(&key, value)?,
            "batch-size" => self.batch_size = p(&key, value)?,
            "epochs" => self.epochs = p(&key, value)?,
            "finetune-last-k-layers" => self.finetune_last_k_layers = p(&key, value)?,
            "encoder-layers" => self.encoder_layers = p(&key, value)?,
            "grad-clip" => self.grad_clip = p(&key, value)?,
            "init-range" => self.init_range = p(&key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
