//! The toy decoder: embedding, a stack of pre-norm layers (simplified
//! multi-head selective-state mixer + gated FFN), final norm, LM head.
//!
//! The same architecture serves as dense teacher and spiking student. In
//! the student, adaptive ternary neurons sit at up to four sites per layer
//! (before the input and output projections of both the mixer and the FFN)
//! and the whole network runs T time-step lanes, packed as row blocks of
//! every activation; the teacher runs a single lane and no sites.

mod checkpoint;
mod net;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use net::{
    ffn_forward, next_token_accuracy, rate_decoded_logits, selective_scan, ForwardTrace,
    LayerTrace, Model,
};
pub use params::{Lifted, ParamId, ParamSet};

use serde::{Deserialize, Serialize};

use crate::atmn::NeuronKind;
use crate::error::{Error, Result};

/// Where spiking neurons sit inside a decoder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeSite {
    /// After the first RMSNorm, before the mixer input projection.
    MixerIn,
    /// Before the mixer output projection.
    MixerOut,
    /// After the second RMSNorm, before the FFN gate/up projections.
    FfnIn,
    /// Before the FFN down projection.
    FfnOut,
}

impl SpikeSite {
    pub const ALL: [SpikeSite; 4] = [
        SpikeSite::MixerIn,
        SpikeSite::MixerOut,
        SpikeSite::FfnIn,
        SpikeSite::FfnOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpikeSite::MixerIn => "mixer_in",
            SpikeSite::MixerOut => "mixer_out",
            SpikeSite::FfnIn => "ffn_in",
            SpikeSite::FfnOut => "ffn_out",
        }
    }
}

/// Architecture hyperparameters shared by teacher and student.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Per-head SSM state size.
    pub d_state: usize,
    pub d_ffn: usize,
    /// Spiking time steps (1..=8); ignored while `spiking` is false.
    pub t_steps: usize,
    pub spiking: bool,
    pub spike_sites: Vec<SpikeSite>,
    pub neuron: NeuronKind,
    pub rms_eps: f64,
    /// Membrane time constant of the spiking neurons.
    pub tau: f64,
    /// Rectangular surrogate half-width.
    pub surrogate_width: f64,
    /// Initial threshold parameter a (V = exp(a) starts at exp(a_init)).
    pub a_init: f64,
}

impl Default for ModelConfig {
    /// Toy defaults: byte-level vocab (256 bytes + SEP + PAD), minutes-scale
    /// CPU training.
    fn default() -> Self {
        ModelConfig {
            vocab_size: 258,
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_state: 16,
            d_ffn: 384,
            t_steps: 4,
            spiking: false,
            spike_sites: Vec::new(),
            neuron: NeuronKind::Ternary,
            rms_eps: 1e-6,
            tau: 2.0,
            surrogate_width: 1.0,
            a_init: 0.0,
        }
    }
}

impl ModelConfig {
    /// The default config with spiking enabled at all four sites.
    pub fn spiking_default() -> Self {
        ModelConfig {
            spiking: true,
            spike_sites: SpikeSite::ALL.to_vec(),
            ..ModelConfig::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 {
            return err(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_state", self.d_state),
            ("d_ffn", self.d_ffn),
        ] {
            if v == 0 {
                return err(format!("{name} must be >= 1"));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return err(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(1..=8).contains(&self.t_steps) {
            return err(format!("t_steps must be in 1..=8, got {}", self.t_steps));
        }
        if !self.spiking && !self.spike_sites.is_empty() {
            return err("spike_sites must be empty when spiking is disabled".into());
        }
        for (i, site) in self.spike_sites.iter().enumerate() {
            if self.spike_sites[..i].contains(site) {
                return err(format!("duplicate spike site {}", site.name()));
            }
        }
        if self.rms_eps <= 0.0 {
            return err(format!("rms_eps must be > 0, got {}", self.rms_eps));
        }
        if self.tau <= 0.0 {
            return err(format!("tau must be > 0, got {}", self.tau));
        }
        if self.surrogate_width <= 0.0 {
            return err(format!(
                "surrogate_width must be > 0, got {}",
                self.surrogate_width
            ));
        }
        Ok(())
    }

    /// Teacher/student pairing requires matching logits and feature shapes.
    pub fn check_distill_compatible(&self, student: &ModelConfig) -> Result<()> {
        if self.vocab_size != student.vocab_size
            || self.d_model != student.d_model
            || self.n_layers != student.n_layers
        {
            return Err(Error::Config(format!(
                "teacher and student must agree on vocab_size/d_model/n_layers: \
                 teacher ({}, {}, {}), student ({}, {}, {})",
                self.vocab_size,
                self.d_model,
                self.n_layers,
                student.vocab_size,
                student.d_model,
                student.n_layers
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::spiking_default().validate().unwrap();
    }

    #[test]
    fn spiking_off_forces_empty_sites() {
        let cfg = ModelConfig {
            spike_sites: vec![SpikeSite::MixerIn],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn head_divisibility_enforced() {
        let cfg = ModelConfig {
            d_model: 10,
            n_heads: 4,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn t_steps_range_enforced() {
        for bad in [0usize, 9] {
            let cfg = ModelConfig {
                t_steps: bad,
                spiking: true,
                spike_sites: vec![SpikeSite::FfnIn],
                ..ModelConfig::default()
            };
            assert!(cfg.validate().is_err(), "t_steps = {bad}");
        }
    }

    #[test]
    fn duplicate_sites_rejected() {
        let cfg = ModelConfig {
            spiking: true,
            spike_sites: vec![SpikeSite::FfnIn, SpikeSite::FfnIn],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
