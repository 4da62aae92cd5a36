//! Closed-form per-token operation counts for 1B-shaped decoder families.
//!
//! Counting rules are count-rules-v1 (see the meter module), with one
//! addition for attention: score and attention-value products are counted
//! at M keys per query — the standard `2 M^2 d` convention, not causally
//! halved — and softmax is charged per score element (`exp_cost` mults for
//! the exponential plus one mult for normalization). Embeddings, LM head,
//! and rotary embeddings are excluded on every curve.

use serde::{Deserialize, Serialize};

use super::CostModel;
use crate::error::{Error, Result};

/// `c0 + c1*M + c2*M^2` in the sequence length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Poly2 {
    pub fn linear(c1: f64) -> Self {
        Poly2 { c0: 0.0, c1, c2: 0.0 }
    }

    pub fn eval(&self, m: f64) -> f64 {
        self.c0 + self.c1 * m + self.c2 * m * m
    }
}

/// Symbolic per-sequence operation counts of a decoder family.
#[derive(Clone, Debug)]
pub struct ArchSpec {
    pub name: String,
    pub mac: Poly2,
    pub mult: Poly2,
    pub ac: Poly2,
}

impl ArchSpec {
    /// Total energy for a length-M sequence under `cost`.
    pub fn energy_at(&self, m: f64, cost: &CostModel) -> f64 {
        cost.price_f64(self.mac.eval(m), self.mult.eval(m), self.ac.eval(m))
    }

    /// Attention-family specs carry a strictly positive quadratic MAC term;
    /// state-space families have none.
    pub fn has_quadratic_term(&self) -> bool {
        self.mac.c2 > 0.0
    }
}

/// LLaMA-3.2-1B-style attention module (GQA), per-layer shapes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionShape {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_q_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
}

/// Gated FFN (gate/up/down projections).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnShape {
    pub d_model: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
}

/// Discrete multi-head Mamba-2 module.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mamba2Shape {
    pub d_model: usize,
    pub n_layers: usize,
    pub d_inner: usize,
    pub d_state: usize,
    pub n_heads: usize,
    pub n_groups: usize,
    pub conv_width: usize,
}

/// The three shipped 1B-shaped curves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchShapes {
    pub attention: AttentionShape,
    pub ffn: FfnShape,
    pub mamba2: Mamba2Shape,
}

impl Default for ArchShapes {
    /// Published LLaMA-3.2-1B shapes and Mamba-2 defaults applied to the
    /// same dims for Llamba-1B.
    fn default() -> Self {
        ArchShapes {
            attention: AttentionShape {
                d_model: 2048,
                n_layers: 16,
                n_q_heads: 32,
                n_kv_heads: 8,
                head_dim: 64,
            },
            ffn: FfnShape {
                d_model: 2048,
                n_layers: 16,
                d_ffn: 8192,
            },
            mamba2: Mamba2Shape {
                d_model: 2048,
                n_layers: 16,
                d_inner: 4096,
                d_state: 64,
                n_heads: 64,
                n_groups: 1,
                conv_width: 4,
            },
        }
    }
}

impl ArchShapes {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("archspec shapes: {e}")))
    }

    pub fn specs(&self, exp_cost: u64) -> [ArchSpec; 3] {
        [
            attention_spec(&self.attention, exp_cost),
            ffn_spec(&self.ffn),
            mamba2_spec(&self.mamba2, exp_cost),
        ]
    }
}

fn norm_mult(d: usize) -> f64 {
    2.0 * d as f64
}

fn norm_ac(d: usize) -> f64 {
    d as f64
}

fn attention_spec(s: &AttentionShape, exp_cost: u64) -> ArchSpec {
    let layers = s.n_layers as f64;
    let d = s.d_model as f64;
    let q_dim = (s.n_q_heads * s.head_dim) as f64;
    let kv_dim = (s.n_kv_heads * s.head_dim) as f64;
    // q, k, v, o projections per token
    let proj_mac = d * (q_dim + 2.0 * kv_dim) + q_dim * d;
    // scores + attention-value products: M keys per query
    let quad_mac = 2.0 * q_dim;
    // softmax per score element: exponential + normalization
    let quad_mult = s.n_q_heads as f64 * (exp_cost as f64 + 1.0);
    ArchSpec {
        name: "llama32_attention".into(),
        mac: Poly2 {
            c0: 0.0,
            c1: layers * proj_mac,
            c2: layers * quad_mac,
        },
        mult: Poly2 {
            c0: 0.0,
            c1: layers * norm_mult(s.d_model),
            c2: layers * quad_mult,
        },
        ac: Poly2::linear(layers * (norm_ac(s.d_model) + d)),
    }
}

fn ffn_spec(s: &FfnShape) -> ArchSpec {
    let layers = s.n_layers as f64;
    let d = s.d_model as f64;
    let f = s.d_ffn as f64;
    // silu on the gate priced like other transcendentals would be, but the
    // dominant term is the three projections; keep the elementwise gate at
    // the default 4+1 mults per element
    ArchSpec {
        name: "llama32_ffn".into(),
        mac: Poly2::linear(layers * 3.0 * d * f),
        mult: Poly2::linear(layers * (5.0 * f + norm_mult(s.d_model))),
        ac: Poly2::linear(layers * (norm_ac(s.d_model) + d)),
    }
}

fn mamba2_spec(s: &Mamba2Shape, exp_cost: u64) -> ArchSpec {
    let layers = s.n_layers as f64;
    let d = s.d_model as f64;
    let inner = s.d_inner as f64;
    let bc = 2.0 * (s.n_groups * s.d_state) as f64;
    let in_proj = d * (2.0 * inner + bc + s.n_heads as f64);
    let conv = s.conv_width as f64 * (inner + bc);
    let scan_mac = 2.0 * inner * s.d_state as f64;
    let scan_mult = inner * s.d_state as f64 + inner;
    let gate_mult = (exp_cost as f64 + 1.0) * inner;
    let out_proj = inner * d;
    ArchSpec {
        name: "llamba_mamba2".into(),
        mac: Poly2::linear(layers * (in_proj + conv + scan_mac + out_proj)),
        mult: Poly2::linear(layers * (scan_mult + gate_mult + norm_mult(s.d_model))),
        ac: Poly2::linear(layers * (norm_ac(s.d_model) + d)),
    }
}
