//! Spike-aware bidirectional distillation: the combined forward+reverse KL
//! logit loss, pre-normalization feature alignment, and the training loop
//! that fits a spiking student to a frozen dense teacher.

mod adam;
mod trainer;

pub use adam::Adam;
pub use trainer::{evaluate, train_distill, train_teacher, EvalStats, TeacherConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardTrace;
use crate::numerics::{GradTape, Tensor};

/// Which per-layer features the alignment loss compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureAlign {
    None,
    /// Layer inputs before the first RMSNorm (the paper's final choice).
    PreNorm,
    /// Features after the layer's final RMSNorm.
    PostNorm,
    /// Sum of both alignments.
    Both,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// Forward-KL weight in the bidirectional logit loss.
    pub alpha: f64,
    /// Reverse-KL weight.
    pub beta: f64,
    pub feature_align: FeatureAlign,
    /// Weight of the feature term relative to the logit term.
    pub feature_weight: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    /// Held-out batches used by evaluation.
    pub eval_batches: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 0.2,
            beta: 0.7,
            feature_align: FeatureAlign::PreNorm,
            feature_weight: 1.0,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            steps: 500,
            batch_size: 4,
            seq_len: 32,
            eval_batches: 4,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::Config("alpha + beta must be > 0".into()));
        }
        if self.feature_weight < 0.0 {
            return Err(Error::Config("feature_weight must be >= 0".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(Error::Config("batch_size and seq_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Component values of one total-loss evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub l1_logit: f64,
    pub l2_feature: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LossDetail {
    pub breakdown: LossBreakdown,
    pub per_layer_l2: Vec<f64>,
}

/// Sum over rows of `sum_k (alpha p(k) - beta q(k)) (log p(k) - log q(k))`,
/// computed in log-space from logits. `p_logits` (teacher) is detached;
/// gradient flows only through `q_logits`.
pub fn bidirectional_kl(
    tape: &GradTape,
    p_logits: &Tensor,
    q_logits: &Tensor,
    alpha: f64,
    beta: f64,
) -> Result<Tensor> {
    const OP: &str = "bidirectional_kl";
    if p_logits.shape() != q_logits.shape() {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: p_logits.shape().to_vec(),
            right: q_logits.shape().to_vec(),
        });
    }
    if p_logits.last_dim() < 2 {
        return Err(Error::contract(OP, "distribution needs D >= 2"));
    }
    if !p_logits.data().iter().all(|v| v.is_finite())
        || !q_logits.data().iter().all(|v| v.is_finite())
    {
        return Err(Error::NonFinite { op: OP });
    }
    // detach the teacher: log-probs computed on a throwaway tape
    let detached = GradTape::new();
    let lp = detached.softmax_logprobs(&Tensor::new(
        p_logits.shape().to_vec(),
        p_logits.data().to_vec(),
    )?)?;
    let p = detached.exp(&lp)?;

    let lq = tape.softmax_logprobs(q_logits)?;
    let q = tape.exp(&lq)?;
    let weighted = tape.sub(&tape.scale(&p, alpha)?, &tape.scale(&q, beta)?)?;
    let logdiff = tape.sub(&lp, &lq)?;
    tape.sum_all(&tape.mul(&weighted, &logdiff)?)
}

/// Mean over rows of `||PreNorm(h_teacher) - PreNorm(h_student)||_2`, where
/// PreNorm is parameter-free RMS normalization. The teacher side is
/// detached.
pub fn prenorm_align(
    tape: &GradTape,
    h_teacher: &Tensor,
    h_student: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    const OP: &str = "prenorm_align";
    if h_teacher.last_dim() != h_student.last_dim()
        || h_teacher.leading() != h_student.leading()
    {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: h_teacher.shape().to_vec(),
            right: h_student.shape().to_vec(),
        });
    }
    let detached = GradTape::new();
    let nt = detached.rmsnorm(
        &Tensor::new(h_teacher.shape().to_vec(), h_teacher.data().to_vec())?,
        None,
        eps,
    )?;
    let ns = tape.rmsnorm(h_student, None, eps)?;
    tape.rows_l2norm_mean(&tape.sub(&ns, &nt)?)
}

/// Eq.-(7)-shaped total: logit term averaged over T*M row pairs plus the
/// feature term averaged over T, M, and layers, weighted by
/// `feature_weight`. The teacher trace (one lane) is treated as constant
/// across student time steps.
pub fn total_distill_loss(
    tape: &GradTape,
    teacher: &ForwardTrace,
    student: &ForwardTrace,
    config: &DistillConfig,
    rms_eps: f64,
) -> Result<(Tensor, LossDetail)> {
    const OP: &str = "total_distill_loss";
    if teacher.lanes != 1 {
        return Err(Error::contract(OP, "teacher trace must have a single lane"));
    }
    if teacher.layers.len() != student.layers.len() {
        return Err(Error::contract(
            OP,
            format!(
                "teacher has {} layers, student {}",
                teacher.layers.len(),
                student.layers.len()
            ),
        ));
    }
    if teacher.positions != student.positions {
        return Err(Error::contract(OP, "sequence lengths differ"));
    }
    let lanes = student.lanes;
    let rows = lanes * student.positions;

    // logit term
    let p_tiled = tape.tile_rows(&teacher.logits, lanes)?;
    let l1_sum = bidirectional_kl(tape, &p_tiled, &student.logits, config.alpha, config.beta)?;
    let l1 = tape.scale(&l1_sum, 1.0 / rows as f64)?;

    // feature term
    let mut per_layer_l2 = Vec::new();
    let l2 = if config.feature_align == FeatureAlign::None {
        Tensor::scalar(0.0)?
    } else {
        let mut acc: Option<Tensor> = None;
        for (tl, sl) in teacher.layers.iter().zip(&student.layers) {
            let mut layer_loss: Option<Tensor> = None;
            if matches!(config.feature_align, FeatureAlign::PreNorm | FeatureAlign::Both) {
                let t_feat = tape.tile_rows(&tl.pre_norm_input, lanes)?;
                let term = prenorm_align(tape, &t_feat, &sl.pre_norm_input, rms_eps)?;
                layer_loss = Some(term);
            }
            if matches!(config.feature_align, FeatureAlign::PostNorm | FeatureAlign::Both) {
                let t_feat = tape.tile_rows(&tl.post_norm_feature, lanes)?;
                let term = prenorm_align(tape, &t_feat, &sl.post_norm_feature, rms_eps)?;
                layer_loss = Some(match layer_loss {
                    Some(prev) => tape.add(&prev, &term)?,
                    None => term,
                });
            }
            let layer_loss = layer_loss.expect("some alignment mode is active");
            per_layer_l2.push(layer_loss.item()?);
            acc = Some(match acc {
                Some(prev) => tape.add(&prev, &layer_loss)?,
                None => layer_loss,
            });
        }
        let n_layers = teacher.layers.len() as f64;
        tape.scale(&acc.expect("at least one layer"), 1.0 / n_layers)?
    };

    let total = tape.add(&l1, &tape.scale(&l2, config.feature_weight)?)?;
    let detail = LossDetail {
        breakdown: LossBreakdown {
            l1_logit: l1.item()?,
            l2_feature: l2.item()?,
            total: total.item()?,
        },
        per_layer_l2,
    };
    Ok((total, detail))
}
