//! Teacher pretraining and teacher-to-student distillation loops.
//!
//! One tape per batch item; items fan out read-only across the rayon pool
//! (capped by SPIKEMAR_THREADS) and gradients reduce in item order, so
//! results do not depend on thread count.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Batcher;
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::model::{next_token_accuracy, rate_decoded_logits, Model};
use crate::numerics::GradTape;

use super::{total_distill_loss, Adam, DistillConfig, LossBreakdown};

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("SPIKEMAR_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("rayon pool")
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            steps: 600,
            batch_size: 8,
            seq_len: 32,
        }
    }
}

struct ItemResult {
    grads: Vec<Option<Vec<f64>>>,
    breakdown: LossBreakdown,
    firing: Option<f64>,
}

/// Runs `steps` optimizer steps over `model`, evaluating `item` per batch
/// row. On a non-finite loss the model is restored to the last parameters
/// that produced a finite loss and `Error::Diverged` is returned.
fn train_loop<F>(
    model: &mut Model,
    batcher: &mut Batcher,
    steps: usize,
    mut adam: Adam,
    item: F,
) -> Result<Vec<MetricsRow>>
where
    F: Fn(&Model, &[usize], &[usize]) -> Result<ItemResult> + Sync,
{
    let mut rows = Vec::with_capacity(steps);
    let mut last_good = model.params.clone();
    for step in 0..steps {
        let batch = batcher.next_batch();
        let items: Result<Vec<ItemResult>> = pool().install(|| {
            batch
                .inputs
                .par_iter()
                .zip(batch.targets.par_iter())
                .map(|(inp, tgt)| item(model, inp, tgt))
                .collect()
        });
        let items = match items {
            Ok(items) => items,
            Err(Error::NonFinite { .. }) => {
                model.params = last_good;
                return Err(Error::Diverged { step });
            }
            Err(e) => return Err(e),
        };
        let b = items.len() as f64;
        let mean = |f: &dyn Fn(&ItemResult) -> f64| items.iter().map(|i| f(i)).sum::<f64>() / b;
        let total = mean(&|i| i.breakdown.total);
        if !total.is_finite() {
            model.params = last_good;
            return Err(Error::Diverged { step });
        }
        last_good = model.params.clone();

        // reduce gradients in item order
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; model.params.len()];
        for it in &items {
            for (slot, g) in it.grads.iter().enumerate() {
                let Some(g) = g else { continue };
                match &mut grads[slot] {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
                    slot_ref => *slot_ref = Some(g.clone()),
                }
            }
        }
        for g in grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v /= b);
        }
        adam.step(&mut model.params, &grads);

        let fired: Vec<f64> = items.iter().filter_map(|i| i.firing).collect();
        rows.push(MetricsRow {
            step,
            l1: mean(&|i| i.breakdown.l1_logit),
            l2: mean(&|i| i.breakdown.l2_feature),
            total,
            firing_rate_mean: if fired.is_empty() {
                0.0
            } else {
                fired.iter().sum::<f64>() / fired.len() as f64
            },
            lr: adam.lr(),
        });
    }
    Ok(rows)
}

/// Plain next-token cross-entropy pretraining for the dense teacher (the
/// artifact's stand-in for a pretrained base model).
pub fn train_teacher(
    model: &mut Model,
    batcher: &mut Batcher,
    config: &TeacherConfig,
) -> Result<Vec<MetricsRow>> {
    if model.config.spiking {
        return Err(Error::Config("the teacher must be a dense model".into()));
    }
    let adam = Adam::new(
        &model.params,
        config.lr,
        config.beta1,
        config.beta2,
        config.adam_eps,
    );
    train_loop(model, batcher, config.steps, adam, |model, inp, tgt| {
        let tape = GradTape::new();
        let lifted = model.lift(&tape, true);
        let trace = model.forward_taped(&tape, &lifted, inp)?;
        let logp = tape.softmax_logprobs(&trace.logits)?;
        let loss = tape.nll_rows(&logp, tgt)?;
        let grads = tape.backward(&loss)?;
        let ce = loss.item()?;
        Ok(ItemResult {
            grads: lifted.collect_grads(&grads),
            breakdown: LossBreakdown {
                l1_logit: 0.0,
                l2_feature: 0.0,
                total: ce,
            },
            firing: None,
        })
    })
}

/// SBDS training: frozen teacher, trainable student, bidirectional logit
/// loss plus feature alignment. Deterministic given the batcher seed.
pub fn train_distill(
    teacher: &Model,
    student: &mut Model,
    batcher: &mut Batcher,
    config: &DistillConfig,
) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    teacher.config.check_distill_compatible(&student.config)?;
    if teacher.config.spiking {
        return Err(Error::Config("the teacher must be a dense model".into()));
    }
    let adam = Adam::new(
        &student.params,
        config.lr,
        config.beta1,
        config.beta2,
        config.adam_eps,
    );
    let rms_eps = student.config.rms_eps;
    train_loop(student, batcher, config.steps, adam, |student, inp, _tgt| {
        let tape = GradTape::new();
        // frozen teacher: constants on the tape, no gradient can reach it
        let t_lift = teacher.lift(&tape, false);
        let t_trace = teacher.forward_taped(&tape, &t_lift, inp)?;
        let s_lift = student.lift(&tape, true);
        let s_trace = student.forward_taped(&tape, &s_lift, inp)?;
        let (loss, detail) = total_distill_loss(&tape, &t_trace, &s_trace, config, rms_eps)?;
        let grads = tape.backward(&loss)?;
        Ok(ItemResult {
            grads: s_lift.collect_grads(&grads),
            breakdown: detail.breakdown,
            firing: s_trace.mean_firing_rate(),
        })
    })
}

/// Held-out distillation loss and rate-decoded next-token accuracy.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalStats {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub next_token_acc: f64,
    pub firing_rate_mean: f64,
}

pub fn evaluate(
    teacher: &Model,
    student: &Model,
    batcher: &mut Batcher,
    n_batches: usize,
    config: &DistillConfig,
) -> Result<EvalStats> {
    let mut stats = EvalStats::default();
    let mut rows = 0usize;
    let mut fired: Vec<f64> = Vec::new();
    for _ in 0..n_batches {
        let batch = batcher.next_batch();
        for (inp, tgt) in batch.inputs.iter().zip(&batch.targets) {
            let tape = GradTape::new();
            let t_trace = teacher.forward_taped(&tape, &teacher.lift(&tape, false), inp)?;
            let s_trace = student.forward_taped(&tape, &student.lift(&tape, false), inp)?;
            let (_, detail) = total_distill_loss(&tape, &t_trace, &s_trace, config, student.config.rms_eps)?;
            stats.l1 += detail.breakdown.l1_logit;
            stats.l2 += detail.breakdown.l2_feature;
            stats.total += detail.breakdown.total;
            let decoded = rate_decoded_logits(&s_trace);
            stats.next_token_acc += next_token_accuracy(&decoded, tgt);
            if let Some(f) = s_trace.mean_firing_rate() {
                fired.push(f);
            }
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Config("evaluation needs at least one batch".into()));
    }
    let n = rows as f64;
    stats.l1 /= n;
    stats.l2 /= n;
    stats.total /= n;
    stats.next_token_acc /= n;
    stats.firing_rate_mean = if fired.is_empty() {
        0.0
    } else {
        fired.iter().sum::<f64>() / fired.len() as f64
    };
    Ok(stats)
}
