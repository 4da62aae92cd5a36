//! Distillation loss and training-loop contracts.

use spikemar::data::{gen_copy_task, Batcher};
use spikemar::distill::{
    bidirectional_kl, evaluate, prenorm_align, total_distill_loss, train_distill, DistillConfig,
    FeatureAlign,
};
use spikemar::error::Error;
use spikemar::model::{ForwardTrace, Model, ModelConfig, SpikeSite};
use spikemar::numerics::{finite_diff_grad, max_rel_err, GradTape, Tensor};

fn small_cfg(layers: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 16,
        d_model: 16,
        n_layers: layers,
        n_heads: 2,
        d_state: 4,
        d_ffn: 24,
        ..ModelConfig::default()
    }
}

fn spiking_cfg(layers: usize) -> ModelConfig {
    ModelConfig {
        spiking: true,
        spike_sites: SpikeSite::ALL.to_vec(),
        ..small_cfg(layers)
    }
}

fn byte_cfg(layers: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 258,
        ..small_cfg(layers)
    }
}

fn byte_spiking_cfg(layers: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 258,
        ..spiking_cfg(layers)
    }
}

#[test]
fn student_equal_to_teacher_gives_zero_total() {
    let teacher = Model::init(small_cfg(2), 1).unwrap();
    let mut student = Model::init(small_cfg(2), 2).unwrap();
    student.params.copy_matching(&teacher.params).unwrap();
    let tokens = [1usize, 5, 9, 13];
    let tape = GradTape::new();
    let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
    let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
    let cfg = DistillConfig::default();
    let (total, detail) = total_distill_loss(&tape, &t, &s, &cfg, 1e-6).unwrap();
    assert!(total.item().unwrap().abs() < 1e-12);
    assert!(detail.breakdown.l1_logit.abs() < 1e-12);
    assert!(detail.breakdown.l2_feature.abs() < 1e-12);
}

#[test]
fn breakdown_total_is_weighted_sum_of_components() {
    let teacher = Model::init(small_cfg(2), 3).unwrap();
    let student = Model::init(spiking_cfg(2), 4).unwrap();
    let tokens = [2usize, 4, 6, 8, 10];
    let tape = GradTape::new();
    let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
    let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
    let cfg = DistillConfig {
        feature_weight: 2.5,
        ..DistillConfig::default()
    };
    let (total, detail) = total_distill_loss(&tape, &t, &s, &cfg, 1e-6).unwrap();
    let b = detail.breakdown;
    assert!((b.total - (b.l1_logit + 2.5 * b.l2_feature)).abs() < 1e-12);
    assert!((total.item().unwrap() - b.total).abs() < 1e-15);
    assert_eq!(detail.per_layer_l2.len(), 2);
}

#[test]
fn degenerate_case_reduces_to_single_pair_losses() {
    // T = 1, L = 1, M = 1: the total is exactly biKL + feature alignment
    // of the one teacher/student pair
    let teacher = Model::init(small_cfg(1), 5).unwrap();
    let mut scfg = spiking_cfg(1);
    scfg.t_steps = 1;
    let student = Model::init(scfg, 6).unwrap();
    let tokens = [7usize];
    let tape = GradTape::new();
    let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
    let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
    let cfg = DistillConfig {
        alpha: 0.2,
        beta: 0.7,
        feature_align: FeatureAlign::PreNorm,
        feature_weight: 1.0,
        ..DistillConfig::default()
    };
    let (total, _) = total_distill_loss(&tape, &t, &s, &cfg, 1e-6).unwrap();
    let l1 = bidirectional_kl(&tape, &t.logits, &s.logits, 0.2, 0.7).unwrap();
    let l2 = prenorm_align(
        &tape,
        &t.layers[0].pre_norm_input,
        &s.layers[0].pre_norm_input,
        1e-6,
    )
    .unwrap();
    let expect = l1.item().unwrap() + l2.item().unwrap();
    assert!((total.item().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn doubling_t_with_identical_lanes_leaves_total_unchanged() {
    // spiking on with no sites: every lane repeats the same values, so the
    // 1/T averaging must cancel
    let teacher = Model::init(small_cfg(2), 8).unwrap();
    let mut totals = Vec::new();
    for t_steps in [2usize, 4] {
        let mut scfg = small_cfg(2);
        scfg.spiking = true;
        scfg.t_steps = t_steps;
        let mut student = Model::init(scfg, 9).unwrap();
        student.params.copy_matching(&Model::init(small_cfg(2), 10).unwrap().params).unwrap();
        let tokens = [3usize, 1, 4];
        let tape = GradTape::new();
        let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
        let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
        let cfg = DistillConfig::default();
        let (total, _) = total_distill_loss(&tape, &t, &s, &cfg, 1e-6).unwrap();
        totals.push(total.item().unwrap());
    }
    let rel = (totals[0] - totals[1]).abs() / totals[0].abs().max(1e-12);
    assert!(rel < 1e-12, "totals {totals:?}");
}

#[test]
fn layer_count_mismatch_is_a_contract_error() {
    let teacher = Model::init(small_cfg(2), 1).unwrap();
    let student = Model::init(small_cfg(1), 2).unwrap();
    let tokens = [1usize, 2];
    let tape = GradTape::new();
    let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
    let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
    let err = total_distill_loss(&tape, &t, &s, &DistillConfig::default(), 1e-6).unwrap_err();
    assert!(matches!(err, Error::Contract { .. }));
}

#[test]
fn gradient_wrt_student_logits_matches_fd() {
    let teacher = Model::init(small_cfg(2), 11).unwrap();
    let student = Model::init(spiking_cfg(2), 12).unwrap();
    let tokens = [1usize, 3, 5];
    let base_tape = GradTape::new();
    let t = teacher
        .forward_taped(&base_tape, &teacher.lift(&base_tape, false), &tokens)
        .unwrap();
    let s = student
        .forward_taped(&base_tape, &student.lift(&base_tape, false), &tokens)
        .unwrap();
    let cfg = DistillConfig::default();

    // rebuild the student trace with watched logits so they act as a leaf
    let logits0 = Tensor::new(s.logits.shape().to_vec(), s.logits.data().to_vec()).unwrap();
    let with_logits = |tape: &GradTape, logits: Tensor| ForwardTrace {
        logits,
        layers: s
            .layers
            .iter()
            .map(|l| spikemar::model::LayerTrace {
                pre_norm_input: Tensor::new(
                    l.pre_norm_input.shape().to_vec(),
                    l.pre_norm_input.data().to_vec(),
                )
                .unwrap(),
                post_norm_feature: Tensor::new(
                    l.post_norm_feature.shape().to_vec(),
                    l.post_norm_feature.data().to_vec(),
                )
                .unwrap(),
                spikes: Vec::new(),
            })
            .collect(),
        lanes: s.lanes,
        positions: s.positions,
    };
    let _ = tape_check(&teacher, &t, &cfg, &logits0, &with_logits);

    fn tape_check(
        teacher: &Model,
        t: &ForwardTrace,
        cfg: &DistillConfig,
        logits0: &Tensor,
        with_logits: &dyn Fn(&GradTape, Tensor) -> ForwardTrace,
    ) {
        let tape = GradTape::new();
        let watched = tape.watch(logits0);
        let trace = with_logits(&tape, watched.clone());
        let t2 = clone_trace(teacher, t);
        let (total, _) = total_distill_loss(&tape, &t2, &trace, cfg, 1e-6).unwrap();
        let grads = tape.backward(&total).unwrap();
        let analytic = grads.get(&watched).unwrap().to_vec();
        let fd = finite_diff_grad(
            |probe| {
                let tp = GradTape::new();
                let trace = with_logits(&tp, probe.clone());
                let t2 = clone_trace(teacher, t);
                let (total, _) = total_distill_loss(&tp, &t2, &trace, cfg, 1e-6)?;
                Tensor::scalar(total.item()?)
            },
            logits0,
            1e-5,
        )
        .unwrap();
        let err = max_rel_err(&analytic, fd.data(), 1e-8);
        assert!(err < 1e-4, "logit gradient mismatch {err}");
    }

    fn clone_trace(_teacher: &Model, t: &ForwardTrace) -> ForwardTrace {
        ForwardTrace {
            logits: Tensor::new(t.logits.shape().to_vec(), t.logits.data().to_vec()).unwrap(),
            layers: t
                .layers
                .iter()
                .map(|l| spikemar::model::LayerTrace {
                    pre_norm_input: Tensor::new(
                        l.pre_norm_input.shape().to_vec(),
                        l.pre_norm_input.data().to_vec(),
                    )
                    .unwrap(),
                    post_norm_feature: Tensor::new(
                        l.post_norm_feature.shape().to_vec(),
                        l.post_norm_feature.data().to_vec(),
                    )
                    .unwrap(),
                    spikes: Vec::new(),
                })
                .collect(),
            lanes: t.lanes,
            positions: t.positions,
        }
    }
}

#[test]
fn gradient_wrt_dense_parameters_matches_fd() {
    // smooth end-to-end path: spiking disabled
    let teacher = Model::init(small_cfg(2), 13).unwrap();
    let student = Model::init(small_cfg(2), 14).unwrap();
    let tokens = [2usize, 7, 11];
    let cfg = DistillConfig::default();

    let tape = GradTape::new();
    let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
    let lifted = student.lift(&tape, true);
    let s = student.forward_taped(&tape, &lifted, &tokens).unwrap();
    let (total, _) = total_distill_loss(&tape, &t, &s, &cfg, student.config.rms_eps).unwrap();
    let grads = tape.backward(&total).unwrap();
    let collected = lifted.collect_grads(&grads);

    let loss_value = |model: &Model| -> f64 {
        let tp = GradTape::new();
        let t = teacher.forward_taped(&tp, &teacher.lift(&tp, false), &tokens).unwrap();
        let s = model.forward_taped(&tp, &model.lift(&tp, false), &tokens).unwrap();
        let (total, _) = total_distill_loss(&tp, &t, &s, &cfg, model.config.rms_eps).unwrap();
        total.item().unwrap()
    };

    // probe a few elements of every parameter tensor
    let h = 1e-5;
    let mut checked = 0;
    for slot in 0..student.params.len() {
        let name = {
            let (n, _) = student.params.iter().nth(slot).unwrap();
            n.to_string()
        };
        let g = collected[slot].as_ref().expect("every dense param gets a gradient");
        let numel = g.len();
        for k in 0..3usize.min(numel) {
            let i = (k * 97) % numel;
            let mut probe = Model::init(student.config.clone(), 14).unwrap();
            probe.params.copy_matching(&student.params).unwrap();
            let id = probe.params.id_of(&name).unwrap();
            probe.params.get_mut(id).data_mut()[i] += h;
            let up = loss_value(&probe);
            probe.params.get_mut(id).data_mut()[i] -= 2.0 * h;
            let down = loss_value(&probe);
            let fd = (up - down) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (g[i] - fd).abs() / denom < 1e-4,
                "param {name}[{i}]: analytic {} vs fd {fd}",
                g[i]
            );
            checked += 1;
        }
    }
    assert!(checked > 30);
}

#[test]
fn no_gradient_reaches_teacher_parameters() {
    let teacher = Model::init(small_cfg(2), 15).unwrap();
    let student = Model::init(spiking_cfg(2), 16).unwrap();
    let tokens = [1usize, 2, 3];
    let tape = GradTape::new();
    let t_lift = teacher.lift(&tape, false);
    let t = teacher.forward_taped(&tape, &t_lift, &tokens).unwrap();
    let s_lift = student.lift(&tape, true);
    let s = student.forward_taped(&tape, &s_lift, &tokens).unwrap();
    let (total, _) =
        total_distill_loss(&tape, &t, &s, &DistillConfig::default(), 1e-6).unwrap();
    let grads = tape.backward(&total).unwrap();
    for g in t_lift.collect_grads(&grads) {
        assert!(g.is_none(), "teacher must stay isolated from gradients");
    }
    // and the student does receive some
    let got: usize = s_lift
        .collect_grads(&grads)
        .iter()
        .filter(|g| g.is_some())
        .count();
    assert!(got > 0);
}

#[test]
fn zero_steps_returns_student_unchanged() {
    let teacher = Model::init(byte_cfg(1), 17).unwrap();
    let mut student = Model::init(byte_spiking_cfg(1), 18).unwrap();
    let before: Vec<Vec<f64>> = student.params.iter().map(|(_, t)| t.data().to_vec()).collect();
    let corpus = gen_copy_task(3, 16, 9).unwrap();
    let mut batcher = Batcher::new(&corpus, 2, 8, 0).unwrap();
    let cfg = DistillConfig {
        steps: 0,
        seq_len: 8,
        batch_size: 2,
        ..DistillConfig::default()
    };
    let rows = train_distill(&teacher, &mut student, &mut batcher, &cfg).unwrap();
    assert!(rows.is_empty());
    let after: Vec<Vec<f64>> = student.params.iter().map(|(_, t)| t.data().to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn short_distill_run_reduces_loss_and_is_deterministic() {
    let run = || {
        let teacher = Model::init(byte_cfg(2), 19).unwrap();
        let mut student = Model::init(byte_spiking_cfg(2), 20).unwrap();
        student.params.copy_matching(&teacher.params).unwrap();
        let corpus = gen_copy_task(4, 64, 9).unwrap();
        let mut batcher = Batcher::new(&corpus, 4, 8, 1).unwrap();
        let cfg = DistillConfig {
            steps: 40,
            batch_size: 4,
            seq_len: 8,
            lr: 3e-3,
            ..DistillConfig::default()
        };
        let rows = train_distill(&teacher, &mut student, &mut batcher, &cfg).unwrap();
        (rows, student)
    };
    let (rows, student) = run();
    assert_eq!(rows.len(), 40);
    let first = rows.first().unwrap().total;
    let last_avg: f64 = rows[35..].iter().map(|r| r.total).sum::<f64>() / 5.0;
    assert!(
        last_avg < first,
        "loss should move down: first {first}, tail {last_avg}"
    );
    // determinism end to end
    let (rows2, student2) = run();
    assert_eq!(rows.len(), rows2.len());
    for (a, b) in rows.iter().zip(&rows2) {
        assert_eq!(a.total.to_bits(), b.total.to_bits());
    }
    for ((_, a), (_, b)) in student.params.iter().zip(student2.params.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn divergence_aborts_with_last_good_parameters() {
    let teacher = Model::init(byte_cfg(1), 23).unwrap();
    let mut student = Model::init(byte_spiking_cfg(1), 24).unwrap();
    let corpus = gen_copy_task(5, 32, 9).unwrap();
    let mut batcher = Batcher::new(&corpus, 2, 8, 2).unwrap();
    let cfg = DistillConfig {
        steps: 50,
        batch_size: 2,
        seq_len: 8,
        lr: 1e6, // guaranteed blow-up
        ..DistillConfig::default()
    };
    match train_distill(&teacher, &mut student, &mut batcher, &cfg) {
        Err(Error::Diverged { .. }) => {
            for (_, t) in student.params.iter() {
                assert!(t.data().iter().all(|v| v.is_finite()));
            }
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn evaluate_produces_finite_stats() {
    let teacher = Model::init(byte_cfg(2), 25).unwrap();
    let student = Model::init(byte_spiking_cfg(2), 26).unwrap();
    let corpus = gen_copy_task(6, 32, 9).unwrap();
    let mut batcher = Batcher::new(&corpus, 4, 8, 3).unwrap();
    let stats = evaluate(&teacher, &student, &mut batcher, 2, &DistillConfig::default()).unwrap();
    assert!(stats.total.is_finite() && stats.total > 0.0);
    assert!((0.0..=1.0).contains(&stats.next_token_acc));
    assert!((0.0..=1.0).contains(&stats.firing_rate_mean));
}

#[test]
fn all_alignment_modes_run() {
    let teacher = Model::init(small_cfg(2), 27).unwrap();
    let student = Model::init(spiking_cfg(2), 28).unwrap();
    let tokens = [1usize, 2, 3, 4];
    for mode in [
        FeatureAlign::None,
        FeatureAlign::PreNorm,
        FeatureAlign::PostNorm,
        FeatureAlign::Both,
    ] {
        let tape = GradTape::new();
        let t = teacher.forward_taped(&tape, &teacher.lift(&tape, false), &tokens).unwrap();
        let s = student.forward_taped(&tape, &student.lift(&tape, false), &tokens).unwrap();
        let cfg = DistillConfig {
            feature_align: mode,
            ..DistillConfig::default()
        };
        let (total, detail) = total_distill_loss(&tape, &t, &s, &cfg, 1e-6).unwrap();
        assert!(total.item().unwrap().is_finite());
        if mode == FeatureAlign::None {
            assert_eq!(detail.breakdown.l2_feature, 0.0);
        } else {
            assert!(detail.breakdown.l2_feature > 0.0);
        }
    }
}
