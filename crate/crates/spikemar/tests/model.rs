//! Model-level contracts: determinism, causality, teacher/student parity,
//! spike-site coverage, and the linear-time mixer claim.

use spikemar::atmn::NeuronKind;
use spikemar::energy::{count_forward, CostModel, DEFAULT_EXP_COST};
use spikemar::model::{
    next_token_accuracy, rate_decoded_logits, Model, ModelConfig, SpikeSite,
};

fn tiny_dense() -> ModelConfig {
    ModelConfig {
        vocab_size: 16,
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_state: 4,
        d_ffn: 24,
        ..ModelConfig::default()
    }
}

fn tiny_spiking() -> ModelConfig {
    ModelConfig {
        spiking: true,
        spike_sites: SpikeSite::ALL.to_vec(),
        ..tiny_dense()
    }
}

#[test]
fn forward_is_deterministic_across_runs() {
    let model = Model::init(tiny_spiking(), 99).unwrap();
    let tokens = [3usize, 1, 4, 1, 5, 9, 2, 6];
    let a = model.forward_values(&tokens).unwrap();
    let b = model.forward_values(&tokens).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn out_of_vocab_token_is_an_input_error() {
    let model = Model::init(tiny_dense(), 1).unwrap();
    assert!(model.forward_values(&[3, 99]).is_err());
    assert!(model.forward_values(&[]).is_err());
}

#[test]
fn teacher_logits_invariant_to_t_steps() {
    let mut cfg = tiny_dense();
    let m1 = Model::init(cfg.clone(), 5).unwrap();
    cfg.t_steps = 7;
    let mut m2 = Model::init(cfg, 5).unwrap();
    m2.params.copy_matching(&m1.params).unwrap();
    let tokens = [0usize, 7, 2, 9];
    let a = m1.forward_values(&tokens).unwrap();
    let b = m2.forward_values(&tokens).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.lanes, 1);
}

#[test]
fn spiking_disabled_student_equals_teacher_bitwise() {
    let teacher = Model::init(tiny_dense(), 21).unwrap();
    let mut student = Model::init(tiny_dense(), 22).unwrap();
    let copied = student.params.copy_matching(&teacher.params).unwrap();
    assert_eq!(copied, teacher.params.len());
    let tokens = [1usize, 2, 3, 4, 5, 6];
    let a = teacher.forward_values(&tokens).unwrap();
    let b = student.forward_values(&tokens).unwrap();
    assert_eq!(a.logits, b.logits, "parity must be bit-for-bit");
}

#[test]
fn empty_sites_with_spiking_on_reproduces_teacher_per_lane() {
    let teacher = Model::init(tiny_dense(), 31).unwrap();
    let mut cfg = tiny_dense();
    cfg.spiking = true; // lanes = T, but no spike sites
    let mut student = Model::init(cfg, 32).unwrap();
    student.params.copy_matching(&teacher.params).unwrap();
    let tokens = [4usize, 4, 8, 15];
    let t = teacher.forward_values(&tokens).unwrap();
    let s = student.forward_values(&tokens).unwrap();
    assert_eq!(s.lanes, 4);
    let block = tokens.len() * 16;
    for lane in 0..s.lanes {
        assert_eq!(
            &s.logits.data()[lane * block..(lane + 1) * block],
            t.logits.data(),
            "lane {lane} must equal the teacher exactly"
        );
    }
}

#[test]
fn causality_perturbation_is_exact() {
    for model in [
        Model::init(tiny_dense(), 8).unwrap(),
        Model::init(tiny_spiking(), 8).unwrap(),
    ] {
        let base = [5usize, 3, 7, 1, 2, 11, 6, 0];
        let mut poked = base;
        let m = 4;
        poked[m] = 13;
        let a = model.forward_values(&base).unwrap();
        let b = model.forward_values(&poked).unwrap();
        let v = 16;
        let lanes = a.lanes;
        for lane in 0..lanes {
            for pos in 0..m {
                let row = lane * base.len() + pos;
                assert_eq!(
                    &a.logits.data()[row * v..(row + 1) * v],
                    &b.logits.data()[row * v..(row + 1) * v],
                    "logits before the perturbed position must not move"
                );
            }
        }
        let changed = a.logits.data()[(m + (lanes - 1) * base.len()) * v..]
            != b.logits.data()[(m + (lanes - 1) * base.len()) * v..];
        assert!(changed, "perturbation must reach its own position");
    }
}

#[test]
fn four_sites_give_four_trains_per_layer() {
    let model = Model::init(tiny_spiking(), 77).unwrap();
    let trace = model.forward_values(&[1, 2, 3, 4, 5]).unwrap();
    assert_eq!(trace.spike_train_count(), 4 * 2);
    for layer in &trace.layers {
        let mut sites: Vec<SpikeSite> = layer.spikes.iter().map(|(s, _)| *s).collect();
        sites.sort();
        assert_eq!(sites, SpikeSite::ALL.to_vec());
        for (_, train) in &layer.spikes {
            let r = train.firing_rate();
            assert!((0.0..=1.0).contains(&r));
            assert_eq!(r, train.recompute_firing_rate());
        }
    }
    assert!(trace.mean_firing_rate().unwrap() > 0.0);
}

#[test]
fn binary_neuron_variant_runs_and_never_fires_negative() {
    let cfg = ModelConfig {
        neuron: NeuronKind::Binary,
        ..tiny_spiking()
    };
    let model = Model::init(cfg, 3).unwrap();
    let trace = model.forward_values(&[9, 8, 7, 6]).unwrap();
    for layer in &trace.layers {
        for (_, train) in &layer.spikes {
            assert!(train.values.iter().all(|&v| v == 0 || v == 1));
        }
    }
}

#[test]
fn collapsed_threshold_probe_stays_in_domain() {
    // a -> -inf (V -> 0): every nonzero pre-projection activation spikes
    let cfg = ModelConfig {
        a_init: -30.0,
        ..tiny_spiking()
    };
    let model = Model::init(cfg, 13).unwrap();
    let trace = model.forward_values(&[2, 4, 6, 8]).unwrap();
    assert!(trace.logits.data().iter().all(|v| v.is_finite()));
    // first-layer mixer_in sees the normalized embedding: nothing is zero
    let (_, train) = &trace.layers[0].spikes[0];
    assert_eq!(train.firing_rate(), 1.0);
}

#[test]
fn rate_decoding_and_accuracy_helpers() {
    let model = Model::init(tiny_spiking(), 41).unwrap();
    let tokens = [1usize, 2, 3, 4];
    let trace = model.forward_values(&tokens).unwrap();
    let decoded = rate_decoded_logits(&trace);
    assert_eq!(decoded.shape(), &[4, 16]);
    let acc = next_token_accuracy(&decoded, &[2, 3, 4, 5]);
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn mixer_operation_count_is_linear_in_length() {
    let model = Model::init(tiny_dense(), 55).unwrap();
    let cost = CostModel::default();
    let tokens: Vec<usize> = (0..64).map(|i| i % 16).collect();
    let half = count_forward(&model, &tokens[..32], &cost, DEFAULT_EXP_COST).unwrap();
    let full = count_forward(&model, &tokens, &cost, DEFAULT_EXP_COST).unwrap();
    for comp in ["mixer_in_proj", "mixer_scan", "mixer_out_proj"] {
        let a = half.component(comp).unwrap().counts;
        let b = full.component(comp).unwrap().counts;
        assert_eq!(2 * a.n_mac, b.n_mac, "{comp} MACs must double");
        assert_eq!(2 * a.n_mult, b.n_mult);
        assert_eq!(2 * a.n_ac, b.n_ac);
    }
}
