use spikemar::data::{gen_copy_task, Batcher};
use spikemar::distill::{train_distill, train_teacher, DistillConfig, TeacherConfig};
use spikemar::model::{Model, ModelConfig};

fn main() {
    let corpus = gen_copy_task(4, 512, 33).unwrap();
    let mut teacher = Model::init(ModelConfig::default(), 19).unwrap();
    let tcfg = TeacherConfig { steps: 600, batch_size: 8, seq_len: 32, lr: 2e-3, ..TeacherConfig::default() };
    let mut batcher = Batcher::new(&corpus, 8, 32, 1).unwrap();
    let rows = train_teacher(&mut teacher, &mut batcher, &tcfg).unwrap();
    eprintln!("teacher ce -> {:.3}", rows.last().unwrap().total);

    for lr in [3e-3, 1e-3] {
        let mut student = Model::init(ModelConfig::spiking_default(), 20).unwrap();
        student.params.copy_matching(&teacher.params).unwrap();
        let mut batcher = Batcher::new(&corpus, 4, 32, 2).unwrap();
        let cfg = DistillConfig { steps: 1200, batch_size: 4, seq_len: 32, lr, ..DistillConfig::default() };
        let rows = train_distill(&teacher, &mut student, &mut batcher, &cfg).unwrap();
        eprint!("lr={lr:.0e}:");
        for c in (0..1200).step_by(150) {
            let t: f64 = rows[c..c + 10].iter().map(|r| r.total).sum::<f64>() / 10.0;
            let l1: f64 = rows[c..c + 10].iter().map(|r| r.l1).sum::<f64>() / 10.0;
            let l2: f64 = rows[c..c + 10].iter().map(|r| r.l2).sum::<f64>() / 10.0;
            eprint!("  [{c}] {t:.2}({l1:.2}+{l2:.2})");
        }
        eprintln!("\n  ratio@500 = {:.3}", rows[495..505].iter().map(|r| r.total).sum::<f64>() / 10.0 / rows[0].total);
    }
}
