//! Energy sweeps over sequence length, emitted as CSV.

use super::{count_forward, ArchSpec, CostModel, EnergyReport};
use crate::error::Result;
use crate::model::Model;

/// Pinned CSV header for every sweep artifact.
pub const SWEEP_CSV_HEADER: &str = "length,component,n_mac,n_mult,n_ac,firing_rate,total_pJ";

/// Instrumented sweep: one [`EnergyReport`] per length, with token
/// sequences supplied by `tokens_for` (deterministic for reproducible CSVs).
pub fn model_sweep(
    model: &Model,
    lengths: &[usize],
    cost: &CostModel,
    exp_cost: u64,
    mut tokens_for: impl FnMut(usize) -> Vec<usize>,
) -> Result<Vec<EnergyReport>> {
    lengths
        .iter()
        .map(|&m| {
            let tokens = tokens_for(m);
            count_forward(model, &tokens[..m.min(tokens.len())], cost, exp_cost)
        })
        .collect()
}

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r}"),
        None => String::new(),
    }
}

/// Rows per component plus a `total` row per length.
pub fn sweep_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for rep in reports {
        for c in &rep.components {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rep.sequence_length,
                c.name,
                c.counts.n_mac,
                c.counts.n_mult,
                c.counts.n_ac,
                fmt_rate(c.firing_rate),
                c.total_pj
            ));
        }
        out.push_str(&format!(
            "{},total,{},{},{},,{}\n",
            rep.sequence_length, rep.totals.n_mac, rep.totals.n_mult, rep.totals.n_ac, rep.total_pj
        ));
    }
    out
}

/// Analytic curves evaluated at each length, same header; counts are the
/// rounded polynomial values.
pub fn analytic_sweep_csv(specs: &[ArchSpec], lengths: &[usize], cost: &CostModel) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for &m in lengths {
        for spec in specs {
            let mf = m as f64;
            out.push_str(&format!(
                "{},{},{},{},{},,{}\n",
                m,
                spec.name,
                spec.mac.eval(mf).round() as u64,
                spec.mult.eval(mf).round() as u64,
                spec.ac.eval(mf).round() as u64,
                spec.energy_at(mf, cost)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::DEFAULT_EXP_COST;
    use crate::model::ModelConfig;

    #[test]
    fn empty_lengths_is_header_only() {
        let csv = analytic_sweep_csv(&[], &[], &CostModel::default());
        assert_eq!(csv, format!("{SWEEP_CSV_HEADER}\n"));
    }

    #[test]
    fn totals_grow_monotonically_with_length() {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_state: 2,
            d_ffn: 12,
            ..ModelConfig::default()
        };
        let model = Model::init(cfg, 3).unwrap();
        let reports = model_sweep(
            &model,
            &[2, 4, 8, 16],
            &CostModel::default(),
            DEFAULT_EXP_COST,
            |m| (0..m).map(|i| i % 16).collect(),
        )
        .unwrap();
        for pair in reports.windows(2) {
            assert!(pair[1].total_pj >= pair[0].total_pj);
        }
        let csv = sweep_csv(&reports);
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + reports.len() * (reports[0].components.len() + 1));
    }
}
