//! Operation-level energy accounting.
//!
//! Two independent routes to an energy number:
//! instrumented counters over an actual model forward ([`count_forward`])
//! and closed-form per-token polynomials for 1B-shaped architectures
//! ([`ArchSpec`]). Reports cover the decoder stack; embedding lookup and
//! LM head are excluded, and every CSV states the counting-rule version.

mod archspec;
mod crossover;
mod fit;
mod meter;
mod svg;
mod sweep;

pub use archspec::{ArchShapes, ArchSpec, AttentionShape, FfnShape, Mamba2Shape, Poly2};
pub use crossover::{crossover_real, find_crossover, find_crossovers};
pub use fit::{linear_fit_max_residual, quadratic_fit_r2};
pub use meter::{ComponentCounts, Meter, OpCounts, PricedOp, COUNT_RULES_VERSION, DEFAULT_EXP_COST};
pub use svg::line_chart_svg;
pub use sweep::{analytic_sweep_csv, model_sweep, sweep_csv, SWEEP_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

/// Energy per operation in picojoules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub e_mac: f64,
    pub e_mult: f64,
    pub e_ac: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            e_mac: 4.6,
            e_mult: 3.7,
            e_ac: 0.9,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.e_mac <= 0.0 || self.e_mult <= 0.0 || self.e_ac <= 0.0 {
            return Err(Error::Config(format!(
                "cost model entries must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn price(&self, counts: OpCounts) -> f64 {
        counts.n_mac as f64 * self.e_mac
            + counts.n_mult as f64 * self.e_mult
            + counts.n_ac as f64 * self.e_ac
    }

    /// Same pricing for fractional (analytic) counts.
    pub fn price_f64(&self, mac: f64, mult: f64, ac: f64) -> f64 {
        mac * self.e_mac + mult * self.e_mult + ac * self.e_ac
    }
}

#[derive(Clone, Debug)]
pub struct ComponentReport {
    pub name: String,
    pub counts: OpCounts,
    pub firing_rate: Option<f64>,
    pub total_pj: f64,
}

/// Counts, firing rates, and priced totals for one forward pass.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub sequence_length: usize,
    pub components: Vec<ComponentReport>,
    pub totals: OpCounts,
    pub total_pj: f64,
    pub cost: CostModel,
    /// Snapshot of the measured model's configuration.
    pub config: ModelConfig,
}

impl EnergyReport {
    /// Pricing identity: the total must be recomputable from raw counts.
    pub fn recomputed_total_pj(&self) -> f64 {
        self.cost.price(self.totals)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentReport> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Runs an instrumented forward and prices the exact operation counts.
/// Firing rates are measured per site on this evaluation input. A
/// zero-length input yields an all-zero report.
pub fn count_forward(
    model: &Model,
    tokens: &[usize],
    cost: &CostModel,
    exp_cost: u64,
) -> Result<EnergyReport> {
    cost.validate()?;
    let mut meter = Meter::new(exp_cost);
    if !tokens.is_empty() {
        model.forward_metered(tokens, &mut meter)?;
    }
    let components: Vec<ComponentReport> = meter
        .components()
        .map(|(name, c)| ComponentReport {
            name: name.to_string(),
            counts: c.counts,
            firing_rate: c.firing_rate,
            total_pj: cost.price(c.counts),
        })
        .collect();
    let totals = meter.totals();
    Ok(EnergyReport {
        sequence_length: tokens.len(),
        components,
        totals,
        total_pj: cost.price(totals),
        cost: *cost,
        config: model.config.clone(),
    })
}
