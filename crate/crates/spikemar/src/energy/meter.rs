//! Per-forward-pass operation counters.
//!
//! Every arithmetic the instrumented forward performs must be charged here
//! through a [`PricedOp`]; an op without a pinned price is an accounting
//! error, never a silent undercount. Counting rules are pinned as
//! [`COUNT_RULES_VERSION`]:
//!
//! - projection `[rows x d_in] . [d_in x d_out]`: `rows*d_in*d_out` MAC when
//!   dense; `rate*rows*d_in*d_out` AC (and zero MAC) when the input rows are
//!   spikes with measured firing rate `rate`
//! - selective scan: per row per head, `2*N*P` MAC (state update + output
//!   readout) plus `N*P + P` mult (decay and skip scaling)
//! - rms normalization: 2 mult + 1 AC per element
//! - plain elementwise ops (gating products, residual adds): 1 mult / 1 AC
//!   per element
//! - transcendentals (exp, softplus, silu, softmax exponentials): a
//!   configurable number of mults each, default 4

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Version tag for the pinned counting rules, embedded in reports.
pub const COUNT_RULES_VERSION: &str = "count-rules-v1";

/// Default mult-equivalents charged per transcendental element.
pub const DEFAULT_EXP_COST: u64 = 4;

/// Raw operation counts for one component.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpCounts {
    pub n_mac: u64,
    pub n_mult: u64,
    pub n_ac: u64,
}

impl OpCounts {
    pub fn add(&mut self, other: OpCounts) {
        self.n_mac += other.n_mac;
        self.n_mult += other.n_mult;
        self.n_ac += other.n_ac;
    }
}

/// An operation with a pinned price.
#[derive(Clone, Debug)]
pub enum PricedOp {
    /// Dense or spike-fed matrix projection.
    Projection {
        rows: usize,
        d_in: usize,
        d_out: usize,
        /// Measured firing rate of the input spike train; `None` means dense.
        spike_rate: Option<f64>,
    },
    /// Selective-state scan over `rows` positions.
    Scan {
        rows: usize,
        heads: usize,
        d_state: usize,
        head_dim: usize,
    },
    RmsNorm { elems: usize },
    Elementwise { elems: usize },
    Transcendental { elems: usize },
    ResidualAdd { elems: usize },
    /// Anything else: deliberately unpriced, always an error.
    Other(String),
}

#[derive(Clone, Debug, Default)]
pub struct ComponentCounts {
    pub counts: OpCounts,
    pub firing_rate: Option<f64>,
}

/// Accumulates counts per component for a single forward pass.
#[derive(Debug)]
pub struct Meter {
    components: BTreeMap<String, ComponentCounts>,
    exp_cost: u64,
}

impl Default for Meter {
    fn default() -> Self {
        Self::new(DEFAULT_EXP_COST)
    }
}

impl Meter {
    pub fn new(exp_cost: u64) -> Self {
        Meter {
            components: BTreeMap::new(),
            exp_cost,
        }
    }

    pub fn charge(&mut self, component: &str, op: PricedOp) -> Result<()> {
        let delta = match op {
            PricedOp::Projection {
                rows,
                d_in,
                d_out,
                spike_rate,
            } => {
                let dense = (rows * d_in * d_out) as u64;
                match spike_rate {
                    None => OpCounts {
                        n_mac: dense,
                        ..OpCounts::default()
                    },
                    Some(rate) => {
                        if !(0.0..=1.0).contains(&rate) {
                            return Err(Error::contract(
                                "Meter::charge",
                                format!("firing rate {rate} outside [0, 1]"),
                            ));
                        }
                        self.entry(component).firing_rate = Some(rate);
                        OpCounts {
                            n_ac: (rate * dense as f64).round() as u64,
                            ..OpCounts::default()
                        }
                    }
                }
            }
            PricedOp::Scan {
                rows,
                heads,
                d_state,
                head_dim,
            } => OpCounts {
                n_mac: (rows * heads * 2 * d_state * head_dim) as u64,
                n_mult: (rows * heads * (d_state * head_dim + head_dim)) as u64,
                n_ac: 0,
            },
            PricedOp::RmsNorm { elems } => OpCounts {
                n_mac: 0,
                n_mult: 2 * elems as u64,
                n_ac: elems as u64,
            },
            PricedOp::Elementwise { elems } => OpCounts {
                n_mult: elems as u64,
                ..OpCounts::default()
            },
            PricedOp::Transcendental { elems } => OpCounts {
                n_mult: self.exp_cost * elems as u64,
                ..OpCounts::default()
            },
            PricedOp::ResidualAdd { elems } => OpCounts {
                n_ac: elems as u64,
                ..OpCounts::default()
            },
            PricedOp::Other(name) => return Err(Error::Unpriced(name)),
        };
        self.entry(component).counts.add(delta);
        Ok(())
    }

    fn entry(&mut self, component: &str) -> &mut ComponentCounts {
        self.components.entry(component.to_string()).or_default()
    }

    pub fn components(&self) -> impl Iterator<Item = (&str, &ComponentCounts)> {
        self.components.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn totals(&self) -> OpCounts {
        let mut t = OpCounts::default();
        for c in self.components.values() {
            t.add(c.counts);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_projection_counts_macs() {
        let mut m = Meter::default();
        m.charge(
            "lin",
            PricedOp::Projection {
                rows: 1,
                d_in: 2,
                d_out: 2,
                spike_rate: None,
            },
        )
        .unwrap();
        assert_eq!(m.totals().n_mac, 4);
        assert_eq!(m.totals().n_ac, 0);
    }

    #[test]
    fn spiking_projection_counts_acs() {
        // firing rate 0.25 over T=4 frames of a 2x2 projection at one
        // position: rows = 4, 0.25 * 4 * 2 * 2 = 4 AC
        let mut m = Meter::default();
        m.charge(
            "lin",
            PricedOp::Projection {
                rows: 4,
                d_in: 2,
                d_out: 2,
                spike_rate: Some(0.25),
            },
        )
        .unwrap();
        assert_eq!(m.totals().n_ac, 4);
        assert_eq!(m.totals().n_mac, 0);
    }

    #[test]
    fn unpriced_op_fails_closed() {
        let mut m = Meter::default();
        let err = m.charge("x", PricedOp::Other("fft".into())).unwrap_err();
        assert!(matches!(err, Error::Unpriced(_)));
    }

    #[test]
    fn bad_firing_rate_rejected() {
        let mut m = Meter::default();
        assert!(m
            .charge(
                "x",
                PricedOp::Projection {
                    rows: 1,
                    d_in: 1,
                    d_out: 1,
                    spike_rate: Some(1.5),
                },
            )
            .is_err());
    }
}
