//! Append-only training metrics, serialized as CSV.

pub const METRICS_CSV_HEADER: &str = "step,l1,l2,total,firing_rate_mean,lr";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub firing_rate_mean: f64,
    pub lr: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.l1, r.l2, r.total, r.firing_rate_mean, r.lr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(metrics_csv(&[]), format!("{METRICS_CSV_HEADER}\n"));
    }

    #[test]
    fn rows_serialize_deterministically() {
        let rows = vec![MetricsRow {
            step: 0,
            l1: 0.5,
            l2: 0.25,
            total: 0.75,
            firing_rate_mean: 0.125,
            lr: 1e-3,
        }];
        assert_eq!(metrics_csv(&rows), metrics_csv(&rows));
        assert!(metrics_csv(&rows).contains("0,0.5,0.25,0.75,0.125,0.001"));
    }
}
