//! Crossover detection between analytic energy curves.

use super::{ArchSpec, CostModel};

/// Real-valued bisection root of `E_a(M) - E_b(M)` inside `[lo, hi]`, or
/// `None` when the endpoints do not bracket a sign change. Converges to a
/// relative interval width of 1e-12.
pub fn crossover_real(
    a: &ArchSpec,
    b: &ArchSpec,
    cost: &CostModel,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let f = |m: f64| a.energy_at(m, cost) - b.energy_at(m, cost);
    let (mut lo, mut hi) = (lo, hi);
    let (mut flo, fhi) = (f(lo), f(hi));
    // a crossover is a strict order change; tangency or identical curves
    // (f touching or everywhere zero) is not one
    if !(flo * fhi < 0.0) {
        return None;
    }
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Integer-rounded crossover inside a bracket, or `None` when the curves do
/// not change order there (absence is a value, not an error).
pub fn find_crossover(
    a: &ArchSpec,
    b: &ArchSpec,
    cost: &CostModel,
    bracket: (usize, usize),
) -> Option<usize> {
    let (lo, hi) = bracket;
    if lo >= hi {
        return None;
    }
    crossover_real(a, b, cost, lo as f64, hi as f64).map(|m| m.round() as usize)
}

/// Every crossover in the bracket, found by scanning a geometric grid for
/// sign changes and bisecting each segment. The priced curves are degree-2
/// polynomials, so at most two can exist.
pub fn find_crossovers(
    a: &ArchSpec,
    b: &ArchSpec,
    cost: &CostModel,
    bracket: (usize, usize),
) -> Vec<usize> {
    let (lo, hi) = bracket;
    let mut found = Vec::new();
    if lo >= hi {
        return found;
    }
    let f = |m: f64| a.energy_at(m, cost) - b.energy_at(m, cost);
    let push = |root: f64, found: &mut Vec<usize>| {
        let rounded = root.round() as usize;
        if found.last() != Some(&rounded) {
            found.push(rounded);
        }
    };
    let mut prev = lo as f64;
    let mut prev_f = f(prev);
    let mut m = prev;
    while prev < hi as f64 {
        m = (m * 1.01 + 1.0).min(hi as f64);
        let fm = f(m);
        if prev_f * fm < 0.0 {
            if let Some(root) = crossover_real(a, b, cost, prev, m) {
                push(root, &mut found);
            }
        } else if fm == 0.0 && prev_f != 0.0 {
            // grid point landed exactly on a root
            push(m, &mut found);
        }
        prev = m;
        prev_f = fm;
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Poly2;

    fn unit_cost() -> CostModel {
        CostModel {
            e_mac: 1.0,
            e_mult: 1.0,
            e_ac: 1.0,
        }
    }

    fn quadratic() -> ArchSpec {
        ArchSpec {
            name: "m2".into(),
            mac: Poly2 { c0: 0.0, c1: 0.0, c2: 1.0 },
            mult: Poly2::default(),
            ac: Poly2::default(),
        }
    }

    fn linear_100() -> ArchSpec {
        ArchSpec {
            name: "100m".into(),
            mac: Poly2::linear(100.0),
            mult: Poly2::default(),
            ac: Poly2::default(),
        }
    }

    #[test]
    fn closed_form_root_m_squared_vs_100m() {
        let m = find_crossover(&quadratic(), &linear_100(), &unit_cost(), (1, 100_000)).unwrap();
        assert_eq!(m, 100);
        // sign check on both neighbors
        let cost = unit_cost();
        let f = |m: f64| quadratic().energy_at(m, &cost) - linear_100().energy_at(m, &cost);
        assert!(f(99.0) < 0.0 && f(101.0) > 0.0);
    }

    #[test]
    fn identical_specs_have_no_crossover() {
        let a = linear_100();
        assert!(find_crossover(&a, &a.clone(), &unit_cost(), (1, 10_000)).is_none());
        assert!(find_crossovers(&a, &a.clone(), &unit_cost(), (1, 10_000)).is_empty());
    }

    #[test]
    fn bisection_residual_is_tiny_at_the_root() {
        let cost = unit_cost();
        let (a, b) = (quadratic(), linear_100());
        let root = crossover_real(&a, &b, &cost, 1.0, 100_000.0).unwrap();
        let (ea, eb) = (a.energy_at(root, &cost), b.energy_at(root, &cost));
        assert!((ea - eb).abs() < 1e-6 * eb);
    }

    #[test]
    fn grid_scan_finds_both_roots_of_a_parabola_line_pair() {
        // (M-10)(M-1000) = M^2 - 1010M + 10000 vs 0: encode as
        // a: M^2 + 10000, b: 1010M
        let a = ArchSpec {
            name: "a".into(),
            mac: Poly2 { c0: 10_000.0, c1: 0.0, c2: 1.0 },
            mult: Poly2::default(),
            ac: Poly2::default(),
        };
        let b = ArchSpec {
            name: "b".into(),
            mac: Poly2::linear(1010.0),
            mult: Poly2::default(),
            ac: Poly2::default(),
        };
        let roots = find_crossovers(&a, &b, &unit_cost(), (1, 100_000));
        assert_eq!(roots, vec![10, 1000]);
    }
}
