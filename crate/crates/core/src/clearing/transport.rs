//! Greedy solution of the allocation (transportation) subproblem.
//!
//! With dispatch and consumption fixed, the carbon cost of an allocation is
//! `sum_{m,n} c_n e_m pi[m][n]`. Ordering generators by ascending intensity and
//! consumers by descending carbon cost makes that cost matrix Monge, so the
//! northwest-corner fill is optimal.

use thiserror::Error;

use crate::model::{AllocationMatrix, FEASIBILITY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("total supply {supply} MW does not match total demand {demand} MW")]
    Mismatch { supply: f64, demand: f64 },
    #[error("{what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("negative or non-finite {what} at index {index}")]
    BadValue { what: &'static str, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportAllocation {
    pub pi: AllocationMatrix,
    /// tons attributed to each consumer
    pub e_d: Vec<f64>,
    /// `sum_n c_n E_n` in $
    pub carbon_term: f64,
}

fn check(values: &[f64], what: &'static str) -> Result<(), TransportError> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(index) => Err(TransportError::BadValue { what, index }),
        None => Ok(()),
    }
}

/// Minimum-carbon-cost allocation of `p_g` (per generator, intensity `e_g`) to
/// `p_d` (per consumer, carbon cost `c_co2`).
///
/// Ties are broken by index: among equally clean generators the lower index
/// is used first, among equally priced consumers the lower index is served first.
pub fn allocate_transportation(
    p_g: &[f64],
    p_d: &[f64],
    e_g: &[f64],
    c_co2: &[f64],
) -> Result<TransportAllocation, TransportError> {
    if e_g.len() != p_g.len() {
        return Err(TransportError::Length { what: "e_g", got: e_g.len(), expected: p_g.len() });
    }
    if c_co2.len() != p_d.len() {
        return Err(TransportError::Length { what: "c_co2", got: c_co2.len(), expected: p_d.len() });
    }
    check(p_g, "p_g")?;
    check(p_d, "p_d")?;
    check(e_g, "e_g")?;
    check(c_co2, "c_co2")?;
    let supply: f64 = p_g.iter().sum();
    let demand: f64 = p_d.iter().sum();
    if (supply - demand).abs() > FEASIBILITY_TOL * supply.max(demand).max(1.0) {
        return Err(TransportError::Mismatch { supply, demand });
    }

    let mut gens: Vec<usize> = (0..p_g.len()).collect();
    gens.sort_by(|&a, &b| e_g[a].total_cmp(&e_g[b]).then(a.cmp(&b)));
    let mut cons: Vec<usize> = (0..p_d.len()).collect();
    cons.sort_by(|&a, &b| c_co2[b].total_cmp(&c_co2[a]).then(a.cmp(&b)));

    let mut pi = AllocationMatrix::zeros(p_g.len(), p_d.len());
    let mut left_g: Vec<f64> = gens.iter().map(|&m| p_g[m]).collect();
    let mut left_d: Vec<f64> = cons.iter().map(|&n| p_d[n]).collect();
    let (mut i, mut j) = (0, 0);
    while i < gens.len() && j < cons.len() {
        let amount = left_g[i].min(left_d[j]);
        if amount > 0.0 {
            pi.set(gens[i], cons[j], pi.get(gens[i], cons[j]) + amount);
        }
        left_g[i] -= amount;
        left_d[j] -= amount;
        if left_g[i] <= 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    // round-off residue (within tolerance) goes to the last consumer served
    if i < gens.len() {
        if let Some(&last) = cons.last() {
            for k in i..gens.len() {
                if left_g[k] > 0.0 {
                    pi.set(gens[k], last, pi.get(gens[k], last) + left_g[k]);
                }
            }
        }
    }

    let e_d = pi.consumer_emissions(e_g);
    let carbon_term = e_d.iter().zip(c_co2).map(|(e, c)| e * c).sum();
    Ok(TransportAllocation { pi, e_d, carbon_term })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_power_goes_to_highest_carbon_cost() {
        let a = allocate_transportation(&[10.0, 10.0], &[10.0, 10.0], &[0.0, 1.0], &[0.0, 100.0]).unwrap();
        assert_eq!(a.pi.get(0, 1), 10.0);
        assert_eq!(a.pi.get(1, 0), 10.0);
        assert_eq!(a.e_d, vec![10.0, 0.0]);
        assert_eq!(a.carbon_term, 0.0);
    }

    #[test]
    fn equal_carbon_costs_give_common_cost_times_total_emissions() {
        let p_g = [3.0, 5.0, 2.0];
        let e_g = [0.9, 0.1, 0.5];
        let a = allocate_transportation(&p_g, &[4.0, 6.0], &e_g, &[7.0, 7.0]).unwrap();
        let total: f64 = p_g.iter().zip(&e_g).map(|(p, e)| p * e).sum();
        assert!((a.carbon_term - 7.0 * total).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch_and_bad_values() {
        assert!(matches!(
            allocate_transportation(&[1.0], &[2.0], &[0.1], &[1.0]),
            Err(TransportError::Mismatch { .. })
        ));
        assert!(matches!(
            allocate_transportation(&[1.0], &[1.0], &[-0.1], &[1.0]),
            Err(TransportError::BadValue { what: "e_g", index: 0 })
        ));
        assert!(matches!(
            allocate_transportation(&[1.0], &[1.0], &[0.1, 0.2], &[1.0]),
            Err(TransportError::Length { .. })
        ));
    }

    #[test]
    fn sums_hold_with_round_off() {
        let p_g = [0.1, 0.2, 0.3];
        let p_d = [0.3, 0.3];
        let a = allocate_transportation(&p_g, &p_d, &[0.3, 0.2, 0.1], &[1.0, 2.0]).unwrap();
        for (m, p) in p_g.iter().enumerate() {
            assert!((a.pi.row_sum(m) - p).abs() < 1e-12);
        }
        for (n, p) in p_d.iter().enumerate() {
            assert!((a.pi.col_sum(n) - p).abs() < 1e-12);
        }
    }
}
