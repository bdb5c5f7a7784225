//! Production solvers against the brute-force references in `carbon-market-oracles`.

use carbon_market::carbonflow::{clear_carbon_flow, nodal_intensities, CarbonFlowConfig};
use carbon_market::clearing::{allocate_transportation, clear_carbon_cost, clear_flexible_demand};
use carbon_market::lp::{solve_lp, LpStatus};
use carbon_market::model::{builtin_three_bus, check_solution, LineParams, THREE_BUS_DEFAULT_LINE};
use carbon_market_oracles as oracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn simplex_matches_vertex_enumeration_on_200_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..200 {
        let lp = oracle::random_bounded_lp(&mut rng, 6, 8);
        let want = oracle::vertex_enumeration(&lp).expect("generator guarantees feasibility");
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "lp {k}");
        assert!((sol.objective - want).abs() <= 1e-8 * want.abs().max(1.0), "lp {k}: {} vs {want}", sol.objective);
        assert!(lp.max_violation(&sol.values) <= 1e-7, "lp {k}");
    }
}

#[test]
fn greedy_matches_transport_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (p_g, p_d, e_g, c) = oracle::random_transport(&mut rng);
        let greedy = allocate_transportation(&p_g, &p_d, &e_g, &c).unwrap();
        let want = oracle::transport_lp(&p_g, &p_d, &e_g, &c);
        assert!((greedy.carbon_term - want).abs() <= 1e-6, "{} vs {want}", greedy.carbon_term);
    }
}

#[test]
fn three_bus_dispatch_is_merit_order() {
    let net = builtin_three_bus(None).unwrap();
    let sol = clear_carbon_cost(&net).unwrap();
    let want = oracle::merit_order(&net, 48.0).unwrap();
    assert_eq!(want, vec![20.0, 3.0, 25.0]);
    for (p, w) in sol.p_g.iter().zip(&want) {
        assert!((p - w).abs() < 1e-9);
    }
}

#[test]
fn intensities_match_dense_solve() {
    let mut lines = [THREE_BUS_DEFAULT_LINE; 3];
    lines[1] = LineParams { susceptance: 1.0, flow_limit: 3.0 };
    let mut nets = vec![builtin_three_bus(Some(lines)).unwrap()];
    nets.extend((0..30).map(oracle::random_network));
    for net in nets {
        let d = clear_flexible_demand(&net).unwrap();
        let got = nodal_intensities(&net, &d.p_g, &d.p_d, &d.line_flows).unwrap().lambda;
        let want = oracle::dense_intensities(&net, &d.p_g, &d.line_flows);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn carbon_flow_dominated_by_carbon_cost_on_random_networks() {
    for seed in 0..30 {
        let net = oracle::random_network(seed);
        let cc = clear_carbon_cost(&net).unwrap();
        let cf = clear_carbon_flow(&net, &CarbonFlowConfig::default()).unwrap();
        check_solution(&net, &cf.dispatch).unwrap();
        assert!(cf.residual <= 1e-6);
        assert!(cf.dispatch.objective <= cc.objective + 1e-8 * cc.objective.abs().max(1.0), "seed {seed}");
    }
}
