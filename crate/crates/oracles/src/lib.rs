//! Reference solutions computed without the production solver paths.
//!
//! * [`vertex_enumeration`]: optimum of a small bounded LP by checking every
//!   basic solution.
//! * [`merit_order`]: cheapest-first dispatch of a copper-plate system.
//! * [`dense_intensities`]: the nodal carbon balance solved as one dense system.
//! * [`transport_lp`]: the transportation problem stated directly as an LP.
//!
//! Plus seeded generators for random LPs, transportation instances and small networks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use carbon_market::lp::{solve_lp, LinearProgram, LpStatus, Relation, Sense};
use carbon_market::model::{Bus, Consumer, Generator, Line, Network};

/// Optimal objective of `lp` by enumerating all basic solutions, or `None` if
/// no feasible vertex exists. Every variable must have finite bounds.
///
/// A vertex fixes `n` linearly independent hyperplanes taken from the
/// constraint rows and the variable bounds.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    assert!(n <= 8, "vertex enumeration is exponential; keep it small");
    assert!(lp.variables.iter().all(|v| v.lower.is_finite() && v.upper.is_finite()));

    // every row and bound is a candidate hyperplane; equalities are enforced by
    // the feasibility check, which also covers linearly dependent equality rows
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut a = vec![0.0; n];
        for &(v, x) in &c.terms {
            a[v.0] += x;
        }
        if a.iter().any(|&x| x != 0.0) {
            planes.push((a, c.rhs));
        }
    }
    for (j, v) in lp.variables.iter().enumerate() {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        planes.push((a.clone(), v.lower));
        if v.upper != v.lower {
            planes.push((a, v.upper));
        }
    }
    let sign = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = Vec::with_capacity(n);
    combinations(planes.len(), n, &mut pick, &mut |idx| {
        let rows: Vec<&(Vec<f64>, f64)> = idx.iter().map(|&i| &planes[i]).collect();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[i].1);
        let Some(x) = a.lu().solve(&b) else { return };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let x: Vec<f64> = x.iter().copied().collect();
        if lp.max_violation(&x) > 1e-9 {
            return;
        }
        let obj = lp.objective_at(&x);
        if best.is_none_or(|b| sign * obj > sign * b) {
            best = Some(obj);
        }
    });
    best
}

fn combinations(m: usize, k: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    let start = pick.last().map_or(0, |&l| l + 1);
    for i in start..m {
        if m - i < k - pick.len() {
            break;
        }
        pick.push(i);
        combinations(m, k, pick, f);
        pick.pop();
    }
}

/// Random LP with finite variable bounds and a known feasible point, so it is
/// feasible and bounded. Up to `max_vars` variables and `max_rows` rows, mixing
/// all three relations.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng, max_vars: usize, max_rows: usize) -> LinearProgram {
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(0..=max_rows);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut lp = LinearProgram::new(sense);
    let mut x0 = Vec::with_capacity(n);
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let lo = rng.random_range(-5.0..5.0f64).round();
            let hi = lo + rng.random_range(0.0..10.0f64).round();
            x0.push(if hi > lo { rng.random_range(lo..=hi) } else { lo });
            lp.add_var(format!("x{j}"), lo, hi, rng.random_range(-10.0..10.0f64).round())
        })
        .collect();
    for i in 0..m {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.random_bool(0.7) {
                terms.push((v, rng.random_range(-5.0..5.0f64).round()));
            }
        }
        let lhs: f64 = terms.iter().map(|(v, a)| a * x0[v.0]).sum();
        let slack = rng.random_range(0.0..5.0);
        let (rel, rhs) = match rng.random_range(0..10) {
            0 => (Relation::Eq, lhs),
            1..=5 => (Relation::Le, lhs + slack),
            _ => (Relation::Ge, lhs - slack),
        };
        lp.add_constraint(format!("r{i}"), terms, rel, rhs);
    }
    lp
}

/// Cheapest-first dispatch of `demand` MW ignoring the network. Ties go to the lower index.
pub fn merit_order(net: &Network, demand: f64) -> Option<Vec<f64>> {
    let mut order: Vec<usize> = (0..net.generators.len()).collect();
    order.sort_by(|&a, &b| net.generators[a].cost.total_cmp(&net.generators[b].cost).then(a.cmp(&b)));
    let mut p: Vec<f64> = net.generators.iter().map(|g| g.p_min).collect();
    let mut left = demand - p.iter().sum::<f64>();
    if left < 0.0 {
        return None;
    }
    for m in order {
        let g = &net.generators[m];
        let add = left.min(g.p_max - g.p_min);
        p[m] += add;
        left -= add;
    }
    (left <= 1e-12).then_some(p)
}

/// Proportional-sharing intensities from the unnormalized carbon balance
/// `lambda_i * T_i - sum_j lambda_j F_ji = sum_{m at i} e_m p_m`, solved with a
/// dense LU. Buses with no throughflow are pinned to zero.
pub fn dense_intensities(net: &Network, p_g: &[f64], flows: &[f64]) -> Vec<f64> {
    let index = net.bus_index();
    let nb = net.buses.len();
    let mut a = DMatrix::<f64>::zeros(nb, nb);
    let mut b = DVector::<f64>::zeros(nb);
    let mut through = vec![0.0; nb];
    for (g, &p) in net.generators.iter().zip(p_g) {
        let i = index[g.bus.as_str()];
        through[i] += p;
        b[i] += g.emission_intensity * p;
    }
    for (l, &f) in net.lines.iter().zip(flows) {
        let (s, t) = (index[l.from_bus.as_str()], index[l.to_bus.as_str()]);
        let (from, to) = if f >= 0.0 { (s, t) } else { (t, s) };
        through[to] += f.abs();
        a[(to, from)] -= f.abs();
    }
    for i in 0..nb {
        if through[i] > 0.0 {
            a[(i, i)] += through[i];
        } else {
            a.row_mut(i).fill(0.0);
            a[(i, i)] = 1.0;
            b[i] = 0.0;
        }
    }
    a.lu().solve(&b).expect("carbon balance system is nonsingular").iter().copied().collect()
}

/// Minimum of `sum c_n e_m pi_mn` over the transportation polytope, via a plain LP.
pub fn transport_lp(p_g: &[f64], p_d: &[f64], e_g: &[f64], c: &[f64]) -> f64 {
    let nd = p_d.len();
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut pi = Vec::new();
    for m in 0..p_g.len() {
        for n in 0..nd {
            pi.push(lp.add_var(format!("pi{m}_{n}"), 0.0, f64::INFINITY, c[n] * e_g[m]));
        }
    }
    for (m, &p) in p_g.iter().enumerate() {
        lp.add_constraint(format!("row{m}"), (0..nd).map(|n| (pi[m * nd + n], 1.0)).collect(), Relation::Eq, p);
    }
    for (n, &p) in p_d.iter().enumerate() {
        lp.add_constraint(format!("col{n}"), (0..p_g.len()).map(|m| (pi[m * nd + n], 1.0)).collect(), Relation::Eq, p);
    }
    let sol = solve_lp(&lp).expect("transport LP is well formed");
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective
}

/// A random balanced transportation instance `(p_g, p_d, e_g, c_co2)` with up
/// to 4 generators and 4 consumers; intensities and costs are drawn from small
/// grids so ties occur.
pub fn random_transport(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let ng = rng.random_range(1..=4);
    let nd = rng.random_range(1..=4);
    let p_g: Vec<f64> = (0..ng).map(|_| rng.random_range(0.0..50.0)).collect();
    let total: f64 = p_g.iter().sum();
    let w: Vec<f64> = (0..nd).map(|_| rng.random_range(0.1..1.0)).collect();
    let ws: f64 = w.iter().sum();
    let p_d = w.iter().map(|x| total * x / ws).collect();
    let e_g = (0..ng).map(|_| rng.random_range(0..6) as f64 * 0.2).collect();
    let c = (0..nd).map(|_| rng.random_range(0..5) as f64 * 10.0).collect();
    (p_g, p_d, e_g, c)
}

/// A random connected network of 2 to 5 buses (a ring plus optional chords),
/// each bus carrying one generator and one consumer with random bids.
pub fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.random_range(2..=5);
    let mut net = Network::default();
    for i in 0..nb {
        net.buses.push(Bus { id: format!("b{i}"), is_reference: i == 0 });
    }
    let mut pairs: Vec<(usize, usize)> = (0..nb - 1).map(|i| (i, i + 1)).collect();
    if nb > 2 {
        pairs.push((nb - 1, 0));
    }
    if nb > 3 && rng.random_bool(0.5) {
        pairs.push((0, 2));
    }
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        net.lines.push(Line {
            id: format!("l{k}"),
            from_bus: format!("b{a}"),
            to_bus: format!("b{b}"),
            susceptance: rng.random_range(0.5..5.0),
            flow_limit: rng.random_range(5.0..40.0),
        });
    }
    for i in 0..nb {
        net.generators.push(Generator {
            id: format!("g{i}"),
            bus: format!("b{i}"),
            cost: rng.random_range(2.0..15.0),
            p_min: 0.0,
            p_max: rng.random_range(10.0..40.0),
            emission_intensity: rng.random_range(0.0..1.0),
        });
        net.consumers.push(Consumer {
            id: format!("d{i}"),
            bus: format!("b{i}"),
            utility: rng.random_range(5.0..40.0),
            p_min: 0.0,
            p_max: rng.random_range(5.0..20.0),
            carbon_cost: rng.random_range(0.0..30.0),
        });
    }
    net
}
