use gaimd::model::check_exponent;
use gaimd::relaxed::{
    frontier_is_convex, index_of_rate, lambda_star, lambda_star_bisection, lambda_star_closed_form,
    pareto_frontier, per_user_values, solve_relaxed, threshold_for_lambda, total_load,
};
use gaimd::sim::{simulate_threshold, RunConfig, StopRule};
use gaimd::{Scenario, UserParams};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..0.95]
}

fn user() -> impl Strategy<Value = UserParams> {
    (0.2..5.0, gamma(), 0.05..0.95).prop_map(|(a, gamma, b)| UserParams { a, gamma, b })
}

fn admissible(u: &UserParams, alpha: f64) -> bool {
    (alpha - 1.0).abs() > 0.05 && (2.0 - alpha - u.gamma).abs() > 0.05 && check_exponent(u, alpha, 0).is_ok()
}

fn user_and_alpha() -> impl Strategy<Value = (UserParams, f64)> {
    (user(), 0.2..4.0).prop_filter("admissible exponent", |(u, alpha)| admissible(u, *alpha))
}

fn population() -> impl Strategy<Value = (Vec<UserParams>, f64, f64)> {
    (prop::collection::vec(user(), 1..10), 0.2..4.0, 0.1..50.0)
        .prop_filter("admissible exponent", |(users, alpha, _)| users.iter().all(|u| admissible(u, *alpha)))
}

proptest! {
    #[test]
    fn index_inverts_threshold((u, alpha) in user_and_alpha(), log_lambda in -5.0..5.0f64) {
        let lambda = log_lambda.exp();
        let x = threshold_for_lambda(&u, alpha, lambda).unwrap();
        prop_assert!(rel(index_of_rate(&u, alpha, x).unwrap(), lambda) < 1e-12);
    }

    #[test]
    fn threshold_ignores_growth_coefficient((u, alpha) in user_and_alpha(), scale in 0.1..10.0, lambda in 0.1..10.0) {
        let v = UserParams { a: u.a * scale, ..u };
        let x = threshold_for_lambda(&u, alpha, lambda).unwrap();
        prop_assert!(rel(threshold_for_lambda(&v, alpha, lambda).unwrap(), x) < 1e-14);
        let pu = per_user_values(&u, alpha, lambda).unwrap();
        let pv = per_user_values(&v, alpha, lambda).unwrap();
        prop_assert!(rel(pv.j_star, pu.j_star) < 1e-14);
        prop_assert!(rel(pv.g_star, pu.g_star) < 1e-14);
    }

    #[test]
    fn multiplier_prices_capacity_exactly((users, alpha, c) in population()) {
        let closed = lambda_star_closed_form(&users, alpha, c);
        let bisected = lambda_star_bisection(&users, alpha, c).unwrap();
        prop_assert!(rel(bisected, closed) < 1e-9);
        prop_assert!(rel(total_load(&users, alpha, closed), c) < 1e-9);
        let l = lambda_star(&users, alpha, c).unwrap();
        prop_assert!(rel(total_load(&users, alpha, l), c) < 1e-9);
    }

    #[test]
    fn relaxed_solution_is_feasible((users, alpha, c) in population()) {
        let n = users.len();
        let s = Scenario::new(users, alpha, c, vec![c / (2.0 * n as f64); n]).unwrap();
        let sol = solve_relaxed(&s).unwrap();
        prop_assert!(rel(sol.total_g, c) < 1e-9);
        for (x, u) in sol.thresholds.iter().zip(&s.users) {
            prop_assert!(rel(index_of_rate(u, alpha, *x).unwrap(), sol.lambda_star) < 1e-12);
        }
    }

    #[test]
    fn frontier_is_convex_on_dense_grids((u, alpha) in user_and_alpha(), lo in -3.0..0.0f64, span in 1.0..4.0f64) {
        let grid: Vec<f64> = (0..100).map(|i| (lo + span * i as f64 / 99.0).exp()).collect();
        let pts = pareto_frontier(&u, alpha, &grid).unwrap();
        prop_assert!(frontier_is_convex(&pts));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Values do not depend on `a`: a simulation with a doubled growth
    // coefficient reproduces the closed forms.
    #[test]
    fn simulated_values_ignore_growth_coefficient((u, alpha) in user_and_alpha(), lambda in 0.2..5.0) {
        let x_bar = threshold_for_lambda(&u, alpha, lambda).unwrap();
        let want = per_user_values(&u, alpha, lambda).unwrap();
        for scale in [1.0, 2.0] {
            let v = UserParams { a: u.a * scale, ..u };
            let s = Scenario::new(vec![v], alpha, 1.0, vec![v.b * x_bar]).unwrap();
            let stats = simulate_threshold(&s, &[x_bar], &RunConfig::new(StopRule::MaxEvents(5))).unwrap();
            prop_assert!(rel(stats.average_fairness(), want.j_star) < 1e-9);
            prop_assert!(rel(stats.average_load(), want.g_star) < 1e-9);
        }
    }
}

#[test]
fn trade_off_limits() {
    let lambda = 1e6;
    let u = UserParams { a: 1.0, gamma: 0.5, b: 0.5 };
    let small = per_user_values(&u, 0.5, lambda).unwrap();
    let base = per_user_values(&u, 0.5, 1.0).unwrap();
    assert!(small.g_star < 1e-6 * base.g_star);
    assert!(-small.j_star < 0.0 && -small.j_star > -1e-3 * base.j_star);

    let large = per_user_values(&u, 2.0, lambda).unwrap();
    assert!(-large.j_star > 1e2);
}
