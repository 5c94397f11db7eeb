use zoegd::diagnostics::{
    coupling_experiment, descent_check, escape_experiment, median, run_problem, scaling_study,
    CouplingSetup, GradientMode,
};
use zoegd::egd::{derive_schedule, DomainExit, EgdConfig, EpsHatCeiling};
use zoegd::testbed::{make_benchmark, Stationarity};
use zoegd::{Error, SeededRng};

fn snapshot_config(epsilon: f64, delta_f: f64) -> EgdConfig {
    let mut config = EgdConfig::new(epsilon, delta_f);
    config.snapshot_every = 1;
    config.eps_hat_ceiling = EpsHatCeiling::Descent;
    config
}

#[test]
fn exact_bowl_run_has_no_descent_violations() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let config = snapshot_config(0.05, 25.0);
    let (result, counted) =
        run_problem(&bowl, &[5.0, 5.0], &config, 0, GradientMode::Exact).unwrap();
    assert_eq!(result.schedule.eta, 0.1);
    assert_eq!(result.total_queries, counted);
    assert!(descent_check(&result, &bowl, &result.schedule)
        .unwrap()
        .is_empty());
}

#[test]
fn estimated_runs_have_no_filtered_violations() {
    let quartic = make_benchmark("saddle_quartic", 2).unwrap();
    let mut config = snapshot_config(0.1, 0.5);
    config.sample_budget_override = Some(64);
    let (result, _) =
        run_problem(&quartic, &[0.5, 0.2], &config, 3, GradientMode::Estimated).unwrap();
    assert!(descent_check(&result, &quartic, &result.schedule)
        .unwrap()
        .is_empty());
}

#[test]
fn ascent_step_is_flagged() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let mut config = snapshot_config(0.05, 25.0);
    config.max_iterations = Some(30);
    let (mut result, _) = run_problem(&bowl, &[5.0, 5.0], &config, 0, GradientMode::Exact).unwrap();
    // The estimate stays accurate; the step is taken along +g_hat instead of -g_hat.
    let k = 10;
    let x = result.trace[k].x.clone().unwrap();
    let g = result.trace[k].g_hat.clone().unwrap();
    let wrong = zoegd::linalg::axpy(&x, result.schedule.eta, &g);
    result.trace[k + 1].f_value = bowl.value(&wrong);
    let schedule = result.schedule.clone();
    let violations = descent_check(&result, &bowl, &schedule).unwrap();
    assert_eq!(violations, vec![k as u64]);

    // A wrong-sign estimate fails the accuracy filter and is not checked.
    let ascent: Vec<f64> = g.iter().map(|c| -c).collect();
    result.trace[k].g_hat = Some(ascent);
    assert!(descent_check(&result, &bowl, &schedule).unwrap().is_empty());
}

#[test]
fn descent_check_needs_snapshots() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let mut config = EgdConfig::new(0.05, 25.0);
    config.max_iterations = Some(10);
    config.snapshot_every = 0;
    let (result, _) = run_problem(&bowl, &[5.0, 5.0], &config, 0, GradientMode::Exact).unwrap();
    let mut stripped = result.clone();
    for r in &mut stripped.trace {
        r.x = None;
        r.g_hat = None;
    }
    assert!(matches!(
        descent_check(&stripped, &bowl, &result.schedule),
        Err(Error::InsufficientTrace)
    ));
}

#[test]
fn quadratic_saddle_escape_frequency() {
    let saddle = make_benchmark("saddle_quadratic", 2).unwrap();
    let mut config = snapshot_config(0.01, 50.0);
    config.snapshot_every = 0;
    config.sample_budget_override = Some(32);
    config.domain_exit = DomainExit::Stop;
    let seeds: Vec<u64> = (0..50).collect();
    let stats = escape_experiment(&saddle, &config, &seeds, GradientMode::Estimated).unwrap();
    assert_eq!(stats.seeds, 50);
    assert!(stats.escaped <= stats.seeds);
    assert!(stats.escaped >= 45, "{}", stats.escaped);
    assert!(stats.mean_iterations_to_escape.unwrap() > 0.0);
    assert_eq!(stats.f_start, 0.0);
    let ordered: Vec<u64> = stats.runs.iter().map(|r| r.seed).collect();
    assert_eq!(ordered, seeds);
    for run in &stats.runs {
        assert_eq!(run.total_queries, run.counted_queries);
        // The Hessian is constant with min eigenvalue -1, so no point is second order.
        assert_ne!(run.classification.class, Stationarity::SecondOrder);
    }
}

#[test]
fn bowl_minimum_counts_as_escaped() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let mut config = snapshot_config(0.05, 1.0);
    config.snapshot_every = 0;
    config.sample_budget_override = Some(20);
    let seeds: Vec<u64> = (0..10).collect();
    let stats = escape_experiment(&bowl, &config, &seeds, GradientMode::Estimated).unwrap();
    assert_eq!(stats.escaped, 10);
    assert!(stats
        .runs
        .iter()
        .all(|r| r.classification.class == Stationarity::SecondOrder));
}

#[test]
fn empty_seed_list_yields_undefined_mean() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let config = EgdConfig::new(0.05, 1.0);
    let stats = escape_experiment(&bowl, &config, &[], GradientMode::Exact).unwrap();
    assert_eq!((stats.seeds, stats.escaped), (0, 0));
    assert_eq!(stats.mean_iterations_to_escape, None);
    assert!(stats.runs.is_empty());
}

#[test]
fn quadratic_coupling_matches_closed_form() {
    let saddle = make_benchmark("saddle_quadratic", 2).unwrap();
    let schedule = derive_schedule(&EgdConfig::new(0.01, 50.0), &saddle.spec).unwrap();
    let setup = CouplingSetup {
        mu: 0.5,
        r: schedule.r,
        eta: schedule.eta,
        gamma: schedule.gamma,
        steps: 100,
    };
    let series = coupling_experiment(&saddle, &[0.0, 0.0], &setup, &mut SeededRng::new(5)).unwrap();
    assert_eq!(series.psi.len(), 101);
    assert_eq!(series.lambda_min, -1.0);
    assert_eq!(series.e1[1].abs(), 1.0);
    let psi0 = series.psi[0];
    assert!((psi0 - 0.5 * schedule.r).abs() <= 1e-15 * schedule.r);
    for (t, &p) in series.psi.iter().enumerate() {
        let expected = psi0 * (1.0 + setup.eta).powi(t as i32);
        assert!(((p - expected) / expected).abs() <= 1e-12, "t={t}");
    }
    assert!(series.slow_steps().is_empty());
}

#[test]
fn quartic_coupling_grows_inside_the_window() {
    let quartic = make_benchmark("saddle_quartic", 2).unwrap();
    let config = EgdConfig::new(0.05, 0.5);
    let schedule = derive_schedule(&config, &quartic.spec).unwrap();
    let window = 100.0 * schedule.script_p * config.c_hat;
    let setup = CouplingSetup {
        mu: 1.0,
        r: schedule.r,
        eta: schedule.eta,
        gamma: schedule.gamma,
        steps: 5000,
    };
    for seed in 0..5 {
        let series =
            coupling_experiment(&quartic, &[0.0, 0.0], &setup, &mut SeededRng::new(seed)).unwrap();
        let floor = 1.0 + series.gamma_eta / 2.0;
        let inside: Vec<f64> = series
            .growth_ratios
            .iter()
            .zip(&series.max_offsets[1..])
            .take_while(|(_, &off)| off <= window)
            .map(|(&g, _)| g)
            .collect();
        assert!(inside.len() > 100);
        assert!(inside.iter().all(|&g| g >= floor));
        assert!(series.psi.iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn coupling_with_zero_steps_and_bad_input() {
    let saddle = make_benchmark("saddle_quadratic", 2).unwrap();
    let setup = CouplingSetup {
        mu: 1.0,
        r: 0.1,
        eta: 0.1,
        gamma: 0.1,
        steps: 0,
    };
    let series = coupling_experiment(&saddle, &[0.0, 0.0], &setup, &mut SeededRng::new(0)).unwrap();
    assert_eq!(series.psi.len(), 1);
    assert!(series.growth_ratios.is_empty());
    let bad = CouplingSetup { mu: 1.5, ..setup };
    assert!(coupling_experiment(&saddle, &[0.0, 0.0], &bad, &mut SeededRng::new(0)).is_err());
    assert!(coupling_experiment(&saddle, &[0.0], &setup, &mut SeededRng::new(0)).is_err());
}

#[test]
fn bowl_iterations_scale_like_inverse_square() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let template = EgdConfig::new(0.1, 25.0);
    let seeds: Vec<u64> = (0..10).collect();
    let table = scaling_study(
        &bowl,
        &[5.0, 5.0],
        &[0.1, 0.05, 0.025],
        &template,
        &seeds,
        GradientMode::Exact,
    )
    .unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.ratios.len(), 2);
    for row in &table.rows {
        assert_eq!(row.terminated, 10);
        assert!(row.queries_consistent);
    }
    for &ratio in &table.ratios {
        assert!(ratio > 1.0 && ratio <= 6.0, "{ratio}");
    }
}

#[test]
fn scaling_single_epsilon_and_estimated_accounting() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let mut template = EgdConfig::new(0.2, 25.0);
    template.eps_hat_ceiling = EpsHatCeiling::Descent;
    template.sample_budget_override = Some(8);
    let table = scaling_study(
        &bowl,
        &[5.0, 5.0],
        &[0.2],
        &template,
        &[1, 2, 3],
        GradientMode::Estimated,
    )
    .unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.ratios.is_empty());
    assert!(table.rows[0].queries_consistent);
    assert!(table.rows[0].median_queries >= table.rows[0].median_iterations * 9.0);
}

#[test]
fn scaling_rejects_bad_epsilons() {
    let bowl = make_benchmark("bowl", 2).unwrap();
    let t = EgdConfig::new(0.1, 1.0);
    for eps in [&[0.1, 0.2][..], &[0.1, 0.1], &[1.0], &[0.0]] {
        assert!(scaling_study(&bowl, &[0.0, 0.0], eps, &t, &[0], GradientMode::Exact).is_err());
    }
}

#[test]
fn median_handles_even_and_odd() {
    assert_eq!(median(&mut []), None);
    assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
}

#[test]
fn exact_mode_needs_derivatives() {
    use std::sync::Arc;
    let spec = zoegd::ProblemSpec::new(1, 1.0, 1.0, 2.0).unwrap();
    let obj = Arc::new(zoegd::FnObjective::new(1, |x: &[f64]| x[0] * x[0]));
    let p = zoegd::testbed::BenchmarkProblem::black_box("bb", spec, obj);
    let config = EgdConfig::new(0.1, 1.0);
    assert!(matches!(
        run_problem(&p, &[0.0], &config, 0, GradientMode::Exact),
        Err(Error::Unsupported(_))
    ));
}
