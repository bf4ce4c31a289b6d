use misclust::rng::stream;
use misclust::simbench::{
    gen_cox_dataset, gen_logistic_dataset, run_replications, summarize, BenchSettings, Clusterer, CoxScenario, Estimate,
    LogisticScenario, Method, ReportScale, Scenario,
};
use misclust::{Outcome, SimexConfig};

fn small_settings() -> BenchSettings {
    BenchSettings {
        simex: SimexConfig {
            b: 10,
            ..SimexConfig::default()
        },
        n_mc: 5_000,
        ..BenchSettings::default()
    }
}

#[test]
fn logistic_generator_event_rates() {
    let s = LogisticScenario::balanced(200_000, Clusterer::Gmm);
    let d = gen_logistic_dataset(&s, &mut stream(1, &[])).unwrap();
    for (class, expected) in [(0, 0.268_941_4), (1, 0.731_058_6)] {
        let idx: Vec<usize> = (0..d.labels.len()).filter(|&i| d.labels[i] == class).collect();
        let rate = idx.iter().filter(|&&i| d.y[i] == 1).count() as f64 / idx.len() as f64;
        assert!((rate - expected).abs() < 0.006, "class {class}: {rate}");
    }
    let frac0 = d.labels.iter().filter(|&&h| h == 0).count() as f64 / d.labels.len() as f64;
    assert!((frac0 - 0.5).abs() < 0.005);
}

#[test]
fn imbalanced_generator_class_share() {
    let s = LogisticScenario::imbalanced(100_000, Clusterer::Gmm);
    let d = gen_logistic_dataset(&s, &mut stream(2, &[])).unwrap();
    let frac0 = d.labels.iter().filter(|&&h| h == 0).count() as f64 / d.labels.len() as f64;
    assert!((frac0 - 0.2).abs() < 0.005, "{frac0}");
}

#[test]
fn cox_generator_flip_and_censoring() {
    let s = CoxScenario::new(200_000, 0.2);
    let d = gen_cox_dataset(&s, &mut stream(3, &[])).unwrap();
    let flips = d
        .true_labels
        .iter()
        .zip(&d.observed_labels)
        .filter(|(a, b)| a != b)
        .count() as f64
        / s.n as f64;
    assert!((flips - 0.2).abs() < 0.004, "{flips}");
    let Outcome::Survival { event, .. } = &d.outcome else {
        panic!("expected survival outcome")
    };
    // P(T <= C) = h / (h + c): 2/3 for class 0, 4/5 for class 1
    for (class, expected) in [(0, 2.0 / 3.0), (1, 0.8)] {
        let idx: Vec<usize> = (0..s.n).filter(|&i| d.true_labels[i] == class).collect();
        let rate = idx.iter().filter(|&&i| event[i]).count() as f64 / idx.len() as f64;
        assert!((rate - expected).abs() < 0.006, "class {class}: {rate}");
    }
}

#[test]
fn scenario_validation() {
    let mut s = LogisticScenario::balanced(100, Clusterer::Gmm);
    s.pi1 = 1.0;
    assert!(Scenario::Logistic(s).validate().is_err());
    assert!(Scenario::Cox(CoxScenario::new(100, 0.5)).validate().is_err());
    assert!(Scenario::Cox(CoxScenario::new(5, 0.2)).validate().is_err());
}

#[test]
fn summarize_known_values() {
    let est = |b: f64, se: f64| vec![(Method::Naive, Estimate { coefficients: vec![b], std_errors: vec![se] })];
    let outcomes = vec![est(1.0, 0.1), est(1.2, 0.1), est(0.5, 0.1), est(0.9, 1.0)];
    let rows = summarize("t", &[1.0], &[Method::Naive], &outcomes, ReportScale::Coefficient);
    let r = &rows[0];
    assert!((r.bias - (-0.1)).abs() < 1e-12);
    assert!((r.mse - (0.0 + 0.04 + 0.25 + 0.01) / 4.0).abs() < 1e-12);
    assert!((r.coverage - 0.5).abs() < 1e-12);
    assert_eq!(r.n_reps, 4);

    let exp_rows = summarize("t", &[0.0], &[Method::Naive], &outcomes, ReportScale::Exp);
    let mean_exp = (1.0f64.exp() + 1.2f64.exp() + 0.5f64.exp() + 0.9f64.exp()) / 4.0;
    assert!((exp_rows[0].bias - (mean_exp - 1.0)).abs() < 1e-12);
}

#[test]
fn replications_are_reproducible_across_thread_counts() {
    let scenario = Scenario::Cox(CoxScenario::new(150, 0.2));
    let methods = [Method::TrueLabels, Method::Naive, Method::Simex];
    let settings = small_settings();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_replications("cox", &scenario, &methods, 8, 99, &settings).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn logistic_replications_run_for_both_clusterers() {
    let settings = small_settings();
    for c in [Clusterer::Gmm, Clusterer::Kmeans] {
        let scenario = Scenario::Logistic(LogisticScenario::balanced(200, c));
        let t = run_replications("l", &scenario, &[Method::Naive, Method::Simex], 4, 5, &settings).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.bias.is_finite()));
    }
}

#[test]
fn monte_carlo_error_shrinks_with_replications() {
    let scenario = Scenario::Cox(CoxScenario::new(200, 0.1));
    let settings = small_settings();
    let se = |r: usize| {
        run_replications("c", &scenario, &[Method::TrueLabels], r, 11, &settings)
            .unwrap()
            .rows[0]
            .mc_se
    };
    let (small, large) = (se(25), se(400));
    assert!(large < small / 2.0, "{small} -> {large}");
}
