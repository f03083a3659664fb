use policy_panel::epi::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn counterfactual(seed: u64) -> CounterfactualResult {
    let config = SirConfig::default();
    let paths = generate_cohort(&config, &CohortSpec::new(9)).unwrap();
    let panel = paths_to_panel(&config, &paths).unwrap();
    let template = RecoveryTemplate::new(11);
    let (fit, _) = recovery_experiment(&panel, &config, &template).unwrap();
    let change = PolicyChange {
        column: "schools".into(),
        value: 0.0,
        from: config.start_date,
        states: None,
    };
    let opts = CounterfactualOptions {
        draws: 200,
        seed,
        ..Default::default()
    };
    regression_counterfactual(&panel, &template.analysis(&config), &fit, &change, &opts).unwrap()
}

#[test]
fn counterfactual_bands_ignore_thread_count() {
    let a = in_pool(1, || counterfactual(5));
    let b = in_pool(3, || counterfactual(5));
    assert_eq!(a, b);
    let c = in_pool(3, || counterfactual(6));
    assert_eq!(a.counterfactual, c.counterfactual);
    assert_ne!(a.lower, c.lower);
}

#[test]
fn cohorts_and_recovery_ignore_thread_count() {
    let config = SirConfig::default();
    let spec = CohortSpec {
        n_generate: 400,
        n_select: 20,
        ..CohortSpec::new(77)
    };
    let template = RecoveryTemplate::new(11);
    let a = in_pool(1, || repeated_recovery(&config, &spec, &template, 3).unwrap());
    let b = in_pool(4, || repeated_recovery(&config, &spec, &template, 3).unwrap());
    assert_eq!(a, b);
    let p1 = in_pool(1, || generate_cohort(&config, &spec).unwrap());
    let p2 = in_pool(4, || generate_cohort(&config, &spec).unwrap());
    assert_eq!(p1, p2);
}
