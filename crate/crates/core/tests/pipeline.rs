use ramkit::data::{fit_scaler, load_csv};
use ramkit::eval::{run_experiment, BlackBoxSource, ExperimentConfig};
use ramkit::gam::BoostConfig;
use ramkit::synth::{generate, interaction_spec};

#[test]
fn interaction_data_prefers_regions() {
    let (ds, f) = generate(&interaction_spec(6_000, 2)).unwrap();
    let res = run_experiment(
        &ds,
        &ExperimentConfig {
            standardize: false,
            blackbox: BlackBoxSource::Provided(f),
            boost: BoostConfig {
                rounds: 300,
                pair_rounds: 50,
                ..BoostConfig::default()
            },
            ..ExperimentConfig::default()
        },
    )
    .unwrap();
    // x1 is gated by x2 > 0.4, x3 by the category of x5
    assert_eq!(res.regionsets[0].levels[0].split_feature, 1);
    assert_eq!(res.regionsets[2].levels[0].split_feature, 4);
    assert!(res.regionsets[3].n_regions() == 1);
    let (ram, gam) = (res.metric("RAM").unwrap().rmse, res.metric("GAM").unwrap().rmse);
    assert!(ram < 0.5 * gam, "{ram} vs {gam}");
    assert!(ram < 0.2, "{ram}");
}

#[test]
fn csv_round_trip_through_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = generate(&interaction_spec(300, 1)).unwrap();
    let path = dir.path().join("d.csv");
    ds.write_csv(&path).unwrap();
    let back = load_csv(&path, "y", &["x5".to_string()]).unwrap();
    assert_eq!(back.n_rows(), 300);
    assert!(back.is_categorical(4));
    let sc = fit_scaler(&back).unwrap();
    let there = sc.inverse(&sc.apply(&back).unwrap()).unwrap();
    for (a, b) in there.x.iter().zip(back.x.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}
