use ndarray::{Array1, Array2};

use super::*;
use crate::regions::{trivial_all, Condition, Region, SplitKind};
use crate::synth::{generate, generate_toy, ToySpec};
use crate::blackbox::{AnalyticFn, Term};

fn toy(n: usize, seed: u64) -> Dataset {
    generate_toy(&ToySpec {
        n,
        seed,
        ..ToySpec::default()
    })
    .unwrap()
    .0
}

/// Regions of the generating function: x2 is active on `x1 > 0 & x3 = 1`.
fn true_regions(ds: &Dataset) -> Vec<RegionSet> {
    let mut rs = trivial_all(ds);
    let active = Region::new(vec![
        Condition {
            feature: 0,
            kind: SplitKind::NumericLe { threshold: 0.0 },
            pass: false,
        },
        Condition {
            feature: 2,
            kind: SplitKind::CategoricalEq { category: 1.0 },
            pass: true,
        },
    ]);
    rs[1] = RegionSet::custom(1, vec![active, Region::complement()], ds.x.view()).unwrap();
    rs
}

fn rmse(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    ((a - b).mapv(|v| v * v).sum() / a.len() as f64).sqrt()
}

fn quick() -> BoostConfig {
    BoostConfig {
        rounds: 200,
        pair_rounds: 100,
        ..BoostConfig::default()
    }
}

#[test]
fn toy_is_recovered_with_true_regions() {
    let train = toy(10_000, 1);
    let test = toy(2_000, 2);
    let regions = true_regions(&train);
    let m = fit_ram(&train, &regions, 1, &BoostConfig::default()).unwrap();
    assert_eq!(m.shapes.len(), 4);
    let tr = rmse(&m.predict(train.x.view()).unwrap(), &train.y);
    let te = rmse(&m.predict(test.x.view()).unwrap(), &test.y);
    assert!(tr < 0.1, "train {tr}");
    assert!(te < 0.15, "test {te}");
    let gam = fit_gam(&train, 1, &BoostConfig::default()).unwrap();
    let gam_te = rmse(&gam.predict(test.x.view()).unwrap(), &test.y);
    assert!(gam_te > 1.5, "gam {gam_te}");
}

#[test]
fn history_never_increases() {
    let ds = toy(3_000, 3);
    let m = fit_ram(&ds, &true_regions(&ds), 2, &quick()).unwrap();
    assert_eq!(m.history.len(), quick().rounds + 2);
    let all: Vec<f64> = m.history.iter().chain(&m.pair_history).copied().collect();
    for w in all.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn shapes_are_centered_and_intercept_is_the_mean() {
    let ds = toy(3_000, 4);
    let regions = true_regions(&ds);
    let m = fit_ram(&ds, &regions, 1, &quick()).unwrap();
    let mean_y = ds.y.sum() / ds.n_rows() as f64;
    assert!((m.intercept - mean_y).abs() < 1e-12);
    for sh in &m.shapes {
        let rs = &regions[sh.source];
        let rows: Vec<usize> = rs
            .assign(ds.x.view())
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| (t == sh.region).then_some(i))
            .collect();
        let avg = rows.iter().map(|&i| sh.values[sh.binning.bin(ds.x[[i, sh.source]])]).sum::<f64>()
            / rows.len() as f64;
        assert!(avg.abs() < 1e-9, "shape mean {avg}");
    }
    // region offsets of a feature cancel over the training rows
    let weighted: f64 = m
        .shapes
        .iter()
        .filter(|s| s.source == 1)
        .map(|s| s.offset * s.active_rows as f64)
        .sum();
    assert!(weighted.abs() < 1e-8);
    let pred_mean = m.predict(ds.x.view()).unwrap().mean().unwrap();
    assert!((pred_mean - mean_y).abs() < 1e-9);
}

#[test]
fn trivial_regions_match_gam_bit_for_bit() {
    let ds = toy(2_000, 5);
    let a = fit_ram(&ds, &trivial_all(&ds), 2, &quick()).unwrap();
    let b = fit_gam(&ds, 2, &quick()).unwrap();
    assert_eq!(a, b);
    assert!(a.is_trivial());
    let pa = a.predict(ds.x.view()).unwrap();
    let pb = b.predict(ds.x.view()).unwrap();
    assert!(pa.iter().zip(&pb).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn constant_input_gives_the_mean_predictor() {
    let n = 200;
    let x = Array2::from_elem((n, 1), 3.0);
    let y = Array1::from_iter((0..n).map(|i| (i % 7) as f64));
    let ds = Dataset::new(vec![FeatureMeta::numeric("c", 0, 0.0, 0.0)], x, y, "y").unwrap();
    let m = fit_gam(&ds, 1, &quick()).unwrap();
    let p = m.predict(ds.x.view()).unwrap();
    let mean = ds.y.mean().unwrap();
    assert!(p.iter().all(|v| (v - mean).abs() < 1e-12));
}

#[test]
fn pairs_capture_a_product() {
    let spec = crate::synth::SynthSpec {
        n: 4_000,
        seed: 6,
        noise_sd: 0.0,
        numeric: 3,
        categorical_levels: vec![],
        function: AnalyticFn::Terms {
            arity: 3,
            intercept: 1.0,
            terms: vec![
                Term::Product { a: 0, b: 1, coef: 3.0 },
                Term::Linear { feature: 2, coef: 1.0 },
            ],
        },
    };
    let ds = generate(&spec).unwrap().0;
    let m1 = fit_gam(&ds, 1, &quick()).unwrap();
    let m2 = fit_gam(&ds, 2, &quick()).unwrap();
    assert_eq!(m2.without_pairs(), m1);
    assert_eq!(m1.intercept, m2.intercept);
    let (p, q) = (&m2.pairs[0].a, &m2.pairs[0].b);
    assert_eq!((p.0, q.0), (0, 1));
    let r1 = rmse(&m1.predict(ds.x.view()).unwrap(), &ds.y);
    let r2 = rmse(&m2.predict(ds.x.view()).unwrap(), &ds.y);
    assert!(r2 < 0.5 * r1, "{r2} vs {r1}");
    for surface in &m2.pairs {
        let avg: f64 = ds
            .x
            .rows()
            .into_iter()
            .map(|r| surface.eval(r[surface.a.0], r[surface.b.0]))
            .sum::<f64>()
            / ds.n_rows() as f64;
        assert!(avg.abs() < 1e-9);
    }
}

#[test]
fn select_pairs_ranks_the_interacting_pair_first() {
    let ds = toy(3_000, 7);
    let m = fit_gam(&ds, 1, &quick()).unwrap();
    let f = m.predict(ds.x.view()).unwrap();
    let res: Vec<f64> = ds.y.iter().zip(&f).map(|(a, b)| a - b).collect();
    let ext = build_extended_space(&ds, &trivial_all(&ds)).unwrap();
    let picked = select_pairs(&ds, &ext, &res, &quick()).unwrap();
    assert!(picked.len() <= 3);
    assert!(picked.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(picked[0].b == 1 || picked[0].a == 1);
    assert!(select_pairs(&ds, &ext, &res[1..], &quick()).is_err());
    let none = select_pairs(&ds, &ext, &vec![0.0; ds.n_rows()], &quick()).unwrap();
    assert!(none.is_empty());
}

#[test]
fn invalid_inputs_are_rejected() {
    let ds = toy(500, 8);
    assert!(fit_gam(&ds, 3, &quick()).is_err());
    let mut rs = trivial_all(&ds);
    rs.pop();
    assert!(matches!(fit_ram(&ds, &rs, 1, &quick()), Err(RamError::ArityMismatch { .. })));
    let mut overlapping = trivial_all(&ds);
    overlapping[0] = RegionSet {
        regions: vec![Region::new(Vec::new()), Region::new(Vec::new())],
        ..overlapping[0].clone()
    };
    assert!(matches!(
        build_extended_space(&ds, &overlapping),
        Err(RamError::NotAPartition { .. })
    ));
    let m = fit_gam(&ds, 1, &quick()).unwrap();
    assert!(m.predict(Array2::zeros((2, 2)).view()).is_err());
    let bad = BoostConfig {
        learning_rate: 0.0,
        ..quick()
    };
    assert!(fit_gam(&ds, 1, &bad).is_err());
}

#[test]
fn tiny_component_stays_zero() {
    let ds = toy(500, 9);
    let mut rs = trivial_all(&ds);
    let narrow = Region::new(vec![Condition {
        feature: 0,
        kind: SplitKind::NumericLe { threshold: -0.99 },
        pass: true,
    }]);
    rs[1] = RegionSet::custom(1, vec![narrow, Region::complement()], ds.x.view()).unwrap();
    assert!(rs[1].regions[0].count < 20);
    let m = fit_ram(&ds, &rs, 1, &quick()).unwrap();
    assert!(m.shape(1, 0).values.iter().all(|&v| v == 0.0));
}

#[test]
fn saved_model_round_trip_and_tables() {
    let ds = toy(2_000, 10);
    let regions = true_regions(&ds);
    let m = fit_ram(&ds, &regions, 1, &quick()).unwrap();
    let saved = SavedModel {
        meta: ModelMeta {
            format: 1,
            target: "y".into(),
            boost: quick(),
            regions: None,
            seed: 0,
        },
        scaler: None,
        model: m.clone(),
        blackbox: None,
    };
    let v = serde_json::to_value(&saved).unwrap();
    for key in ["meta", "regionsets", "intercept", "shapes", "pairs"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    saved.save(&path).unwrap();
    let back = SavedModel::load(&path).unwrap();
    assert_eq!(back.predict_raw(&ds).unwrap(), m.predict(ds.x.view()).unwrap());

    let tables = shape_tables(&m, None);
    assert_eq!(tables.len(), 4);
    let conditioned: Vec<&ShapeTable> = tables.iter().filter(|t| t.title.contains('|')).collect();
    assert_eq!(conditioned.len(), 2);
    assert!(conditioned[0].title.starts_with("x2 | x1 > 0 & x3 = 1"));
    assert!(conditioned[1].title.starts_with("x2 | x1 <= 0 or x3 != 1"));
    assert_eq!(tables[3].header, vec!["x3", "value"]);
    assert_eq!(tables[0].header, vec!["x1_lower", "x1_upper", "value"]);
    let written = write_shape_tables(&m, None, dir.path()).unwrap();
    assert_eq!(written.len(), 5);
}
