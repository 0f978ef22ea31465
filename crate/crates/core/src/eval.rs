//! End-to-end experiments: split, standardize, black box, region detection,
//! and the four additive models, scored on held-out data.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::blackbox::{train_mlp, BlackBoxModel, MlpConfig};
use crate::data::{fit_scaler, train_test_split, Dataset, Scaler};
use crate::error::{RamError, Result, StageExt};
use crate::gam::{fit_gam, fit_ram, AdditiveModel, BoostConfig};
use crate::regions::{detect_all, RegionConfig, RegionSet};

fn check_len(a: &Array1<f64>, b: &Array1<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(RamError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(RamError::InsufficientData { needed: 1, got: 0 });
    }
    Ok(())
}

pub fn mae(pred: &Array1<f64>, truth: &Array1<f64>) -> Result<f64> {
    check_len(pred, truth)?;
    Ok((pred - truth).mapv(f64::abs).sum() / pred.len() as f64)
}

pub fn rmse(pred: &Array1<f64>, truth: &Array1<f64>) -> Result<f64> {
    check_len(pred, truth)?;
    Ok(((pred - truth).mapv(|v| v * v).sum() / pred.len() as f64).sqrt())
}

/// Test-set errors of one model; `*_original` are in target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub mae_original: f64,
    pub rmse_original: f64,
}

/// Where the differentiable model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlackBoxSource {
    TrainMlp,
    /// A known function of the unstandardized inputs.
    Provided(BlackBoxModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub test_fraction: f64,
    /// Standardize numeric features and the target with training statistics.
    pub standardize: bool,
    pub blackbox: BlackBoxSource,
    pub mlp: MlpConfig,
    pub regions: RegionConfig,
    pub boost: BoostConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            test_fraction: 0.2,
            standardize: true,
            blackbox: BlackBoxSource::TrainMlp,
            mlp: MlpConfig::default(),
            regions: RegionConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

/// Independent seed for a pipeline stage.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Rows in the order DNN, GAM, RAM, GA2M, RA2M.
    pub metrics: Vec<MetricReport>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub scaler: Option<Scaler>,
    #[serde(skip)]
    pub blackbox: BlackBoxModel,
    #[serde(skip)]
    pub regionsets: Vec<RegionSet>,
    #[serde(skip)]
    pub ra2m: AdditiveModel,
    #[serde(skip)]
    pub ga2m: AdditiveModel,
    #[serde(skip)]
    pub train: Dataset,
    #[serde(skip)]
    pub test: Dataset,
}

impl ExperimentResult {
    pub fn metric(&self, model: &str) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.model == model)
    }

    pub fn table_text(&self) -> String {
        let mut s = format!(
            "{} (train {}, test {})\n{:<6} {:>10} {:>10} {:>14} {:>14}\n",
            self.name, self.n_train, self.n_test, "model", "RMSE", "MAE", "RMSE(orig)", "MAE(orig)"
        );
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{:<6} {:>10.4} {:>10.4} {:>14.4} {:>14.4}",
                m.model, m.rmse, m.mae, m.rmse_original, m.mae_original
            );
        }
        s
    }

    pub fn table_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn timed<T>(timings: &mut Vec<(String, f64)>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    let secs = start.elapsed().as_secs_f64();
    info!("{stage}: {secs:.2}s");
    timings.push((stage.to_string(), secs));
    Ok(out)
}

pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.regions.validate()?;
    cfg.boost.validate()?;
    if cfg.standardize && matches!(cfg.blackbox, BlackBoxSource::Provided(_)) {
        return Err(RamError::InvalidArgument(
            "a provided black box works on raw inputs; disable standardization".into(),
        ));
    }
    let mut timings = Vec::new();
    let (train_raw, test_raw) =
        train_test_split(ds, cfg.test_fraction, stage_seed(cfg.seed, 1)).stage("split")?;
    let scaler = if cfg.standardize {
        Some(fit_scaler(&train_raw).stage("standardize")?)
    } else {
        None
    };
    let (train, test) = match &scaler {
        Some(sc) => (sc.apply(&train_raw)?, sc.apply(&test_raw)?),
        None => (train_raw, test_raw),
    };

    let blackbox = timed(&mut timings, "black box", || match &cfg.blackbox {
        BlackBoxSource::Provided(m) => Ok(m.clone()),
        BlackBoxSource::TrainMlp => {
            let mlp_cfg = MlpConfig {
                seed: stage_seed(cfg.seed, 2),
                ..cfg.mlp.clone()
            };
            train_mlp(&train, &mlp_cfg).map(BlackBoxModel::Mlp)
        }
    })
    .stage("black box")?;
    let jac = timed(&mut timings, "jacobian", || blackbox.jacobian_table(train.x.view())).stage("jacobian")?;
    let regionsets =
        timed(&mut timings, "regions", || detect_all(&train, &jac, &cfg.regions)).stage("region detection")?;
    for rs in &regionsets {
        if rs.n_regions() > 1 {
            info!(
                "{}: {} regions via {:?}",
                train.features[rs.feature].name,
                rs.n_regions(),
                rs.levels.iter().map(|l| train.features[l.split_feature].name.as_str()).collect::<Vec<_>>()
            );
        }
    }
    let ra2m = timed(&mut timings, "RA2M", || fit_ram(&train, &regionsets, 2, &cfg.boost)).stage("RA2M")?;
    let ga2m = timed(&mut timings, "GA2M", || fit_gam(&train, 2, &cfg.boost)).stage("GA2M")?;

    let to_orig = |e: f64| scaler.as_ref().map_or(e, |s| s.error_to_original(e));
    let report = |name: &str, pred: Array1<f64>| -> Result<MetricReport> {
        let (m, r) = (mae(&pred, &test.y)?, rmse(&pred, &test.y)?);
        Ok(MetricReport {
            model: name.to_string(),
            mae: m,
            rmse: r,
            mae_original: to_orig(m),
            rmse_original: to_orig(r),
        })
    };
    let x = test.x.view();
    let metrics = vec![
        report("DNN", blackbox.predict(x)?)?,
        report("GAM", ga2m.without_pairs().predict(x)?)?,
        report("RAM", ra2m.without_pairs().predict(x)?)?,
        report("GA2M", ga2m.predict(x)?)?,
        report("RA2M", ra2m.predict(x)?)?,
    ];
    Ok(ExperimentResult {
        name: cfg.name.clone(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        metrics,
        timings,
        scaler,
        blackbox,
        regionsets,
        ra2m,
        ga2m,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_toy, ToySpec};
    use ndarray::array;

    #[test]
    fn metric_values() {
        let p = array![1.0, 2.0, 4.0];
        let t = array![1.0, 0.0, 0.0];
        assert_eq!(mae(&p, &t).unwrap(), 2.0);
        assert!((rmse(&p, &t).unwrap() - (20.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            rmse(&p, &array![1.0]),
            Err(RamError::LengthMismatch { left: 3, right: 1 })
        ));
    }

    #[test]
    fn toy_experiment_with_known_function() {
        let (ds, f) = generate_toy(&ToySpec {
            n: 5_000,
            ..ToySpec::default()
        })
        .unwrap();
        let cfg = ExperimentConfig {
            name: "toy".into(),
            standardize: false,
            blackbox: BlackBoxSource::Provided(f),
            boost: BoostConfig {
                rounds: 200,
                pair_rounds: 50,
                ..BoostConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let res = run_experiment(&ds, &cfg).unwrap();
        assert_eq!(res.n_test, 1_000);
        assert_eq!(res.metric("DNN").unwrap().rmse, 0.0);
        let gam = res.metric("GAM").unwrap().rmse;
        let ram = res.metric("RAM").unwrap().rmse;
        assert!(ram < 0.5 * gam, "{ram} vs {gam}");
        assert!(res.table_text().lines().count() == 7);
        let v: serde_json::Value = serde_json::from_str(&res.table_json().unwrap()).unwrap();
        assert_eq!(v["metrics"].as_array().unwrap().len(), 5);
        assert!(run_experiment(&ds, &ExperimentConfig { standardize: true, ..cfg }).is_err());
    }
}
