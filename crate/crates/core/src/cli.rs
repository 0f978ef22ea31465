//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::blackbox::{train_mlp, Activation, BlackBoxModel, MlpConfig};
use crate::data::{fit_scaler, load_csv, Dataset, Scaler};
use crate::effects::{bin_stats, build_bins, dale_curve, heterogeneity, BinConfig};
use crate::error::{RamError, Result, StageExt};
use crate::eval::{run_experiment, stage_seed, BlackBoxSource, ExperimentConfig};
use crate::gam::{fit_ram, write_shape_tables, BoostConfig, ModelMeta, SavedModel};
use crate::regions::{detect_all, trivial_all, RegionConfig, RegionSet};
use crate::synth::{additive_spec, generate, generate_toy, interaction_spec, ToySpec};

#[derive(Debug, Parser)]
#[command(name = "ramkit", version, about = "Regionally additive models from black-box gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed from which every stage seed is derived.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: RAMKIT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Detect subregions for every feature.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mlp: MlpArgs,
        #[command(flatten)]
        regions: RegionArgs,
        /// Write the region sets as JSON.
        #[arg(long)]
        regions_out: Option<PathBuf>,
    },
    /// Fit a RAM (or a GAM with --gam) on the whole dataset.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mlp: MlpArgs,
        #[command(flatten)]
        regions: RegionArgs,
        #[command(flatten)]
        boost: BoostArgs,
        /// 1 for main effects only, 2 to add pairwise surfaces.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: u8,
        /// One region per feature.
        #[arg(long)]
        gam: bool,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        regions_out: Option<PathBuf>,
        /// Directory for one CSV per shape function.
        #[arg(long)]
        shapes_dir: Option<PathBuf>,
    },
    /// Write the gradient-based effect curve of one feature.
    Effects {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mlp: MlpArgs,
        #[arg(long)]
        feature: String,
        /// Reuse the black box and scaler of a saved model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        k_init: usize,
        #[arg(long, default_value_t = 10)]
        min_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train/test experiment comparing DNN, GAM, RAM, GA2M and RA2M.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mlp: MlpArgs,
        #[command(flatten)]
        regions: RegionArgs,
        #[command(flatten)]
        boost: BoostArgs,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Print the table as JSON.
        #[arg(long)]
        json: bool,
        /// Write metrics, the RA2M model and its shape tables here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SynthKind {
    Toy,
    Additive,
    Interaction,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Toy)]
    kind: SynthKind,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Gaussian noise sd (toy only; the presets fix their own).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
    /// Write the generating function as a black-box JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, required_unless_present = "toy")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    target: String,
    /// Columns to treat as categorical (comma separated).
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Use the synthetic toy problem with its exact gradients.
    #[arg(long, conflicts_with = "data")]
    toy: bool,
    /// Rows of the toy problem.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Black-box JSON to use instead of training a network (raw inputs).
    #[arg(long)]
    blackbox: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct MlpArgs {
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
}

impl MlpArgs {
    fn config(&self, seed: u64) -> MlpConfig {
        MlpConfig {
            hidden_layers: vec![self.width; self.depth],
            activation: Activation::Tanh,
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            seed: stage_seed(seed, 2),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct RegionArgs {
    #[arg(long, default_value_t = 20)]
    k_init: usize,
    #[arg(long, default_value_t = 10)]
    min_points: usize,
    /// Grid points per numeric split feature.
    #[arg(long, default_value_t = 11)]
    positions: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    /// Minimum relative drop in heterogeneity to accept a level.
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Minimum rows per region (default max(20, 1% of rows)).
    #[arg(long)]
    min_region: Option<usize>,
}

impl RegionArgs {
    fn config(&self) -> RegionConfig {
        RegionConfig {
            max_depth: self.max_depth,
            epsilon: self.epsilon,
            positions: self.positions,
            min_region: self.min_region,
            bins: BinConfig {
                k_init: self.k_init,
                min_points: self.min_points,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct BoostArgs {
    #[arg(long, default_value_t = 500)]
    rounds: usize,
    #[arg(long, default_value_t = 0.05)]
    boost_lr: f64,
    #[arg(long, default_value_t = 8)]
    max_leaves: usize,
    #[arg(long, default_value_t = 200)]
    pair_rounds: usize,
    #[arg(long, default_value_t = 10)]
    max_pairs: usize,
}

impl BoostArgs {
    fn config(&self) -> BoostConfig {
        BoostConfig {
            rounds: self.rounds,
            learning_rate: self.boost_lr,
            max_leaves: self.max_leaves,
            pair_rounds: self.pair_rounds,
            max_pairs: self.max_pairs,
            ..BoostConfig::default()
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let threads = match resolve_threads(cli.threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli, threads)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

/// `--threads`, then `RAMKIT_THREADS`, then 0 (all cores).
fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var("RAMKIT_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| RamError::InvalidArgument(format!("RAMKIT_THREADS=`{v}` is not a count"))),
        Err(_) => Ok(0),
    }
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    threads: usize,
    #[serde(flatten)]
    settings: T,
}

fn print_config<T: Serialize>(command: &str, cli: &Cli, threads: usize, settings: T) -> Result<()> {
    let r = Resolved {
        command,
        seed: cli.seed,
        threads,
        settings,
    };
    eprintln!("config: {}", serde_json::to_string(&r)?);
    Ok(())
}

/// Data in model space together with the black box defined on it.
struct Prepared {
    raw: Dataset,
    data: Dataset,
    scaler: Option<Scaler>,
    blackbox: BlackBoxModel,
    known: bool,
}

fn load_data(d: &DataArgs, seed: u64) -> Result<(Dataset, Option<BlackBoxModel>)> {
    if d.toy {
        let (ds, f) = generate_toy(&ToySpec {
            n: d.n,
            seed: stage_seed(seed, 0),
            ..ToySpec::default()
        })?;
        return Ok((ds, Some(f)));
    }
    let path = d.data.as_ref().ok_or_else(|| RamError::InvalidArgument("--data is required".into()))?;
    let ds = load_csv(path, &d.target, &d.categorical)?;
    let bb = match &d.blackbox {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| RamError::io(p, e))?;
            let m: BlackBoxModel = serde_json::from_str(&text)?;
            if m.arity() != ds.n_features() {
                return Err(RamError::ArityMismatch {
                    expected: m.arity(),
                    got: ds.n_features(),
                });
            }
            Some(m)
        }
        None => None,
    };
    Ok((ds, bb))
}

fn prepare(d: &DataArgs, mlp: &MlpArgs, seed: u64) -> Result<Prepared> {
    let (raw, known) = load_data(d, seed).stage("load data")?;
    if let Some(bb) = known {
        return Ok(Prepared {
            data: raw.clone(),
            raw,
            scaler: None,
            blackbox: bb,
            known: true,
        });
    }
    let scaler = fit_scaler(&raw).stage("standardize")?;
    let data = scaler.apply(&raw)?;
    let net = train_mlp(&data, &mlp.config(seed)).stage("train black box")?;
    info!("network loss {:?}", net.loss_history.last());
    Ok(Prepared {
        raw,
        data,
        scaler: Some(scaler),
        blackbox: BlackBoxModel::Mlp(net),
        known: false,
    })
}

fn print_regions(out: &mut String, regionsets: &[RegionSet], ds: &Dataset, scaler: Option<&Scaler>) {
    use std::fmt::Write as _;
    for rs in regionsets {
        let name = &ds.features[rs.feature].name;
        let _ = writeln!(out, "{name}: {} region(s)", rs.n_regions());
        if rs.n_regions() > 1 {
            for t in 0..rs.n_regions() {
                let _ = writeln!(
                    out,
                    "  [{t}] {} (n={})",
                    rs.describe_region(t, &ds.features, scaler),
                    rs.regions[t].count
                );
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| RamError::io(path, e))
}

fn run(cli: &Cli, threads: usize) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            print_config("synth", cli, threads, a_settings(a))?;
            let (ds, f) = match a.kind {
                SynthKind::Toy => generate_toy(&ToySpec {
                    n: a.n,
                    seed: cli.seed,
                    noise_sd: a.noise,
                    ..ToySpec::default()
                })?,
                SynthKind::Additive => generate(&additive_spec(a.n, cli.seed))?,
                SynthKind::Interaction => generate(&interaction_spec(a.n, cli.seed))?,
            };
            ds.write_csv(&a.out)?;
            if let Some(p) = &a.model_out {
                write_json(p, &f)?;
            }
            println!("wrote {} rows to {}", ds.n_rows(), a.out.display());
            Ok(())
        }
        Command::Detect {
            data,
            mlp,
            regions,
            regions_out,
        } => {
            let rcfg = regions.config();
            rcfg.validate()?;
            print_config("detect", cli, threads, serde_json::json!({"data": data, "mlp": mlp, "regions": rcfg}))?;
            let p = prepare(data, mlp, cli.seed)?;
            let jac = p.blackbox.jacobian_table(p.data.x.view()).stage("jacobian")?;
            let sets = detect_all(&p.data, &jac, &rcfg).stage("region detection")?;
            let mut text = String::new();
            print_regions(&mut text, &sets, &p.data, p.scaler.as_ref());
            print!("{text}");
            if let Some(path) = regions_out {
                write_json(path, &sets)?;
            }
            Ok(())
        }
        Command::Fit {
            data,
            mlp,
            regions,
            boost,
            order,
            gam,
            model_out,
            regions_out,
            shapes_dir,
        } => {
            let (rcfg, bcfg) = (regions.config(), boost.config());
            rcfg.validate()?;
            bcfg.validate()?;
            print_config(
                "fit",
                cli,
                threads,
                serde_json::json!({"data": data, "mlp": mlp, "regions": rcfg, "boost": bcfg, "order": order, "gam": gam}),
            )?;
            let p = prepare(data, mlp, cli.seed)?;
            let sets = if *gam {
                trivial_all(&p.data)
            } else {
                let jac = p.blackbox.jacobian_table(p.data.x.view()).stage("jacobian")?;
                detect_all(&p.data, &jac, &rcfg).stage("region detection")?
            };
            let model = fit_ram(&p.data, &sets, usize::from(*order), &bcfg).stage("fit")?;
            let mut text = String::new();
            print_regions(&mut text, &sets, &p.data, p.scaler.as_ref());
            print!("{text}");
            let train_rmse = model.pair_history.last().or(model.history.last()).copied().unwrap_or(f64::NAN);
            println!(
                "training RMSE {:.6} ({} shapes, {} pairs)",
                p.scaler.as_ref().map_or(train_rmse, |s| s.error_to_original(train_rmse)),
                model.shapes.len(),
                model.pairs.len()
            );
            if let Some(path) = regions_out {
                write_json(path, &sets)?;
            }
            if let Some(dir) = shapes_dir {
                write_shape_tables(&model, p.scaler.as_ref(), dir)?;
            }
            let saved = SavedModel {
                meta: ModelMeta {
                    format: 1,
                    target: p.raw.target.clone(),
                    boost: bcfg,
                    regions: (!*gam).then_some(rcfg),
                    seed: cli.seed,
                },
                scaler: p.scaler,
                model,
                blackbox: (!p.known).then_some(p.blackbox),
            };
            saved.save(model_out)
        }
        Command::Effects {
            data,
            mlp,
            feature,
            model,
            k_init,
            min_points,
            out,
        } => {
            let bins = BinConfig {
                k_init: *k_init,
                min_points: *min_points,
            };
            print_config(
                "effects",
                cli,
                threads,
                serde_json::json!({"data": data, "mlp": mlp, "bins": bins, "feature": feature}),
            )?;
            let p = match model {
                Some(path) => {
                    let saved = SavedModel::load(path)?;
                    let (raw, known) = load_data(data, cli.seed)?;
                    let blackbox = saved.blackbox.or(known).ok_or_else(|| {
                        RamError::InvalidArgument(format!("{} holds no black box", path.display()))
                    })?;
                    let data = match &saved.scaler {
                        Some(s) => s.apply(&raw)?,
                        None => raw.clone(),
                    };
                    Prepared {
                        raw,
                        data,
                        scaler: saved.scaler,
                        blackbox,
                        known: false,
                    }
                }
                None => prepare(data, mlp, cli.seed)?,
            };
            let s = p.data.feature_index(feature)?;
            if p.data.is_categorical(s) {
                return Err(RamError::InvalidArgument(format!(
                    "effect curves need a numeric feature, `{feature}` is categorical"
                )));
            }
            let jac = p.blackbox.jacobian_table(p.data.x.view()).stage("jacobian")?;
            let xs = p.data.column(s);
            let partition = build_bins(s, xs, Some(jac.column(s)), bins)?;
            let filled = bin_stats(&partition, xs, jac.column(s), None)?;
            let curve = dale_curve(&filled);
            let scaler = p.scaler.clone();
            curve.save_csv(out, |v| scaler.as_ref().map_or(v, |sc| sc.feature_to_original(s, v)))?;
            println!(
                "{feature}: {} bins, H = {:.6}",
                filled.bins.len(),
                heterogeneity(&filled).h
            );
            Ok(())
        }
        Command::Evaluate {
            data,
            mlp,
            regions,
            boost,
            test_fraction,
            json,
            out_dir,
        } => {
            let (ds, known) = load_data(data, cli.seed)?;
            let name = if data.toy {
                "toy".to_string()
            } else {
                data.data
                    .as_ref()
                    .and_then(|p| p.file_stem())
                    .map_or("data".into(), |s| s.to_string_lossy().into_owned())
            };
            let cfg = ExperimentConfig {
                name,
                seed: cli.seed,
                test_fraction: *test_fraction,
                standardize: known.is_none(),
                blackbox: known.map_or(BlackBoxSource::TrainMlp, BlackBoxSource::Provided),
                mlp: mlp.config(cli.seed),
                regions: regions.config(),
                boost: boost.config(),
            };
            print_config("evaluate", cli, threads, ExperimentSettings::from(&cfg))?;
            let res = run_experiment(&ds, &cfg)?;
            if *json {
                println!("{}", res.table_json()?);
            } else {
                print!("{}", res.table_text());
                let mut text = String::new();
                print_regions(&mut text, &res.regionsets, &res.train, res.scaler.as_ref());
                print!("{text}");
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(dir).map_err(|e| RamError::io(dir, e))?;
                std::fs::write(dir.join("metrics.txt"), res.table_text()).map_err(|e| RamError::io(dir, e))?;
                std::fs::write(dir.join("metrics.json"), res.table_json()?).map_err(|e| RamError::io(dir, e))?;
                write_json(&dir.join("regions.json"), &res.regionsets)?;
                write_shape_tables(&res.ra2m, res.scaler.as_ref(), &dir.join("shapes"))?;
                let saved = SavedModel {
                    meta: ModelMeta {
                        format: 1,
                        target: ds.target.clone(),
                        boost: cfg.boost.clone(),
                        regions: Some(cfg.regions.clone()),
                        seed: cli.seed,
                    },
                    scaler: res.scaler.clone(),
                    model: res.ra2m.clone(),
                    blackbox: matches!(cfg.blackbox, BlackBoxSource::TrainMlp).then(|| res.blackbox.clone()),
                };
                saved.save(&dir.join("ra2m.json"))?;
            }
            Ok(())
        }
    }
}

fn a_settings(a: &SynthArgs) -> serde_json::Value {
    serde_json::json!({ "kind": a.kind, "n": a.n, "noise": a.noise, "out": a.out })
}

/// Serializable view of an experiment configuration without the black box.
#[derive(Serialize)]
struct ExperimentSettings<'a> {
    name: &'a str,
    test_fraction: f64,
    standardize: bool,
    mlp: &'a MlpConfig,
    regions: &'a RegionConfig,
    boost: &'a BoostConfig,
}

impl<'a> From<&'a ExperimentConfig> for ExperimentSettings<'a> {
    fn from(c: &'a ExperimentConfig) -> Self {
        ExperimentSettings {
            name: &c.name,
            test_fraction: c.test_fraction,
            standardize: c.standardize,
            mlp: &c.mlp,
            regions: &c.regions,
            boost: &c.boost,
        }
    }
}
