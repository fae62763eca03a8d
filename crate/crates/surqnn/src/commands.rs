//! The four subcommands. Each returns `Ok(true)` on success, `Ok(false)`
//! when a check ran but failed, and `Err` for usage, config or IO problems.

use std::fs;
use std::path::{Path, PathBuf};

use surqnn_core::ansatz::{CircuitModel, ExactMethod, TrajectoryModel};
use surqnn_core::channels::{verification_suite_with, CheckRecord, KrausSet};
use surqnn_core::data::{downscale_padded, filter_classes, synthetic, Dataset};
use surqnn_core::gradcheck::compare_all;
use surqnn_core::pipeline::{evaluate, train_epoch_with, PipelineState};
use surqnn_core::rng::derive_seed;
use surqnn_core::{C64, Error, MeasurementModel, Observable, ParamVector};

use crate::checkpoint::Checkpoint;
use crate::config::{Backend, CircuitBackend, Config, DataKind, LoadedConfig};
use crate::error::{CliError, CliResult};
use crate::idx::load_idx;
use crate::manifest::{ParameterCounts, RunManifest};
use crate::metrics::{append_jsonl, write_csv, write_table, GradRow, MetricsRow};
use crate::parallel::{default_workers, Parallel};

/// Flag values layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub backend: Option<Backend>,
    pub h: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, c: &mut Config) {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(w) = self.workers {
            c.runtime.workers = w;
        }
        if let Some(b) = self.backend {
            c.train.backend = b;
        }
        if let Some(h) = self.h {
            c.gradcheck.h = h;
        }
    }
}

pub fn load_config(path: &Path, ov: &Overrides) -> CliResult<LoadedConfig> {
    let mut loaded = Config::load(path)?;
    ov.apply(&mut loaded.config);
    loaded.config.validate()?;
    Ok(loaded)
}

fn workers(c: &Config) -> usize {
    match c.runtime.workers {
        0 => default_workers(),
        w => w,
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSplit {
    Train,
    Test,
}

/// Loads one split as configured. Empty results are usage errors.
pub fn load_split(lc: &LoadedConfig, split: DataSplit) -> CliResult<Dataset> {
    let c = &lc.config;
    let d = &c.data;
    let usage = |e: Error| match e {
        Error::Empty(msg) => CliError::Usage(format!("dataset is empty: {msg}")),
        other => CliError::Core(other),
    };
    let ds = match d.kind {
        DataKind::Synthetic => {
            let (count, stream) = match split {
                DataSplit::Train => (d.train_count, 0x5A_0001),
                DataSplit::Test => (d.test_count, 0x5A_0002),
            };
            if count < 2 {
                return Err(CliError::Usage(format!("synthetic split needs at least 2 samples, got {count}")));
            }
            synthetic(d.synthetic.into(), count, derive_seed(c.seed, stream))?
        }
        DataKind::Mnist => {
            let (img, lab) = match split {
                DataSplit::Train => (&d.train_images, &d.train_labels),
                DataSplit::Test => (&d.test_images, &d.test_labels),
            };
            let ds = load_idx(&lc.resolve(img), &lc.resolve(lab))?;
            if ds.is_empty() {
                return Err(CliError::Usage("dataset is empty".into()));
            }
            let ds = if d.classes.is_empty() {
                ds
            } else {
                filter_classes(&ds, &d.classes).map_err(usage)?
            };
            if matches!(ds.image_shape(), Some((h, w, _)) if (h, w) == (d.side, d.side)) {
                ds
            } else {
                ds.map_images(|im| downscale_padded(im, d.side, d.side))?
            }
        }
    };
    if ds.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    if ds.class_count > c.class_count() {
        return Err(CliError::Config(format!(
            "data has {} classes but the head has {}",
            ds.class_count,
            c.class_count()
        )));
    }
    Ok(ds)
}

/// Circuit backend used for training and evaluation.
pub fn circuit_model(c: &Config) -> CliResult<Box<dyn MeasurementModel + Sync>> {
    let spec = c.circuit_spec()?;
    Ok(match c.train.circuit_backend {
        CircuitBackend::Exact => Box::new(CircuitModel::with_method(spec, ExactMethod::Branches)),
        CircuitBackend::Trajectory => Box::new(TrajectoryModel {
            spec,
            shots: c.train.shots,
            seed: derive_seed(c.seed, 7),
        }),
    })
}

fn print_checks(rows: &[CheckRecord]) {
    println!("{:<36} {:>14} {:>12}  status", "check", "value", "tolerance");
    for r in rows {
        println!(
            "{:<36} {:>14.6e} {:>12.1e}  {}",
            r.name,
            r.residual,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyArgs {
    pub out: Option<PathBuf>,
    /// Scales the first Kraus operator of every layer by 1.001.
    pub corrupt_kraus: bool,
}

pub fn cmd_verify(lc: &LoadedConfig, args: &VerifyArgs) -> CliResult<bool> {
    let c = &lc.config;
    let spec = c.circuit_spec()?;
    let corrupt = args.corrupt_kraus;
    let rows = verification_suite_with(&spec, c.verify.trials, c.seed, |ks| {
        if !corrupt {
            return ks;
        }
        let (anc, n) = (ks.ancillas().to_vec(), ks.n_main());
        let mut ops = ks.into_operators();
        ops[0].scale(C64::new(1.001, 0.0));
        KrausSet::new(ops, anc, n).expect("same shapes")
    })?;
    print_checks(&rows);
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        #[derive(serde::Serialize)]
        struct Row<'a> {
            check: &'a str,
            value: f64,
            tolerance: f64,
            passed: bool,
        }
        let table: Vec<Row> = rows
            .iter()
            .map(|r| Row {
                check: &r.name,
                value: r.residual,
                tolerance: r.tolerance,
                passed: r.passed,
            })
            .collect();
        write_csv(&dir.join("verify.csv"), &table)?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("verify: all {} checks passed", rows.len());
        Ok(true)
    } else {
        eprintln!("verify: failed checks: {}", failed.join(", "));
        Ok(false)
    }
}

pub fn cmd_gradcheck(lc: &LoadedConfig, out: &Path) -> CliResult<bool> {
    let c = &lc.config;
    let spec = c.circuit_spec()?;
    let model = CircuitModel::with_method(spec, ExactMethod::Branches);
    let theta = ParamVector::random(model.num_params(), c.seed);
    let observable = Observable::total_z(model.num_outputs());
    let reports = compare_all(&model, &theta, &observable, c.gradcheck.h)?;
    ensure_dir(out)?;
    let rows: Vec<GradRow> = reports.iter().map(GradRow::from).collect();
    write_csv(&out.join("gradcheck.csv"), &rows)?;
    let worst = reports
        .iter()
        .max_by(|a, b| a.abs_err.total_cmp(&b.abs_err))
        .expect("at least one parameter");
    let bad = reports.iter().filter(|r| !(r.abs_err < c.gradcheck.tolerance)).count();
    println!(
        "gradcheck: {} parameters, h = {:e}, max abs err {:.3e} at index {} (tolerance {:e})",
        reports.len(),
        c.gradcheck.h,
        worst.abs_err,
        worst.index,
        c.gradcheck.tolerance
    );
    if bad == 0 {
        Ok(true)
    } else {
        eprintln!("gradcheck: {bad} parameters exceed the tolerance");
        Ok(false)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    /// Stop once this many epochs are complete, leaving a checkpoint.
    pub stop_after: Option<usize>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub fn cmd_train(lc: &LoadedConfig, args: &TrainArgs) -> CliResult<bool> {
    let c = &lc.config;
    let cfg = c.train_config()?;
    let train = load_split(lc, DataSplit::Train)?;
    let test = load_split(lc, DataSplit::Test)?;

    let (mut state, mut history) = match &args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            ck.check_hash(c)?;
            (ck.restore(&cfg)?, ck.history)
        }
        None => (PipelineState::new(&cfg)?, Vec::new()),
    };

    let out = &args.out;
    ensure_dir(out)?;
    let outputs = ["manifest.json", "metrics.csv", "metrics.jsonl", CHECKPOINT_FILE]
        .iter()
        .map(|f| out.join(f).display().to_string())
        .collect();
    let mut manifest = RunManifest::start("train", c, outputs);
    let counts = ParameterCounts {
        classical: state.model.param_count(),
        circuit_angles: cfg.circuit.param_count(),
        surrogate: state.surrogate.mlp.param_count(),
    };
    manifest.parameters = Some(counts);
    manifest.write(&out.join("manifest.json"))?;

    let inner = circuit_model(c)?;
    let circuit = Parallel::new(inner.as_ref(), workers(c));
    let ck_path = out.join(CHECKPOINT_FILE);
    let last = args.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    println!(
        "train: backend {}, {} train / {} test samples, epochs {}..{}; {} classical weights, {} angles, {} surrogate weights",
        c.train.backend.as_str(),
        train.len(),
        test.len(),
        state.epoch,
        last,
        counts.classical,
        counts.circuit_angles,
        counts.surrogate
    );
    while state.epoch < last {
        let m = match train_epoch_with(&train, &mut state, &cfg, &circuit, c.train.backend.into()) {
            Ok(m) => m,
            Err(Error::Divergence(msg)) => {
                Checkpoint::capture(c, &state, &history).save(&ck_path)?;
                return Err(CliError::Check(format!(
                    "training diverged ({msg}); last good state saved to {}",
                    ck_path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        let ev = evaluate(&test, &state.model, &circuit)?;
        let train_row = MetricsRow::from(&m);
        let test_row = MetricsRow {
            epoch: m.epoch,
            split: "test".into(),
            loss: ev.mean_loss,
            accuracy: ev.accuracy,
            lr: m.lr,
            surrogate_mse: None,
        };
        println!(
            "epoch {:>3}  train loss {:.4} acc {:.4}  test loss {:.4} acc {:.4}{}",
            m.epoch,
            m.loss,
            m.accuracy,
            ev.mean_loss,
            ev.accuracy,
            m.surrogate_mse.map_or(String::new(), |v| format!("  surrogate mse {v:.3e}"))
        );
        history.push(train_row);
        history.push(test_row);
        write_table(out, "metrics", &history)?;
        Checkpoint::capture(c, &state, &history).save(&ck_path)?;
    }
    manifest.finish();
    manifest.write(&out.join("manifest.json"))?;
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub split: DataSplit,
    pub out: Option<PathBuf>,
    pub min_accuracy: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalRecord {
    pub checkpoint: String,
    pub config_hash: String,
    pub epoch: usize,
    pub split: &'static str,
    pub samples: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub fn cmd_eval(lc: &LoadedConfig, args: &EvalArgs) -> CliResult<bool> {
    let c = &lc.config;
    let ck = Checkpoint::load(&args.checkpoint)?;
    ck.check_hash(c)?;
    let cfg = c.train_config()?;
    let state = ck.restore(&cfg)?;
    let ds = load_split(lc, args.split)?;
    let inner = circuit_model(c)?;
    let circuit = Parallel::new(inner.as_ref(), workers(c));
    let ev = evaluate(&ds, &state.model, &circuit)?;
    let split = match args.split {
        DataSplit::Train => "train",
        DataSplit::Test => "test",
    };
    println!(
        "eval: {} {split} samples, accuracy {:.4}, mean loss {:.4}",
        ds.len(),
        ev.accuracy,
        ev.mean_loss
    );
    println!("confusion (rows true, columns predicted):");
    for row in &ev.confusion {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
        println!("{}", cells.join(""));
    }
    let record = EvalRecord {
        checkpoint: args.checkpoint.display().to_string(),
        config_hash: ck.config_hash.clone(),
        epoch: ck.epoch,
        split,
        samples: ds.len(),
        accuracy: ev.accuracy,
        loss: ev.mean_loss,
        confusion: ev.confusion.clone(),
    };
    let out = match &args.out {
        Some(d) => d.clone(),
        None => args.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    ensure_dir(&out)?;
    append_jsonl(&out.join("eval.jsonl"), &record)?;
    match args.min_accuracy {
        Some(t) if ev.accuracy < t => {
            eprintln!("eval: accuracy {:.4} below required {t:.4}", ev.accuracy);
            Ok(false)
        }
        _ => Ok(true),
    }
}
