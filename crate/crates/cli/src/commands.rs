use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use spikegrad::checkpoint::{Checkpoint, CheckpointHeader};
use spikegrad::data::{
    gen_synthetic, raster_to_events, write_event_csv, CropMode, Dataset, DatasetManifest,
    EventFormat, Labeled, ManifestEntry, SensorDims, SyntheticDataset, SyntheticParams,
};
use spikegrad::init::calibrate;
use spikegrad::metrics::{
    default_eval_times, evaluate, gnuplot_script, latency_curve, spike_report, Evaluation,
};
use spikegrad::network::{Network, NetworkOptions, Weights};
use spikegrad::optim::OptimizerState;
use spikegrad::rng::{stream, Purpose};
use spikegrad::train::{metrics_csv, train_epoch, EpochRecord};
use spikegrad::Error;

use crate::config::RunConfig;
use crate::CliError;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

/// Writes `train/` and `test/` event CSVs plus `train.json` and `test.json`
/// manifests under `dir`. Returns the two manifest paths.
pub fn write_synthetic(
    ds: &SyntheticDataset,
    dir: &Path,
    dt: f64,
) -> Result<(PathBuf, PathBuf), CliError> {
    let p = &ds.params;
    let mut paths = Vec::new();
    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
        create_dir(&dir.join(split))?;
        let mut entries = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let rel = PathBuf::from(split).join(format!("{i:05}.csv"));
            write(
                &dir.join(&rel),
                write_event_csv(&raster_to_events(&s.spikes, dt)),
            )?;
            entries.push(ManifestEntry {
                path: rel,
                label: s.label,
            });
        }
        let manifest = DatasetManifest {
            format: EventFormat::Csv,
            sensor: SensorDims {
                width: p.units as u32,
                height: 1,
                polarities: 1,
            },
            num_classes: p.classes,
            duration_ms: p.steps as f64 * dt,
            crop: None,
            samples: entries,
        };
        let path = dir.join(format!("{split}.json"));
        manifest.save(&path)?;
        paths.push(path);
    }
    let test = paths.pop().unwrap();
    Ok((paths.pop().unwrap(), test))
}

pub fn cmd_gen_synthetic(
    params: &SyntheticParams,
    seed: u64,
    dt: f64,
    out: &Path,
) -> Result<(PathBuf, PathBuf), CliError> {
    params
        .validate()
        .map_err(|e| CliError::Config(format!("synthetic: {e}")))?;
    if !(dt > 0.0) {
        return Err(CliError::Config(format!("dt: must be > 0, got {dt}")));
    }
    let ds = gen_synthetic(params, seed)?;
    create_dir(out)?;
    write_synthetic(&ds, out, dt)
}

fn check_dataset(ds: &Dataset, net: &Network) -> Result<(), CliError> {
    let sensor = ds.manifest.sensor.units();
    if sensor != net.input_units() {
        return Err(Error::Shape(format!(
            "dataset sensor has {sensor} units, network input has {}",
            net.input_units()
        ))
        .into());
    }
    if let Some(s) = ds.samples.iter().find(|s| s.label >= net.num_outputs()) {
        return Err(Error::OutOfRange(format!(
            "{}: label {} but the network has {} outputs",
            s.path.display(),
            s.label,
            net.num_outputs()
        ))
        .into());
    }
    Ok(())
}

/// A dataset bound to a network on its own time grid.
struct Split {
    dataset: Dataset,
    net: Network,
    fixed: Option<Vec<Labeled>>,
}

impl Split {
    fn load(manifest: &Path, cfg: &RunConfig, opts: NetworkOptions) -> Result<Self, CliError> {
        let dataset = Dataset::load(manifest)?;
        let grid = dataset.manifest.grid(cfg.dt)?;
        let net = Network::with_options(cfg.spec()?, grid, opts)?;
        check_dataset(&dataset, &net)?;
        let random = matches!(dataset.manifest.crop, Some(c) if c.mode == CropMode::Random);
        let fixed = if random {
            None
        } else {
            Some(dataset.materialize(&grid, None)?)
        };
        Ok(Split {
            dataset,
            net,
            fixed,
        })
    }

    /// Samples for `epoch`; random crops are redrawn from the run seed.
    fn samples(
        &self,
        seed: u64,
        epoch: usize,
    ) -> Result<std::borrow::Cow<'_, [Labeled]>, CliError> {
        Ok(match &self.fixed {
            Some(v) => v.as_slice().into(),
            None => {
                let mut rng = stream(seed, Purpose::Crop, epoch as u64);
                self.dataset
                    .materialize(self.net.grid(), Some(&mut rng))?
                    .into()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub history: Vec<EpochRecord>,
    pub output_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub elapsed: Duration,
}

impl TrainSummary {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.test_accuracy)
    }
}

fn header(
    cfg: &RunConfig,
    net: &Network,
    epoch: usize,
    history: &[EpochRecord],
) -> CheckpointHeader {
    CheckpointHeader {
        architecture: net.spec().to_string(),
        neuron: cfg.neuron,
        loss: cfg.loss.clone(),
        dt: net.grid().dt,
        num_steps: net.grid().num_steps,
        pool_scale: cfg.pool_scale,
        kernel_cutoff: cfg.kernel_cutoff,
        epoch,
        seed: cfg.seed,
        metrics: history.to_vec(),
        layer_sizes: vec![],
    }
}

fn save(
    cfg: &RunConfig,
    net: &Network,
    w: &Weights,
    epoch: usize,
    history: &[EpochRecord],
    path: &Path,
) -> Result<(), CliError> {
    Checkpoint::new(header(cfg, net, epoch, history), w.clone()).save(path)?;
    Ok(())
}

/// Trains per `cfg`, writing into `cfg.output_dir`:
/// `config.json`, `epoch_000.spk` (calibrated initial weights),
/// `metrics.csv` and `final.spk` (when at least one epoch ran), and
/// `epoch_NNN.spk` every `checkpoint_every` epochs.
pub fn cmd_train(cfg: &RunConfig, quiet: bool) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = &cfg.output_dir;
    create_dir(out)?;
    write(&out.join("config.json"), cfg.to_json())?;

    let (train_manifest, test_manifest) = match &cfg.data.synthetic {
        Some(params) => {
            let ds = gen_synthetic(params, cfg.data.synthetic_seed.unwrap_or(cfg.seed))?;
            let dir = out.join("data");
            create_dir(&dir)?;
            let (train, test) = write_synthetic(&ds, &dir, cfg.dt)?;
            (train, Some(test))
        }
        None => (
            cfg.data.train_manifest.clone().expect("validated"),
            cfg.data.test_manifest.clone(),
        ),
    };
    let opts = cfg.network_options();
    let train = Split::load(&train_manifest, cfg, opts)?;
    let test = test_manifest
        .map(|m| Split::load(&m, cfg, opts))
        .transpose()?;

    let first = train.samples(cfg.seed, 0)?;
    let cal = calibrate(&train.net, &first, cfg.seed, &cfg.init)?;
    if !quiet {
        let rates: Vec<String> = cal.rates[1..].iter().map(|r| format!("{r:.3}")).collect();
        println!("calibrated initial rates (spikes/bin): {}", rates.join(" "));
    }
    drop(first);
    let mut weights = cal.weights;
    let mut opt = OptimizerState::new(cfg.optimizer, &weights)?;
    let mut history: Vec<EpochRecord> = Vec::new();
    save(
        cfg,
        &train.net,
        &weights,
        0,
        &history,
        &out.join("epoch_000.spk"),
    )?;

    for epoch in 1..=cfg.epochs {
        let data = train.samples(cfg.seed, epoch - 1)?;
        let stats = train_epoch(
            &train.net,
            &mut weights,
            &data,
            &cfg.loss,
            &mut opt,
            cfg.batch_size,
            cfg.seed,
            epoch - 1,
        )?;
        let test_accuracy = match &test {
            Some(t) => Some(evaluate(&t.net, &weights, &t.samples(cfg.seed, 0)?)?.accuracy),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            train_accuracy: stats.accuracy,
            test_accuracy,
        };
        history.push(record);
        if !quiet {
            let test = test_accuracy
                .map(|a| format!(" test_acc {a:.4}"))
                .unwrap_or_default();
            println!(
                "epoch {epoch}: loss {:.6} train_acc {:.4}{test}",
                stats.mean_loss, stats.accuracy
            );
        }
        write(&out.join("metrics.csv"), metrics_csv(&history))?;
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            save(
                cfg,
                &train.net,
                &weights,
                epoch,
                &history,
                &out.join(format!("epoch_{epoch:03}.spk")),
            )?;
        }
        if let (Some(goal), Some(acc)) = (cfg.stop_at_accuracy, test_accuracy) {
            if acc >= goal {
                break;
            }
        }
    }
    let final_checkpoint = if history.is_empty() {
        out.join("epoch_000.spk")
    } else {
        let path = out.join("final.spk");
        save(cfg, &train.net, &weights, history.len(), &history, &path)?;
        path
    };
    Ok(TrainSummary {
        history,
        output_dir: out.clone(),
        final_checkpoint,
        elapsed: start.elapsed(),
    })
}

/// Checkpoint, network on the manifest's grid, and the rasterized samples
/// (random crops fall back to the record start).
fn load_for_eval(
    checkpoint: &Path,
    manifest: &Path,
) -> Result<(Checkpoint, Network, Vec<Labeled>), CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::load(manifest)?;
    let grid = dataset.manifest.grid(ckpt.header.dt)?;
    let opts = NetworkOptions {
        pool_scale: ckpt.header.pool_scale,
        kernel_cutoff: ckpt.header.kernel_cutoff,
    };
    let net = Network::with_options(ckpt.spec()?, grid, opts)?;
    check_dataset(&dataset, &net)?;
    let samples = dataset.materialize(&grid, None)?;
    Ok((ckpt, net, samples))
}

fn default_out(checkpoint: &Path, out: Option<&Path>) -> PathBuf {
    match out {
        Some(o) => o.to_path_buf(),
        None => checkpoint
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf(),
    }
}

/// Accuracy over the manifest; writes `predictions.csv`.
pub fn cmd_eval(
    checkpoint: &Path,
    manifest: &Path,
    out: Option<&Path>,
) -> Result<Evaluation, CliError> {
    let (ckpt, net, samples) = load_for_eval(checkpoint, manifest)?;
    let eval = evaluate(&net, &ckpt.weights, &samples)?;
    let out = default_out(checkpoint, out);
    create_dir(&out)?;
    write(&out.join("predictions.csv"), eval.predictions_csv())?;
    Ok(eval)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyzeMode {
    Latency,
    Spikes,
}

/// Writes `latency.csv` or `spikes.csv`, plus a matching `.gp` script when
/// `plot` is set. Returns the CSV path.
pub fn cmd_analyze(
    checkpoint: &Path,
    manifest: &Path,
    mode: AnalyzeMode,
    out: Option<&Path>,
    step_ms: Option<f64>,
    plot: bool,
) -> Result<PathBuf, CliError> {
    let (ckpt, net, samples) = load_for_eval(checkpoint, manifest)?;
    let out = default_out(checkpoint, out);
    create_dir(&out)?;
    let (name, csv, script) = match mode {
        AnalyzeMode::Latency => {
            let step = step_ms.unwrap_or(net.grid().dt);
            if !(step > 0.0) {
                return Err(CliError::Config(format!(
                    "step_ms: must be > 0, got {step}"
                )));
            }
            let times = default_eval_times(net.grid(), step);
            let curve = latency_curve(&net, &ckpt.weights, &samples, &times)?;
            let script = gnuplot_script(
                "latency.csv",
                "accuracy vs inference time",
                "t (ms)",
                "accuracy",
                false,
            );
            ("latency", curve.to_csv(), script)
        }
        AnalyzeMode::Spikes => {
            let report = spike_report(&net, &ckpt.weights, &samples)?;
            let script = gnuplot_script(
                "spikes.csv",
                "mean spikes per layer",
                "layer",
                "spikes per sample",
                true,
            );
            ("spikes", report.to_csv(), script)
        }
    };
    let path = out.join(format!("{name}.csv"));
    write(&path, csv)?;
    if plot {
        write(&out.join(format!("{name}.gp")), script)?;
    }
    Ok(path)
}
