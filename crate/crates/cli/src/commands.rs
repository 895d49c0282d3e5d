use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rcvae_core::dataio::{
    load_csv, prepare, read_dataset, synth_generate, unpack, write_dataset, DatasetArchive, SplitTag,
};
use rcvae_core::embedviz::{analyze, render_svg, write_annotations_csv, write_points_csv};
use rcvae_core::evalab::{report, run_ablation, sweep_targets, write_report_csv, AblationMode, AblationSpec};
use rcvae_core::hpo::{run_hpo, write_trials_csv, Hyperparams};
use rcvae_core::labels::match_similar;
use rcvae_core::numcore::{streams, Rng};
use rcvae_core::trainer::{fit_final, load_checkpoint, train, Checkpoint, TrainConfig, TrainInputs};
use rcvae_core::{DataType, LabelKey, QuasiVideoSample, RcvaeConfig, SplitSpec};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};

pub const DATASET: &str = "dataset.bin";
pub const MANIFEST: &str = "manifest.csv";
pub const SCALER: &str = "scaler.csv";
pub const CONFIG: &str = "config.json";
pub const CHECKPOINT: &str = "checkpoint.rcva";
pub const HISTORY: &str = "train_history.csv";
pub const METRICS: &str = "metrics.csv";
pub const ABLATION: &str = "ablation.csv";
pub const POINTS: &str = "embedding_points.csv";
pub const ANNOTATIONS: &str = "annotations.csv";
pub const PLOT: &str = "embedding.svg";
pub const TRIALS: &str = "hpo_trials.csv";
pub const BEST_HPARAMS: &str = "best_hparams.json";
pub const LOG: &str = "log.txt";
pub const GENERATED_DIR: &str = "generated";
pub const GENERATED_HEADER: [&str; 5] = [
    "t_index",
    "voltage_V",
    "current_rate_C",
    "temperature_degC",
    "charge_capacity_Ah",
];

/// Resolved config plus the run directory every artifact lives in.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
}

impl Run {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str, producer: &'static str) -> CliResult<PathBuf> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { path, producer })
        }
    }

    fn dataset(&self) -> CliResult<DatasetArchive> {
        Ok(read_dataset(self.require(DATASET, "preprocess")?)?)
    }

    fn checkpoint(&self) -> CliResult<Checkpoint> {
        Ok(load_checkpoint(self.require(CHECKPOINT, "train")?)?)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        create_file(&self.path(name))
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Output { path, source })
    }

    /// Echoes the effective config into the run directory.
    pub fn echo_config(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.cfg).expect("config serializes");
        self.write(CONFIG, text + "\n")
    }

    /// Model and training config for a final or ablation fit, with the HPO
    /// winner applied when one exists and `use_hpo` is set.
    fn tuned(&self, use_hpo: bool) -> CliResult<(RcvaeConfig, TrainConfig)> {
        let mut model = self.cfg.model_config()?;
        let mut train_cfg = self.cfg.train.clone();
        let best = self.path(BEST_HPARAMS);
        if use_hpo && best.is_file() {
            let text = std::fs::read_to_string(&best).map_err(rcvae_core::Error::from)?;
            let hp: Hyperparams = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", best.display())))?;
            log::info!("applying tuned hyperparameters from {}: {hp:?}", best.display());
            hp.apply(&mut model, &mut train_cfg);
            model.validate()?;
        }
        Ok((model, train_cfg))
    }
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn splits(archive: &DatasetArchive) -> [Vec<QuasiVideoSample>; 3] {
    [SplitTag::Train, SplitTag::Val, SplitTag::Test].map(|t| archive.split(t))
}

pub fn preprocess(run: &Run) -> CliResult<()> {
    let cfg = &run.cfg;
    let records = match &cfg.data {
        DataSource::Csv { data, metadata } => load_csv(data, metadata)?,
        DataSource::Synthetic {
            n_batteries,
            eol_min,
            eol_max,
        } => {
            let mut rng = Rng::seed_from(cfg.seed).substream(streams::SYNTH);
            let cycles = u32::try_from(cfg.n_cycles).map_err(|_| CliError::Config("n_cycles too large".into()))?;
            synth_generate(&mut rng, *n_batteries, cycles, (*eol_min, *eol_max))?
        }
    };
    let spec = SplitSpec {
        seed: cfg.split_seed,
        n_cycles: cfg.n_cycles,
    };
    let prepared = prepare(&records, &spec, cfg.layout()?)?;
    let archive = &prepared.archive;
    let [train, val, test] = splits(archive);
    log::info!(
        "{} batteries -> {} samples (train {}, val {}, test {}); dropped {} cycles, clipped {} raw and {} scaled values",
        records.len(),
        archive.samples.len(),
        train.len(),
        val.len(),
        test.len(),
        prepared.clean_report.dropped_cycles,
        prepared.clean_report.clipped_values,
        prepared.scale_report.clipped
    );
    write_dataset(archive, run.path(DATASET))?;

    let mut w = csv::Writer::from_writer(run.create(MANIFEST)?);
    w.write_record(["sample", "battery_id", "label", "eol", "ecl", "split"])
        .map_err(rcvae_core::Error::from)?;
    for (i, (s, tag)) in archive.samples.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.battery_id.clone(),
            s.label.to_string(),
            s.label.eol.to_string(),
            s.label.ecl.to_string(),
            tag.name().to_string(),
        ])
        .map_err(rcvae_core::Error::from)?;
    }
    w.flush().map_err(rcvae_core::Error::from)?;

    let mut w = csv::Writer::from_writer(run.create(SCALER)?);
    w.write_record(["type", "min", "max"]).map_err(rcvae_core::Error::from)?;
    for ty in DataType::ALL {
        let (lo, hi) = archive.scaler.range(ty);
        w.write_record([ty.short().to_string(), lo.to_string(), hi.to_string()])
            .map_err(rcvae_core::Error::from)?;
    }
    w.flush().map_err(rcvae_core::Error::from)?;
    Ok(())
}

pub fn hpo(run: &Run) -> CliResult<()> {
    let archive = run.dataset()?;
    let [train_set, val_set, _] = splits(&archive);
    let inputs = TrainInputs {
        train: &train_set,
        val: &val_set,
        scaler: archive.scaler,
        layout: archive.layout,
    };
    let outcome = run_hpo(&inputs, run.cfg.model_config()?, &run.cfg.train, &run.cfg.hpo)?;
    write_trials_csv(run.create(TRIALS)?, &outcome.trials)?;
    let best = serde_json::to_string_pretty(&outcome.best).expect("hyperparameters serialize");
    run.write(BEST_HPARAMS, best + "\n")?;
    log::info!(
        "best of {} trials is #{}: {:?}",
        outcome.trials.len(),
        outcome.best_index + 1,
        outcome.best
    );
    Ok(())
}

pub fn train_cmd(run: &Run, use_hpo: bool) -> CliResult<()> {
    let archive = run.dataset()?;
    let [train_set, val_set, _] = splits(&archive);
    let inputs = TrainInputs {
        train: &train_set,
        val: &val_set,
        scaler: archive.scaler,
        layout: archive.layout,
    };
    let (model, train_cfg) = run.tuned(use_hpo)?;
    let (checkpoint, state) = match run.cfg.fit.final_fit() {
        None => train(&inputs, model, &train_cfg)?,
        Some(mode) => fit_final(&inputs, model, &train_cfg, mode)?,
    };
    checkpoint.save(run.path(CHECKPOINT))?;
    let mut w = csv::Writer::from_writer(run.create(HISTORY)?);
    for rec in &state.history {
        w.serialize(rec).map_err(rcvae_core::Error::from)?;
    }
    w.flush().map_err(rcvae_core::Error::from)?;
    log::info!(
        "trained {} epochs; best monitor MAE {:.6} at epoch {}; {} parameters",
        state.epoch,
        state.best_val,
        state.best_epoch,
        checkpoint.params.parameter_count()
    );
    Ok(())
}

/// Logs the training label each unseen query label falls back to.
fn log_matches<'a>(checkpoint: &Checkpoint, labels: impl IntoIterator<Item = &'a LabelKey>, weight: f64) -> CliResult<()> {
    let unseen: BTreeSet<LabelKey> = labels
        .into_iter()
        .filter(|k| !checkpoint.vocab.contains(k))
        .copied()
        .collect();
    for key in unseen {
        let matched = match_similar(&checkpoint.vocab, &key, weight)?;
        log::info!("label {key} is not in the training vocabulary; using matched label {matched}");
    }
    Ok(())
}

pub fn evaluate(run: &Run) -> CliResult<()> {
    let checkpoint = run.checkpoint()?;
    let test = run.dataset()?.split(SplitTag::Test);
    log_matches(&checkpoint, test.iter().map(|s| &s.label), run.cfg.match_weight)?;
    let r = report(&checkpoint, &test, &run.cfg.report_options())?;
    write_report_csv(run.create(METRICS)?, [("None".to_string(), &r)])?;
    log::info!("test MAE {:.6}, RMSE {:.6} over {} samples", r.total_mae, r.total_rmse, r.samples);
    for ty in DataType::ALL {
        let m = r.get(ty);
        log::info!("  {:<2} MAE {:.6} {} RMSE {:.6}", ty.short(), m.mae, ty.unit(), m.rmse);
    }
    Ok(())
}

pub fn generate(run: &Run, eol: u32, ecl: u32, count: usize) -> CliResult<()> {
    let checkpoint = run.checkpoint()?;
    let query = LabelKey::new(eol, ecl)?;
    log_matches(&checkpoint, [&query], run.cfg.match_weight)?;
    let mut rng = Rng::seed_from(run.cfg.seed).substream(streams::GENERATE);
    let (used, samples) = checkpoint
        .params
        .generate(&checkpoint.vocab, &query, count, &mut rng, run.cfg.match_weight)?;
    let out_dir = run.path(GENERATED_DIR);
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Output {
        path: out_dir.clone(),
        source,
    })?;
    for (i, features) in samples.iter().enumerate() {
        let cycle = checkpoint.scaler.invert_cycle(&unpack(features, checkpoint.layout)?);
        let path = out_dir.join(format!("{eol}_{ecl}_{i}.csv"));
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        w.write_record(GENERATED_HEADER).map_err(rcvae_core::Error::from)?;
        for t in 0..cycle.len() {
            let mut row = vec![t.to_string()];
            row.extend(DataType::ALL.iter().map(|&ty| cycle.get(ty)[t].to_string()));
            w.write_record(&row).map_err(rcvae_core::Error::from)?;
        }
        w.flush().map_err(rcvae_core::Error::from)?;
    }
    log::info!("wrote {count} samples for {query} (condition {used}) to {}", out_dir.display());
    Ok(())
}

pub fn ablate_cmd(run: &Run, targets: &[String], retrain: bool) -> CliResult<()> {
    let checkpoint = run.checkpoint()?;
    let archive = run.dataset()?;
    let [train_set, val_set, test] = splits(&archive);
    let mut cfg = run.cfg.clone();
    if !targets.is_empty() {
        cfg.ablation.targets = targets.to_vec();
    }
    let mut list = cfg.ablation_targets()?;
    if list.is_empty() {
        list = sweep_targets(checkpoint.config());
    }
    let mode = if retrain { AblationMode::Retrain } else { cfg.ablation.mode };
    let inputs = TrainInputs {
        train: &train_set,
        val: &val_set,
        scaler: archive.scaler,
        layout: archive.layout,
    };
    let (_, train_cfg) = run.tuned(true)?;
    let opts = cfg.report_options();
    let rows = list
        .par_iter()
        .map(|&target| {
            let spec = AblationSpec { target, mode };
            run_ablation(&checkpoint, spec, &test, &opts, Some((&inputs, &train_cfg))).map(|r| (target.name(), r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (name, r) in &rows {
        log::info!("{name:<12} MAE {:.6}", r.total_mae);
    }
    write_report_csv(run.create(ABLATION)?, rows.iter().map(|(n, r)| (n.clone(), r)))?;
    Ok(())
}

pub fn analyze_cmd(run: &Run) -> CliResult<()> {
    let checkpoint = run.checkpoint()?;
    let n = checkpoint.vocab.len();
    let mut cfg = run.cfg.analyze;
    let cap = (n as f64 - 1.0) / 3.0;
    if cfg.tsne.perplexity >= cap && n >= 4 {
        let reduced = (cap - 1e-6).max(1.0).min(cap * 0.99);
        log::warn!("perplexity {} is too large for {n} labels; using {reduced:.3}", cfg.tsne.perplexity);
        cfg.tsne.perplexity = reduced;
    }
    if cfg.clusters > n {
        log::warn!("{} clusters requested for {n} labels; using {n}", cfg.clusters);
        cfg.clusters = n;
    }
    let analysis = analyze(&checkpoint.params.embedding, &checkpoint.vocab, &cfg)?;
    let points = &analysis.projection.points;
    write_points_csv(run.create(POINTS)?, &checkpoint.vocab, points, &analysis.clustering.assignments)?;
    write_annotations_csv(run.create(ANNOTATIONS)?, &analysis.annotations)?;
    run.write(PLOT, render_svg(points, &analysis.clustering.assignments, &analysis.annotations))?;
    if let (Some(first), Some(last)) = (analysis.projection.kl_history.first(), analysis.projection.kl_history.last()) {
        log::info!("t-SNE KL {first:.4} -> {last:.4}");
    }
    for a in &analysis.annotations {
        log::info!(
            "cluster {}: {} labels, mean EOL {:.1}, mean ECL {:.1}, origin distance {:.1}",
            a.cluster,
            a.members.len(),
            a.mean_eol,
            a.mean_ecl,
            a.origin_distance
        );
    }
    Ok(())
}
