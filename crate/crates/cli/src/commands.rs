use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::{json, Value};

use rdl_core::checkpoint::Checkpoint;
use rdl_core::config::{DatasetSource, Mechanism, RunConfig};
use rdl_core::events::{
    load_gesture_dir, read_dataset, template_accuracy, write_dataset, Dataset, FrameSequence,
    GestureOptions, SyntheticSpec,
};
use rdl_core::export;
use rdl_core::harness::{
    evaluate, load_dataset, run_ablation, synthetic_dataset, EvalOptions, EvalReport, PhaseOutcome,
    PresentationLog, Session, Variant,
};

use crate::{AblateArgs, ConfigArgs, EvalArgs, IngestArgs, TrainArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let mismatch = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<rdl_core::Error>(), Some(rdl_core::Error::StateMismatch(_))));
    if mismatch {
        EXIT_MISMATCH
    } else {
        EXIT_INPUT
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn class_table(ds: &Dataset) -> Value {
    json!({
        "n_classes": ds.n_classes,
        "shape": [ds.shape.0, ds.shape.1, ds.shape.2],
        "train": Dataset::class_counts(&ds.train, ds.n_classes),
        "test": Dataset::class_counts(&ds.test, ds.n_classes),
    })
}

pub fn ingest(a: &IngestArgs) -> Result<u8> {
    let (ds, mut summary) = match (&a.root, &a.synthetic) {
        (_, Some(spec_path)) => {
            let text = fs::read_to_string(spec_path)
                .with_context(|| format!("reading {}", spec_path.display()))?;
            let spec: SyntheticSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", spec_path.display()))?;
            spec.validate()?;
            let train_n = a.train_per_class.unwrap_or(spec.samples_per_class);
            let ds = synthetic_dataset(&spec, train_n, a.test_per_class, spec.class_counts.clone())?;
            let oracle = json!({
                "train": template_accuracy(&spec, &ds.train),
                "test": template_accuracy(&spec, &ds.test),
            });
            (ds, json!({ "template_oracle_accuracy": oracle }))
        }
        (Some(root), None) => {
            let opts = GestureOptions {
                fps: a.fps,
                max_frames: a.max_frames,
                downsample: a.downsample,
            };
            (load_gesture_dir(root, &opts)?, json!({}))
        }
        (None, None) => bail!("give a recordings directory or --synthetic"),
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_dataset(&a.out, &ds)?;
    summary["dataset"] = json!(a.out.display().to_string());
    summary["classes"] = class_table(&ds);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(EXIT_OK)
}

/// The effective configuration and the directory relative dataset paths
/// are resolved against.
fn build_config(a: &ConfigArgs) -> Result<(RunConfig, Option<PathBuf>)> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::synthetic(),
    };
    c = c.with_overrides(&a.overrides)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    for m in &a.disable {
        c = c.disable(Mechanism::parse(m)?);
    }
    if let Some(n) = a.max_epochs {
        c.training.layer1_max_epochs = n;
        c.training.layer2_max_epochs = n;
    }
    if let Some(d) = &a.dataset {
        let abs = std::path::absolute(d)?;
        c.dataset = Some(DatasetSource::File(abs.display().to_string()));
    }
    c.validate()?;
    let base = a.config.as_ref().and_then(|p| p.parent().map(Path::to_path_buf));
    Ok((c, base))
}

fn report_json(r: &EvalReport) -> Value {
    json!({
        "n_samples": r.n_samples,
        "correct": r.correct,
        "abstained": r.abstained,
        "accuracy": r.accuracy,
        "confusion": r.confusion,
        "predicted_counts": r.predicted_counts,
        "balance_ratio": r.balance_ratio(),
        "neuron_spikes": r.neuron_spikes,
        "max_active_per_group": r.max_active_per_group,
        "suppressed": r.suppressed,
    })
}

struct RunLog {
    out: BufWriter<File>,
    config_hash: String,
    error: Option<std::io::Error>,
}

impl RunLog {
    fn create(path: &Path, config_hash: &str) -> Result<Self> {
        let out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        Ok(Self {
            out,
            config_hash: config_hash.to_string(),
            error: None,
        })
    }

    fn record(&mut self, log: &PresentationLog) {
        if self.error.is_some() {
            return;
        }
        let mut v = serde_json::to_value(log).expect("log serialises");
        v["config_hash"] = json!(self.config_hash);
        if let Err(e) = writeln!(self.out, "{v}") {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(())
    }
}

fn save(s: &Session, path: &Path) -> Result<()> {
    Checkpoint::from_session(s)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Runs one phase an epoch at a time so periodic checkpoints can be written.
fn run_phase(
    s: &mut Session,
    data: &[FrameSequence],
    layer: u8,
    log: &mut RunLog,
    ckpt_dir: &Path,
) -> Result<PhaseOutcome> {
    let max = if layer == 1 {
        s.config.training.layer1_max_epochs
    } else {
        s.config.training.layer2_max_epochs
    };
    let every = s.config.training.checkpoint_every;
    let mut outcome = PhaseOutcome {
        phase: s.state.phase,
        epochs: s.state.epoch,
        converged: false,
    };
    while s.state.epoch < max {
        let next = s.state.epoch + 1;
        outcome = if layer == 1 {
            s.train_layer1(data, next, &mut |l| log.record(l))?
        } else {
            s.train_layer2(data, next, &mut |l| log.record(l))?
        };
        info!("layer {layer} epoch {} done (converged: {})", outcome.epochs, outcome.converged);
        if every.is_some_and(|k| k > 0 && outcome.epochs.is_multiple_of(k)) {
            save(s, &ckpt_dir.join(format!("layer{layer}_epoch{}.ckpt", outcome.epochs)))?;
        }
        if outcome.converged {
            break;
        }
    }
    Ok(outcome)
}

pub fn train(a: &TrainArgs) -> Result<u8> {
    let (cfg, base) = build_config(&a.cfg)?;
    let hash = cfg.hash();
    let ds = load_dataset(&cfg, base.as_deref())?;
    if ds.train.is_empty() {
        bail!("training split is empty");
    }
    let ckpt_dir = a.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    fs::write(a.out.join("config.json"), cfg.to_json() + "\n")?;

    let mut s = Session::new(cfg.clone(), ds.shape)?;
    let mut log = RunLog::create(&a.out.join("run_log.jsonl"), &hash)?;
    let l1 = run_phase(&mut s, &ds.train, 1, &mut log, &ckpt_dir)?;
    save(&s, &ckpt_dir.join("layer1.ckpt"))?;
    s.begin_layer2();
    let l2 = run_phase(&mut s, &ds.train, 2, &mut log, &ckpt_dir)?;
    log.finish()?;
    let final_ckpt = ckpt_dir.join("final.ckpt");
    save(&s, &final_ckpt)?;

    export::write_kernels(&s.net, &a.out.join("kernels"), &hash)?;
    export::write_decision_synapses(&s.net, &a.out.join("decision_synapses.csv"), &hash)?;
    let opts = EvalOptions::default();
    let train_report = evaluate(&s.net, &cfg, &ds.train, &opts)?;
    let test_report = (!ds.test.is_empty())
        .then(|| evaluate(&s.net, &cfg, &ds.test, &opts))
        .transpose()?;
    if let Some(r) = &test_report {
        export::write_confusion(r, &a.out.join("confusion.csv"), &hash)?;
        export::write_activity(&s.net, r, &a.out.join("activity.csv"), &hash)?;
    }
    let enabled: Vec<&str> = Mechanism::ALL
        .into_iter()
        .filter(|&m| cfg.enabled(m))
        .map(Mechanism::name)
        .collect();
    write_json(
        &a.out.join("report.json"),
        &json!({
            "config_hash": hash,
            "architecture_hash": cfg.architecture_hash(),
            "mechanisms_enabled": enabled,
            "layer1": l1,
            "layer2": l2,
            "gate_violations": s.state.gate_violations,
            "train": report_json(&train_report),
            "test": test_report.as_ref().map(report_json),
            "checkpoint": final_ckpt.display().to_string(),
        }),
    )?;

    println!("config {hash}");
    println!(
        "layer 1: {} epochs, converged {}; layer 2: {} epochs, converged {}",
        l1.epochs, l1.converged, l2.epochs, l2.converged
    );
    print!("train accuracy {:.4}", train_report.accuracy);
    match &test_report {
        Some(r) => println!(", test accuracy {:.4}", r.accuracy),
        None => println!(),
    }
    let budget = cfg.training.layer1_max_epochs.min(cfg.training.layer2_max_epochs);
    if budget > 0 && !(l1.converged && l2.converged) {
        warn!("stopped at the epoch budget before every neuron froze; partial results kept");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let mut cfg = ckpt.config.clone();
    let mut base = None;
    if let Some(p) = &a.config {
        let given = RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?;
        ckpt.check_compatible(&given)?;
        base = p.parent().map(Path::to_path_buf);
        cfg = given;
    }
    if let Some(d) = &a.dataset {
        cfg.dataset = Some(DatasetSource::File(d.display().to_string()));
        base = None;
    }
    let ds = match &a.dataset {
        Some(d) => read_dataset(d).with_context(|| format!("reading {}", d.display()))?,
        None => load_dataset(&cfg, base.as_deref())?,
    };
    if ds.shape != ckpt.network.input_shape() {
        return Err(rdl_core::Error::StateMismatch(format!(
            "dataset shape {:?} differs from the network input {:?}",
            ds.shape,
            ckpt.network.input_shape()
        ))
        .into());
    }
    let samples = match a.split {
        Split::Train => &ds.train,
        Split::Test => &ds.test,
    };
    if samples.is_empty() {
        bail!("the {:?} split is empty", a.split);
    }
    let hash = ckpt.config_hash.clone();
    let report = evaluate(&ckpt.network, &cfg, samples, &EvalOptions::default())?;
    let mut curve = Vec::new();
    for &x in &a.limit_frames {
        let opts = EvalOptions {
            limit_frames: Some(x),
            keep_records: false,
        };
        curve.push((x, evaluate(&ckpt.network, &cfg, samples, &opts)?.accuracy));
    }

    fs::create_dir_all(&a.out)?;
    export::write_confusion(&report, &a.out.join("confusion.csv"), &hash)?;
    export::write_activity(&ckpt.network, &report, &a.out.join("activity.csv"), &hash)?;
    if !curve.is_empty() {
        export::write_frames_curve(&curve, &a.out.join("frames_curve.csv"), &hash)?;
    }
    let mut v = report_json(&report);
    v["config_hash"] = json!(hash);
    v["split"] = json!(format!("{:?}", a.split).to_lowercase());
    v["frames_curve"] = json!(curve);
    write_json(&a.out.join("eval.json"), &v)?;

    println!("config {hash}");
    println!(
        "{} samples: accuracy {:.4}, abstained {}",
        report.n_samples, report.accuracy, report.abstained
    );
    for (x, acc) in &curve {
        println!("  first {x} frames: {acc:.4}");
    }
    Ok(EXIT_OK)
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    if names.is_empty() {
        return Ok(Variant::DEFAULT.to_vec());
    }
    if names.len() == 1 && names[0].eq_ignore_ascii_case("all") {
        return Ok(Variant::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| Variant::parse(n.trim()).with_context(|| format!("unknown variant `{n}`")))
        .collect()
}

pub fn ablate(a: &AblateArgs) -> Result<u8> {
    let (cfg, base) = build_config(&a.cfg)?;
    let variants = parse_variants(&a.variants)?;
    if a.seeds.is_empty() {
        bail!("no seeds given");
    }
    let ds = load_dataset(&cfg, base.as_deref())?;
    let report = run_ablation(&cfg, &ds, &variants, &a.seeds)?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.json"), cfg.to_json() + "\n")?;
    write_json(&a.out.join("ablation.json"), &serde_json::to_value(&report)?)?;
    export::write_ablation_table(&report, &a.out.join("ablation.csv"))?;
    for row in &report.rows {
        let dir = a.out.join("variants").join(&row.name);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.json"), row.variant.apply(&cfg).to_json() + "\n")?;
        write_json(&dir.join("runs.json"), &serde_json::to_value(row)?)?;
    }

    println!("config {}", report.base_config_hash);
    println!(
        "{:<20} {:>8} {:>8} {:>9} {:>9}  reference (train/test pp)",
        "variant", "train", "test", "d train", "d test"
    );
    let pp = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:+.2}"));
    for row in &report.rows {
        if let Some(e) = &row.error {
            println!("{:<20} failed: {e}", row.name);
            continue;
        }
        let reference = row
            .reference_delta
            .map_or(String::new(), |(tr, te)| format!("{tr:+.2}/{te:+.2}"));
        println!(
            "{:<20} {:>8.4} {:>8.4} {:>9} {:>9}  {reference}",
            row.name,
            row.train_accuracy,
            row.test_accuracy,
            pp(row.delta_train),
            pp(row.delta_test)
        );
    }
    Ok(EXIT_OK)
}
