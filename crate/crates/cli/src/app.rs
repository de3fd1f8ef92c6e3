//! Subcommands and the process entry point.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use bertcaps_core::capshead::predict;
use bertcaps_core::datapipe::{kfold_plan, normalize, split, CorpusRecord, FoldPlan};
use bertcaps_core::encoder::HiddenStates;
use bertcaps_core::evalkit::{assemble, evaluate_records, run_fold, score, FoldOutcome, HiddenMap};
use bertcaps_core::trainer::{train, EncoderMode, TrainConfig, TrainHistory};
use bertcaps_core::{Model, Polarity};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checkpoint::{Checkpoint, Provenance};
use crate::corpus_io::{corpus_csv, load_corpus, read_texts};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradcheckOptions};
use crate::hdump::{read_hdump, write_hdump};
use crate::numfmt::{g17, to_json};
use crate::outdir::OutputDir;
use crate::report::{self, DatasetSummary, SeriesFile};
use crate::settings::{Overrides, Settings};

#[derive(Debug, Parser)]
#[command(name = "bertcaps", version, about = "Multi-task capsule classifier for sentiment and product domain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw corpus and summarize it.
    Preprocess(PreprocessArgs),
    /// Train a model on the training share of a stratified split.
    Train(TrainArgs),
    /// Score a checkpoint and write the report.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation with per-fold series and t-tests.
    Kfold(KfoldArgs),
    /// Per-record predictions and capsule activations.
    Predict(PredictArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckOptions),
    /// Write encoder hidden states for a corpus.
    DumpH(DumpArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created atomically.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub settings: Overrides,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    /// Precomputed hidden states; trains the head alone on them.
    #[arg(long, value_name = "HDUMP")]
    pub hidden: Option<PathBuf>,
    /// Train on every record instead of the training share of the split.
    #[arg(long)]
    pub no_split: bool,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub settings: Overrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// The corpus the checkpoint was trained on; its held-out share is rebuilt from the checkpoint.
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[arg(long, value_name = "HDUMP")]
    pub hidden: Option<PathBuf>,
    /// Score every record as test data, ignoring the training split.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct KfoldArgs {
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[arg(long, value_name = "HDUMP")]
    pub hidden: Option<PathBuf>,
    /// Name of this run in series.json and the t-test tables.
    #[arg(long, default_value = "bertcaps")]
    pub label: String,
    /// Another approach's per-fold series, as NAME=series.json (repeatable).
    #[arg(long, value_name = "NAME=PATH")]
    pub compare: Vec<String>,
    /// Leave the majority-class baseline out of the comparison.
    #[arg(long)]
    pub no_baseline: bool,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub settings: Overrides,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// CSV with `id` and `text` columns.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Predict from these hidden states instead of running the encoder.
    #[arg(long, value_name = "HDUMP")]
    pub hidden: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// CSV with `id` and `text` columns.
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Errors go to stderr as one JSON line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", Error::usage(first).to_json_line());
            return 1;
        }
    };
    let meta = RunMeta::start(&argv);
    match dispatch(cli.command, meta) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.kind.exit_code()
        }
    }
}

fn dispatch(command: Command, meta: RunMeta) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a, meta),
        Command::Train(a) => train_cmd(a, meta),
        Command::Evaluate(a) => evaluate(a, meta),
        Command::Kfold(a) => kfold(a, meta),
        Command::Predict(a) => predict_cmd(a, meta),
        Command::Gradcheck(o) => gradcheck_cmd(&o),
        Command::DumpH(a) => dump_h(a, meta),
    }
}

/// Timestamps and argv, kept out of the primary outputs.
struct RunMeta {
    argv: Vec<String>,
    started_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunMeta {
    fn start(argv: &[OsString]) -> Self {
        RunMeta { argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(), started_unix_ms: now_ms() }
    }

    /// Writes `config.json` and `run_meta.json`, then moves the directory into place.
    fn finish(self, out: OutputDir, config: &Value) -> Result<PathBuf> {
        write_json(&out, "config.json", config)?;
        let meta = json!({
            "argv": self.argv,
            "started_unix_ms": self.started_unix_ms as u64,
            "finished_unix_ms": now_ms() as u64,
            "version": env!("CARGO_PKG_VERSION"),
        });
        write_json(&out, "run_meta.json", &meta)?;
        out.commit()
    }
}

fn write_json<T: Serialize + ?Sized>(out: &OutputDir, name: &str, value: &T) -> Result<()> {
    let bytes = to_json(value).map_err(|e| Error::numeric(format!("cannot serialize {name}: {e}")))?;
    out.write(name, &bytes)
}

fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn config_value(command: &str, inputs: Value, settings: Option<&Settings>) -> Value {
    let mut v = json!({ "command": command, "inputs": inputs });
    if let Some(s) = settings {
        v["settings"] = serde_json::to_value(s).unwrap_or(Value::Null);
    }
    v
}

/// Records of an H-dump file in file order; ids must be unique.
pub fn load_hidden_entries(path: &Path) -> Result<Vec<(String, HiddenStates)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let entries = read_hdump(BufReader::new(file)).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    if let Some((id, _)) = entries.iter().find(|(id, _)| !seen.insert(id.as_str())) {
        return Err(Error::data(format!("{}: duplicate record id {id:?}", path.display())));
    }
    Ok(entries)
}

pub fn load_hidden(path: &Path) -> Result<HiddenMap> {
    Ok(load_hidden_entries(path)?.into_iter().collect())
}

fn load_hidden_opt(path: Option<&Path>) -> Result<Option<HiddenMap>> {
    path.map(load_hidden).transpose()
}

fn mode(hidden: Option<&HiddenMap>) -> EncoderMode<'_> {
    match hidden {
        Some(m) => EncoderMode::Precomputed(m),
        None => EncoderMode::Toy,
    }
}

fn preprocess(a: PreprocessArgs, meta: RunMeta) -> Result<()> {
    let s = a.settings.resolve()?;
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let c = load_corpus(&a.data, s.domains.as_deref())?;
    out.write("corpus.csv", &corpus_csv(&c.records, &c.domains)?)?;
    write_json(&out, "summary.json", &DatasetSummary::new(&c.summary, &c.domains))?;
    let config = config_value("preprocess", json!({ "data": path_str(&a.data) }), Some(&s));
    let dir = meta.finish(out, &config)?;
    println!("kept {} of {} rows -> {}", c.summary.kept, c.summary.rows, dir.display());
    Ok(())
}

fn history_csv(h: &TrainHistory) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("cannot write history: {e}"));
    w.write_record(["epoch", "loss", "train_acc_sent", "train_acc_dom", "val_acc_sent", "val_acc_dom"]).map_err(err)?;
    let opt = |x: Option<f64>| x.map(g17).unwrap_or_default();
    for e in &h.epochs {
        w.write_record([
            e.epoch.to_string(),
            g17(e.loss),
            g17(e.train_acc_sentiment),
            g17(e.train_acc_domain),
            opt(e.val_acc_sentiment),
            opt(e.val_acc_domain),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::data(format!("cannot write history: {e}")))
}

fn pick(records: &[CorpusRecord], idx: &[usize]) -> Vec<CorpusRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

fn train_cmd(a: TrainArgs, meta: RunMeta) -> Result<()> {
    let s = a.settings.resolve()?;
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let c = load_corpus(&a.data, s.domains.as_deref())?;
    let hidden = load_hidden_opt(a.hidden.as_deref())?;

    let (train_recs, split_ratio) = if a.no_split {
        (c.records.clone(), None)
    } else {
        let sp = split(&c.records, s.split_ratio, s.train.seed)?;
        sp.warnings.iter().for_each(|w| warn(w));
        let mut set = vec!["test"; c.records.len()];
        sp.train.iter().for_each(|&i| set[i] = "train");
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::data(format!("cannot write split: {e}"));
        w.write_record(["id", "set"]).map_err(err)?;
        for (r, set) in c.records.iter().zip(&set) {
            w.write_record([r.id.as_str(), set]).map_err(err)?;
        }
        out.write("split.csv", &w.into_inner().map_err(|e| Error::data(format!("cannot write split: {e}")))?)?;
        (pick(&c.records, &sp.train), Some(s.split_ratio))
    };

    let trained = train(&train_recs, &c.domains, mode(hidden.as_ref()), &s.train)?;
    let ck = Checkpoint::new(trained.model, Some(Provenance { train: s.train, split_ratio }));
    out.write("checkpoint.json", &ck.to_bytes()?)?;
    out.write("history.csv", &history_csv(&trained.history)?)?;
    let inputs = json!({
        "data": path_str(&a.data),
        "hidden": a.hidden.as_deref().map(path_str),
        "split": !a.no_split,
    });
    let dir = meta.finish(out, &config_value("train", inputs, Some(&s)))?;
    if let Some(last) = trained.history.epochs.last() {
        println!(
            "trained {} epochs on {} records{}: loss {:.4}, train accuracy {:.4} / {:.4} -> {}",
            trained.history.epochs.len(),
            train_recs.len(),
            if trained.history.stopped_early { " (stopped early)" } else { "" },
            last.loss,
            last.train_acc_sentiment,
            last.train_acc_domain,
            dir.display()
        );
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, meta: RunMeta) -> Result<()> {
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let domains = ck.model.config.domains.clone();
    let c = load_corpus(&a.data, Some(&domains))?;
    let hidden = load_hidden_opt(a.hidden.as_deref())?;
    let h = hidden.as_ref();

    let held_out = ck.provenance.as_ref().and_then(|p| p.split_ratio.map(|r| (r, p.train.seed)));
    let (train_eval, test_eval) = match held_out {
        Some((ratio, seed)) if !a.all => {
            let sp = split(&c.records, ratio, seed)?;
            let tr = evaluate_records(&ck.model, &pick(&c.records, &sp.train), h)?;
            let te = evaluate_records(&ck.model, &pick(&c.records, &sp.test), h)?;
            (Some(tr), te)
        }
        _ => (None, evaluate_records(&ck.model, &c.records, h)?),
    };
    let inputs = json!({
        "checkpoint": path_str(&a.checkpoint),
        "data": path_str(&a.data),
        "hidden": a.hidden.as_deref().map(path_str),
        "all": a.all,
        "provenance": ck.provenance,
    });
    let config = config_value("evaluate", inputs, None);
    let summary = DatasetSummary::new(&c.summary, &c.domains);
    let rep = report::single_run(config.clone(), summary, &domains, train_eval.as_ref(), &test_eval);
    report::write_report(&out, &rep)?;
    let dir = meta.finish(out, &config)?;
    println!(
        "test accuracy: polarity {:.4}, domain {:.4} -> {}",
        test_eval.polarity.accuracy,
        test_eval.domain.accuracy,
        dir.display()
    );
    Ok(())
}

/// Runs every fold of `plan`, spreading folds over `threads` workers.
/// Results do not depend on the thread count.
pub fn run_folds(
    records: &[CorpusRecord],
    domains: &[String],
    plan: &FoldPlan,
    mode: EncoderMode<'_>,
    config: &TrainConfig,
    threads: usize,
) -> Result<Vec<FoldOutcome>> {
    let k = plan.k;
    if threads <= 1 {
        return (0..k).map(|f| Ok(run_fold(records, domains, plan, f, mode, config)?)).collect();
    }
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(k));
    std::thread::scope(|scope| {
        for _ in 0..threads.min(k) {
            scope.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::Relaxed);
                if f >= k {
                    break;
                }
                let r = run_fold(records, domains, plan, f, mode, config);
                done.lock().unwrap_or_else(|p| p.into_inner()).push((f, r));
            });
        }
    });
    let mut done = done.into_inner().unwrap_or_else(|p| p.into_inner());
    done.sort_by_key(|(f, _)| *f);
    done.into_iter().map(|(_, r)| Ok(r?)).collect()
}

/// Per-fold accuracies of predicting the training folds' most frequent
/// polarity and domain for every test record.
pub fn majority_baseline(records: &[CorpusRecord], domains: usize, plan: &FoldPlan) -> SeriesFile {
    let mut polarity = Vec::with_capacity(plan.k);
    let mut domain = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let mut pol = [0usize; 2];
        let mut dom = vec![0usize; domains];
        for i in plan.complement(f) {
            if let Some(p) = records[i].polarity {
                pol[p.index()] += 1;
            }
            dom[records[i].domain] += 1;
        }
        let top_pol = Polarity::ALL[usize::from(pol[1] > pol[0])];
        let top_dom = (0..domains).fold(0, |best, d| if dom[d] > dom[best] { d } else { best });
        let test = plan.fold(f);
        let n = test.len().max(1) as f64;
        polarity.push(test.iter().filter(|&&i| records[i].polarity == Some(top_pol)).count() as f64 / n);
        domain.push(test.iter().filter(|&&i| records[i].domain == top_dom).count() as f64 / n);
    }
    SeriesFile { label: "majority".into(), polarity, domain }
}

fn load_series(spec: &str, k: usize) -> Result<SeriesFile> {
    let (name, path) =
        spec.split_once('=').ok_or_else(|| Error::usage(format!("--compare expects NAME=PATH, got {spec:?}")))?;
    let path = Path::new(path);
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut s: SeriesFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if s.polarity.len() != k || s.domain.len() != k {
        return Err(Error::data(format!("{}: series has {} folds, this run has {k}", path.display(), s.polarity.len())));
    }
    if s.polarity.iter().chain(&s.domain).any(|x| !x.is_finite()) {
        return Err(Error::data(format!("{}: series values must be finite", path.display())));
    }
    s.label = name.to_string();
    Ok(s)
}

fn kfold(a: KfoldArgs, meta: RunMeta) -> Result<()> {
    let s = a.settings.resolve()?;
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let c = load_corpus(&a.data, s.domains.as_deref())?;
    let hidden = load_hidden_opt(a.hidden.as_deref())?;
    let compare = a.compare.iter().map(|spec| load_series(spec, s.k)).collect::<Result<Vec<_>>>()?;

    let plan = kfold_plan(&c.records, s.k, s.train.seed)?;
    let folds = run_folds(&c.records, &c.domains, &plan, mode(hidden.as_ref()), &s.train, s.threads)?;
    let result = assemble(plan, folds);
    let pooled = score(&c.records, result.pooled_predictions(), c.domains.len())?;

    let ours =
        SeriesFile { label: a.label.clone(), polarity: result.polarity.accuracies(), domain: result.domain.accuracies() };
    let mut series = vec![ours.clone()];
    if !a.no_baseline {
        series.push(majority_baseline(&c.records, c.domains.len(), &result.plan));
    }
    series.extend(compare);
    let mut seen = BTreeSet::new();
    if let Some(dup) = series.iter().find(|x| !seen.insert(x.label.clone())) {
        return Err(Error::usage(format!("duplicate series label {:?}", dup.label)));
    }

    let inputs = json!({
        "data": path_str(&a.data),
        "hidden": a.hidden.as_deref().map(path_str),
        "label": a.label,
        "compare": a.compare,
        "baseline": !a.no_baseline,
    });
    let config = config_value("kfold", inputs, Some(&s));
    let summary = DatasetSummary::new(&c.summary, &c.domains);
    let rep = report::kfold(config.clone(), summary, &c.domains, &result, &pooled, &series)?;
    report::write_report(&out, &rep)?;
    write_json(&out, "series.json", &ours)?;
    let dir = meta.finish(out, &config)?;
    for f in &result.folds {
        println!(
            "fold {}: polarity {:.4}, domain {:.4} ({} epochs)",
            f.fold,
            f.test.polarity.accuracy,
            f.test.domain.accuracy,
            f.history.epochs.len()
        );
    }
    println!(
        "mean: polarity {:.4} (std {:.4}), domain {:.4} (std {:.4}) -> {}",
        result.polarity.mean.accuracy,
        result.polarity.std.accuracy,
        result.domain.mean.accuracy,
        result.domain.std.accuracy,
        dir.display()
    );
    Ok(())
}

fn predictions_csv(model: &Model, rows: &[(String, HiddenStates)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("cannot write predictions: {e}"));
    let mut header: Vec<String> =
        ["id", "polarity", "domain", "p_positive", "p_negative"].iter().map(|s| s.to_string()).collect();
    header.extend(model.config.domains.iter().map(|d| format!("p_domain_{d}")));
    w.write_record(&header).map_err(err)?;
    for (id, h) in rows {
        let fwd = model.forward(h).map_err(|e| Error::from(e).context(format!("record {id}")))?;
        let p = predict(&fwd);
        let mut row = vec![id.clone(), p.polarity.as_str().to_string(), model.config.domains[p.domain].clone()];
        row.extend(fwd.p_sentiment().into_iter().chain(fwd.p_domain()).map(g17));
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::data(format!("cannot write predictions: {e}")))
}

/// Normalized texts of a corpus file run through the checkpointed encoder.
/// Records whose text normalizes to nothing are skipped with a warning.
fn encode_texts(model: &Model, path: &Path) -> Result<Vec<(String, HiddenStates)>> {
    if model.text_encoder.is_none() {
        return Err(Error::usage("checkpoint has no text encoder; pass --hidden"));
    }
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (line, id, text) in read_texts(path)? {
        if !ids.insert(id.clone()) {
            return Err(Error::data(format!("{}: row {line}: duplicate id {id:?}", path.display())));
        }
        match normalize(&text) {
            Some(clean) => {
                let h = model.hidden_states(&model.tokenize(&clean)?)?;
                out.push((id, h));
            }
            None => warn(&format!("{}: row {line}: record {id:?} is empty after normalization", path.display())),
        }
    }
    Ok(out)
}

fn predict_cmd(a: PredictArgs, meta: RunMeta) -> Result<()> {
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let rows = match (&a.hidden, &a.data) {
        (Some(hp), None) => load_hidden_entries(hp)?,
        (Some(hp), Some(dp)) => {
            let map = load_hidden(hp)?;
            let mut rows = Vec::new();
            for (line, id, text) in read_texts(dp)? {
                match (map.get(&id), normalize(&text)) {
                    (Some(h), _) => rows.push((id, h.clone())),
                    (None, None) => {
                        warn(&format!("{}: row {line}: record {id:?} is empty after normalization", dp.display()))
                    }
                    (None, Some(_)) => {
                        return Err(Error::data(format!("{}: row {line}: no hidden states for {id:?}", dp.display())))
                    }
                }
            }
            rows
        }
        (None, Some(dp)) => encode_texts(&ck.model, dp)?,
        (None, None) => return Err(Error::usage("predict needs --data, --hidden or both")),
    };
    out.write("predictions.csv", &predictions_csv(&ck.model, &rows)?)?;
    let inputs = json!({
        "checkpoint": path_str(&a.checkpoint),
        "data": a.data.as_deref().map(path_str),
        "hidden": a.hidden.as_deref().map(path_str),
    });
    let dir = meta.finish(out, &config_value("predict", inputs, None))?;
    println!("{} predictions -> {}", rows.len(), dir.display());
    Ok(())
}

fn dump_h(a: DumpArgs, meta: RunMeta) -> Result<()> {
    let out = OutputDir::create(&a.out.out, a.out.force)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let rows = encode_texts(&ck.model, &a.data)?;
    let mut bytes = Vec::new();
    write_hdump(&mut bytes, &rows).map_err(|e| Error::data(format!("cannot write hidden states: {e}")))?;
    out.write("hidden.hdump", &bytes)?;
    let inputs = json!({ "checkpoint": path_str(&a.checkpoint), "data": path_str(&a.data) });
    let dir = meta.finish(out, &config_value("dump-h", inputs, None))?;
    println!("{} records -> {}", rows.len(), dir.display());
    Ok(())
}

fn gradcheck_cmd(o: &GradcheckOptions) -> Result<()> {
    let outcome = gradcheck::run(o)?;
    let mut stdout = std::io::stdout().lock();
    for t in &outcome.tensors {
        let _ = writeln!(
            stdout,
            "{:<32} checked {:>5} kinks {:>3} max_rel_error {}",
            t.name,
            t.checked,
            t.kinks,
            g17(t.report.max_rel_error)
        );
    }
    let _ = writeln!(stdout, "max_rel_error {}", g17(outcome.max_rel_error));
    if outcome.passed() {
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "max relative error {} is not below {}",
            g17(outcome.max_rel_error),
            gradcheck::TOLERANCE
        )))
    }
}
