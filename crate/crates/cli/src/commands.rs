use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;

use base64::Engine;
use hmcd::classifier::{check_network, train, ClassifierError, HmcdArchitecture, TrainConfig, TrainedModel};
use hmcd::eval::{
    emit_report, metrics, preset, run_experiment, ClassCounts, EvalError, ExperimentConfig,
    FieldGanProvider, HmcdFactory,
};
use hmcd::features::{featurize_flow, sample_to_record, FeatureError, Featurized, Sample};
use hmcd::gaf::{build_dictionary, templates_from, GafConfig, GafError, GafGenerator, GAF_SOURCE};
use hmcd::http::{
    assemble_flows, load_corpus, parse_http_message_with, save_corpus, Corpus, CorpusError, Direction,
    FlowKey, Label,
};
use hmcd::nn::gradcheck::{check_all_layers, GradCheckReport, DEFAULT_TOLERANCE};
use log::{info, warn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use crate::{CliError, Command, Settings, EXIT_INTERNAL, EXIT_OK};

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidConfig(m) => CliError::Usage(m),
            ClassifierError::Nn(e) => CliError::Internal(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<GafError> for CliError {
    fn from(e: GafError) -> Self {
        match e {
            GafError::InvalidConfig(m) => CliError::Usage(m),
            e @ (GafError::ValidationFailed { .. } | GafError::Diverged { .. } | GafError::Nn(_)) => {
                CliError::Internal(e.to_string())
            }
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(_) | EvalError::Gaf(_) => CliError::Internal(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn need_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

fn need_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such directory", path.display())))
    }
}

/// The output's parent directory must exist before any work starts.
fn need_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(CliError::Usage(format!("{}: no such directory", p.display())))
        }
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

pub(crate) fn dispatch(command: &Command, s: &Settings) -> Result<i32, CliError> {
    match command {
        Command::Ingest {
            input,
            output,
            source,
            label,
        } => ingest(input, output, source, label.as_deref(), s),
        Command::Featurize { corpus, output } => featurize(corpus, output),
        Command::BuildDict { corpus, output } => build_dict(corpus, output, s),
        Command::GenGaf {
            corpus,
            count,
            output,
            generator,
            save_generator,
        } => gen_gaf(corpus, *count, output, generator.as_deref(), save_generator.as_deref(), s),
        Command::Train {
            corpus,
            gaf_corpus,
            output,
            report,
        } => train_model(corpus, gaf_corpus.as_deref(), output, report.as_deref(), s),
        Command::Predict {
            model,
            corpus,
            output,
        } => predict(model, corpus, output.as_deref()),
        Command::Evaluate {
            preset,
            corpus,
            test_corpus,
            output,
            train_malicious,
            train_benign,
            test_malicious,
            test_benign,
        } => {
            let counts = [*train_malicious, *train_benign, *test_malicious, *test_benign];
            evaluate(preset, corpus, test_corpus.as_deref(), output, counts, s)
        }
        Command::Gradcheck => gradcheck(s),
    }
}

/// One captured message. Responses carry the server-to-client quintuple.
#[derive(Deserialize)]
struct MessageDump {
    src_ip: IpAddr,
    src_port: u16,
    dst_ip: IpAddr,
    dst_port: u16,
    direction: Direction,
    ts_micros: i64,
    raw_b64: String,
    #[serde(default)]
    label: Option<Label>,
}

fn ingest(input: &Path, output: &Path, source: &str, label: Option<&str>, s: &Settings) -> Result<i32, CliError> {
    need_file(input)?;
    need_parent(output)?;
    let forced: Option<Label> = label.map(|l| l.parse().map_err(CliError::Usage)).transpose()?;
    let reader = BufReader::new(File::open(input).map_err(io_error(input))?);
    let mut messages = Vec::new();
    let mut labels: HashMap<(FlowKey, i64), BTreeSet<Label>> = HashMap::new();
    let mut skipped = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_error(input))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MessageDump = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", input.display(), i + 1)))?;
        let raw = base64::engine::general_purpose::STANDARD
            .decode(rec.raw_b64.as_bytes())
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", input.display(), i + 1)))?;
        let (msg, warnings) = match parse_http_message_with(&raw, rec.direction, rec.ts_micros, s.parse_mode) {
            Ok(parsed) => parsed,
            Err(e) => {
                warn!("line {}: skipped: {e}", i + 1);
                skipped += 1;
                continue;
            }
        };
        for w in warnings {
            warn!("line {}: {w:?}", i + 1);
        }
        let key = FlowKey::new(rec.src_ip, rec.src_port, rec.dst_ip, rec.dst_port);
        let client = match rec.direction {
            Direction::Request => key,
            Direction::Response => key.reversed(),
        };
        if let Some(l) = rec.label.filter(|l| *l != Label::Unlabeled) {
            labels.entry((client, rec.ts_micros)).or_default().insert(l);
        }
        messages.push((key, msg));
    }
    let mut flows = assemble_flows(messages, s.idle_gap_s);
    for f in &mut flows {
        f.label = match forced {
            Some(l) => l,
            None => {
                let seen: BTreeSet<Label> = f
                    .messages
                    .iter()
                    .filter_map(|m| labels.get(&(f.key, m.ts_micros)))
                    .flatten()
                    .copied()
                    .collect();
                match seen.len() {
                    0 => Label::Unlabeled,
                    1 => *seen.iter().next().expect("one label"),
                    _ => {
                        warn!("flow {}: conflicting labels, left unlabeled", f.flow_id);
                        Label::Unlabeled
                    }
                }
            }
        };
    }
    let corpus = Corpus::new(source, flows);
    save_corpus(&corpus, output)?;
    info!(
        "{} flows ({} malicious, {} benign, {} unlabeled), {skipped} messages skipped",
        corpus.flows.len(),
        corpus.manifest.counts.malicious,
        corpus.manifest.counts.benign,
        corpus.manifest.counts.unlabeled
    );
    Ok(EXIT_OK)
}

fn load(path: &Path) -> Result<Corpus, CliError> {
    need_file(path)?;
    Ok(load_corpus(path)?)
}

/// Labeled samples of a corpus; discarded and unlabeled flows are logged
/// and left out.
fn labeled_samples(corpus: &Corpus) -> Vec<Sample> {
    let mut out = Vec::new();
    for f in &corpus.flows {
        if f.label == Label::Unlabeled {
            continue;
        }
        match featurize_flow(f) {
            Featurized::Sample(s) => out.push(s),
            Featurized::Discard(r) => warn!("flow {}: discarded ({r:?})", f.flow_id),
        }
    }
    out
}

fn featurize(corpus: &Path, output: &Path) -> Result<i32, CliError> {
    need_parent(output)?;
    let corpus = load(corpus)?;
    let mut out = create(output)?;
    let (mut kept, mut dropped) = (0, 0);
    for f in &corpus.flows {
        match featurize_flow(f) {
            Featurized::Sample(sample) => {
                writeln!(out, "{}", sample_to_record(&sample)).map_err(io_error(output))?;
                kept += 1;
            }
            Featurized::Discard(r) => {
                warn!("flow {}: discarded ({r:?})", f.flow_id);
                dropped += 1;
            }
        }
    }
    out.flush().map_err(io_error(output))?;
    info!("{kept} samples written, {dropped} flows discarded");
    Ok(EXIT_OK)
}

fn split(corpus: &Corpus) -> (Vec<hmcd::http::Flow>, Vec<hmcd::http::Flow>) {
    (
        corpus.of_label(Label::Malicious).cloned().collect(),
        corpus.of_label(Label::Benign).cloned().collect(),
    )
}

fn build_dict(corpus: &Path, output: &Path, s: &Settings) -> Result<i32, CliError> {
    need_parent(output)?;
    let corpus = load(corpus)?;
    let (mal, ben) = split(&corpus);
    let dict = build_dictionary(&mal, &ben, s.p_threshold)?;
    dict.save(output)?;
    for (field, vocab) in dict.fields() {
        info!("{field}: {} words", vocab.len());
    }
    Ok(EXIT_OK)
}

fn gaf_config(s: &Settings) -> GafConfig {
    let mut c = GafConfig::default();
    c.gan.seq_len = s.seq_len;
    c.gan.lambda = s.lambda;
    c.gan.iterations = s.gan_iterations;
    c
}

fn gen_gaf(
    corpus: &Path,
    count: usize,
    output: &Path,
    generator: Option<&Path>,
    save_to: Option<&Path>,
    s: &Settings,
) -> Result<i32, CliError> {
    need_parent(output)?;
    if let Some(dir) = generator {
        need_dir(dir)?;
    }
    let corpus = load(corpus)?;
    let (mal, ben) = split(&corpus);
    let templates = templates_from(&ben);
    let gen = match generator {
        Some(dir) => GafGenerator::load(dir)?,
        None => {
            let dict = build_dictionary(&mal, &ben, s.p_threshold)?;
            GafGenerator::train(dict, &templates, &ben, gaf_config(s), s.seed)?
        }
    };
    if let Some(dir) = save_to {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        gen.save(dir)?;
    }
    let flows = gen.generate(count, &templates, s.seed)?;
    save_corpus(&Corpus::new(GAF_SOURCE, flows), output)?;
    info!("{count} flows written to {}", output.display());
    Ok(EXIT_OK)
}

/// Resolved config, seed, corpus manifests and code version.
fn provenance(s: &Settings, corpora: &[(&str, &Path, &Corpus)], extra: serde_json::Value) -> serde_json::Value {
    let manifests: BTreeMap<&str, serde_json::Value> = corpora
        .iter()
        .map(|(role, path, c)| {
            (
                *role,
                json!({"path": path.display().to_string(), "manifest": c.manifest}),
            )
        })
        .collect();
    json!({
        "config": s.to_map(),
        "seed": s.seed,
        "corpora": manifests,
        "version": env!("CARGO_PKG_VERSION"),
        "run": extra,
    })
}

fn train_config(s: &Settings) -> TrainConfig {
    TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch,
        learning_rate: s.lr,
        folds: s.folds,
        repeats: s.repeats,
        seed: s.seed,
        gaf_count: s.gaf_count,
    }
}

fn train_model(
    corpus_path: &Path,
    gaf_path: Option<&Path>,
    output: &Path,
    report: Option<&Path>,
    s: &Settings,
) -> Result<i32, CliError> {
    need_parent(output)?;
    if let Some(r) = report {
        need_parent(r)?;
    }
    let corpus = load(corpus_path)?;
    let gaf_corpus = gaf_path.map(load).transpose()?;
    let samples = labeled_samples(&corpus);
    let gafs = gaf_corpus.as_ref().map(labeled_samples).unwrap_or_default();
    let config = train_config(s);
    let arch = HmcdArchitecture::default();
    let outcome = train(&arch, &samples, &gafs, &config)?;
    let runs: Vec<(u64, _)> = outcome
        .folds
        .iter()
        .map(|f| (config.seed.wrapping_add(f.fold as u64 + 1), f.counts))
        .collect();
    let cv = metrics("train-cv", &runs)?;
    if let Some(f1) = &cv.f1 {
        info!("cross-validation F1 {:.4} (+{:.4} -{:.4})", f1.mean, f1.plus, f1.minus);
    }
    outcome.model.save(output)?;
    if let Some(r) = report {
        let mut corpora = vec![("train", corpus_path, &corpus)];
        if let (Some(p), Some(c)) = (gaf_path, gaf_corpus.as_ref()) {
            corpora.push(("gaf", p, c));
        }
        let extra = json!({"architecture": arch.to_string(), "samples": samples.len(), "gaf_samples": gafs.len()});
        emit_report(&cv, provenance(s, &corpora, extra), r)?;
    }
    Ok(EXIT_OK)
}

fn predict(model: &Path, corpus: &Path, output: Option<&Path>) -> Result<i32, CliError> {
    need_file(model)?;
    if let Some(o) = output {
        need_parent(o)?;
    }
    let model = TrainedModel::load(model)?;
    let corpus = load(corpus)?;
    let predictions = model.predict(&corpus.flows)?;
    for d in &predictions.discarded {
        warn!("flow {}: discarded ({:?})", d.flow_id, d.reason);
    }
    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for scored in &predictions.scored {
        let line = serde_json::to_string(scored).expect("prediction serializes");
        writeln!(out, "{line}").map_err(|e| CliError::Data(format!("output: {e}")))?;
    }
    out.flush().map_err(|e| CliError::Data(format!("output: {e}")))?;
    Ok(EXIT_OK)
}

fn evaluate(
    name: &str,
    corpus_path: &Path,
    test_path: Option<&Path>,
    output: &Path,
    counts: [Option<usize>; 4],
    s: &Settings,
) -> Result<i32, CliError> {
    need_parent(output)?;
    let mut config = if name == "custom" {
        let [Some(tm), Some(tb), Some(em), Some(eb)] = counts else {
            return Err(CliError::Usage(
                "custom preset needs --train-malicious, --train-benign, --test-malicious and --test-benign".into(),
            ));
        };
        ExperimentConfig {
            id: "custom".into(),
            train: ClassCounts { malicious: tm, benign: tb },
            test: ClassCounts { malicious: em, benign: eb },
            gaf_count: 0,
            repeats: 5,
            seed: 0,
            resample: true,
        }
    } else {
        let mut c = preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}")))?;
        if !name.starts_with("ep1") && test_path.is_none() {
            return Err(CliError::Usage(format!("preset {name} needs --test-corpus")));
        }
        let [tm, tb, em, eb] = counts;
        c.train.malicious = tm.unwrap_or(c.train.malicious);
        c.train.benign = tb.unwrap_or(c.train.benign);
        c.test.malicious = em.unwrap_or(c.test.malicious);
        c.test.benign = eb.unwrap_or(c.test.benign);
        c
    };
    config.seed = s.seed;
    if s.is_explicit("repeats") {
        config.repeats = s.repeats;
    }
    if s.is_explicit("gaf_count") {
        config.gaf_count = s.gaf_count;
    }
    let corpus = load(corpus_path)?;
    let test_corpus = test_path.map(load).transpose()?;
    let factory = HmcdFactory {
        arch: HmcdArchitecture::default(),
        config: train_config(s),
    };
    let provider = FieldGanProvider {
        threshold: s.p_threshold,
        config: gaf_config(s),
    };
    let (report, records) = run_experiment(
        &config,
        &corpus.flows,
        test_corpus.as_ref().map(|c| c.flows.as_slice()),
        &factory,
        Some(&provider),
    )?;
    let mut corpora = vec![("train", corpus_path, &corpus)];
    if let (Some(p), Some(c)) = (test_path, test_corpus.as_ref()) {
        corpora.push(("test", p, c));
    }
    let runs: Vec<_> = records
        .iter()
        .map(|r| json!({"seed": r.seed, "train": r.train_ids.len(), "test": r.test_ids.len(), "gaf_samples": r.gaf_samples}))
        .collect();
    let extra = json!({"experiment": config_json(&config), "runs": runs});
    let table = emit_report(&report, provenance(s, &corpora, extra), output)?;
    if let Some(f1) = &report.f1 {
        info!("{}: macro F1 {:.4} (+{:.4} -{:.4})", config.id, f1.mean, f1.plus, f1.minus);
    }
    info!("per-run table in {}", table.display());
    Ok(EXIT_OK)
}

fn config_json(c: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(c).expect("experiment config serializes")
}

fn print_report(r: &GradCheckReport, out: &mut impl Write) -> io::Result<()> {
    for b in &r.blocks {
        writeln!(out, "{}\t{}\t{:.3e}", r.fragment, b.name, b.max_rel_error)?;
    }
    writeln!(out, "{}\tmax\t{:.3e}", r.fragment, r.max_error())
}

fn gradcheck(s: &Settings) -> Result<i32, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut reports = check_all_layers(&mut rng).map_err(|e| CliError::Internal(e.to_string()))?;
    reports.push(check_network(&HmcdArchitecture::tiny(), s.seed)?);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut worst: f64 = 0.0;
    for r in &reports {
        print_report(r, &mut out).map_err(|e| CliError::Internal(e.to_string()))?;
        worst = worst.max(r.max_error());
    }
    let passed = worst <= DEFAULT_TOLERANCE;
    writeln!(
        out,
        "overall\tmax\t{worst:.3e}\t{}",
        if passed { "PASS" } else { "FAIL" }
    )
    .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(if passed { EXIT_OK } else { EXIT_INTERNAL })
}
