use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, ValueEnum};
use doclayout::dataset::{read_layouts, write_layout, CorpusStats, FeatureWriter, IngestConfig, Ingestor};
use doclayout::generator::{NGramModel, Prompt, Sampling, TrainConfig, DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_ORDER};
use doclayout::metrics::{evaluate, evaluate_reference, MetricSelection};
use doclayout::render::{render_sheet, render_svg, RenderStyle};
use doclayout::serialization::Vocabulary;
use doclayout::synth::{synth_layout, SynthConfig};
use doclayout::tasks::{parse_weights, TaskBuilder, TaskInstance, TaskKind, TaskMixture, TaskRecord, DEFAULT_SIGMA, DEFAULT_WEIGHTS};
use doclayout::{Error, LabelMap, Layout, Taxonomy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::manifest::RunRecord;
use crate::{usage, Command, GlobalArgs};

pub struct Dispatched {
    pub record: RunRecord,
    /// Path the manifest is named after.
    pub outputs_root: PathBuf,
}

/// Runs one command. A data failure found after outputs were written comes
/// back as the second value, so the manifest is still written.
pub fn dispatch(global: &GlobalArgs, command: &Command) -> Result<(Dispatched, Option<anyhow::Error>)> {
    match command {
        Command::Ingest(a) => ingest(global, a),
        Command::Stats(a) => stats(global, a).map(|d| (d, None)),
        Command::BuildTasks(a) => build_tasks(global, a).map(|d| (d, None)),
        Command::Train(a) => train(global, a).map(|d| (d, None)),
        Command::Generate(a) => generate(global, a).map(|d| (d, None)),
        Command::Refine(a) => refine(global, a).map(|d| (d, None)),
        Command::Evaluate(a) => evaluate_cmd(global, a),
        Command::Render(a) => render(global, a).map(|d| (d, None)),
        Command::Synth(a) => synth(global, a).map(|d| (d, None)),
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    }
}

impl GlobalArgs {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn input(&self, path: &Path) -> Result<PathBuf> {
        let p = self.resolve(path);
        if !p.exists() {
            return Err(usage(format!("input not found: {}", p.display())));
        }
        Ok(p)
    }

    fn output(&self, path: &Path) -> Result<PathBuf> {
        let p = self.resolve(path);
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    /// Taxonomy of clean layouts, plus the label map when records carry fine labels.
    fn taxonomy(&self) -> Result<(Taxonomy, Option<LabelMap>)> {
        match (&self.taxonomy, &self.label_map) {
            (Some(_), Some(_)) => Err(usage("--taxonomy and --label-map are mutually exclusive")),
            (Some(t), None) => {
                let text = std::fs::read_to_string(self.input(t)?)?;
                Ok((Taxonomy::from_json(&text)?, None))
            }
            (None, Some(m)) => {
                let map = LabelMap::from_json(&std::fs::read_to_string(self.input(m)?)?)?;
                Ok((map.coarse().clone(), Some(map)))
            }
            (None, None) => Ok((Taxonomy::default_coarse(), None)),
        }
    }

    fn taxonomy_files(&self) -> Vec<PathBuf> {
        self.taxonomy.iter().chain(&self.label_map).map(|p| self.resolve(p)).collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_layouts(path: &Path, layouts: &[Layout], taxonomy: &Taxonomy) -> Result<()> {
    let mut out = create(path)?;
    for l in layouts {
        write_layout(&mut out, l, taxonomy)?;
    }
    out.flush()?;
    Ok(())
}

fn load_layouts(global: &GlobalArgs, paths: &[PathBuf], taxonomy: &Taxonomy) -> Result<(Vec<PathBuf>, Vec<Layout>)> {
    let resolved = paths.iter().map(|p| global.input(p)).collect::<Result<Vec<_>>>()?;
    let mut layouts = Vec::new();
    for p in &resolved {
        layouts.extend(read_layouts(p, taxonomy).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok((resolved, layouts))
}

fn parse_kind(text: &str) -> Result<TaskKind> {
    text.parse().map_err(|e: Error| usage(e.to_string()))
}

/// Per-item generator: stream `index` of `seed`, independent of thread count.
fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw JSONL files, read in order.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Clean corpus JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Rejection log; defaults to `<output>.rejects.jsonl`.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_elements: usize,
    #[arg(long, default_value_t = 256)]
    pub max_elements: usize,
    /// Keep geometric duplicates.
    #[arg(long)]
    pub no_dedup: bool,
}

fn ingest(global: &GlobalArgs, a: &IngestArgs) -> Result<(Dispatched, Option<anyhow::Error>)> {
    let inputs = a.input.iter().map(|p| global.input(p)).collect::<Result<Vec<_>>>()?;
    let (taxonomy, map) = global.taxonomy()?;
    let config = IngestConfig {
        min_elements: a.min_elements,
        max_elements: a.max_elements,
        dedup: !a.no_dedup,
        ..IngestConfig::default()
    };
    let mut ingestor = match map {
        Some(m) => Ingestor::with_label_map(m, config.clone()),
        None => Ingestor::new(taxonomy.clone(), config.clone()),
    };
    let output = global.output(&a.output)?;
    let rejects = match &a.rejects {
        Some(r) => global.output(r)?,
        None => output.with_file_name(format!("{}.rejects.jsonl", output.file_name().unwrap_or_default().to_string_lossy())),
    };
    let mut clean = create(&output)?;
    let mut log = create(&rejects)?;
    for p in &inputs {
        ingestor.ingest_path(
            p,
            |layout| write_layout(&mut clean, &layout, &taxonomy),
            |r| {
                serde_json::to_writer(&mut log, r)?;
                log.write_all(b"\n")?;
                Ok(())
            },
        )?;
    }
    clean.flush()?;
    log.flush()?;
    let s = ingestor.summary();
    eprintln!("ingest: {} lines, {} accepted, {} rejected", s.lines, s.accepted, s.rejected_total());
    let failure = (s.accepted == 0).then(|| anyhow!("no records accepted; {} is empty", output.display()));
    if failure.is_some() {
        eprintln!("warning: clean corpus is empty");
    }
    let mut in_files = inputs;
    in_files.extend(global.taxonomy_files());
    Ok((
        Dispatched {
            record: RunRecord {
                config: json!({
                    "min_elements": config.min_elements,
                    "max_elements": config.max_elements,
                    "dedup": config.dedup,
                    "taxonomy": taxonomy.labels(),
                }),
                vocab_hash: Some(Vocabulary::new(&taxonomy).hash().to_string()),
                inputs: in_files,
                outputs: vec![output.clone(), rejects],
                summary: serde_json::to_value(s)?,
            },
            outputs_root: output,
        },
        failure,
    ))
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Clean corpus shards; statistics are merged in the order given.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Statistics JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Per-page feature CSV.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

fn stats(global: &GlobalArgs, a: &StatsArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let inputs = a.input.iter().map(|p| global.input(p)).collect::<Result<Vec<_>>>()?;
    let shards: Vec<Vec<Layout>> = inputs
        .par_iter()
        .map(|p| read_layouts(p, &taxonomy).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let partial: Vec<CorpusStats> = shards
        .par_iter()
        .map(|shard| {
            let mut s = CorpusStats::default();
            for l in shard {
                s.add(l, &taxonomy)?;
            }
            Ok(s)
        })
        .collect::<Result<_, Error>>()?;
    let mut total = CorpusStats::default();
    for p in &partial {
        total.merge(p);
    }
    if total.pages == 0 {
        return Err(Error::EmptyCorpus.into());
    }
    let output = global.output(&a.output)?;
    let mut text = serde_json::to_string_pretty(&total)?;
    text.push('\n');
    std::fs::write(&output, text)?;
    let mut outputs = vec![output.clone()];
    if let Some(f) = &a.features {
        let path = global.output(f)?;
        let mut writer = FeatureWriter::new(create(&path)?, &taxonomy)?;
        for l in shards.iter().flatten() {
            writer.write(l)?;
        }
        writer.finish()?;
        outputs.push(path);
    }
    eprintln!("stats: {} pages, {} elements", total.pages, total.elements);
    let mut in_files = inputs;
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({ "shards": a.input.len(), "taxonomy": taxonomy.labels() }),
            vocab_hash: None,
            inputs: in_files,
            outputs,
            summary: json!({ "pages": total.pages, "elements": total.elements }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Args)]
pub struct BuildTasksArgs {
    /// Clean corpus JSONL.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Task instance JSONL.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One regime for every page (u_cond, c_to_sp, cs_to_p, completion,
    /// refinement) or `mixture` to sample regimes by weight.
    #[arg(long, default_value = "mixture")]
    pub task: String,
    /// Mixture weights in regime order.
    #[arg(long, default_value = "1,1,1,3,3")]
    pub weights: String,
    /// Refinement noise standard deviation.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Passes over the corpus.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
}

fn build_tasks(global: &GlobalArgs, a: &BuildTasksArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let seed = a.seed.expect("seed filled before dispatch");
    let weights = parse_weights(&a.weights).map_err(|e| usage(e.to_string()))?;
    let fixed = match a.task.as_str() {
        "mixture" => None,
        k => Some(parse_kind(k)?),
    };
    let builder = TaskBuilder::new(&taxonomy).with_sigma(a.sigma).map_err(|e| usage(e.to_string()))?;
    let (inputs, layouts) = load_layouts(global, &a.input, &taxonomy)?;
    if layouts.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let output = global.output(&a.output)?;
    let mut out = create(&output)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut emit = |instance: TaskInstance| -> Result<()> {
        *counts.entry(instance.kind.to_string()).or_default() += 1;
        serde_json::to_writer(&mut out, &instance.to_record(&taxonomy)?)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    match fixed {
        Some(kind) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..a.repeat {
                for l in &layouts {
                    emit(builder.make(kind, l, &mut rng))?;
                }
            }
        }
        None => {
            let mut mixture = TaskMixture::seeded(builder, weights, seed).map_err(|e| usage(e.to_string()))?;
            for _ in 0..a.repeat {
                for l in &layouts {
                    emit(mixture.next_instance(l))?;
                }
            }
        }
    }
    out.flush()?;
    eprintln!("build-tasks: {counts:?}");
    let mut in_files = inputs;
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({
                "task": a.task,
                "weights": if fixed.is_none() { weights.to_vec() } else { DEFAULT_WEIGHTS.to_vec() },
                "sigma": a.sigma,
                "repeat": a.repeat,
            }),
            vocab_hash: None,
            inputs: in_files,
            outputs: vec![output.clone()],
            summary: json!({ "instances": counts }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Clean corpus JSONL.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Model JSON.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Interpolation weights for context lengths 0..order; uniform by default.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
}

fn train(global: &GlobalArgs, a: &TrainArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let vocab = Vocabulary::new(&taxonomy);
    let config = TrainConfig {
        order: a.order,
        alpha: a.alpha,
        lambdas: a.lambdas.clone(),
    };
    // Surface bad hyperparameters as usage errors before reading data.
    config.validate().map_err(|e| usage(e.to_string()))?;
    let (inputs, layouts) = load_layouts(global, &a.input, &taxonomy)?;
    if layouts.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    // Counts are sums, so chunked training merges to the same model.
    let parts: Vec<NGramModel> = layouts
        .par_chunks(4096)
        .map(|chunk| NGramModel::train_layouts(chunk, &vocab, &config))
        .collect::<Result<_, Error>>()?;
    let mut parts = parts.into_iter();
    let mut model = parts.next().expect("at least one chunk");
    for p in parts {
        model.merge(&p)?;
    }
    let output = global.output(&a.output)?;
    model.save(&output)?;
    eprintln!("train: {} sequences, order {}", model.sequences(), model.order());
    let mut in_files = inputs;
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({ "order": a.order, "alpha": a.alpha, "lambdas": model.lambdas() }),
            vocab_hash: Some(vocab.hash().to_string()),
            inputs: in_files,
            outputs: vec![output.clone()],
            summary: json!({ "sequences": model.sequences() }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingMode {
    Greedy,
    Temperature,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Task JSONL from `build-tasks`, or clean layouts when `--task` is given.
    #[arg(long)]
    pub input: PathBuf,
    /// Generated layouts JSONL.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Build prompts of this regime from the input layouts.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, value_enum, default_value_t = SamplingMode::Temperature)]
    pub sampling: SamplingMode,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Refinement noise when building refinement prompts from layouts.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
}

fn generate(global: &GlobalArgs, a: &GenerateArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let vocab = Vocabulary::new(&taxonomy);
    let seed = a.seed.expect("seed filled before dispatch");
    let sampling = match a.sampling {
        SamplingMode::Greedy => Sampling::Greedy,
        SamplingMode::Temperature => {
            if !(a.temperature > 0.0 && a.temperature.is_finite()) {
                return Err(usage("--temperature must be positive"));
            }
            Sampling::Temperature {
                tau: a.temperature,
                top_k: a.top_k,
            }
        }
    };
    let kind = a.task.as_deref().map(parse_kind).transpose()?;
    let builder = TaskBuilder::new(&taxonomy).with_sigma(a.sigma).map_err(|e| usage(e.to_string()))?;
    let model_path = global.input(&a.model)?;
    let input = global.input(&a.input)?;
    let model = NGramModel::load(&model_path, &vocab)?;

    enum Source {
        Layouts(TaskKind, Vec<Layout>),
        Tasks(Vec<TaskInstance>),
    }
    let source = match kind {
        Some(k) => Source::Layouts(k, read_layouts(&input, &taxonomy)?),
        None => {
            let text = std::fs::read_to_string(&input)?;
            let instances = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let record: TaskRecord =
                        serde_json::from_str(l).with_context(|| format!("{} line {}: not a task record", input.display(), i + 1))?;
                    Ok(TaskInstance::from_record(&record, &taxonomy)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Source::Tasks(instances)
        }
    };
    let count = match &source {
        Source::Layouts(_, l) => l.len(),
        Source::Tasks(t) => t.len(),
    };
    let generated: Vec<Layout> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, i);
            let built;
            let instance = match &source {
                Source::Layouts(k, layouts) => {
                    built = builder.make(*k, &layouts[i], &mut rng);
                    &built
                }
                Source::Tasks(t) => &t[i],
            };
            model
                .generate(&vocab, &Prompt::from_instance(instance), sampling, &mut rng)
                .with_context(|| format!("prompt {} ({})", i, instance.target.id()))
        })
        .collect::<Result<_>>()?;
    let output = global.output(&a.output)?;
    write_layouts(&output, &generated, &taxonomy)?;
    eprintln!("generate: {} layouts", generated.len());
    let mut in_files = vec![model_path, input];
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({
                "task": kind.map(|k| k.to_string()),
                "sampling": format!("{:?}", a.sampling).to_lowercase(),
                "temperature": a.temperature,
                "top_k": a.top_k,
                "sigma": a.sigma,
            }),
            vocab_hash: Some(vocab.hash().to_string()),
            inputs: in_files,
            outputs: vec![output.clone()],
            summary: json!({ "generated": generated.len() }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Noisy layouts JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Search window in bins around each noisy coordinate.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: u16,
}

fn refine(global: &GlobalArgs, a: &RefineArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let vocab = Vocabulary::new(&taxonomy);
    let model_path = global.input(&a.model)?;
    let input = global.input(&a.input)?;
    let model = NGramModel::load(&model_path, &vocab)?;
    let noisy = read_layouts(&input, &taxonomy)?;
    let refined: Vec<Layout> = noisy
        .par_iter()
        .map(|l| model.histogram().refine(l, a.delta))
        .collect::<Result<_, Error>>()?;
    let output = global.output(&a.output)?;
    write_layouts(&output, &refined, &taxonomy)?;
    eprintln!("refine: {} layouts", refined.len());
    let mut in_files = vec![model_path, input];
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({ "delta": a.delta }),
            vocab_hash: Some(vocab.hash().to_string()),
            inputs: in_files,
            outputs: vec![output.clone()],
            summary: json!({ "refined": refined.len() }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generated layouts JSONL.
    #[arg(long, required_unless_present = "self_report")]
    pub input: Option<PathBuf>,
    /// Reference layouts JSONL.
    #[arg(long)]
    pub reference: PathBuf,
    /// Metric report JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Comma list of fid, alignment, overlap, miou (or `all`).
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Score the reference set on its own (alignment and overlap).
    #[arg(long)]
    pub self_report: bool,
}

fn evaluate_cmd(global: &GlobalArgs, a: &EvaluateArgs) -> Result<(Dispatched, Option<anyhow::Error>)> {
    let (taxonomy, _) = global.taxonomy()?;
    let selection = MetricSelection::parse(&a.metrics).map_err(|e| usage(e.to_string()))?;
    let reference_path = global.input(&a.reference)?;
    let generated_path = match (&a.input, a.self_report) {
        (Some(p), false) => Some(global.input(p)?),
        _ => None,
    };
    let reference = read_layouts(&reference_path, &taxonomy)?;
    let report = match &generated_path {
        None => evaluate_reference(&reference)?,
        Some(p) => evaluate(&read_layouts(p, &taxonomy)?, &reference, &taxonomy, selection)?,
    };
    let output = global.output(&a.output)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&output, text)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    if a.self_report {
        println!(
            "reference ({} pages): Ali. {} Ove. {}",
            report.reference_count,
            fmt(report.alignment),
            fmt(report.overlap)
        );
    } else {
        println!(
            "FID {} Ali. {} Ove. {} mIoU {}",
            fmt(report.fid),
            fmt(report.alignment),
            fmt(report.overlap),
            fmt(report.miou)
        );
    }
    let failure = report.fid_error.as_ref().map(|e| anyhow!("FID could not be computed: {e}"));
    let mut in_files: Vec<PathBuf> = generated_path.into_iter().chain([reference_path]).collect();
    in_files.extend(global.taxonomy_files());
    Ok((
        Dispatched {
            record: RunRecord {
                config: json!({ "metrics": selection, "self_report": a.self_report }),
                vocab_hash: None,
                inputs: in_files,
                outputs: vec![output.clone()],
                summary: json!({
                    "fid": report.fid,
                    "fid_error": report.fid_error,
                    "alignment": report.alignment,
                    "overlap": report.overlap,
                    "miou": report.miou,
                }),
            },
            outputs_root: output,
        },
        failure,
    ))
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Layouts JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory of per-page SVGs, or the sheet file with `--sheet`.
    #[arg(long)]
    pub output: PathBuf,
    /// Draw every page on one sheet.
    #[arg(long)]
    pub sheet: bool,
    /// Pages per sheet row.
    #[arg(long, default_value_t = 4)]
    pub columns: usize,
    #[arg(long)]
    pub no_labels: bool,
}

fn file_stem(index: usize, id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    format!("{index:05}-{safe}.svg")
}

fn render(global: &GlobalArgs, a: &RenderArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    let input = global.input(&a.input)?;
    let layouts = read_layouts(&input, &taxonomy)?;
    let mut style = RenderStyle::new(&taxonomy);
    style.show_labels = !a.no_labels;
    let output = global.output(&a.output)?;
    let outputs = if a.sheet {
        std::fs::write(&output, render_sheet(&layouts, &style, a.columns))?;
        vec![output.clone()]
    } else {
        std::fs::create_dir_all(&output)?;
        layouts
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let path = output.join(file_stem(i, l.id()));
                std::fs::write(&path, render_svg(l, &style))?;
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()?
    };
    eprintln!("render: {} page(s), {} file(s)", layouts.len(), outputs.len());
    let mut in_files = vec![input];
    in_files.extend(global.taxonomy_files());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({ "sheet": a.sheet, "columns": a.columns, "labels": !a.no_labels }),
            vocab_hash: None,
            inputs: in_files,
            outputs,
            summary: json!({ "pages": layouts.len() }),
        },
        outputs_root: output,
    })
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Layouts JSONL.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub count: u64,
    #[arg(long, default_value_t = 1)]
    pub min_elements: usize,
    #[arg(long, default_value_t = 24)]
    pub max_elements: usize,
}

fn synth(global: &GlobalArgs, a: &SynthArgs) -> Result<Dispatched> {
    let (taxonomy, _) = global.taxonomy()?;
    if a.min_elements == 0 || a.min_elements > a.max_elements {
        return Err(usage("need 1 <= --min-elements <= --max-elements"));
    }
    let seed = a.seed.expect("seed filled before dispatch");
    let config = SynthConfig {
        min_elements: a.min_elements,
        max_elements: a.max_elements,
    };
    let layouts: Vec<Layout> = (0..a.count)
        .into_par_iter()
        .map(|i| synth_layout(seed, i, &taxonomy, config))
        .collect();
    let output = global.output(&a.output)?;
    write_layouts(&output, &layouts, &taxonomy)?;
    eprintln!("synth: {} layouts", layouts.len());
    Ok(Dispatched {
        record: RunRecord {
            config: json!({ "count": a.count, "min_elements": a.min_elements, "max_elements": a.max_elements }),
            vocab_hash: None,
            inputs: global.taxonomy_files(),
            outputs: vec![output.clone()],
            summary: json!({ "layouts": layouts.len() }),
        },
        outputs_root: output,
    })
}
