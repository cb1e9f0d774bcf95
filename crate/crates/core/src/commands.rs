//! Command-line pipeline: `pretrain`, `cache`, `train`, `eval`, `bench`,
//! `export-scores`, plus `split` and `replay` helpers.
//!
//! Every artifact-producing command writes `<out>.manifest.json` next to its
//! output and `<out>.ids.tsv` with the original id of every dense index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binarize::{build_tables, BinarizedTable};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::{holdout_split, load_edge_files, pairs_to_text, parse_interactions, EdgeLayout, LoadedData};
use crate::propagation::{propagate, DenseTable, LayerOutputs};
use crate::scoring::{top_k_filtered, ScorePath, Scorer};
use crate::training::checkpoint::{teacher_from_bytes, teacher_to_bytes};
use crate::training::{
    layer_weights, pretrain_teacher, stream_rng, teacher_cache, train_student, EpochLog, Estimator, TeacherCache,
    TrainingConfig,
};

#[derive(Parser, Debug)]
#[command(name = "bitgear", version, about = "Binarized graph collaborative filtering")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BITGEAR_THREADS")]
    pub threads: Option<usize>,

    /// Accepted for compatibility. Gradient reductions always run in a fixed
    /// order, so results never depend on the thread count.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the full-precision teacher and write a BGT1 checkpoint.
    Pretrain(PretrainArgs),
    /// Build the teacher's per-layer top-R cache (BGC1).
    Cache(CacheArgs),
    /// Train the binarized student and write a BGR1 model.
    Train(TrainArgs),
    /// Recall/NDCG on the held-out split.
    Eval(EvalArgs),
    /// Time float vs bitwise full-catalog scoring and report model size.
    Bench(BenchArgs),
    /// Top-K lists per user as `user rank item score` TSV.
    ExportScores(ExportArgs),
    /// Random per-user holdout of an interaction file.
    Split(SplitArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Training interactions.
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out interactions. Pass the same file to every stage so indices agree.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub layout: EdgeLayout,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set dim=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Overrides `epochs_teacher`.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also append the per-epoch log to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CacheArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub teacher: PathBuf,
    /// Overrides `top_r`.
    #[arg(long = "r")]
    pub r: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Overrides `epochs_student`.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// BGR1 model or BGT1 teacher checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
    pub ks: Vec<usize>,
    #[arg(long, default_value = "bitwise")]
    pub path: ScorePath,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value = "bitwise")]
    pub path: ScorePath,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "auto")]
    pub layout: EdgeLayout,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 2022)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// What a run consumed and produced, enough to re-run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str, argv: &[String]) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: argv.to_vec(),
            config: None,
            seed: None,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    fn with_config(mut self, cfg: &TrainingConfig) -> Self {
        self.config = Some(cfg.to_text());
        self.seed = Some(cfg.seed);
        self
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    fn data_inputs(&mut self, data: &DataArgs, cfg: &ConfigArgs) -> Result<()> {
        self.input(&data.train)?;
        if let Some(t) = &data.test {
            self.input(t)?;
        }
        if let Some(c) = &cfg.config {
            self.input(c)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Writes `<out>.manifest.json` through a temporary file and a rename.
    fn write_next_to(&self, out: &Path) -> Result<PathBuf> {
        let path = sidecar(out, "manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}

fn sidecar(out: &Path, ext: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = sidecar(path, "tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

/// Defaults, then the config file, then `--set` overrides, then `--seed`.
fn resolve_config(args: &ConfigArgs) -> Result<TrainingConfig> {
    let mut cfg = TrainingConfig::default();
    if let Some(p) = &args.config {
        cfg.apply_text(&read_text(p)?)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_data(data: &DataArgs) -> Result<LoadedData> {
    let loaded = load_edge_files(&data.train, data.test.as_deref(), data.layout)?;
    eprintln!("{}", loaded.report);
    Ok(loaded)
}

fn load_teacher(path: &Path, loaded: &LoadedData, cfg: &TrainingConfig) -> Result<DenseTable> {
    let base = teacher_from_bytes(&read_bytes(path)?)?;
    if base.rows() != loaded.graph.num_nodes() {
        return Err(Error::Input(format!(
            "teacher has {} rows but the data has {} users + {} items",
            base.rows(),
            loaded.graph.num_users(),
            loaded.graph.num_items()
        )));
    }
    if base.dim() != cfg.dim {
        return Err(Error::Input(format!(
            "teacher has d={} but the config says dim={}",
            base.dim(),
            cfg.dim
        )));
    }
    Ok(base)
}

/// Prints each epoch line to stderr and optionally appends it to a file.
struct EpochSink {
    file: Option<fs::File>,
    lines: Vec<String>,
}

impl EpochSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let file = path.map(fs::File::create).transpose()?;
        Ok(Self { file, lines: Vec::new() })
    }

    fn push(&mut self, log: &EpochLog) {
        let line = log.to_string();
        eprintln!("{line}");
        if let Some(f) = &mut self.file {
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("cannot write training log: {e}");
            }
        }
        self.lines.push(line);
    }
}

fn write_ids(out: &Path, loaded: &LoadedData) -> Result<PathBuf> {
    let path = sidecar(out, "ids.tsv");
    write_atomic(&path, loaded.ids.to_tsv().as_bytes())?;
    Ok(path)
}

fn run_pretrain(args: &PretrainArgs, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let mut cfg = resolve_config(&args.cfg)?;
    if let Some(e) = args.epochs {
        cfg.epochs_teacher = e;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("pretrain", argv).with_config(&cfg);
    manifest.data_inputs(&args.data, &args.cfg)?;
    let loaded = load_data(&args.data)?;

    let mut sink = EpochSink::open(args.log.as_deref())?;
    let train_start = Instant::now();
    let (base, _) = pretrain_teacher(&loaded.graph, &cfg, |e| sink.push(e))?;
    manifest.timings.insert("train_secs".into(), train_start.elapsed().as_secs_f64());

    write_atomic(&args.out, &teacher_to_bytes(&base))?;
    let ids = write_ids(&args.out, &loaded)?;
    manifest.artifacts = vec![args.out.display().to_string(), ids.display().to_string()];
    manifest.timings.insert("total_secs".into(), start.elapsed().as_secs_f64());
    manifest.write_next_to(&args.out)?;
    Ok(())
}

fn run_cache(args: &CacheArgs, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let mut cfg = resolve_config(&args.cfg)?;
    if let Some(r) = args.r {
        cfg.top_r = r;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("cache", argv).with_config(&cfg);
    manifest.data_inputs(&args.data, &args.cfg)?;
    manifest.input(&args.teacher)?;
    let loaded = load_data(&args.data)?;
    let base = load_teacher(&args.teacher, &loaded, &cfg)?;
    let cache = teacher_cache(&loaded.graph, &base, &cfg)?;
    write_atomic(&args.out, &cache.to_bytes())?;
    manifest.artifacts = vec![args.out.display().to_string()];
    manifest.timings.insert("total_secs".into(), start.elapsed().as_secs_f64());
    manifest.write_next_to(&args.out)?;
    Ok(())
}

fn run_train(args: &TrainArgs, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let mut cfg = resolve_config(&args.cfg)?;
    if let Some(e) = args.epochs {
        cfg.epochs_student = e;
    }
    if let Some(est) = args.estimator {
        cfg.estimator = est;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("train", argv).with_config(&cfg);
    manifest.data_inputs(&args.data, &args.cfg)?;
    manifest.input(&args.teacher)?;
    manifest.input(&args.cache)?;
    let loaded = load_data(&args.data)?;
    let base = load_teacher(&args.teacher, &loaded, &cfg)?;
    let cache = TeacherCache::from_bytes(&read_bytes(&args.cache)?)?;

    let mut sink = EpochSink::open(args.log.as_deref())?;
    let train_start = Instant::now();
    let (table, _) = train_student(&loaded.graph, &base, &cache, &cfg, |e| sink.push(e))?;
    manifest.timings.insert("train_secs".into(), train_start.elapsed().as_secs_f64());

    write_atomic(&args.out, &table.to_bytes())?;
    let ids = write_ids(&args.out, &loaded)?;
    manifest.artifacts = vec![args.out.display().to_string(), ids.display().to_string()];
    manifest.timings.insert("total_secs".into(), start.elapsed().as_secs_f64());
    manifest.write_next_to(&args.out)?;
    Ok(())
}

/// A loaded model file: binarized student or full-precision teacher layers.
enum Model {
    Binary(BinarizedTable),
    Teacher(LayerOutputs),
}

fn load_model(path: &Path, loaded: &LoadedData, cfg: &TrainingConfig) -> Result<Model> {
    let bytes = read_bytes(path)?;
    match bytes.get(..4) {
        Some(b"BGR1") => {
            let table = BinarizedTable::from_bytes(&bytes)?;
            if table.num_users() != loaded.graph.num_users() || table.num_items() != loaded.graph.num_items() {
                return Err(Error::Input(format!(
                    "model has {} users / {} items, data has {} / {}",
                    table.num_users(),
                    table.num_items(),
                    loaded.graph.num_users(),
                    loaded.graph.num_items()
                )));
            }
            Ok(Model::Binary(table))
        }
        Some(b"BGT1") => {
            let base = load_teacher(path, loaded, &TrainingConfig {
                dim: teacher_from_bytes(&bytes)?.dim(),
                ..cfg.clone()
            })?;
            Ok(Model::Teacher(propagate(&loaded.graph, &base, cfg.layers, cfg.norm_mode)?))
        }
        _ => Err(Error::Format(format!("{}: not a BGR1 or BGT1 file", path.display()))),
    }
}

/// Runs `f` with a scorer for the requested path. A teacher checkpoint can be
/// scored at full precision or binarized on the fly (no student training).
fn with_scorer<T>(
    model: &Model,
    path: ScorePath,
    loaded: &LoadedData,
    cfg: &TrainingConfig,
    f: impl FnOnce(&Scorer<'_>) -> Result<T>,
) -> Result<T> {
    match (model, path) {
        (Model::Binary(table), p) => f(&Scorer::binary(table, p)?),
        (Model::Teacher(layers), ScorePath::Full) => {
            f(&Scorer::full(layers, layer_weights(cfg), loaded.graph.num_users())?)
        }
        (Model::Teacher(layers), p) => {
            let table = build_tables(layers, loaded.graph.num_users(), &layer_weights(cfg))?;
            f(&Scorer::binary(&table, p)?)
        }
    }
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    if args.data.test.is_none() {
        return Err(Error::Input("eval needs --test".into()));
    }
    let cfg = resolve_config(&args.cfg)?;
    let loaded = load_data(&args.data)?;
    let model = load_model(&args.model, &loaded, &cfg)?;
    let report = with_scorer(&model, args.path, &loaded, &cfg, |s| {
        evaluate(s, &loaded.graph, &loaded.split, &args.ks)
    })?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_tsv());
    }
    Ok(())
}

/// Timing and size figures for one model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub queries: usize,
    pub float_ms_per_query: f64,
    pub bitwise_ms_per_query: f64,
    pub speedup: f64,
    pub model_bytes: usize,
    pub float32_bytes: usize,
    pub size_ratio: f64,
    pub expected_size_ratio: f64,
    pub compression: f64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "queries={}", self.queries).unwrap();
        if self.queries == 0 {
            return s;
        }
        for (k, v) in [
            ("float_ms_per_query", self.float_ms_per_query),
            ("bitwise_ms_per_query", self.bitwise_ms_per_query),
            ("speedup", self.speedup),
        ] {
            writeln!(s, "{k}={v:.4}").unwrap();
        }
        writeln!(s, "model_bytes={}", self.model_bytes).unwrap();
        writeln!(s, "float32_bytes={}", self.float32_bytes).unwrap();
        for (k, v) in [
            ("size_ratio", self.size_ratio),
            ("expected_size_ratio", self.expected_size_ratio),
            ("compression", self.compression),
        ] {
            writeln!(s, "{k}={v:.4}").unwrap();
        }
        s
    }
}

/// Bytes of a float32 table holding one `d`-vector per node.
pub fn float32_table_bytes(table: &BinarizedTable) -> usize {
    table.num_nodes() * table.dim() * 4
}

/// `(L+1)(32+d) / (32d)`: bits per node of the binarized model over a float32 vector.
pub fn expected_size_ratio(num_layers: usize, d: usize) -> f64 {
    (num_layers * (32 + d)) as f64 / (32 * d) as f64
}

/// Times `queries` full-catalog scorings for random users on both binary
/// paths (same users, single thread).
pub fn bench_model(table: &BinarizedTable, queries: usize, seed: u64) -> Result<BenchReport> {
    let model_bytes = table.serialized_len();
    let float32_bytes = float32_table_bytes(table);
    let mut report = BenchReport {
        queries,
        float_ms_per_query: 0.0,
        bitwise_ms_per_query: 0.0,
        speedup: 0.0,
        model_bytes,
        float32_bytes,
        size_ratio: model_bytes as f64 / float32_bytes as f64,
        expected_size_ratio: expected_size_ratio(table.num_layers(), table.dim()),
        compression: float32_bytes as f64 / model_bytes as f64,
    };
    if queries == 0 || table.num_users() == 0 {
        return Ok(report);
    }
    let mut rng = stream_rng(seed, 0);
    let users: Vec<usize> = (0..queries).map(|_| rng.random_range(0..table.num_users())).collect();
    let mut out = vec![0f32; table.num_items()];
    let mut time_path = |path: ScorePath| -> Result<f64> {
        let scorer = Scorer::binary(table, path)?;
        // One untimed query to warm caches.
        scorer.score_into(users[0], &mut out);
        let start = Instant::now();
        let mut sink = 0f32;
        for &u in &users {
            scorer.score_into(u, &mut out);
            sink += out[0];
        }
        std::hint::black_box(sink);
        Ok(start.elapsed().as_secs_f64() * 1e3 / queries as f64)
    };
    report.float_ms_per_query = time_path(ScorePath::BinaryFloat)?;
    report.bitwise_ms_per_query = time_path(ScorePath::Bitwise)?;
    report.speedup = report.float_ms_per_query / report.bitwise_ms_per_query;
    Ok(report)
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let table = BinarizedTable::from_bytes(&read_bytes(&args.model)?)?;
    print!("{}", bench_model(&table, args.queries, args.seed)?.to_text());
    Ok(())
}

fn run_export(args: &ExportArgs) -> Result<()> {
    let cfg = resolve_config(&args.cfg)?;
    let loaded = load_data(&args.data)?;
    let model = load_model(&args.model, &loaded, &cfg)?;
    let g = &loaded.graph;
    let text = with_scorer(&model, args.path, &loaded, &cfg, |scorer| {
        let mut out = String::from("user\trank\titem\tscore\n");
        let mut scores = vec![0f32; g.num_items()];
        for u in (0..g.num_users()).filter(|&u| g.user_degree(u) > 0) {
            scorer.score_into(u, &mut scores);
            let seen = g.user_neighbors(u);
            let ranked = top_k_filtered(&scores, args.k, |i| {
                g.item_degree(i) == 0 || seen.binary_search(&(i as u32)).is_ok()
            });
            for (rank, i) in ranked.into_iter().enumerate() {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    loaded.ids.users[u],
                    rank + 1,
                    loaded.ids.items[i],
                    scores[i]
                )
                .unwrap();
            }
        }
        Ok(out)
    })?;
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run_split(args: &SplitArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(Error::Config("test fraction must be in [0, 1)".into()));
    }
    let pairs = parse_interactions(&read_text(&args.input)?, args.layout)?;
    let (train, test) = holdout_split(&pairs, args.test_fraction, args.seed);
    write_atomic(&args.train_out, pairs_to_text(&train).as_bytes())?;
    write_atomic(&args.test_out, pairs_to_text(&test).as_bytes())?;
    eprintln!("train_edges={}\ntest_edges={}", train.len(), test.len());
    Ok(())
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    for input in &manifest.inputs {
        let now = file_digest(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(Error::Input(format!("{} changed since the recorded run", input.path)));
        }
    }
    if manifest.argv.iter().any(|a| a == "replay") {
        return Err(Error::Input("manifest records a replay".into()));
    }
    run(&manifest.argv)
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Pretrain(a) => run_pretrain(a, argv),
        Command::Cache(a) => run_cache(a, argv),
        Command::Train(a) => run_train(a, argv),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench(a),
        Command::ExportScores(a) => run_export(a),
        Command::Split(a) => run_split(a),
        Command::Replay(a) => run_replay(a),
    }
}

/// Executes a parsed command inside a thread pool sized by `--threads`.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| dispatch(cli, argv))
}

/// Parses `argv` (program name first) and executes it.
pub fn run(argv: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?;
    execute(&cli, argv)
}
