use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flockdet_core::aggregate::{
    flock_report, histogram_json, size_histogram, validate_counts, FlockSet, ValidationCounts,
};
use flockdet_core::features::DtwMode;
use flockdet_core::ingest::{
    generate_synthetic, read_dataset, write_group_file, write_trajectory_csv, Dataset, ParseOptions,
    SyntheticConfig,
};
use flockdet_core::pipeline::{confirm_over_windows, detect_scenes, train_on_pairs, RunSettings};
use flockdet_core::scene::{
    build_pair_dataset, build_scenes, read_pair_dataset, read_scene_dir, write_pair_dataset,
    write_scene_dir, BalanceStrategy, BlockOptions, PairDataset, PairDatasetSpec, SceneBin,
};
use flockdet_core::seqnet::{
    load_checkpoint, save_checkpoint, Arch, ModelConfig, Optimizer, TrainConfig, DEFAULT_THRESHOLD,
};
use flockdet_core::{Error, Execution};

use crate::config::ConfigFile;
use crate::grid::{means, means_to_csv, plots, runs_from_csv, runs_to_csv, ExperimentGrid, RunRecord, RUNS_HEADER};
use crate::svg::{bar_chart, scene_chart};
use crate::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "flockdet", version, about = "Pairwise flock detection in pedestrian trajectories")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// RNG seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sequence length L (points per agent block).
    #[arg(short = 'L', long = "seq-len", global = true)]
    pub seq_len: Option<usize>,
    /// Scene bin width T in milliseconds.
    #[arg(short = 'T', long = "bin-ms", global = true)]
    pub bin_ms: Option<i64>,
    /// Pair confidence threshold.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key = value file standing in for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic trajectory CSV and group file.
    Synth(SynthArgs),
    /// Build the pair dataset and scene bins from a dataset.
    Prepare(PrepareArgs),
    /// Train one model on a prepared pair dataset.
    Train(TrainArgs),
    /// Train every cell of a hyperparameter grid.
    Grid(GridArgs),
    /// Find flocks in prepared scene bins.
    Detect(DetectArgs),
    /// Detect flocks in an annotated dataset and score them.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataArgs {
    /// Trajectory CSV; without it a synthetic dataset is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Group annotation file belonging to --data.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Synthetic: number of flocks.
    #[arg(long)]
    pub flocks: Option<usize>,
    /// Synthetic: number of lone walkers.
    #[arg(long)]
    pub singletons: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub duration_ms: Option<i64>,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub negative_ratio: Option<f64>,
    /// weighted_loss, oversample, undersample or synthetic_interpolation.
    #[arg(long)]
    pub balance: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// rnn, lstm or transformer.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// full or prefix.
    #[arg(long)]
    pub dtw_mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by `prepare` (its `pairs` subdirectory or itself).
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated sequence lengths.
    #[arg(long)]
    pub seq_lens: Option<String>,
    #[arg(long)]
    pub batches: Option<String>,
    #[arg(long)]
    pub hiddens: Option<String>,
    #[arg(long)]
    pub archs: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Parallel worker slots (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Only regenerate the plots from an existing runs.csv in --out.
    #[arg(long)]
    pub replot: bool,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenes: PathBuf,
    /// Also draw every bin as SVG into this directory.
    #[arg(long)]
    pub svg_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Keep an edge only if it is also positive on each agent's next
    /// WINDOWS-1 blocks of L points (1 = single shot).
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

pub struct Ctx {
    pub file: ConfigFile,
    pub common: Common,
}

impl Ctx {
    fn seed(&self) -> CliResult<u64> {
        self.file.pick_or(self.common.seed, "seed", 7)
    }
    fn seq_len(&self) -> CliResult<Option<usize>> {
        self.file.pick(self.common.seq_len, "seq_len")
    }
    fn bin_ms(&self) -> CliResult<i64> {
        self.file
            .pick_or(self.common.bin_ms, "bin_ms", flockdet_core::scene::DEFAULT_BIN_WIDTH_MS)
    }
    fn threshold(&self) -> CliResult<f64> {
        let t = self.file.pick_or(self.common.threshold, "threshold", DEFAULT_THRESHOLD)?;
        if !t.is_finite() {
            return Err(CliError::Usage("threshold must be finite".into()));
        }
        Ok(t)
    }
    fn out(&self, default: &str) -> CliResult<PathBuf> {
        Ok(self
            .file
            .pick(self.common.out.clone(), "out")?
            .unwrap_or_else(|| PathBuf::from(default)))
    }
    fn exec(&self) -> CliResult<Execution> {
        let seq = self.common.sequential || self.file.pick_or(None, "sequential", false)?;
        Ok(if seq { Execution::Sequential } else { Execution::Parallel })
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.common.config.as_deref())?;
    let ctx = Ctx {
        file,
        common: cli.common,
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, &a),
        Command::Prepare(a) => cmd_prepare(&ctx, &a),
        Command::Train(a) => cmd_train(&ctx, &a),
        Command::Grid(a) => cmd_grid(&ctx, &a),
        Command::Detect(a) => cmd_detect(&ctx, &a),
        Command::Validate(a) => cmd_validate(&ctx, &a),
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn synthetic_config(ctx: &Ctx, data: &DataArgs) -> CliResult<SyntheticConfig> {
    let mut cfg = SyntheticConfig::default();
    for (k, v) in ctx.file.section("synth") {
        cfg.set(k, v)?;
    }
    cfg.rng_seed = ctx.seed()?;
    if let Some(n) = ctx.file.pick(data.flocks, "flocks")? {
        cfg.n_flocks = n;
    }
    if let Some(n) = ctx.file.pick(data.singletons, "singletons")? {
        cfg.n_singletons = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_data(ctx: &Ctx, data: &DataArgs) -> CliResult<Dataset> {
    let path: Option<PathBuf> = ctx.file.pick(data.data.clone(), "data")?;
    match path {
        Some(p) => {
            let groups: Option<PathBuf> = ctx.file.pick(data.groups.clone(), "groups")?;
            let ds = read_dataset(&p, groups.as_deref(), &ParseOptions::default())?;
            for d in &ds.diagnostics {
                if d.is_routine() {
                    log::debug!("{d}");
                } else {
                    log::warn!("{d}");
                }
            }
            Ok(ds)
        }
        None => Ok(generate_synthetic(&synthetic_config(ctx, data)?)?),
    }
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> CliResult<()> {
    let mut cfg = synthetic_config(ctx, &a.data)?;
    if let Some(d) = ctx.file.pick(a.duration_ms, "duration_ms")? {
        cfg.duration_ms = d;
        cfg.start_spread_ms = cfg.start_spread_ms.min(d);
    }
    cfg.validate()?;
    let ds = generate_synthetic(&cfg)?;
    let out = ctx.out("synthetic")?;
    fs::create_dir_all(&out)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &ds)?;
    fs::write(out.join("trajectories.csv"), buf)?;
    let mut buf = Vec::new();
    write_group_file(&mut buf, &ds.groups)?;
    fs::write(out.join("groups.txt"), buf)?;
    fs::write(out.join("synthetic.cfg"), cfg.to_key_values())?;
    println!(
        "wrote {} agents, {} annotation rows to {}",
        ds.trajectories.len(),
        ds.groups.len(),
        out.display()
    );
    Ok(())
}

fn pair_spec(ctx: &Ctx, a: &PrepareArgs, seq_len: usize) -> CliResult<PairDatasetSpec> {
    let mut spec = PairDatasetSpec::new(seq_len, ctx.seed()?);
    spec.negative_ratio = ctx.file.pick_or(a.negative_ratio, "negative_ratio", spec.negative_ratio)?;
    spec.train_fraction = ctx.file.pick_or(a.train_fraction, "train_fraction", spec.train_fraction)?;
    if let Some(b) = ctx.file.pick::<String>(a.balance.clone(), "balance")? {
        spec.balance_strategy =
            BalanceStrategy::parse(&b).ok_or_else(|| CliError::Usage(format!("unknown balance strategy '{b}'")))?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Table-1 layout: L, total samples, training samples, excluded agents.
pub fn summary_csv(pairs: &PairDataset) -> String {
    format!(
        "L,total,training,excluded\n{},{},{},{}\n",
        pairs.sequence_length,
        pairs.total(),
        pairs.train.len(),
        pairs.excluded_agents.len()
    )
}

fn cmd_prepare(ctx: &Ctx, a: &PrepareArgs) -> CliResult<()> {
    let l = ctx.seq_len()?.unwrap_or(100);
    let t = ctx.bin_ms()?;
    let spec = pair_spec(ctx, a, l)?;
    let ds = load_data(ctx, &a.data)?;
    let out = ctx.out("prepared")?;
    fs::create_dir_all(&out)?;

    let pairs = build_pair_dataset(&ds, &spec)?;
    fs::create_dir_all(out.join("pairs"))?;
    write_pair_dataset(&out.join("pairs"), &pairs)?;
    let (bins, assignment, diags) = build_scenes(&ds, t, l, BlockOptions::default())?;
    for d in &diags {
        log::info!("{d}");
    }
    fs::create_dir_all(out.join("scenes"))?;
    write_scene_dir(&out.join("scenes"), &bins)?;

    let summary = summary_csv(&pairs);
    fs::write(out.join("summary.csv"), &summary)?;
    let mut counts = String::from("bin_index,bin_start_ms,members\n");
    for b in &bins {
        let _ = writeln!(counts, "{},{},{}", b.bin_index, b.bin_start_ms, b.len());
    }
    fs::write(out.join("bins.csv"), &counts)?;
    let bars: Vec<(String, f64)> = bins.iter().map(|b| (b.bin_index.to_string(), b.len() as f64)).collect();
    fs::write(
        out.join("bins.svg"),
        bar_chart("Pedestrians per scene bin", "bin", "members", &bars),
    )?;
    print!("{summary}");
    if pairs.total() == 0 {
        eprintln!(
            "warning: empty dataset ({} agents excluded at L = {l})",
            assignment.excluded.len()
        );
    }
    Ok(())
}

fn parse_arch(s: &str) -> CliResult<Arch> {
    Arch::parse(s).ok_or_else(|| CliError::Usage(format!("unknown arch '{s}'")))
}

/// Model and training settings from flags/config; `arch`, `hidden` and
/// `batch` fall back to the given cell values.
fn settings(ctx: &Ctx, m: &ModelArgs, arch: Arch, hidden: usize, batch: usize, seed: u64) -> CliResult<RunSettings> {
    let f = &ctx.file;
    let mut mc = ModelConfig::new(arch, hidden, seed);
    mc.num_layers = f.pick_or(m.layers, "layers", mc.num_layers)?;
    mc.heads = f.pick_or(m.heads, "heads", mc.heads)?;
    mc.dropout = f.pick_or(m.dropout, "dropout", mc.dropout)?;
    mc.validate()?;
    let mut tc = TrainConfig::new(batch, seed);
    tc.max_epochs = f.pick_or(m.epochs, "epochs", tc.max_epochs)?;
    tc.patience = f.pick_or(m.patience, "patience", tc.patience)?;
    tc.learning_rate = f.pick_or(m.lr, "lr", tc.learning_rate)?;
    if let Some(o) = f.pick::<String>(m.optimizer.clone(), "optimizer")? {
        tc.optimizer = Optimizer::parse(&o).ok_or_else(|| CliError::Usage(format!("unknown optimizer '{o}'")))?;
    }
    tc.validate()?;
    let mut s = RunSettings::new(mc, tc);
    if let Some(d) = f.pick::<String>(m.dtw_mode.clone(), "dtw_mode")? {
        s.dtw_mode = DtwMode::parse(&d).ok_or_else(|| CliError::Usage(format!("unknown dtw mode '{d}'")))?;
    }
    s.exec = ctx.exec()?;
    Ok(s)
}

fn cell_settings(ctx: &Ctx, m: &ModelArgs) -> CliResult<(Arch, usize, usize)> {
    let arch = parse_arch(&ctx.file.pick_or(m.arch.clone(), "arch", "transformer".to_string())?)?;
    let hidden = ctx.file.pick_or(m.hidden, "hidden", 64)?;
    let batch = ctx.file.pick_or(m.batch, "batch", 32)?;
    Ok((arch, hidden, batch))
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> CliResult<()> {
    let dir = if a.pairs.join("pairs").is_dir() {
        a.pairs.join("pairs")
    } else {
        a.pairs.clone()
    };
    let pairs = read_pair_dataset(&dir)?;
    let (arch, hidden, batch) = cell_settings(ctx, &a.model)?;
    let seed = ctx.seed()?;
    let s = settings(ctx, &a.model, arch, hidden, batch, seed)?;
    let run = train_on_pairs(&pairs, &s)?;
    let out = ctx.out("model.ckpt")?;
    if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    save_checkpoint(&run.model, &out)?;
    let mut hist = out.clone().into_os_string();
    hist.push(".history.csv");
    fs::write(PathBuf::from(hist), run.history.to_csv())?;
    let rec = RunRecord {
        arch,
        seq_len: pairs.sequence_length,
        batch,
        hidden,
        seed,
        accuracy: run.test_accuracy,
        wall_time_s: run.wall_time_s,
        epochs_run: run.model.meta.epochs_run,
    };
    println!("{RUNS_HEADER}\n{}", rec.csv_row());
    Ok(())
}

fn grid_from(ctx: &Ctx, a: &GridArgs) -> CliResult<ExperimentGrid> {
    let d = ExperimentGrid::default();
    let archs: Vec<String> = ctx.file.pick_list(
        a.archs.as_deref(),
        "archs",
        &d.archs.iter().map(|a| a.name().to_string()).collect::<Vec<_>>(),
    )?;
    let g = ExperimentGrid {
        sequence_lengths: ctx.file.pick_list(a.seq_lens.as_deref(), "seq_lens", &d.sequence_lengths)?,
        batch_sizes: ctx.file.pick_list(a.batches.as_deref(), "batches", &d.batch_sizes)?,
        hidden_sizes: ctx.file.pick_list(a.hiddens.as_deref(), "hiddens", &d.hidden_sizes)?,
        archs: archs.iter().map(|s| parse_arch(s)).collect::<CliResult<_>>()?,
        repeats: ctx.file.pick_or(a.repeats, "repeats", 1)?,
        seed_base: ctx.seed()?,
    };
    g.validate()?;
    Ok(g)
}

fn write_plots(out: &Path, runs: &[RunRecord]) -> CliResult<()> {
    let (acc, time) = plots(runs);
    fs::write(out.join("accuracy.svg"), acc)?;
    fs::write(out.join("runtime.svg"), time)?;
    fs::write(out.join("means.csv"), means_to_csv(&means(runs)))?;
    Ok(())
}

fn run_cells<F>(cells: &[crate::grid::Cell], jobs: usize, f: F) -> Vec<CliResult<RunRecord>>
where
    F: Fn(&crate::grid::Cell) -> CliResult<RunRecord> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
        if let Ok(pool) = pool {
            return pool.install(|| cells.par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    cells.iter().map(f).collect()
}

fn cmd_grid(ctx: &Ctx, a: &GridArgs) -> CliResult<()> {
    let out = ctx.out("grid")?;
    fs::create_dir_all(&out)?;
    if a.replot {
        let runs = runs_from_csv(&fs::read_to_string(out.join("runs.csv"))?)?;
        return write_plots(&out, &runs);
    }
    let grid = grid_from(ctx, a)?;
    let ds = load_data(ctx, &a.data)?;
    let prep = PrepareArgs {
        data: a.data.clone(),
        negative_ratio: None,
        balance: None,
        train_fraction: None,
    };
    let mut datasets: BTreeMap<usize, PairDataset> = BTreeMap::new();
    for &l in &grid.sequence_lengths {
        let pairs = build_pair_dataset(&ds, &pair_spec(ctx, &prep, l)?)?;
        println!("L = {l}: {} samples", pairs.total());
        datasets.insert(l, pairs);
    }
    let jobs = ctx.file.pick_or(a.jobs, "jobs", 0)?;
    let cells = grid.cells();
    let results = run_cells(&cells, jobs, |c| {
        // each cell stays single threaded; parallelism is across cells
        let mut s = settings(ctx, &a.model, c.arch, c.hidden, c.batch, c.seed)?;
        s.exec = Execution::Sequential;
        let run = train_on_pairs(&datasets[&c.seq_len], &s)?;
        log::info!("{:?}: accuracy {:.4}", c, run.test_accuracy);
        Ok(RunRecord {
            arch: c.arch,
            seq_len: c.seq_len,
            batch: c.batch,
            hidden: c.hidden,
            seed: c.seed,
            accuracy: run.test_accuracy,
            wall_time_s: run.wall_time_s,
            epochs_run: run.model.meta.epochs_run,
        })
    });
    let runs: Vec<RunRecord> = results.into_iter().collect::<CliResult<_>>()?;
    fs::write(out.join("runs.csv"), runs_to_csv(&runs))?;
    // plots are derived from the file just written
    let reread = runs_from_csv(&fs::read_to_string(out.join("runs.csv"))?)?;
    write_plots(&out, &reread)?;
    print!("{}", means_to_csv(&means(&reread)));
    Ok(())
}

fn scene_svg(bin: &SceneBin, flocks: &FlockSet) -> String {
    let of = flocks.assignment();
    let mut tracks = Vec::new();
    let mut groups = Vec::new();
    for id in &bin.member_ids {
        let pts = bin.block(*id).unwrap_or(&[]).iter().map(|p| p.position()).collect();
        tracks.push((id.to_string(), pts));
        groups.push(of.get(id).copied());
    }
    scene_chart(&format!("Scene bin {}", bin.bin_index), &tracks, &groups)
}

fn cmd_detect(ctx: &Ctx, a: &DetectArgs) -> CliResult<()> {
    let model = load_checkpoint(&a.model)?;
    let threshold = ctx.threshold()?;
    let bins = if a.scenes.exists() {
        read_scene_dir(&a.scenes)?
    } else {
        return Err(CliError::Core(Error::invalid_input(format!(
            "scene directory {} does not exist",
            a.scenes.display()
        ))));
    };
    let det = detect_scenes(&model, &bins, threshold, ctx.exec()?)?;
    let scenes: Vec<(usize, FlockSet)> = det.iter().map(|d| (d.bin_index, d.flocks.clone())).collect();
    let out = ctx.out("flocks.jsonl")?;
    write(&out, &flock_report(&scenes))?;
    if let Some(dir) = &a.svg_dir {
        fs::create_dir_all(dir)?;
        for (bin, d) in bins.iter().zip(&det) {
            fs::write(dir.join(format!("bin_{:05}.svg", bin.bin_index)), scene_svg(bin, &d.flocks))?;
        }
    }
    let h = size_histogram(scenes.iter().map(|s| &s.1));
    println!("{}", histogram_json(&h));
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    scenes: usize,
    threshold: f64,
    counts: ValidationCounts,
    metrics: flockdet_core::aggregate::ValidationMetrics,
    histogram: BTreeMap<String, usize>,
}

fn cmd_validate(ctx: &Ctx, a: &ValidateArgs) -> CliResult<()> {
    let model = load_checkpoint(&a.model)?;
    let threshold = ctx.threshold()?;
    let l = ctx.seq_len()?.unwrap_or(model.seq_len);
    let ds = load_data(ctx, &a.data)?;
    let (bins, _, _) = build_scenes(&ds, ctx.bin_ms()?, l, BlockOptions::default())?;
    let start = Instant::now();
    let mut det = detect_scenes(&model, &bins, threshold, ctx.exec()?)?;
    confirm_over_windows(&model, &ds, &bins, &mut det, threshold, a.windows, ctx.exec()?)?;
    let mut counts = ValidationCounts::default();
    for d in &det {
        counts.merge(&validate_counts(&d.flocks, &ds.groups));
    }
    let m = counts.metrics();
    let h = size_histogram(det.iter().map(|d| &d.flocks));
    let mut flags = Vec::new();
    if m.empty_truth {
        flags.push("empty_truth");
    }
    if m.no_predictions {
        flags.push("no_predictions");
    }
    let table = format!(
        "scenes,groups,exact_match,precision,recall,f1,flags\n{},{},{:.4},{:.4},{:.4},{:.4},{}\n",
        det.len(),
        counts.groups,
        m.exact_match,
        m.precision,
        m.recall,
        m.f1,
        flags.join(";")
    );
    print!("{table}");
    println!("{}", histogram_json(&h));
    log::info!("validation took {:.2}s", start.elapsed().as_secs_f64());
    if let Some(out) = ctx.file.pick(ctx.common.out.clone(), "out")? {
        fs::create_dir_all(&out)?;
        fs::write(out.join("metrics.csv"), &table)?;
        let report = MetricsReport {
            scenes: det.len(),
            threshold,
            counts,
            metrics: m,
            histogram: h.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        fs::write(
            out.join("metrics.json"),
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?,
        )?;
    }
    Ok(())
}
