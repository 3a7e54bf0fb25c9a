use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sparselaw::cost::{
    chinchilla_frontier, chinchilla_optimal, cmul, log_space, optimal_sparsity_closed, optimal_sparsity_numeric,
    sparsity_contour, sparsity_contour_numeric, Contour, CostMode, CostModel,
};
use sparselaw::fitting::{fit_full, fit_sparsity_only, FitConfig};
use sparselaw::pruning::{
    apply_mask, gmp_mask, nm_gradual_mask, toy_train, MaskedTensor, NmPattern, PruneSchedule, RegressionProblem,
    RelativeLr,
};
use sparselaw::simulator::{reduced_subset, simulate_sweep, SweepGrid};
use sparselaw::{eval_law, gain, invert_for_data, invert_for_size, ScalingLawCoefficients};
use sparselaw_cli::{emit_contour_plot, num, parse_run_table, write_residuals, write_run_table, write_run_table_json};
use sparselaw_cli::{PlotError, TableError};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Fit and query joint sparsity/size/data scaling laws.
///
/// Numbers are printed with 17 significant digits so they parse back to the
/// exact same double.
#[derive(Parser)]
#[command(name = "sparselaw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit coefficients to a run table; prints coefficients JSON.
    Fit(FitArgs),
    /// Evaluate the law at one (S, N, D) point.
    Predict(PredictArgs),
    /// Solve the law for data or for size at a target loss.
    Invert(InvertArgs),
    /// Equivalent dense-size multiplier of a sparse model.
    Gain(GainArgs),
    /// Sparse training cost multiplier of the gradual pruning schedule.
    Cmul(CmulArgs),
    /// Loss-minimizing sparsity at fixed non-zero parameters and compute.
    OptimalSparsity(OptimalArgs),
    /// Iso-sparsity contours as CSV, optionally with an SVG plot.
    Contour(ContourArgs),
    /// Dense compute-optimal size and data for given budgets.
    Chinchilla(ChinchillaArgs),
    /// Generate a synthetic sweep from known coefficients.
    Simulate(SimulateArgs),
    /// Compute a magnitude or n:m mask for a tensor.
    Prune(PruneArgs),
    /// Gradual-pruning gradient descent on a random least-squares problem.
    TrainToy(TrainToyArgs),
}

#[derive(Args)]
struct CoeffSource {
    /// Coefficients JSON file ("-" for stdin).
    #[arg(long, conflicts_with = "builtin")]
    coeffs: Option<String>,
    /// Published coefficient set: vit-jft, t5-c4 or t5-c4-nm.
    #[arg(long)]
    builtin: Option<String>,
}

impl CoeffSource {
    fn load_or(&self, fallback: Option<&str>) -> anyhow::Result<ScalingLawCoefficients> {
        if let Some(path) = &self.coeffs {
            let text = read_text(path)?;
            return serde_json::from_str(&text).with_context(|| format!("reading coefficients from {path}"));
        }
        match self.builtin.as_deref().or(fallback) {
            Some(name) => ScalingLawCoefficients::builtin(name)
                .ok_or_else(|| UsageError(format!("unknown builtin coefficient set {name:?}")).into()),
            None => Err(UsageError("one of --coeffs or --builtin is required".into()).into()),
        }
    }

    fn load(&self) -> anyhow::Result<ScalingLawCoefficients> {
        self.load_or(None)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Dense,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Method {
    Closed,
    Numeric,
}

#[derive(Args)]
struct CostArgs {
    /// FLOP accounting: dense charges the N/(1-S) base model, sparse follows the schedule.
    #[arg(long, value_enum, default_value = "sparse")]
    cost: CostArg,
    /// FLOPs per parameter and data item.
    #[arg(long, default_value_t = 6.0)]
    flops_per_param: f64,
    /// Halve the per-parameter FLOPs (encoder-decoder models).
    #[arg(long)]
    encoder_decoder: bool,
    /// Start of the pruning window as a fraction of training.
    #[arg(long, default_value_t = 0.25)]
    schedule_start: f64,
    /// End of the pruning window as a fraction of training.
    #[arg(long, default_value_t = 0.75)]
    schedule_end: f64,
    /// Exponent of the polynomial pruning schedule.
    #[arg(long, default_value_t = 3)]
    schedule_exponent: u32,
}

impl CostArgs {
    fn model(&self) -> anyhow::Result<CostModel> {
        let model = CostModel {
            flops_per_param_datum: if self.encoder_decoder {
                self.flops_per_param / 2.0
            } else {
                self.flops_per_param
            },
            cost_mode: match self.cost {
                CostArg::Dense => CostMode::Dense,
                CostArg::Sparse => CostMode::Sparse,
            },
            schedule_start: self.schedule_start,
            schedule_end: self.schedule_end,
            cubic_exponent: self.schedule_exponent,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct FitArgs {
    /// Run table, CSV or JSON ("-" for stdin).
    #[arg(long, default_value = "-")]
    input: String,
    /// Fit on log loss (language-style); raw loss otherwise.
    #[arg(long)]
    log_loss: bool,
    /// Huber delta [default: 0.001 with --log-loss, else 0.01].
    #[arg(long)]
    delta: Option<f64>,
    /// Number of random starts.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    /// Seed for start sampling [default: 0].
    #[arg(long, env = "SPARSELAW_SEED")]
    seed: Option<u64>,
    /// FitConfig JSON; replaces --log-loss/--delta/--starts/--max-iterations.
    #[arg(long, conflicts_with_all = ["log_loss", "delta"])]
    config: Option<PathBuf>,
    /// Fit only a_S, b_S, c_S, holding the rest at the --dense-* coefficients.
    #[arg(long)]
    sparsity_only: bool,
    /// Dense coefficients JSON for --sparsity-only.
    #[arg(long, requires = "sparsity_only", conflicts_with = "dense_builtin")]
    dense_coeffs: Option<String>,
    /// Published dense coefficients for --sparsity-only.
    #[arg(long, requires = "sparsity_only")]
    dense_builtin: Option<String>,
    /// Keep only runs with the smallest model or the least data before fitting.
    #[arg(long)]
    reduced: bool,
    /// Write coefficients here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the full fit result (objective, residuals, starts) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the run table with a residual column as CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PredictArgs {
    #[command(flatten)]
    source: CoeffSource,
    #[arg(long)]
    sparsity: f64,
    /// Non-zero parameters N.
    #[arg(long)]
    params: f64,
    /// Training data D (images or tokens).
    #[arg(long)]
    data: f64,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
#[command(group(clap::ArgGroup::new("known").required(true).args(["params", "data"])))]
struct InvertArgs {
    #[command(flatten)]
    source: CoeffSource,
    /// Target loss.
    #[arg(long)]
    loss: f64,
    #[arg(long)]
    sparsity: f64,
    /// Known size; prints the data needed.
    #[arg(long)]
    params: Option<f64>,
    /// Known data; prints the size needed.
    #[arg(long)]
    data: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct GainArgs {
    #[command(flatten)]
    source: CoeffSource,
    /// One or more sparsities; one result per line.
    #[arg(long, required = true, num_args = 1..)]
    sparsity: Vec<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct CmulArgs {
    #[arg(long, required = true, num_args = 1..)]
    sparsity: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    schedule_start: f64,
    #[arg(long, default_value_t = 0.75)]
    schedule_end: f64,
    #[arg(long, default_value_t = 3)]
    schedule_exponent: u32,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct OptimalArgs {
    #[command(flatten)]
    source: CoeffSource,
    #[command(flatten)]
    cost: CostArgs,
    #[arg(long)]
    params: f64,
    /// Training FLOPs.
    #[arg(long)]
    compute: f64,
    /// Closed form (dense cost only) or bounded numeric search.
    #[arg(long, value_enum, default_value = "numeric")]
    method: Method,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ContourArgs {
    #[command(flatten)]
    source: CoeffSource,
    #[command(flatten)]
    cost: CostArgs,
    #[arg(long, num_args = 1.., default_values_t = [0.5, 0.75, 0.875])]
    sparsity: Vec<f64>,
    #[arg(long, default_value_t = 1e6)]
    min_params: f64,
    #[arg(long, default_value_t = 1e10)]
    max_params: f64,
    /// Sizes per contour, log-spaced.
    #[arg(long, default_value_t = 9)]
    points: usize,
    #[arg(long, value_enum, default_value = "closed")]
    method: Method,
    /// Contour CSV destination instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the compute-optimal frontier CSV here.
    #[arg(long)]
    frontier: Option<PathBuf>,
    /// Write a log-log SVG plot of the contours and frontier here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ChinchillaArgs {
    #[command(flatten)]
    source: CoeffSource,
    #[command(flatten)]
    cost: CostArgs,
    /// Training FLOPs budgets.
    #[arg(long, required = true, num_args = 1..)]
    compute: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    /// Grid preset: vit or t5.
    #[arg(long)]
    preset: String,
    /// Ground-truth coefficients [default: the preset's published set].
    #[command(flatten)]
    source: CoeffSource,
    /// Standard deviation of the multiplicative log-normal noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, env = "SPARSELAW_SEED", default_value_t = 0)]
    seed: u64,
    /// Override the preset's sparsity levels.
    #[arg(long, num_args = 1..)]
    sparsities: Option<Vec<f64>>,
    /// Pattern label written on every row.
    #[arg(long)]
    pattern: Option<String>,
    /// Images or tokens per training step [default: 4096 for vit, 65536 for t5].
    #[arg(long)]
    data_per_step: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: TableFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TensorFormat {
    /// The SPMT binary tensor layout.
    Binary,
    /// Whitespace- or comma-separated numbers.
    Text,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PruneArgs {
    /// Tensor file ("-" for stdin).
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long, value_enum, default_value = "binary")]
    input_format: TensorFormat,
    /// Target sparsity.
    #[arg(long)]
    sparsity: f64,
    /// n:m group pattern, e.g. 2:4; unstructured magnitude pruning otherwise.
    #[arg(long)]
    pattern: Option<NmPattern>,
    /// Write the masked tensor in binary form here; otherwise print the mask as 0/1.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct TrainToyArgs {
    #[arg(long, default_value_t = 256)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, env = "SPARSELAW_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0.875)]
    final_sparsity: f64,
    #[arg(long, default_value_t = 100)]
    update_every: usize,
    #[arg(long, default_value_t = 0.25)]
    start: f64,
    #[arg(long, default_value_t = 0.75)]
    end: f64,
    #[arg(long, default_value_t = 0.05)]
    base_lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Clip the update RMS at this value.
    #[arg(long, default_value_t = 1.0, conflicts_with = "no_clip")]
    clip: f64,
    #[arg(long)]
    no_clip: bool,
    #[arg(long)]
    pattern: Option<NmPattern>,
    /// Trace CSV destination instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn read_text(path: &str) -> anyhow::Result<String> {
    let mut text = String::new();
    open_input(path)?.read_to_string(&mut text)?;
    Ok(text)
}

fn open_input(path: &str) -> anyhow::Result<Box<dyn Read>> {
    if path == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let file = File::open(path).with_context(|| format!("opening {path}"))?;
    Ok(Box::new(io::BufReader::new(file)))
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn write_json(value: &impl serde::Serialize, path: Option<&Path>) -> anyhow::Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn print_lines(lines: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
    let mut out = open_output(None)?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn fit(args: FitArgs) -> anyhow::Result<()> {
    let data = parse_run_table(open_input(&args.input)?)?;
    let data = if args.reduced { reduced_subset(&data)? } else { data };
    let mut config = match &args.config {
        Some(path) => serde_json::from_str(&read_text(&path.to_string_lossy())?)
            .with_context(|| format!("reading fit config {}", path.display()))?,
        None => {
            let base = if args.log_loss { FitConfig::language() } else { FitConfig::vision() };
            FitConfig {
                huber_delta: args.delta.unwrap_or(base.huber_delta),
                num_starts: args.starts,
                max_iterations: args.max_iterations,
                ..base
            }
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    } else if args.config.is_none() {
        config.seed = 0;
    }
    let result = if args.sparsity_only {
        let dense = CoeffSource {
            coeffs: args.dense_coeffs.clone(),
            builtin: args.dense_builtin.clone(),
        }
        .load()
        .context("--sparsity-only needs --dense-coeffs or --dense-builtin")?;
        fit_sparsity_only(&data, &dense, &config)?
    } else {
        fit_full(&data, &config)?
    };
    if !result.converged {
        eprintln!(
            "{}",
            json!({"warning": "not-converged", "message": "no start met the optimizer's termination tolerance"})
        );
    }
    if let Some(path) = &args.report {
        write_json(&result, Some(path))?;
    }
    if let Some(path) = &args.residuals {
        let mut out = open_output(Some(path))?;
        write_residuals(&data, &result, &mut out)?;
        out.flush()?;
    }
    write_json(&result.coefficients, args.output.as_deref())
}

fn contour(args: ContourArgs) -> anyhow::Result<()> {
    let coeffs = args.source.load()?;
    let model = args.cost.model()?;
    if !(args.min_params > 0.0 && args.max_params >= args.min_params) || args.points == 0 {
        bail!(UsageError("need 0 < --min-params <= --max-params and --points >= 1".into()));
    }
    let sizes = log_space(args.min_params, args.max_params, args.points);
    let contours = args
        .sparsity
        .iter()
        .map(|&s| match args.method {
            Method::Closed => sparsity_contour(&coeffs, &model, s, &sizes),
            Method::Numeric => sparsity_contour_numeric(&coeffs, &model, s, &sizes),
        })
        .collect::<Result<Vec<Contour>, _>>()?;
    let frontier = chinchilla_frontier(&coeffs, &model, &sizes)?;

    let mut out = open_output(args.output.as_deref())?;
    write_contours(&contours, &mut out)?;
    out.flush()?;
    if let Some(path) = &args.frontier {
        let mut out = open_output(Some(path))?;
        write_contours(std::slice::from_ref(&frontier), &mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.svg {
        let svg = emit_contour_plot(&contours, Some(&frontier))?;
        std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_contours(contours: &[Contour], out: impl Write) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sparsity", "N", "D", "C", "loss"])?;
    for c in contours {
        for p in &c.points {
            w.write_record([num(p.sparsity), num(p.params), num(p.data), num(p.compute), num(p.loss)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let preset = args.preset.as_str();
    let mut grid = match (preset, args.data_per_step) {
        ("vit" | "vit-jft", Some(k)) => SweepGrid::vit_with(k),
        ("t5" | "t5-c4", Some(k)) => SweepGrid::t5_with(k),
        (name, _) => SweepGrid::preset(name)
            .ok_or_else(|| UsageError(format!("unknown preset {name:?}; expected vit or t5")))?,
    };
    let fallback = if preset.starts_with("vit") { "vit-jft" } else { "t5-c4" };
    let truth = args.source.load_or(Some(fallback))?;
    if let Some(levels) = args.sparsities {
        grid.sparsity_levels = levels;
    }
    grid.pattern = args.pattern.unwrap_or_else(|| truth.pattern.clone());
    let data = simulate_sweep(&truth, &grid, args.noise, args.seed)?;
    let mut out = open_output(args.output.as_deref())?;
    match args.format {
        TableFormat::Csv => write_run_table(&data, &mut out)?,
        TableFormat::Json => write_run_table_json(&data, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn prune(args: PruneArgs) -> anyhow::Result<()> {
    let mut input = open_input(&args.input)?;
    let tensor = match args.input_format {
        TensorFormat::Binary => MaskedTensor::read_from(&mut input)?,
        TensorFormat::Text => {
            let mut text = String::new();
            input.read_to_string(&mut text)?;
            let values = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().with_context(|| format!("{t:?} is not a number")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            MaskedTensor::dense(values)
        }
    };
    let mask = match args.pattern {
        Some(p) => nm_gradual_mask(tensor.values(), p, args.sparsity)?,
        None => gmp_mask(tensor.values(), args.sparsity)?,
    };
    let group = args.pattern.or(tensor.group());
    let pruned = apply_mask(&MaskedTensor::new(tensor.values().to_vec(), mask, group)?);
    match &args.output {
        Some(path) => {
            let mut out = open_output(Some(path))?;
            pruned.write_to(&mut out)?;
            out.flush()?;
            print_lines([json!({
                "len": pruned.len(),
                "kept": pruned.mask().kept_count(),
                "sparsity": pruned.mask().sparsity(),
            })
            .to_string()])
        }
        None => print_lines([pruned
            .mask()
            .as_slice()
            .iter()
            .map(|&k| if k { '1' } else { '0' })
            .collect::<String>()]),
    }
}

fn train_toy(args: TrainToyArgs) -> anyhow::Result<()> {
    let problem = RegressionProblem::generate(args.rows, args.dim, args.seed)?;
    let sched = PruneSchedule {
        start_frac: args.start,
        end_frac: args.end,
        update_every: args.update_every,
        final_sparsity: args.final_sparsity,
        cubic_exponent: 3,
    };
    let opt = RelativeLr {
        base_lr: args.base_lr,
        epsilon: args.epsilon,
        clip_threshold: (!args.no_clip).then_some(args.clip),
    };
    let trace = toy_train(&problem, &sched, &opt, args.pattern, args.steps)?;
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["step", "sparsity", "loss", "rms"])?;
    for r in &trace.rows {
        w.write_record([r.step.to_string(), num(r.sparsity), num(r.loss), num(r.rms)])?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(args) => fit(args),
        Command::Predict(a) => {
            let c = a.source.load()?;
            print_lines([num(eval_law(&c, a.sparsity, a.params, a.data)?)])
        }
        Command::Invert(a) => {
            let c = a.source.load()?;
            let value = match (a.params, a.data) {
                (Some(n), _) => invert_for_data(&c, a.loss, a.sparsity, n)?,
                (None, Some(d)) => invert_for_size(&c, a.loss, a.sparsity, d)?,
                (None, None) => unreachable!("clap requires one of --params/--data"),
            };
            print_lines([num(value)])
        }
        Command::Gain(a) => {
            let c = a.source.load()?;
            let values = a.sparsity.iter().map(|&s| gain(&c, s).map(num)).collect::<Result<Vec<_>, _>>()?;
            print_lines(values)
        }
        Command::Cmul(a) => {
            let default = a.schedule_start == 0.25 && a.schedule_end == 0.75 && a.schedule_exponent == 3;
            let model = CostModel {
                schedule_start: a.schedule_start,
                schedule_end: a.schedule_end,
                cubic_exponent: a.schedule_exponent,
                ..CostModel::sparse()
            };
            let values = a
                .sparsity
                .iter()
                .map(|&s| if default { cmul(s) } else { model.multiplier(s) }.map(num))
                .collect::<Result<Vec<_>, _>>()?;
            print_lines(values)
        }
        Command::OptimalSparsity(a) => {
            let c = a.source.load()?;
            let model = a.cost.model()?;
            let s = match a.method {
                Method::Closed => optimal_sparsity_closed(&c, &model, a.params, a.compute)?,
                Method::Numeric => optimal_sparsity_numeric(&c, &model, a.params, a.compute)?,
            };
            print_lines([num(s)])
        }
        Command::Contour(args) => contour(args),
        Command::Chinchilla(a) => {
            let c = a.source.load()?;
            let model = a.cost.model()?;
            let mut w = csv::Writer::from_writer(open_output(None)?);
            w.write_record(["compute", "N", "D", "loss"])?;
            for &budget in &a.compute {
                let (n, d) = chinchilla_optimal(&c, &model, budget)?;
                w.write_record([num(budget), num(n), num(d), num(eval_law(&c, 0.0, n, d)?)])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Simulate(args) => simulate(args),
        Command::Prune(args) => prune(args),
        Command::TrainToy(args) => train_toy(args),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sparselaw::Error>() {
            return e.kind();
        }
        if let Some(e) = cause.downcast_ref::<TableError>() {
            return match e {
                TableError::Io(io) if io.kind() == io::ErrorKind::NotFound => "file-not-found",
                other => other.kind(),
            };
        }
        if let Some(e) = cause.downcast_ref::<PlotError>() {
            return e.kind();
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return "usage";
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return if e.kind() == io::ErrorKind::NotFound { "file-not-found" } else { "io" };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return "invalid-json";
        }
    }
    "error"
}

fn report(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) {
                return ExitCode::SUCCESS;
            }
            report(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
