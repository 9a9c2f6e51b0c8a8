//! Command-line interface. Exit codes: 0 success, 1 runtime or IO failure,
//! 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{build_training_set, train_network, Network, RpropParams};
use crate::evaluation::{error_rate_mc, EvalConfig, Mode, CSV_HEADER};
use crate::geometry::{builtin_layout, KeyboardLayout};
use crate::lexicon::{parse_wordlist, Lexicon, DEMO, ENGLISH};
use crate::optimizer::{multi_start, summary_csv, trace_csv, Direction, McObjective, Schedule, Start};
use crate::pruning::{DeadSpace, RadixTree};
use crate::recognition::Scorer;
use crate::trajectory::{InputModelConfig, Interpolation, DEFAULT_SIGMA_FRACTION};

/// Total key area every layout is scaled to before comparison.
pub const COMPARE_AREA: f64 = 26.0;

#[derive(Parser, Debug)]
#[command(name = "gesturebench", version, about = "Monte Carlo evaluation of keyboard layouts for gesture typing")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "GESTUREBENCH_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the error rate of one layout.
    Evaluate {
        /// Layout file or built-in name (qwerty, dvorak, alphabetic).
        #[arg(long, default_value = "qwerty")]
        layout: String,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Search for a layout with lower (or higher) error.
    Optimize {
        #[arg(long, default_value = "qwerty")]
        layout: String,
        /// Start each restart from a random permutation of the layout's keys.
        #[arg(long)]
        random_start: bool,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        iterations: u64,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=13))]
        n_start: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        restarts: u64,
        #[arg(long, value_enum, default_value_t = DirectionArg::Min)]
        direction: DirectionArg,
        /// Directory for trace.csv, summary.csv and layout files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train a network scorer.
    Train {
        #[arg(long, default_value = "english")]
        lexicon: String,
        #[arg(long)]
        top: Option<usize>,
        /// Comma-separated layout files or built-in names.
        #[arg(long, default_value = "qwerty", value_delimiter = ',')]
        layout: Vec<String>,
        /// Extra random permutations of the first layout to train on.
        #[arg(long, default_value_t = 0)]
        random_layouts: usize,
        #[arg(long, default_value_t = 50_000, value_parser = clap::value_parser!(u64).range(10..))]
        pairs: u64,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV (default: model path with .loss.csv appended).
        #[arg(long)]
        loss_out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate several layouts at equal total key area, best first.
    Compare {
        /// Comma-separated layout files or built-in names, or one directory.
        #[arg(long, value_delimiter = ',', required = true)]
        layouts: Vec<String>,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Lexicon file (`word count` per line) or built-in `english` / `demo`.
    #[arg(long, default_value = "english")]
    pub lexicon: String,
    /// Keep only the most frequent words.
    #[arg(long)]
    pub top: Option<usize>,
    /// Keep only words present in this list (repeatable).
    #[arg(long)]
    pub wordlist: Vec<PathBuf>,
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Radix)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 20)]
    pub radix_vectors: usize,
    #[arg(long, value_enum, default_value_t = ScorerArg::Euclidean)]
    pub scorer: ScorerArg,
    /// Model file for the network scorer.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub input: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Input model flags.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = SigmaModeArg::Area)]
    pub sigma_mode: SigmaModeArg,
    /// Noise as a fraction of sqrt(mean key area) or of key extent.
    #[arg(long, default_value_t = DEFAULT_SIGMA_FRACTION)]
    pub sigma: f64,
    /// Correlation between offsets of consecutive letters.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Comma-separated interpolation methods, or `all`.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    pub interp: Vec<String>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    pub points: u64,
    #[arg(long, value_enum, default_value_t = DeadSpaceArg::Skip)]
    pub dead_space: DeadSpaceArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Brute,
    Radix,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerArg {
    Euclidean,
    Network,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaModeArg {
    Area,
    Extent,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionArg {
    Min,
    Max,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadSpaceArg {
    Skip,
    Snap,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    // commands write into buffers so they can run inside the pool
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let result = pool.install(|| dispatch(cli.command, &mut o, &mut e));
    let _ = out.write_all(&o);
    let _ = err.write_all(&e);
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Evaluate { layout, eval } => cmd_evaluate(&layout, &eval, out),
        Command::Optimize {
            layout,
            random_start,
            iterations,
            n_start,
            restarts,
            direction,
            out: dir,
            eval,
        } => {
            let direction = match direction {
                DirectionArg::Min => Direction::Minimize,
                DirectionArg::Max => Direction::Maximize,
            };
            let schedule = Schedule::new(iterations as usize, n_start as usize, direction)?;
            cmd_optimize(&layout, random_start, &schedule, restarts as usize, &dir, &eval, out)
        }
        Command::Train {
            lexicon,
            top,
            layout,
            random_layouts,
            pairs,
            epochs,
            out: model_out,
            loss_out,
            model,
            seed,
        } => {
            let loss_out = loss_out.unwrap_or_else(|| {
                let mut p = model_out.clone().into_os_string();
                p.push(".loss.csv");
                p.into()
            });
            let lex = load_lexicon(&lexicon, top, &[])?;
            let base: Vec<KeyboardLayout> = layout.iter().map(|l| load_layout(l)).collect::<anyhow::Result<_>>()?;
            if base.is_empty() {
                return Err(usage("at least one layout is required"));
            }
            cmd_train(&lex, base, random_layouts, pairs as usize, epochs, &model, seed, &model_out, &loss_out, out, err)
        }
        Command::Compare { layouts, eval } => cmd_compare(&layouts, &eval, out),
    }
}

/// Built-in name or layout file.
pub fn load_layout(spec: &str) -> anyhow::Result<KeyboardLayout> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map_or(spec.into(), |s| s.to_string_lossy().replace(',', "_"));
        return KeyboardLayout::parse(name, &text).with_context(|| format!("parsing {}", path.display()));
    }
    builtin_layout(spec).with_context(|| format!("`{spec}` is neither a file nor a built-in layout"))
}

pub fn load_lexicon(spec: &str, top: Option<usize>, wordlists: &[PathBuf]) -> CmdResult2<Lexicon> {
    let mut lex = match spec {
        "english" => Lexicon::parse(ENGLISH)?,
        "demo" => Lexicon::parse(DEMO)?,
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading lexicon {path}"))?;
            Lexicon::parse(&text).with_context(|| format!("parsing lexicon {path}"))?
        }
    };
    if !wordlists.is_empty() {
        let lists = wordlists
            .iter()
            .map(|p| {
                fs::read_to_string(p)
                    .map(|t| parse_wordlist(&t))
                    .with_context(|| format!("reading word list {}", p.display()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        lex = lex.filter_by_wordlists(&lists);
    }
    if let Some(k) = top {
        if k == 0 {
            return Err(usage("--top must be at least 1"));
        }
        lex = lex.truncate_top(k).0;
    }
    if lex.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("lexicon is empty after filtering")));
    }
    Ok(lex)
}

type CmdResult2<T> = std::result::Result<T, Failure>;

fn interpolations(list: &[String]) -> CmdResult2<Vec<Interpolation>> {
    if list.iter().any(|s| s == "all") {
        return Ok(Interpolation::ALL.to_vec());
    }
    let mut out = Vec::new();
    for s in list {
        let m: Interpolation = s.parse().map_err(usage)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(usage("--interp needs at least one method"));
    }
    Ok(out)
}

/// Input model configs for `layout`, one per interpolation method.
pub fn model_configs(args: &ModelArgs, layout: &KeyboardLayout) -> CmdResult2<Vec<InputModelConfig>> {
    if !(args.sigma >= 0.0 && args.sigma.is_finite()) {
        return Err(usage("--sigma must be a non-negative number"));
    }
    if !(-1.0..=1.0).contains(&args.rho) {
        return Err(usage("--rho must lie in [-1, 1]"));
    }
    let configs = interpolations(&args.interp)?
        .into_iter()
        .map(|m| {
            let mut c = match args.sigma_mode {
                SigmaModeArg::Area => InputModelConfig::for_layout(layout, m),
                SigmaModeArg::Extent => InputModelConfig::key_extent(m),
            };
            let scale = args.sigma / DEFAULT_SIGMA_FRACTION;
            c.sigma_x *= scale;
            c.sigma_y *= scale;
            c.rho = args.rho;
            c.n_points = args.points as usize;
            c
        })
        .collect();
    Ok(configs)
}

fn dead_space(arg: DeadSpaceArg) -> DeadSpace {
    match arg {
        DeadSpaceArg::Skip => DeadSpace::Skip,
        DeadSpaceArg::Snap => DeadSpace::Snap,
    }
}

/// Validated evaluation settings. Input model configs are filled in per
/// layout later.
fn eval_config(args: &EvalArgs) -> CmdResult2<EvalConfig> {
    let mode = match args.mode {
        ModeArg::Brute => Mode::Brute,
        ModeArg::Radix if args.radix_vectors == 0 => return Err(usage("--radix-vectors must be at least 1")),
        ModeArg::Radix => Mode::Radix(args.radix_vectors),
    };
    let scorer = match (args.scorer, &args.model) {
        (ScorerArg::Euclidean, _) => Scorer::Euclidean,
        (ScorerArg::Network, None) => return Err(usage("--scorer network requires --model")),
        (ScorerArg::Network, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
            Scorer::Network(Network::parse(&text).with_context(|| format!("parsing model {}", path.display()))?)
        }
    };
    // catch bad interpolation names before any file IO below
    interpolations(&args.input.interp)?;
    let mut cfg = EvalConfig::new(args.trials as usize, mode, scorer, Vec::new(), args.seed);
    cfg.prune.dead_space = dead_space(args.input.dead_space);
    Ok(cfg)
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], "_")
}

fn cmd_evaluate(layout: &str, args: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = eval_config(args)?;
    let layout = load_layout(layout)?;
    let lex = load_lexicon(&args.lexicon, args.top, &args.wordlist)?;
    cfg.configs = model_configs(&args.input, &layout)?;
    let tree = RadixTree::build(&lex);
    let mut est = error_rate_mc(&layout, &lex, &cfg, &tree)?;
    est.layout = csv_field(&est.layout);
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "{}", est.to_csv_row())?;
    Ok(())
}

fn cmd_optimize(
    layout: &str,
    random_start: bool,
    schedule: &Schedule,
    restarts: usize,
    dir: &Path,
    args: &EvalArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let mut cfg = eval_config(args)?;
    let layout = load_layout(layout)?;
    let lex = load_lexicon(&args.lexicon, args.top, &args.wordlist)?;
    cfg.configs = model_configs(&args.input, &layout)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    // fail early on an unwritable directory
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, "").with_context(|| format!("writing {}", trace_path.display()))?;

    let tree = RadixTree::build(&lex);
    let objective = McObjective {
        lex: &lex,
        tree: &tree,
        cfg,
    };
    let start = if random_start {
        Start::Shuffled(&layout)
    } else {
        Start::Layout(&layout)
    };
    let (runs, summary) = multi_start(restarts, start, &objective, schedule, args.seed)?;

    let write = |name: &str, text: String| -> anyhow::Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write("trace.csv", trace_csv(&runs))?;
    write("summary.csv", summary_csv(&summary))?;
    for (r, run) in runs.iter().enumerate() {
        write(&format!("best_{r}.layout"), run.best.to_text())?;
    }
    let overall = runs
        .iter()
        .min_by(|a, b| {
            let (x, y) = (a.final_error(), b.final_error());
            match schedule.direction {
                Direction::Minimize => x.total_cmp(&y),
                Direction::Maximize => y.total_cmp(&x),
            }
        })
        .expect("at least one restart");
    write("best.layout", overall.best.clone().with_name("best").to_text())?;

    let first = summary.first().map_or(f64::NAN, |r| r.mean);
    let last = summary.last().map_or(f64::NAN, |r| r.mean);
    writeln!(out, "direction,restarts,iterations,initial_mean,final_mean,relative_change")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        schedule.direction,
        restarts,
        schedule.iterations,
        first,
        last,
        if first > 0.0 { (last - first) / first } else { 0.0 }
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    lex: &Lexicon,
    mut layouts: Vec<KeyboardLayout>,
    random_layouts: usize,
    pairs: usize,
    epochs: usize,
    model: &ModelArgs,
    seed: u64,
    model_out: &Path,
    loss_out: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    if lex.len() < 2 {
        return Err(usage("training needs at least two words"));
    }
    let configs = model_configs(model, &layouts[0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..random_layouts {
        let l = layouts[0].shuffled(&mut rng).with_name(format!("random-{i}"));
        layouts.push(l);
    }
    let tree = RadixTree::build(lex);
    let set = build_training_set(lex, &tree, &layouts, &configs, pairs, &mut rng)?;
    if set.similar_fallbacks > 0 {
        writeln!(err, "note: {} similar pairs fell back to random words", set.similar_fallbacks)?;
    }
    let (net, losses) = train_network(&set, epochs, &RpropParams::default(), &mut rng)?;
    let final_mse = net.mse(&set.pairs);
    fs::write(model_out, net.to_text()).with_context(|| format!("writing {}", model_out.display()))?;
    let mut csv = String::from("epoch,mse\n");
    for (i, l) in losses.iter().chain(std::iter::once(&final_mse)).enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    fs::write(loss_out, csv).with_context(|| format!("writing {}", loss_out.display()))?;
    writeln!(out, "final_mse,{final_mse}")?;
    Ok(())
}

/// Expands a single directory argument into its files, sorted.
fn layout_specs(specs: &[String]) -> CmdResult2<Vec<String>> {
    let specs: Vec<String> = specs.iter().filter(|s| !s.trim().is_empty()).cloned().collect();
    if specs.is_empty() {
        return Err(usage("--layouts needs at least one layout"));
    }
    if let [one] = specs.as_slice() {
        let p = Path::new(one);
        if p.is_dir() {
            let mut files: Vec<String> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(usage(format!("no layout files in {}", p.display())));
            }
            return Ok(files);
        }
    }
    Ok(specs)
}

fn cmd_compare(specs: &[String], args: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let specs = layout_specs(specs)?;
    let mut cfg = eval_config(args)?;
    let layouts = specs
        .iter()
        .map(|s| Ok(load_layout(s)?.normalize_area(COMPARE_AREA)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let lex = load_lexicon(&args.lexicon, args.top, &args.wordlist)?;
    let tree = RadixTree::build(&lex);
    let mut rows = Vec::with_capacity(layouts.len());
    for layout in &layouts {
        cfg.configs = model_configs(&args.input, layout)?;
        let est = error_rate_mc(layout, &lex, &cfg, &tree)?;
        rows.push((csv_field(layout.name()), est.rate, est.sigma));
    }
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    writeln!(out, "layout,e,sigma")?;
    for (name, e, s) in rows {
        writeln!(out, "{name},{e},{s}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let mut full = vec!["gesturebench"];
        full.extend_from_slice(args);
        let code = run_with(full, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["evaluate", "--mode", "radix", "--radix-vectors", "0"]).0, 2);
        assert_eq!(run_capture(&["evaluate", "--scorer", "network"]).0, 2);
        assert_eq!(run_capture(&["evaluate", "--interp", "cubic"]).0, 2);
        assert_eq!(run_capture(&["evaluate", "--trials", "0"]).0, 2);
        assert_eq!(run_capture(&["train", "--pairs", "5", "--out", "x"]).0, 2);
        assert_eq!(run_capture(&["compare", "--layouts", ""]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
    }

    #[test]
    fn missing_files_exit_1() {
        let (code, _, err) = run_capture(&["evaluate", "--layout", "/nonexistent/layout.txt", "--trials", "5"]);
        assert_eq!(code, 1);
        assert!(err.contains("neither a file nor a built-in"), "{err}");
        assert_eq!(run_capture(&["evaluate", "--lexicon", "/nonexistent.txt", "--trials", "5"]).0, 1);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("evaluate"));
    }

    #[test]
    fn evaluate_is_deterministic() {
        let args = ["evaluate", "--layout", "qwerty", "--lexicon", "demo", "--trials", "100", "--seed", "7"];
        let (c1, o1, _) = run_capture(&args);
        let (c2, o2, _) = run_capture(&args);
        assert_eq!((c1, c2), (0, 0));
        assert_eq!(o1.lines().next().unwrap(), CSV_HEADER);
        let strip = |s: &str| s.lines().nth(1).unwrap().rsplit_once(',').unwrap().0.to_string();
        assert_eq!(strip(&o1), strip(&o2));
        assert!(strip(&o1).starts_with("qwerty,radix,euclidean,100,"));
    }
}
