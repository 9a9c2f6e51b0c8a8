//! Monte Carlo estimation of gesture recognition error rates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::KeyboardLayout;
use crate::lexicon::Lexicon;
use crate::pruning::{prune_candidates, PruneOptions, RadixTree};
use crate::recognition::{Recognizer, Scorer};
use crate::trajectory::{random_vector, InputModelConfig};

pub const DEFAULT_TRIALS: usize = 5000;
pub const PRECISE_TRIALS: usize = 20_000;
pub const DEFAULT_RADIX_VECTORS: usize = 20;

pub const CSV_HEADER: &str = "layout,mode,scorer,N,n,e,sigma,seconds";

/// Binomial standard error of the rate `n / trials`.
pub fn uncertainty(n: usize, trials: usize) -> f64 {
    assert!(trials >= 1 && n <= trials, "need 0 <= n <= N and N >= 1");
    let e = n as f64 / trials as f64;
    (e * (1.0 - e) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Brute,
    /// Candidates from the string forms of `k` random vectors.
    Radix(usize),
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Brute => "brute",
            Mode::Radix(_) => "radix",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub trials: usize,
    pub mode: Mode,
    pub scorer: Scorer,
    /// Trial `i` uses `configs[i % configs.len()]`.
    pub configs: Vec<InputModelConfig>,
    pub seed: u64,
    pub prune: PruneOptions,
}

impl EvalConfig {
    pub fn new(trials: usize, mode: Mode, scorer: Scorer, configs: Vec<InputModelConfig>, seed: u64) -> Self {
        EvalConfig {
            trials,
            mode,
            scorer,
            configs,
            seed,
            prune: PruneOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.mode == Mode::Radix(0) {
            return Err(Error::invalid("radix mode needs at least one vector"));
        }
        let first = self
            .configs
            .first()
            .ok_or_else(|| Error::invalid("at least one input model config is required"))?;
        for c in &self.configs {
            c.validate()?;
            if c.n_points != first.n_points {
                return Err(Error::invalid("all configs must use the same number of points"));
            }
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.configs[0].n_points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub layout: String,
    pub mode: String,
    pub scorer: String,
    pub n: usize,
    pub trials: usize,
    pub rate: f64,
    pub sigma: f64,
    /// Radix trials where the intended word had to be added by hand.
    pub forced_inclusions: usize,
    pub wall_time: f64,
}

impl ErrorEstimate {
    pub fn from_counts(n: usize, trials: usize) -> ErrorEstimate {
        ErrorEstimate {
            layout: String::new(),
            mode: String::new(),
            scorer: String::new(),
            n,
            trials,
            rate: n as f64 / trials as f64,
            sigma: uncertainty(n, trials),
            forced_inclusions: 0,
            wall_time: 0.0,
        }
    }

    /// Sums errors and trials of several estimates.
    pub fn pooled(parts: &[ErrorEstimate]) -> ErrorEstimate {
        let n = parts.iter().map(|p| p.n).sum();
        let trials = parts.iter().map(|p| p.trials).sum();
        let mut out = ErrorEstimate::from_counts(n, trials);
        out.forced_inclusions = parts.iter().map(|p| p.forced_inclusions).sum();
        out.wall_time = parts.iter().map(|p| p.wall_time).sum();
        if let Some(p) = parts.first() {
            out.mode = p.mode.clone();
            out.scorer = p.scorer.clone();
        }
        out.layout = "pooled".into();
        out
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.layout, self.mode, self.scorer, self.trials, self.n, self.rate, self.sigma, self.wall_time
        )
    }

    pub fn parse_csv_row(row: &str) -> Result<ErrorEstimate> {
        let f: Vec<&str> = row.trim().split(',').collect();
        if f.len() != 8 {
            return Err(Error::Parse(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
        };
        let int = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
        };
        let trials = int(f[3], "N")?;
        let n = int(f[4], "n")?;
        if trials == 0 || n > trials {
            return Err(Error::Parse(format!("need 0 <= n <= N and N >= 1, got n={n} N={trials}")));
        }
        let rate = num(f[5], "e")?;
        let sigma = num(f[6], "sigma")?;
        let expect = ErrorEstimate::from_counts(n, trials);
        if (rate - expect.rate).abs() > 1e-9 || (sigma - expect.sigma).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "e/sigma ({rate}, {sigma}) inconsistent with n={n} N={trials}"
            )));
        }
        Ok(ErrorEstimate {
            layout: f[0].into(),
            mode: f[1].into(),
            scorer: f[2].into(),
            wall_time: num(f[7], "seconds")?,
            ..expect
        })
    }
}

/// Generator for trial `index` of a run seeded with `seed`. Independent of
/// which worker runs the trial.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Default, Clone, Copy)]
struct Tally {
    errors: usize,
    forced: usize,
}

/// Estimates the error rate of `layout` by simulating `cfg.trials` gestures.
/// `tree` must be built from `lex`. A trial without candidates counts as an
/// error.
pub fn error_rate_mc(layout: &KeyboardLayout, lex: &Lexicon, cfg: &EvalConfig, tree: &RadixTree) -> Result<ErrorEstimate> {
    cfg.validate()?;
    if lex.is_empty() {
        return Err(Error::invalid("empty lexicon"));
    }
    if tree.len() != lex.len() {
        return Err(Error::invalid("radix tree was built from a different lexicon"));
    }
    let start = Instant::now();
    let recognizer = Recognizer::new(layout, lex, &cfg.scorer, cfg.n_points());
    let everything: Vec<u32> = match cfg.mode {
        Mode::Brute => (0..lex.len() as u32).collect(),
        Mode::Radix(_) => Vec::new(),
    };
    let m = cfg.configs.len();

    let trial = |i: usize| -> Result<Tally> {
        let mut rng = trial_rng(cfg.seed, i as u64);
        let model = &cfg.configs[i % m];
        let id = lex.sample_id(&mut rng);
        let word = lex.word(id);
        let v = random_vector(word, layout, model, &mut rng)?;
        let mut forced = 0;
        let guess = match cfg.mode {
            Mode::Brute => recognizer.recognize(&v, &everything),
            Mode::Radix(k) => {
                let pruned = prune_candidates(word, layout, model, k, tree, cfg.prune, &mut rng)?;
                forced = pruned.forced as usize;
                recognizer.recognize(&v, &pruned.ids)
            }
        };
        let errors = match guess {
            Ok(g) => (g != id) as usize,
            Err(Error::NoCandidates) => 1,
            Err(e) => return Err(e),
        };
        Ok(Tally { errors, forced })
    };

    let total = (0..cfg.trials)
        .into_par_iter()
        .map(trial)
        .try_reduce(Tally::default, |a, b| {
            Ok(Tally {
                errors: a.errors + b.errors,
                forced: a.forced + b.forced,
            })
        })?;

    let mut est = ErrorEstimate::from_counts(total.errors, cfg.trials);
    est.layout = layout.name().to_string();
    est.mode = cfg.mode.name().to_string();
    est.scorer = cfg.scorer.name().to_string();
    est.forced_inclusions = total.forced;
    est.wall_time = start.elapsed().as_secs_f64();
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub size: usize,
    pub mode: Mode,
    pub seconds: f64,
    pub estimate: ErrorEstimate,
}

pub const SCALING_HEADER: &str = "size,mode,seconds,e,sigma";

impl ScalingRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{},{}",
            self.size, self.mode, self.seconds, self.estimate.rate, self.estimate.sigma
        )
    }
}

/// Times brute-force and radix evaluation on the top `sizes` words of `lex`.
/// The mode in `cfg` is ignored; radix runs use `k` vectors.
pub fn benchmark_scaling(
    layout: &KeyboardLayout,
    lex: &Lexicon,
    sizes: &[usize],
    cfg: &EvalConfig,
    k: usize,
) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        if size == 0 || size > lex.len() {
            return Err(Error::invalid(format!("size {size} outside 1..={}", lex.len())));
        }
        let (sub, _) = lex.truncate_top(size);
        let tree = RadixTree::build(&sub);
        for mode in [Mode::Brute, Mode::Radix(k)] {
            let c = EvalConfig { mode, ..cfg.clone() };
            let estimate = error_rate_mc(layout, &sub, &c, &tree)?;
            rows.push(ScalingRow {
                size,
                mode,
                seconds: estimate.wall_time,
                estimate,
            });
        }
    }
    Ok(rows)
}

impl FromStr for Mode {
    type Err = Error;

    /// Accepts `brute`, `radix` (default vector count) or `radix:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(Mode::Brute),
            "radix" => Ok(Mode::Radix(DEFAULT_RADIX_VECTORS)),
            _ => match s.strip_prefix("radix:").map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(Mode::Radix(k)),
                _ => Err(Error::invalid(format!("unknown mode `{s}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_layout, Key, KeyShape, LETTERS};
    use crate::trajectory::{Interpolation, SigmaMode};

    #[test]
    fn binomial_sigma() {
        assert_eq!(uncertainty(0, 10), 0.0);
        assert_eq!(uncertainty(10, 10), 0.0);
        assert!((uncertainty(2500, 5000) - 0.007_071_067_8).abs() < 1e-9);
        assert!((uncertainty(50, 100) - 0.05).abs() < 1e-15);
        let e = ErrorEstimate::from_counts(765, 5000);
        assert!((e.rate - 0.153).abs() < 1e-15);
        // sqrt(0.153 * 0.847 / 5000)
        assert!((e.sigma - 0.005_091_3).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip_and_sigma_check() {
        let mut e = ErrorEstimate::from_counts(37, 400);
        e.layout = "qwerty".into();
        e.mode = "radix".into();
        e.scorer = "euclidean".into();
        e.wall_time = 1.25;
        let row = e.to_csv_row();
        assert_eq!(ErrorEstimate::parse_csv_row(&row).unwrap(), e);
        assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
        let bad = row.replace(",37,", ",38,");
        assert!(ErrorEstimate::parse_csv_row(&bad).is_err());
        assert!(ErrorEstimate::parse_csv_row("a,b,c").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("brute".parse::<Mode>().unwrap(), Mode::Brute);
        assert_eq!("radix".parse::<Mode>().unwrap(), Mode::Radix(20));
        assert_eq!("radix:7".parse::<Mode>().unwrap(), Mode::Radix(7));
        assert!("fast".parse::<Mode>().is_err());
    }

    fn small() -> (KeyboardLayout, Lexicon, RadixTree) {
        let lex = Lexicon::parse(crate::lexicon::DEMO).unwrap().truncate_top(200).0;
        let tree = RadixTree::build(&lex);
        (builtin_layout("qwerty").unwrap(), lex, tree)
    }

    #[test]
    fn noiseless_brute_force_is_perfect() {
        let (q, lex, tree) = small();
        // distinct perfect vectors are required for zero errors
        let mut seen = Vec::new();
        let lex = Lexicon::from_entries(
            lex.iter()
                .filter(|(w, _)| {
                    let p = crate::trajectory::perfect_vector(w, &q, 50).unwrap();
                    let fresh = !seen.contains(&p);
                    seen.push(p);
                    fresh
                })
                .map(|(w, c)| (w.to_string(), c)),
        )
        .unwrap();
        let tree = if tree.len() == lex.len() { tree } else { RadixTree::build(&lex) };
        let cfg = EvalConfig::new(
            300,
            Mode::Brute,
            Scorer::Euclidean,
            vec![InputModelConfig::noiseless(Interpolation::Linear)],
            3,
        );
        let e = error_rate_mc(&q, &lex, &cfg, &tree).unwrap();
        assert_eq!(e.n, 0);
        let cfg = EvalConfig { mode: Mode::Radix(3), ..cfg };
        assert_eq!(error_rate_mc(&q, &lex, &cfg, &tree).unwrap().n, 0);
    }

    #[test]
    fn same_result_for_any_thread_count() {
        let (q, lex, tree) = small();
        let cfg = EvalConfig::new(
            200,
            Mode::Radix(5),
            Scorer::Euclidean,
            Interpolation::ALL.iter().map(|&i| InputModelConfig::for_layout(&q, i)).collect(),
            11,
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| error_rate_mc(&q, &lex, &cfg, &tree).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!((a.n, a.trials, a.forced_inclusions), (b.n, b.trials, b.forced_inclusions));
        let c = error_rate_mc(&q, &lex, &EvalConfig { seed: 12, ..cfg.clone() }, &tree).unwrap();
        assert_eq!(c.trials, 200);
    }

    #[test]
    fn rejects_bad_configs() {
        let (q, lex, tree) = small();
        let base = EvalConfig::new(10, Mode::Brute, Scorer::Euclidean, vec![InputModelConfig::for_layout(&q, Interpolation::Linear)], 0);
        assert!(error_rate_mc(&q, &lex, &EvalConfig { trials: 0, ..base.clone() }, &tree).is_err());
        assert!(error_rate_mc(&q, &lex, &EvalConfig { mode: Mode::Radix(0), ..base.clone() }, &tree).is_err());
        assert!(error_rate_mc(&q, &lex, &EvalConfig { configs: vec![], ..base.clone() }, &tree).is_err());
        let other = RadixTree::build(&lex.truncate_top(5).0);
        assert!(error_rate_mc(&q, &lex, &base, &other).is_err());
    }

    /// Two one-letter words on keys one unit apart, isotropic noise with
    /// sigma 0.5. The nearest-center rule errs when the offset along the
    /// axis joining the keys exceeds half the distance: P = Phi(-1).
    #[test]
    fn converges_to_analytic_confusion() {
        let mut keys = Vec::with_capacity(LETTERS);
        for i in 0..LETTERS {
            let letter = crate::geometry::index_letter(i);
            let (x, y) = match letter {
                'a' => (0.5, 0.5),
                'i' => (1.5, 0.5),
                _ => (0.5 + i as f64, 10.5),
            };
            keys.push(Key {
                letter,
                center_x: x,
                center_y: y,
                width: 1.0,
                height: 1.0,
                shape: KeyShape::Rectangle,
            });
        }
        let layout = KeyboardLayout::new("pair", keys).unwrap();
        let lex = Lexicon::parse("a 3\ni 1").unwrap();
        let tree = RadixTree::build(&lex);
        let model = InputModelConfig {
            sigma_x: 0.5,
            sigma_y: 0.5,
            sigma_mode: SigmaMode::Absolute,
            rho: 0.0,
            interpolation: Interpolation::Linear,
            n_points: 50,
        };
        let cfg = EvalConfig::new(10_000, Mode::Brute, Scorer::Euclidean, vec![model], 99);
        let e = error_rate_mc(&layout, &lex, &cfg, &tree).unwrap();
        const PHI_MINUS_ONE: f64 = 0.158_655_253_931_457;
        assert!(
            (e.rate - PHI_MINUS_ONE).abs() < 3.0 * e.sigma,
            "rate {} vs {} (sigma {})",
            e.rate,
            PHI_MINUS_ONE,
            e.sigma
        );
    }
}
