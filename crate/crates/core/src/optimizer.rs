//! Stochastic key-swap search over layouts.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{error_rate_mc, trial_rng, EvalConfig, ErrorEstimate};
use crate::geometry::{KeyboardLayout, LETTERS};
use crate::lexicon::Lexicon;
use crate::pruning::RadixTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// Strictly better; ties lose.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Minimize => candidate < incumbent,
            Direction::Maximize => candidate > incumbent,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "minimize" => Ok(Direction::Minimize),
            "max" | "maximize" => Ok(Direction::Maximize),
            _ => Err(Error::invalid(format!("unknown direction `{s}`"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Minimize => "min",
            Direction::Maximize => "max",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub iterations: usize,
    /// Swap pairs per step at the start.
    pub n_start: usize,
    /// Steps between decrements of the swap count.
    pub decrement_interval: usize,
    pub direction: Direction,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::new(200, 6, Direction::Minimize).unwrap()
    }
}

impl Schedule {
    pub fn new(iterations: usize, n_start: usize, direction: Direction) -> Result<Schedule> {
        if iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if n_start == 0 || 2 * n_start > LETTERS {
            return Err(Error::invalid(format!("n_start must lie in 1..={}", LETTERS / 2)));
        }
        Ok(Schedule {
            iterations,
            n_start,
            decrement_interval: (iterations / n_start).max(1),
            direction,
        })
    }

    /// Swap pairs used at 0-based step `iteration`.
    pub fn swaps_at(&self, iteration: usize) -> usize {
        self.n_start.saturating_sub(iteration / self.decrement_interval).max(1)
    }
}

/// Anything that scores a layout. `seed` selects the randomness of one
/// evaluation.
pub trait Objective: Sync {
    fn evaluate(&self, layout: &KeyboardLayout, seed: u64) -> Result<ErrorEstimate>;
}

/// Monte Carlo error rate as the objective.
pub struct McObjective<'a> {
    pub lex: &'a Lexicon,
    pub tree: &'a RadixTree,
    pub cfg: EvalConfig,
}

impl Objective for McObjective<'_> {
    fn evaluate(&self, layout: &KeyboardLayout, seed: u64) -> Result<ErrorEstimate> {
        let cfg = EvalConfig {
            seed,
            ..self.cfg.clone()
        };
        error_rate_mc(layout, self.lex, &cfg, self.tree)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based step.
    pub iteration: usize,
    pub n_swaps: usize,
    pub accepted: bool,
    /// Error of the proposed layout.
    pub candidate_error: f64,
    /// Incumbent error and its uncertainty after this step.
    pub error: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct OptRun {
    pub start: KeyboardLayout,
    pub best: KeyboardLayout,
    pub initial: ErrorEstimate,
    pub trace: Vec<TraceRow>,
    pub seed: u64,
}

impl OptRun {
    pub fn final_error(&self) -> f64 {
        self.trace.last().map_or(self.initial.rate, |r| r.error)
    }

    /// Incumbent error before the first step and after every step.
    pub fn error_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial.rate)
            .chain(self.trace.iter().map(|r| r.error))
            .collect()
    }
}

/// Sorted key geometry without letters.
fn slots(layout: &KeyboardLayout) -> Vec<[u64; 4]> {
    let mut s: Vec<[u64; 4]> = layout
        .keys()
        .iter()
        .map(|k| [k.center_x.to_bits(), k.center_y.to_bits(), k.width.to_bits(), k.height.to_bits()])
        .collect();
    s.sort_unstable();
    s
}

/// Accept/reject search from `start`. Each step swaps `n` disjoint letter
/// pairs of the incumbent and keeps the result only on strict improvement.
pub fn optimize<R: Rng + ?Sized>(
    start: &KeyboardLayout,
    objective: &dyn Objective,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<OptRun> {
    let reference = slots(start);
    let initial = objective.evaluate(start, rng.random())?;
    let mut best = start.clone();
    let (mut error, mut sigma) = (initial.rate, initial.sigma);
    let mut trace = Vec::with_capacity(schedule.iterations);
    for iteration in 0..schedule.iterations {
        let n = schedule.swaps_at(iteration);
        let picked = sample(rng, LETTERS, 2 * n).into_vec();
        let mut candidate = best.clone();
        for pair in picked.chunks_exact(2) {
            candidate.swap_indices(pair[0], pair[1]);
        }
        assert!(slots(&candidate) == reference, "swap broke the key permutation");
        let est = objective.evaluate(&candidate, rng.random())?;
        let accepted = schedule.direction.improves(est.rate, error);
        if accepted {
            best = candidate;
            error = est.rate;
            sigma = est.sigma;
        }
        trace.push(TraceRow {
            iteration: iteration + 1,
            n_swaps: n,
            accepted,
            candidate_error: est.rate,
            error,
            sigma,
        });
    }
    Ok(OptRun {
        start: start.clone(),
        best,
        initial,
        trace,
        seed: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub const TRACE_HEADER: &str = "restart,iteration,n_swaps,accepted,e,sigma";
pub const SUMMARY_HEADER: &str = "iteration,min,mean,max";

/// Per-step min, mean and max of the incumbent error across runs, starting
/// with the initial errors at iteration 0.
pub fn summarize(runs: &[OptRun]) -> Vec<SummaryRow> {
    let curves: Vec<Vec<f64>> = runs.iter().map(OptRun::error_curve).collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col = curves.iter().map(|c| c[i]);
            SummaryRow {
                iteration: i,
                min: col.clone().fold(f64::INFINITY, f64::min),
                mean: col.clone().sum::<f64>() / curves.len() as f64,
                max: col.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn trace_csv(runs: &[OptRun]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for (r, run) in runs.iter().enumerate() {
        for row in &run.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r, row.iteration, row.n_swaps, row.accepted as u8, row.error, row.sigma
            ));
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iteration, r.min, r.mean, r.max));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start<'a> {
    /// Every restart begins at this layout.
    Layout(&'a KeyboardLayout),
    /// Each restart begins at its own random permutation of these key slots.
    Shuffled(&'a KeyboardLayout),
}

/// Independent seeded runs, executed concurrently. Run `r` uses the
/// generator for stream `r` of `seed`.
pub fn multi_start(
    restarts: usize,
    start: Start<'_>,
    objective: &dyn Objective,
    schedule: &Schedule,
    seed: u64,
) -> Result<(Vec<OptRun>, Vec<SummaryRow>)> {
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let runs = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = trial_rng(seed, r as u64);
            let from = match start {
                Start::Layout(l) => l.clone(),
                Start::Shuffled(l) => l.shuffled(&mut rng).with_name(format!("{}-shuffled-{r}", l.name())),
            };
            let mut run = optimize(&from, objective, schedule, &mut rng)?;
            run.seed = seed;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok((runs, summary))
}
