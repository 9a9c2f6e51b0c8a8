//! Feedforward match scorer over the 11 distance features.
//!
//! Every hidden and output unit uses the Elliot activation. The network is
//! trained with full-batch iRPROP- on mean squared error against labels where
//! 1 means "same word"; a higher score is a better match.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{feature_vector, squared_distance, FeatureVector, N_FEATURES};
use crate::geometry::KeyboardLayout;
use crate::lexicon::Lexicon;
use crate::pruning::{prune_candidates, PruneOptions, RadixTree};
use crate::trajectory::{perfect_vector, random_vector, InputModelConfig, InputVector};

pub const LAYER_SIZES: [usize; 6] = [11, 11, 11, 11, 2, 1];
pub const STEEPNESS: f64 = 0.5;

#[inline]
pub fn elliot(x: f64, s: f64) -> f64 {
    0.5 * s * x / (1.0 + s * x.abs()) + 0.5
}

#[inline]
fn elliot_derivative(x: f64, s: f64) -> f64 {
    let d = 1.0 + s * x.abs();
    0.5 * s / (d * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major, `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    steepness: f64,
    mean: [f64; N_FEATURES],
    std: [f64; N_FEATURES],
}

impl Network {
    /// Zero weights, identity normalization. `sizes` runs input to output.
    pub fn zeros(sizes: &[usize], steepness: f64) -> Result<Network> {
        if sizes.len() < 2 || sizes[0] != N_FEATURES || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must start with {N_FEATURES} and end with 1, got {sizes:?}"
            )));
        }
        if !(steepness > 0.0 && steepness.is_finite()) {
            return Err(Error::invalid("steepness must be positive"));
        }
        Ok(Network {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            steepness,
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        })
    }

    /// The standard 11-11-11-11-2-1 network with weights uniform in [-0.5, 0.5].
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Network {
        let mut net = Network::zeros(&LAYER_SIZES, STEEPNESS).expect("valid default architecture");
        for layer in &mut net.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-0.5..=0.5);
            }
        }
        net
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn normalization(&self) -> (&[f64; N_FEATURES], &[f64; N_FEATURES]) {
        (&self.mean, &self.std)
    }

    /// Sets per-feature mean and population standard deviation from `data`.
    pub fn fit_normalization(&mut self, data: &[TrainingPair]) {
        if data.is_empty() {
            return;
        }
        let n = data.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        for p in data {
            for (m, v) in mean.iter_mut().zip(p.features.to_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; N_FEATURES];
        for p in data {
            for ((s, v), m) in var.iter_mut().zip(p.features.to_array()).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        self.mean = mean;
        self.std = var.map(f64::sqrt);
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    #[inline]
    fn normalize(&self, f: &FeatureVector) -> [f64; N_FEATURES] {
        let mut x = f.to_array();
        for i in 0..N_FEATURES {
            if self.std[i] > 0.0 {
                x[i] = (x[i] - self.mean[i]) / self.std[i];
            }
        }
        x
    }

    /// Match score in (0, 1).
    pub fn forward(&self, f: &FeatureVector) -> f64 {
        let x = self.normalize(f);
        let mut cur: Vec<f64> = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let a = row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>() + layer.biases[o];
                next.push(elliot(a, self.steepness));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Adds d(loss term)/d(params) for one sample to `grad` (flattened as
    /// layer by layer, weights then biases) scaled by `scale`, and returns the score.
    fn accumulate_gradient(&self, f: &FeatureVector, label: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let s = self.steepness;
        let x = self.normalize(f);
        // forward, keeping pre-activations and activations
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let input = acts.last().unwrap();
            let mut z = Vec::with_capacity(layer.outputs);
            let mut a = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let v = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + layer.biases[o];
                z.push(v);
                a.push(elliot(v, s));
            }
            pre.push(z);
            acts.push(a);
        }
        let y = acts.last().unwrap()[0];
        // backward
        let mut delta = vec![2.0 * (y - label) * scale * elliot_derivative(pre.last().unwrap()[0], s)];
        let mut offset = self.param_count();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            offset -= layer.param_count();
            let input = &acts[li];
            let (gw, gb) = grad[offset..offset + layer.param_count()].split_at_mut(layer.weights.len());
            for o in 0..layer.outputs {
                let d = delta[o];
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&pre[li - 1]) {
                    *p *= elliot_derivative(*z, s);
                }
                delta = prev;
            }
        }
        y
    }

    /// Weights then biases of each layer, in layer order. This is the
    /// parameter order of `gradient`.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = p[i];
                i += 1;
            }
        }
        Ok(())
    }

    /// Mean squared error between scores and labels.
    pub fn mse(&self, data: &[TrainingPair]) -> f64 {
        let sum = data
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|p| (self.forward(&p.features) - p.label).powi(2)).sum::<f64>())
            .collect::<Vec<_>>();
        neumaier_sum(sum.into_iter()) / data.len() as f64
    }

    /// Full-batch gradient of the MSE and the loss at the current parameters.
    /// Chunks are fixed-size and combined in order, so the result does not
    /// depend on the number of worker threads.
    pub fn gradient(&self, data: &[TrainingPair]) -> (Vec<f64>, f64) {
        let n = self.param_count();
        let scale = 1.0 / data.len() as f64;
        let partials: Vec<(Vec<f64>, f64)> = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; n];
                let mut loss = 0.0;
                for p in chunk {
                    let y = self.accumulate_gradient(&p.features, p.label, scale, &mut g);
                    loss += (y - p.label).powi(2);
                }
                (g, loss)
            })
            .collect();
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            *g = neumaier_sum(partials.iter().map(|(p, _)| p[i]));
        }
        let loss = neumaier_sum(partials.iter().map(|(_, l)| *l)) * scale;
        (grad, loss)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sizes = self.layer_sizes();
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "layers {}", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
        writeln!(out, "steepness {}", self.steepness).unwrap();
        writeln!(out, "{}", join(&mut self.mean.iter().copied())).unwrap();
        writeln!(out, "{}", join(&mut self.std.iter().copied())).unwrap();
        for l in &self.layers {
            writeln!(out, "{}", join(&mut l.weights.iter().copied())).unwrap();
            writeln!(out, "{}", join(&mut l.biases.iter().copied())).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Network> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next_line = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("model file truncated: missing {what}")))
        };
        let numbers = |lineno: usize, line: &str, expected: usize, what: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::line(lineno, format!("invalid number `{t}`")))
                })
                .collect::<Result<_>>()?;
            if v.len() != expected {
                return Err(Error::line(lineno, format!("expected {expected} {what}, found {}", v.len())));
            }
            Ok(v)
        };

        let (ln, line) = next_line("layers")?;
        let sizes: Vec<usize> = match line.strip_prefix("layers ") {
            Some(rest) => rest
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::line(ln, format!("invalid layer size `{t}`"))))
                .collect::<Result<_>>()?,
            None => return Err(Error::line(ln, "expected `layers ...`")),
        };
        let (ln, line) = next_line("steepness")?;
        let steepness: f64 = line
            .strip_prefix("steepness ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::line(ln, "expected `steepness <value>`"))?;
        let mut net = Network::zeros(&sizes, steepness).map_err(|e| Error::Parse(e.to_string()))?;

        let (ln, line) = next_line("normalization means")?;
        net.mean.copy_from_slice(&numbers(ln, line, N_FEATURES, "means")?);
        let (ln, line) = next_line("normalization stds")?;
        net.std.copy_from_slice(&numbers(ln, line, N_FEATURES, "standard deviations")?);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (ln, line) = next_line(&format!("weights of layer {}", i + 1))?;
            layer.weights = numbers(ln, line, layer.inputs * layer.outputs, "weights")?;
            let (ln, line) = next_line(&format!("biases of layer {}", i + 1))?;
            layer.biases = numbers(ln, line, layer.outputs, "biases")?;
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(Error::line(ln, format!("unexpected trailing content `{extra}`")));
        }
        Ok(net)
    }
}

const CHUNK: usize = 2048;

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpropParams {
    pub increase: f64,
    pub decrease: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        RpropParams {
            increase: 1.2,
            decrease: 0.5,
            initial_step: 0.1,
            min_step: 1e-6,
            max_step: 50.0,
        }
    }
}

/// iRPROP- over the full batch. Returns the trained network and the loss
/// measured at the start of each epoch.
pub fn train_rprop(
    net: &Network,
    data: &[TrainingPair],
    epochs: usize,
    hyper: &RpropParams,
) -> Result<(Network, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let mut net = net.clone();
    let mut params = net.params();
    let mut steps = vec![hyper.initial_step; params.len()];
    let mut prev = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (mut grad, loss) = net.gradient(data);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("loss became {loss} at epoch {epoch}")));
        }
        trace.push(loss);
        for i in 0..params.len() {
            let sign = prev[i] * grad[i];
            if sign > 0.0 {
                steps[i] = (steps[i] * hyper.increase).min(hyper.max_step);
            } else if sign < 0.0 {
                steps[i] = (steps[i] * hyper.decrease).max(hyper.min_step);
                grad[i] = 0.0;
            }
            if grad[i] > 0.0 {
                params[i] -= steps[i];
            } else if grad[i] < 0.0 {
                params[i] += steps[i];
            }
            prev[i] = grad[i];
        }
        net.set_params(&params)?;
    }
    Ok((net, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCategory {
    Same,
    Random,
    Similar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub features: FeatureVector,
    pub label: f64,
    pub category: PairCategory,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<TrainingPair>,
    /// Similar-word pairs that fell back to a random word because the
    /// pruned candidate set held nothing but the word itself.
    pub similar_fallbacks: usize,
    pub origins: Vec<PairOrigin>,
}

/// Where a training pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOrigin {
    /// Word behind the noisy vector.
    pub noisy: u32,
    /// Word behind the perfect vector.
    pub perfect: u32,
    pub layout: usize,
    /// Seed of the candidate search for similar-word pairs.
    pub prune_seed: Option<u64>,
}

/// Number of same / random / similar pairs for `total`.
pub fn category_split(total: usize) -> (usize, usize, usize) {
    let same = (total * 3).div_ceil(10);
    let random = (total * 2).div_ceil(10);
    (same, random, total - same - random)
}

pub const SIMILAR_PRUNING_VECTORS: usize = 20;
/// Similar words are drawn from this many pruned candidates nearest to the
/// noisy vector, so the network sees the confusions it has to resolve.
pub const SIMILAR_NEAREST: usize = 5;

/// Pairs of (noisy vector of word a, perfect linear vector of word b).
/// Pair `i` uses `configs[i % configs.len()]` for the noisy vector and a
/// uniformly chosen layout from `layouts`. Similar words come from the
/// radix-pruned candidates of word a, restricted to the `SIMILAR_NEAREST`
/// closest to the noisy vector.
pub fn build_training_set<R: Rng + ?Sized>(
    lex: &Lexicon,
    tree: &RadixTree,
    layouts: &[KeyboardLayout],
    configs: &[InputModelConfig],
    total: usize,
    rng: &mut R,
) -> Result<TrainingSet> {
    if total < 10 {
        return Err(Error::invalid("at least 10 training pairs are required"));
    }
    if lex.len() < 2 {
        return Err(Error::invalid("training needs a lexicon with at least two words"));
    }
    if layouts.is_empty() || configs.is_empty() {
        return Err(Error::invalid("need at least one layout and one input model"));
    }
    let (n_same, n_random, _) = category_split(total);
    let mut pairs = Vec::with_capacity(total);
    let mut origins = Vec::with_capacity(total);
    let mut fallbacks = 0;
    for i in 0..total {
        let cfg = &configs[i % configs.len()];
        let layout_idx = rng.random_range(0..layouts.len());
        let layout = &layouts[layout_idx];
        let mut prune_seed = None;
        let a = lex.sample_id(rng);
        let noisy = random_vector(lex.word(a), layout, cfg, rng)?;
        let wanted = if i < n_same {
            PairCategory::Same
        } else if i < n_same + n_random {
            PairCategory::Random
        } else {
            PairCategory::Similar
        };
        let mut category = wanted;
        let b = match wanted {
            PairCategory::Same => a,
            PairCategory::Similar => {
                let seed: u64 = rng.random();
                prune_seed = Some(seed);
                let pruned = prune_candidates(
                    lex.word(a),
                    layout,
                    cfg,
                    SIMILAR_PRUNING_VECTORS,
                    tree,
                    PruneOptions::default(),
                    &mut ChaCha8Rng::seed_from_u64(seed),
                )?;
                let others = nearest_others(lex, layout, &noisy, a, &pruned.ids, cfg.n_points)?;
                match others.choose(rng) {
                    Some(&b) => b,
                    None => {
                        fallbacks += 1;
                        category = PairCategory::Random;
                        sample_other(lex, a, rng)
                    }
                }
            }
            PairCategory::Random => sample_other(lex, a, rng),
        };
        let perfect = perfect_vector(lex.word(b), layout, cfg.n_points)?;
        pairs.push(TrainingPair {
            features: feature_vector(&noisy, &perfect)?,
            label: if a == b { 1.0 } else { 0.0 },
            category,
        });
        origins.push(PairOrigin {
            noisy: a,
            perfect: b,
            layout: layout_idx,
            prune_seed,
        });
    }
    Ok(TrainingSet {
        pairs,
        similar_fallbacks: fallbacks,
        origins,
    })
}

/// Random initialization, normalization fitted to `set`, then iRPROP-.
pub fn train_network<R: Rng + ?Sized>(
    set: &TrainingSet,
    epochs: usize,
    hyper: &RpropParams,
    rng: &mut R,
) -> Result<(Network, Vec<f64>)> {
    let mut net = Network::random(rng);
    net.fit_normalization(&set.pairs);
    train_rprop(&net, &set.pairs, epochs, hyper)
}

/// The `SIMILAR_NEAREST` candidates other than `a` whose perfect vectors are
/// closest to `noisy`.
fn nearest_others(
    lex: &Lexicon,
    layout: &KeyboardLayout,
    noisy: &InputVector,
    a: u32,
    candidates: &[u32],
    n_points: usize,
) -> Result<Vec<u32>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for &id in candidates.iter().filter(|&&id| id != a) {
        let d = squared_distance(noisy, &perfect_vector(lex.word(id), layout, n_points)?);
        scored.push((d, id));
    }
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(scored.into_iter().take(SIMILAR_NEAREST).map(|(_, id)| id).collect())
}

fn sample_other<R: Rng + ?Sized>(lex: &Lexicon, a: u32, rng: &mut R) -> u32 {
    loop {
        let b = lex.sample_id(rng);
        if b != a {
            return b;
        }
    }
}
