//! Gesture trajectories: noisy control points, interpolation and arc-length
//! resampling into fixed-length input vectors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{letter_index, KeyboardLayout};

/// Dense samples per control-point interval before arc-length resampling.
pub const OVERSAMPLING: usize = 32;

/// Sigma as a fraction of `sqrt(A_key)`.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.25;
pub const DEFAULT_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interpolation {
    Linear,
    NaturalCubic,
    CubicHermite,
    MonotoneCubicHermite,
    /// Natural cubic interior with straight first and last segments.
    StraightEndedNaturalCubic,
}

impl Interpolation {
    pub const ALL: [Interpolation; 5] = [
        Interpolation::Linear,
        Interpolation::NaturalCubic,
        Interpolation::CubicHermite,
        Interpolation::MonotoneCubicHermite,
        Interpolation::StraightEndedNaturalCubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Interpolation::Linear => "linear",
            Interpolation::NaturalCubic => "natural",
            Interpolation::CubicHermite => "hermite",
            Interpolation::MonotoneCubicHermite => "monotone",
            Interpolation::StraightEndedNaturalCubic => "straight-ended",
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Interpolation::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!("unknown interpolation `{s}` (expected linear, natural, hermite, monotone or straight-ended)")
            })
    }
}

/// How `sigma_x`/`sigma_y` are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    /// Layout units, identical for every key.
    #[default]
    Absolute,
    /// Multiples of each key's own width and height.
    KeyExtent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputModelConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_mode: SigmaMode,
    /// Correlation of offsets between subsequent control points.
    pub rho: f64,
    pub interpolation: Interpolation,
    pub n_points: usize,
}

impl InputModelConfig {
    /// `sigma = 0.25 * sqrt(A_key)` for the given layout, uncorrelated, 50 points.
    pub fn for_layout(layout: &KeyboardLayout, interpolation: Interpolation) -> Self {
        let sigma = DEFAULT_SIGMA_FRACTION * layout.mean_key_area().sqrt();
        InputModelConfig {
            sigma_x: sigma,
            sigma_y: sigma,
            sigma_mode: SigmaMode::Absolute,
            rho: 0.0,
            interpolation,
            n_points: DEFAULT_POINTS,
        }
    }

    /// Sigmas proportional to each key's horizontal and vertical extent.
    pub fn key_extent(interpolation: Interpolation) -> Self {
        InputModelConfig {
            sigma_x: DEFAULT_SIGMA_FRACTION,
            sigma_y: DEFAULT_SIGMA_FRACTION,
            sigma_mode: SigmaMode::KeyExtent,
            rho: 0.0,
            interpolation,
            n_points: DEFAULT_POINTS,
        }
    }

    pub fn noiseless(interpolation: Interpolation) -> Self {
        InputModelConfig {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_mode: SigmaMode::Absolute,
            rho: 0.0,
            interpolation,
            n_points: DEFAULT_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x >= 0.0 && self.sigma_y >= 0.0) {
            return Err(Error::invalid("sigmas must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [-1, 1]"));
        }
        if self.n_points < 2 {
            return Err(Error::invalid("n_points must be at least 2"));
        }
        Ok(())
    }
}

/// A fixed-length gesture sample with implicit unit time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector {
    points: Vec<Point>,
}

impl InputVector {
    pub fn new(points: Vec<Point>) -> Self {
        InputVector { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    /// Length of the sampled polyline.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> InputVector {
        InputVector::new(self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,x,y\n");
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", p.x, p.y));
        }
        out
    }
}

pub(crate) fn check_word(word: &str) -> Result<()> {
    if word.is_empty() {
        return Err(Error::invalid("empty word"));
    }
    if let Some(c) = word.chars().find(|&c| letter_index(c).is_none()) {
        return Err(Error::invalid(format!("word `{word}` contains `{c}` outside a-z")));
    }
    Ok(())
}

/// Key-center control points for `word`, each displaced by a Gaussian offset.
/// Successive offsets follow `z' = rho*z + sqrt(1 - rho^2)*N(0,1)` per axis.
pub fn control_points<R: Rng + ?Sized>(
    word: &str,
    layout: &KeyboardLayout,
    cfg: &InputModelConfig,
    rng: &mut R,
) -> Result<Vec<Point>> {
    check_word(word)?;
    let fresh = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let (mut zx, mut zy) = (0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(word.len());
    for (k, c) in word.bytes().enumerate() {
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        if k == 0 {
            zx = gx;
            zy = gy;
        } else {
            zx = cfg.rho * zx + fresh * gx;
            zy = cfg.rho * zy + fresh * gy;
        }
        let key = layout.key_by_index((c - b'a') as usize);
        let (sx, sy) = match cfg.sigma_mode {
            SigmaMode::Absolute => (cfg.sigma_x, cfg.sigma_y),
            SigmaMode::KeyExtent => (cfg.sigma_x * key.width, cfg.sigma_y * key.height),
        };
        out.push(Point::new(key.center_x + sx * zx, key.center_y + sy * zy));
    }
    Ok(out)
}

fn key_centers(word: &str, layout: &KeyboardLayout) -> Result<Vec<Point>> {
    check_word(word)?;
    Ok(word
        .bytes()
        .map(|c| {
            let k = layout.key_by_index((c - b'a') as usize);
            Point::new(k.center_x, k.center_y)
        })
        .collect())
}

/// Dense polyline through every control point, in order.
pub fn interpolate(ctrl: &[Point], method: Interpolation) -> Vec<Point> {
    assert!(!ctrl.is_empty(), "interpolation needs at least one control point");
    let mut pts: Vec<Point> = Vec::with_capacity(ctrl.len());
    for &p in ctrl {
        if pts.last().is_none_or(|q: &Point| q.dist(p) > 1e-12) {
            pts.push(p);
        }
    }
    let straight = match method {
        Interpolation::Linear => true,
        // first and last segments cover everything
        Interpolation::StraightEndedNaturalCubic => pts.len() <= 3,
        _ => pts.len() <= 2,
    };
    if straight {
        return pts;
    }

    // Chordal parameterization.
    let h: Vec<f64> = pts.windows(2).map(|w| w[0].dist(w[1])).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let (mx, my) = match method {
        Interpolation::Linear => unreachable!(),
        Interpolation::NaturalCubic => (natural_tangents(&xs, &h), natural_tangents(&ys, &h)),
        Interpolation::CubicHermite => (catmull_rom_tangents(&xs, &h), catmull_rom_tangents(&ys, &h)),
        Interpolation::MonotoneCubicHermite => (monotone_tangents(&xs, &h), monotone_tangents(&ys, &h)),
        Interpolation::StraightEndedNaturalCubic => {
            (straight_ended_tangents(&xs, &h), straight_ended_tangents(&ys, &h))
        }
    };

    let mut dense = Vec::with_capacity(h.len() * OVERSAMPLING + 1);
    for (i, &hi) in h.iter().enumerate() {
        for j in 0..OVERSAMPLING {
            let u = j as f64 / OVERSAMPLING as f64;
            dense.push(Point::new(
                hermite(xs[i], xs[i + 1], mx[i], mx[i + 1], hi, u),
                hermite(ys[i], ys[i + 1], my[i], my[i + 1], hi, u),
            ));
        }
    }
    dense.push(*pts.last().unwrap());
    dense
}

#[inline]
fn hermite(p0: f64, p1: f64, m0: f64, m1: f64, h: f64, u: f64) -> f64 {
    if u == 0.0 {
        return p0;
    }
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1
}

fn secants(y: &[f64], h: &[f64]) -> Vec<f64> {
    y.windows(2).zip(h).map(|(w, &hi)| (w[1] - w[0]) / hi).collect()
}

/// Solves the C2 tangent system `m_{i-1}/h_{i-1} + 2(1/h_{i-1} + 1/h_i) m_i + m_{i+1}/h_i = rhs`
/// on knots `lo..=hi`, with first and last rows given.
fn solve_tangents(
    d: &[f64],
    h: &[f64],
    first: (f64, f64, f64),
    last: (f64, f64, f64),
    lo: usize,
    hi: usize,
) -> Vec<f64> {
    let n = hi - lo + 1;
    let mut a = vec![0.0; n]; // sub
    let mut b = vec![0.0; n]; // diag
    let mut c = vec![0.0; n]; // super
    let mut r = vec![0.0; n];
    (b[0], c[0], r[0]) = first;
    (a[n - 1], b[n - 1], r[n - 1]) = last;
    for k in 1..n - 1 {
        let i = lo + k;
        let (hl, hr) = (h[i - 1], h[i]);
        a[k] = 1.0 / hl;
        b[k] = 2.0 * (1.0 / hl + 1.0 / hr);
        c[k] = 1.0 / hr;
        r[k] = 3.0 * (d[i - 1] / hl + d[i] / hr);
    }
    // Thomas algorithm
    for k in 1..n {
        let w = a[k] / b[k - 1];
        b[k] -= w * c[k - 1];
        r[k] -= w * r[k - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = r[n - 1] / b[n - 1];
    for k in (0..n - 1).rev() {
        m[k] = (r[k] - c[k] * m[k + 1]) / b[k];
    }
    m
}

fn natural_tangents(y: &[f64], h: &[f64]) -> Vec<f64> {
    let d = secants(y, h);
    let n = y.len();
    solve_tangents(&d, h, (2.0, 1.0, 3.0 * d[0]), (1.0, 2.0, 3.0 * d[n - 2]), 0, n - 1)
}

fn straight_ended_tangents(y: &[f64], h: &[f64]) -> Vec<f64> {
    let d = secants(y, h);
    let n = y.len();
    debug_assert!(n >= 4);
    let (s0, s1) = (d[0], d[n - 2]);
    let inner = solve_tangents(&d, h, (1.0, 0.0, s0), (0.0, 1.0, s1), 1, n - 2);
    let mut m = Vec::with_capacity(n);
    m.push(s0);
    m.extend(inner);
    m.push(s1);
    m
}

fn catmull_rom_tangents(y: &[f64], h: &[f64]) -> Vec<f64> {
    let d = secants(y, h);
    let n = y.len();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = (y[i + 1] - y[i - 1]) / (h[i - 1] + h[i]);
    }
    m
}

/// Fritsch–Carlson limited tangents.
fn monotone_tangents(y: &[f64], h: &[f64]) -> Vec<f64> {
    let d = secants(y, h);
    let n = y.len();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 {
            0.0
        } else {
            0.5 * (d[i - 1] + d[i])
        };
    }
    for k in 0..n - 1 {
        if d[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let alpha = m[k] / d[k];
        let beta = m[k + 1] / d[k];
        let s = alpha * alpha + beta * beta;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * alpha * d[k];
            m[k + 1] = tau * beta * d[k];
        }
    }
    m
}

/// `n_points` samples evenly spaced by arc length, endpoints included.
pub fn resample(curve: &[Point], n_points: usize) -> InputVector {
    assert!(n_points >= 2, "n_points must be at least 2");
    assert!(!curve.is_empty(), "cannot resample an empty curve");
    let mut cum = Vec::with_capacity(curve.len());
    let mut total = 0.0;
    cum.push(0.0);
    for w in curve.windows(2) {
        total += w[0].dist(w[1]);
        cum.push(total);
    }
    if total == 0.0 {
        return InputVector::new(vec![curve[0]; n_points]);
    }
    let mut out = Vec::with_capacity(n_points);
    out.push(curve[0]);
    let mut seg = 0;
    let step = total / (n_points - 1) as f64;
    for i in 1..n_points - 1 {
        let s = step * i as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (curve[seg], curve[seg + 1]);
        out.push(Point::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)));
    }
    out.push(*curve.last().unwrap());
    InputVector::new(out)
}

/// Noise-free linear trajectory through the key centers of `word`.
pub fn perfect_vector(word: &str, layout: &KeyboardLayout, n_points: usize) -> Result<InputVector> {
    let ctrl = key_centers(word, layout)?;
    Ok(resample(&interpolate(&ctrl, Interpolation::Linear), n_points))
}

pub fn random_vector<R: Rng + ?Sized>(
    word: &str,
    layout: &KeyboardLayout,
    cfg: &InputModelConfig,
    rng: &mut R,
) -> Result<InputVector> {
    let ctrl = control_points(word, layout, cfg, rng)?;
    Ok(resample(&interpolate(&ctrl, cfg.interpolation), cfg.n_points))
}
