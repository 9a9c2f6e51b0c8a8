//! Distances between input vectors: the Euclidean baseline and the
//! 11-element squared-distance feature set fed to the classifier.

use crate::error::{Error, Result};
use crate::trajectory::InputVector;

pub const N_FEATURES: usize = 11;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "d2_x", "d2_y", "d2_dx", "d2_dy", "d2_ddx", "d2_ddy", "d2_first_x", "d2_first_y", "d2_last_x",
    "d2_last_y", "dlen2",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub d2_x: f64,
    pub d2_y: f64,
    pub d2_dx: f64,
    pub d2_dy: f64,
    pub d2_ddx: f64,
    pub d2_ddy: f64,
    pub d2_first_x: f64,
    pub d2_first_y: f64,
    pub d2_last_x: f64,
    pub d2_last_y: f64,
    /// Signed: `len(a)^2 - len(b)^2`.
    pub dlen2: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.d2_x,
            self.d2_y,
            self.d2_dx,
            self.d2_dy,
            self.d2_ddx,
            self.d2_ddy,
            self.d2_first_x,
            self.d2_first_y,
            self.d2_last_x,
            self.d2_last_y,
            self.dlen2,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            d2_x: a[0],
            d2_y: a[1],
            d2_dx: a[2],
            d2_dy: a[3],
            d2_ddx: a[4],
            d2_ddy: a[5],
            d2_first_x: a[6],
            d2_first_y: a[7],
            d2_last_x: a[8],
            d2_last_y: a[9],
            dlen2: a[10],
        }
    }

    pub fn csv_header() -> String {
        FEATURE_NAMES.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.to_array().iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }
}

fn check_lengths(a: &InputVector, b: &InputVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "input vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Square root of the summed squared point distances.
pub fn euclidean_distance(a: &InputVector, b: &InputVector) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(squared_distance(a, b).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &InputVector, b: &InputVector) -> f64 {
    let (dx, dy) = component_sums(a, b);
    dx + dy
}

#[inline]
fn component_sums(a: &InputVector, b: &InputVector) -> (f64, f64) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (p, q) in a.points().iter().zip(b.points()) {
        let dx = p.x - q.x;
        let dy = p.y - q.y;
        sx += dx * dx;
        sy += dy * dy;
    }
    (sx, sy)
}

/// First and second forward differences per axis, `[x, y]` each.
pub fn finite_differences(v: &InputVector) -> Result<([Vec<f64>; 2], [Vec<f64>; 2])> {
    if v.len() < 3 {
        return Err(Error::invalid("finite differences need at least 3 points"));
    }
    let p = v.points();
    let dx: Vec<f64> = p.windows(2).map(|w| w[1].x - w[0].x).collect();
    let dy: Vec<f64> = p.windows(2).map(|w| w[1].y - w[0].y).collect();
    let ddx = dx.windows(2).map(|w| w[1] - w[0]).collect();
    let ddy = dy.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(([dx, dy], [ddx, ddy]))
}

pub fn feature_vector(a: &InputVector, b: &InputVector) -> Result<FeatureVector> {
    check_lengths(a, b)?;
    if a.len() < 3 {
        return Err(Error::invalid("feature vectors need at least 3 points"));
    }
    Ok(features_unchecked(a, b))
}

/// Single pass over both vectors; lengths must match and be at least 3.
pub(crate) fn features_unchecked(a: &InputVector, b: &InputVector) -> FeatureVector {
    let pa = a.points();
    let pb = b.points();
    let n = pa.len();
    let (mut d2_x, mut d2_y) = (0.0, 0.0);
    let (mut d2_dx, mut d2_dy) = (0.0, 0.0);
    let (mut d2_ddx, mut d2_ddy) = (0.0, 0.0);
    let (mut len_a, mut len_b) = (0.0, 0.0);
    // difference of the two vectors' first differences at the previous step
    let (mut prev_ex, mut prev_ey) = (0.0, 0.0);
    for i in 0..n {
        let ex = pa[i].x - pb[i].x;
        let ey = pa[i].y - pb[i].y;
        d2_x += ex * ex;
        d2_y += ey * ey;
        if i + 1 < n {
            let (ax, ay) = (pa[i + 1].x - pa[i].x, pa[i + 1].y - pa[i].y);
            let (bx, by) = (pb[i + 1].x - pb[i].x, pb[i + 1].y - pb[i].y);
            len_a += ax.hypot(ay);
            len_b += bx.hypot(by);
            let gx = ax - bx;
            let gy = ay - by;
            d2_dx += gx * gx;
            d2_dy += gy * gy;
            if i > 0 {
                let hx = gx - prev_ex;
                let hy = gy - prev_ey;
                d2_ddx += hx * hx;
                d2_ddy += hy * hy;
            }
            prev_ex = gx;
            prev_ey = gy;
        }
    }
    let sq = |v: f64| v * v;
    FeatureVector {
        d2_x,
        d2_y,
        d2_dx,
        d2_dy,
        d2_ddx,
        d2_ddy,
        d2_first_x: sq(pa[0].x - pb[0].x),
        d2_first_y: sq(pa[0].y - pb[0].y),
        d2_last_x: sq(pa[n - 1].x - pb[n - 1].x),
        d2_last_y: sq(pa[n - 1].y - pb[n - 1].y),
        dlen2: len_a * len_a - len_b * len_b,
    }
}
