//! Training targets and the corner objective: Gaussian-softened corner
//! heatmaps, sub-stride offset targets, the focal variant used for heatmaps
//! and smooth-L1 for offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictions are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

/// Weights of the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Focusing exponent on the prediction.
    pub alpha: f64,
    /// Exponent of the penalty reduction around positives.
    pub beta: f64,
    /// Weight of the offset term.
    pub lambda: f64,
    /// Minimum IoU a displaced corner pair must keep; sets the Gaussian radius.
    pub d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            lambda: 1.0,
            d: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Param("alpha and beta must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Param("lambda must be non-negative".into()));
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::Param("d must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

// The three displacement cases, written as IoU >= d without division.
fn shrink_ok(w: f64, h: f64, d: f64, r: f64) -> bool {
    (w - 2.0 * r).max(0.0) * (h - 2.0 * r).max(0.0) >= d * w * h
}
fn expand_ok(w: f64, h: f64, d: f64, r: f64) -> bool {
    w * h >= d * (w + 2.0 * r) * (h + 2.0 * r)
}
fn translate_ok(w: f64, h: f64, d: f64, r: f64) -> bool {
    let inter = (w - r).max(0.0) * (h - r).max(0.0);
    inter >= d * (2.0 * w * h - inter)
}
fn radius_ok(w: f64, h: f64, d: f64, r: f64) -> bool {
    shrink_ok(w, h, d, r) && expand_ok(w, h, d, r) && translate_ok(w, h, d, r)
}

/// Largest integer corner displacement `r` that keeps IoU ≥ `d` with the
/// original box when both corners move inward by `r`, outward by `r`, or
/// together by `(+r, +r)`.
pub fn gaussian_radius(w: f64, h: f64, d: f64) -> Result<usize> {
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Input(format!("gaussian_radius: box {w}x{h} has no area")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Param(format!("gaussian_radius: d = {d} outside (0, 1)")));
    }
    let (sum, area) = (w + h, w * h);
    // shrink: 4r² − 2(w+h)r + (1−d)wh ≥ 0, below the smaller root
    let shrink = (2.0 * sum - (4.0 * sum * sum - 16.0 * (1.0 - d) * area).max(0.0).sqrt()) / 8.0;
    // expand: 4r² + 2(w+h)r + (1 − 1/d)wh ≤ 0, below the larger root
    let expand = (-2.0 * sum + (4.0 * sum * sum - 16.0 * (1.0 - 1.0 / d) * area).sqrt()) / 8.0;
    // translate: r² − (w+h)r + wh(1−d)/(1+d) ≥ 0, below the smaller root
    let translate = (sum - (sum * sum - 4.0 * area * (1.0 - d) / (1.0 + d)).max(0.0).sqrt()) / 2.0;

    let bound = shrink.min(expand).min(translate).max(0.0);
    let mut r = bound.floor() as usize;
    // The roots carry rounding error; settle the integer exactly on the boundary.
    while r > 0 && !radius_ok(w, h, d, r as f64) {
        r -= 1;
    }
    while radius_ok(w, h, d, (r + 1) as f64) {
        r += 1;
    }
    Ok(r)
}

/// Unnormalised Gaussian `exp(-((x-cx)² + (y-cy)²) / (2δ²))` with `δ = r/3`,
/// peaking at exactly 1 on the corner cell. `r = 0` renders a one-hot map.
pub fn render_heatmap(
    grid_h: usize,
    grid_w: usize,
    center: (usize, usize),
    radius: usize,
) -> Result<Tensor> {
    let (cx, cy) = center;
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::Input("render_heatmap: empty grid".into()));
    }
    if cx >= grid_w || cy >= grid_h {
        return Err(Error::Input(format!(
            "render_heatmap: corner ({cx}, {cy}) outside {grid_w}x{grid_h} grid"
        )));
    }
    if radius == 0 {
        let mut t = Tensor::zeros([1, 1, grid_h, grid_w]);
        t.set(0, 0, cy, cx, 1.0);
        return Ok(t);
    }
    let sigma = radius as f64 / 3.0;
    let denom = 2.0 * sigma * sigma;
    Ok(Tensor::from_fn([1, 1, grid_h, grid_w], |_, _, y, x| {
        let dx = x as f64 - cx as f64;
        let dy = y as f64 - cy as f64;
        (-(dx * dx + dy * dy) / denom).exp()
    }))
}

/// Fractional part of a patch coordinate at heatmap resolution.
pub fn offset_target(m: f64, n: f64, stride: usize) -> [f64; 2] {
    let s = stride as f64;
    [m / s - (m / s).floor(), n / s - (n / s).floor()]
}

fn check_k(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Contract("normaliser K must be at least 1".into()));
    }
    Ok(k as f64)
}

/// Focal loss over a predicted heatmap (probabilities) and its Gaussian target,
/// summed over every cell and divided by `k`.
pub fn focal_loss(pred: &Tensor, target: &Tensor, weights: &LossWeights, k: usize) -> Result<f64> {
    let kf = check_k(k)?;
    pred.require_same_shape(target, "focal_loss")?;
    let mut total = 0.0;
    for (&p, &x) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(EPS, 1.0 - EPS);
        total += if x == 1.0 {
            -(1.0 - p).powf(weights.alpha) * p.ln()
        } else {
            -(1.0 - x).powf(weights.beta) * p.powf(weights.alpha) * (1.0 - p).ln()
        };
    }
    Ok(total / kf)
}

/// Derivative of [`focal_loss`] with respect to each prediction. Cells outside
/// the clamp range have zero derivative.
pub fn focal_loss_grad(
    pred: &Tensor,
    target: &Tensor,
    weights: &LossWeights,
    k: usize,
) -> Result<Tensor> {
    let kf = check_k(k)?;
    let (a, b) = (weights.alpha, weights.beta);
    pred.zip_map(target, |p, x| {
        if !(EPS..=1.0 - EPS).contains(&p) {
            return 0.0;
        }
        let g = if x == 1.0 {
            a * (1.0 - p).powf(a - 1.0) * p.ln() - (1.0 - p).powf(a) / p
        } else {
            -(1.0 - x).powf(b) * (a * p.powf(a - 1.0) * (1.0 - p).ln() - p.powf(a) / (1.0 - p))
        };
        g / kf
    })
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// `(1/k) Σ smoothL1(pred - target)`, summed over both components of each pair.
pub fn offset_loss(pred: &[[f64; 2]], target: &[[f64; 2]], k: usize) -> Result<f64> {
    let kf = check_k(k)?;
    if pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "offset_loss: {} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| smooth_l1(p[0] - t[0]) + smooth_l1(p[1] - t[1]))
        .sum();
    Ok(total / kf)
}

pub fn offset_loss_grad(pred: &[[f64; 2]], target: &[[f64; 2]], k: usize) -> Result<Vec<[f64; 2]>> {
    let kf = check_k(k)?;
    if pred.len() != target.len() {
        return Err(Error::Contract("offset_loss: count mismatch".into()));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            [
                smooth_l1_grad(p[0] - t[0]) / kf,
                smooth_l1_grad(p[1] - t[1]) / kf,
            ]
        })
        .collect())
}

pub fn total_loss(tracking: f64, offset: f64, lambda: f64) -> f64 {
    tracking + lambda * offset
}

/// Ground truth for one corner branch over a batch: one positive per sample.
#[derive(Clone, Debug)]
pub struct TargetMaps {
    /// `[batch, 1, grid_h, grid_w]`, exactly 1 on each positive cell.
    pub heatmap: Tensor,
    /// Positive cells as `(sample, y, x)`.
    pub positives: Vec<(usize, usize, usize)>,
    /// Offset target per positive, in `[0, 1)`.
    pub offsets: Vec<[f64; 2]>,
}

impl TargetMaps {
    /// Number of positive corner locations.
    pub fn k(&self) -> usize {
        self.positives.len()
    }

    /// Builds targets for corners given in patch pixels, one per sample.
    /// `box_sizes` are the matching box extents in patch pixels and set the radius.
    pub fn build(
        grid: (usize, usize),
        stride: usize,
        corners: &[(f64, f64)],
        box_sizes: &[(f64, f64)],
        d: f64,
    ) -> Result<Self> {
        let (gh, gw) = grid;
        let s = stride as f64;
        let mut maps = Vec::with_capacity(corners.len());
        let mut positives = Vec::new();
        let mut offsets = Vec::new();
        for (n, (&(m, q), &(bw, bh))) in corners.iter().zip(box_sizes).enumerate() {
            if m < 0.0 || q < 0.0 {
                return Err(Error::Input(format!("corner ({m}, {q}) left of or above the patch")));
            }
            let (cx, cy) = ((m / s).floor() as usize, (q / s).floor() as usize);
            let radius = gaussian_radius(bw / s, bh / s, d)?;
            maps.push(render_heatmap(gh, gw, (cx, cy), radius)?);
            positives.push((n, cy, cx));
            offsets.push(offset_target(m, q, stride));
        }
        Ok(Self {
            heatmap: Tensor::stack(&maps)?,
            positives,
            offsets,
        })
    }
}

/// Reads the 2-channel offset map at each positive cell as `[dx, dy]`.
pub fn gather_offsets(map: &Tensor, cells: &[(usize, usize, usize)]) -> Vec<[f64; 2]> {
    cells
        .iter()
        .map(|&(n, y, x)| [map.at(n, 0, y, x), map.at(n, 1, y, x)])
        .collect()
}
