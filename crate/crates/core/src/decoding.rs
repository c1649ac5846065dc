//! Heatmap peak extraction and corner-pair decoding.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{window_max, Tensor};

/// Per-level outputs of both corner branches for one search patch.
#[derive(Clone, Debug)]
pub struct HeatmapBundle {
    pub level: u8,
    pub stride: usize,
    /// Probabilities in `[0, 1]`, `[1, 1, h, w]`.
    pub tl_heatmap: Tensor,
    pub br_heatmap: Tensor,
    /// `[1, 2, h, w]`, channel 0 is the x offset, channel 1 the y offset.
    pub tl_offsets: Tensor,
    pub br_offsets: Tensor,
}

impl HeatmapBundle {
    pub fn validate(&self) -> Result<()> {
        let [_, _, h, w] = self.tl_heatmap.shape();
        for (name, t, c) in [
            ("tl_heatmap", &self.tl_heatmap, 1),
            ("br_heatmap", &self.br_heatmap, 1),
            ("tl_offsets", &self.tl_offsets, 2),
            ("br_offsets", &self.br_offsets, 2),
        ] {
            if t.shape() != [1, c, h, w] {
                return Err(shape_err!("{name}: expected {:?}, got {:?}", [1, c, h, w], t.shape()));
            }
        }
        let in_unit = |t: &Tensor| t.data().iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit(&self.tl_heatmap) || !in_unit(&self.br_heatmap) {
            return Err(Error::Contract("heatmap values must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordSpace {
    Heatmap,
    Patch,
    Frame,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerRow {
    pub x_tl: f64,
    pub y_tl: f64,
    pub x_br: f64,
    pub y_br: f64,
    pub score: f64,
}

impl CornerRow {
    pub fn width(&self) -> f64 {
        self.x_br - self.x_tl
    }
    pub fn height(&self) -> f64 {
        self.y_br - self.y_tl
    }
    pub fn center(&self) -> (f64, f64) {
        ((self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0)
    }
    pub fn is_valid(&self) -> bool {
        self.x_br > self.x_tl && self.y_br > self.y_tl
    }
}

/// Candidate corner pairs, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerSet {
    pub rows: Vec<CornerRow>,
    pub space: CoordSpace,
}

/// A heatmap cell and its score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// Keeps cells equal to the maximum of their `window × window` neighbourhood;
/// zeroes the rest. Plateaus survive whole.
pub fn heatmap_nms(heatmap: &Tensor, window: usize) -> Result<Tensor> {
    let m = window_max(heatmap, window)?;
    heatmap.zip_map(&m, |v, mx| if v == mx { v } else { 0.0 })
}

/// The `n` highest cells of plane (0, 0), by descending score; equal scores
/// keep row-major order. Returns fewer than `n` when the grid is smaller.
pub fn topk(heatmap: &Tensor, n: usize) -> Result<Vec<Peak>> {
    if n == 0 {
        return Err(Error::Param("top-N needs N >= 1".into()));
    }
    let w = heatmap.width();
    let plane = heatmap.plane(0, 0);
    let mut idx: Vec<usize> = (0..plane.len()).collect();
    // stable sort keeps scan order among ties
    idx.sort_by(|&a, &b| plane[b].total_cmp(&plane[a]));
    Ok(idx
        .into_iter()
        .take(n)
        .map(|i| Peak { x: i % w, y: i / w, score: plane[i] })
        .collect())
}

/// Positive-score peaks after NMS, best first.
fn peaks(heatmap: &Tensor, n: usize, window: usize) -> Result<Vec<Peak>> {
    let kept = heatmap_nms(heatmap, window)?;
    Ok(topk(&kept, n)?.into_iter().filter(|p| p.score > 0.0).collect())
}

/// Decodes up to `n` rank-paired corners in heatmap coordinates with a 3×3 NMS.
pub fn decode_level(bundle: &HeatmapBundle, n: usize) -> Result<CornerSet> {
    decode_level_with(bundle, n, 3)
}

/// [`decode_level`] with an explicit NMS window.
pub fn decode_level_with(bundle: &HeatmapBundle, n: usize, nms_window: usize) -> Result<CornerSet> {
    bundle.validate()?;
    let tl = peaks(&bundle.tl_heatmap, n, nms_window)?;
    let br = peaks(&bundle.br_heatmap, n, nms_window)?;
    let refine = |p: &Peak, off: &Tensor| {
        (p.x as f64 + off.at(0, 0, p.y, p.x), p.y as f64 + off.at(0, 1, p.y, p.x))
    };
    let rows = tl
        .iter()
        .zip(&br)
        .map(|(a, b)| {
            let (x_tl, y_tl) = refine(a, &bundle.tl_offsets);
            let (x_br, y_br) = refine(b, &bundle.br_offsets);
            let mut row = CornerRow { x_tl, y_tl, x_br, y_br, score: (a.score + b.score) / 2.0 };
            if !row.is_valid() {
                row.score = 0.0;
            }
            row
        })
        .collect();
    Ok(CornerSet { rows, space: CoordSpace::Heatmap })
}

/// Scales heatmap coordinates by the stride into patch pixels.
pub fn to_patch_coords(set: &CornerSet, stride: usize) -> Result<CornerSet> {
    if set.space != CoordSpace::Heatmap {
        return Err(Error::Contract(format!("to_patch_coords expects heatmap coordinates, got {:?}", set.space)));
    }
    let s = stride as f64;
    Ok(CornerSet {
        rows: set
            .rows
            .iter()
            .map(|r| CornerRow { x_tl: r.x_tl * s, y_tl: r.y_tl * s, x_br: r.x_br * s, y_br: r.y_br * s, score: r.score })
            .collect(),
        space: CoordSpace::Patch,
    })
}
