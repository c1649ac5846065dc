//! Multi-level fusion and corner-pair selection with scale/ratio penalty,
//! motion-ranked cosine window and linear size smoothing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cropping::{map_patch_to_frame, BBox, CropMapping};
use crate::decoding::{CoordSpace, CornerRow, CornerSet};
use crate::error::{Error, Result};

/// Tracking hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerHyper {
    /// Penalty strength, `≤ 0`.
    pub eta: f64,
    /// Window influence in `[0, 1]`.
    pub gamma: f64,
    /// Size interpolation rate in `(0, 1]`.
    pub lr: f64,
    /// Corners kept per level.
    pub n: usize,
    /// Boundary strip ratio in `(0, 1]`.
    pub t_wh: f64,
    /// Corner-pair IoU for the target radius, in `(0, 1)`.
    pub d: f64,
}

impl Default for TrackerHyper {
    fn default() -> Self {
        Self { eta: -0.1, gamma: 0.3, lr: 0.3, n: 15, t_wh: 0.5, d: 0.5 }
    }
}

impl TrackerHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(self.eta <= 0.0) {
            return bad(format!("eta must be <= 0, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return bad(format!("lr must be in (0, 1], got {}", self.lr));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.t_wh > 0.0 && self.t_wh <= 1.0) {
            return bad(format!("t_wh must be in (0, 1], got {}", self.t_wh));
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return bad(format!("d must be in (0, 1), got {}", self.d));
        }
        Ok(())
    }
}

/// Concatenates per-level patch-space sets in the given order and maps them to frame space.
pub fn fuse_levels(sets: &[CornerSet], mapping: &CropMapping) -> Result<CornerSet> {
    let mut rows = Vec::with_capacity(sets.iter().map(|s| s.rows.len()).sum());
    for s in sets {
        if s.space != CoordSpace::Patch {
            return Err(Error::Contract(format!("fuse_levels expects patch coordinates, got {:?}", s.space)));
        }
        rows.extend(s.rows.iter().map(|r| {
            let (x_tl, y_tl) = map_patch_to_frame(r.x_tl, r.y_tl, mapping);
            let (x_br, y_br) = map_patch_to_frame(r.x_br, r.y_br, mapping);
            CornerRow { x_tl, y_tl, x_br, y_br, score: r.score }
        }));
    }
    Ok(CornerSet { rows, space: CoordSpace::Frame })
}

/// Overall scale `sqrt((w+p)(h+p))` with `p = (w+h)/2`.
pub fn scale_term(w: f64, h: f64) -> f64 {
    let p = (w + h) / 2.0;
    ((w + p) * (h + p)).sqrt()
}

fn max_ratio(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

/// `exp(η · max(r/r̂, r̂/r) · max(s/ŝ, ŝ/s))` with `r = h/w` and `s` the scale term;
/// hatted values come from `prev`. Zero-area candidates get 0.
pub fn penalty(row: &CornerRow, prev: &BBox, eta: f64) -> f64 {
    let (w, h) = (row.width(), row.height());
    if !(w > 0.0 && h > 0.0) {
        return 0.0;
    }
    let ratio = max_ratio(h / w, prev.height() / prev.width());
    let scale = max_ratio(scale_term(w, h), scale_term(prev.width(), prev.height()));
    (eta * ratio * scale).exp()
}

/// `|Δc_x| + |Δc_y| + |Δw| + |Δh|` against `prev`.
pub fn variation(row: &CornerRow, prev: &BBox) -> f64 {
    let (cx, cy) = row.center();
    let (px, py) = prev.center();
    (cx - px).abs() + (cy - py).abs() + (row.width() - prev.width()).abs() + (row.height() - prev.height()).abs()
}

/// Row indices ordered by variation, largest first; ties by index.
pub fn motion_rank(set: &CornerSet, prev: &BBox) -> Vec<usize> {
    let v: Vec<f64> = set.rows.iter().map(|r| variation(r, prev)).collect();
    let mut u: Vec<usize> = (0..v.len()).collect();
    u.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    u
}

/// Rising half-cosine window value for rank `u` of `m` (1-based).
pub fn hanning_ramp(u: usize, m: usize) -> f64 {
    0.5 * (1.0 - (PI * u as f64 / m as f64).cos())
}

/// `S_final[U(u)] = S_pen[U(u)]·(1−γ) + ramp(u)·γ`, indexed by original row.
pub fn window_blend(s_pen: &[f64], u: &[usize], gamma: f64) -> Vec<f64> {
    let m = s_pen.len();
    let mut out = vec![0.0; m];
    for (rank, &row) in u.iter().enumerate() {
        out[row] = s_pen[row] * (1.0 - gamma) + hanning_ramp(rank + 1, m) * gamma;
    }
    out
}

/// Final selection scores for a frame-space set: raw score × penalty, then window.
pub fn final_scores(set: &CornerSet, prev: &BBox, hyper: &TrackerHyper) -> Vec<f64> {
    let s_pen: Vec<f64> = set.rows.iter().map(|r| r.score * penalty(r, prev, hyper.eta)).collect();
    window_blend(&s_pen, &motion_rank(set, prev), hyper.gamma)
}

/// Outcome of one selection step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub bbox: BBox,
    /// Chosen row; `None` when every raw score was 0 and the previous box was kept.
    pub picked: Option<usize>,
}

/// Picks the best row among those with positive raw score; the new box takes
/// its centre and interpolates size with rate `lr`.
pub fn select_and_smooth(set: &CornerSet, s_final: &[f64], prev: &BBox, lr: f64) -> Result<Selection> {
    if set.rows.len() != s_final.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} final scores",
            set.rows.len(),
            s_final.len()
        )));
    }
    let mut best: Option<usize> = None;
    for (i, r) in set.rows.iter().enumerate() {
        if r.score > 0.0 && r.is_valid() && best.map_or(true, |b| s_final[i] > s_final[b]) {
            best = Some(i);
        }
    }
    let Some(i) = best else {
        return Ok(Selection { bbox: *prev, picked: None });
    };
    let r = &set.rows[i];
    let (cx, cy) = r.center();
    let w = (1.0 - lr) * prev.width() + lr * r.width();
    let h = (1.0 - lr) * prev.height() + lr * r.height();
    Ok(Selection { bbox: BBox::from_center(cx, cy, w, h)?, picked: Some(i) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Lcg;
    use proptest::prelude::*;

    fn row(x: f64, y: f64, w: f64, h: f64, score: f64) -> CornerRow {
        CornerRow { x_tl: x, y_tl: y, x_br: x + w, y_br: y + h, score }
    }
    fn frame_set(rows: Vec<CornerRow>) -> CornerSet {
        CornerSet { rows, space: CoordSpace::Frame }
    }
    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::from_xywh(x, y, w, h).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let one = |v: f64| CornerSet { rows: vec![row(v, v, 1.0, 1.0, 0.5)], space: CoordSpace::Patch };
        let fused = fuse_levels(&[one(1.0), one(2.0), one(3.0)], &CropMapping::IDENTITY).unwrap();
        assert_eq!(fused.rows.iter().map(|r| r.x_tl).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let m = CropMapping { scale: 0.5, offset_x: 10.0, offset_y: 20.0 };
        let s = CornerSet { rows: vec![CornerRow { x_tl: 4.0, y_tl: 6.0, x_br: 8.0, y_br: 8.0, score: 0.3 }], space: CoordSpace::Patch };
        let f = fuse_levels(&[s], &m).unwrap();
        assert_eq!((f.rows[0].x_tl, f.rows[0].y_tl, f.rows[0].score), (18.0, 32.0, 0.3));
        assert!(fuse_levels(&[frame_set(vec![])], &m).is_err());
    }

    #[test]
    fn scale_term_examples() {
        assert_eq!(scale_term(0.0, 0.0), 0.0);
        assert_eq!(scale_term(16.0, 16.0), 32.0);
        assert_eq!(scale_term(3.0, 11.0), scale_term(11.0, 3.0));
    }

    #[test]
    fn penalty_examples() {
        let prev = bx(10.0, 10.0, 20.0, 30.0);
        let same = row(10.0, 10.0, 20.0, 30.0, 1.0);
        assert!((penalty(&same, &prev, -0.1) - 0.904837418).abs() < 1e-9);
        assert_eq!(penalty(&row(0.0, 0.0, 7.0, 90.0, 1.0), &prev, 0.0), 1.0);
        let doubled = row(10.0, 10.0, 40.0, 60.0, 1.0);
        assert!(penalty(&doubled, &prev, -0.1) < penalty(&same, &prev, -0.1));
        assert_eq!(penalty(&row(0.0, 0.0, 0.0, 5.0, 1.0), &prev, -0.1), 0.0);
    }

    #[test]
    fn motion_rank_examples() {
        let prev = bx(0.0, 0.0, 10.0, 10.0);
        let s = frame_set(vec![row(0.0, 0.0, 10.0, 10.0, 1.0), row(10.0, 0.0, 10.0, 10.0, 1.0)]);
        assert_eq!(motion_rank(&s, &prev), vec![1, 0]);
        // variations 7.5, 2.0, 11.0
        let s = frame_set(vec![
            row(7.5, 0.0, 10.0, 10.0, 1.0),
            row(0.0, 2.0, 10.0, 10.0, 1.0),
            row(-11.0, 0.0, 10.0, 10.0, 1.0),
        ]);
        assert_eq!(motion_rank(&s, &prev), vec![2, 0, 1]);
    }

    #[test]
    fn window_examples() {
        assert_eq!(hanning_ramp(45, 45), 1.0);
        assert!((hanning_ramp(1, 45) - 0.5 * (1.0 - (PI / 45.0).cos())).abs() < 1e-15);
        assert!((hanning_ramp(1, 45) - 0.0012179).abs() < 1e-7);
        let s = [0.2, 0.9, 0.4];
        assert_eq!(window_blend(&s, &[2, 0, 1], 0.0), s.to_vec());
        let pure = window_blend(&s, &[2, 0, 1], 1.0);
        assert_eq!(pure[1], 1.0);
        assert!(pure[1] > pure[0] && pure[0] > pure[2]);
    }

    #[test]
    fn smoothing_examples() {
        let prev = bx(0.0, 0.0, 20.0, 20.0);
        let s = frame_set(vec![row(50.0, 60.0, 40.0, 40.0, 0.8)]);
        let full = select_and_smooth(&s, &[0.8], &prev, 1.0).unwrap();
        assert_eq!(full.bbox, bx(50.0, 60.0, 40.0, 40.0));
        let part = select_and_smooth(&s, &[0.8], &prev, 0.3).unwrap();
        assert!((part.bbox.width() - 26.0).abs() < 1e-12 && (part.bbox.height() - 26.0).abs() < 1e-12);
        assert_eq!(part.bbox.center(), (70.0, 80.0));
        let tiny = select_and_smooth(&s, &[0.8], &prev, 1e-12).unwrap();
        assert!((tiny.bbox.width() - 20.0).abs() < 1e-9);
        assert_eq!(tiny.bbox.center(), (70.0, 80.0));
    }

    #[test]
    fn all_zero_scores_keep_previous_box() {
        let prev = bx(5.0, 5.0, 10.0, 10.0);
        let s = frame_set(vec![row(50.0, 60.0, 40.0, 40.0, 0.0), row(0.0, 0.0, 3.0, 3.0, 0.0)]);
        let fin = window_blend(&[0.0, 0.0], &motion_rank(&s, &prev), 1.0);
        let sel = select_and_smooth(&s, &fin, &prev, 0.3).unwrap();
        assert_eq!(sel, Selection { bbox: prev, picked: None });
    }

    fn random_set(seed: u64, rows: usize) -> (CornerSet, BBox) {
        let mut rng = Lcg::new(seed);
        let prev = bx(rng.range(0.0, 100.0), rng.range(0.0, 100.0), rng.range(5.0, 60.0), rng.range(5.0, 60.0));
        let rows = (0..rows)
            .map(|_| row(rng.range(0.0, 100.0), rng.range(0.0, 100.0), rng.range(1.0, 80.0), rng.range(1.0, 80.0), rng.range(0.01, 1.0)))
            .collect();
        (frame_set(rows), prev)
    }

    proptest! {
        #[test]
        fn penalty_bounded_and_max_only_when_unchanged(seed in any::<u64>()) {
            let (set, prev) = random_set(seed, 45);
            let top = (-0.1f64).exp();
            for r in &set.rows {
                let c = penalty(r, &prev, -0.1);
                prop_assert!(c > 0.0 && c <= top);
                prop_assert!(c < top);
            }
            let same = row(prev.x_tl, prev.y_tl, prev.width(), prev.height(), 1.0);
            prop_assert_eq!(penalty(&same, &prev, -0.1), top);
        }

        #[test]
        fn argmax_invariant_to_positive_scaling(seed in any::<u64>(), k in 0.01f64..100.0) {
            let hyper = TrackerHyper { gamma: 0.0, ..Default::default() };
            let (set, prev) = random_set(seed, 45);
            let mut scaled = set.clone();
            for r in &mut scaled.rows { r.score *= k; }
            let a = select_and_smooth(&set, &final_scores(&set, &prev, &hyper), &prev, 0.3).unwrap();
            let b = select_and_smooth(&scaled, &final_scores(&scaled, &prev, &hyper), &prev, 0.3).unwrap();
            prop_assert_eq!(a.picked, b.picked);
        }

        #[test]
        fn blend_keeps_unit_interval(seed in any::<u64>(), gamma in 0.0f64..=1.0) {
            let (set, prev) = random_set(seed, 30);
            let s: Vec<f64> = set.rows.iter().map(|r| r.score).collect();
            let out = window_blend(&s, &motion_rank(&set, &prev), gamma);
            prop_assert_eq!(out.len(), s.len());
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn selected_box_positive(seed in any::<u64>(), lr in 0.01f64..=1.0) {
            let (set, prev) = random_set(seed, 20);
            let fin = final_scores(&set, &prev, &TrackerHyper::default());
            let sel = select_and_smooth(&set, &fin, &prev, lr).unwrap();
            prop_assert!(sel.bbox.width() > 0.0 && sel.bbox.height() > 0.0);
        }
    }
}
