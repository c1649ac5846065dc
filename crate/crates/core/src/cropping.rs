//! Boundary-template and search-region crops, and the patch/frame coordinate map.
//!
//! Pixel `i` of any image covers the continuous interval `[i, i+1)`; patch
//! pixel `p` samples the frame pixel containing `offset + (p + 0.5) / scale`.

use serde::{Deserialize, Serialize};

use crate::correlation::Boundary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Axis-aligned box in frame pixels, corner form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_tl: f64,
    pub y_tl: f64,
    pub x_br: f64,
    pub y_br: f64,
}

impl BBox {
    pub fn new(x_tl: f64, y_tl: f64, x_br: f64, y_br: f64) -> Result<Self> {
        let b = Self { x_tl, y_tl, x_br, y_br };
        if ![x_tl, y_tl, x_br, y_br].iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!("non-finite box {b:?}")));
        }
        if x_br <= x_tl || y_br <= y_tl {
            return Err(Error::Input(format!("degenerate box {b:?}")));
        }
        Ok(b)
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_br - self.x_tl
    }
    pub fn height(&self) -> f64 {
        self.y_br - self.y_tl
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn center(&self) -> (f64, f64) {
        ((self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0)
    }
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_tl, self.y_tl, self.width(), self.height()]
    }

    /// Intersection with `[0, w] × [0, h]`.
    pub fn clip(&self, w: f64, h: f64) -> Result<Self> {
        Self::new(
            self.x_tl.clamp(0.0, w),
            self.y_tl.clamp(0.0, h),
            self.x_br.clamp(0.0, w),
            self.y_br.clamp(0.0, h),
        )
        .map_err(|_| Error::Input(format!("box {self:?} has no area inside the {w}x{h} frame")))
    }
}

/// Affine map between a resampled patch and its source frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropMapping {
    /// Patch pixels per frame pixel.
    pub scale: f64,
    /// Frame coordinates of the patch origin.
    pub offset_x: f64,
    pub offset_y: f64,
}

impl CropMapping {
    pub const IDENTITY: CropMapping = CropMapping { scale: 1.0, offset_x: 0.0, offset_y: 0.0 };

    pub fn to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        map_patch_to_frame(x, y, self)
    }

    pub fn to_patch(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.offset_x) * self.scale, (y - self.offset_y) * self.scale)
    }

    pub fn box_to_patch(&self, b: &BBox) -> BBox {
        let (x0, y0) = self.to_patch(b.x_tl, b.y_tl);
        let (x1, y1) = self.to_patch(b.x_br, b.y_br);
        BBox { x_tl: x0, y_tl: y0, x_br: x1, y_br: y1 }
    }
}

/// `frame = patch / scale + offset`.
pub fn map_patch_to_frame(x: f64, y: f64, mapping: &CropMapping) -> (f64, f64) {
    (x / mapping.scale + mapping.offset_x, y / mapping.scale + mapping.offset_y)
}

/// The four boundary template patches.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    pub z_t: Tensor,
    pub z_l: Tensor,
    pub z_b: Tensor,
    pub z_r: Tensor,
    /// Mapping shared by all four patches.
    pub mapping: CropMapping,
}

impl TemplateSet {
    pub fn get(&self, b: Boundary) -> &Tensor {
        match b {
            Boundary::Top => &self.z_t,
            Boundary::Left => &self.z_l,
            Boundary::Bottom => &self.z_b,
            Boundary::Right => &self.z_r,
        }
    }
}

/// Side of the context square around a `w × h` target: `sqrt((w+p)(h+p))`, `p = (w+h)/2`.
pub fn context_size(w: f64, h: f64) -> f64 {
    let p = (w + h) / 2.0;
    ((w + p) * (h + p)).sqrt()
}

/// Frame-space rectangle `[x0, y0, x1, y1]` kept for one boundary template.
/// Strips are centred on their edge; thickness is `t_wh` times the box height
/// (top, bottom) or width (left, right).
pub fn strip_rect(b: &BBox, which: Boundary, t_wh: f64) -> [f64; 4] {
    let ht = t_wh * b.height() / 2.0;
    let wt = t_wh * b.width() / 2.0;
    match which {
        Boundary::Top => [b.x_tl, b.y_tl - ht, b.x_br, b.y_tl + ht],
        Boundary::Bottom => [b.x_tl, b.y_br - ht, b.x_br, b.y_br + ht],
        Boundary::Left => [b.x_tl - wt, b.y_tl, b.x_tl + wt, b.y_br],
        Boundary::Right => [b.x_br - wt, b.y_tl, b.x_br + wt, b.y_br],
    }
}

/// Per-channel mean of sample 0, clamped to the channel's range so a
/// constant channel yields its value exactly.
pub fn channel_means(frame: &Tensor) -> Vec<f64> {
    let area = (frame.height() * frame.width()) as f64;
    (0..frame.channels())
        .map(|c| {
            let p = frame.plane(0, c);
            let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (p.iter().sum::<f64>() / area).clamp(lo, hi)
        })
        .collect()
}

fn check_frame(frame: &Tensor) -> Result<()> {
    if frame.batch() != 1 {
        return Err(Error::Input(format!("expected a single frame, got batch {}", frame.batch())));
    }
    Ok(())
}

/// Nearest-neighbour resample of the square of side `side` centred on
/// `center` to `size × size`. Pixels whose source lies outside the frame, or
/// outside `keep` when given, take `pad`.
fn resample(
    frame: &Tensor,
    center: (f64, f64),
    side: f64,
    size: usize,
    pad: &[f64],
    keep: Option<[f64; 4]>,
) -> (Tensor, CropMapping) {
    let [_, c, h, w] = frame.shape();
    let mapping = CropMapping {
        scale: size as f64 / side,
        offset_x: center.0 - side / 2.0,
        offset_y: center.1 - side / 2.0,
    };
    let src: Vec<Option<usize>> = (0..size)
        .map(|p| mapping.offset_x + (p as f64 + 0.5) / mapping.scale)
        .map(|fx| (fx >= 0.0 && fx < w as f64).then(|| fx as usize))
        .collect();
    let cols_y: Vec<Option<usize>> = (0..size)
        .map(|p| mapping.offset_y + (p as f64 + 0.5) / mapping.scale)
        .map(|fy| (fy >= 0.0 && fy < h as f64).then(|| fy as usize))
        .collect();
    let inside = |p: usize, q: usize| match keep {
        None => true,
        Some([x0, y0, x1, y1]) => {
            let fx = mapping.offset_x + (p as f64 + 0.5) / mapping.scale;
            let fy = mapping.offset_y + (q as f64 + 0.5) / mapping.scale;
            fx >= x0 && fx < x1 && fy >= y0 && fy < y1
        }
    };
    let out = Tensor::from_fn([1, c, size, size], |_, ch, py, px| match (src[px], cols_y[py]) {
        (Some(x), Some(y)) if inside(px, py) => frame.at(0, ch, y, x),
        _ => pad[ch],
    });
    (out, mapping)
}

/// Crops the four boundary templates around `box` (clipped to the frame).
pub fn crop_boundary_templates(frame: &Tensor, b: BBox, t_wh: f64, template_size: usize) -> Result<TemplateSet> {
    check_frame(frame)?;
    if !(t_wh > 0.0 && t_wh <= 1.0) {
        return Err(Error::Param(format!("boundary ratio must be in (0, 1], got {t_wh}")));
    }
    if template_size == 0 {
        return Err(Error::Param("template size must be positive".into()));
    }
    let b = b.clip(frame.width() as f64, frame.height() as f64)?;
    let side = context_size(b.width(), b.height());
    let pad = channel_means(frame);
    let crop = |which| resample(frame, b.center(), side, template_size, &pad, Some(strip_rect(&b, which, t_wh)));
    let (z_t, mapping) = crop(Boundary::Top);
    Ok(TemplateSet {
        z_t,
        z_l: crop(Boundary::Left).0,
        z_b: crop(Boundary::Bottom).0,
        z_r: crop(Boundary::Right).0,
        mapping,
    })
}

/// Crops the search region of side `2 · context_size` centred on `box`.
pub fn crop_search_region(frame: &Tensor, b: BBox, search_size: usize) -> Result<(Tensor, CropMapping)> {
    check_frame(frame)?;
    if frame.is_empty() {
        return Err(Error::Input("empty frame".into()));
    }
    if search_size == 0 {
        return Err(Error::Param("search size must be positive".into()));
    }
    let side = 2.0 * context_size(b.width(), b.height());
    if !(side > 0.0) {
        return Err(Error::Input(format!("degenerate state box {b:?}")));
    }
    let pad = channel_means(frame);
    Ok(resample(frame, b.center(), side, search_size, &pad, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Lcg;
    use proptest::prelude::*;

    fn rect_frame(w: usize, h: usize, r: [usize; 4]) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |_, _, y, x| {
            if x >= r[0] && x < r[2] && y >= r[1] && y < r[3] {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn default_sizes_give_127_patches() {
        let f = rect_frame(200, 160, [60, 50, 120, 110]);
        let b = BBox::new(60.0, 50.0, 120.0, 110.0).unwrap();
        let t = crop_boundary_templates(&f, b, 0.5, 127).unwrap();
        for z in [&t.z_t, &t.z_l, &t.z_b, &t.z_r] {
            assert_eq!(z.shape(), [1, 3, 127, 127]);
        }
        let (s, _) = crop_search_region(&f, b, 255).unwrap();
        assert_eq!(s.shape(), [1, 3, 255, 255]);
    }

    #[test]
    fn constant_frame_constant_patches() {
        let f = Tensor::full([1, 3, 40, 50], 0.37);
        let b = BBox::new(5.0, 5.0, 30.0, 20.0).unwrap();
        let t = crop_boundary_templates(&f, b, 0.5, 31).unwrap();
        for z in [&t.z_t, &t.z_l, &t.z_b, &t.z_r] {
            assert!(z.data().iter().all(|&v| v == 0.37));
        }
        let (s, _) = crop_search_region(&f, b, 63).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn top_strip_geometry() {
        // white rectangle rows 40..80, columns 40..100 on black
        let f = rect_frame(160, 120, [40, 40, 100, 80]);
        let b = BBox::new(40.0, 40.0, 100.0, 80.0).unwrap();
        let t = crop_boundary_templates(&f, b, 0.5, 127).unwrap();
        let pad = channel_means(&f)[0];
        let m = t.mapping;
        for py in 0..127 {
            for px in 0..127 {
                let fx = m.offset_x + (px as f64 + 0.5) / m.scale;
                let fy = m.offset_y + (py as f64 + 0.5) / m.scale;
                let v = t.z_t.at(0, 0, py, px);
                let in_strip = (30.0..50.0).contains(&fy) && (40.0..100.0).contains(&fx);
                let white = in_strip && fy >= 40.0 && (fy as usize) < 80 && (fx as usize) < 100;
                let expected = if !in_strip || fx < 0.0 || fy < 0.0 {
                    pad
                } else if white {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(v, expected, "pixel ({px},{py})");
                if v == 1.0 {
                    assert!(fy - 40.0 < 0.25 * 40.0);
                }
            }
        }
    }

    #[test]
    fn search_crop_maps_center_back() {
        let f = Tensor::zeros([1, 3, 300, 400]);
        let b = BBox::new(180.0, 130.0, 220.0, 170.0).unwrap();
        let (_, m) = crop_search_region(&f, b, 255).unwrap();
        assert_eq!(m.to_frame(127.5, 127.5), (200.0, 150.0));
    }

    #[test]
    fn edge_crop_uses_pad_and_nearest_pixels() {
        let mut rng = Lcg::new(3);
        let f = Tensor::from_fn([1, 3, 50, 60], |_, _, _, _| rng.next_f64());
        let b = BBox::new(0.0, 2.0, 20.0, 22.0).unwrap();
        let (s, m) = crop_search_region(&f, b, 61).unwrap();
        let pad = channel_means(&f);
        for c in 0..3 {
            for py in 0..61 {
                for px in 0..61 {
                    let fx = m.offset_x + (px as f64 + 0.5) / m.scale;
                    let fy = m.offset_y + (py as f64 + 0.5) / m.scale;
                    let expect = if fx < 0.0 || fy < 0.0 || fx >= 60.0 || fy >= 50.0 {
                        pad[c]
                    } else {
                        f.at(0, c, fy.floor() as usize, fx.floor() as usize)
                    };
                    assert_eq!(s.at(0, c, py, px), expect);
                }
            }
        }
    }

    #[test]
    fn mapping_examples() {
        let m = CropMapping { scale: 0.5, offset_x: 10.0, offset_y: 20.0 };
        assert_eq!(map_patch_to_frame(0.0, 0.0, &m), (10.0, 20.0));
        assert_eq!(map_patch_to_frame(4.0, 6.0, &m), (18.0, 32.0));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        let f = Tensor::zeros([1, 3, 20, 20]);
        assert!(BBox::new(3.0, 3.0, 3.0, 8.0).is_err());
        let outside = BBox { x_tl: 30.0, y_tl: 30.0, x_br: 40.0, y_br: 40.0 };
        assert!(crop_boundary_templates(&f, outside, 0.5, 15).is_err());
        let partial = BBox::new(-5.0, -5.0, 10.0, 10.0).unwrap();
        assert!(crop_boundary_templates(&f, partial, 0.5, 15).is_ok());
        assert!(crop_boundary_templates(&f, partial, 0.0, 15).is_err());
    }

    #[test]
    fn strips_cover_perimeter_with_stated_area() {
        let b = BBox::new(10.0, 20.0, 50.0, 80.0).unwrap();
        for which in Boundary::ALL {
            let [x0, y0, x1, y1] = strip_rect(&b, which, 0.5);
            assert!(((x1 - x0) * (y1 - y0) - 0.5 * b.width() * b.height()).abs() < 1e-12);
        }
        // each edge lies inside its strip
        let [_, y0, _, y1] = strip_rect(&b, Boundary::Top, 0.5);
        assert!(y0 < b.y_tl && b.y_tl < y1);
        let [x0, _, x1, _] = strip_rect(&b, Boundary::Right, 0.5);
        assert!(x0 < b.x_br && b.x_br < x1);
    }

    proptest! {
        #[test]
        fn mapping_round_trip(scale in 0.05f64..20.0, ox in -500.0f64..500.0, oy in -500.0f64..500.0,
                              x in 0.0f64..255.0, y in 0.0f64..255.0) {
            let m = CropMapping { scale, offset_x: ox, offset_y: oy };
            let (fx, fy) = m.to_frame(x, y);
            let (px, py) = m.to_patch(fx, fy);
            prop_assert!((px - x).abs() < 1e-9 && (py - y).abs() < 1e-9);
        }

        #[test]
        fn constant_preserved(v in 0.0f64..1.0, size in 1usize..40, x in 0.0f64..30.0, w in 1.0f64..20.0) {
            let f = Tensor::full([1, 3, 24, 32], v);
            let b = BBox::new(x, 3.0, x + w, 3.0 + w).unwrap();
            let (s, _) = crop_search_region(&f, b, size).unwrap();
            prop_assert!(s.data().iter().all(|&p| p == v));
        }
    }
}
