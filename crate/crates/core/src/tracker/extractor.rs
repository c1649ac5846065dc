//! Backbone stand-ins: a seeded convolutional extractor and a geometry oracle
//! for synthetic frames.

use crate::corner_pooling::ConvParams;
use crate::correlation::Boundary;
use crate::error::{Error, Result};
use crate::synth::{Lcg, DEFAULT_FOREGROUND};
use crate::tensor::{conv2d, relu, Tensor};

/// Maps an image `[n, 3, H, W]` to three feature maps (levels 3, 4, 5), each
/// `[n, channels, ceil(H/stride), ceil(W/stride)]`. Must be deterministic.
pub trait FeatureExtractor: Send + Sync {
    fn stride(&self) -> usize;
    fn channels(&self) -> usize;
    fn extract(&self, image: &Tensor) -> Result<[Tensor; 3]>;

    /// Features of a boundary template patch; defaults to [`FeatureExtractor::extract`].
    fn extract_template(&self, _which: Boundary, image: &Tensor) -> Result<[Tensor; 3]> {
        self.extract(image)
    }
}

impl<E: FeatureExtractor + ?Sized> FeatureExtractor for Box<E> {
    fn stride(&self) -> usize {
        (**self).stride()
    }
    fn channels(&self) -> usize {
        (**self).channels()
    }
    fn extract(&self, image: &Tensor) -> Result<[Tensor; 3]> {
        (**self).extract(image)
    }
    fn extract_template(&self, which: Boundary, image: &Tensor) -> Result<[Tensor; 3]> {
        (**self).extract_template(which, image)
    }
}

/// Three stride-2 3×3 conv + ReLU layers per level, seeded per level.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyConvExtractor {
    pub levels: [Vec<ConvParams>; 3],
}

impl ToyConvExtractor {
    pub const DEFAULT_WIDTHS: [usize; 3] = [16, 32, 64];

    pub fn new(seed: u64, widths: [usize; 3]) -> Self {
        let levels = [0u64, 1, 2].map(|l| {
            let mut rng = Lcg::new(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(l + 1)));
            let mut in_c = 3;
            widths
                .iter()
                .map(|&w| {
                    let p = ConvParams::random(w, in_c, 3, &mut rng);
                    in_c = w;
                    p
                })
                .collect()
        });
        Self { levels }
    }
}

impl FeatureExtractor for ToyConvExtractor {
    fn stride(&self) -> usize {
        8
    }
    fn channels(&self) -> usize {
        self.levels[0].last().map_or(3, |p| p.out_channels())
    }
    fn extract(&self, image: &Tensor) -> Result<[Tensor; 3]> {
        if image.channels() != 3 {
            return Err(Error::Input(format!("expected an RGB image, got {} channels", image.channels())));
        }
        let centred = image.map(|v| v - 0.5);
        let run = |layers: &Vec<ConvParams>| -> Result<Tensor> {
            let mut x = centred.clone();
            for p in layers {
                x = relu(&conv2d(&x, &p.kernel, p.bias.data(), 2, 1)?);
            }
            Ok(x)
        };
        Ok([run(&self.levels[0])?, run(&self.levels[1])?, run(&self.levels[2])?])
    }
}

/// Reads target geometry from synthetic frames by colour segmentation.
///
/// Search features have 8 channels on a stride-8 grid, identical across
/// levels: 0–3 mark the cells crossed by the top, left, bottom and right box
/// edges; 4–7 carry the sub-cell fraction of the same edge (y for top and
/// bottom, x for left and right) on those cells. Templates map to 1×1
/// channel selectors picking their boundary's indicator and fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleExtractor {
    pub foreground: [f64; 3],
    /// Largest per-channel deviation still counted as foreground.
    pub tolerance: f64,
}

impl Default for OracleExtractor {
    fn default() -> Self {
        Self { foreground: DEFAULT_FOREGROUND, tolerance: 0.2 }
    }
}

impl OracleExtractor {
    pub const STRIDE: usize = 8;
    pub const CHANNELS: usize = 8;

    /// Continuous pixel extent `[x0, y0, x1, y1]` of foreground in sample `n`.
    pub fn foreground_extent(&self, image: &Tensor, n: usize) -> Option<[f64; 4]> {
        let [_, _, h, w] = image.shape();
        let mut ext: Option<[usize; 4]> = None;
        for y in 0..h {
            for x in 0..w {
                let hit = (0..3).all(|c| (image.at(n, c, y, x) - self.foreground[c]).abs() <= self.tolerance);
                if hit {
                    ext = Some(match ext {
                        None => [x, y, x, y],
                        Some([a, b, c, d]) => [a.min(x), b.min(y), c.max(x), d.max(y)],
                    });
                }
            }
        }
        ext.map(|[a, b, c, d]| [a as f64, b as f64, (c + 1) as f64, (d + 1) as f64])
    }
}

/// Grid cell and within-cell fraction of coordinate `v`, kept inside `0..g`.
fn cell(v: f64, s: f64, g: usize) -> (usize, f64) {
    let q = v / s;
    let c = (q.floor().max(0.0) as usize).min(g - 1);
    (c, q - c as f64)
}

impl FeatureExtractor for OracleExtractor {
    fn stride(&self) -> usize {
        Self::STRIDE
    }
    fn channels(&self) -> usize {
        Self::CHANNELS
    }

    fn extract(&self, image: &Tensor) -> Result<[Tensor; 3]> {
        let [n, c, h, w] = image.shape();
        if c != 3 {
            return Err(Error::Input(format!("expected an RGB image, got {c} channels")));
        }
        let s = Self::STRIDE as f64;
        let (gh, gw) = (h.div_ceil(Self::STRIDE), w.div_ceil(Self::STRIDE));
        let mut f = Tensor::zeros([n, Self::CHANNELS, gh, gw]);
        for b in 0..n {
            let Some([x0, y0, x1, y1]) = self.foreground_extent(image, b) else { continue };
            let (cx0, fx0) = cell(x0, s, gw);
            let (cy0, fy0) = cell(y0, s, gh);
            let (cx1, fx1) = cell(x1, s, gw);
            let (cy1, fy1) = cell(y1, s, gh);
            for x in cx0..=cx1 {
                for (ind, frac_ch, y, frac) in [(0, 4, cy0, fy0), (2, 6, cy1, fy1)] {
                    f.set(b, ind, y, x, 1.0);
                    f.set(b, frac_ch, y, x, frac);
                }
            }
            for y in cy0..=cy1 {
                for (ind, frac_ch, x, frac) in [(1, 5, cx0, fx0), (3, 7, cx1, fx1)] {
                    f.set(b, ind, y, x, 1.0);
                    f.set(b, frac_ch, y, x, frac);
                }
            }
        }
        Ok([f.clone(), f.clone(), f])
    }

    fn extract_template(&self, which: Boundary, image: &Tensor) -> Result<[Tensor; 3]> {
        let i = which.index();
        let sel = Tensor::from_fn([image.batch(), Self::CHANNELS, 1, 1], |_, ch, _, _| {
            if ch == i || ch == i + 4 {
                1.0
            } else {
                0.0
            }
        });
        Ok([sel.clone(), sel.clone(), sel])
    }
}
