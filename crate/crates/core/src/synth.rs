//! Deterministic synthetic sequences: a filled rectangle drifting over a flat
//! background, with optional distractor and uniform pixel noise.

use serde::{Deserialize, Serialize};

use crate::cropping::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 64-bit linear congruential generator, `s ← a·s + c (mod 2⁶⁴)` with
/// `a = 6364136223846793005`, `c = 1442695040888963407`.
#[derive(Clone, Debug)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const A: u64 = 6364136223846793005;
    pub const C: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::A).wrapping_add(Self::C);
        self.state
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

pub const DEFAULT_FOREGROUND: [f64; 3] = [0.9, 0.2, 0.2];
pub const DEFAULT_BACKGROUND: [f64; 3] = [0.15, 0.2, 0.35];
pub const DEFAULT_DISTRACTOR: [f64; 3] = [0.2, 0.8, 0.3];

/// Smallest box side the generator emits.
pub const MIN_SIDE: f64 = 8.0;

/// Parameters of one synthetic sequence. The target at frame `t` has centre
/// `c₀ + t·velocity`, width `w₀·scale_rateᵗ·aspect_rate^(t/2)` and height
/// `h₀·scale_rateᵗ·aspect_rate^(−t/2)`, then is clipped to at least 8×8 and
/// to the frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSpec {
    pub frame_width: usize,
    pub frame_height: usize,
    pub length: usize,
    /// `[x, y, w, h]` of frame 0.
    pub init_box: [f64; 4],
    pub velocity: [f64; 2],
    pub scale_rate: f64,
    pub aspect_rate: f64,
    pub distractor: bool,
    pub noise: f64,
    pub seed: u64,
    pub foreground: [f64; 3],
    pub background: [f64; 3],
    pub distractor_color: [f64; 3],
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            frame_width: 320,
            frame_height: 240,
            length: 50,
            init_box: [140.0, 100.0, 40.0, 32.0],
            velocity: [0.0, 0.0],
            scale_rate: 1.0,
            aspect_rate: 1.0,
            distractor: false,
            noise: 0.0,
            seed: 0,
            foreground: DEFAULT_FOREGROUND,
            background: DEFAULT_BACKGROUND,
            distractor_color: DEFAULT_DISTRACTOR,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if (self.frame_width as f64) < MIN_SIDE || (self.frame_height as f64) < MIN_SIDE {
            return bad(format!("frame {}x{} smaller than 8x8", self.frame_width, self.frame_height));
        }
        if self.length == 0 {
            return bad("sequence length must be at least 1".into());
        }
        let [x, y, w, h] = self.init_box;
        if !self.init_box.iter().all(|v| v.is_finite()) || w < MIN_SIDE || h < MIN_SIDE {
            return bad(format!("initial box {:?} must be finite and at least 8x8", self.init_box));
        }
        if x < 0.0 || y < 0.0 || x + w > self.frame_width as f64 || y + h > self.frame_height as f64 {
            return bad(format!("initial box {:?} leaves the frame", self.init_box));
        }
        if !self.velocity.iter().all(|v| v.is_finite()) {
            return bad("velocity must be finite".into());
        }
        for (name, r) in [("scale_rate", self.scale_rate), ("aspect_rate", self.aspect_rate)] {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("{name} must be positive, got {r}"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise amplitude must be in [0, 1], got {}", self.noise));
        }
        let colors = [self.foreground, self.background, self.distractor_color];
        if !colors.iter().flatten().all(|v| (0.0..=1.0).contains(v)) {
            return bad("colours must lie in [0, 1]".into());
        }
        if self.foreground == self.background {
            return bad("foreground and background colours must differ".into());
        }
        Ok(())
    }

    /// Ground-truth box of frame `t`.
    pub fn box_at(&self, t: usize) -> BBox {
        let [x, y, w, h] = self.init_box;
        let (cx, cy) = (x + w / 2.0, y + h / 2.0);
        self.place(
            cx + t as f64 * self.velocity[0],
            cy + t as f64 * self.velocity[1],
            w,
            h,
            t,
        )
    }

    /// Distractor box of frame `t`: the target's size, mirrored start, opposite motion.
    fn distractor_at(&self, t: usize) -> BBox {
        let [x, y, w, h] = self.init_box;
        let (fw, fh) = (self.frame_width as f64, self.frame_height as f64);
        let (cx, cy) = (fw - (x + w / 2.0), fh - (y + h / 2.0));
        self.place(
            cx - t as f64 * self.velocity[0],
            cy - t as f64 * self.velocity[1],
            w,
            h,
            t,
        )
    }

    fn place(&self, cx: f64, cy: f64, w: f64, h: f64, t: usize) -> BBox {
        let (fw, fh) = (self.frame_width as f64, self.frame_height as f64);
        let t = t as f64;
        let grow = self.scale_rate.powf(t);
        let skew = self.aspect_rate.powf(t / 2.0);
        let w = (w * grow * skew).clamp(MIN_SIDE, fw);
        let h = (h * grow / skew).clamp(MIN_SIDE, fh);
        let cx = cx.clamp(w / 2.0, fw - w / 2.0);
        let cy = cy.clamp(h / 2.0, fh - h / 2.0);
        BBox { x_tl: cx - w / 2.0, y_tl: cy - h / 2.0, x_br: cx + w / 2.0, y_br: cy + h / 2.0 }
    }
}

/// Generated frames (`[1, 3, H, W]`, values in `[0, 1]`) and their boxes.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub frames: Vec<Tensor>,
    pub boxes: Vec<BBox>,
}

/// Paints pixels whose centre lies inside `b`.
pub fn fill_box(frame: &mut Tensor, b: &BBox, color: [f64; 3]) {
    let [_, _, h, w] = frame.shape();
    let span = |lo: f64, hi: f64, n: usize| {
        let first = (lo - 0.5).ceil().max(0.0) as usize;
        let end = ((hi - 0.5).ceil().max(0.0) as usize).min(n);
        first..end
    };
    let (xs, ys) = (span(b.x_tl, b.x_br, w), span(b.y_tl, b.y_br, h));
    for (c, &v) in color.iter().enumerate() {
        for y in ys.clone() {
            for x in xs.clone() {
                frame.set(0, c, y, x, v);
            }
        }
    }
}

/// Renders one frame: background, optional distractor, target, then noise
/// drawn from `rng` in row-major channel order.
pub fn render_frame(
    width: usize,
    height: usize,
    background: [f64; 3],
    layers: &[(BBox, [f64; 3])],
    noise: f64,
    rng: &mut Lcg,
) -> Tensor {
    let mut f = Tensor::from_fn([1, 3, height, width], |_, c, _, _| background[c]);
    for (b, color) in layers {
        fill_box(&mut f, b, *color);
    }
    if noise > 0.0 {
        for v in f.data_mut() {
            *v = (*v + noise * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0);
        }
    }
    f
}

pub fn generate(spec: &SequenceSpec) -> Result<Sequence> {
    spec.validate()?;
    let mut rng = Lcg::new(spec.seed);
    let mut frames = Vec::with_capacity(spec.length);
    let mut boxes = Vec::with_capacity(spec.length);
    for t in 0..spec.length {
        let b = spec.box_at(t);
        let mut layers = Vec::with_capacity(2);
        if spec.distractor {
            layers.push((spec.distractor_at(t), spec.distractor_color));
        }
        layers.push((b, spec.foreground));
        frames.push(render_frame(spec.frame_width, spec.frame_height, spec.background, &layers, spec.noise, &mut rng));
        boxes.push(b);
    }
    Ok(Sequence { frames, boxes })
}
