//! Per-level adjustment convolutions and corner heads, their forward pass and
//! the binary parameter file.
//!
//! A template's features are adjusted by a 3×3 conv and averaged to a 1×1
//! embedding per channel, so correlating it over the adjusted search features
//! keeps the search grid: heatmap cell `g` sits at patch pixel `g · stride`.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{Tape, Var};
use crate::corner_pooling::{
    conv_on_tape, corner_head, corner_head_on_tape, ConvParams, Corner, CornerHeadParams, HeadVars,
};
use crate::correlation::depthwise_correlate;
use crate::error::{shape_err, Error, Result};
use crate::synth::Lcg;
use crate::tensor::Tensor;

/// Parameters of one feature level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelParams {
    pub adjust_template: ConvParams,
    pub adjust_search: ConvParams,
    pub top_left: CornerHeadParams,
    pub bottom_right: CornerHeadParams,
}

impl LevelParams {
    pub fn zeros(channels: usize, width: usize) -> Self {
        Self {
            adjust_template: ConvParams::zeros(channels, channels, 3),
            adjust_search: ConvParams::zeros(channels, channels, 3),
            top_left: CornerHeadParams::zeros(channels, width),
            bottom_right: CornerHeadParams::zeros(channels, width),
        }
    }

    pub fn random(channels: usize, width: usize, rng: &mut Lcg) -> Self {
        let adjust = |rng: &mut Lcg| {
            let mut p = ConvParams::random(channels, channels, 3, rng);
            // start near identity so correlation is informative from step 0
            for c in 0..channels {
                let v = p.kernel.at(c, c, 1, 1);
                p.kernel.set(c, c, 1, 1, v + 1.0);
            }
            p
        };
        Self {
            adjust_template: adjust(rng),
            adjust_search: adjust(rng),
            top_left: CornerHeadParams::random(channels, width, rng),
            bottom_right: CornerHeadParams::random(channels, width, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.adjust_search.in_channels()
    }

    fn convs(&self) -> Vec<&ConvParams> {
        let mut v = vec![&self.adjust_template, &self.adjust_search];
        v.extend(self.top_left.convs());
        v.extend(self.bottom_right.convs());
        v
    }

    fn convs_mut(&mut self) -> Vec<&mut ConvParams> {
        let mut v = vec![&mut self.adjust_template, &mut self.adjust_search];
        v.extend(self.top_left.convs_mut());
        v.extend(self.bottom_right.convs_mut());
        v
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        for (name, p) in [("adjust_template", &self.adjust_template), ("adjust_search", &self.adjust_search)] {
            if p.kernel.shape() != [c, c, 3, 3] || p.bias.shape() != [1, c, 1, 1] {
                return Err(shape_err!("{name}: expected {c}x{c}x3x3, got {:?}", p.kernel.shape()));
            }
        }
        for head in [&self.top_left, &self.bottom_right] {
            validate_head(head, c)?;
        }
        Ok(())
    }
}

fn validate_head(h: &CornerHeadParams, in_c: usize) -> Result<()> {
    let w = h.post.out_channels();
    let expect = [
        ("pre_a", &h.pre_a, w, in_c, 3),
        ("pre_b", &h.pre_b, w, in_c, 3),
        ("post", &h.post, w, w, 3),
        ("shortcut_a", &h.shortcut_a, w, in_c, 1),
        ("shortcut_b", &h.shortcut_b, w, in_c, 1),
        ("heat_mid", &h.heat_mid, w, w, 3),
        ("heat_out", &h.heat_out, 1, w, 1),
        ("offset_mid", &h.offset_mid, w, w, 3),
        ("offset_out", &h.offset_out, 2, w, 1),
    ];
    for (name, p, o, i, k) in expect {
        if p.kernel.shape() != [o, i, k, k] || p.bias.shape() != [1, o, 1, 1] {
            return Err(shape_err!(
                "{name}: expected kernel {:?}, got {:?} (bias {:?})",
                [o, i, k, k],
                p.kernel.shape(),
                p.bias.shape()
            ));
        }
    }
    Ok(())
}

/// Parameters for levels 3, 4 and 5.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub levels: [LevelParams; 3],
}

/// Raw outputs of one level: logits `[n,1,h,w]` and offsets `[n,2,h,w]` per corner.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutput {
    pub tl_logits: Tensor,
    pub tl_offsets: Tensor,
    pub br_logits: Tensor,
    pub br_offsets: Tensor,
}

impl NetworkParams {
    pub fn zeros(channels: usize, width: usize) -> Self {
        Self { levels: [0, 1, 2].map(|_| LevelParams::zeros(channels, width)) }
    }

    pub fn random(channels: usize, width: usize, seed: u64) -> Self {
        let mut rng = Lcg::new(seed);
        Self { levels: [0, 1, 2].map(|_| LevelParams::random(channels, width, &mut rng)) }
    }

    /// Hand-set weights that turn [`super::OracleExtractor`] features into
    /// exact corner heatmaps (logit 2 on the corner cell, at most −2 elsewhere)
    /// and offsets equal to the encoded sub-cell fractions.
    pub fn oracle() -> Self {
        let c = super::OracleExtractor::CHANNELS;
        let head = |which: Corner| {
            let mut p = CornerHeadParams::identity(c);
            p.heat_out = ConvParams::zeros(1, c, 1);
            p.offset_out = ConvParams::zeros(2, c, 1);
            // indicator channels and (x, y) fraction channels of the two boundaries
            let (ind, fx, fy) = match which {
                Corner::TopLeft => ([0, 1], 5, 4),
                Corner::BottomRight => ([2, 3], 7, 6),
            };
            for i in ind {
                p.heat_out.kernel.set(0, i, 0, 0, 2.0);
            }
            p.heat_out.bias.set(0, 0, 0, 0, -6.0);
            p.offset_out.kernel.set(0, fx, 0, 0, 0.5);
            p.offset_out.kernel.set(1, fy, 0, 0, 0.5);
            p
        };
        let level = LevelParams {
            adjust_template: ConvParams::identity(c, 3),
            adjust_search: ConvParams::identity(c, 3),
            top_left: head(Corner::TopLeft),
            bottom_right: head(Corner::BottomRight),
        };
        Self { levels: [level.clone(), level.clone(), level] }
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for l in &self.levels {
            if l.channels() != c {
                return Err(shape_err!("levels disagree on channel count"));
            }
            l.validate()?;
        }
        Ok(())
    }

    /// All convolutions in file order.
    pub fn convs(&self) -> Vec<&ConvParams> {
        self.levels.iter().flat_map(|l| l.convs()).collect()
    }

    pub fn convs_mut(&mut self) -> Vec<&mut ConvParams> {
        self.levels.iter_mut().flat_map(|l| l.convs_mut()).collect()
    }

    /// Adjusted 1×1 template embedding `[n, c, 1, 1]` for one level.
    pub fn embed_template(&self, level: usize, features: &Tensor) -> Result<Tensor> {
        let adj = self.levels[level].adjust_template.apply(features)?;
        let [n, c, h, w] = adj.shape();
        let area = (h * w) as f64;
        let data = (0..n * c).map(|p| adj.data()[p * h * w..][..h * w].iter().sum::<f64>() / area).collect();
        Tensor::new([n, c, 1, 1], data)
    }

    /// Heads of one level given the four boundary embeddings and raw search features.
    pub fn forward_level(&self, level: usize, embeddings: &[Tensor; 4], search: &Tensor) -> Result<LevelOutput> {
        let p = &self.levels[level];
        let s = p.adjust_search.apply(search)?;
        let [f_t, f_l, f_b, f_r] = [0, 1, 2, 3].map(|i| depthwise_correlate(&embeddings[i], &s));
        let (tl_logits, tl_offsets) = corner_head(&f_t?, &f_l?, &p.top_left, Corner::TopLeft)?;
        let (br_logits, br_offsets) = corner_head(&f_b?, &f_r?, &p.bottom_right, Corner::BottomRight)?;
        Ok(LevelOutput { tl_logits, tl_offsets, br_logits, br_offsets })
    }
}

/// Tape handles for one level, in file order.
pub(crate) struct LevelVars {
    pub adjust_template: (Var, Var),
    pub adjust_search: (Var, Var),
    pub top_left: HeadVars,
    pub bottom_right: HeadVars,
}

impl LevelVars {
    pub fn register(p: &LevelParams, tape: &mut Tape) -> Self {
        let reg = |c: &ConvParams, tape: &mut Tape| (tape.param(c.kernel.clone()), tape.param(c.bias.clone()));
        Self {
            adjust_template: reg(&p.adjust_template, tape),
            adjust_search: reg(&p.adjust_search, tape),
            top_left: p.top_left.register(tape),
            bottom_right: p.bottom_right.register(tape),
        }
    }

    /// Parameter vars in the same order as [`NetworkParams::convs`] (kernel, bias each).
    pub fn vars(&self) -> Vec<(Var, Var)> {
        let mut v = vec![self.adjust_template, self.adjust_search];
        v.extend(self.top_left.0);
        v.extend(self.bottom_right.0);
        v
    }

    /// [`NetworkParams::forward_level`] on the tape; returns
    /// `(tl_logits, tl_offsets, br_logits, br_offsets)`.
    pub fn forward(&self, tape: &mut Tape, templates: [Var; 4], search: Var) -> Result<[Var; 4]> {
        let s = conv_on_tape(tape, search, self.adjust_search)?;
        let mut f = Vec::with_capacity(4);
        for t in templates {
            let adj = conv_on_tape(tape, t, self.adjust_template)?;
            let emb = tape.global_avg_pool(adj);
            f.push(tape.correlate(emb, s)?);
        }
        let (tl, tlo) = corner_head_on_tape(tape, f[0], f[1], &self.top_left, Corner::TopLeft)?;
        let (br, bro) = corner_head_on_tape(tape, f[2], f[3], &self.bottom_right, Corner::BottomRight)?;
        Ok([tl, tlo, br, bro])
    }
}

const MAGIC: &[u8; 4] = b"SCHP";
const VERSION: u32 = 1;

/// Writes parameters: magic `SCHP`, u32 version, u32 tensor count, four u32
/// extents per tensor, then every tensor's values as little-endian f64, all
/// in [`NetworkParams::convs`] order with kernel before bias.
pub fn write_params(params: &NetworkParams, w: &mut impl Write) -> Result<()> {
    let tensors: Vec<&Tensor> = params.convs().into_iter().flat_map(|c| [&c.kernel, &c.bias]).collect();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in &tensors {
        for d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for t in &tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<NetworkParams> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| Error::Format("parameter file truncated".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("not a parameter file (bad magic)".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let count = u32_at(take(4)?) as usize;
    let mut shapes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut s = [0usize; 4];
        for d in &mut s {
            *d = u32_at(take(4)?) as usize;
        }
        shapes.push(s);
    }
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for s in shapes {
        let len = s.iter().product::<usize>();
        let bytes = take(len.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor::new(s, data).map_err(|e| Error::Format(e.to_string()))?);
    }
    if take(1).is_ok() {
        return Err(Error::Format("trailing bytes after parameter data".into()));
    }
    let per_level = 2 * (2 + 2 * 9);
    if tensors.len() != 3 * per_level {
        return Err(Error::Format(format!("expected {} tensors, found {}", 3 * per_level, tensors.len())));
    }
    let c = tensors[0].shape()[0];
    let w = tensors[4].shape()[0];
    let mut params = NetworkParams::zeros(c, w);
    let mut it = tensors.into_iter();
    for conv in params.convs_mut() {
        conv.kernel = it.next().expect("counted");
        conv.bias = it.next().expect("counted");
    }
    params.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(params)
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_params(params, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    read_params(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
