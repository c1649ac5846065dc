use super::{pool, PoolDirection};
use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::synth::Lcg;
use crate::tensor::{self, Tensor};

/// Which corner a head predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Corner {
    /// Inputs are the top and left boundary maps; suffix pooling.
    TopLeft,
    /// Inputs are the bottom and right boundary maps; prefix pooling.
    BottomRight,
}

impl Corner {
    /// Pooling applied to the first and second input.
    pub fn directions(self) -> (PoolDirection, PoolDirection) {
        match self {
            Corner::TopLeft => (PoolDirection::SuffixW, PoolDirection::SuffixH),
            Corner::BottomRight => (PoolDirection::PrefixW, PoolDirection::PrefixH),
        }
    }
}

/// Kernel `[out, in, k, k]` and bias `[1, out, 1, 1]` of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn zeros(out_c: usize, in_c: usize, k: usize) -> Self {
        Self {
            kernel: Tensor::zeros([out_c, in_c, k, k]),
            bias: Tensor::zeros([1, out_c, 1, 1]),
        }
    }

    /// He-scaled uniform weights, zero bias.
    pub fn random(out_c: usize, in_c: usize, k: usize, rng: &mut Lcg) -> Self {
        let bound = (6.0 / (in_c * k * k) as f64).sqrt();
        Self {
            kernel: Tensor::from_fn([out_c, in_c, k, k], |_, _, _, _| (2.0 * rng.next_f64() - 1.0) * bound),
            bias: Tensor::zeros([1, out_c, 1, 1]),
        }
    }

    /// Maps input channel `i` to output channel `i` through the kernel centre.
    pub fn identity(c: usize, k: usize) -> Self {
        let mut p = Self::zeros(c, c, k);
        for i in 0..c {
            p.kernel.set(i, i, k / 2, k / 2, 1.0);
        }
        p
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }
    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }
    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    /// Same-size convolution (stride 1, padding k/2).
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        tensor::conv2d(x, &self.kernel, self.bias.data(), 1, self.kernel_size() / 2)
    }

    pub(crate) fn register(&self, tape: &mut Tape) -> (Var, Var) {
        (tape.param(self.kernel.clone()), tape.param(self.bias.clone()))
    }
}

pub(crate) fn conv_on_tape(tape: &mut Tape, x: Var, p: (Var, Var)) -> Result<Var> {
    let k = tape.value(p.0).shape()[2];
    tape.conv2d(x, p.0, p.1, 1, k / 2)
}

/// Heatmap logit bias of freshly initialised heads (sigmoid ≈ 0.1).
pub const HEAT_PRIOR_BIAS: f64 = -2.197_224_577_336_219;

/// Parameters of one corner head.
///
/// Dataflow: each input passes a 3×3 conv + ReLU, is pooled in its direction,
/// the two pooled maps are summed and passed through a 3×3 conv; the 1×1
/// projections of both raw inputs are added, followed by ReLU. The heatmap
/// and offset heads are each 3×3 conv + ReLU and a final 1×1 conv.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerHeadParams {
    pub pre_a: ConvParams,
    pub pre_b: ConvParams,
    pub post: ConvParams,
    pub shortcut_a: ConvParams,
    pub shortcut_b: ConvParams,
    pub heat_mid: ConvParams,
    pub heat_out: ConvParams,
    pub offset_mid: ConvParams,
    pub offset_out: ConvParams,
}

impl CornerHeadParams {
    pub fn zeros(in_c: usize, width: usize) -> Self {
        Self {
            pre_a: ConvParams::zeros(width, in_c, 3),
            pre_b: ConvParams::zeros(width, in_c, 3),
            post: ConvParams::zeros(width, width, 3),
            shortcut_a: ConvParams::zeros(width, in_c, 1),
            shortcut_b: ConvParams::zeros(width, in_c, 1),
            heat_mid: ConvParams::zeros(width, width, 3),
            heat_out: ConvParams::zeros(1, width, 1),
            offset_mid: ConvParams::zeros(width, width, 3),
            offset_out: ConvParams::zeros(2, width, 1),
        }
    }

    pub fn random(in_c: usize, width: usize, rng: &mut Lcg) -> Self {
        Self {
            pre_a: ConvParams::random(width, in_c, 3, rng),
            pre_b: ConvParams::random(width, in_c, 3, rng),
            post: ConvParams::random(width, width, 3, rng),
            shortcut_a: ConvParams::random(width, in_c, 1, rng),
            shortcut_b: ConvParams::random(width, in_c, 1, rng),
            heat_mid: ConvParams::random(width, width, 3, rng),
            heat_out: {
                let mut p = ConvParams::random(1, width, 1, rng);
                p.bias.set(0, 0, 0, 0, HEAT_PRIOR_BIAS);
                p
            },
            offset_mid: ConvParams::random(width, width, 3, rng),
            offset_out: ConvParams::random(2, width, 1, rng),
        }
    }

    /// Identity convolutions throughout (width = `c`); the heatmap head sums
    /// all channels and offset channel `o` copies feature channel `o mod c`.
    pub fn identity(c: usize) -> Self {
        let mut p = Self {
            pre_a: ConvParams::identity(c, 3),
            pre_b: ConvParams::identity(c, 3),
            post: ConvParams::identity(c, 3),
            shortcut_a: ConvParams::identity(c, 1),
            shortcut_b: ConvParams::identity(c, 1),
            heat_mid: ConvParams::identity(c, 3),
            heat_out: ConvParams::zeros(1, c, 1),
            offset_mid: ConvParams::identity(c, 3),
            offset_out: ConvParams::zeros(2, c, 1),
        };
        for i in 0..c {
            p.heat_out.kernel.set(0, i, 0, 0, 1.0);
        }
        for o in 0..2 {
            p.offset_out.kernel.set(o, o % c, 0, 0, 1.0);
        }
        p
    }

    pub fn in_channels(&self) -> usize {
        self.pre_a.in_channels()
    }

    /// Convolutions in serialisation order.
    pub fn convs(&self) -> [&ConvParams; 9] {
        [
            &self.pre_a,
            &self.pre_b,
            &self.post,
            &self.shortcut_a,
            &self.shortcut_b,
            &self.heat_mid,
            &self.heat_out,
            &self.offset_mid,
            &self.offset_out,
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut ConvParams; 9] {
        [
            &mut self.pre_a,
            &mut self.pre_b,
            &mut self.post,
            &mut self.shortcut_a,
            &mut self.shortcut_b,
            &mut self.heat_mid,
            &mut self.heat_out,
            &mut self.offset_mid,
            &mut self.offset_out,
        ]
    }

    pub(crate) fn register(&self, tape: &mut Tape) -> HeadVars {
        HeadVars(self.convs().map(|c| c.register(tape)))
    }
}

/// Tape handles of a [`CornerHeadParams`], same order as [`CornerHeadParams::convs`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct HeadVars(pub [(Var, Var); 9]);

/// Runs a corner head on two boundary correlation maps. Returns
/// `(heatmap_logits [n,1,h,w], offsets [n,2,h,w])`; logits are pre-sigmoid.
pub fn corner_head(
    f_a: &Tensor,
    f_b: &Tensor,
    params: &CornerHeadParams,
    which: Corner,
) -> Result<(Tensor, Tensor)> {
    if f_a.shape() != f_b.shape() {
        return Err(shape_err!(
            "corner_head: inputs differ, {:?} vs {:?}",
            f_a.shape(),
            f_b.shape()
        ));
    }
    let (dir_a, dir_b) = which.directions();
    let pa = pool(&tensor::relu(&params.pre_a.apply(f_a)?), dir_a);
    let pb = pool(&tensor::relu(&params.pre_b.apply(f_b)?), dir_b);
    let merged = params.post.apply(&tensor::add(&pa, &pb)?)?;
    let merged = tensor::add(&merged, &params.shortcut_a.apply(f_a)?)?;
    let merged = tensor::add(&merged, &params.shortcut_b.apply(f_b)?)?;
    let feat = tensor::relu(&merged);
    let heat = params.heat_out.apply(&tensor::relu(&params.heat_mid.apply(&feat)?))?;
    let offs = params.offset_out.apply(&tensor::relu(&params.offset_mid.apply(&feat)?))?;
    Ok((heat, offs))
}

/// [`corner_head`] recorded on a tape.
pub(crate) fn corner_head_on_tape(
    tape: &mut Tape,
    f_a: Var,
    f_b: Var,
    p: &HeadVars,
    which: Corner,
) -> Result<(Var, Var)> {
    if tape.value(f_a).shape() != tape.value(f_b).shape() {
        return Err(shape_err!("corner_head: input shapes differ"));
    }
    let [pre_a, pre_b, post, sc_a, sc_b, heat_mid, heat_out, off_mid, off_out] = p.0;
    let (dir_a, dir_b) = which.directions();
    let a = conv_on_tape(tape, f_a, pre_a)?;
    let a = tape.relu(a);
    let a = tape.pool(a, dir_a);
    let b = conv_on_tape(tape, f_b, pre_b)?;
    let b = tape.relu(b);
    let b = tape.pool(b, dir_b);
    let sum = tape.add(a, b)?;
    let merged = conv_on_tape(tape, sum, post)?;
    let sa = conv_on_tape(tape, f_a, sc_a)?;
    let merged = tape.add(merged, sa)?;
    let sb = conv_on_tape(tape, f_b, sc_b)?;
    let merged = tape.add(merged, sb)?;
    let feat = tape.relu(merged);
    let h = conv_on_tape(tape, feat, heat_mid)?;
    let h = tape.relu(h);
    let heat = conv_on_tape(tape, h, heat_out)?;
    let o = conv_on_tape(tape, feat, off_mid)?;
    let o = tape.relu(o);
    let offs = conv_on_tape(tape, o, off_out)?;
    Ok((heat, offs))
}
