//! Dense rank-4 tensors and the forward kernels the rest of the crate builds on.
//!
//! Storage is a flat row-major `Vec<f64>` in `(batch, channel, height, width)`
//! order, width fastest. There are no views or strides; every kernel computes
//! its own index arithmetic.
//!
//! With the `parallel` feature, kernels split work across output planes only.
//! Each plane is accumulated in exactly the sequential order, so results are
//! bit-identical with and without the feature.

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and its flat row-major data.
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(shape_err!("all extents must be >= 1, got {shape:?}"));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(shape_err!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// Panics if any extent is zero.
    pub fn full(shape: [usize; 4], value: f64) -> Self {
        assert!(!shape.contains(&0), "zero extent in {shape:?}");
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Single-channel `1×1×h×w` tensor from rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(shape_err!("ragged rows"));
        }
        Self::new([1, 1, h, w], rows.concat())
    }

    pub fn from_fn(
        shape: [usize; 4],
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(shape);
        let [n, c, h, w] = shape;
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f(b, ch, y, x);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    pub fn width(&self) -> usize {
        self.shape[3]
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// The `h×w` plane of sample `n`, channel `c`.
    /// All channels of sample `n`, given it has `c` channels.
    pub(crate) fn plane_block(&self, n: usize, c: usize) -> &[f64] {
        let len = c * self.shape[2] * self.shape[3];
        &self.data[n * len..][..len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of sample `n` as a batch-1 tensor.
    pub fn sample(&self, n: usize) -> Self {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        Self {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    /// Concatenates equally shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Input("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(items.len() * first.len());
        let mut batch = 0;
        for t in items {
            if t.shape[1..] != [c, h, w] {
                return Err(shape_err!("stack: {:?} vs {:?}", t.shape, first.shape));
            }
            batch += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Self::new([batch, c, h, w], data)
    }

    pub(crate) fn require_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!(
                "{op}: shapes differ, {:?} vs {:?}",
                self.shape,
                other.shape
            ));
        }
        Ok(())
    }
}

/// Runs `f(plane_index, plane)` over consecutive `plane_len` chunks of `out`.
pub(crate) fn for_each_plane<F>(out: &mut [f64], plane_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(plane_len)
            .enumerate()
            .for_each(|(i, p)| f(i, p));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(plane_len)
            .enumerate()
            .for_each(|(i, p)| f(i, p));
    }
}

/// Output extent of a strided, padded window sweep, or `None` when the window
/// does not fit.
pub(crate) fn conv_out_extent(input: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

/// Range of output positions `o` for which `o*stride + k - padding` lands in `[0, input)`.
#[inline]
pub(crate) fn valid_out_range(
    out: usize,
    input: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> std::ops::Range<usize> {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    // o*stride + k < input + padding
    let hi = if input + padding > k {
        ((input + padding - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    lo.min(hi)..hi
}

/// Cross-correlation (no kernel flip) of `input` with `kernel[outC, inC, kH, kW]`
/// plus a per-output-channel bias.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let [n, in_c, in_h, in_w] = input.shape();
    let [out_c, k_in_c, k_h, k_w] = kernel.shape();
    if k_in_c != in_c {
        return Err(shape_err!(
            "conv2d: kernel expects {k_in_c} input channels, input has {in_c}"
        ));
    }
    if bias.len() != out_c {
        return Err(shape_err!(
            "conv2d: bias has {} entries for {out_c} output channels",
            bias.len()
        ));
    }
    if stride == 0 {
        return Err(Error::Param("conv2d: stride must be positive".into()));
    }
    let (out_h, out_w) = match (
        conv_out_extent(in_h, k_h, stride, padding),
        conv_out_extent(in_w, k_w, stride, padding),
    ) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(shape_err!(
                "conv2d: {k_h}x{k_w} kernel larger than padded {in_h}x{in_w} input"
            ))
        }
    };

    let geo = ConvGeometry { in_c, in_h, in_w, k_h, k_w, out_h, out_w, stride, padding };
    let (kk, pp) = (geo.rows(), out_h * out_w);
    let mut out = vec![0.0; n * out_c * pp];
    for_each_plane(&mut out, out_c * pp, |b, dst| {
        for (oc, plane) in dst.chunks_mut(pp).enumerate() {
            plane.fill(bias[oc]);
        }
        let col = geo.im2col(input.plane_block(b, in_c));
        gemm(out_c, kk, pp, kernel.data(), false, &col, false, dst);
    });
    Tensor::new([n, out_c, out_h, out_w], out)
}

/// Sizes of one convolution, shared by the unfolding helpers.
struct ConvGeometry {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    /// `[inC·kH·kW, outH·outW]` matrix of input windows, zero where padded.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let pp = self.out_h * self.out_w;
        let mut col = vec![0.0; self.rows() * pp];
        let mut row = 0;
        for ic in 0..self.in_c {
            let src = &x[ic * self.in_h * self.in_w..][..self.in_h * self.in_w];
            for ky in 0..self.k_h {
                let rows = valid_out_range(self.out_h, self.in_h, ky, self.stride, self.padding);
                for kx in 0..self.k_w {
                    let cols = valid_out_range(self.out_w, self.in_w, kx, self.stride, self.padding);
                    let dst = &mut col[row * pp..][..pp];
                    for oy in rows.clone() {
                        let iy = oy * self.stride + ky - self.padding;
                        for ox in cols.clone() {
                            dst[oy * self.out_w + ox] = src[iy * self.in_w + ox * self.stride + kx - self.padding];
                        }
                    }
                    row += 1;
                }
            }
        }
        col
    }

    /// Adds the columns of `col` back onto the input positions they came from.
    fn col2im(&self, col: &[f64], x: &mut [f64]) {
        let pp = self.out_h * self.out_w;
        let mut row = 0;
        for ic in 0..self.in_c {
            let dst = &mut x[ic * self.in_h * self.in_w..][..self.in_h * self.in_w];
            for ky in 0..self.k_h {
                let rows = valid_out_range(self.out_h, self.in_h, ky, self.stride, self.padding);
                for kx in 0..self.k_w {
                    let cols = valid_out_range(self.out_w, self.in_w, kx, self.stride, self.padding);
                    let src = &col[row * pp..][..pp];
                    for oy in rows.clone() {
                        let iy = oy * self.stride + ky - self.padding;
                        for ox in cols.clone() {
                            dst[iy * self.in_w + ox * self.stride + kx - self.padding] += src[oy * self.out_w + ox];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `c += op(a) · op(b)` for row-major `a` (`m×k`, or `k×m` when transposed)
/// and `b` (`k×n`, or `n×k` when transposed).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the assertion above keeps every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 1.0, c.as_mut_ptr(), n as isize, 1);
    }
}

fn geometry(input_shape: [usize; 4], kernel_shape: [usize; 4], out_shape: [usize; 4], stride: usize, padding: usize) -> ConvGeometry {
    let [_, in_c, in_h, in_w] = input_shape;
    let [_, _, k_h, k_w] = kernel_shape;
    let [_, _, out_h, out_w] = out_shape;
    ConvGeometry { in_c, in_h, in_w, k_h, k_w, out_h, out_w, stride, padding }
}

/// Gradient of [`conv2d`] with respect to its input.
pub(crate) fn conv2d_grad_input(
    grad_out: &Tensor,
    kernel: &Tensor,
    input_shape: [usize; 4],
    stride: usize,
    padding: usize,
) -> Tensor {
    let [n, in_c, in_h, in_w] = input_shape;
    let out_c = kernel.shape()[0];
    let geo = geometry(input_shape, kernel.shape(), grad_out.shape(), stride, padding);
    let (kk, pp) = (geo.rows(), geo.out_h * geo.out_w);
    let mut out = vec![0.0; n * in_c * in_h * in_w];
    for_each_plane(&mut out, in_c * in_h * in_w, |b, dst| {
        let mut col = vec![0.0; kk * pp];
        gemm(kk, out_c, pp, kernel.data(), true, grad_out.plane_block(b, out_c), false, &mut col);
        geo.col2im(&col, dst);
    });
    Tensor::new(input_shape, out).expect("input shape is valid")
}

/// Gradients of [`conv2d`] with respect to kernel and bias.
pub(crate) fn conv2d_grad_params(
    grad_out: &Tensor,
    input: &Tensor,
    kernel_shape: [usize; 4],
    stride: usize,
    padding: usize,
) -> (Tensor, Vec<f64>) {
    let [n, in_c, ..] = input.shape();
    let out_c = kernel_shape[0];
    let geo = geometry(input.shape(), kernel_shape, grad_out.shape(), stride, padding);
    let (kk, pp) = (geo.rows(), geo.out_h * geo.out_w);
    let mut gk = vec![0.0; out_c * kk];
    for b in 0..n {
        let col = geo.im2col(input.plane_block(b, in_c));
        gemm(out_c, pp, kk, grad_out.plane_block(b, out_c), false, &col, true, &mut gk);
    }
    let g = grad_out.data();
    let mut gb = vec![0.0; out_c];
    for (oc, slot) in gb.iter_mut().enumerate() {
        for b in 0..n {
            *slot += g[(b * out_c + oc) * pp..][..pp].iter().sum::<f64>();
        }
    }
    (
        Tensor::new(kernel_shape, gk).expect("kernel shape is valid"),
        gb,
    )
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, |x, y| x + y)
}

/// Maximum over the centred `window×window` neighbourhood of every element.
/// Out-of-bounds positions are ignored, which equals edge replication.
pub fn window_max(input: &Tensor, window: usize) -> Result<Tensor> {
    let [_, _, h, w] = input.shape();
    if window == 0 || window % 2 == 0 {
        return Err(Error::Param(format!(
            "window_max: window must be odd and positive, got {window}"
        )));
    }
    if window > h.max(w) {
        return Err(Error::Param(format!(
            "window_max: window {window} exceeds {h}x{w} plane"
        )));
    }
    let r = window / 2;
    let mut out = input.data().to_vec();
    let src = input.data();
    for_each_plane(&mut out, h * w, |idx, plane| {
        let p = &src[idx * h * w..][..h * w];
        // max is exact, so the separable pass matches the direct 2-D window.
        let mut rows = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                rows[y * w + x] = p[y * w + lo..=y * w + hi]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            for x in 0..w {
                plane[y * w + x] = (lo..=hi)
                    .map(|yy| rows[yy * w + x])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
    });
    Tensor::new(input.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_conv(input: &Tensor, kernel: &Tensor, bias: &[f64], s: usize, p: usize) -> Tensor {
        let [n, ic, h, w] = input.shape();
        let [oc, _, kh, kw] = kernel.shape();
        let oh = (h + 2 * p - kh) / s + 1;
        let ow = (w + 2 * p - kw) / s + 1;
        Tensor::from_fn([n, oc, oh, ow], |b, o, y, x| {
            let mut acc = bias[o];
            for c in 0..ic {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (y * s + ky) as isize - p as isize;
                        let ix = (x * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += kernel.at(o, c, ky, kx) * input.at(b, c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn lcg_tensor(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = crate::synth::Lcg::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.next_f64() * 2.0 - 1.0)
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new([1, 0, 2, 2], vec![]).is_err());
        assert!(Tensor::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
        let x = Tensor::zeros([1, 2, 4, 4]);
        let k = Tensor::zeros([1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &k, &[0.0], 1, 0), Err(Error::Shape(_))));
        assert!(add(&x, &Tensor::zeros([1, 1, 4, 4])).is_err());
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap();
        let k = Tensor::scalar(1.0);
        assert_eq!(conv2d(&x, &k, &[0.0], 1, 0).unwrap(), x);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Tensor::zeros([2, 3, 5, 5]);
        let k = lcg_tensor([4, 3, 3, 3], 1);
        let y = conv2d(&x, &k, &[0.5, -1.0, 2.0, 0.0], 2, 1).unwrap();
        for o in 0..4 {
            assert!(y.plane(1, o).iter().all(|&v| v == [0.5, -1.0, 2.0, 0.0][o]));
        }
    }

    #[test]
    fn hand_evaluated_conv() {
        let x = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let k = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let y = conv2d(&x, &k, &[0.0], 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_matches_naive_over_strides_and_padding() {
        for (s, p, k) in [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 1), (3, 2, 5), (1, 2, 3)] {
            let x = lcg_tensor([2, 3, 9, 11], 7 + s as u64);
            let w = lcg_tensor([4, 3, k, k], 11 + p as u64);
            let b = [0.1, 0.2, -0.3, 0.0];
            let fast = conv2d(&x, &w, &b, s, p).unwrap();
            let slow = naive_conv(&x, &w, &b, s, p);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elementwise_ops() {
        let x = Tensor::new([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).data(), &[0.5]);
        assert_eq!(add(&x, &Tensor::zeros([1, 1, 1, 3])).unwrap(), x);
    }

    #[test]
    fn window_max_examples() {
        let c = Tensor::full([1, 2, 4, 4], 3.5);
        assert_eq!(window_max(&c, 3).unwrap(), c);

        let mut delta = Tensor::zeros([1, 1, 5, 5]);
        delta.set(0, 0, 2, 2, 1.0);
        let y = window_max(&delta, 3).unwrap();
        for yy in 0..5 {
            for xx in 0..5 {
                let inside = (1..=3).contains(&yy) && (1..=3).contains(&xx);
                assert_eq!(y.at(0, 0, yy, xx), if inside { 1.0 } else { 0.0 });
            }
        }

        let row = Tensor::new([1, 1, 1, 5], vec![0.0, 2.0, 1.0, 0.0, 3.0]).unwrap();
        assert_eq!(window_max(&row, 3).unwrap().data(), &[2.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn window_max_rejects_even_or_oversized() {
        let x = Tensor::zeros([1, 1, 4, 4]);
        assert!(matches!(window_max(&x, 2), Err(Error::Param(_))));
        assert!(matches!(window_max(&x, 5), Err(Error::Param(_))));
        assert!(matches!(window_max(&x, 0), Err(Error::Param(_))));
    }

    fn brute_window_max(x: &Tensor, win: usize) -> Tensor {
        let [_, _, h, w] = x.shape();
        let r = (win / 2) as isize;
        Tensor::from_fn(x.shape(), |n, c, y, xx| {
            let mut m = f64::NEG_INFINITY;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xc) = (y as isize + dy, xx as isize + dx);
                    if yy >= 0 && xc >= 0 && (yy as usize) < h && (xc as usize) < w {
                        m = m.max(x.at(n, c, yy as usize, xc as usize));
                    }
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn identity_conv_any_input(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, c in 1usize..4) {
            let x = lcg_tensor([1, c, h, w], seed);
            let k = Tensor::from_fn([c, c, 1, 1], |o, i, _, _| if o == i { 1.0 } else { 0.0 });
            prop_assert_eq!(conv2d(&x, &k, &vec![0.0; c], 1, 0).unwrap(), x);
        }

        #[test]
        fn relu_idempotent_and_sigmoid_open_interval(seed in any::<u64>()) {
            let x = lcg_tensor([1, 2, 4, 4], seed).map(|v| v * 30.0);
            let r = relu(&x);
            prop_assert_eq!(relu(&r), r);
            prop_assert!(sigmoid(&x).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn window_max_matches_brute_force(seed in any::<u64>(), win in prop::sample::select(vec![1usize, 3, 5, 7])) {
            let x = lcg_tensor([1, 2, 16, 16], seed);
            let y = window_max(&x, win).unwrap();
            prop_assert!(y.data().iter().zip(x.data()).all(|(a, b)| a >= b));
            prop_assert_eq!(y, brute_window_max(&x, win));
        }
    }
}
