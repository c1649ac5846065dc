//! Depth-wise cross-correlation of template features over search features.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{for_each_plane, Tensor};

/// Per-channel valid cross-correlation: channel `c` of the output is
/// `search[c]` correlated with `template[c]` used as the kernel.
///
/// Batches must match; sample `n` of the template is applied to sample `n`
/// of the search tensor.
pub fn depthwise_correlate(template: &Tensor, search: &Tensor) -> Result<Tensor> {
    let [tn, tc, th, tw] = template.shape();
    let [n, c, h, w] = search.shape();
    if tc != c {
        return Err(shape_err!(
            "depthwise_correlate: template has {tc} channels, search has {c}"
        ));
    }
    if tn != n {
        return Err(shape_err!(
            "depthwise_correlate: template batch {tn} vs search batch {n}"
        ));
    }
    if th > h || tw > w {
        return Err(shape_err!(
            "depthwise_correlate: template {th}x{tw} larger than search {h}x{w}"
        ));
    }
    let (oh, ow) = (h - th + 1, w - tw + 1);
    let mut out = vec![0.0; n * c * oh * ow];
    let (t, s) = (template.data(), search.data());
    for_each_plane(&mut out, oh * ow, |p, plane| {
        let kern = &t[p * th * tw..][..th * tw];
        let src = &s[p * h * w..][..h * w];
        for ky in 0..th {
            for kx in 0..tw {
                let k = kern[ky * tw + kx];
                if k == 0.0 {
                    continue;
                }
                for oy in 0..oh {
                    let srow = &src[(oy + ky) * w + kx..][..ow];
                    let drow = &mut plane[oy * ow..][..ow];
                    for (d, v) in drow.iter_mut().zip(srow) {
                        *d += k * v;
                    }
                }
            }
        }
    });
    Tensor::new([n, c, oh, ow], out)
}

/// Gradients of [`depthwise_correlate`] with respect to (template, search).
pub(crate) fn depthwise_correlate_grads(
    grad_out: &Tensor,
    template: &Tensor,
    search: &Tensor,
) -> (Tensor, Tensor) {
    let [_, _, th, tw] = template.shape();
    let [_, _, h, w] = search.shape();
    let [_, _, oh, ow] = grad_out.shape();
    let (t, s, g) = (template.data(), search.data(), grad_out.data());

    let mut gs = vec![0.0; s.len()];
    for_each_plane(&mut gs, h * w, |p, plane| {
        let kern = &t[p * th * tw..][..th * tw];
        let go = &g[p * oh * ow..][..oh * ow];
        for ky in 0..th {
            for kx in 0..tw {
                let k = kern[ky * tw + kx];
                for oy in 0..oh {
                    for ox in 0..ow {
                        plane[(oy + ky) * w + ox + kx] += k * go[oy * ow + ox];
                    }
                }
            }
        }
    });

    let mut gt = vec![0.0; t.len()];
    for_each_plane(&mut gt, th * tw, |p, plane| {
        let src = &s[p * h * w..][..h * w];
        let go = &g[p * oh * ow..][..oh * ow];
        for ky in 0..th {
            for kx in 0..tw {
                let mut acc = 0.0;
                for oy in 0..oh {
                    for ox in 0..ow {
                        acc += go[oy * ow + ox] * src[(oy + ky) * w + ox + kx];
                    }
                }
                plane[ky * tw + kx] = acc;
            }
        }
    });
    (
        Tensor::new(template.shape(), gt).expect("template shape"),
        Tensor::new(search.shape(), gs).expect("search shape"),
    )
}

/// Boundary index in the order top, left, bottom, right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Top,
    Left,
    Bottom,
    Right,
}

impl Boundary {
    pub const ALL: [Boundary; 4] = [Boundary::Top, Boundary::Left, Boundary::Bottom, Boundary::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Template and search features of one backbone level.
#[derive(Clone, Debug)]
pub struct FeatureLevel {
    /// Backbone stage: 3, 4 or 5.
    pub level: u8,
    pub stride: usize,
    /// Features of the top, left, bottom and right boundary templates.
    pub templates: [Tensor; 4],
    pub search: Tensor,
}

impl FeatureLevel {
    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.level) {
            return Err(Error::Param(format!("feature level must be 3, 4 or 5, got {}", self.level)));
        }
        if self.stride == 0 {
            return Err(Error::Param("feature stride must be positive".into()));
        }
        let c = self.search.channels();
        if let Some(t) = self.templates.iter().find(|t| t.channels() != c) {
            return Err(shape_err!(
                "level {}: template has {} channels, search has {c}",
                self.level,
                t.channels()
            ));
        }
        Ok(())
    }
}

/// The four boundary correlation maps `[f_t, f_l, f_b, f_r]` of one level.
pub fn correlate_level(level: &FeatureLevel) -> Result<[Tensor; 4]> {
    level.validate()?;
    let [t, l, b, r] = &level.templates;
    Ok([
        depthwise_correlate(t, &level.search)?,
        depthwise_correlate(l, &level.search)?,
        depthwise_correlate(b, &level.search)?,
        depthwise_correlate(r, &level.search)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Lcg;
    use proptest::prelude::*;

    fn random(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = Lcg::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.next_f64() * 2.0 - 1.0)
    }

    fn brute(t: &Tensor, s: &Tensor) -> Tensor {
        let [n, c, th, tw] = t.shape();
        let [_, _, h, w] = s.shape();
        Tensor::from_fn([n, c, h - th + 1, w - tw + 1], |b, ch, y, x| {
            let mut acc = 0.0;
            for ky in 0..th {
                for kx in 0..tw {
                    acc += t.at(b, ch, ky, kx) * s.at(b, ch, y + ky, x + kx);
                }
            }
            acc
        })
    }

    #[test]
    fn zero_template_gives_zero_map() {
        let s = random([1, 3, 7, 7], 1);
        let out = depthwise_correlate(&Tensor::zeros([1, 3, 3, 3]), &s).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_template_reproduces_search() {
        let s = random([1, 3, 5, 6], 2);
        assert_eq!(depthwise_correlate(&Tensor::full([1, 3, 1, 1], 1.0), &s).unwrap(), s);
    }

    #[test]
    fn hand_evaluated_sum() {
        let s = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let t = Tensor::full([1, 1, 2, 2], 1.0);
        assert_eq!(depthwise_correlate(&t, &s).unwrap().data(), &[10.0]);
    }

    #[test]
    fn shape_errors() {
        let s = Tensor::zeros([1, 2, 4, 4]);
        assert!(depthwise_correlate(&Tensor::zeros([1, 3, 1, 1]), &s).is_err());
        assert!(depthwise_correlate(&Tensor::zeros([1, 2, 5, 1]), &s).is_err());
    }

    fn level(templates: [Tensor; 4], search: Tensor) -> FeatureLevel {
        FeatureLevel { level: 3, stride: 8, templates, search }
    }

    #[test]
    fn identical_templates_identical_maps() {
        let t = random([1, 2, 3, 3], 5);
        let maps = correlate_level(&level([t.clone(), t.clone(), t.clone(), t], random([1, 2, 8, 8], 6))).unwrap();
        assert!(maps.iter().all(|m| *m == maps[0]));
    }

    #[test]
    fn zero_search_zero_maps() {
        let ts = [0, 1, 2, 3].map(|i| random([1, 2, 3, 3], 10 + i));
        let maps = correlate_level(&level(ts, Tensor::zeros([1, 2, 8, 8]))).unwrap();
        assert!(maps.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn level_maps_match_brute_force() {
        let ts = [0, 1, 2, 3].map(|i| random([1, 4, 3, 2], 20 + i));
        let s = random([1, 4, 9, 7], 30);
        let maps = correlate_level(&level(ts.clone(), s.clone())).unwrap();
        for (m, t) in maps.iter().zip(&ts) {
            let b = brute(t, &s);
            assert!(m.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_level() {
        let ts = [0, 1, 2, 3].map(|_| Tensor::zeros([1, 2, 1, 1]));
        let mut l = level(ts, Tensor::zeros([1, 3, 4, 4]));
        assert!(correlate_level(&l).is_err());
        l.search = Tensor::zeros([1, 2, 4, 4]);
        l.level = 6;
        assert!(correlate_level(&l).is_err());
    }

    proptest! {
        #[test]
        fn output_shape_law(c in 1usize..4, th in 1usize..5, tw in 1usize..5, dh in 0usize..6, dw in 0usize..6) {
            let t = Tensor::zeros([1, c, th, tw]);
            let s = Tensor::zeros([1, c, th + dh, tw + dw]);
            prop_assert_eq!(depthwise_correlate(&t, &s).unwrap().shape(), [1, c, dh + 1, dw + 1]);
        }

        #[test]
        fn linear_in_search(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let t = random([1, 2, 3, 3], seed);
            let x = random([1, 2, 8, 8], seed ^ 1);
            let y = random([1, 2, 8, 8], seed ^ 2);
            let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
            let lhs = depthwise_correlate(&t, &mix).unwrap();
            let cx = depthwise_correlate(&t, &x).unwrap();
            let cy = depthwise_correlate(&t, &y).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * cx.data()[i] + b * cy.data()[i];
                prop_assert!((lhs.data()[i] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn matches_brute_force(seed in any::<u64>(), th in 1usize..4, tw in 1usize..4) {
            let t = random([2, 3, th, tw], seed);
            let s = random([2, 3, 7, 6], seed.wrapping_add(1));
            let fast = depthwise_correlate(&t, &s).unwrap();
            let slow = brute(&t, &s);
            prop_assert!(fast.data().iter().zip(slow.data()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
