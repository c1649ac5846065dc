//! Directional running-max pooling and the two-input corner head built on it.
//!
//! Bottom-right corners use prefix maxima (left→right along rows on the
//! bottom-boundary map, top→bottom along columns on the right-boundary map);
//! top-left corners use the mirrored suffix maxima.

mod head;

pub use head::{corner_head, ConvParams, Corner, CornerHeadParams, HEAT_PRIOR_BIAS};
pub(crate) use head::{conv_on_tape, corner_head_on_tape, HeadVars};

use crate::tensor::Tensor;

/// Scan direction of a running-max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolDirection {
    /// Along each row, left to right.
    PrefixW,
    /// Along each column, top to bottom.
    PrefixH,
    /// Along each row, right to left.
    SuffixW,
    /// Along each column, bottom to top.
    SuffixH,
}

impl PoolDirection {
    pub const ALL: [PoolDirection; 4] = [
        PoolDirection::PrefixW,
        PoolDirection::PrefixH,
        PoolDirection::SuffixW,
        PoolDirection::SuffixH,
    ];
}

/// Running max along `dir`, plus the flat input index each output copied from.
/// On ties the element met first in scan order keeps the slot.
pub(crate) fn pool_with_argmax(f: &Tensor, dir: PoolDirection) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = f.shape();
    let src = f.data();
    let mut out = vec![0.0; src.len()];
    let mut arg = vec![0usize; src.len()];
    let plane = h * w;
    for p in 0..n * c {
        let base = p * plane;
        // (lines, line length, first index, distance between lines, step along a line)
        let (lines, len, first, line_step, step) = match dir {
            PoolDirection::PrefixW => (h, w, base as isize, w as isize, 1),
            PoolDirection::SuffixW => (h, w, (base + w - 1) as isize, w as isize, -1),
            PoolDirection::PrefixH => (w, h, base as isize, 1, w as isize),
            PoolDirection::SuffixH => (w, h, (base + (h - 1) * w) as isize, 1, -(w as isize)),
        };
        for l in 0..lines {
            let mut idx = first + l as isize * line_step;
            let mut best = src[idx as usize];
            let mut best_at = idx as usize;
            for k in 0..len {
                if k > 0 {
                    idx += step;
                    let v = src[idx as usize];
                    if v > best {
                        best = v;
                        best_at = idx as usize;
                    }
                }
                out[idx as usize] = best;
                arg[idx as usize] = best_at;
            }
        }
    }
    (Tensor::new(f.shape(), out).expect("shape preserved"), arg)
}

pub fn pool(f: &Tensor, dir: PoolDirection) -> Tensor {
    pool_with_argmax(f, dir).0
}

/// Bottom pooling: `b[i][j] = max(f[i][j], b[i][j-1])`.
pub fn pool_prefix_max_w(f: &Tensor) -> Tensor {
    pool(f, PoolDirection::PrefixW)
}

/// Right pooling: `r[i][j] = max(f[i][j], r[i-1][j])`.
pub fn pool_prefix_max_h(f: &Tensor) -> Tensor {
    pool(f, PoolDirection::PrefixH)
}

/// Top pooling, right to left along rows.
pub fn pool_suffix_max_w(f: &Tensor) -> Tensor {
    pool(f, PoolDirection::SuffixW)
}

/// Left pooling, bottom to top along columns.
pub fn pool_suffix_max_h(f: &Tensor) -> Tensor {
    pool(f, PoolDirection::SuffixH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Lcg;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::new([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }
    fn col(v: &[f64]) -> Tensor {
        Tensor::new([1, 1, v.len(), 1], v.to_vec()).unwrap()
    }

    /// Segment maximum computed directly from the definition.
    fn brute(f: &Tensor, dir: PoolDirection) -> Tensor {
        let [_, _, h, w] = f.shape();
        Tensor::from_fn(f.shape(), |n, c, y, x| {
            let cells: Vec<(usize, usize)> = match dir {
                PoolDirection::PrefixW => (0..=x).map(|k| (y, k)).collect(),
                PoolDirection::SuffixW => (x..w).map(|k| (y, k)).collect(),
                PoolDirection::PrefixH => (0..=y).map(|k| (k, x)).collect(),
                PoolDirection::SuffixH => (y..h).map(|k| (k, x)).collect(),
            };
            cells
                .into_iter()
                .map(|(yy, xx)| f.at(n, c, yy, xx))
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    fn reverse_w(f: &Tensor) -> Tensor {
        let w = f.width();
        Tensor::from_fn(f.shape(), |n, c, y, x| f.at(n, c, y, w - 1 - x))
    }
    fn reverse_h(f: &Tensor) -> Tensor {
        let h = f.height();
        Tensor::from_fn(f.shape(), |n, c, y, x| f.at(n, c, h - 1 - y, x))
    }

    #[test]
    fn prefix_w_examples() {
        assert_eq!(pool_prefix_max_w(&row(&[2.0, 1.0, 3.0, 0.0])).data(), &[2.0, 2.0, 3.0, 3.0]);
        assert_eq!(pool_prefix_max_w(&row(&[0.0; 4])).data(), &[0.0; 4]);
        assert_eq!(pool_prefix_max_w(&row(&[5.0, 4.0, 3.0])).data(), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn prefix_h_examples() {
        assert_eq!(pool_prefix_max_h(&col(&[1.0, 0.0, 2.0])).data(), &[1.0, 1.0, 2.0]);
        let same = Tensor::full([1, 2, 3, 3], 4.0);
        assert_eq!(pool_prefix_max_h(&same), same);
        let single = row(&[3.0, 1.0, 2.0]);
        assert_eq!(pool_prefix_max_h(&single), single);
    }

    #[test]
    fn suffix_examples() {
        assert_eq!(pool_suffix_max_w(&row(&[2.0, 1.0, 3.0, 0.0])).data(), &[3.0, 3.0, 3.0, 0.0]);
        assert_eq!(pool_suffix_max_h(&col(&[2.0, 1.0, 3.0, 0.0])).data(), &[3.0, 3.0, 3.0, 0.0]);
        let z = Tensor::zeros([1, 1, 3, 4]);
        assert_eq!(pool_suffix_max_w(&z), z);
        assert_eq!(pool_suffix_max_h(&z), z);
    }

    #[test]
    fn argmax_prefers_first_in_scan_order() {
        let (_, arg) = pool_with_argmax(&row(&[1.0, 3.0, 3.0, 2.0]), PoolDirection::PrefixW);
        assert_eq!(arg, vec![0, 1, 1, 1]);
        let (_, arg) = pool_with_argmax(&row(&[1.0, 3.0, 3.0, 2.0]), PoolDirection::SuffixW);
        assert_eq!(arg, vec![2, 2, 2, 3]);
    }

    fn random(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = Lcg::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.next_f64() * 2.0 - 1.0)
    }

    proptest! {
        #[test]
        fn pooling_equals_segment_max(seed in any::<u64>(), h in 1usize..20, w in 1usize..20) {
            let f = random([1, 2, h, w], seed);
            for dir in PoolDirection::ALL {
                let p = pool(&f, dir);
                prop_assert_eq!(&p, &brute(&f, dir));
                prop_assert_eq!(&pool(&p, dir), &p);
            }
        }

        #[test]
        fn suffix_is_reversed_prefix(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
            let f = random([2, 1, h, w], seed);
            prop_assert_eq!(pool_suffix_max_w(&f), reverse_w(&pool_prefix_max_w(&reverse_w(&f))));
            prop_assert_eq!(pool_suffix_max_h(&f), reverse_h(&pool_prefix_max_h(&reverse_h(&f))));
        }

        #[test]
        fn prefix_is_monotone_along_scan(seed in any::<u64>()) {
            let f = random([1, 1, 9, 13], seed);
            let pw = pool_prefix_max_w(&f);
            let ph = pool_prefix_max_h(&f);
            for y in 0..9 {
                for x in 1..13 {
                    prop_assert!(pw.at(0, 0, y, x) >= pw.at(0, 0, y, x - 1));
                }
            }
            for y in 1..9 {
                for x in 0..13 {
                    prop_assert!(ph.at(0, 0, y, x) >= ph.at(0, 0, y - 1, x));
                }
            }
        }
    }
}
