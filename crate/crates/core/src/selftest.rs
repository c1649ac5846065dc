//! Built-in numerical checks: pooling against segment maxima, tape gradients
//! against central differences, the closed-form radius against enumeration,
//! and heatmap decoding against planted corners.

use std::time::{Duration, Instant};

use crate::autodiff::{grad_check, GradientReport};
use crate::corner_pooling::{corner_head_on_tape, pool, Corner, CornerHeadParams, PoolDirection};
use crate::decoding::{decode_level, to_patch_coords, HeatmapBundle};
use crate::error::Result;
use crate::synth::Lcg;
use crate::targets::{gaussian_radius, LossWeights, TargetMaps};
use crate::tensor::Tensor;

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub type PoolFn<'a> = &'a dyn Fn(&Tensor, PoolDirection) -> Tensor;

/// Uniform values in `[-1, 1)`.
pub fn random_tensor(shape: [usize; 4], rng: &mut Lcg) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| 2.0 * rng.next_f64() - 1.0)
}

/// Values bounded away from zero by `gap`, with random sign.
fn away_from_zero(shape: [usize; 4], gap: f64, rng: &mut Lcg) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = gap + rng.next_f64();
        if rng.next_f64() < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// Maximum of the segment each output position covers in direction `dir`.
pub fn segment_max(f: &Tensor, dir: PoolDirection) -> Tensor {
    let [_, _, h, w] = f.shape();
    Tensor::from_fn(f.shape(), |n, c, y, x| {
        let (ys, xs) = match dir {
            PoolDirection::PrefixW => (y..y + 1, 0..x + 1),
            PoolDirection::SuffixW => (y..y + 1, x..w),
            PoolDirection::PrefixH => (0..y + 1, x..x + 1),
            PoolDirection::SuffixH => (y..h, x..x + 1),
        };
        let mut m = f64::NEG_INFINITY;
        for yy in ys {
            for xx in xs.clone() {
                m = m.max(f.at(n, c, yy, xx));
            }
        }
        m
    })
}

fn mirror(f: &Tensor, horizontal: bool) -> Tensor {
    let [_, _, h, w] = f.shape();
    Tensor::from_fn(f.shape(), |n, c, y, x| if horizontal { f.at(n, c, y, w - 1 - x) } else { f.at(n, c, h - 1 - y, x) })
}

/// Compares `pool_fn` with segment maxima on `count` random tensors of up to
/// 4×8×32×32, and checks idempotence and prefix/suffix duality under reversal.
/// Returns the first discrepancy.
pub fn check_pooling(pool_fn: PoolFn, count: usize, seed: u64) -> std::result::Result<(), String> {
    let mut rng = Lcg::new(seed);
    for i in 0..count {
        let dims = [4, 8, 32, 32].map(|m| 1 + (rng.next_u64() % m as u64) as usize);
        let f = random_tensor(dims, &mut rng);
        for dir in PoolDirection::ALL {
            let p = pool_fn(&f, dir);
            if p != segment_max(&f, dir) {
                return Err(format!("tensor {i} {dims:?}: {dir:?} differs from segment maxima"));
            }
            if pool_fn(&p, dir) != p {
                return Err(format!("tensor {i} {dims:?}: {dir:?} is not idempotent"));
            }
        }
        for (pre, suf, horizontal) in [(PoolDirection::PrefixW, PoolDirection::SuffixW, true), (PoolDirection::PrefixH, PoolDirection::SuffixH, false)] {
            if mirror(&pool_fn(&mirror(&f, horizontal), pre), horizontal) != pool_fn(&f, suf) {
                return Err(format!("tensor {i} {dims:?}: {pre:?}/{suf:?} break reversal duality"));
            }
        }
    }
    Ok(())
}

/// Gradient checks of every differentiable kernel at one random draw; inputs
/// are sampled away from ReLU and smooth-L1 kinks and from pooling ties.
pub fn gradient_suite(seed: u64) -> Result<Vec<(&'static str, GradientReport)>> {
    let mut rng = Lcg::new(seed);
    let h = 1e-6;
    let mut out = Vec::new();

    let x = random_tensor([1, 2, 5, 6], &mut rng);
    let kernel = random_tensor([3, 2, 3, 3], &mut rng);
    let bias = random_tensor([1, 3, 1, 1], &mut rng);
    let weight = random_tensor([1, 3, 5, 6], &mut rng);
    let conv_input = grad_check(
        |t, x| {
            let (k, b, w) = (t.constant(kernel.clone()), t.constant(bias.clone()), t.constant(weight.clone()));
            let y = t.conv2d(x, k, b, 1, 1)?;
            let y = t.mul(y, w)?;
            Ok(t.sum(y))
        },
        &x,
        h,
    )?;
    let conv_kernel = grad_check(
        |t, k| {
            let (x, b, w) = (t.constant(x.clone()), t.constant(bias.clone()), t.constant(weight.clone()));
            let y = t.conv2d(x, k, b, 1, 1)?;
            let y = t.mul(y, w)?;
            Ok(t.sum(y))
        },
        &kernel,
        h,
    )?;
    out.push(("conv2d", conv_input.merge(&conv_kernel)));

    let s = random_tensor([1, 2, 4, 4], &mut rng).map(|v| 3.0 * v);
    let w = random_tensor([1, 2, 4, 4], &mut rng);
    out.push((
        "sigmoid",
        grad_check(
            |t, x| {
                let y = t.sigmoid(x);
                let w = t.constant(w.clone());
                let y = t.mul(y, w)?;
                Ok(t.sum(y))
            },
            &s,
            h,
        )?,
    ));

    // distinct values, spaced far wider than the probe step
    let mut vals: Vec<f64> = (0..2 * 6 * 6).map(|i| i as f64 * 0.01).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
    }
    let p = Tensor::new([1, 2, 6, 6], vals)?;
    let pw = random_tensor([1, 2, 6, 6], &mut rng);
    let mut pool_report: Option<GradientReport> = None;
    for dir in PoolDirection::ALL {
        let r = grad_check(
            |t, x| {
                let y = t.pool(x, dir);
                let w = t.constant(pw.clone());
                let y = t.mul(y, w)?;
                Ok(t.sum(y))
            },
            &p,
            h,
        )?;
        pool_report = Some(match pool_report {
            None => r,
            Some(acc) => acc.merge(&r),
        });
    }
    out.push(("pooling", pool_report.expect("four directions")));

    let head = CornerHeadParams::random(2, 3, &mut rng);
    let fa = away_from_zero([1, 2, 5, 5], 0.05, &mut rng);
    let fb = away_from_zero([1, 2, 5, 5], 0.05, &mut rng);
    let hw = random_tensor([1, 1, 5, 5], &mut rng);
    let ow = random_tensor([1, 2, 5, 5], &mut rng);
    let mut head_report: Option<GradientReport> = None;
    for which in [Corner::TopLeft, Corner::BottomRight] {
        let r = grad_check(
            |t, a| {
                let vars = head.register(t);
                let b = t.constant(fb.clone());
                let (heat, off) = corner_head_on_tape(t, a, b, &vars, which)?;
                let (hw, ow) = (t.constant(hw.clone()), t.constant(ow.clone()));
                let (heat, off) = (t.mul(heat, hw)?, t.mul(off, ow)?);
                let (sh, so) = (t.sum(heat), t.sum(off));
                t.add(sh, so)
            },
            &fa,
            h,
        )?;
        head_report = Some(match head_report {
            None => r,
            Some(acc) => acc.merge(&r),
        });
    }
    out.push(("corner_head", head_report.expect("two corners")));

    let maps = TargetMaps::build((8, 8), 8, &[(21.0, 37.0)], &[(40.0, 30.0)], 0.5)?;
    let pred = Tensor::from_fn([1, 1, 8, 8], |_, _, _, _| 0.05 + 0.9 * rng.next_f64());
    let weights = LossWeights::default();
    out.push(("focal_loss", grad_check(|t, p| t.focal_loss(p, &maps.heatmap, &weights, maps.k()), &pred, h)?));

    let cells: Vec<(usize, usize, usize)> = (0..6).map(|i| (0, i, (i * 3) % 6)).collect();
    let targets: Vec<[f64; 2]> = cells.iter().map(|_| [rng.next_f64(), rng.next_f64()]).collect();
    // residuals at least 0.05 away from 0 and from the ±1 switch of smooth-L1
    let mut off = random_tensor([1, 2, 6, 6], &mut rng);
    for (&(_, y, x), tgt) in cells.iter().zip(&targets) {
        for (c, t) in tgt.iter().enumerate() {
            let mag = if rng.next_f64() < 0.5 { 0.05 + 0.9 * rng.next_f64() } else { 1.05 + rng.next_f64() };
            let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
            off.set(0, c, y, x, t + sign * mag);
        }
    }
    out.push(("smooth_l1", grad_check(|t, o| t.offset_loss(o, &cells, &targets, cells.len()), &off, h)?));

    Ok(out)
}

fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
}

/// Largest `r` for which shrinking, growing and shifting both corners by `r`
/// all keep IoU ≥ `d`, found by trying every integer.
pub fn brute_force_radius(w: f64, h: f64, d: f64) -> usize {
    let gt = [0.0, 0.0, w, h];
    let ok = |r: f64| {
        let shrink = if 2.0 * r < w && 2.0 * r < h { box_iou(gt, [r, r, w - r, h - r]) } else { 0.0 };
        shrink >= d && box_iou(gt, [-r, -r, w + r, h + r]) >= d && box_iou(gt, [r, r, w + r, h + r]) >= d
    };
    (1..).take_while(|&r| ok(r as f64)).last().unwrap_or(0)
}

/// Integer boxes in `[1, max_side]²` where the closed form and enumeration disagree.
pub fn radius_mismatches(max_side: usize, d: f64) -> Result<Vec<(usize, usize, usize, usize)>> {
    let mut bad = Vec::new();
    for w in 1..=max_side {
        for h in 1..=max_side {
            let (a, b) = (gaussian_radius(w as f64, h as f64, d)?, brute_force_radius(w as f64, h as f64, d));
            if a != b {
                bad.push((w, h, a, b));
            }
        }
    }
    Ok(bad)
}

/// Plants `count` corner pairs with sub-cell offsets at stride 8, decodes
/// them and returns the worst patch-pixel error.
pub fn decode_round_trip(count: usize, seed: u64) -> Result<f64> {
    let mut rng = Lcg::new(seed);
    let stride = 8;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let (gh, gw) = (4 + (rng.next_u64() % 29) as usize, 4 + (rng.next_u64() % 29) as usize);
        let pick = |rng: &mut Lcg, lo: usize, hi: usize| lo + (rng.next_u64() % (hi - lo) as u64) as usize;
        let (tx, ty) = (pick(&mut rng, 0, gw - 1), pick(&mut rng, 0, gh - 1));
        let (bx, by) = (pick(&mut rng, tx + 1, gw), pick(&mut rng, ty + 1, gh));
        // patch-pixel corners and their encoded fractional offsets
        let tl = [(tx as f64 + rng.next_f64()) * stride as f64, (ty as f64 + rng.next_f64()) * stride as f64];
        let br = [(bx as f64 + rng.next_f64()) * stride as f64, (by as f64 + rng.next_f64()) * stride as f64];
        let mut b = HeatmapBundle {
            level: 3,
            stride,
            tl_heatmap: Tensor::zeros([1, 1, gh, gw]),
            br_heatmap: Tensor::zeros([1, 1, gh, gw]),
            tl_offsets: Tensor::zeros([1, 2, gh, gw]),
            br_offsets: Tensor::zeros([1, 2, gh, gw]),
        };
        let score = 0.5 + 0.5 * rng.next_f64();
        b.tl_heatmap.set(0, 0, ty, tx, score);
        b.br_heatmap.set(0, 0, by, bx, score);
        let s = stride as f64;
        b.tl_offsets.set(0, 0, ty, tx, tl[0] / s - tx as f64);
        b.tl_offsets.set(0, 1, ty, tx, tl[1] / s - ty as f64);
        b.br_offsets.set(0, 0, by, bx, br[0] / s - bx as f64);
        b.br_offsets.set(0, 1, by, bx, br[1] / s - by as f64);
        let set = to_patch_coords(&decode_level(&b, 1)?, stride)?;
        let Some(r) = set.rows.first() else {
            return Ok(f64::INFINITY);
        };
        for (got, want) in [(r.x_tl, tl[0]), (r.y_tl, tl[1]), (r.x_br, br[0]), (r.y_br, br[1])] {
            worst = worst.max((got - want).abs());
        }
    }
    Ok(worst)
}

fn timed(name: &str, f: impl FnOnce() -> std::result::Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult { name: name.into(), passed, detail, elapsed: start.elapsed() }
}

/// Runs every check with the library's pooling.
pub fn run_all() -> Vec<CheckResult> {
    run_all_with(&pool)
}

/// Runs every check, substituting `pool_fn` in the pooling oracle.
pub fn run_all_with(pool_fn: PoolFn) -> Vec<CheckResult> {
    let mut results = vec![timed("pooling oracle", || check_pooling(pool_fn, 200, 1).map(|_| "200 tensors, 4 directions".into()))];
    results.push(timed("gradient checks", || {
        let mut worst = (0.0, "");
        for seed in 0..10 {
            for (name, r) in gradient_suite(seed).map_err(|e| e.to_string())? {
                if r.max_rel_err > worst.0 {
                    worst = (r.max_rel_err, name);
                }
            }
        }
        let msg = format!("max rel err {:.2e} ({})", worst.0, worst.1);
        if worst.0 < 1e-5 {
            Ok(msg)
        } else {
            Err(msg)
        }
    }));
    results.push(timed("radius oracle", || match radius_mismatches(100, 0.5) {
        Ok(bad) if bad.is_empty() => Ok("w, h in 1..=100".into()),
        Ok(bad) => Err(format!("{} mismatches, first (w, h, closed, brute) = {:?}", bad.len(), bad[0])),
        Err(e) => Err(e.to_string()),
    }));
    results.push(timed("decode round trip", || match decode_round_trip(500, 3) {
        Ok(e) if e <= 1e-9 => Ok(format!("max error {e:.1e} px")),
        Ok(e) => Err(format!("max error {e:.3e} px")),
        Err(e) => Err(e.to_string()),
    }));
    results
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<width$}  {}  {:>8.2}s  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.elapsed.as_secs_f64(),
            r.detail
        ));
    }
    s
}
