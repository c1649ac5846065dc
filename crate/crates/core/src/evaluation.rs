//! One-pass evaluation: success, precision and normalized-precision curves.

use std::fmt::Write as _;

use crate::cropping::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 21 overlap thresholds `0, 0.05, …, 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}
/// 51 pixel thresholds `0, 1, …, 50`.
pub fn precision_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64).collect()
}
/// 101 normalized thresholds `0, 0.005, …, 0.5`.
pub fn norm_precision_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 200.0).collect()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_br.min(b.x_br) - a.x_tl.max(b.x_tl)).max(0.0);
    let ih = (a.y_br.min(b.y_br) - a.y_tl.max(b.y_tl)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn nonempty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Input(format!("{what}: no frames")));
    }
    Ok(())
}

/// Fraction of frames with IoU strictly above each threshold, and its mean.
/// At the last threshold (1) a perfect overlap still counts, so exact
/// tracking scores 1.
pub fn success_auc(ious: &[f64]) -> Result<(Vec<f64>, f64)> {
    nonempty(ious, "success")?;
    let n = ious.len() as f64;
    let curve: Vec<f64> = success_thresholds()
        .into_iter()
        .map(|t| ious.iter().filter(|&&v| v > t || (t == 1.0 && v >= 1.0)).count() as f64 / n)
        .collect();
    let auc = mean(&curve);
    Ok((curve, auc))
}

fn at_most_curve(errors: &[f64], thresholds: Vec<f64>) -> Vec<f64> {
    let n = errors.len() as f64;
    thresholds
        .into_iter()
        .map(|t| errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        .collect()
}

/// Fraction of frames with centre error at most each pixel threshold, and the 20 px value.
pub fn precision(center_errors: &[f64]) -> Result<(Vec<f64>, f64)> {
    nonempty(center_errors, "precision")?;
    let curve = at_most_curve(center_errors, precision_thresholds());
    let at20 = curve[20];
    Ok((curve, at20))
}

/// Normalized centre error per frame; frames whose ground truth has no area
/// are skipped and counted.
pub fn normalized_errors(pred: &[BBox], gt: &[BBox]) -> (Vec<f64>, usize) {
    let mut out = Vec::with_capacity(pred.len());
    let mut skipped = 0;
    for (p, g) in pred.iter().zip(gt) {
        if !(g.width() > 0.0 && g.height() > 0.0) {
            skipped += 1;
            continue;
        }
        let (px, py) = p.center();
        let (gx, gy) = g.center();
        out.push(((px - gx) / g.width()).hypot((py - gy) / g.height()));
    }
    (out, skipped)
}

/// Curve over the normalized thresholds and its mean.
pub fn normalized_precision(norm_errors: &[f64]) -> Result<(Vec<f64>, f64)> {
    nonempty(norm_errors, "normalized precision")?;
    let curve = at_most_curve(norm_errors, norm_precision_thresholds());
    let auc = mean(&curve);
    Ok((curve, auc))
}

/// Metrics of one sequence (or the mean over several).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub success_curve: Vec<f64>,
    pub success_auc: f64,
    pub precision_curve: Vec<f64>,
    pub precision_at_20: f64,
    pub norm_precision_curve: Vec<f64>,
    pub norm_precision_auc: f64,
    pub fps: f64,
    pub frames: usize,
    /// Frames left out of normalized precision.
    pub skipped: usize,
}

impl MetricReport {
    pub fn from_boxes(pred: &[BBox], gt: &[BBox], fps: f64) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::Input(format!("{} predicted boxes for {} ground-truth boxes", pred.len(), gt.len())));
        }
        let ious: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect();
        let errs: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| center_error(p, g)).collect();
        let (nerr, skipped) = normalized_errors(pred, gt);
        let (success_curve, success_auc) = success_auc(&ious)?;
        let (precision_curve, precision_at_20) = precision(&errs)?;
        let (norm_precision_curve, norm_precision_auc) = normalized_precision(&nerr)?;
        let r = Self {
            success_curve,
            success_auc,
            precision_curve,
            precision_at_20,
            norm_precision_curve,
            norm_precision_auc,
            fps,
            frames: pred.len(),
            skipped,
        };
        r.check_monotone()?;
        Ok(r)
    }

    /// Success must not increase with the threshold; both precisions must not decrease.
    pub fn check_monotone(&self) -> Result<()> {
        let unit = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        let ok = self.success_curve.windows(2).all(|w| w[1] <= w[0])
            && self.precision_curve.windows(2).all(|w| w[1] >= w[0])
            && self.norm_precision_curve.windows(2).all(|w| w[1] >= w[0])
            && unit(&self.success_curve)
            && unit(&self.precision_curve)
            && unit(&self.norm_precision_curve);
        if !ok {
            return Err(Error::Numeric("metric curves violate monotonicity or [0, 1] bounds".into()));
        }
        Ok(())
    }

    /// Element-wise mean of several reports; fps averaged too.
    pub fn mean_of(reports: &[MetricReport]) -> Result<Self> {
        let Some(first) = reports.first() else {
            return Err(Error::Input("nothing to aggregate".into()));
        };
        let n = reports.len() as f64;
        let avg_curve = |get: fn(&MetricReport) -> &Vec<f64>| -> Vec<f64> {
            (0..get(first).len()).map(|i| reports.iter().map(|r| get(r)[i]).sum::<f64>() / n).collect()
        };
        let avg = |get: fn(&MetricReport) -> f64| reports.iter().map(get).sum::<f64>() / n;
        Ok(Self {
            success_curve: avg_curve(|r| &r.success_curve),
            success_auc: avg(|r| r.success_auc),
            precision_curve: avg_curve(|r| &r.precision_curve),
            precision_at_20: avg(|r| r.precision_at_20),
            norm_precision_curve: avg_curve(|r| &r.norm_precision_curve),
            norm_precision_auc: avg(|r| r.norm_precision_auc),
            fps: avg(|r| r.fps),
            frames: reports.iter().map(|r| r.frames).sum(),
            skipped: reports.iter().map(|r| r.skipped).sum(),
        })
    }

    /// `key = value` lines followed by the three curves as space-separated lists.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "skipped_norm_frames = {}", self.skipped);
        let _ = writeln!(s, "success_auc = {:.6}", self.success_auc);
        let _ = writeln!(s, "precision_at_20 = {:.6}", self.precision_at_20);
        let _ = writeln!(s, "norm_precision_auc = {:.6}", self.norm_precision_auc);
        let _ = writeln!(s, "fps = {:.3}", self.fps);
        let _ = writeln!(s, "success_curve = {}", list(&self.success_curve));
        let _ = writeln!(s, "precision_curve = {}", list(&self.precision_curve));
        let _ = writeln!(s, "norm_precision_curve = {}", list(&self.norm_precision_curve));
        s
    }

    /// `(threshold, value)` pairs, one curve per block with a `# name` header.
    pub fn plot_data(&self) -> String {
        let mut s = String::new();
        for (name, th, v) in [
            ("success", success_thresholds(), &self.success_curve),
            ("precision", precision_thresholds(), &self.precision_curve),
            ("norm_precision", norm_precision_thresholds(), &self.norm_precision_curve),
        ] {
            let _ = writeln!(s, "# {name}");
            for (t, y) in th.iter().zip(v.iter()) {
                let _ = writeln!(s, "{t:.3} {y:.6}");
            }
            s.push('\n');
        }
        s
    }
}

/// A sequence held in memory.
#[derive(Clone, Debug)]
pub struct LoadedSequence {
    pub name: String,
    pub frames: Vec<Tensor>,
    pub groundtruth: Vec<BBox>,
}

/// Anything that produces one box per frame given the first-frame box.
/// The full ground truth is available so protocol checks can cheat on purpose.
pub trait SequenceTracker: Sync {
    fn track_sequence(&self, frames: &[Tensor], groundtruth: &[BBox]) -> Result<Vec<BBox>>;
}

/// Returns the ground truth unchanged.
pub struct EchoTracker;

impl SequenceTracker for EchoTracker {
    fn track_sequence(&self, _frames: &[Tensor], groundtruth: &[BBox]) -> Result<Vec<BBox>> {
        Ok(groundtruth.to_vec())
    }
}

/// Reports the first-frame box for every frame.
pub struct FrozenTracker;

impl SequenceTracker for FrozenTracker {
    fn track_sequence(&self, frames: &[Tensor], groundtruth: &[BBox]) -> Result<Vec<BBox>> {
        let first = groundtruth.first().ok_or_else(|| Error::Input("no ground truth".into()))?;
        Ok(vec![*first; frames.len()])
    }
}

impl<E: crate::tracker::FeatureExtractor> SequenceTracker for crate::tracker::Tracker<E> {
    fn track_sequence(&self, frames: &[Tensor], groundtruth: &[BBox]) -> Result<Vec<BBox>> {
        let first = groundtruth.first().ok_or_else(|| Error::Input("no ground truth".into()))?;
        self.run(frames, *first)
    }
}

/// Per-sequence outcome of a benchmark run.
#[derive(Clone, Debug)]
pub struct SequenceOutcome {
    pub name: String,
    /// The report, or why the sequence was skipped.
    pub report: std::result::Result<MetricReport, String>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub sequences: Vec<SequenceOutcome>,
    /// Mean over sequences that produced a report.
    pub aggregate: MetricReport,
}

fn evaluate_one(seq: &LoadedSequence, tracker: &dyn SequenceTracker) -> SequenceOutcome {
    let report = (|| {
        if seq.frames.len() != seq.groundtruth.len() {
            return Err(format!("{} frames but {} ground-truth lines", seq.frames.len(), seq.groundtruth.len()));
        }
        let start = std::time::Instant::now();
        let pred = tracker.track_sequence(&seq.frames, &seq.groundtruth).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let fps = if secs > 0.0 { seq.frames.len() as f64 / secs } else { 0.0 };
        MetricReport::from_boxes(&pred, &seq.groundtruth, fps).map_err(|e| e.to_string())
    })();
    SequenceOutcome { name: seq.name.clone(), report }
}

/// One-pass evaluation of `tracker` on every sequence. Sequences run in
/// parallel; results keep input order.
pub fn run_benchmark(sequences: &[LoadedSequence], tracker: &dyn SequenceTracker) -> Result<BenchmarkReport> {
    if sequences.is_empty() {
        return Err(Error::Input("empty sequence set".into()));
    }
    #[cfg(feature = "parallel")]
    let outcomes: Vec<SequenceOutcome> = {
        use rayon::prelude::*;
        sequences.par_iter().map(|s| evaluate_one(s, tracker)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<SequenceOutcome> = sequences.iter().map(|s| evaluate_one(s, tracker)).collect();
    aggregate(outcomes)
}

/// Aggregates per-sequence outcomes; errors when none produced a report.
pub fn aggregate(sequences: Vec<SequenceOutcome>) -> Result<BenchmarkReport> {
    let ok: Vec<MetricReport> = sequences.iter().filter_map(|s| s.report.clone().ok()).collect();
    if ok.is_empty() {
        return Err(Error::Input("no sequence could be evaluated".into()));
    }
    Ok(BenchmarkReport { aggregate: MetricReport::mean_of(&ok)?, sequences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SequenceSpec};
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::from_xywh(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(1.0, 2.0, 3.0, 4.0), &b(1.0, 2.0, 3.0, 4.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(2.0, 2.0, 1.0, 1.0)), 0.0);
        assert!((iou(&b(0.0, 0.0, 1.0, 1.0), &b(0.5, 0.0, 1.0, 1.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn success_examples() {
        assert_eq!(success_auc(&[1.0; 7]).unwrap().1, 1.0);
        assert_eq!(success_auc(&[0.0; 7]).unwrap().1, 0.0);
        let (curve, auc) = success_auc(&[0.6; 10]).unwrap();
        assert_eq!(curve[..12], [1.0; 12]);
        assert_eq!(curve[12..], [0.0; 9]);
        assert_eq!(auc, 12.0 / 21.0);
        assert!(success_auc(&[]).is_err());
    }

    #[test]
    fn precision_examples() {
        assert!(precision(&[0.0; 4]).unwrap().0.iter().all(|&v| v == 1.0));
        assert!(precision(&[100.0; 4]).unwrap().0.iter().all(|&v| v == 0.0));
        assert_eq!(precision(&[10.0, 30.0, 10.0, 30.0]).unwrap().1, 0.5);
        assert!(precision(&[]).is_err());
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(normalized_precision(&[0.0; 3]).unwrap().1, 1.0);
        assert_eq!(normalized_precision(&[0.6; 3]).unwrap().1, 0.0);
        assert_eq!(normalized_precision(&[0.25; 3]).unwrap().1, 51.0 / 101.0);
        let degenerate = BBox { x_tl: 0.0, y_tl: 0.0, x_br: 0.0, y_br: 5.0 };
        let (e, skipped) = normalized_errors(&[b(0.0, 0.0, 2.0, 2.0); 2], &[degenerate, b(0.0, 0.0, 2.0, 2.0)]);
        assert_eq!((e, skipped), (vec![0.0], 1));
    }

    fn moving() -> LoadedSequence {
        let s = generate(&SequenceSpec { length: 20, velocity: [3.0, 2.0], ..Default::default() }).unwrap();
        LoadedSequence { name: "moving".into(), frames: s.frames, groundtruth: s.boxes }
    }

    #[test]
    fn echo_scores_perfectly_and_frozen_worse() {
        let seqs = vec![moving()];
        let echo = run_benchmark(&seqs, &EchoTracker).unwrap();
        assert_eq!(echo.aggregate.success_auc, 1.0);
        let frozen = run_benchmark(&seqs, &FrozenTracker).unwrap();
        assert!(frozen.aggregate.success_auc < echo.aggregate.success_auc);
        assert!(run_benchmark(&[], &EchoTracker).is_err());
    }

    #[test]
    fn malformed_sequence_skipped() {
        let mut bad = moving();
        bad.name = "bad".into();
        bad.groundtruth.pop();
        let r = run_benchmark(&[bad, moving()], &EchoTracker).unwrap();
        assert!(r.sequences[0].report.is_err());
        assert_eq!(r.aggregate.success_auc, 1.0);
    }

    #[test]
    fn report_text_lists_curves() {
        let r = MetricReport::from_boxes(&[b(0.0, 0.0, 4.0, 4.0)], &[b(1.0, 0.0, 4.0, 4.0)], 10.0).unwrap();
        let t = r.to_text();
        assert!(t.contains("success_auc = "));
        assert_eq!(t.lines().last().unwrap().split_whitespace().count(), 2 + 101);
        assert_eq!(r.plot_data().lines().filter(|l| l.starts_with('#')).count(), 3);
    }

    proptest! {
        #[test]
        fn curves_monotone_and_permutation_invariant(v in proptest::collection::vec(0.0f64..=1.0, 1..40), rot in 0usize..40) {
            let (c, auc) = success_auc(&v).unwrap();
            prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
            let mut r = v.clone();
            let k = rot % r.len();
            r.rotate_left(k);
            r.reverse();
            prop_assert_eq!(success_auc(&r).unwrap().1, auc);
            let e: Vec<f64> = v.iter().map(|x| x * 60.0).collect();
            prop_assert!(precision(&e).unwrap().0.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn normalized_scale_invariant(x in 0.0f64..50.0, y in 0.0f64..50.0, w in 1.0f64..30.0, h in 1.0f64..30.0,
                                      dx in -10.0f64..10.0, dy in -10.0f64..10.0, k in 0.25f64..4.0) {
            let g = b(x, y, w, h);
            let p = b(x + dx, y + dy, w, h);
            let (e1, _) = normalized_errors(&[p], &[g]);
            let sc = |q: &BBox| b(q.x_tl * k, q.y_tl * k, q.width() * k, q.height() * k);
            let (e2, _) = normalized_errors(&[sc(&p)], &[sc(&g)]);
            prop_assert!((e1[0] - e2[0]).abs() < 1e-9);
        }
    }
}
