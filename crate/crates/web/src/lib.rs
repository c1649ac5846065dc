//! WebAssembly bindings for the demo page in `www/`: corner pooling on a
//! hand-drawn map, NMS and corner decoding on two heatmaps, and the oracle
//! tracker stepping through a synthetic sequence.

use siamcorners::corner_pooling::{pool, PoolDirection};
use siamcorners::cropping::BBox;
use siamcorners::decoding::{decode_level_with, heatmap_nms, HeatmapBundle};
use siamcorners::evaluation::iou;
use siamcorners::io::draw_box;
use siamcorners::synth::{generate, Sequence, SequenceSpec};
use siamcorners::tracker::{oracle_tracker, OracleExtractor, Tracker, TrackerConfig, TrackerState};
use siamcorners::{Error, Tensor};
use wasm_bindgen::prelude::*;

const TRUTH_COLOR: [f64; 3] = [1.0, 1.0, 1.0];
const PREDICTION_COLOR: [f64; 3] = [0.1, 1.0, 0.1];

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn plane(values: &[f64], width: usize, height: usize) -> Result<Tensor, Error> {
    Tensor::new([1, 1, height, width], values.to_vec())
}

pub fn parse_direction(name: &str) -> Result<PoolDirection, Error> {
    match name {
        "prefix_w" => Ok(PoolDirection::PrefixW),
        "suffix_w" => Ok(PoolDirection::SuffixW),
        "prefix_h" => Ok(PoolDirection::PrefixH),
        "suffix_h" => Ok(PoolDirection::SuffixH),
        _ => Err(Error::Param(format!("unknown pooling direction '{name}'"))),
    }
}

pub fn pool_values(values: &[f64], width: usize, height: usize, direction: &str) -> Result<Vec<f64>, Error> {
    Ok(pool(&plane(values, width, height)?, parse_direction(direction)?).into_data())
}

/// Decoded rows flattened as `x_tl, y_tl, x_br, y_br, score` in heatmap cells.
pub fn decode_values(tl: &[f64], br: &[f64], width: usize, height: usize, n: usize, window: usize) -> Result<Vec<f64>, Error> {
    let zeros = Tensor::zeros([1, 2, height, width]);
    let bundle = HeatmapBundle {
        level: 3,
        stride: 8,
        tl_heatmap: plane(tl, width, height)?,
        br_heatmap: plane(br, width, height)?,
        tl_offsets: zeros.clone(),
        br_offsets: zeros,
    };
    let set = decode_level_with(&bundle, n, window)?;
    Ok(set.rows.iter().flat_map(|r| [r.x_tl, r.y_tl, r.x_br, r.y_br, r.score]).collect())
}

/// Directional max pooling of a row-major `height × width` map.
#[wasm_bindgen]
pub fn pool_map(values: &[f64], width: usize, height: usize, direction: &str) -> Result<Vec<f64>, JsError> {
    pool_values(values, width, height, direction).map_err(js)
}

/// Cells that survive `window × window` non-maximum suppression; others are zero.
#[wasm_bindgen]
pub fn nms_map(values: &[f64], width: usize, height: usize, window: usize) -> Result<Vec<f64>, JsError> {
    let h = plane(values, width, height).map_err(js)?;
    heatmap_nms(&h, window).map(Tensor::into_data).map_err(js)
}

#[wasm_bindgen]
pub fn decode_corners(tl: &[f64], br: &[f64], width: usize, height: usize, n: usize, window: usize) -> Result<Vec<f64>, JsError> {
    decode_values(tl, br, width, height, n, window).map_err(js)
}

/// A synthetic sequence tracked one frame at a time.
#[wasm_bindgen]
pub struct TrackingDemo {
    sequence: Sequence,
    tracker: Tracker<OracleExtractor>,
    state: TrackerState,
    predictions: Vec<BBox>,
}

impl TrackingDemo {
    pub fn create(spec: &SequenceSpec) -> Result<Self, Error> {
        let sequence = generate(spec)?;
        let tracker = oracle_tracker(OracleExtractor::default(), TrackerConfig::default())?;
        let first = sequence.boxes[0];
        let state = tracker.init(&sequence.frames[0], first)?;
        Ok(Self { sequence, tracker, state, predictions: vec![first] })
    }

    /// Tracks the next frame; `None` once the sequence is exhausted.
    pub fn advance(&mut self) -> Result<Option<BBox>, Error> {
        let t = self.predictions.len();
        let Some(frame) = self.sequence.frames.get(t) else { return Ok(None) };
        let (b, s) = self.tracker.track(self.state.clone(), frame)?;
        self.state = s;
        self.predictions.push(b);
        Ok(Some(b))
    }

    pub fn predictions(&self) -> &[BBox] {
        &self.predictions
    }
}

#[wasm_bindgen]
impl TrackingDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, vx: f64, vy: f64, scale_rate: f64, distractor: bool, noise: f64) -> Result<TrackingDemo, JsError> {
        let spec = SequenceSpec { velocity: [vx, vy], scale_rate, distractor, noise, seed, length: 60, ..Default::default() };
        Self::create(&spec).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.sequence.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.sequence.frames[0].height()
    }

    pub fn length(&self) -> usize {
        self.sequence.frames.len()
    }

    /// Number of frames with a prediction, including the first.
    pub fn tracked(&self) -> usize {
        self.predictions.len()
    }

    /// Predicted `[x, y, w, h]` of the next frame, or an empty array at the end.
    pub fn step(&mut self) -> Result<Vec<f64>, JsError> {
        Ok(self.advance().map_err(js)?.map(|b| b.to_xywh().to_vec()).unwrap_or_default())
    }

    /// Mean IoU of the predictions so far against the ground truth.
    pub fn mean_iou(&self) -> f64 {
        let total: f64 = self.predictions.iter().zip(&self.sequence.boxes).map(|(p, g)| iou(p, g)).sum();
        total / self.predictions.len() as f64
    }

    /// RGBA pixels of the latest tracked frame with both boxes drawn.
    pub fn frame_rgba(&self) -> Vec<u8> {
        let t = self.predictions.len() - 1;
        let f = draw_box(&self.sequence.frames[t], &self.sequence.boxes[t], TRUTH_COLOR);
        let f = draw_box(&f, &self.predictions[t], PREDICTION_COLOR);
        let (w, h) = (f.width(), f.height());
        let mut out = Vec::with_capacity(w * h * 4);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.push((f.at(0, c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
                out.push(255);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_runs_towards_the_corner() {
        let v = [0.0, 3.0, 1.0, 2.0];
        assert_eq!(pool_values(&v, 4, 1, "prefix_w").unwrap(), vec![0.0, 3.0, 3.0, 3.0]);
        assert_eq!(pool_values(&v, 4, 1, "suffix_w").unwrap(), vec![3.0, 3.0, 2.0, 2.0]);
        assert!(pool_values(&v, 4, 1, "diagonal").is_err());
        assert!(pool_values(&v, 3, 1, "prefix_w").is_err());
    }

    #[test]
    fn decodes_a_planted_pair() {
        let (w, h) = (6, 5);
        let mut tl = vec![0.0; w * h];
        let mut br = vec![0.0; w * h];
        tl[w + 1] = 0.9;
        br[3 * w + 4] = 0.8;
        let rows = decode_values(&tl, &br, w, h, 3, 3).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(&rows[..4], &[1.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn demo_follows_a_moving_target() {
        let spec = SequenceSpec { length: 8, velocity: [2.0, 1.0], ..Default::default() };
        let mut d = TrackingDemo::create(&spec).unwrap();
        while d.advance().unwrap().is_some() {}
        assert_eq!(d.predictions().len(), 8);
        assert!(d.mean_iou() > 0.8, "{}", d.mean_iou());
        assert_eq!(d.frame_rgba().len(), 320 * 240 * 4);
    }
}
