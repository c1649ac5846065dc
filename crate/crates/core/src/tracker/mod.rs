//! One-shot tracking: boundary templates are embedded once at the first frame;
//! every later frame is cropped, correlated, decoded at three levels, fused
//! and reduced to a single box.

mod extractor;
mod network;
pub mod train;

pub use extractor::{FeatureExtractor, OracleExtractor, ToyConvExtractor};
pub use network::{load_params, read_params, save_params, write_params, LevelOutput, LevelParams, NetworkParams};
pub(crate) use network::LevelVars;

use crate::correlation::Boundary;
use crate::cropping::{crop_boundary_templates, crop_search_region, BBox, CropMapping};
use crate::decoding::{decode_level_with, to_patch_coords, CornerSet, HeatmapBundle};
use crate::error::{Error, Result};
use crate::selection::{final_scores, fuse_levels, select_and_smooth, TrackerHyper};
use crate::tensor::{sigmoid, Tensor};

/// Crop sizes and decoding settings of a tracker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    pub hyper: TrackerHyper,
    pub template_size: usize,
    pub search_size: usize,
    pub nms_window: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { hyper: TrackerHyper::default(), template_size: 127, search_size: 255, nms_window: 3 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.template_size == 0 || self.search_size < self.template_size {
            return Err(Error::Param(format!(
                "need 0 < template_size <= search_size, got {} and {}",
                self.template_size, self.search_size
            )));
        }
        if self.nms_window % 2 == 0 {
            return Err(Error::Param(format!("NMS window must be odd, got {}", self.nms_window)));
        }
        Ok(())
    }
}

/// Per-sequence state carried between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub bbox: BBox,
    /// 1×1 template embeddings per level, in top/left/bottom/right order.
    pub embeddings: [[Tensor; 4]; 3],
    pub hyper: TrackerHyper,
    /// Mapping of the most recent search crop.
    pub mapping: CropMapping,
    pub frame_size: (usize, usize),
}

/// Everything computed for one frame.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub bbox: BBox,
    pub bundles: Vec<HeatmapBundle>,
    /// Fused candidates in frame coordinates.
    pub candidates: CornerSet,
    pub final_scores: Vec<f64>,
    pub picked: Option<usize>,
    pub mapping: CropMapping,
}

pub struct Tracker<E> {
    pub extractor: E,
    pub params: NetworkParams,
    pub config: TrackerConfig,
}

impl<E: FeatureExtractor> Tracker<E> {
    pub fn new(extractor: E, params: NetworkParams, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if params.channels() != extractor.channels() {
            return Err(Error::Param(format!(
                "parameters expect {} channels, extractor produces {}",
                params.channels(),
                extractor.channels()
            )));
        }
        Ok(Self { extractor, params, config })
    }

    /// Crops the boundary templates around `bbox` (clipped to the frame) and
    /// caches their embeddings.
    pub fn init(&self, frame: &Tensor, bbox: BBox) -> Result<TrackerState> {
        let (fw, fh) = (frame.width(), frame.height());
        let bbox = bbox.clip(fw as f64, fh as f64)?;
        let templates = crop_boundary_templates(frame, bbox, self.config.hyper.t_wh, self.config.template_size)?;
        let feats = Boundary::ALL.map(|b| self.extractor.extract_template(b, templates.get(b)));
        let feats: Vec<[Tensor; 3]> = feats.into_iter().collect::<Result<_>>()?;
        let mut levels = Vec::with_capacity(3);
        for level in 0..3 {
            let e = feats
                .iter()
                .map(|f| self.params.embed_template(level, &f[level]))
                .collect::<Result<Vec<_>>>()?;
            levels.push(<[Tensor; 4]>::try_from(e).expect("four boundaries"));
        }
        let embeddings: [[Tensor; 4]; 3] = levels.try_into().expect("three levels");
        Ok(TrackerState {
            bbox,
            embeddings,
            hyper: self.config.hyper,
            mapping: templates.mapping,
            frame_size: (fw, fh),
        })
    }

    /// Per-level heatmap bundles for a search patch.
    pub fn heatmaps(&self, state: &TrackerState, patch: &Tensor) -> Result<Vec<HeatmapBundle>> {
        let feats = self.extractor.extract(patch)?;
        (0..3)
            .map(|level| {
                let out = self.params.forward_level(level, &state.embeddings[level], &feats[level])?;
                Ok(HeatmapBundle {
                    level: level as u8 + 3,
                    stride: self.extractor.stride(),
                    tl_heatmap: sigmoid(&out.tl_logits),
                    br_heatmap: sigmoid(&out.br_logits),
                    tl_offsets: out.tl_offsets,
                    br_offsets: out.br_offsets,
                })
            })
            .collect()
    }

    /// Runs the full pipeline on one frame without consuming the state.
    pub fn process(&self, state: &TrackerState, frame: &Tensor) -> Result<FrameResult> {
        let (patch, mapping) = crop_search_region(frame, state.bbox, self.config.search_size)?;
        let bundles = self.heatmaps(state, &patch)?;
        let mut sets = Vec::with_capacity(3);
        for b in &bundles {
            let set = decode_level_with(b, state.hyper.n, self.config.nms_window)?;
            sets.push(to_patch_coords(&set, b.stride)?);
        }
        let candidates = fuse_levels(&sets, &mapping)?;
        let scores = final_scores(&candidates, &state.bbox, &state.hyper);
        let sel = select_and_smooth(&candidates, &scores, &state.bbox, state.hyper.lr)?;
        let bbox = sel
            .bbox
            .clip(frame.width() as f64, frame.height() as f64)
            .unwrap_or(state.bbox);
        Ok(FrameResult { bbox, bundles, candidates, final_scores: scores, picked: sel.picked, mapping })
    }

    pub fn track(&self, state: TrackerState, frame: &Tensor) -> Result<(BBox, TrackerState)> {
        let r = self.process(&state, frame)?;
        let next = TrackerState {
            bbox: r.bbox,
            mapping: r.mapping,
            frame_size: (frame.width(), frame.height()),
            ..state
        };
        Ok((r.bbox, next))
    }

    /// Initialises on `frames[0]` with `init_box` and tracks the rest; the
    /// first output is the initial box.
    pub fn run(&self, frames: &[Tensor], init_box: BBox) -> Result<Vec<BBox>> {
        let Some(first) = frames.first() else {
            return Err(Error::Input("no frames to track".into()));
        };
        let mut state = self.init(first, init_box)?;
        let mut out = vec![state.bbox];
        for f in &frames[1..] {
            let (b, s) = self.track(state, f)?;
            out.push(b);
            state = s;
        }
        Ok(out)
    }
}

/// Tracker over the geometry oracle with its hand-set parameters.
pub fn oracle_tracker(extractor: OracleExtractor, config: TrackerConfig) -> Result<Tracker<OracleExtractor>> {
    Tracker::new(extractor, NetworkParams::oracle(), config)
}
