//! Fitting the adjustment convolutions and corner heads on a handful of
//! template/search pairs with the backbone frozen.

use crate::autodiff::{Tape, Var};
use crate::correlation::Boundary;
use crate::cropping::{crop_boundary_templates, crop_search_region, BBox, TemplateSet};
use crate::decoding::{decode_level_with, to_patch_coords, CornerSet, HeatmapBundle};
use crate::error::{Error, Result};
use crate::selection::fuse_levels;
use crate::synth::{render_frame, Lcg, DEFAULT_BACKGROUND, DEFAULT_FOREGROUND};
use crate::targets::{LossWeights, TargetMaps};
use crate::tensor::{sigmoid, Tensor};

use super::{FeatureExtractor, LevelVars, NetworkParams};
use crate::cropping::CropMapping;

/// One training example: boundary templates, a search patch and the target
/// box in search-patch pixels.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub templates: TemplateSet,
    pub search: Tensor,
    pub target: BBox,
}

/// Draws `count` pairs from random single-rectangle scenes. The search crop is
/// centred on a jittered box so targets land at different patch positions.
pub fn synthetic_pairs(count: usize, seed: u64, template_size: usize, search_size: usize, t_wh: f64) -> Result<Vec<TrainingPair>> {
    let mut rng = Lcg::new(seed);
    let (fw, fh) = (160usize, 160usize);
    (0..count)
        .map(|_| {
            let w = rng.range(24.0, 48.0);
            let h = rng.range(24.0, 48.0);
            let cx = rng.range(50.0, 110.0);
            let cy = rng.range(50.0, 110.0);
            let b = BBox::from_center(cx, cy, w, h)?;
            let frame = render_frame(fw, fh, DEFAULT_BACKGROUND, &[(b, DEFAULT_FOREGROUND)], 0.0, &mut rng);
            let templates = crop_boundary_templates(&frame, b, t_wh, template_size)?;
            let jitter = BBox::from_center(cx + rng.range(-0.3, 0.3) * w, cy + rng.range(-0.3, 0.3) * h, w, h)?;
            let (search, mapping) = crop_search_region(&frame, jitter, search_size)?;
            Ok(TrainingPair { templates, search, target: mapping.box_to_patch(&b) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
    pub momentum: f64,
    /// Rescales the full gradient to at most this L2 norm before each step.
    pub clip_norm: Option<f64>,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 500, step_size: 0.01, momentum: 0.9, clip_norm: Some(10.0), weights: LossWeights::default() }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Total loss before each step, then after the last one (`steps + 1` values).
    pub losses: Vec<f64>,
}

/// Frozen-backbone features of a batch of pairs.
struct Batch {
    /// `[level][boundary]`, each `[n, c, h, w]`.
    templates: Vec<[Tensor; 4]>,
    search: [Tensor; 3],
    tl: TargetMaps,
    br: TargetMaps,
}

fn prepare(extractor: &dyn FeatureExtractor, pairs: &[TrainingPair], d: f64) -> Result<Batch> {
    let stack = |f: &dyn Fn(&TrainingPair) -> &Tensor| Tensor::stack(&pairs.iter().map(|p| f(p).clone()).collect::<Vec<_>>());
    let search_img = stack(&|p| &p.search)?;
    let search = extractor.extract(&search_img)?;
    let mut per_boundary = Vec::with_capacity(4);
    for b in Boundary::ALL {
        per_boundary.push(extractor.extract_template(b, &stack(&|p| p.templates.get(b))?)?);
    }
    let templates = (0..3)
        .map(|l| [0, 1, 2, 3].map(|b| per_boundary[b][l].clone()))
        .collect();
    let stride = extractor.stride();
    let grid = (search[0].height(), search[0].width());
    let sizes: Vec<(f64, f64)> = pairs.iter().map(|p| (p.target.width(), p.target.height())).collect();
    let tl_pts: Vec<(f64, f64)> = pairs.iter().map(|p| (p.target.x_tl, p.target.y_tl)).collect();
    let br_pts: Vec<(f64, f64)> = pairs.iter().map(|p| (p.target.x_br, p.target.y_br)).collect();
    let tl = TargetMaps::build(grid, stride, &tl_pts, &sizes, d)?;
    let br = TargetMaps::build(grid, stride, &br_pts, &sizes, d)?;
    Ok(Batch { templates, search, tl, br })
}

/// Records the summed objective of all levels and both branches.
fn objective(tape: &mut Tape, vars: &[LevelVars], batch: &Batch, w: &LossWeights) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (level, lv) in vars.iter().enumerate() {
        let t = batch.templates[level].clone().map(|x| tape.constant(x));
        let s = tape.constant(batch.search[level].clone());
        let [tl, tlo, br, bro] = lv.forward(tape, t, s)?;
        for (logits, offs, maps) in [(tl, tlo, &batch.tl), (br, bro, &batch.br)] {
            let p = tape.sigmoid(logits);
            let focal = tape.focal_loss(p, &maps.heatmap, w, maps.k())?;
            let off = tape.offset_loss(offs, &maps.positives, &maps.offsets, maps.k())?;
            let off = tape.scale(off, w.lambda);
            let term = tape.add(focal, off)?;
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
    }
    Ok(total.expect("three levels"))
}

/// Momentum SGD on the adjustment convs and corner heads; the extractor is frozen.
pub fn overfit_train(
    extractor: &dyn FeatureExtractor,
    init: NetworkParams,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Input("training needs at least one pair".into()));
    }
    cfg.weights.validate()?;
    if !(cfg.step_size > 0.0 && (0.0..1.0).contains(&cfg.momentum) && cfg.clip_norm.map_or(true, |c| c > 0.0)) {
        return Err(Error::Param("need step_size > 0, momentum in [0, 1) and a positive clip norm".into()));
    }
    init.validate()?;
    if init.channels() != extractor.channels() {
        return Err(Error::Param("parameter channels do not match the extractor".into()));
    }
    let batch = prepare(extractor, pairs, cfg.weights.d)?;
    let mut params = init;
    let mut velocity: Vec<(Tensor, Tensor)> = params
        .convs()
        .iter()
        .map(|c| (Tensor::zeros(c.kernel.shape()), Tensor::zeros(c.bias.shape())))
        .collect();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let mut tape = Tape::new();
        let vars: Vec<LevelVars> = params.levels.iter().map(|l| LevelVars::register(l, &mut tape)).collect();
        let loss = objective(&mut tape, &vars, &batch, &cfg.weights)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss became {value} at step {step}")));
        }
        losses.push(value);
        if step == cfg.steps {
            break;
        }
        let grads = tape.backward(loss)?;
        let handles: Vec<(Var, Var)> = vars.iter().flat_map(|v| v.vars()).collect();
        let norm = handles
            .iter()
            .flat_map(|&(k, b)| [k, b])
            .map(|v| grads.get(v).data().iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let factor = match cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for ((conv, vel), (kv, bv)) in params.convs_mut().into_iter().zip(&mut velocity).zip(handles) {
            for (p, v, g) in [(&mut conv.kernel, &mut vel.0, grads.get(kv)), (&mut conv.bias, &mut vel.1, grads.get(bv))] {
                for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = cfg.momentum * *vv + factor * gv;
                    *pv -= cfg.step_size * *vv;
                }
            }
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Decodes one pair with trained parameters; returns patch-space candidates of
/// all levels, best-scoring first within each level.
pub fn decode_pair(
    extractor: &dyn FeatureExtractor,
    params: &NetworkParams,
    pair: &TrainingPair,
    n: usize,
    nms_window: usize,
) -> Result<CornerSet> {
    let search = extractor.extract(&pair.search)?;
    let mut sets = Vec::with_capacity(3);
    for level in 0..3 {
        let mut emb = Vec::with_capacity(4);
        for b in Boundary::ALL {
            let f = extractor.extract_template(b, pair.templates.get(b))?;
            emb.push(params.embed_template(level, &f[level])?);
        }
        let emb: [Tensor; 4] = emb.try_into().expect("four boundaries");
        let out = params.forward_level(level, &emb, &search[level])?;
        let bundle = HeatmapBundle {
            level: level as u8 + 3,
            stride: extractor.stride(),
            tl_heatmap: sigmoid(&out.tl_logits),
            br_heatmap: sigmoid(&out.br_logits),
            tl_offsets: out.tl_offsets,
            br_offsets: out.br_offsets,
        };
        sets.push(to_patch_coords(&decode_level_with(&bundle, n, nms_window)?, bundle.stride)?);
    }
    // identity mapping keeps patch pixels; only the concatenation is wanted
    let mut fused = fuse_levels(&sets, &CropMapping::IDENTITY)?;
    fused.space = crate::decoding::CoordSpace::Patch;
    Ok(fused)
}

/// Largest corner error (patch pixels) of the best-scoring decoded pair.
pub fn corner_error(set: &CornerSet, target: &BBox) -> Option<f64> {
    let best = set
        .rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.score.total_cmp(&b.1.score).then(b.0.cmp(&a.0)))?
        .1;
    Some(
        [
            (best.x_tl - target.x_tl).abs(),
            (best.y_tl - target.y_tl).abs(),
            (best.x_br - target.x_br).abs(),
            (best.y_br - target.y_br).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max),
    )
}
