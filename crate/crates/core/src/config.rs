//! Flat JSON configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::TrackerHyper;
use crate::targets::LossWeights;
use crate::tracker::train::TrainConfig;
use crate::tracker::{load_params, FeatureExtractor, NetworkParams, OracleExtractor, ToyConvExtractor, Tracker, TrackerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    /// Colour-segmentation features with hand-set heads.
    Oracle,
    /// Random convolutional features with randomly initialised heads.
    Toy,
    /// Random convolutional features with heads read from `params_path`.
    File,
}

impl std::str::FromStr for ExtractorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "toy" => Ok(Self::Toy),
            "file" => Ok(Self::File),
            _ => Err(Error::Param(format!("unknown extractor '{s}' (oracle, toy or file)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub eta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub n: usize,
    pub t_wh: f64,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub template_size: usize,
    pub search_size: usize,
    pub stride: usize,
    pub nms_window: usize,
    pub extractor: ExtractorKind,
    pub params_path: Option<PathBuf>,
    pub seed: u64,
    pub toy_widths: [usize; 3],
    pub head_width: usize,
    pub oracle_tolerance: f64,
    pub train_pairs: usize,
    pub train_steps: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let h = TrackerHyper::default();
        let w = LossWeights::default();
        let t = TrackerConfig::default();
        let tr = TrainConfig::default();
        Self {
            eta: h.eta,
            gamma: h.gamma,
            lr: h.lr,
            n: h.n,
            t_wh: h.t_wh,
            d: h.d,
            alpha: w.alpha,
            beta: w.beta,
            lambda: w.lambda,
            template_size: t.template_size,
            search_size: t.search_size,
            stride: 8,
            nms_window: t.nms_window,
            extractor: ExtractorKind::Oracle,
            params_path: None,
            seed: 0,
            toy_widths: ToyConvExtractor::DEFAULT_WIDTHS,
            head_width: 16,
            oracle_tolerance: OracleExtractor::default().tolerance,
            train_pairs: 8,
            train_steps: tr.steps,
            step_size: tr.step_size,
            momentum: tr.momentum,
            clip_norm: tr.clip_norm,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    pub fn hyper(&self) -> TrackerHyper {
        TrackerHyper { eta: self.eta, gamma: self.gamma, lr: self.lr, n: self.n, t_wh: self.t_wh, d: self.d }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { alpha: self.alpha, beta: self.beta, lambda: self.lambda, d: self.d }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            hyper: self.hyper(),
            template_size: self.template_size,
            search_size: self.search_size,
            nms_window: self.nms_window,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train_steps,
            step_size: self.step_size,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
            weights: self.loss_weights(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker_config().validate()?;
        self.loss_weights().validate()?;
        let bad = |m: String| Err(Error::Param(m));
        if self.stride != 8 {
            return bad(format!("only stride 8 is supported, got {}", self.stride));
        }
        if self.toy_widths.contains(&0) || self.head_width == 0 {
            return bad("toy_widths and head_width must be positive".into());
        }
        if !(self.oracle_tolerance > 0.0 && self.oracle_tolerance.is_finite()) {
            return bad(format!("oracle_tolerance must be positive, got {}", self.oracle_tolerance));
        }
        if self.train_pairs == 0 {
            return bad("train_pairs must be at least 1".into());
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("need step_size > 0 and momentum in [0, 1)".into());
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive".into());
        }
        if self.extractor == ExtractorKind::File && self.params_path.is_none() {
            return bad("extractor 'file' needs params_path".into());
        }
        Ok(())
    }

    pub fn toy_extractor(&self) -> ToyConvExtractor {
        ToyConvExtractor::new(self.seed, self.toy_widths)
    }

    pub fn initial_params(&self) -> NetworkParams {
        NetworkParams::random(self.toy_widths[2], self.head_width, self.seed.wrapping_add(1))
    }

    /// Builds the tracker this configuration describes.
    pub fn build_tracker(&self) -> Result<Tracker<Box<dyn FeatureExtractor>>> {
        self.validate()?;
        let (extractor, params): (Box<dyn FeatureExtractor>, NetworkParams) = match self.extractor {
            ExtractorKind::Oracle => (
                Box::new(OracleExtractor { tolerance: self.oracle_tolerance, ..Default::default() }),
                NetworkParams::oracle(),
            ),
            ExtractorKind::Toy => (Box::new(self.toy_extractor()), self.initial_params()),
            ExtractorKind::File => {
                let path = self.params_path.as_ref().expect("validated");
                (Box::new(self.toy_extractor()), load_params(path)?)
            }
        };
        Tracker::new(extractor, params, self.tracker_config())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_constants() {
        let c = Config::default();
        assert_eq!((c.t_wh, c.d, c.alpha, c.beta, c.lambda), (0.5, 0.5, 2.0, 4.0, 1.0));
        assert_eq!((c.n, c.template_size, c.search_size, c.stride), (15, 127, 255, 8));
        c.validate().unwrap();
    }

    #[test]
    fn dump_round_trips() {
        let c = Config { seed: 9, extractor: ExtractorKind::Toy, ..Default::default() };
        assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_json(r#"{"etaa": 0.1}"#).is_err());
        assert!(Config::from_json(r#"{"eta": 0.1}"#).is_err());
        assert!(Config::from_json(r#"{"gamma": 1.5}"#).is_err());
        assert!(Config::from_json(r#"{"nms_window": 4}"#).is_err());
        assert!(Config::from_json(r#"{"stride": 4}"#).is_err());
        assert!(Config::from_json(r#"{"extractor": "file"}"#).is_err());
        assert!(Config::from_json(r#"{"extractor": "resnet"}"#).is_err());
    }

    #[test]
    fn builds_each_tracker_kind() {
        assert_eq!(Config::default().build_tracker().unwrap().extractor.channels(), 8);
        let toy = Config { extractor: ExtractorKind::Toy, toy_widths: [4, 4, 6], head_width: 4, ..Default::default() };
        assert_eq!(toy.build_tracker().unwrap().extractor.channels(), 6);
        assert!("file".parse::<ExtractorKind>().is_ok() && "x".parse::<ExtractorKind>().is_err());
    }
}
