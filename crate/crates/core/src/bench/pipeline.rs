use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{extract_regions, nms_segments, propose_segments, rasterize_segments, TextPolygon, MIN_REGION_AREA, NMS_IOU};
use crate::map::{BinaryMap, FeatureMap};
use crate::morph::{MorphBlock, DMCL_LAYERS, DMCL_SE, DMOP_LAYERS, DMOP_SE};

use super::eval::{evaluate, DetectionReport, MATCH_IOU};
use super::synth::SynthSample;

/// What runs at the opening or the closing position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    None,
    /// Frozen flat-SE operator.
    Flat,
    /// Trained block.
    Deep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub opening: Stage,
    pub closing: Stage,
}

const fn v(name: &'static str, opening: Stage, closing: Stage) -> Variant {
    Variant { name, opening, closing }
}

pub const VARIANTS: [Variant; 9] = [
    v("none", Stage::None, Stage::None),
    v("op", Stage::Flat, Stage::None),
    v("cl", Stage::None, Stage::Flat),
    v("op+cl", Stage::Flat, Stage::Flat),
    v("dmop", Stage::Deep, Stage::None),
    v("dmcl", Stage::None, Stage::Deep),
    v("dmop+cl", Stage::Deep, Stage::Flat),
    v("op+dmcl", Stage::Flat, Stage::Deep),
    v("dmop+dmcl", Stage::Deep, Stage::Deep),
];

pub fn variant(name: &str) -> Option<Variant> {
    VARIANTS.iter().copied().find(|v| v.name == name)
}

/// Text-centre map to detected polygons:
/// opening, segment proposal, suppression, rasterization, closing, contours.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub opening: Option<MorphBlock>,
    pub closing: Option<MorphBlock>,
    pub nms_iou: f64,
    pub min_area: usize,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            opening: None,
            closing: None,
            nms_iou: NMS_IOU,
            min_area: MIN_REGION_AREA,
        }
    }
}

impl Pipeline {
    /// Builds `variant`; deep stages need the matching trained block.
    pub fn for_variant(variant: Variant, dmop: Option<&MorphBlock>, dmcl: Option<&MorphBlock>) -> Result<Self> {
        let pick = |stage: Stage, flat: MorphBlock, deep: Option<&MorphBlock>, what: &str| -> Result<Option<MorphBlock>> {
            match stage {
                Stage::None => Ok(None),
                Stage::Flat => Ok(Some(flat)),
                Stage::Deep => deep
                    .cloned()
                    .map(Some)
                    .ok_or_else(|| Error::InvalidConfig(format!("variant {} needs a trained {what} block", variant.name))),
            }
        };
        Ok(Pipeline {
            opening: pick(variant.opening, MorphBlock::classical_opening(1, DMOP_SE, DMOP_LAYERS), dmop, "opening")?,
            closing: pick(variant.closing, MorphBlock::classical_closing(1, DMCL_SE, DMCL_LAYERS), dmcl, "closing")?,
            ..Pipeline::default()
        })
    }

    /// Text-centre decision after the opening stage.
    pub fn text_centre(&self, tc: &FeatureMap) -> Result<BinaryMap> {
        match &self.opening {
            None => decide_direct(tc),
            Some(b) => decide_block(b, tc),
        }
    }

    /// Rasterized text segments (0/1) before the closing stage.
    pub fn text_segments(&self, sample: &SynthSample) -> Result<FeatureMap> {
        let centre = self.text_centre(&sample.tc)?;
        self.segments_from(&centre, &sample.tc, sample)
    }

    /// Segments the clean text centre yields; no morphology is applied.
    pub fn clean_segments(&self, sample: &SynthSample) -> Result<BinaryMap> {
        let ts = self.segments_from(&sample.clean, &sample.clean.to_feature_map(), sample)?;
        decide_direct(&ts)
    }

    fn segments_from(&self, centre: &BinaryMap, score: &FeatureMap, sample: &SynthSample) -> Result<FeatureMap> {
        let segs = propose_segments(centre, &sample.th, &sample.ta, Some(score))?;
        let kept = nms_segments(&segs, self.nms_iou);
        Ok(rasterize_segments(&kept, sample.width(), sample.height()))
    }

    /// Text-region decision after the closing stage.
    pub fn text_region(&self, sample: &SynthSample) -> Result<BinaryMap> {
        let ts = self.text_segments(sample)?;
        match &self.closing {
            None => decide_direct(&ts),
            Some(b) => decide_block(b, &ts),
        }
    }

    pub fn detect(&self, sample: &SynthSample) -> Result<Vec<TextPolygon>> {
        Ok(extract_regions(&self.text_region(sample)?, self.min_area))
    }

    /// Pooled detection counts over `samples`.
    pub fn evaluate(&self, samples: &[SynthSample]) -> Result<DetectionReport> {
        let reports = samples
            .par_iter()
            .map(|s| Ok(evaluate(&self.detect(s)?, &s.polygons, MATCH_IOU)))
            .collect::<Result<Vec<_>>>()?;
        Ok(reports.iter().fold(DetectionReport::default(), |acc, r| acc.merge(r)))
    }
}

fn decide_direct(m: &FeatureMap) -> Result<BinaryMap> {
    if m.channels() != 1 {
        return Err(Error::shape("1 channel", format!("{} channels", m.channels())));
    }
    Ok(BinaryMap::from_fn(m.width(), m.height(), |x, y| m.get(0, x, y) > 0.5))
}

fn decide_block(block: &MorphBlock, m: &FeatureMap) -> Result<BinaryMap> {
    let (y, _) = block.forward_traced(m)?;
    let r = block.readout();
    Ok(BinaryMap::from_fn(m.width(), m.height(), |x, yy| r.decide(y.get(0, x, yy))))
}
