use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::morph::{MorphBlock, DMCL_LAYERS, DMCL_SE, DMOP_LAYERS, DMOP_SE};
use crate::train::{train, BlockTask, Objective, Sample, TrainConfig, TrainReport};

use super::eval::DetectionReport;
use super::pipeline::{variant, Pipeline, Variant};
use super::synth::{generate, SynthConfig, SynthSample};

pub const OPENING_NAME: &str = "dmop";
pub const CLOSING_NAME: &str = "dmcl";
/// Mixed into the seed of the held-out split.
const TEST_SALT: u64 = 0x7e57_5eed_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub se: usize,
    pub layers: usize,
}

impl BlockShape {
    pub const OPENING: BlockShape = BlockShape {
        se: DMOP_SE,
        layers: DMOP_LAYERS,
    };
    pub const CLOSING: BlockShape = BlockShape {
        se: DMCL_SE,
        layers: DMCL_LAYERS,
    };
}

/// Train and test splits drawn from one configuration.
pub fn generate_splits(cfg: &SynthConfig, train_count: usize, test_count: usize) -> Result<(Vec<SynthSample>, Vec<SynthSample>)> {
    let train = generate(cfg, train_count)?.samples;
    let test_cfg = SynthConfig {
        seed: cfg.seed ^ TEST_SALT,
        ..cfg.clone()
    };
    let test = generate(&test_cfg, test_count)?.samples;
    Ok((train, test))
}

/// Corrupted text centre against the clean one.
pub fn opening_samples(samples: &[SynthSample]) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| Sample {
            input: s.tc.clone(),
            target: s.clean.clone(),
        })
        .collect()
}

/// Segments assembled after the flat opening against the segments of the
/// clean text centre. The target keeps the overshoot of centred segments, so
/// the block learns to bridge gaps and drop stray segments rather than to
/// reshape every instance.
pub fn closing_samples(samples: &[SynthSample]) -> Result<Vec<Sample>> {
    let upstream = Pipeline::for_variant(variant("op").expect("op is a variant"), None, None)?;
    let clean = Pipeline::default();
    samples
        .par_iter()
        .map(|s| {
            Ok(Sample {
                input: upstream.text_segments(s)?,
                target: clean.clean_segments(s)?,
            })
        })
        .collect()
}

/// Which blocks a training run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSet {
    Opening,
    Closing,
    Both,
}

impl BlockSet {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            OPENING_NAME => Some(BlockSet::Opening),
            CLOSING_NAME => Some(BlockSet::Closing),
            "both" => Some(BlockSet::Both),
            _ => None,
        }
    }
}

/// Trains fresh blocks on `train_set`; the two never share weights or data.
pub fn train_blocks(
    train_set: &[SynthSample],
    blocks: BlockSet,
    opening: BlockShape,
    closing: BlockShape,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let op = match blocks {
        BlockSet::Closing => Vec::new(),
        _ => opening_samples(train_set),
    };
    let cl = match blocks {
        BlockSet::Opening => Vec::new(),
        _ => closing_samples(train_set)?,
    };
    let mut tasks = Vec::new();
    if !op.is_empty() {
        tasks.push(BlockTask {
            name: OPENING_NAME.into(),
            block: MorphBlock::dmop(1, opening.se, opening.layers),
            objective: Objective::TextCenter,
            samples: &op,
        });
    }
    if !cl.is_empty() {
        tasks.push(BlockTask {
            name: CLOSING_NAME.into(),
            block: MorphBlock::dmcl(1, closing.se, closing.layers),
            objective: Objective::TextMap,
            samples: &cl,
        });
    }
    train(tasks, cfg)
}

pub fn evaluate_variant(variant: Variant, blocks: &[(String, MorphBlock)], test_set: &[SynthSample]) -> Result<DetectionReport> {
    let find = |name: &str| blocks.iter().find(|(n, _)| n == name).map(|(_, b)| b);
    Pipeline::for_variant(variant, find(OPENING_NAME), find(CLOSING_NAME))?.evaluate(test_set)
}

/// Which block a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Opening,
    Closing,
}

impl SweepTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepTarget::Opening => OPENING_NAME,
            SweepTarget::Closing => CLOSING_NAME,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            OPENING_NAME => Some(SweepTarget::Opening),
            CLOSING_NAME => Some(SweepTarget::Closing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub target: SweepTarget,
    pub sizes: Vec<usize>,
    pub layers: Vec<usize>,
    pub repetitions: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// Variant scored for every run.
    pub variant: Variant,
    /// Shapes of the block that is not swept.
    pub opening: BlockShape,
    pub closing: BlockShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub se: usize,
    pub layers: usize,
    /// F-measure per repetition; `None` marks a run that diverged.
    pub runs: Vec<Option<f64>>,
}

impl SweepRow {
    fn completed(&self) -> Vec<f64> {
        self.runs.iter().flatten().copied().collect()
    }

    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.is_none()).count()
    }

    pub fn min(&self) -> Option<f64> {
        self.completed().into_iter().reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.completed().into_iter().reduce(f64::max)
    }

    pub fn mean(&self) -> Option<f64> {
        let f = self.completed();
        (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
    }

    /// Population standard deviation (divides by the run count).
    pub fn std(&self) -> Option<f64> {
        let f = self.completed();
        let mean = self.mean()?;
        Some((f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64).sqrt())
    }
}

/// Trains and scores every `(size, layers)` combination `repetitions` times.
///
/// Repetition `r` uses seed `seed ^ r` for both the corpus and the shuffle,
/// so all rows see the same data in the same repetition.
pub fn ablation_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.sizes.is_empty() || cfg.layers.is_empty() || cfg.repetitions == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one size, depth and repetition".into()));
    }
    let splits = (0..cfg.repetitions as u64)
        .map(|r| {
            let synth = SynthConfig {
                seed: cfg.synth.seed ^ r,
                ..cfg.synth.clone()
            };
            generate_splits(&synth, cfg.train_count, cfg.test_count)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &layers in &cfg.layers {
        for &se in &cfg.sizes {
            let shape = BlockShape { se, layers };
            let (opening, closing) = match cfg.target {
                SweepTarget::Opening => (shape, cfg.closing),
                SweepTarget::Closing => (cfg.opening, shape),
            };
            let mut runs = Vec::with_capacity(cfg.repetitions);
            for (r, (train_set, test_set)) in splits.iter().enumerate() {
                let tc = TrainConfig {
                    seed: cfg.train.seed ^ r as u64,
                    ..cfg.train.clone()
                };
                match train_blocks(train_set, BlockSet::Both, opening, closing, &tc) {
                    Ok(report) => runs.push(Some(evaluate_variant(cfg.variant, &report.blocks, test_set)?.f_measure)),
                    Err(Error::Diverged { .. }) => runs.push(None),
                    Err(e) => return Err(e),
                }
            }
            rows.push(SweepRow { se, layers, runs });
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "block,se,layers,runs,failed,f_min,f_max,f_mean,f_std_population";

/// One line per row; statistics of a row with no completed run are empty.
pub fn sweep_csv(target: SweepTarget, rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            target.as_str(),
            r.se,
            r.layers,
            r.runs.len(),
            r.failed(),
            cell(r.min()),
            cell(r.max()),
            cell(r.mean()),
            cell(r.std())
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_statistics_skip_failed_runs() {
        let row = SweepRow {
            se: 3,
            layers: 2,
            runs: vec![Some(0.5), None, Some(0.7)],
        };
        assert_eq!(row.failed(), 1);
        assert_eq!(row.min(), Some(0.5));
        assert_eq!(row.max(), Some(0.7));
        assert!((row.mean().unwrap() - 0.6).abs() < 1e-12);
        assert!((row.std().unwrap() - 0.1).abs() < 1e-12);
        let csv = sweep_csv(SweepTarget::Closing, &[row]);
        assert_eq!(csv.lines().nth(1).unwrap(), "dmcl,3,2,3,1,0.500000,0.700000,0.600000,0.100000");
    }

    #[test]
    fn all_failed_row_has_empty_statistics() {
        let row = SweepRow {
            se: 2,
            layers: 1,
            runs: vec![None, None],
        };
        assert_eq!(row.mean(), None);
        assert!(sweep_csv(SweepTarget::Opening, &[row]).ends_with("dmop,2,1,2,2,,,,\n"));
    }

    #[test]
    fn tiny_training_run_produces_both_blocks() {
        let (train_set, test_set) = generate_splits(&SynthConfig::default(), 4, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let report = train_blocks(&train_set, BlockSet::Both, BlockShape::OPENING, BlockShape::CLOSING, &cfg).unwrap();
        assert!(report.block(OPENING_NAME).is_some() && report.block(CLOSING_NAME).is_some());
        let r = evaluate_variant(variant("dmop+dmcl").unwrap(), &report.blocks, &test_set).unwrap();
        assert_eq!(r.tp + r.fn_, test_set.iter().map(|s| s.polygons.len()).sum::<usize>());
    }
}
