//! On-disk corpus: one directory per split, four maps and an annotation
//! file per sample, and a manifest listing the samples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{format_annotations, parse_annotations};
use crate::map::{load_map, save_map, BinaryMap};

use super::synth::SynthSample;

pub const CORPUS_MANIFEST: &str = "corpus.txt";

fn stem(i: usize) -> String {
    format!("{i:05}")
}

/// Writes `samples` into `dir`, creating it if needed.
pub fn save_corpus(dir: impl AsRef<Path>, samples: &[SynthSample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# sample gap_pixels noise_pixels\n");
    for (i, s) in samples.iter().enumerate() {
        let base = dir.join(stem(i));
        save_map(&s.tc, base.with_extension("tc.fmap"))?;
        save_map(&s.clean.to_feature_map(), base.with_extension("clean.fmap"))?;
        save_map(&s.th, base.with_extension("th.fmap"))?;
        save_map(&s.ta, base.with_extension("ta.fmap"))?;
        let gt = base.with_extension("gt.txt");
        fs::write(&gt, format_annotations(&s.polygons)).map_err(|e| Error::io(&gt, e))?;
        writeln!(manifest, "{} {} {}", stem(i), s.gap_pixels, s.noise_pixels).unwrap();
    }
    let path = dir.join(CORPUS_MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<SynthSample>> {
    let dir = dir.as_ref();
    let path = dir.join(CORPUS_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let bad = || Error::InvalidConfig(format!("{}: bad corpus line {line:?}", path.display()));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let gap_pixels = f[1].parse().map_err(|_| bad())?;
        let noise_pixels = f[2].parse().map_err(|_| bad())?;
        let base = dir.join(f[0]);
        let tc = load_map(base.with_extension("tc.fmap"))?;
        let clean_map = load_map(base.with_extension("clean.fmap"))?;
        let clean = BinaryMap::from_fn(clean_map.width(), clean_map.height(), |x, y| clean_map.get(0, x, y) > 0.5);
        let th = load_map(base.with_extension("th.fmap"))?;
        let ta = load_map(base.with_extension("ta.fmap"))?;
        for m in [&th, &ta] {
            tc.check_same_shape(m)?;
        }
        clean.check_spatial(&tc)?;
        let gt = base.with_extension("gt.txt");
        let polygons = parse_annotations(&fs::read_to_string(&gt).map_err(|e| Error::io(&gt, e))?)?;
        out.push(SynthSample {
            tc,
            clean,
            th,
            ta,
            polygons,
            gap_pixels,
            noise_pixels,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::{generate, SynthConfig};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate(&SynthConfig::default(), 3).unwrap().samples;
        save_corpus(dir.path(), &samples).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), samples);
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::Io { .. })));
    }
}
