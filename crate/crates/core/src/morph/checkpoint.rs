//! On-disk form of trained blocks: a text manifest plus one map record per SE.
//!
//! ```text
//! block <name> residual=<0|1> trainable=<0|1> readout=<direct|intersect|union>
//! layer <dilation|erosion> <C>x<M>x<N> <file>
//! ```
//!
//! Layer lines belong to the closest preceding block line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::map::{decode_map, encode_map};

use super::block::{MorphBlock, Readout};
use super::kernel::MorphKind;
use super::layer::MorphLayer;
use super::se::StructElem;

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Writes `blocks` under `dir`, creating it if needed.
pub fn save_checkpoint(dir: impl AsRef<Path>, blocks: &[(&str, &MorphBlock)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (name, block) in blocks {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("block name {name:?} must be a non-empty word")));
        }
        writeln!(
            manifest,
            "block {name} residual={} trainable={} readout={}",
            block.residual() as u8,
            block.trainable() as u8,
            block.readout().as_str()
        )
        .unwrap();
        for (k, layer) in block.layers().iter().enumerate() {
            let (c, m, n) = layer.se().shape();
            let file = format!("{name}_{k:02}.fmap");
            writeln!(manifest, "layer {} {c}x{m}x{n} {file}", layer.kind().as_str()).unwrap();
            let path = dir.join(&file);
            fs::write(&path, encode_map(&layer.se().to_feature_map())).map_err(|e| Error::io(&path, e))?;
        }
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Reads every block listed in the manifest under `dir`, in manifest order.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Vec<(String, MorphBlock)>> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out: Vec<(String, BlockHeader, Vec<MorphLayer>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Checkpoint(format!("{}:{}: {what}", path.display(), lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            ["block", name, rest @ ..] => {
                let header = BlockHeader::parse(rest).ok_or_else(|| bad("unreadable block line"))?;
                out.push((name.to_string(), header, Vec::new()));
            }
            ["layer", kind, shape, file] => {
                let kind = MorphKind::parse(kind).ok_or_else(|| bad("unknown layer kind"))?;
                let shape = parse_shape(shape).ok_or_else(|| bad("unreadable layer shape"))?;
                let current = out.last_mut().ok_or_else(|| bad("layer before any block"))?;
                let rec = dir.join(file);
                let bytes = fs::read(&rec).map_err(|e| Error::io(&rec, e))?;
                let se = StructElem::from_feature_map(&decode_map(&bytes)?)?;
                if se.shape() != shape {
                    return Err(bad(&format!("record holds {:?}, manifest says {shape:?}", se.shape())));
                }
                current.2.push(MorphLayer::new(kind, se));
            }
            _ => return Err(bad("unrecognised line")),
        }
    }
    Ok(out
        .into_iter()
        .map(|(name, h, layers)| (name, MorphBlock::new(layers, h.residual, h.trainable, h.readout)))
        .collect())
}

struct BlockHeader {
    residual: bool,
    trainable: bool,
    readout: Readout,
}

impl BlockHeader {
    fn parse(fields: &[&str]) -> Option<Self> {
        let mut residual = None;
        let mut trainable = None;
        let mut readout = None;
        for f in fields {
            let (k, v) = f.split_once('=')?;
            match k {
                "residual" => residual = Some(parse_flag(v)?),
                "trainable" => trainable = Some(parse_flag(v)?),
                "readout" => readout = Some(Readout::parse(v)?),
                _ => return None,
            }
        }
        Some(BlockHeader {
            residual: residual?,
            trainable: trainable?,
            readout: readout?,
        })
    }
}

fn parse_flag(v: &str) -> Option<bool> {
    match v {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn parse_shape(s: &str) -> Option<(usize, usize, usize)> {
    let mut it = s.split('x').map(|p| p.parse::<usize>().ok());
    let shape = (it.next()??, it.next()??, it.next()??);
    it.next().is_none().then_some(shape)
}
