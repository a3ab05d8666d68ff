use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bench::{
    ablation_sweep, evaluate_variant, generate_splits, load_corpus, save_corpus, sweep_csv, train_blocks, variant, BlockSet,
    BlockShape, DetectionReport, SweepConfig, SweepTarget, SynthConfig, SynthSample, Variant, CLOSING_NAME, CORPUS_MANIFEST,
    OPENING_NAME,
};
use crate::map::{decode_map, pgm_bytes, MAGIC};
use crate::morph::{load_checkpoint, MorphBlock, MANIFEST_NAME};
use crate::train::{grad_check, linear_loss, random_instance, GradCheckReport, OptimizerKind, TrainConfig, DEFAULT_EPS, DEFAULT_TOL};
use crate::Error;

use super::{
    config::Settings, CliError, Command, Common, EvalArgs, GenerateArgs, GradcheckArgs, SweepArgs, TrainArgs, VisualizeArgs,
};

/// Resolved settings written into every output directory.
pub const RESOLVED_CONFIG: &str = "resolved.ini";
/// Corpus provenance: settings digest, seed and split sizes.
pub const RUN_MANIFEST: &str = "manifest.txt";
const REPORT_HEADER: &str = "variant,tp,fp,fn,precision,recall,f_measure";

type Defaults = Vec<(&'static str, String)>;

pub(super) fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Sweep(a) => sweep(a),
        Command::Visualize(a) => visualize(a),
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io(path, e))
}

/// Layers settings: defaults, then file, then `--set`, then dedicated flags.
/// Creates the output directory and records the resolved settings in it.
fn resolve(
    section: &str,
    mut defaults: Defaults,
    out: &str,
    common: &Common,
    flags: Vec<(&str, Option<String>)>,
) -> Result<(Settings, PathBuf), CliError> {
    defaults.extend([("seed", SynthConfig::standard().seed.to_string()), ("threads", "0".to_string()), ("out", out.to_string())]);
    let mut s = Settings::new(section, defaults);
    if let Some(path) = &common.config {
        s.merge_file(path)?;
    }
    s.set_pairs(&common.set)?;
    for (k, v) in flags {
        if let Some(v) = v {
            s.set(k, v)?;
        }
    }
    if let Some(v) = common.seed {
        s.set("seed", v)?;
    }
    if let Some(v) = common.threads {
        s.set("threads", v)?;
    }
    if let Some(v) = &common.out {
        s.set("out", v.display())?;
    }
    let out = PathBuf::from(s.raw("out"));
    fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
    write(&out.join(RESOLVED_CONFIG), s.to_ini())?;
    Ok((s, out))
}

/// Runs `f` on a pool of `threads` workers; 0 keeps the global pool.
fn with_threads<T>(s: &Settings, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match s.get::<usize>("threads")? {
        0 => f(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn span_text<T: std::fmt::Display>(s: (T, T)) -> String {
    format!("{},{}", s.0, s.1)
}

fn synth_defaults() -> Defaults {
    let c = SynthConfig::standard();
    vec![
        ("width", c.width.to_string()),
        ("height", c.height.to_string()),
        ("instances", span_text(c.instances)),
        ("thickness", span_text(c.thickness)),
        ("curvature", span_text(c.curvature)),
        ("amplitude", span_text(c.amplitude)),
        ("spacing", span_text(c.spacing)),
        ("noise_blobs", span_text(c.noise_blobs)),
        ("blob_size", span_text(c.blob_size)),
        ("noise_clearance", c.noise_clearance.to_string()),
        ("gaps", span_text(c.gaps)),
        ("gap_width", span_text(c.gap_width)),
    ]
}

fn synth_config(s: &Settings) -> Result<SynthConfig, CliError> {
    let cfg = SynthConfig {
        width: s.get("width")?,
        height: s.get("height")?,
        instances: s.span("instances")?,
        thickness: s.span("thickness")?,
        curvature: s.span("curvature")?,
        amplitude: s.span("amplitude")?,
        spacing: s.span("spacing")?,
        noise_blobs: s.span("noise_blobs")?,
        blob_size: s.span("blob_size")?,
        noise_clearance: s.get("noise_clearance")?,
        gaps: s.span("gaps")?,
        gap_width: s.span("gap_width")?,
        seed: s.get("seed")?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train_defaults() -> Defaults {
    let c = TrainConfig::standard();
    vec![
        ("optimizer", c.optimizer.as_str().to_string()),
        ("lr", c.lr.to_string()),
        ("momentum", c.momentum.to_string()),
        ("weight_decay", c.weight_decay.to_string()),
        ("epochs", c.epochs.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("lr_decay_factor", c.lr_decay_factor.to_string()),
        ("lr_decay_every", c.lr_decay_every.to_string()),
    ]
}

fn train_config(s: &Settings) -> Result<TrainConfig, CliError> {
    let optimizer = OptimizerKind::parse(s.raw("optimizer"))
        .ok_or_else(|| CliError::Usage(format!("optimizer {:?} is not sgd or adam", s.raw("optimizer"))))?;
    let cfg = TrainConfig {
        optimizer,
        lr: s.get("lr")?,
        momentum: s.get("momentum")?,
        weight_decay: s.get("weight_decay")?,
        epochs: s.get("epochs")?,
        batch_size: s.get("batch_size")?,
        lr_decay_factor: s.get("lr_decay_factor")?,
        lr_decay_every: s.get("lr_decay_every")?,
        seed: s.get("seed")?,
        ..TrainConfig::standard()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn shape_defaults() -> Defaults {
    let (o, c) = (BlockShape::OPENING, BlockShape::CLOSING);
    vec![
        ("dmop_se", o.se.to_string()),
        ("dmop_layers", o.layers.to_string()),
        ("dmcl_se", c.se.to_string()),
        ("dmcl_layers", c.layers.to_string()),
    ]
}

/// `3`, or a square `3x3`.
fn parse_se(text: &str) -> Result<usize, CliError> {
    let bad = || CliError::Usage(format!("SE size {text:?} must be N or NxN with N >= 1"));
    let n = match text.split_once('x') {
        Some((a, b)) if a == b => a.parse().map_err(|_| bad())?,
        Some(_) => return Err(bad()),
        None => text.parse().map_err(|_| bad())?,
    };
    if n == 0 {
        return Err(bad());
    }
    Ok(n)
}

fn block_shape(s: &Settings, prefix: &str) -> Result<BlockShape, CliError> {
    let se = parse_se(s.raw(&format!("{prefix}_se")))?;
    let layers: usize = s.get(&format!("{prefix}_layers"))?;
    if layers == 0 {
        return Err(CliError::Usage(format!("{prefix}_layers must be at least 1")));
    }
    Ok(BlockShape { se, layers })
}

/// Routes `--se`/`--layers` to the keys of the selected block.
fn block_flags(block: Option<&str>, se: &Option<String>, layers: Option<usize>) -> Result<Vec<(&'static str, Option<String>)>, CliError> {
    if se.is_none() && layers.is_none() {
        return Ok(Vec::new());
    }
    let (se_key, layers_key) = match block {
        Some(OPENING_NAME) => ("dmop_se", "dmop_layers"),
        Some(CLOSING_NAME) => ("dmcl_se", "dmcl_layers"),
        _ => return Err(CliError::Usage("--se and --layers need --block dmop or --block dmcl".into())),
    };
    Ok(vec![(se_key, se.clone()), (layers_key, layers.map(|v| v.to_string()))])
}

/// A corpus root written by `generate`, or a single split directory.
fn split_dir(corpus: &Path, split: &str) -> PathBuf {
    if corpus.join(CORPUS_MANIFEST).is_file() {
        corpus.to_path_buf()
    } else {
        corpus.join(split)
    }
}

fn load_split(s: &Settings, split: &str) -> Result<Vec<SynthSample>, CliError> {
    let dir = split_dir(Path::new(s.raw("corpus")), split);
    Ok(load_corpus(dir)?)
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut defaults = synth_defaults();
    defaults.extend([("train_count", "500".to_string()), ("test_count", "200".to_string())]);
    let flags = vec![
        ("train_count", a.train_count.map(|v| v.to_string())),
        ("test_count", a.test_count.map(|v| v.to_string())),
    ];
    let (s, out) = resolve("generate", defaults, "corpus", &a.common, flags)?;
    let cfg = synth_config(&s)?;
    let (train_count, test_count): (usize, usize) = (s.get("train_count")?, s.get("test_count")?);
    with_threads(&s, || {
        let (train, test) = generate_splits(&cfg, train_count, test_count)?;
        save_corpus(out.join("train"), &train)?;
        save_corpus(out.join("test"), &test)?;
        Ok(())
    })?;
    let manifest = format!(
        "config_sha256 = {}\nseed = {}\ntrain = {train_count}\ntest = {test_count}\n",
        s.digest(),
        cfg.seed
    );
    write(&out.join(RUN_MANIFEST), manifest)?;
    println!("wrote {train_count} train and {test_count} test samples to {}", out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut defaults = train_defaults();
    defaults.extend(shape_defaults());
    defaults.extend([("corpus", "corpus".to_string()), ("block", "both".to_string())]);
    let mut flags = block_flags(a.block.as_deref(), &a.se, a.layers)?;
    flags.extend([
        ("corpus", a.corpus.map(|p| p.display().to_string())),
        ("block", a.block.clone()),
        ("optimizer", a.optimizer),
        ("lr", a.lr.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
    ]);
    let (s, out) = resolve("train", defaults, "run", &a.common, flags)?;
    let blocks = BlockSet::parse(s.raw("block"))
        .ok_or_else(|| CliError::Usage(format!("block {:?} is not dmop, dmcl or both", s.raw("block"))))?;
    let opening = block_shape(&s, "dmop")?;
    let closing = block_shape(&s, "dmcl")?;
    let cfg = train_config(&s)?;
    with_threads(&s, || {
        let samples = load_split(&s, "train")?;
        match train_blocks(&samples, blocks, opening, closing, &cfg) {
            Ok(report) => {
                report.save(&out)?;
                if let Some(last) = report.history.last() {
                    println!(
                        "epoch {}: l_tc {:.6} l_tm {:.6} total {:.6}",
                        last.epoch, last.losses.l_tc, last.losses.l_tm, last.losses.total
                    );
                }
                Ok(())
            }
            Err(Error::Diverged { epoch, reason, partial }) => {
                partial.save(&out)?;
                Err(CliError::Failed(format!(
                    "training diverged at epoch {epoch}: {reason}; partial artifacts in {}",
                    out.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    })
}

fn baseline_variant(name: &str) -> Result<Variant, CliError> {
    let v = match name {
        "none" => "none",
        "op" => "op",
        "cl" => "cl",
        "opcl" => "op+cl",
        _ => return Err(CliError::Usage(format!("baseline {name:?} is not none, op, cl or opcl"))),
    };
    Ok(variant(v).expect("baseline names are variants"))
}

fn report_row(out: &mut String, name: &str, r: &DetectionReport) {
    writeln!(
        out,
        "{name},{},{},{},{:.6},{:.6},{:.6}",
        r.tp, r.fp, r.fn_, r.precision, r.recall, r.f_measure
    )
    .unwrap();
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let defaults = vec![
        ("corpus", "corpus".to_string()),
        ("split", "test".to_string()),
        ("checkpoint", "run/checkpoint".to_string()),
        ("baseline", "opcl".to_string()),
        ("all", "false".to_string()),
    ];
    let flags = vec![
        ("corpus", a.corpus.map(|p| p.display().to_string())),
        ("checkpoint", a.checkpoint.map(|p| p.display().to_string())),
        ("baseline", a.baseline),
        ("all", a.all.then(|| "true".to_string())),
    ];
    let (s, out) = resolve("eval", defaults, "eval", &a.common, flags)?;
    let baseline = baseline_variant(s.raw("baseline"))?;
    let blocks = load_checkpoint(s.raw("checkpoint"))?;
    let has = |n: &str| blocks.iter().any(|(b, _)| b == n);
    let trained = match (has(OPENING_NAME), has(CLOSING_NAME)) {
        (true, true) => "dmop+dmcl",
        (true, false) => "dmop",
        (false, true) => "dmcl",
        (false, false) => {
            return Err(CliError::Runtime(Error::Checkpoint(format!(
                "{} holds neither a {OPENING_NAME} nor a {CLOSING_NAME} block",
                s.raw("checkpoint")
            ))))
        }
    };
    let variants: Vec<Variant> = if s.flag("all")? {
        crate::bench::VARIANTS
            .iter()
            .copied()
            .filter(|v| v.name.split('+').all(|p| !p.starts_with("dm") || has(p)))
            .collect()
    } else {
        vec![baseline, variant(trained).expect("trained names are variants")]
    };
    let split: String = s.get("split")?;
    let csv = with_threads(&s, || {
        let test = load_split(&s, &split)?;
        let mut csv = format!("{REPORT_HEADER}\n");
        for v in &variants {
            let r = evaluate_variant(*v, &blocks, &test)?;
            report_row(&mut csv, v.name, &r);
        }
        Ok(csv)
    })?;
    write(&out.join("report.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let mut defaults = shape_defaults();
    defaults.extend([
        ("block", OPENING_NAME.to_string()),
        ("trials", "20".to_string()),
        ("width", "8".to_string()),
        ("height", "8".to_string()),
        ("eps", DEFAULT_EPS.to_string()),
        ("tol", DEFAULT_TOL.to_string()),
        ("corrupt_backward", "false".to_string()),
    ]);
    let flags = vec![
        ("block", a.block),
        ("trials", a.trials.map(|v| v.to_string())),
        ("corrupt_backward", a.corrupt_backward.then(|| "true".to_string())),
    ];
    let (s, out) = resolve("gradcheck", defaults, "gradcheck", &a.common, flags)?;
    let name = s.raw("block").to_string();
    let shape = match name.as_str() {
        OPENING_NAME => block_shape(&s, "dmop")?,
        CLOSING_NAME => block_shape(&s, "dmcl")?,
        other => return Err(CliError::Usage(format!("block {other:?} is not dmop or dmcl"))),
    };
    let trials: usize = s.get("trials")?;
    let (width, height): (usize, usize) = (s.get("width")?, s.get("height")?);
    let (eps, tol): (f64, f64) = (s.get("eps")?, s.get("tol")?);
    let corrupt = s.flag("corrupt_backward")?;
    let seed: u64 = s.get("seed")?;
    let mut csv = String::from("trial,checked,skipped,max_abs_dev,passed\n");
    let mut total = GradCheckReport {
        max_abs_dev: 0.0,
        checked: 0,
        skipped: 0,
        tol,
    };
    with_threads(&s, || {
        for t in 0..trials {
            let mut block = if name == OPENING_NAME {
                MorphBlock::dmop(1, shape.se, shape.layers)
            } else {
                MorphBlock::dmcl(1, shape.se, shape.layers)
            };
            let (input, weights) = random_instance(&mut block, 1, width, height, seed.wrapping_add(t as u64));
            block.set_corrupt_backward(corrupt);
            let r = grad_check(&block, &input, &linear_loss(weights), eps, tol)?;
            writeln!(csv, "{t},{},{},{:e},{}", r.checked, r.skipped, r.max_abs_dev, r.passed()).unwrap();
            total.merge(&r);
        }
        Ok(())
    })?;
    write(&out.join("gradcheck.csv"), &csv)?;
    if trials == 0 {
        eprintln!("warning: 0 trials requested; nothing was checked");
        println!("{name}: pass (vacuous)");
        return Ok(());
    }
    let verdict = if total.passed() { "pass" } else { "FAIL" };
    println!(
        "{name}: {verdict} over {trials} trials, {} coordinates checked, {} skipped near ties, max deviation {:e} (tol {tol:e})",
        total.checked, total.skipped, total.max_abs_dev
    );
    if total.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check failed for {name}")))
    }
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut defaults = synth_defaults();
    defaults.extend(train_defaults());
    defaults.extend(shape_defaults());
    defaults.extend([
        ("target", CLOSING_NAME.to_string()),
        ("sizes", "2,3,4,5".to_string()),
        ("layers", String::new()),
        ("repetitions", "5".to_string()),
        ("train_count", "500".to_string()),
        ("test_count", "200".to_string()),
        ("variant", "dmop+dmcl".to_string()),
    ]);
    let flags = vec![
        ("target", a.target),
        ("sizes", a.sizes),
        ("layers", a.layers),
        ("repetitions", a.repetitions.map(|v| v.to_string())),
    ];
    let (s, out) = resolve("sweep", defaults, "sweep", &a.common, flags)?;
    let target = SweepTarget::parse(s.raw("target"))
        .ok_or_else(|| CliError::Usage(format!("target {:?} is not dmop or dmcl", s.raw("target"))))?;
    let fixed = match target {
        SweepTarget::Opening => block_shape(&s, "dmop")?,
        SweepTarget::Closing => block_shape(&s, "dmcl")?,
    };
    let mut layers: Vec<usize> = s.list("layers")?;
    if layers.is_empty() {
        layers.push(fixed.layers);
    }
    let sizes = s.list::<String>("sizes")?.iter().map(|t| parse_se(t)).collect::<Result<Vec<_>, _>>()?;
    let variant = variant(s.raw("variant")).ok_or_else(|| CliError::Usage(format!("unknown variant {:?}", s.raw("variant"))))?;
    let cfg = SweepConfig {
        target,
        sizes,
        layers,
        repetitions: s.get("repetitions")?,
        train_count: s.get("train_count")?,
        test_count: s.get("test_count")?,
        synth: synth_config(&s)?,
        train: train_config(&s)?,
        variant,
        opening: block_shape(&s, "dmop")?,
        closing: block_shape(&s, "dmcl")?,
    };
    let rows = with_threads(&s, || ablation_sweep(&cfg).map_err(CliError::from))?;
    let csv = sweep_csv(target, &rows);
    write(&out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn visualize(a: VisualizeArgs) -> Result<(), CliError> {
    let defaults = vec![("artifact", a.artifact.display().to_string()), ("scale", "8".to_string())];
    let (s, out) = resolve("visualize", defaults, "viz", &a.common, Vec::new())?;
    let written = visualize_artifact(Path::new(s.raw("artifact")), &out, s.get("scale")?)?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

/// Min-max scaled to `0..=255`; a constant input renders as 128.
fn scaled_pixels(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 })
        .collect()
}

fn upscale(pixels: &[u8], width: usize, height: usize, scale: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(pixels.len() * scale * scale);
    for y in 0..height * scale {
        for x in 0..width * scale {
            out.push(pixels[(y / scale) * width + x / scale]);
        }
    }
    out
}

/// Renders a checkpoint (one tile per layer and channel, each weight a
/// `scale`-pixel square) or a map file (one image per channel, one pixel per
/// value). Returns the written paths.
pub fn visualize_artifact(artifact: &Path, out: &Path, scale: usize) -> Result<Vec<PathBuf>, CliError> {
    if scale == 0 {
        return Err(CliError::Usage("scale must be at least 1".into()));
    }
    let checkpoint = [artifact.to_path_buf(), artifact.join("checkpoint")]
        .into_iter()
        .find(|d| d.join(MANIFEST_NAME).is_file());
    let mut written = Vec::new();
    if let Some(dir) = checkpoint {
        for (name, block) in load_checkpoint(&dir)? {
            for (k, layer) in block.layers().iter().enumerate() {
                let se = layer.se();
                let (channels, m, n) = se.shape();
                for c in 0..channels {
                    let values: Vec<f64> = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| se.weight(c, i, j)).collect();
                    let pixels = upscale(&scaled_pixels(&values), m, n, scale);
                    let path = out.join(format!("{name}_{k:02}_{}_c{c}.pgm", layer.kind().as_str()));
                    write(&path, pgm_bytes(m * scale, n * scale, &pixels))?;
                    written.push(path);
                }
            }
        }
        return Ok(written);
    }
    let bytes = if artifact.is_file() { fs::read(artifact).map_err(|e| io(artifact, e))? } else { Vec::new() };
    if !bytes.starts_with(&MAGIC) {
        return Err(CliError::Usage(format!(
            "{} is neither a checkpoint directory nor a map file",
            artifact.display()
        )));
    }
    let map = decode_map(&bytes)?;
    let stem = artifact.file_stem().and_then(|s| s.to_str()).unwrap_or("map").to_string();
    for c in 0..map.channels() {
        let path = out.join(format!("{stem}_c{c}.pgm"));
        write(&path, pgm_bytes(map.width(), map.height(), &scaled_pixels(map.channel(c))))?;
        written.push(path);
    }
    Ok(written)
}
