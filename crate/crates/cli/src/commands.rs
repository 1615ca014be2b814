use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fan_core::array::{
    beampattern, response, select_diagonal_pair, steering_vector, superdirective_weights, white_noise_gain,
    ArrayGeometry, LookDirection, SuperdirectiveWeights,
};
use fan_core::dataset::{load_corpus, load_corpus_where, load_spectra};
use fan_core::frontend::{FrameConfig, FrameTransformer};
use fan_core::io::{read_checkpoint, read_manifest, write_features, ManifestEntry, SavedModel, Split};
use fan_core::layers::{assemble_variant, parameter_count, McConfig, VariantTag};
use fan_core::sim::{build_corpus, CorpusSpec, SnrBucket};
use fan_core::train::{
    evaluate, gradient_check, tiny_batch, tiny_pipeline, train_stagewise, Example, ModelConfig, Route, TrainOptions,
};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::report::{csv, num, pct, table};

fn parse_variant(s: &str) -> CliResult<VariantTag> {
    s.parse().map_err(|_| {
        CliError::Usage(format!(
            "unknown variant {s:?}; expected one of {}",
            VariantTag::ALL.map(|t| t.as_str()).join(", ")
        ))
    })
}

fn load_geometry(args: &GeometryArgs) -> CliResult<ArrayGeometry> {
    match &args.geometry {
        Some(p) => Ok(ArrayGeometry::from_text(&std::fs::read_to_string(p)?)?),
        None => Ok(ArrayGeometry::default()),
    }
}

fn pick_mics(geometry: &ArrayGeometry, mics: &Option<Vec<usize>>) -> CliResult<Vec<usize>> {
    match mics {
        Some(m) if m.is_empty() => Err(CliError::Usage("--mics needs at least one index".into())),
        Some(m) => {
            if let Some(&bad) = m.iter().find(|&&i| i >= geometry.num_mics()) {
                return Err(CliError::Usage(format!(
                    "mic {bad} not in a {}-mic geometry",
                    geometry.num_mics()
                )));
            }
            Ok(m.clone())
        }
        None => {
            let (a, b) = select_diagonal_pair(geometry)?;
            Ok(vec![a, b])
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sd_design(
    geometry: &ArrayGeometry,
    mics: &[usize],
    directions: usize,
    frame: &FrameConfig,
    sigma2: f64,
) -> CliResult<SuperdirectiveWeights> {
    let pair = geometry.subset(mics)?;
    Ok(superdirective_weights(
        &pair,
        &LookDirection::uniform(directions),
        &frame.bin_omegas(),
        sigma2,
    )?)
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(p) => CorpusSpec::from_toml(&std::fs::read_to_string(p)?)?,
        None => CorpusSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let geometry = load_geometry(&args.geometry)?;
    let report = build_corpus(&spec, &geometry, &args.out)?;
    let mut rows = Vec::new();
    for ((split, bucket, pb), n) in report.bucket_counts() {
        rows.push(vec![
            split.to_string(),
            bucket.label().to_string(),
            u8::from(pb).to_string(),
            n.to_string(),
        ]);
    }
    let headers = ["split", "snr_bucket", "playback", "utterances"];
    writeln!(out, "{}", table(&headers, &rows))?;
    writeln!(
        out,
        "{} utterances, {} clipped samples, manifest {}",
        report.entries.len(),
        report.clipped_samples,
        args.out.join("manifest.tsv").display()
    )?;
    write_file(&args.out.join("counts.csv"), csv(&headers, &rows).as_bytes())
}

pub fn extract(args: &ExtractArgs, out: &mut dyn Write) -> CliResult<()> {
    let geometry = load_geometry(&args.geometry)?;
    let mics = pick_mics(&geometry, &args.mics)?;
    let entries = read_manifest(&args.manifest)?;
    let root = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    let frame = FrameConfig::default();
    let transformer = FrameTransformer::new(frame)?;
    let results: Vec<CliResult<(PathBuf, usize)>> = entries
        .par_iter()
        .map(|e| {
            let frames = load_spectra(&root.join(&e.path), &mics, &transformer)?;
            let dest = args.out.join(Path::new(&e.path).with_extension("fanf"));
            write_file(&dest, &write_features(&frames)?)?;
            Ok((dest, frames.len()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = 0;
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok((_, n)) => rows.push(vec![e.path.clone(), n.to_string()]),
            Err(err) => {
                failures += 1;
                eprintln!("{}: {err}", e.path);
            }
        }
    }
    writeln!(
        out,
        "{} feature files ({} channels x {} bins) under {}, {} failures",
        rows.len(),
        mics.len(),
        frame.num_bins(),
        args.out.display(),
        failures
    )?;
    write_file(
        &args.out.join("features.csv"),
        csv(&["path", "frames"], &rows).as_bytes(),
    )?;
    if failures > 0 {
        return Err(CliError::Data(format!("{failures} utterances could not be extracted")));
    }
    Ok(())
}

pub fn beampattern_cmd(args: &BeampatternArgs, out: &mut dyn Write) -> CliResult<()> {
    let geometry = load_geometry(&args.geometry)?;
    let mics = pick_mics(&geometry, &None)?;
    let pair = geometry.subset(&mics)?;
    let frame = FrameConfig::default();
    let omegas = frame.bin_omegas();
    let dirs = LookDirection::uniform(args.directions);
    let sd = superdirective_weights(&pair, &dirs, &omegas, args.diagonal_loading)?;
    if !(args.step_deg > 0.0) {
        return Err(CliError::Usage("--step-deg must be positive".into()));
    }
    let azimuths: Vec<f64> = (0..)
        .map(|i| i as f64 * args.step_deg)
        .take_while(|&a| a < 360.0)
        .collect();
    let az_rad: Vec<f64> = azimuths.iter().map(|a| a.to_radians()).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let ref_bin = (1000.0 / (f64::from(frame.sample_rate_hz) / frame.fft_size as f64)).round() as usize - 1;
    for (d, dir) in dirs.iter().enumerate() {
        let mut worst = 0.0f64;
        for (k, &w) in omegas.iter().enumerate() {
            let wv = sd.weight_vector(k, d);
            worst = worst.max((response(wv, &steering_vector(&pair, dir, w)) - 1.0).norm());
            let bp = beampattern(wv, &pair, w, &az_rad);
            for (a, p) in azimuths.iter().zip(bp) {
                rows.push(vec![
                    k.to_string(),
                    format!("{:.1}", frame.bin_frequency_hz(k)),
                    format!("{:.1}", dir.azimuth().to_degrees()),
                    format!("{a:.1}"),
                    format!("{:.4}", 10.0 * p.max(1e-30).log10()),
                ]);
            }
        }
        summary.push(vec![
            format!("{:.1}", dir.azimuth().to_degrees()),
            format!("{worst:.2e}"),
            format!("{:.2}", 10.0 * white_noise_gain(sd.weight_vector(ref_bin, d)).log10()),
        ]);
    }
    writeln!(out, "mics {:?}, diagonal loading {}", mics, args.diagonal_loading)?;
    writeln!(
        out,
        "{}",
        table(
            &[
                "look_deg",
                "max |w^H v - 1|",
                &format!("WNG dB @ {:.0} Hz", frame.bin_frequency_hz(ref_bin))
            ],
            &summary
        )
    )?;
    write_file(
        &args.out,
        csv(&["bin", "freq_hz", "look_deg", "azimuth_deg", "power_db"], &rows).as_bytes(),
    )
}

/// Relative error floor below which both gradients count as zero.
pub const GRADCHECK_FLOOR: f64 = 1e-8;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let tags = match &args.variant {
        Some(v) => vec![parse_variant(v)?],
        None => VariantTag::ALL.to_vec(),
    };
    let data = tiny_batch(args.seed, 4);
    let batch: Vec<Example<'_>> = data.iter().map(|(s, l)| Example { stack: s, label: *l }).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut failed = Vec::new();
    for tag in tags {
        let p = tiny_pipeline(tag, args.seed)?;
        let r = gradient_check(&p, &batch, Route::Full, args.step, GRADCHECK_FLOOR)?;
        for t in &r.tensors {
            rows.push(vec![
                tag.to_string(),
                t.name.clone(),
                t.entries.to_string(),
                format!("{:.3e}", t.max_relative_error),
                format!("{:.6e}", t.analytic),
                format!("{:.6e}", t.numeric),
            ]);
        }
        let e = r.max_relative_error();
        if e.is_nan() {
            return Err(CliError::Numeric(format!("{tag}: NaN in gradient check")));
        }
        let ok = e < GRADCHECK_TOLERANCE && r.vacuous().is_empty();
        if !ok {
            failed.push(tag);
        }
        summary.push(vec![
            tag.to_string(),
            r.tensors.iter().map(|t| t.entries).sum::<usize>().to_string(),
            format!("{e:.3e}"),
            if ok { "pass" } else { "FAIL" }.to_string(),
        ]);
    }
    writeln!(
        out,
        "{}",
        table(&["variant", "parameters", "max rel err", "result"], &summary)
    )?;
    let headers = [
        "variant",
        "tensor",
        "entries",
        "max_relative_error",
        "analytic",
        "numeric",
    ];
    match &args.out {
        Some(p) => write_file(p, csv(&headers, &rows).as_bytes())?,
        None => write!(out, "{}", csv(&headers, &rows))?,
    }
    if !failed.is_empty() {
        return Err(CliError::Numeric(format!("gradient check failed for {failed:?}")));
    }
    Ok(())
}

fn epochs(v: &Option<Vec<usize>>) -> CliResult<[usize; 3]> {
    match v.as_deref() {
        None => Ok(TrainOptions::default().epochs),
        Some([n]) => Ok([*n; 3]),
        Some([a, b, c]) => Ok([*a, *b, *c]),
        Some(_) => Err(CliError::Usage(
            "--epochs takes one number or three comma-separated numbers".into(),
        )),
    }
}

pub fn metrics_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".metrics.csv");
    PathBuf::from(s)
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let tag = parse_variant(&args.variant)?;
    if !(args.lr > 0.0) {
        return Err(CliError::Usage("--lr must be positive".into()));
    }
    let geometry = load_geometry(&args.geometry)?;
    let mics = pick_mics(&geometry, &args.mics)?;
    let frame = FrameConfig::default();
    let corpus = load_corpus(&args.manifest, &frame, &mics, None)?;
    let train = corpus.split(Split::Train);
    let dev = corpus.split(Split::Dev);
    if dev.is_empty() {
        return Err(CliError::Data("manifest has no dev split".into()));
    }
    let classes = corpus
        .entries
        .values()
        .flatten()
        .map(|e| e.class_id + 1)
        .max()
        .unwrap_or(0);
    let cfg = ModelConfig {
        mc: McConfig {
            channels: mics.len(),
            ..McConfig::default()
        },
        hidden: args.hidden,
        classes,
        lfr_factor: frame.lfr_factor,
        ..ModelConfig::default()
    };
    let sd = if tag.uses_bat() {
        Some(sd_design(
            &geometry,
            &mics,
            cfg.mc.look_directions,
            &frame,
            args.diagonal_loading,
        )?)
    } else {
        None
    };
    let opts = TrainOptions {
        epochs: epochs(&args.epochs)?,
        adam: fan_core::train::AdamConfig {
            learning_rate: args.lr,
            ..Default::default()
        },
        batch_size: args.batch_size,
        seed: args.seed,
        warmup_freeze: !args.no_warmup_freeze,
    };
    let (pipeline, log) = train_stagewise(tag, &cfg, sd.as_ref(), train, dev, &opts)?;
    let saved = SavedModel {
        pipeline,
        config: cfg,
        frame,
        mics,
        stats: corpus.stats.clone(),
    };
    write_file(&args.out, &saved.to_checkpoint().to_bytes()?)?;
    let rows: Vec<Vec<String>> = log
        .rows
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.stage.to_string(),
                format!("{:.4}", r.train_loss),
                format!("{:.4}", r.dev_loss),
                pct(r.dev_accuracy),
            ]
        })
        .collect();
    writeln!(
        out,
        "{tag}: {} train / {} dev utterances, {classes} classes",
        train.len(),
        dev.len()
    )?;
    writeln!(
        out,
        "{}",
        table(&["epoch", "stage", "train_loss", "dev_loss", "dev_accuracy"], &rows)
    )?;
    let mp = metrics_path(&args.out);
    write_file(&mp, log.to_csv().as_bytes())?;
    writeln!(out, "checkpoint {}, metrics {}", args.out.display(), mp.display())?;
    Ok(())
}

/// Correct and total counts for one report cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Cells indexed by SNR bucket (`None` = all) and playback flag (`None` = all).
pub type Grid = Vec<((Option<SnrBucket>, Option<bool>), Cell)>;

pub fn accuracy_grid(entries: &[ManifestEntry], predictions: &[usize]) -> Grid {
    let mut keys = Vec::new();
    for b in SnrBucket::ALL.iter().map(|&b| Some(b)).chain([None]) {
        for pb in [Some(false), Some(true), None] {
            keys.push((b, pb));
        }
    }
    keys.into_iter()
        .map(|(b, pb)| {
            let mut c = Cell::default();
            for (e, &p) in entries.iter().zip(predictions) {
                if b.is_none_or(|b| SnrBucket::of(e.snr_db) == b) && pb.is_none_or(|pb| e.playback == pb) {
                    c.total += 1;
                    c.correct += usize::from(p == e.class_id);
                }
            }
            ((b, pb), c)
        })
        .collect()
}

/// `(e_base - e_model) / e_base` for error rates `e = 1 - accuracy`.
pub fn relative_error_reduction(model_acc: f64, base_acc: f64) -> f64 {
    let (em, eb) = (1.0 - model_acc, 1.0 - base_acc);
    if model_acc.is_nan() || base_acc.is_nan() {
        f64::NAN
    } else if eb == 0.0 {
        if em == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (eb - em) / eb
    }
}

fn predict(
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
) -> CliResult<(SavedModel, Vec<ManifestEntry>, Vec<usize>)> {
    let ckpt = read_checkpoint(checkpoint).map_err(|e| CliError::Data(format!("{}: {e}", checkpoint.display())))?;
    let model = SavedModel::from_checkpoint(&ckpt)?;
    let corpus = load_corpus_where(manifest, &model.frame, &model.mics, Some(&model.stats), |e| {
        e.split == split
    })?;
    let utts = corpus.split(split);
    if utts.is_empty() {
        return Err(CliError::Data(format!("manifest has no {split} utterances")));
    }
    let r = evaluate(&model.pipeline, utts, Route::Full)?;
    let entries = corpus.split_entries(split).to_vec();
    Ok((model, entries, r.predictions))
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let split: Split = args
        .split
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown split {:?}", args.split)))?;
    let (model, entries, preds) = predict(&args.checkpoint, &args.manifest, split)?;
    if let Some(v) = &args.variant {
        let want = parse_variant(v)?;
        if want != model.pipeline.tag() {
            return Err(CliError::Usage(format!(
                "checkpoint holds {}, not {want}",
                model.pipeline.tag()
            )));
        }
    }
    let grid = accuracy_grid(&entries, &preds);
    let base = match &args.baseline_checkpoint {
        Some(b) => {
            let (bm, be, bp) = predict(b, &args.manifest, split)?;
            Some((bm.pipeline.tag(), accuracy_grid(&be, &bp)))
        }
        None => None,
    };
    let name = |b: Option<SnrBucket>| b.map_or("all", SnrBucket::label).to_string();
    let pbname = |p: Option<bool>| match p {
        Some(false) => "no-playback",
        Some(true) => "playback",
        None => "all",
    };
    let mut rows = Vec::new();
    let mut text_rows = Vec::new();
    for (i, ((b, pb), c)) in grid.iter().enumerate() {
        let base_acc = base.as_ref().map(|(_, g)| g[i].1.accuracy());
        let rer = base_acc.map(|ba| relative_error_reduction(c.accuracy(), ba));
        rows.push(vec![
            name(*b),
            pbname(*pb).to_string(),
            c.total.to_string(),
            num(c.accuracy()),
            base_acc.map_or(String::new(), num),
            rer.map_or(String::new(), |r| if r.is_infinite() { "-inf".into() } else { num(r) }),
        ]);
        let mut t = vec![
            name(*b),
            pbname(*pb).to_string(),
            c.total.to_string(),
            pct(c.accuracy()),
        ];
        if let (Some(ba), Some(r)) = (base_acc, rer) {
            t.push(pct(ba));
            t.push(pct(r));
        }
        text_rows.push(t);
    }
    let mut headers = vec!["snr_bucket", "playback", "utterances", "accuracy"];
    writeln!(
        out,
        "{} on {split} ({} utterances)",
        model.pipeline.tag(),
        entries.len()
    )?;
    if let Some((bt, _)) = &base {
        writeln!(out, "baseline {bt}")?;
        headers.extend(["baseline_accuracy", "error_reduction"]);
    }
    writeln!(out, "{}", table(&headers, &text_rows))?;
    let csv_headers = [
        "snr_bucket",
        "playback",
        "utterances",
        "accuracy",
        "baseline_accuracy",
        "relative_error_reduction",
    ];
    let body = csv(&csv_headers, &rows);
    match &args.out {
        Some(p) => write_file(p, body.as_bytes()),
        None => Ok(write!(out, "{body}")?),
    }
}

pub fn params(args: &ParamsArgs, out: &mut dyn Write) -> CliResult<()> {
    let tags = match &args.variant {
        Some(v) => vec![parse_variant(v)?],
        None => VariantTag::ALL.to_vec(),
    };
    let cfg = McConfig {
        random_bat_fallback: true,
        ..McConfig::default()
    };
    let mut rows = Vec::new();
    let mut fan = None;
    let mut affine = None;
    for tag in tags {
        let v = assemble_variant(tag, &cfg, None, &mut ChaCha8Rng::seed_from_u64(0))?;
        let count = parameter_count(&v);
        for l in &count.layers {
            rows.push(vec![
                tag.to_string(),
                l.layer.clone(),
                l.weights.to_string(),
                l.biases.to_string(),
                l.total().to_string(),
            ]);
        }
        rows.push(vec![
            tag.to_string(),
            "total".into(),
            String::new(),
            String::new(),
            count.total().to_string(),
        ]);
        if let Some(f) = count.layer("fan") {
            fan = Some(f.total());
        }
        if tag == VariantTag::BatAt {
            affine = count.layer("affine").map(|a| (a.total(), a.weights));
        }
    }
    let headers = ["variant", "layer", "weights", "biases", "total"];
    writeln!(
        out,
        "K={} bins, D={} look directions, N={} FAN filters, M={} channels",
        cfg.bins, cfg.look_directions, cfg.fan_filters, cfg.channels
    )?;
    writeln!(out, "{}", table(&headers, &rows))?;
    if let (Some(f), Some((a, aw))) = (fan, affine) {
        writeln!(
            out,
            "fan / affine = {f} / {a} = {:.4}%  (weights only: {f} / {aw} = {:.4}%)",
            100.0 * f as f64 / a as f64,
            100.0 * f as f64 / aw as f64
        )?;
    }
    let body = csv(&headers, &rows);
    match &args.out {
        Some(p) => write_file(p, body.as_bytes()),
        None => Ok(write!(out, "\n{body}")?),
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Extract(a) => extract(a, out),
        Command::Beampattern(a) => beampattern_cmd(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Params(a) => params(a, out),
    }
}
