//! `cueball`: train, probe and score an associative memory over IDX image
//! sets.
//!
//! Exit codes: 0 success, 1 bad usage, 2 invalid or missing image data,
//! 3 store-file trouble (missing, corrupt, wrong width).

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cueball_core::{
    append_learned, evaluate, load, normalize, parse_idx, partial_probe, read_meta, save,
    CueRecord, HalfRegion, Hyperparams, IngestError, MemoryError, MemoryStore, MetricsError,
    Pattern, Precision, RawImageSet, Real, ShadingMetric, StoreError, StoreMeta,
};

#[derive(Parser)]
#[command(
    name = "cueball",
    version,
    about = "Associative memory over IDX image sets: one cue neuron per stored pattern"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn a range of images into a store file, creating or extending it
    Train(TrainArgs),
    /// Probe the memory and dump every cue that fires
    Recall(RecallArgs),
    /// Write the full response spectrum for one probe as CSV
    Spectrum(SpectrumArgs),
    /// Replay every learned pattern and score the reconstructions
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// IDX image file to learn from
    #[arg(long)]
    images: PathBuf,
    /// Store file to create or extend
    #[arg(long)]
    store: PathBuf,
    /// First image index to learn
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// How many images to learn (default: through the end of the set)
    #[arg(long)]
    count: Option<usize>,
    /// Persist after every CHUNK newly learned patterns
    #[arg(long, value_name = "CHUNK")]
    chunk_size: Option<usize>,
    /// Teacher signal each self-response is driven to (new stores only)
    #[arg(long)]
    theta: Option<f64>,
    /// Firing threshold recorded in the store (new stores only)
    #[arg(long)]
    threshold: Option<f64>,
    /// Weight width for a new store; an existing store keeps its own
    #[arg(long)]
    precision: Option<Precision>,
    /// Cue-ball capacity for a new store
    #[arg(long, default_value_t = 60_000)]
    capacity: usize,
}

#[derive(Args)]
struct RecallArgs {
    /// IDX image file the probe comes from
    #[arg(long)]
    images: PathBuf,
    /// Store file to probe
    #[arg(long)]
    store: PathBuf,
    /// Index of the probe image
    probe_index: usize,
    /// Keep only the upper half of the probe image
    #[arg(long)]
    half: bool,
    /// Firing threshold (default: the one recorded in the store)
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory to fill with PGM dumps of the recalled patterns
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// IDX image file the probe comes from
    #[arg(long)]
    images: PathBuf,
    /// Store file to probe
    #[arg(long)]
    store: PathBuf,
    /// Index of the probe image
    probe_index: usize,
    /// Keep only the upper half of the probe image
    #[arg(long)]
    half: bool,
    /// Also list cues that never learned anything
    #[arg(long)]
    include_unlearned: bool,
    /// CSV destination (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// IDX image file the store was trained from
    #[arg(long)]
    images: PathBuf,
    /// Store file to score
    #[arg(long)]
    store: PathBuf,
    /// Score shading with Euclidean instead of absolute differences
    #[arg(long)]
    l2: bool,
}

/// Failures past argument parsing, bucketed by exit code.
enum Failure {
    /// Exit 2: the image data or derived inputs are unusable.
    Data(String),
    /// Exit 3: the store file is unusable.
    Store(String),
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<MemoryError> for Failure {
    fn from(e: MemoryError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Store(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Train(args) => train(args),
        Cmd::Recall(args) => recall(args),
        Cmd::Spectrum(args) => spectrum(args),
        Cmd::Eval(args) => eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Store(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_images(path: &Path) -> Result<RawImageSet, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::Data(format!("cannot read images {}: {e}", path.display())))?;
    let set = parse_idx(&bytes)?;
    if set.trailing_bytes() > 0 {
        eprintln!(
            "warning: {} ignores {} trailing bytes after the last image",
            path.display(),
            set.trailing_bytes()
        );
    }
    Ok(set)
}

fn probe_pattern<F: Real>(
    images: &RawImageSet,
    index: usize,
    half: bool,
) -> Result<Pattern<F>, Failure> {
    let pattern = normalize(images.image(index)?)?;
    Ok(if half {
        partial_probe(&pattern, HalfRegion::Upper)
    } else {
        pattern
    })
}

fn check_shape<F: Real>(store: &MemoryStore<F>, images: &RawImageSet) -> Result<(), Failure> {
    if store.recall_size() != images.image_len() {
        return Err(Failure::Data(format!(
            "store expects {}-pixel patterns but the image set holds {}x{} = {}",
            store.recall_size(),
            images.rows(),
            images.cols(),
            images.image_len()
        )));
    }
    Ok(())
}

fn open_store_meta(path: &Path) -> Result<StoreMeta, Failure> {
    Ok(read_meta(path)?)
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let images = load_images(&args.images)?;
    if args.store.exists() {
        let meta = open_store_meta(&args.store)?;
        if let Some(requested) = args.precision {
            if requested != meta.precision {
                return Err(StoreError::PrecisionMismatch {
                    file: meta.precision,
                    requested,
                }
                .into());
            }
        }
        for (flag, value, stored) in [
            ("--theta", args.theta, meta.params.theta),
            ("--threshold", args.threshold, meta.params.threshold),
        ] {
            if value.is_some_and(|v| v != stored) {
                return Err(Failure::Data(format!(
                    "{flag} {} conflicts with the existing store's {stored}",
                    value.unwrap()
                )));
            }
        }
        match meta.precision {
            Precision::Double => train_into::<f64>(&args, &images, true),
            Precision::Single => train_into::<f32>(&args, &images, true),
        }
    } else {
        match args.precision.unwrap_or(Precision::Double) {
            Precision::Double => train_into::<f64>(&args, &images, false),
            Precision::Single => train_into::<f32>(&args, &images, false),
        }
    }
}

fn train_into<F: Real>(
    args: &TrainArgs,
    images: &RawImageSet,
    existing: bool,
) -> Result<(), Failure> {
    let mut store: MemoryStore<F> = if existing {
        let store = load(&args.store)?;
        check_shape(&store, images)?;
        store
    } else {
        let params = Hyperparams {
            theta: args.theta.unwrap_or(100.0),
            threshold: args.threshold.unwrap_or(90.0),
            ..Hyperparams::default()
        };
        params.validate()?;
        MemoryStore::new(images.image_len(), args.capacity, params)
    };

    if args.start > images.count() {
        return Err(Failure::Data(format!(
            "--start {} is beyond the {}-image set",
            args.start,
            images.count()
        )));
    }
    let remaining = images.count() - args.start;
    let count = args.count.unwrap_or(remaining);
    if count > remaining {
        return Err(Failure::Data(format!(
            "--count {count} runs past the end of the {}-image set (start {})",
            images.count(),
            args.start
        )));
    }
    let range: Vec<usize> = (args.start..args.start + count).collect();
    let chunk = args.chunk_size.unwrap_or(range.len()).max(1);

    let mut saved_once = existing;
    let mut learned = 0usize;
    let mut skipped = 0usize;
    for chunk_ids in range.chunks(chunk) {
        let mut fresh: Vec<u64> = Vec::with_capacity(chunk_ids.len());
        for &i in chunk_ids {
            let cue_id = i as u64;
            if store.is_learned(cue_id) {
                skipped += 1;
                continue;
            }
            let pattern: Pattern<F> = normalize(images.image(i)?)?;
            store.learn(cue_id, i as u64, &pattern)?;
            fresh.push(cue_id);
        }
        learned += fresh.len();
        if !saved_once {
            save(&store, &args.store)?;
            saved_once = true;
        } else if !fresh.is_empty() {
            let records: Vec<CueRecord<F>> = fresh
                .iter()
                .map(|&id| store.record(id).expect("just learned").clone())
                .collect();
            append_learned(&args.store, &records)?;
        }
        if let (Some(&first), Some(&last)) = (chunk_ids.first(), chunk_ids.last()) {
            eprintln!(
                "trained images {first}..={last}: {} in store",
                store.learned_count()
            );
        }
    }
    if !saved_once {
        save(&store, &args.store)?;
    }
    if skipped > 0 {
        eprintln!("skipped {skipped} already-learned cues");
    }
    eprintln!(
        "done: {learned} new patterns, {} total, {} weights",
        store.learned_count(),
        F::NAME
    );
    Ok(())
}

fn recall(args: RecallArgs) -> Result<(), Failure> {
    match open_store_meta(&args.store)?.precision {
        Precision::Double => recall_with::<f64>(&args),
        Precision::Single => recall_with::<f32>(&args),
    }
}

fn recall_with<F: Real>(args: &RecallArgs) -> Result<(), Failure> {
    let store: MemoryStore<F> = load(&args.store)?;
    let images = load_images(&args.images)?;
    check_shape(&store, &images)?;
    let probe = probe_pattern::<F>(&images, args.probe_index, args.half)?;
    let threshold = args.threshold.unwrap_or(store.params().threshold);
    let result = store.recall(probe.values(), threshold)?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "cue_id,q").map_err(|e| Failure::Data(e.to_string()))?;
    for entry in &result.fired {
        writeln!(out, "{},{:.6}", entry.cue_id, entry.q)
            .map_err(|e| Failure::Data(e.to_string()))?;
    }

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        for entry in &result.fired {
            let pixels = dump_pixels(&store, &images, entry.cue_id, entry.reconstruction.values());
            let path = dir.join(format!("cue_{}.pgm", entry.cue_id));
            write_pgm(&path, images.rows(), images.cols(), &pixels)
                .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        eprintln!(
            "wrote {} PGM files to {}",
            result.fired.len(),
            dir.display()
        );
    }
    Ok(())
}

/// Requantizes a recalled weight row for dumping. The cue's source image
/// fixes the gray scale when it is available; otherwise the row is
/// stretched so its peak lands on 255.
fn dump_pixels<F: Real>(
    store: &MemoryStore<F>,
    images: &RawImageSet,
    cue_id: u64,
    values: &[F],
) -> Vec<u8> {
    let source_norm = store
        .record(cue_id)
        .and_then(|rec| images.image(rec.pattern_id as usize).ok())
        .map(|raw| {
            raw.iter()
                .map(|&p| {
                    let p = p as f64;
                    p * p
                })
                .sum::<f64>()
                .sqrt()
        });
    let scale = source_norm.unwrap_or_else(|| {
        let peak = values.iter().fold(0.0f64, |m, &v| m.max(v.as_f64()));
        if peak > 0.0 {
            255.0 / peak
        } else {
            0.0
        }
    });
    cueball_core::quantize_to_u8(values, scale)
}

fn write_pgm(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> io::Result<()> {
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes)
}

fn spectrum(args: SpectrumArgs) -> Result<(), Failure> {
    match open_store_meta(&args.store)?.precision {
        Precision::Double => spectrum_with::<f64>(&args),
        Precision::Single => spectrum_with::<f32>(&args),
    }
}

fn spectrum_with<F: Real>(args: &SpectrumArgs) -> Result<(), Failure> {
    let store: MemoryStore<F> = load(&args.store)?;
    let images = load_images(&args.images)?;
    check_shape(&store, &images)?;
    let probe = probe_pattern::<F>(&images, args.probe_index, args.half)?;
    let spectrum = if args.include_unlearned {
        store.respond_including_unlearned(probe.values())?
    } else {
        store.respond(probe.values())?
    };

    let mut csv = String::from("cue_id,q\n");
    for c in spectrum.responses() {
        let _ = writeln!(csv, "{},{:.6}", c.cue_id, c.q);
    }
    match &args.out {
        Some(path) => fs::write(path, csv)
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?,
        None => io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::Data(e.to_string()))?,
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    match open_store_meta(&args.store)?.precision {
        Precision::Double => eval_with::<f64>(&args),
        Precision::Single => eval_with::<f32>(&args),
    }
}

fn eval_with<F: Real>(args: &EvalArgs) -> Result<(), Failure> {
    let store: MemoryStore<F> = load(&args.store)?;
    let images = load_images(&args.images)?;
    check_shape(&store, &images)?;
    let metric = if args.l2 {
        ShadingMetric::L2
    } else {
        ShadingMetric::L1
    };
    let report = evaluate(&store, &images, metric)?;
    println!("patterns: {}", report.pattern_count);
    println!("recall neurons: {}", report.recall_size);
    println!("theta: {}", report.theta);
    println!("threshold: {}", report.threshold);
    println!(
        "correct recalls: {} / {}",
        report.correct_recalls, report.pattern_count
    );
    println!(
        "max self-response error: {:e}",
        report.max_self_response_error
    );
    println!("hamming mean: {:.6}", report.hamming_mean);
    println!("hamming max: {}", report.hamming_max);
    println!("shading mean: {:.6}", report.shading_mean);
    println!("shading max: {:.6}", report.shading_max);
    println!("mean total intensity: {:.2}", report.mean_total_intensity);
    println!("memory rate: {:.6}", report.memory_rate);
    Ok(())
}
