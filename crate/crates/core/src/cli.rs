//! The `pixeldoc` command-line interface.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::curriculum::{paper_schedule, CurriculumSchedule};
use crate::inference::answer_question;
use crate::metrics::{evaluate_dataset, EvalRecord, Metric};
use crate::model::{init_params, load_checkpoint, save_checkpoint, ModelConfig, RoleWeights};
use crate::patchify::{choose_grid, patchify, resize_bilinear, PatchGrid, MAX_PATCHES};
use crate::pretrain::{run_pretraining, scaled_hyperparameters, LossLog};
use crate::raster::{
    decode_ppm, encode_ppm, render_table_image, render_text_document, Annotation, RenderedDocument, StyleId,
    StylePreset,
};
use crate::tables::{generate_dataset_parallel, ManifestRecord, TableLimits, TableSpec};
use crate::targets::{
    build_mae_example, build_mdtg_example, build_rqa_example, sample_phrase_spans, serialize_bbox_example,
    BoxDirection, ExampleRecord, DEFAULT_MASK_RATIO, DEFAULT_PHRASE_RATIO,
};
use crate::tokenizer::Tokenizer;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pixeldoc", version, about = "Pixel-only document understanding toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic table-QA dataset (JSONL manifest + PPM images).
    GenTableqa {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_rows: usize,
        #[arg(long, default_value_t = 5)]
        max_cols: usize,
    },
    /// Render a text file or a JSON table to PPM with an annotation sidecar.
    Render {
        #[arg(long, conflicts_with = "table", required_unless_present = "table")]
        text: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        /// Preset name or index 0-4.
        #[arg(long, default_value = "classic")]
        style: String,
        #[arg(long, default_value_t = 1)]
        font_scale: usize,
        #[arg(long, default_value_t = 448)]
        max_width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resize an image onto a patch grid and dump the patches.
    Patchify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum, default_value_t = PatchMode::Variable)]
        mode: PatchMode,
        #[arg(long, default_value_t = MAX_PATCHES)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn rendered documents into training examples for one task.
    MakeTargets {
        #[arg(long, value_enum)]
        task: TargetTask,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Patch budget of the grid the MAE mask refers to.
        #[arg(long, default_value_t = 256)]
        budget: usize,
    },
    /// Run the scaled pretraining curriculum on synthetic data.
    Pretrain {
        #[arg(long, default_value_t = 0.001)]
        scale: f64,
        #[arg(long)]
        steps_override: Option<u64>,
        /// Model config JSON; defaults to the built-in toy config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        /// Upper bound on examples per step.
        #[arg(long)]
        max_batch: Option<usize>,
    },
    /// Score predictions (or a checkpoint's answers) with ANLS / EM / F1.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "anls,em,f1")]
        metrics: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant and gradient suites.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatchMode {
    Fixed224,
    Fixed896,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetTask {
    Mae,
    Mdtg,
    Rqa,
    Bb,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenTableqa {
            n,
            seed,
            out,
            max_rows,
            max_cols,
        } => gen_tableqa(n, seed, &out, &TableLimits::new(max_rows, max_cols)),
        Command::Render {
            text,
            table,
            style,
            font_scale,
            max_width,
            seed,
            out,
        } => {
            let id = StyleId::parse(&style).ok_or_else(|| Error::Usage(format!("unknown style {style:?}")))?;
            if !(1..=3).contains(&font_scale) {
                return Err(Error::Usage("--font-scale must be 1, 2 or 3".into()));
            }
            let preset = StylePreset::preset(id).with_font_scale(font_scale);
            let doc = match (text, table) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    render_text_document(&text, &preset, max_width, seed)?
                }
                (None, Some(path)) => {
                    let table: TableSpec = read_json(&path)?;
                    table.validate()?;
                    render_table_image(&table, &preset, seed)?
                }
                (None, None) => return Err(Error::Usage("one of --text or --table is required".into())),
            };
            create_dir(&out)?;
            write_document(&doc, &out.join("document.ppm"))?;
            println!("{}x{} words {}", doc.image.width(), doc.image.height(), doc.words.len());
            Ok(())
        }
        Command::Patchify {
            image,
            mode,
            budget,
            out,
        } => patchify_cmd(&image, mode, budget, out.as_deref()),
        Command::MakeTargets {
            task,
            input,
            out,
            seed,
            budget,
        } => make_targets(task, &input, &out, seed, budget),
        Command::Pretrain {
            scale,
            steps_override,
            config,
            out,
            seed,
            lr,
            max_batch,
        } => pretrain_cmd(scale, steps_override, config.as_deref(), &out, seed, lr, max_batch),
        Command::Eval {
            checkpoint,
            dataset,
            metrics,
            out,
        } => eval_cmd(checkpoint.as_deref(), &dataset, &metrics, out.as_deref()),
        Command::Selftest => {
            let results = crate::selftest::run_all();
            for r in &results {
                println!("{} {}{}", if r.passed { "PASS" } else { "FAIL" }, r.name, detail(&r.detail));
            }
            match results.iter().filter(|r| !r.passed).count() {
                0 => Ok(()),
                k => Err(Error::Data(format!("{k} selftest suite(s) failed"))),
            }
        }
    }
}

fn detail(d: &str) -> String {
    if d.is_empty() {
        String::new()
    } else {
        format!(" ({d})")
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::json("serialize", e))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?);
    }
    Ok(out)
}

fn sidecar(ppm: &Path) -> PathBuf {
    ppm.with_extension("json")
}

/// Writes `doc` as PPM plus its JSON annotation next to it.
pub fn write_document(doc: &RenderedDocument, ppm: &Path) -> Result<()> {
    write_file(ppm, &encode_ppm(&doc.image))?;
    let mut json = to_json(&Annotation::of(doc))?;
    json.push('\n');
    write_file(&sidecar(ppm), json.as_bytes())
}

pub fn read_document(ppm: &Path) -> Result<RenderedDocument> {
    let bytes = fs::read(ppm).map_err(|e| Error::io(ppm, e))?;
    let image = decode_ppm(&bytes)?;
    let ann: Annotation = read_json(&sidecar(ppm))?;
    Ok(ann.into_document(image))
}

/// Worker count for sharded generation: `PIXELDOC_THREADS` or the machine's
/// parallelism.
pub fn worker_threads() -> usize {
    std::env::var("PIXELDOC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn gen_tableqa(n: u64, seed: u64, out: &Path, limits: &TableLimits) -> Result<()> {
    if n == 0 {
        return Err(Error::Usage("--n must be at least 1".into()));
    }
    let samples = generate_dataset_parallel(n, seed, limits, worker_threads())?;
    create_dir(&out.join("images"))?;
    let manifest_path = out.join("manifest.jsonl");
    let mut manifest = BufWriter::new(File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?);
    for s in &samples {
        let rel = format!("images/{:06}.ppm", s.index);
        write_document(&s.doc, &out.join(&rel))?;
        let line = to_json(&ManifestRecord::new(s, rel))?;
        writeln!(manifest, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct PatchHeader {
    rows: usize,
    cols: usize,
    patch_px: usize,
    num_patches: usize,
    values_per_patch: usize,
    dtype: &'static str,
}

fn patchify_cmd(image: &Path, mode: PatchMode, budget: usize, out: Option<&Path>) -> Result<()> {
    let bytes = fs::read(image).map_err(|e| Error::io(image, e))?;
    let img = decode_ppm(&bytes)?;
    let grid = match mode {
        PatchMode::Fixed224 => PatchGrid::fixed(224)?,
        PatchMode::Fixed896 => PatchGrid::fixed(896)?,
        PatchMode::Variable => choose_grid(img.width(), img.height(), budget)?,
    };
    println!("grid {}x{} patches {}", grid.rows, grid.cols, grid.num_patches());
    if let Some(out) = out {
        create_dir(out)?;
        let resized = resize_bilinear(&img, grid.target_width(), grid.target_height());
        let seq = patchify(&resized, grid)?;
        let dump: Vec<u8> = seq.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        write_file(&out.join("patches.bin"), &dump)?;
        let header = PatchHeader {
            rows: grid.rows,
            cols: grid.cols,
            patch_px: crate::patchify::PATCH_PX,
            num_patches: grid.num_patches(),
            values_per_patch: crate::patchify::PATCH_VALUES,
            dtype: "u8",
        };
        write_file(&out.join("patches.json"), (to_json(&header)? + "\n").as_bytes())?;
    }
    Ok(())
}

/// Rendered documents under `dir` (sorted `*.ppm` with annotation sidecars),
/// or, if `dir` holds a table-QA manifest, its images with their questions.
type Source = (PathBuf, Option<(String, String)>);

fn load_sources(dir: &Path) -> Result<Vec<Source>> {
    let manifest = dir.join("manifest.jsonl");
    if manifest.exists() {
        let records: Vec<ManifestRecord> = read_jsonl(&manifest)?;
        return Ok(records
            .into_iter()
            .map(|r| (dir.join(&r.image_path), Some((r.question, r.answer))))
            .collect());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm") && sidecar(p).exists())
        .collect();
    paths.sort();
    Ok(paths.into_iter().map(|p| (p, None)).collect())
}

fn make_targets(task: TargetTask, input: &Path, out: &Path, seed: u64, budget: usize) -> Result<()> {
    let sources = load_sources(input)?;
    if sources.is_empty() {
        return Err(Error::Data(format!("no rendered documents in {}", input.display())));
    }
    let tok = Tokenizer;
    create_dir(&out.join("images"))?;
    let path = out.join("examples.jsonl");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    for (i, (ppm, qa)) in sources.iter().enumerate() {
        let doc = read_document(ppm)?;
        let ex_seed = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut grid = None;
        let ex = match task {
            TargetTask::Mae => {
                let g = choose_grid(doc.image.width(), doc.image.height(), budget)?;
                grid = Some([g.rows, g.cols]);
                build_mae_example(&doc.image, g.num_patches(), DEFAULT_MASK_RATIO, ex_seed)?
            }
            TargetTask::Mdtg => {
                let spans = sample_phrase_spans(&doc, DEFAULT_PHRASE_RATIO, ex_seed)?;
                build_mdtg_example(&doc, &spans, &tok)?
            }
            TargetTask::Bb => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ex_seed);
                if doc.words.is_empty() {
                    return Err(Error::Data(format!("{} has no words", ppm.display())));
                }
                let word = rng.random_range(0..doc.words.len());
                serialize_bbox_example(&doc, word, BoxDirection::sample(&mut rng), &tok)?
            }
            TargetTask::Rqa => {
                let (q, a) = qa.as_ref().ok_or_else(|| {
                    Error::Data(format!("rqa targets need a manifest.jsonl with questions in {}", input.display()))
                })?;
                build_rqa_example(&doc, q, a, &doc.style, &tok)?
            }
        };
        let rel = format!("images/{i:06}.ppm");
        write_file(&out.join(&rel), &encode_ppm(&ex.image))?;
        let mut record = ExampleRecord::new(&ex, rel, &tok)?;
        record.grid = grid;
        writeln!(w, "{}", to_json(&record)?).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("wrote {} examples to {}", sources.len(), path.display());
    Ok(())
}

/// The schedule for a run: paper stage proportions, optionally stretched to
/// `steps_override` total steps; batch sizes always follow `scale`.
pub fn run_schedule(scale: f64, steps_override: Option<u64>) -> Result<CurriculumSchedule> {
    let scaled = paper_schedule(scale)?;
    let Some(total) = steps_override else {
        return Ok(scaled);
    };
    let mut s = CurriculumSchedule::with_total_steps(total)?;
    s.scale = scale;
    for (stage, src) in s.stages.iter_mut().zip(&scaled.stages) {
        stage.batch_size = src.batch_size;
    }
    Ok(s)
}

fn pretrain_cmd(
    scale: f64,
    steps_override: Option<u64>,
    config: Option<&Path>,
    out: &Path,
    seed: u64,
    lr: f64,
    max_batch: Option<usize>,
) -> Result<()> {
    let mut config = match config {
        Some(p) => read_json::<ModelConfig>(p)?,
        None => ModelConfig::toy(),
    };
    config.seed = seed;
    let schedule = run_schedule(scale, steps_override)?;
    let hyper = scaled_hyperparameters(&schedule, lr);
    let mut params = init_params(&config)?;
    create_dir(out)?;
    write_file(&out.join("schedule.json"), (serde_json::to_string_pretty(&schedule).map_err(|e| Error::json("schedule", e))? + "\n").as_bytes())?;
    write_file(&out.join("config.json"), (serde_json::to_string_pretty(&config).map_err(|e| Error::json("config", e))? + "\n").as_bytes())?;
    let log_path = out.join("loss.csv");
    let f = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = LossLog::new(BufWriter::new(f)).map_err(|e| Error::io(&log_path, e))?;
    let result = run_pretraining(&mut params, &schedule, &hyper, &RoleWeights::default(), seed, max_batch, |r| {
        log.append(r).map_err(|e| Error::io(&log_path, e))
    });
    result?;
    save_checkpoint(&params, &out.join("checkpoint.pdfg"))?;
    println!("trained {} steps; outputs in {}", schedule.total_steps(), out.display());
    Ok(())
}

fn eval_cmd(checkpoint: Option<&Path>, dataset: &Path, metrics: &str, out: Option<&Path>) -> Result<()> {
    let metrics = metrics
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(Metric::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(Error::Usage("--metrics must name at least one metric".into()));
    }
    let records: Vec<EvalRecord> = match checkpoint {
        None => read_jsonl(dataset)?,
        Some(ckpt) => {
            let params = load_checkpoint(ckpt)?;
            let base = dataset.parent().unwrap_or(Path::new("."));
            let manifest: Vec<ManifestRecord> = read_jsonl(dataset)?;
            manifest
                .iter()
                .map(|r| {
                    let doc = read_document(&base.join(&r.image_path))?;
                    let overlaid_h = doc.image.height()
                        + crate::raster::banner_height(doc.image.width(), &r.question, &doc.style);
                    let grid = choose_grid(doc.image.width(), overlaid_h, params.config.max_patches)?;
                    Ok(EvalRecord {
                        prediction: answer_question(&params, &doc, &r.question, grid)?,
                        golds: vec![r.answer.clone()],
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let report = evaluate_dataset(&records, &metrics)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::json("report", e))? + "\n";
    print!("{json}");
    if let Some(out) = out {
        write_file(out, json.as_bytes())?;
    }
    Ok(())
}
