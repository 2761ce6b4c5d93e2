use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use abe_core::features::{analyze_frame, FeaturePair};
use abe_core::pipeline::{extend_file, Addition, Extension, FilterForm, Mode, OracleSource};
use abe_core::regressor::{train_gmm, train_mlp, ModelKind};
use abe_core::signal::{design_fixed_filters, frame_signal, FixedFilters, HPF_LEN, LPF_LEN, NB_RATE, WB_RATE};
use abe_core::synth::{derive_narrowband, synth_utterance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cli::{AdditionArg, Cli, Command, EvaluateArgs, ExtendArgs, FilterArg, SynthCorpusArgs, TrainArgs};
use crate::config::FileConfig;
use crate::error::{CliError, Result};
use crate::evaluate::{evaluate_corpus, method_slug, render_files_csv, render_frames_csv, render_report, EvalContext};
use crate::manifest::{format_manifest, read_manifest, select_split, ManifestEntry};
use crate::methods::{Method, Source};
use crate::model_io::{load_model, save_model};
use crate::wav::{quantized, read_wav, write_wav};

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.shared.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let jobs = cli.shared.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Settings {
            seed: cli.shared.seed.or(file.seed).unwrap_or(0),
            jobs,
            file,
        })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli)?;
    let dispatch = || match &cli.command {
        Command::SynthCorpus(a) => synth_corpus(a, &settings),
        Command::Train(a) => train(a, &settings),
        Command::Extend(a) => extend(a, &settings),
        Command::Evaluate(a) => evaluate(a, &settings),
    };
    match settings.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(dispatch),
        None => dispatch(),
    }
}

fn filters() -> Result<FixedFilters> {
    Ok(design_fixed_filters(LPF_LEN, HPF_LEN)?)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The directory a new file would go into must already exist.
fn check_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Missing { path: dir.to_path_buf() }),
        _ => Ok(()),
    }
}

fn base_of(manifest: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).to_path_buf()
}

/// Explicit tag, else `preferred` if any record carries it, else everything.
fn pick_split(entries: Vec<ManifestEntry>, explicit: Option<&str>, preferred: &str) -> Vec<ManifestEntry> {
    match explicit {
        Some(tag) => select_split(entries, Some(tag)),
        None if entries.iter().any(|e| e.split == preferred) => select_split(entries, Some(preferred)),
        None => entries,
    }
}

pub fn synth_corpus(args: &SynthCorpusArgs, s: &Settings) -> Result<()> {
    let mut corpus = s.file.corpus;
    let mut utterance = s.file.utterance;
    if let Some(n) = args.files {
        corpus.files = n;
    }
    if let Some(f) = args.test_fraction {
        corpus.test_fraction = f;
    }
    if let Some(d) = args.duration {
        utterance.duration_s = d;
    }
    if corpus.files == 0 {
        return Err(CliError::Usage("--files must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&corpus.test_fraction) {
        return Err(CliError::Usage("test fraction must lie in [0, 1]".into()));
    }
    let filters = filters()?;
    for sub in ["wb", "nb"] {
        create_dir(&args.out.join(sub))?;
    }
    let n_test = (corpus.files as f64 * corpus.test_fraction).round() as usize;
    let n_train = corpus.files - n_test;
    let results: Vec<Result<ManifestEntry>> = (0..corpus.files)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(i as u64);
            let wb = quantized(&synth_utterance(&mut rng, &utterance)?)?;
            let nb = derive_narrowband(&wb, &filters)?;
            let name = format!("utt_{i:04}.wav");
            let entry = ManifestEntry {
                reference: args.out.join("wb").join(&name),
                narrowband: Some(args.out.join("nb").join(&name)),
                split: if i < n_train { "train" } else { "test" }.to_string(),
            };
            write_wav(&entry.reference, &wb)?;
            write_wav(entry.narrowband.as_ref().unwrap(), &nb)?;
            log::info!("[{}/{}] {name}", i + 1, corpus.files);
            Ok(entry)
        })
        .collect();
    let mut written = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(e) => written.push(e),
            Err(e) => {
                log::error!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_text(&args.out.join(MANIFEST_NAME), &format_manifest(&written, &args.out))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn train(args: &TrainArgs, s: &Settings) -> Result<()> {
    let entries = pick_split(read_manifest(&args.manifest)?, args.split.as_deref(), "train");
    if entries.is_empty() {
        return Err(CliError::Empty(format!("no training records in {}", args.manifest.display())));
    }
    check_parent(&args.out)?;
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("log"));
    check_parent(&log_path)?;
    if args.gmm == Some(0) {
        return Err(CliError::Usage("--gmm needs at least one component".into()));
    }

    let filters = filters()?;
    let features = s.file.features;
    let buffers = entries
        .par_iter()
        .map(|e| {
            let wb = read_wav(&e.reference)?;
            wb.expect_rate(WB_RATE)?;
            Ok(wb)
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = buffers.iter().map(frame_signal).collect::<abe_core::Result<Vec<_>>>()?;
    let all: Vec<_> = frames.iter().flatten().collect();
    log::info!("analyzing {} frames from {} files", all.len(), buffers.len());
    let analyzed = all
        .par_iter()
        .map(|f| analyze_frame(f, &filters, &features))
        .collect::<abe_core::Result<Vec<_>>>()?;
    let mut pairs: Vec<FeaturePair> = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    for a in analyzed {
        match a {
            Ok(a) => pairs.push(a.pair),
            Err(reason) => *skipped.entry(reason.to_string()).or_default() += 1,
        }
    }

    let mut mlp_cfg = s.file.train;
    mlp_cfg.seed = s.seed;
    if let Some(e) = args.epochs {
        mlp_cfg.epochs = e;
    }
    let mut gmm_cfg = s.file.gmm;
    gmm_cfg.seed = s.seed;
    let minimum = match args.gmm {
        Some(k) => {
            gmm_cfg.components = k;
            k
        }
        None => mlp_cfg.batch_size,
    };
    if pairs.len() < minimum {
        return Err(CliError::Empty(format!(
            "{} feature pairs from {} frames ({} skipped), need at least {minimum}",
            pairs.len(),
            all.len(),
            all.len() - pairs.len()
        )));
    }
    log::info!("training on {} pairs", pairs.len());
    let model = match args.gmm {
        Some(_) => train_gmm(&pairs, &gmm_cfg)?,
        None => train_mlp(&pairs, &mlp_cfg)?,
    };
    save_model(&args.out, &model)?;

    let mut log = String::new();
    writeln!(log, "files = {}", buffers.len()).unwrap();
    writeln!(log, "frames = {}", all.len()).unwrap();
    writeln!(log, "pairs = {}", pairs.len()).unwrap();
    writeln!(log, "seed = {}", s.seed).unwrap();
    writeln!(log, "\n[skipped]").unwrap();
    for (reason, n) in &skipped {
        writeln!(log, "\"{reason}\" = {n}").unwrap();
    }
    let (section, unit) = match model.kind {
        ModelKind::Mlp => ("loss", "epoch"),
        ModelKind::Gmm => ("log_likelihood", "iteration"),
    };
    writeln!(log, "\n[{section}]\n# per {unit}").unwrap();
    for (i, v) in model.history.iter().enumerate() {
        writeln!(log, "{} = {v}", i + 1).unwrap();
    }
    write_text(&log_path, &log)
}

pub fn extend(args: &ExtendArgs, s: &Settings) -> Result<()> {
    let mut ext = s.file.extend;
    if let Some(f) = args.filter {
        ext.filter_form = match f {
            FilterArg::Fir => FilterForm::Fir,
            FilterArg::Iir => FilterForm::Iir,
        };
    }
    if let Some(a) = args.addition {
        ext.addition = match a {
            AdditionArg::Dft => Addition::Dft,
            AdditionArg::Time => Addition::Time,
        };
    }
    if args.no_gain {
        ext.gain_adjust = false;
    }
    check_parent(&args.out)?;
    let nb = read_wav(&args.input)?;
    nb.expect_rate(NB_RATE)?;
    let filters = filters()?;

    let out = match (&args.oracle, &args.model) {
        (Some(_), Some(_)) => return Err(CliError::Usage("--oracle and --model are exclusive".into())),
        (None, None) => return Err(CliError::Usage("extend needs --model or --oracle".into())),
        (Some(wb_path), None) => {
            let wb = read_wav(wb_path)?;
            wb.expect_rate(WB_RATE)?;
            if frame_signal(&wb)?.len() != frame_signal(&nb)?.len() {
                return Err(CliError::Usage(format!(
                    "{} does not pair with {}: frame counts differ",
                    wb_path.display(),
                    args.input.display()
                )));
            }
            ext.mode = Mode::Oracle;
            let source = OracleSource::from_wideband(&wb, &filters, &s.file.features)?;
            if !source.skipped.is_empty() {
                log::info!("{} frames left without a high band", source.skipped.len());
            }
            extend_file(&nb, Extension::Estimated(&source), &ext, &filters)?
        }
        (None, Some(model_path)) => {
            if ext.filter_form == FilterForm::Iir {
                return Err(CliError::Usage("the regressor predicts FIR filters; IIR needs --oracle".into()));
            }
            let model = load_model(model_path)?;
            ext.mode = Mode::Regressor;
            extend_file(&nb, Extension::Estimated(&model), &ext, &filters)?
        }
    };
    write_wav(&args.out, &out)
}

pub fn evaluate(args: &EvaluateArgs, s: &Settings) -> Result<()> {
    let entries = pick_split(read_manifest(&args.manifest)?, args.split.as_deref(), "test");
    if entries.is_empty() {
        return Err(CliError::Empty(format!("no records to evaluate in {}", args.manifest.display())));
    }
    let model = args.model.as_deref().map(load_model).transpose()?;
    let methods: Vec<Method> = if args.methods.is_empty() {
        let source = if model.is_some() { Source::Regressor } else { Source::Oracle };
        vec![Method::new(source, &s.file.extend)]
    } else {
        args.methods
            .iter()
            .map(|spec| Method::parse(spec, &s.file.extend).map_err(CliError::Usage))
            .collect::<Result<_>>()?
    };
    if model.is_none() && methods.iter().any(|m| m.source == Source::Regressor) {
        return Err(CliError::Usage("regressor method needs --model".into()));
    }
    create_dir(&args.out_dir)?;
    let filters = filters()?;
    let ctx = EvalContext {
        filters: &filters,
        features: &s.file.features,
        model: model.as_ref(),
    };
    let eval = evaluate_corpus(&entries, &base_of(&args.manifest), &methods, ctx)?;
    write_text(&args.out_dir.join("report.txt"), &render_report(&eval))?;
    write_text(&args.out_dir.join("files.csv"), &render_files_csv(&eval))?;
    if args.frames_csv {
        for (i, m) in eval.methods.iter().enumerate() {
            write_text(&args.out_dir.join(format!("frames_{}.csv", method_slug(m))), &render_frames_csv(&eval, i))?;
        }
    }
    Ok(())
}
