//! Corpus evaluation and its report files.

use std::fmt::Write as _;
use std::path::Path;

use abe_core::features::FeatureConfig;
use abe_core::metrics::{evaluate_pair, pool, MetricsRecord, SubRecord};
use abe_core::pipeline::{extend_file, Extension, OracleSource};
use abe_core::regressor::RegressorModel;
use abe_core::signal::{AudioBuffer, FixedFilters, NB_RATE, WB_RATE};
use abe_core::synth::derive_narrowband;
use abe_core::sysid::Excitation;
use abe_core::AbeError;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::manifest::ManifestEntry;
use crate::methods::{Method, Source};
use crate::wav::read_wav;

#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub name: String,
    pub split: String,
    pub reference: AudioBuffer,
    pub narrowband: AudioBuffer,
    /// A precomputed 16 kHz estimate, for the `given` method.
    pub given: Option<AudioBuffer>,
}

#[derive(Debug, Clone)]
pub struct FileResult {
    pub name: String,
    pub split: String,
    /// One record per method, in method order.
    pub records: Vec<MetricsRecord>,
    pub oracle_skipped: usize,
}

#[derive(Debug)]
pub struct FileFailure {
    pub name: String,
    pub error: CliError,
}

#[derive(Debug)]
pub struct CorpusEvaluation {
    pub methods: Vec<Method>,
    pub files: Vec<FileResult>,
    pub failed: Vec<FileFailure>,
    /// Frames pooled over all evaluated files, per method.
    pub aggregate: Vec<MetricsRecord>,
}

#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub filters: &'a FixedFilters,
    pub features: &'a FeatureConfig,
    pub model: Option<&'a RegressorModel>,
}

fn display_name(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Reads one manifest record. A 16 kHz second column is taken as a given
/// estimate and the narrowband input is then derived from the reference.
pub fn load_entry(entry: &ManifestEntry, base: &Path, filters: &FixedFilters) -> Result<LoadedPair> {
    let reference = read_wav(&entry.reference)?;
    if reference.rate() != WB_RATE {
        return Err(CliError::format(&entry.reference, format!("reference is {} Hz, expected {WB_RATE}", reference.rate())));
    }
    let second = entry.narrowband.as_deref().map(read_wav).transpose()?;
    let (narrowband, given) = match second {
        Some(b) if b.rate() == NB_RATE => (b, None),
        Some(b) => (derive_narrowband(&reference, filters)?, Some(b)),
        None => (derive_narrowband(&reference, filters)?, None),
    };
    Ok(LoadedPair {
        name: display_name(&entry.reference, base),
        split: entry.split.clone(),
        reference,
        narrowband,
        given,
    })
}

pub fn evaluate_loaded(pair: &LoadedPair, methods: &[Method], ctx: EvalContext<'_>) -> Result<FileResult> {
    let oracle = if methods.iter().any(Method::needs_oracle) {
        Some(OracleSource::from_wideband(&pair.reference, ctx.filters, ctx.features)?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(methods.len());
    for m in methods {
        let estimate = match m.source {
            Source::Given => pair
                .given
                .clone()
                .ok_or_else(|| CliError::Usage(format!("{}: `given` needs a 16 kHz estimate in the manifest", pair.name)))?,
            Source::NbOnly => extend_file(&pair.narrowband, Extension::NbOnly, &m.ext, ctx.filters)?,
            Source::Fold => extend_file(&pair.narrowband, Extension::Fold, &m.ext, ctx.filters)?,
            Source::Oracle => {
                let src = oracle.as_ref().expect("oracle analysis prepared above");
                extend_file(&pair.narrowband, Extension::Estimated(src), &m.ext, ctx.filters)?
            }
            Source::Regressor => {
                let model = ctx.model.ok_or_else(|| CliError::Usage("regressor method needs --model".into()))?;
                extend_file(&pair.narrowband, Extension::Estimated(model), &m.ext, ctx.filters)?
            }
        };
        if estimate.rate() != WB_RATE {
            return Err(AbeError::RateMismatch {
                expected: WB_RATE,
                got: estimate.rate(),
            }
            .into());
        }
        records.push(evaluate_pair(&pair.reference, &estimate, None)?);
    }
    Ok(FileResult {
        name: pair.name.clone(),
        split: pair.split.clone(),
        records,
        oracle_skipped: oracle.map_or(0, |o| o.skipped.len()),
    })
}

/// Files that fail are listed and skipped; it is an error only if none
/// could be evaluated.
pub fn evaluate_corpus(
    entries: &[ManifestEntry],
    base: &Path,
    methods: &[Method],
    ctx: EvalContext<'_>,
) -> Result<CorpusEvaluation> {
    if entries.is_empty() {
        return Err(CliError::Empty("manifest has no records".into()));
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no evaluation methods".into()));
    }
    let total = entries.len();
    let outcomes: Vec<std::result::Result<FileResult, FileFailure>> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let name = display_name(&e.reference, base);
            let r = load_entry(e, base, ctx.filters).and_then(|p| evaluate_loaded(&p, methods, ctx));
            match &r {
                Ok(_) => log::info!("[{}/{total}] {name}", i + 1),
                Err(err) => log::warn!("[{}/{total}] {name}: {err}", i + 1),
            }
            r.map_err(|error| FileFailure { name, error })
        })
        .collect();
    let (mut files, mut failed) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(f) => files.push(f),
            Err(f) => failed.push(f),
        }
    }
    if files.is_empty() {
        return Err(failed.remove(0).error);
    }
    let aggregate = (0..methods.len())
        .map(|m| pool(&files.iter().map(|f| f.records[m].clone()).collect::<Vec<_>>()))
        .collect();
    Ok(CorpusEvaluation {
        methods: methods.to_vec(),
        files,
        failed,
        aggregate,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn write_record(out: &mut String, r: &MetricsRecord) {
    writeln!(out, "frames = {}", r.per_frame.len()).unwrap();
    writeln!(out, "lsd = {:.2}", r.lsd).unwrap();
    writeln!(out, "segsnr = {}", opt(r.segsnr)).unwrap();
    if let Some((v, u)) = r.voicing_split {
        for (tag, s) in [("voiced", v), ("unvoiced", u)] {
            writeln!(out, "{tag}_frames = {}", s.frames).unwrap();
            writeln!(out, "{tag}_lsd = {}", opt((s.frames > 0).then_some(s.lsd))).unwrap();
            writeln!(out, "{tag}_segsnr = {}", opt(s.segsnr)).unwrap();
        }
    }
}

/// Aggregate blocks first, then the comparison, then one block per file
/// and method.
pub fn render_report(eval: &CorpusEvaluation) -> String {
    let mut out = String::new();
    writeln!(out, "files_evaluated = {}", eval.files.len()).unwrap();
    writeln!(out, "files_failed = {}", eval.failed.len()).unwrap();
    for (m, r) in eval.methods.iter().zip(&eval.aggregate) {
        writeln!(out, "\n[aggregate.{}]", quote(&m.to_string())).unwrap();
        write_record(&mut out, r);
    }
    if eval.methods.len() > 1 {
        let mut order: Vec<usize> = (0..eval.methods.len()).collect();
        order.sort_by(|&a, &b| eval.aggregate[a].lsd.total_cmp(&eval.aggregate[b].lsd));
        writeln!(out, "\n[comparison]").unwrap();
        writeln!(out, "# mean LSD, best first").unwrap();
        for (rank, &i) in order.iter().enumerate() {
            writeln!(out, "{} = {{ method = {}, lsd = {:.2} }}", rank + 1, quote(&eval.methods[i].to_string()), eval.aggregate[i].lsd)
                .unwrap();
        }
    }
    for f in &eval.files {
        for (m, r) in eval.methods.iter().zip(&f.records) {
            writeln!(out, "\n[file.{}.{}]", quote(&f.name), quote(&m.to_string())).unwrap();
            writeln!(out, "split = {}", quote(&f.split)).unwrap();
            write_record(&mut out, r);
        }
        if f.oracle_skipped > 0 {
            writeln!(out, "oracle_skipped_frames = {}", f.oracle_skipped).unwrap();
        }
    }
    if !eval.failed.is_empty() {
        writeln!(out, "\n[failed]").unwrap();
        for f in &eval.failed {
            writeln!(out, "{} = {}", quote(&f.name), quote(&f.error.to_string())).unwrap();
        }
    }
    out
}

/// One row per file and method.
pub fn render_files_csv(eval: &CorpusEvaluation) -> String {
    let mut out = String::from("file,method,frames,lsd,segsnr,voiced_lsd,voiced_segsnr,unvoiced_lsd,unvoiced_segsnr\n");
    for f in &eval.files {
        for (m, r) in eval.methods.iter().zip(&f.records) {
            let (v, u) = r.voicing_split.unwrap_or((SubRecord::default(), SubRecord::default()));
            let sub_lsd = |s: SubRecord| csv_opt((s.frames > 0).then_some(s.lsd));
            writeln!(
                out,
                "{},{m},{},{},{},{},{},{},{}",
                f.name,
                r.per_frame.len(),
                r.lsd,
                csv_opt(r.segsnr),
                sub_lsd(v),
                csv_opt(v.segsnr),
                sub_lsd(u),
                csv_opt(u.segsnr)
            )
            .unwrap();
        }
    }
    out
}

/// Per-frame metrics of one method.
pub fn render_frames_csv(eval: &CorpusEvaluation, method: usize) -> String {
    let mut out = String::from("file,frame,lsd,segsnr,voicing\n");
    for f in &eval.files {
        for fm in &f.records[method].per_frame {
            let voicing = match fm.voicing {
                Excitation::Voiced => "voiced",
                Excitation::Unvoiced => "unvoiced",
            };
            writeln!(out, "{},{},{},{},{voicing}", f.name, fm.index, fm.lsd, csv_opt(fm.segsnr)).unwrap();
        }
    }
    out
}

/// File-name-safe form of a method label.
pub fn method_slug(m: &Method) -> String {
    m.to_string().replace(':', "_")
}
