use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "abe", version, about = "Artificial bandwidth extension of 8 kHz speech to 16 kHz")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic wideband corpus with narrowband counterparts.
    SynthCorpus(SynthCorpusArgs),
    /// Extract feature pairs from wideband files and fit a regressor.
    Train(TrainArgs),
    /// Extend one 8 kHz file to 16 kHz.
    Extend(ExtendArgs),
    /// Score extension methods against wideband references.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthCorpusArgs {
    /// Output directory; receives wb/, nb/ and manifest.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub files: Option<usize>,
    /// Utterance length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log (default: the model path with a .log extension).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Fit a GMM with this many components instead of the MLP.
    #[arg(long, value_name = "N")]
    pub gmm: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Manifest split tag to train on (default: `train` if present, else all).
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Fir,
    Iir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdditionArg {
    Dft,
    Time,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    /// 8 kHz input WAV.
    #[arg(long)]
    pub input: PathBuf,
    /// 16 kHz output WAV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Paired wideband file; synthesizes the high band from it instead of
    /// using a model.
    #[arg(long, value_name = "WB_WAV")]
    pub oracle: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
    #[arg(long, value_enum)]
    pub addition: Option<AdditionArg>,
    /// Skip the high-band gain adjustment.
    #[arg(long)]
    pub no_gain: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory for report.txt, files.csv and the frame CSVs.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Method spec such as `oracle:iir:dft:gain`, `regressor`, `fold` or
    /// `nb-only`; repeat to compare.
    #[arg(long = "method", value_name = "SPEC")]
    pub methods: Vec<String>,
    /// Manifest split tag to evaluate (default: `test` if present, else all).
    #[arg(long)]
    pub split: Option<String>,
    /// Also write per-frame CSVs.
    #[arg(long)]
    pub frames_csv: bool,
}
