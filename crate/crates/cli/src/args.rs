use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ga", version, about = "Gestational-age estimation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: manifest plus media tree.
    Synth(SynthArgs),
    /// Assign patients to train/tune/test.
    Split(SplitArgs),
    /// Resample and clip media into a prepared-set file.
    Preprocess(PreprocessArgs),
    /// Train one reference regressor.
    Train(TrainArgs),
    /// Case-level predictions of one or more trained models.
    Predict(PredictArgs),
    /// Full evaluation report from prediction CSVs and the manifest.
    Evaluate(EvaluateArgs),
    /// AC percentile table per population and week.
    Percentiles(PercentilesArgs),
    /// Biometry formula utilities.
    #[command(subcommand)]
    Formula(FormulaCommand),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives manifest.jsonl and media/.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON overrides of the generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write only the manifest (media can be re-rendered from the seed).
    #[arg(long)]
    pub no_media: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// train,tune,test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Geometry {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Train,
    Tune,
    Test,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Media root; defaults to the manifest's directory.
    #[arg(long, conflicts_with = "synthetic_seed")]
    pub media: Option<PathBuf>,
    /// Re-render synthetic media in memory from this generator seed instead
    /// of reading files.
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Geometry::Desk)]
    pub geometry: Geometry,
    /// JSON overrides of the clip/geometry settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "subset")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    pub subset: Option<SubsetArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    PaperImage,
    PaperVideo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Image,
    Video,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Required for the desk preset; the full-scale presets imply it.
    #[arg(long, value_enum)]
    pub modality: Option<ModalityArg>,
    /// Prepared-set file. Without it only the configuration is echoed.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the preset's step count (the schedule is kept as is).
    #[arg(long)]
    pub steps: Option<usize>,
    /// JSON overrides of the training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dry_run: bool,
    /// Weights file to write; required when training.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss curve CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Weights files; the file stem becomes the model id.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiArg {
    Normal,
    T,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "pred", required = true)]
    pub preds: Vec<PathBuf>,
    /// Reference baseline method.
    #[arg(long, default_value = "hadlock")]
    pub baseline: String,
    /// Alternative formulae compared on second/third-trimester visits.
    #[arg(long, value_delimiter = ',', default_values_t = ["intergrowth".to_string(), "nichd".to_string()])]
    pub compare: Vec<String>,
    /// Formula library for baselines not recorded in the manifest.
    #[arg(long)]
    pub formulae: Option<PathBuf>,
    /// Method compared in every table; defaults to `ensemble` when present.
    #[arg(long)]
    pub primary: Option<String>,
    /// Restrict sampling to the test patients of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    pub ci: CiArg,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PercentilesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum FormulaCommand {
    /// Evaluate one named formula at the given measurements.
    Eval(FormulaEvalArgs),
}

#[derive(Debug, Args)]
pub struct FormulaEvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub name: String,
    /// Measurement in cm, e.g. `--set hc=20`.
    #[arg(long = "set", value_parser = parse_assignment)]
    pub values: Vec<(String, f64)>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}
