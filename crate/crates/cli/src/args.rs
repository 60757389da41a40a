//! Command-line surface.

use std::path::PathBuf;

use biknn::{Aggregator, BiknnParams, McdMode, PNorm, Preset};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "biknn", version, about = "Bilateral kNN anomaly estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Model JSON destination (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write `id,score` for every row of the input.
    ///
    /// Without `--model` the model is fitted on the input and each row is
    /// scored with itself excluded from its neighborhood.
    Score {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Score the input as unseen data against a saved model.
        #[arg(long, conflicts_with_all = PARAM_FLAGS)]
        model: Option<PathBuf>,
        /// Add an `is_outlier` column flagging the top-scoring rows.
        #[arg(long)]
        n_outliers: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the anomaly plane with a type per point.
    Classify {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Expected outliers per axis; each threshold is the m-th largest value.
        #[arg(long, default_value_t = 5)]
        n_outliers: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a regular lattice over 2D data.
    Grid {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// `xmin,xmax,ymin,ymax`; defaults to the padded data range.
        #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
        bounds: Option<[f64; 4]>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Repeated split/fit/evaluate runs over a list of labeled datasets.
    Bench {
        /// File listing one dataset CSV per line (relative to the list).
        #[arg(long)]
        input: PathBuf,
        /// Label column in every dataset.
        #[arg(long, default_value = "label")]
        labels: String,
        #[command(flatten)]
        params: ParamArgs,
        /// Extra presets to compare; repeatable. With no preset and no
        /// explicit weights all four presets run.
        #[arg(long = "compare", value_parser = parse_preset)]
        compare: Vec<Preset>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0.6)]
        train_fraction: f64,
        /// Plain shuffled splits instead of label-stratified ones.
        #[arg(long)]
        unstratified: bool,
        /// Fill the `seconds` column (makes output machine dependent).
        #[arg(long)]
        timing: bool,
        /// Summary CSV destination (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-trial JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve the explorer API for one dataset.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Expected outliers per axis for the initial classification.
        #[arg(long, default_value_t = 5)]
        n_outliers: usize,
        /// Directory of static frontend files served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Label column to drop from the features.
    #[arg(long)]
    pub labels: Option<String>,
}

const PARAM_FLAGS: [&str; 12] = [
    "k",
    "p1",
    "p2",
    "agg",
    "agg_p",
    "w1",
    "w2",
    "wp",
    "mu",
    "preset",
    "support_fraction",
    "exact_mcd",
];

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub k: Option<usize>,
    /// Original-space norm (a number >= 1 or `inf`).
    #[arg(long)]
    pub p1: Option<PNorm>,
    /// ECDF-space norm.
    #[arg(long)]
    pub p2: Option<PNorm>,
    #[arg(long)]
    pub agg: Option<Aggregator>,
    /// Aggregator for the density coordinate only.
    #[arg(long)]
    pub agg_p: Option<Aggregator>,
    #[arg(long, conflicts_with = "preset")]
    pub w1: Option<f64>,
    #[arg(long, conflicts_with = "preset")]
    pub w2: Option<f64>,
    /// Norm combining the weighted coordinates.
    #[arg(long)]
    pub wp: Option<PNorm>,
    #[arg(long, conflicts_with = "preset")]
    pub mu: Option<f64>,
    /// knn, biknn1, biknn2 or biknn3.
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub support_fraction: Option<f64>,
    /// Enumerate all subsets for the robust estimate (small inputs only).
    #[arg(long)]
    pub exact_mcd: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ParamArgs {
    pub fn has_explicit_weights(&self) -> bool {
        self.w1.is_some() || self.w2.is_some() || self.mu.is_some()
    }

    /// Start from the preset (biknn1 when none) and apply every given flag.
    pub fn build(&self) -> BiknnParams {
        let mut p = BiknnParams::from_preset(self.preset.unwrap_or(Preset::Biknn1));
        self.apply(&mut p);
        p
    }

    /// Apply flags on top of a given preset, ignoring `--preset` itself.
    pub fn build_for(&self, preset: Preset) -> BiknnParams {
        let mut p = BiknnParams::from_preset(preset);
        self.apply(&mut p);
        p
    }

    fn apply(&self, p: &mut BiknnParams) {
        if let Some(k) = self.k {
            p.k = k;
        }
        if let Some(v) = self.p1 {
            p.p1 = v;
        }
        if let Some(v) = self.p2 {
            p.p2 = v;
        }
        if let Some(v) = self.agg {
            p.agg = v;
        }
        p.agg_p = self.agg_p;
        if let Some(v) = self.w1 {
            p.w1 = v;
        }
        if let Some(v) = self.w2 {
            p.w2 = v;
        }
        if let Some(v) = self.wp {
            p.wp = v;
        }
        if let Some(v) = self.mu {
            p.mu = v;
        }
        p.support_fraction = self.support_fraction;
        if self.exact_mcd {
            p.mcd_mode = McdMode::Exact;
        }
        p.seed = self.seed;
    }
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: biknn::BiknnError| e.to_string())
}

fn parse_bounds(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated numbers, got {}", v.len()))
}
