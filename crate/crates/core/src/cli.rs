//! Command-line surface.
//!
//! Every command reads its inputs from files and flags only and writes to
//! the paths it is given. On failure the binary prints a single line
//! `error[<kind>]: <message>` to stderr and exits non-zero.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::classifier::{train_with_report, LinearModel, TrainParams};
use crate::error::{Error, Result};
use crate::features::{features_for_sample, FeatureMatrix, HeadId, HeadSelection, SampleLabel};
use crate::filtration::ThresholdSchedule;
use crate::heads::{rank_heads, score_heads};
use crate::manifest::{Manifest, Split};
use crate::metrics::{accuracy, matthews, ConfusionCounts};
use crate::synth::{generate_dataset, SynthSpec};
use crate::tensor_file::{load_tensor_as, HEADER_LEN, MAGIC};

#[derive(Debug, Parser)]
#[command(name = "attn-topo", version, about = "Topological features of attention graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreOn {
    Train,
    Eval,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled attention dataset.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract Betti-curve features for the samples of a manifest.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated ascending thresholds in (0, 1).
        #[arg(long, default_value = "0.01,0.025,0.05,0.1,0.25,0.5")]
        thresholds: String,
        /// `all` or a comma-separated list of `layer.head`.
        #[arg(long, default_value = "all")]
        heads: String,
        /// Restrict to one split; all entries otherwise.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a logistic regression on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Report Matthews correlation and accuracy of a model on a feature file.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score every head with its own classifier and rank the heads.
    RankHeads {
        #[arg(long)]
        train_features: PathBuf,
        #[arg(long)]
        eval_features: Option<PathBuf>,
        /// Which split the per-head scores are measured on.
        #[arg(long, value_enum, default_value = "train")]
        score_on: ScoreOn,
        #[arg(long, default_value_t = 12)]
        top_k: usize,
        #[arg(long)]
        grid_out: PathBuf,
        /// Grid height; defaults to one past the largest layer index present.
        #[arg(long)]
        layers: Option<usize>,
        /// Grid width; defaults to one past the largest head index present.
        #[arg(long)]
        heads_per_layer: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs a parsed command and returns what it prints on stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Features {
            manifest,
            thresholds,
            heads,
            split,
            out,
        } => {
            let schedule: ThresholdSchedule = thresholds.parse()?;
            let heads: HeadSelection = heads.parse()?;
            cmd_features(&manifest, &schedule, &heads, split.map(Into::into), &out)
        }
        Command::Train {
            features,
            l2,
            max_iters,
            seed,
            model_out,
        } => cmd_train(
            &features,
            &TrainParams {
                l2_coeff: l2,
                max_iters,
                seed,
            },
            &model_out,
        ),
        Command::Evaluate { features, model } => cmd_evaluate(&features, &model),
        Command::RankHeads {
            train_features,
            eval_features,
            score_on,
            top_k,
            grid_out,
            layers,
            heads_per_layer,
            l2,
            max_iters,
            seed,
        } => cmd_rank_heads(RankHeadsArgs {
            train_features: &train_features,
            eval_features: eval_features.as_deref(),
            score_on,
            top_k,
            grid_out: &grid_out,
            shape: (layers, heads_per_layer),
            params: TrainParams {
                l2_coeff: l2,
                max_iters,
                seed,
            },
        }),
    }
}

pub fn cmd_synth(spec_path: &Path, out: &Path) -> Result<String> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec = SynthSpec::from_toml(&text)?;
    let manifest = generate_dataset(&spec, out)?;
    let count = |s: Split| manifest.entries.iter().filter(|e| e.split == s).count();
    Ok(format!(
        "wrote {} samples to {} (train={} dev={} test={})\n",
        manifest.entries.len(),
        out.join("manifest.csv").display(),
        count(Split::Train),
        count(Split::Dev),
        count(Split::Test)
    ))
}

/// Reads only the dimension words of a tensor file header.
fn peek_dims(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let mut buf = [0u8; HEADER_LEN];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: buf[..4].try_into().unwrap(),
        });
    }
    let word = |k: usize| u32::from_le_bytes(buf[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    Ok((word(2), word(3)))
}

pub fn cmd_features(
    manifest_path: &Path,
    schedule: &ThresholdSchedule,
    selection: &HeadSelection,
    split: Option<Split>,
    out: &Path,
) -> Result<String> {
    let manifest = Manifest::load(manifest_path)?;
    let entries = match split {
        Some(s) => manifest.split(s)?,
        None => manifest.entries.iter().collect(),
    };
    let heads: Vec<HeadId> = match (selection, entries.first()) {
        (HeadSelection::List(list), _) => list.clone(),
        (HeadSelection::All, Some(first)) => {
            let (l, h) = peek_dims(&manifest.resolve(first))?;
            HeadId::all(l, h)
        }
        (HeadSelection::All, None) => {
            return Err(Error::Manifest("cannot resolve `all` heads for an empty manifest".into()))
        }
    };
    let expect_dims = matches!(selection, HeadSelection::All).then(|| {
        let last = heads.last().expect("at least one head");
        (last.layer + 1, last.head + 1)
    });

    let rows = entries
        .par_iter()
        .map(|e| {
            let path = manifest.resolve(e);
            let tensor = load_tensor_as(&path, &e.sample_id)?;
            if let Some((l, h)) = expect_dims {
                if (tensor.layers(), tensor.heads()) != (l, h) {
                    return Err(Error::format(
                        &path,
                        format!(
                            "tensor has {}x{} heads, other samples have {l}x{h}",
                            tensor.layers(),
                            tensor.heads()
                        ),
                    ));
                }
            }
            let fv = features_for_sample(&tensor, &heads, schedule)?;
            Ok((
                SampleLabel {
                    sample_id: e.sample_id.clone(),
                    label: e.label,
                },
                fv,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let matrix = FeatureMatrix::new(heads, schedule.clone(), rows)?;
    matrix.save(out)?;
    Ok(format!(
        "wrote {} rows x {} features to {}\n",
        matrix.n_rows(),
        matrix.n_cols(),
        out.display()
    ))
}

pub fn cmd_train(features: &Path, params: &TrainParams, model_out: &Path) -> Result<String> {
    let fm = FeatureMatrix::load(features)?;
    let (model, report) = train_with_report(fm.values().view(), fm.labels(), params)?;
    model.save(model_out)?;
    Ok(format!(
        "trained on {} samples x {} features: iterations={} loss={:.6} gradient_norm={:.3e} converged={}\n",
        fm.n_rows(),
        fm.n_cols(),
        report.iterations,
        report.final_loss,
        report.gradient_norm,
        report.converged
    ))
}

/// Confusion counts of a saved model on a feature file.
pub fn evaluate_model(features: &Path, model: &Path) -> Result<ConfusionCounts> {
    let fm = FeatureMatrix::load(features)?;
    let model = LinearModel::load(model)?;
    let predicted = model.predict(fm.values().view())?;
    ConfusionCounts::from_labels(fm.labels(), &predicted)
}

pub fn cmd_evaluate(features: &Path, model: &Path) -> Result<String> {
    let c = evaluate_model(features, model)?;
    Ok(format!(
        "MCC={:.3}, accuracy={:.1}% (tp={} fp={} tn={} fn={})\n",
        matthews(&c),
        100.0 * accuracy(&c)?,
        c.tp,
        c.fp,
        c.tn,
        c.fn_
    ))
}

pub struct RankHeadsArgs<'a> {
    pub train_features: &'a Path,
    pub eval_features: Option<&'a Path>,
    pub score_on: ScoreOn,
    pub top_k: usize,
    pub grid_out: &'a Path,
    pub shape: (Option<usize>, Option<usize>),
    pub params: TrainParams,
}

pub fn cmd_rank_heads(args: RankHeadsArgs) -> Result<String> {
    let train_set = FeatureMatrix::load(args.train_features)?;
    let (eval_set, tag) = match (args.score_on, args.eval_features) {
        (ScoreOn::Train, _) => (train_set.clone(), "train"),
        (ScoreOn::Eval, Some(p)) => (FeatureMatrix::load(p)?, "eval"),
        (ScoreOn::Eval, None) => {
            return Err(Error::Config("--score-on eval requires --eval-features".into()))
        }
    };
    let layers = args
        .shape
        .0
        .unwrap_or_else(|| train_set.heads().iter().map(|h| h.layer + 1).max().unwrap_or(1));
    let per_layer = args
        .shape
        .1
        .unwrap_or_else(|| train_set.heads().iter().map(|h| h.head + 1).max().unwrap_or(1));

    let scores = score_heads(&train_set, &eval_set, layers, per_layer, &args.params, tag)?;
    scores.grid.save(args.grid_out)?;
    let ranking = rank_heads(&scores.grid);

    let mut out = String::new();
    for w in &scores.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let k = args.top_k.min(ranking.len());
    for (rank, h) in ranking.iter().take(k).enumerate() {
        let _ = writeln!(out, "{}\t{}\t{:.4}", rank + 1, h, scores.grid.get(*h));
    }
    let top: Vec<String> = ranking.iter().take(k).map(|h| h.to_string()).collect();
    let _ = writeln!(out, "top_heads={}", top.join(","));
    Ok(out)
}

/// Entry point shared by the binary: parses `args`, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {}", e.kind(), msg);
            1
        }
    }
}
