use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xlner::cli::{
    cmd_convert, cmd_eval, cmd_grid, cmd_sweep, cmd_tag, cmd_train, CliError, RunConfig,
};
use xlner::corpus::{ColumnLayout, TagScheme};

/// Multilingual sequence tagger: char-CNN + BiLSTM encoder with a
/// locally-normalized transition decoder and configurable cross-lingual
/// parameter sharing.
#[derive(Parser)]
#[command(name = "xlner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Column layout of a CoNLL-style file.
#[derive(Args, Clone, Copy)]
struct LayoutArgs {
    /// Number of whitespace-separated columns per token line
    #[arg(long, default_value_t = 2)]
    columns: usize,
    /// Zero-based index of the surface-form column
    #[arg(long, default_value_t = 0)]
    surface_col: usize,
    /// Zero-based index of the tag column (default: last column)
    #[arg(long)]
    tag_col: Option<usize>,
}

impl LayoutArgs {
    fn layout(&self) -> ColumnLayout {
        ColumnLayout {
            columns: self.columns,
            surface: self.surface_col,
            tag: self.tag_col.unwrap_or(self.columns.saturating_sub(1)),
        }
    }
}

/// Flag overrides applied on top of a config file; flags win.
#[derive(Args, Clone, Copy)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lstm_size: Option<usize>,
    #[arg(long)]
    max_filter_width: Option<usize>,
    #[arg(long)]
    filters_per_width: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.hyperparams.seed = seed;
        }
        let hp = &mut cfg.hyperparams;
        if let Some(v) = self.learning_rate {
            hp.learning_rate = v;
        }
        if let Some(v) = self.lstm_size {
            hp.lstm_size = v;
        }
        if let Some(v) = self.max_filter_width {
            hp.max_filter_width = v;
        }
        if let Some(v) = self.filters_per_width {
            hp.filters_per_width = v;
        }
        if let Some(v) = self.max_epochs {
            hp.max_epochs = v;
        }
        if let Some(v) = self.patience {
            hp.patience = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Re-encode a CoNLL file under another tag scheme
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Scheme of the input file (iob1, iobes, io)
        #[arg(long)]
        from: String,
        /// Scheme to emit
        #[arg(long)]
        to: String,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Train a monolingual or joint model from a config file
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the best-dev checkpoint (overrides output.checkpoint)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Where to write the report (overrides output.report)
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tag a CoNLL file with a trained model; appends a predicted-tag column
    Tag {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Language of the input (must be one the model was trained on)
        #[arg(long)]
        lang: String,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Entity-level precision/recall/F1 of a predicted file against gold
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Tag scheme of both files
        #[arg(long)]
        scheme: String,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Column count of the predicted file, if it differs from gold
        #[arg(long)]
        pred_columns: Option<usize>,
        /// Tag column of the predicted file (default: its last column)
        #[arg(long)]
        pred_tag_col: Option<usize>,
    },
    /// Target-fraction sweep: joint vs monolingual baseline per fraction
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated training fractions of the target language
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Hyperparameter grid search over the configured data
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn parse_scheme(s: &str) -> Result<TagScheme, CliError> {
    TagScheme::parse(s).ok_or_else(|| CliError::Config(format!("unknown scheme '{s}'")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert {
            input,
            output,
            from,
            to,
            layout,
        } => cmd_convert(
            &input,
            &output,
            layout.layout(),
            parse_scheme(&from)?,
            parse_scheme(&to)?,
        ),
        Command::Train {
            config,
            checkpoint,
            report,
            overrides,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg);
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if report.is_some() {
                cfg.report = report;
            }
            let (_, result) = cmd_train(&cfg)?;
            print!("{}", result.render());
            Ok(())
        }
        Command::Tag {
            checkpoint,
            input,
            output,
            lang,
            layout,
        } => cmd_tag(&checkpoint, &input, &output, &lang, layout.layout()),
        Command::Eval {
            gold,
            pred,
            scheme,
            layout,
            pred_columns,
            pred_tag_col,
        } => {
            let gold_layout = layout.layout();
            let pred_cols = pred_columns.unwrap_or(gold_layout.columns);
            let pred_layout = ColumnLayout {
                columns: pred_cols,
                surface: gold_layout.surface,
                tag: pred_tag_col.unwrap_or(pred_cols.saturating_sub(1)),
            };
            let report = cmd_eval(&gold, &pred, parse_scheme(&scheme)?, gold_layout, pred_layout)?;
            print!("{report}");
            Ok(())
        }
        Command::Sweep {
            config,
            fractions,
            overrides,
        } => {
            if fractions.is_empty() {
                return Err(CliError::Config("--fractions must not be empty".into()));
            }
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let out = cmd_sweep(&cfg, &fractions)?;
            print!("{out}");
            Ok(())
        }
        Command::Grid { config, overrides } => {
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let out = cmd_grid(&cfg)?;
            print!("{out}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
