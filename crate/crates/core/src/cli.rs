//! Command-line front end. Machine-readable results go to the `out` writer,
//! diagnostics to `err`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bucketizer::{compression_report, BucketConfig};
use crate::corpus::{
    attach_parses, hash_reprs, load_examples, load_predictions, read_conllu, read_repr_matrices,
    DepSentence, SentimentTuple, TaskSpec,
};
use crate::error::{Error, Result};
use crate::evalharness::{distance_report, score_f1, DistanceBuckets};
use crate::promptgen::{build_prompt, parse_target, serialize_target};
use crate::regulator::{
    self, grad_check, regulate, train_surrogate, BiasConfig, Loss, RegulatorParams, TrainConfig,
};
use crate::rng::SplitMix64;
use crate::static_reorder::{static_order, RuleTable};

pub const DEFAULT_SEED: u64 = 5;
pub const DEFAULT_RULE: &str = "rule3";
pub const DEFAULT_DIM: usize = 32;

#[derive(Debug, Parser)]
#[command(
    name = "seqreg",
    about = "Dependency-guided sequence regulation for generative ABSA",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the relative-position compression table as TSV.
    Buckets {
        #[arg(long)]
        max_offset: usize,
        #[arg(long, default_value_t = 32)]
        num_buckets: usize,
        #[arg(long, default_value_t = 128)]
        max_distance: usize,
        #[arg(long)]
        unidirectional: bool,
    },
    /// Print the reordered token order of each sentence.
    Reorder(ReorderArgs),
    /// Build prompts and encode/decode sentinel targets.
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Fit regulator parameters with the pair-proximity surrogate loss.
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients on random instances.
    Gradcheck(GradcheckArgs),
    /// Score predicted tuples against gold tuples.
    Eval {
        #[arg(long, value_parser = parse_task)]
        task: TaskSpec,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated aspect/opinion distance boundaries, e.g. `10,16`.
        #[arg(long)]
        buckets: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Static,
    Dynamic,
}

#[derive(Debug, Args)]
struct EncoderArgs {
    /// Representation width when parameters or representations are synthesized.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = regulator::params::DEFAULT_HEADS)]
    heads: usize,
    #[arg(long, default_value_t = regulator::params::DEFAULT_LAYERS)]
    layers: usize,
    #[arg(long = "l", default_value_t = 128.0)]
    bias_length: f64,
    #[arg(long = "d", default_value_t = 1.0)]
    bias_step: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl EncoderArgs {
    fn bias(&self) -> Result<BiasConfig> {
        BiasConfig::new(self.bias_length, self.bias_step)
    }
}

#[derive(Debug, Args)]
struct ReorderArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    conllu: PathBuf,
    /// Rule table name (`rule1`..`rule3`) or path to a TSV file.
    #[arg(long, default_value = DEFAULT_RULE)]
    rule: String,
    /// Parameter JSON; freshly initialised from `--seed` when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Representation matrices, one block per sentence; hashed when absent.
    #[arg(long)]
    reprs: Option<PathBuf>,
    /// Emit one JSON object per sentence with the scores (dynamic mode).
    #[arg(long)]
    scores: bool,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Debug, Subcommand)]
enum PromptCommand {
    Build {
        #[arg(long, value_parser = parse_task)]
        task: TaskSpec,
        /// Also emit the assembled model input for this text.
        #[arg(long)]
        text: Option<String>,
    },
    Encode {
        #[arg(long, value_parser = parse_task)]
        task: TaskSpec,
        /// JSON array of tuples.
        #[arg(long)]
        tuples: String,
    },
    Decode {
        #[arg(long, value_parser = parse_task)]
        task: TaskSpec,
        #[arg(long)]
        text: String,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    task: TaskSpec,
    #[arg(long)]
    data: PathBuf,
    /// Parses keyed by `# sent_id`; defaults to the data path with a `.conllu` extension.
    #[arg(long)]
    conllu: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    lr: f64,
    #[arg(long)]
    out: PathBuf,
    /// Enable encoder dropout during updates.
    #[arg(long)]
    dropout: bool,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 5)]
    instances: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn parse_task(s: &str) -> std::result::Result<TaskSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the CLI and returns the process exit status: 0 on success, 2 on
/// usage errors, 1 on any other failure.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.category());
            1
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let mut s = serde_json::to_string(value)?;
    s.push('\n');
    emit(out, &s)
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Buckets {
            max_offset,
            num_buckets,
            max_distance,
            unidirectional,
        } => {
            let cfg = BucketConfig::new(num_buckets, max_distance, !unidirectional)?;
            emit(out, &compression_report(max_offset, &cfg)?.to_tsv())
        }
        Command::Reorder(args) => reorder(args, out),
        Command::Prompt(p) => prompt(p, out),
        Command::Train(args) => train(args, out, err),
        Command::Gradcheck(args) => gradcheck(args, out),
        Command::Eval {
            task,
            gold,
            pred,
            buckets,
        } => eval(task, &gold, &pred, buckets.as_deref(), out),
    }
}

/// Attaches supplied or hashed representations to each sentence.
fn with_reprs(
    sentences: Vec<DepSentence>,
    reprs: Option<&Path>,
    dim: usize,
    seed: u64,
) -> Result<Vec<DepSentence>> {
    match reprs {
        Some(path) => {
            let blocks = read_repr_matrices(path)?;
            if blocks.len() != sentences.len() {
                return Err(Error::Input(format!(
                    "{} representation blocks for {} sentences",
                    blocks.len(),
                    sentences.len()
                )));
            }
            sentences
                .into_iter()
                .zip(blocks)
                .map(|(s, m)| s.with_reprs(m))
                .collect()
        }
        None => sentences
            .into_iter()
            .map(|s| {
                let h = hash_reprs(&s.surfaces(), dim, seed as i64);
                s.with_reprs(h)
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct DynamicLine<'a> {
    id: &'a str,
    order: &'a [usize],
    rs: &'a [f64],
    bs: &'a [f64],
    ps: &'a [f64],
}

fn reorder(args: ReorderArgs, out: &mut dyn Write) -> Result<()> {
    let sentences = read_conllu(&args.conllu)?;
    match args.mode {
        Mode::Static => {
            let rules = RuleTable::resolve(&args.rule)?;
            for s in &sentences {
                emit(out, &format!("{}\n", static_order(s, &rules).to_line()))?;
            }
        }
        Mode::Dynamic => {
            let enc = &args.encoder;
            let params = match &args.params {
                Some(p) => RegulatorParams::load(p)?,
                None => RegulatorParams::init(enc.dim, enc.layers, enc.heads, enc.seed)?,
            };
            let bias = enc.bias()?;
            let sentences = with_reprs(sentences, args.reprs.as_deref(), params.dim, enc.seed)?;
            for s in &sentences {
                let (_, bundle) = regulate(s, &params, &bias)?;
                if args.scores {
                    emit_json(
                        out,
                        &DynamicLine {
                            id: s.id(),
                            order: bundle.perm.order(),
                            rs: &bundle.rs,
                            bs: &bundle.bs,
                            ps: &bundle.ps,
                        },
                    )?;
                } else {
                    emit(out, &format!("{}\n", bundle.perm.to_line()))?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BuiltPrompt {
    semantic: String,
    fewshot: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
}

fn prompt(cmd: PromptCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        PromptCommand::Build { task, text } => {
            let b = build_prompt(task);
            let input = text.map(|t| b.assembled(&t));
            emit_json(
                out,
                &BuiltPrompt {
                    semantic: b.semantic,
                    fewshot: b.fewshot,
                    input,
                },
            )
        }
        PromptCommand::Encode { task, tuples } => {
            let tuples: Vec<SentimentTuple> = serde_json::from_str(&tuples)?;
            emit(out, &format!("{}\n", serialize_target(&tuples, task)?))
        }
        PromptCommand::Decode { task, text } => emit_json(out, &parse_target(&text, task)),
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    examples: usize,
    pairs: usize,
    initial_loss: f64,
    final_loss: f64,
    initial_rank_distance: f64,
    final_rank_distance: f64,
    loss: &'a [f64],
    mean_rank_distance: &'a [f64],
}

fn train(args: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let enc = &args.encoder;
    let mut examples = load_examples(&args.data, args.task)?;
    let conllu = args
        .conllu
        .clone()
        .unwrap_or_else(|| args.data.with_extension("conllu"));
    let parses = with_reprs(read_conllu(&conllu)?, None, enc.dim, enc.seed)?;
    attach_parses(&mut examples, parses)?;
    let params = RegulatorParams::init(enc.dim, enc.layers, enc.heads, enc.seed)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: enc.seed,
        bias: enc.bias()?,
        dropout: args.dropout,
    };
    let (params, m) = train_surrogate(&examples, params, &cfg)?;
    std::fs::write(&args.out, params.to_json()? + "\n").map_err(|e| Error::io(&args.out, e))?;
    let _ = writeln!(err, "wrote {}", args.out.display());
    emit_json(
        out,
        &TrainSummary {
            examples: examples.len(),
            pairs: m.pairs,
            initial_loss: m.loss[0],
            final_loss: *m.loss.last().unwrap_or(&0.0),
            initial_rank_distance: m.initial_rank_distance(),
            final_rank_distance: m.final_rank_distance(),
            loss: &m.loss,
            mean_rank_distance: &m.mean_rank_distance,
        },
    )
}

/// Random tree over `n` nodes: each node after the first attaches to an
/// earlier node of a shuffled ordering.
pub fn random_instance(n: usize, dim: usize, rng: &mut SplitMix64) -> Result<DepSentence> {
    let mut nodes: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut nodes);
    let mut heads = vec![None; n];
    for k in 1..n {
        heads[nodes[k]] = Some(nodes[rng.below(k)]);
    }
    let words: Vec<String> = (0..n)
        .map(|i| format!("t{}", rng.below(1000) + i))
        .collect();
    let surfaces: Vec<&str> = words.iter().map(String::as_str).collect();
    let rels: Vec<&str> = heads
        .iter()
        .map(|h| if h.is_none() { "root" } else { "dep" })
        .collect();
    let s = DepSentence::from_parts("rand", &surfaces, &heads, &rels)?;
    let h = hash_reprs(&surfaces, dim, rng.next_u64() as i64);
    s.with_reprs(h)
}

#[derive(Serialize)]
struct GradcheckLine {
    instance: usize,
    tokens: usize,
    dim: usize,
    heads: usize,
    entries: usize,
    max_rel_error: f64,
}

fn gradcheck(args: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let mut rng = SplitMix64::new(args.seed);
    for instance in 0..args.instances {
        let n = 2 + rng.below(5);
        let heads = 1 + rng.below(2);
        let dim = heads * (1 + rng.below(8 / heads));
        let s = random_instance(n, dim, &mut rng)?;
        let params = RegulatorParams::init(dim, 2, heads, rng.next_u64())?;
        let mut pairs = vec![(0, n - 1)];
        if n > 2 {
            pairs.push((1, n / 2));
        }
        let report = grad_check(
            &params,
            &s,
            &BiasConfig::default(),
            &Loss::PairProximity(pairs),
            args.eps,
        )?;
        emit_json(
            out,
            &GradcheckLine {
                instance,
                tokens: n,
                dim,
                heads,
                entries: report.entries,
                max_rel_error: report.max_rel_error,
            },
        )?;
    }
    Ok(())
}

fn eval(
    task: TaskSpec,
    gold: &Path,
    pred: &Path,
    buckets: Option<&str>,
    out: &mut dyn Write,
) -> Result<()> {
    let gold = load_examples(gold, task)?;
    let pred = load_predictions(pred, task)?;
    if gold.len() != pred.len() {
        return Err(Error::Input(format!(
            "{} gold examples but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if let Some((g, p)) = gold.iter().zip(&pred).find(|(g, p)| g.id != p.id) {
        return Err(Error::Input(format!(
            "prediction {} is aligned with gold example {}",
            p.id, g.id
        )));
    }
    let pred_tuples: Vec<Vec<SentimentTuple>> = pred.into_iter().map(|p| p.tuples).collect();
    let report = match buckets {
        Some(b) => distance_report(&gold, &pred_tuples, task, &DistanceBuckets::parse(b)?)?,
        None => {
            let gold_tuples: Vec<Vec<SentimentTuple>> =
                gold.iter().map(|g| g.tuples.clone()).collect();
            score_f1(&gold_tuples, &pred_tuples, task)?
        }
    };
    emit_json(out, &report)
}
