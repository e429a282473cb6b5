use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsqa_core::config::RunConfig;
use tsqa_core::corpus::{generate_synthetic, load_dataset, load_facts, QARecord};
use tsqa_core::eval::{evaluate, report, ReportFormat};
use tsqa_core::facts::{bulk_load, mine_proximal, mine_remote, resolve_question, sample_negatives};
use tsqa_core::features::{build_mask, dilate};
use tsqa_core::io::{write_atomic, write_jsonl};
use tsqa_core::pipeline::{ablation_csv, ablation_markdown, prepare, run_ablation};
use tsqa_core::policy::{encode_all, load_checkpoint, save_checkpoint};
use tsqa_core::reward::ContrastiveReward;
use tsqa_core::tagger;
use tsqa_core::trainer::{train_ppo, train_sft};

#[derive(Parser)]
#[command(name = "tsqa", version, about = "Time-sensitive question answering pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; missing fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.sft.seed = seed;
            config.ppo.seed = seed;
            config.synthetic.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its fact store.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print temporal spans of a text or of every context in a dataset.
    Tag {
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        text: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the raw and dilated temporal mask of a text.
    Mask {
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = tsqa_core::features::DEFAULT_WINDOW)]
        window: usize,
    },
    /// Mine remote and proximal negatives for a question.
    Mine {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        relation: String,
        #[arg(long)]
        question: String,
        /// Negatives drawn per side.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a prediction against a ground truth and optional negatives.
    Reward {
        #[arg(long)]
        gt: String,
        #[arg(long)]
        pred: String,
        #[arg(long = "neg")]
        negatives: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Supervised stage.
    TrainSft {
        #[command(flatten)]
        common: Common,
        /// Defaults to sft.ckpt under the checkpoints directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PPO stage starting from a supervised checkpoint.
    TrainPpo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        /// Dataset label in the report.
        #[arg(long)]
        name: Option<String>,
    },
    /// Temporal fusion on/off crossed with contrastive/exact-match reward.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_splits(config: &RunConfig) -> Result<(Vec<QARecord>, Vec<QARecord>, Vec<QARecord>)> {
    let p = &config.paths;
    let (train, dev, test) = (p.split("train"), p.split("dev"), p.split("test"));
    RunConfig::require(&[&train, &dev])?;
    let test = if test.exists() { load_dataset(&test)? } else { Vec::new() };
    Ok((load_dataset(&train)?, load_dataset(&dev)?, test))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, out_dir } => {
            let config = common.load()?;
            let corpus = generate_synthetic(&config.synthetic)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            write_jsonl(&out_dir.join("train.jsonl"), &corpus.train)?;
            write_jsonl(&out_dir.join("dev.jsonl"), &corpus.dev)?;
            write_jsonl(&out_dir.join("test.jsonl"), &corpus.test)?;
            write_jsonl(&out_dir.join("facts.jsonl"), &corpus.facts)?;
            write_jsonl(&out_dir.join("annotations.jsonl"), &corpus.annotations)?;
            println!(
                "wrote {} train, {} dev, {} test records and {} facts to {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                corpus.facts.len(),
                out_dir.display()
            );
        }
        Command::Tag { text, data } => match (text, data) {
            (Some(text), _) => {
                let tokens = tagger::tokenize(&text);
                for span in tagger::tag(&tokens) {
                    let words: Vec<&str> = tokens[span.tok_start..span.tok_end].iter().map(|t| t.text.as_str()).collect();
                    println!("{}\t{}", words.join(" "), serde_json::to_string(&span)?);
                }
            }
            (None, Some(path)) => {
                for record in load_dataset(&path)? {
                    let spans = tagger::tag(&tagger::tokenize(&record.context));
                    println!("{}", serde_json::json!({ "id": record.id, "spans": spans }));
                }
            }
            (None, None) => bail!("one of --text or --data is required"),
        },
        Command::Mask { text, window } => {
            let tokens = tagger::tokenize(&text);
            let mask = build_mask(tokens.len(), &tagger::tag(&tokens))?;
            let dilated = dilate(&mask, window);
            let bits = |m: &tsqa_core::features::TemporalMask| m.bits.iter().map(|b| b.to_string()).collect::<String>();
            println!("tokens  {}", tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "));
            println!("mask    {}", bits(&mask));
            println!("dilated {}", bits(&dilated));
        }
        Command::Mine {
            facts,
            subject,
            relation,
            question,
            k,
            seed,
        } => {
            let index = bulk_load(load_facts(&facts)?)?;
            let spec = tagger::question_time(&question);
            let gold = resolve_question(&spec, &subject, &relation, &index)?;
            let q = match &spec.event_name {
                Some(name) => index.event_interval(name),
                None => spec.interval,
            };
            let Some(q) = q else {
                bail!("question has no resolvable time interval");
            };
            let remote = mine_remote(&subject, &relation, &gold, &q, &index);
            let proximal = mine_proximal(&subject, &relation, &gold, &q, &index);
            let sampled = sample_negatives(&remote, &proximal, k, &mut ChaCha8Rng::seed_from_u64(seed));
            let out = serde_json::json!({
                "gold": gold,
                "interval": q,
                "remote": remote,
                "proximal": proximal,
                "sampled": sampled,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Reward {
            gt,
            pred,
            negatives,
            config,
        } => {
            let params = match config {
                Some(path) => RunConfig::load(&path)?.reward,
                None => Default::default(),
            };
            let strategy = ContrastiveReward::new(params)?;
            let negs: Vec<&str> = negatives.iter().map(String::as_str).collect();
            let scored = strategy.score(&gt, &pred, &negs);
            println!("T = {}", scored.triplet);
            println!("R = {:.6}", scored.reward);
        }
        Command::TrainSft { common, out } => {
            let config = common.load()?;
            let (train, dev, _) = load_splits(&config)?;
            let prepared = prepare(&train, &dev, &[], config.features, config.seed)?;
            let (params, history) = train_sft(prepared.init.clone(), &prepared.train, &prepared.dev, &config.sft)?;
            let out = out.unwrap_or_else(|| config.paths.checkpoints.join("sft.ckpt"));
            ensure_parent(&out)?;
            save_checkpoint(&params, &out)?;
            write_text(
                &config.paths.reports.join("sft_history.json"),
                &serde_json::to_string_pretty(&history)?,
            )?;
            let best = &history.epochs[history.best_epoch];
            println!(
                "best epoch {} dev EM {:.3} F1 {:.3}; skipped {}; checkpoint {}",
                history.best_epoch,
                best.dev_em,
                best.dev_f1,
                history.skipped,
                out.display()
            );
        }
        Command::TrainPpo { common, init, out } => {
            let config = common.load()?;
            let init = init.unwrap_or_else(|| config.paths.checkpoints.join("sft.ckpt"));
            RunConfig::require(&[&init])?;
            let sft = load_checkpoint(&init)?;
            let (train, dev, _) = load_splits(&config)?;
            let train = encode_all(&train, &sft)?;
            let dev = encode_all(&dev, &sft)?;
            let strategy = tsqa_core::reward::reward_registry().build(&config.ppo.reward_kind, &config.reward)?;
            let (params, history) = train_ppo(sft, &train, &dev, &config.ppo, strategy.as_ref())?;
            let out = out.unwrap_or_else(|| config.paths.checkpoints.join("ppo.ckpt"));
            ensure_parent(&out)?;
            save_checkpoint(&params, &out)?;
            write_text(&config.paths.reports.join("ppo_history.csv"), &history.to_csv()?)?;
            let best = &history.rows[history.best_iteration];
            println!(
                "best iteration {} dev EM {:.3} F1 {:.3}; checkpoint {}",
                history.best_iteration,
                best.dev_em,
                best.dev_f1,
                out.display()
            );
        }
        Command::Eval {
            data,
            ckpt,
            format,
            name,
        } => {
            RunConfig::require(&[&data, &ckpt])?;
            let params = load_checkpoint(&ckpt)?;
            let records = encode_all(&load_dataset(&data)?, &params)?;
            let metrics = evaluate(&records, &params)?;
            let label = name.unwrap_or_else(|| {
                data.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "data".into())
            });
            print!("{}", report(&metrics, format, &label)?);
        }
        Command::Ablate { common } => {
            let config = common.load()?;
            let (train, dev, test) = load_splits(&config)?;
            if test.is_empty() {
                bail!("ablation needs a test split");
            }
            let cells = run_ablation(&train, &dev, &test, &config)?;
            let md = ablation_markdown(&cells);
            write_text(&config.paths.reports.join("ablation.csv"), &ablation_csv(&cells)?)?;
            write_text(&config.paths.reports.join("ablation.md"), &md)?;
            print!("{md}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
