use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[cfg(feature = "annotation-server")]
use deer::corpus::DeerletSplit;
use deer::corpus::{load_deer, load_deerlet, make_fact_variant, FactVariant};
use deer::harness::{
    aggregate_inputs, breakdown, build_report, classify_with_majority, classify_with_tfidf, classify_with_verifiers,
    correlate, evaluate_rules, generate_for_record, group_table, load_labels, read_rules, resolve_thresholds,
    run_experiment, write_rules, BreakdownKey, ExperimentConfig, HarnessError, Overrides, RunInfo, System,
    ThresholdSource,
};
#[cfg(feature = "annotation-server")]
use deer::harness::{serve_annotation, AnnotationConfig};
use deer::pipeline::{filter_rules, score_rules, ModuleId};

#[derive(Parser)]
#[command(name = "deer", version, about = "Rule induction from natural-language facts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated fact variants.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<FactVariant>>,
    /// Comma-separated verifier modules; pass `none` for no filtering.
    #[arg(long, value_delimiter = ',')]
    modules: Option<Vec<String>>,
    /// `tune`, a uniform threshold, or a thresholds file.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    mock_seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    RandomFill,
    Tfidf,
    Majority,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Meteor,
    Bleu,
}

#[derive(Subcommand)]
enum Command {
    /// Propose candidate rules without verifying them.
    Propose {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rules with verifier modules, or classify DEERLET pairs.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Rules to score.
        #[arg(long, conflicts_with = "deerlet")]
        rules: Option<PathBuf>,
        #[arg(long, requires = "rules")]
        out: Option<PathBuf>,
        /// Evaluate the verifiers as classifiers on this DEERLET file.
        #[arg(long)]
        deerlet: Option<PathBuf>,
    },
    /// Keep the rules that clear every active threshold.
    Filter {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune verifier thresholds on the DEERLET validation split.
    Tune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated rules against the gold rules.
    Eval {
        #[arg(long)]
        deer: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-group metrics for one breakdown key.
    Analyze {
        #[arg(long)]
        deer: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        /// rule_type, topic, variant or specificity.
        #[arg(long)]
        by: BreakdownKey,
    },
    /// Run a comparison system.
    Baseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// DEERLET file for the classification baselines.
        #[arg(long)]
        deerlet: Option<PathBuf>,
    },
    /// Correlate an automatic metric with aggregated human labels.
    Correlate {
        #[arg(long)]
        deer: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "meteor")]
        metric: Metric,
    },
    /// Serve the annotation API (and a static UI if given).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        deer: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Run a full experiment and write the report.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn parse_modules(items: &[String]) -> Result<BTreeSet<ModuleId>, HarnessError> {
    if items.iter().any(|m| m == "none") {
        return Ok(BTreeSet::new());
    }
    items
        .iter()
        .map(|m| m.parse().map_err(HarnessError::Config))
        .collect()
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        k: args.k,
        seeds: args.seeds.clone(),
        variants: args.variants.clone(),
        active_modules: args.modules.as_deref().map(parse_modules).transpose()?,
        thresholds: args.thresholds.as_deref().map(ThresholdSource::parse),
        system: None,
        output_dir: args.out_dir.clone(),
        mock_seed: args.mock_seed,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn seeds_of(rules: &[deer::pipeline::GeneratedRule]) -> Vec<u64> {
    rules.iter().filter_map(|r| r.seed).collect::<BTreeSet<_>>().into_iter().collect()
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Propose { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let backend = cfg.backend.build()?;
            let prompts = cfg.prompts()?;
            let records = load_deer(&cfg.deer_path)?;
            let mut rules = Vec::new();
            for &seed in &cfg.seeds {
                for &variant in &cfg.variants {
                    for record in records.iter().filter(|r| cfg.split.is_none_or(|s| r.split == s)) {
                        let facts = make_fact_variant(record, variant, seed);
                        rules.extend(generate_for_record(
                            backend.as_ref(),
                            &prompts,
                            cfg.system,
                            record,
                            &facts,
                            cfg.k,
                            seed,
                            &cfg.proposer,
                        )?);
                    }
                }
            }
            write_rules(&out, &rules)?;
            println!("{} candidates written to {}", rules.len(), out.display());
        }
        Command::Verify { cfg, rules, out, deerlet } => {
            let cfg = load_config(&cfg)?;
            let backend = cfg.backend.build()?;
            let prompts = cfg.prompts()?;
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            if let Some(path) = deerlet {
                let report =
                    classify_with_verifiers(backend.as_ref(), &prompts, &load_deerlet(path)?, &cfg.active_modules, seed, &cfg.tuning)?;
                print!("{}", report.to_table());
            } else if let (Some(rules), Some(out)) = (rules, out) {
                let mut all = read_rules(rules)?;
                score_rules(backend.as_ref(), &prompts, &mut all, &cfg.active_modules, seed)?;
                write_rules(&out, &all)?;
                println!("{} rules scored", all.len());
            } else {
                return Err(HarnessError::Config("verify needs --rules and --out, or --deerlet".into()));
            }
        }
        Command::Filter { cfg, rules, out } => {
            let cfg = load_config(&cfg)?;
            let backend = cfg.backend.build()?;
            let thresholds = resolve_thresholds(&cfg, backend.as_ref(), &cfg.prompts()?)?;
            let all = read_rules(rules)?;
            let kept = filter_rules(&all, &thresholds, &cfg.active_modules)?;
            write_rules(&out, &kept)?;
            println!("kept {} of {}", kept.len(), all.len());
        }
        Command::Tune { cfg, out } => {
            let mut cfg = load_config(&cfg)?;
            cfg.thresholds = ThresholdSource::Tune;
            cfg.validate()?;
            let backend = cfg.backend.build()?;
            let set = resolve_thresholds(&cfg, backend.as_ref(), &cfg.prompts()?)?;
            let text = serde_json::to_string_pretty(&set).expect("thresholds serialize") + "\n";
            std::fs::write(&out, &text).map_err(|source| HarnessError::Io { path: out.clone(), source })?;
            print!("{text}");
        }
        Command::Eval { deer, rules, labels, json } => {
            let rules = read_rules(rules)?;
            let evaluated = evaluate_rules(&rules, &load_deer(deer)?)?;
            let labels = labels.map(load_labels).transpose()?;
            let info = RunInfo {
                system: System::Pipeline,
                k: 0,
                variants: rules.iter().filter_map(|r| r.variant).collect::<BTreeSet<_>>().into_iter().collect(),
                active_modules: BTreeSet::new(),
                seeds: seeds_of(&rules),
                thresholds: None,
            };
            let report = build_report(info, &evaluated, labels.as_ref())?;
            if let Some(path) = json {
                std::fs::write(&path, report.to_json()).map_err(|source| HarnessError::Io { path, source })?;
            }
            print!("{}", report.to_table());
        }
        Command::Analyze { deer, rules, by } => {
            let evaluated = evaluate_rules(&read_rules(rules)?, &load_deer(deer)?)?;
            print!("{}", group_table(by, &breakdown(&evaluated, by)));
        }
        Command::Baseline { kind, cfg, deerlet } => match kind {
            BaselineKind::RandomFill => {
                let mut cfg = load_config(&cfg)?;
                cfg.system = System::RandomFill;
                cfg.active_modules.clear();
                print!("{}", run_experiment(&cfg)?.report.to_table());
            }
            BaselineKind::Tfidf | BaselineKind::Majority => {
                let path = deerlet
                    .or_else(|| load_config(&cfg).ok().and_then(|c| c.deerlet_path))
                    .ok_or_else(|| HarnessError::Config("classification baselines need --deerlet".into()))?;
                let records = load_deerlet(path)?;
                let report = match kind {
                    BaselineKind::Tfidf => classify_with_tfidf(&records, &Default::default())?,
                    _ => classify_with_majority(&records),
                };
                print!("{}", report.to_table());
            }
        },
        Command::Correlate { deer, rules, labels, metric } => {
            let evaluated = evaluate_rules(&read_rules(rules)?, &load_deer(deer)?)?;
            let labels: BTreeMap<_, _> = load_labels(labels)?;
            let (meteor, bleu, human) = aggregate_inputs(&evaluated, &labels);
            let xs = match metric {
                Metric::Meteor => meteor,
                Metric::Bleu => bleu,
            };
            let c = correlate(&xs, &human).map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("r = {:.4}  p = {:.4}  n = {}", c.r, c.p_two_tailed, c.n);
        }
        #[cfg(not(feature = "annotation-server"))]
        Command::Serve { .. } => {
            return Err(HarnessError::Config("built without the annotation-server feature".into()));
        }
        #[cfg(feature = "annotation-server")]
        Command::Serve { bind, candidates, output, deer, static_dir } => {
            serve_annotation(
                &bind,
                AnnotationConfig {
                    candidates_path: candidates,
                    output_path: output,
                    deer_path: deer,
                    static_dir,
                    split: DeerletSplit::Test,
                },
            )?;
        }
        Command::Report { cfg } => {
            let cfg = load_config(&cfg)?;
            let out = run_experiment(&cfg)?;
            print!("{}", out.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
