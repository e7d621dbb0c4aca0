//! `xpval` command-line front end.
//!
//! Exit codes: 0 success, 1 T error detected (or proof rejected), 2 R error,
//! reasoner issue or indeterminate run (or malformed proof input), 3 usage or
//! input error.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;
use xpval::campaign::{read_records, run_campaign, write_records, CampaignInput, CampaignOptions, VerdictRecord};
use xpval::cnf::{CnfFormula, Lit};
use xpval::config::RunConfig;
use xpval::dataset::{generate_dataset, load_csv_file, sample_instances};
use xpval::encoding::build_encoding;
use xpval::explain::{ExplainerR, ExplanationKind};
use xpval::fixtures;
use xpval::model::{load_model_file, parse_point, FeatureSet, Instance, TreeEnsembleModel, TreeOutput};
use xpval::proof::{check_proof, CheckOutcome, ClausalProof};
use xpval::rational::Rational;
use xpval::report::aggregate;
use xpval::target::{serve, FaultMode, FaultyExplainer, ProcessEndpoint, TargetExplainer};
use xpval::validate::{Evidence, Outcome, Validator, Verdict};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Internal(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Parser)]
#[command(name = "xpval", version, about = "Validate formal explanations of tree-ensemble predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a point.
    Predict(PointArgs),
    /// Compute an AXp or CXp with the reference explainer.
    Explain {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, value_parser = parse_kind)]
        kind: ExplanationKind,
        /// Write every oracle answer as JSON lines.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Validate one explanation.
    Check(CheckArgs),
    /// Run a campaign against a target explainer.
    Validate(ValidateArgs),
    /// Check a DRUP proof against a DIMACS formula.
    CheckProof {
        premises: PathBuf,
        proof: PathBuf,
        /// Comma-separated DIMACS literals assumed true.
        #[arg(long, allow_hyphen_values = true)]
        assume: Option<String>,
    },
    /// Rebuild the summary tables from persisted verdicts.
    Report {
        verdicts: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Print the CNF encoding of "prediction differs from CLASS".
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        class: u32,
        /// Pin these features to the values of --point, as unit clauses.
        #[arg(long, requires = "point", value_parser = parse_features)]
        fixed: Option<FeatureSet>,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
    },
    /// Answer target-protocol requests on stdin with a built-in explainer.
    ServeMutant {
        #[arg(value_parser = parse_mode)]
        mode: FaultMode,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "fixture"])))]
struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Built-in example: xd6, pima or phoneme.
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Args)]
struct PointArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated feature values; defaults to the fixture's instance.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("which").required(true).args(["axp", "cxp"])))]
struct CheckArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long)]
    axp: bool,
    #[arg(long)]
    cxp: bool,
    /// Comma-separated 1-based feature ids (may be empty).
    #[arg(long, value_parser = parse_features, allow_hyphen_values = true)]
    features: FeatureSet,
    /// T's witness for a CXp, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    witness: Option<String>,
    /// Continue phase 2 after the first error.
    #[arg(long)]
    full_scan: bool,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("t").required(true).args(["target", "mutant"])))]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Instances (CSV); defaults to generated points.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of random points to generate when no --data is given.
    #[arg(long, default_value_t = 200)]
    generate: usize,
    /// Command line of an external explainer.
    #[arg(long)]
    target: Option<String>,
    /// Built-in explainer mode.
    #[arg(long, value_parser = parse_mode)]
    mutant: Option<FaultMode>,
    /// axp, cxp or both.
    #[arg(long, default_value = "both")]
    kind: String,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for verdicts.jsonl, report.csv, report.md and proofs/.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExplanationKind, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<FaultMode, String> {
    s.parse()
}

fn parse_features(s: &str) -> Result<FeatureSet, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| format!("`{p}` is not a 1-based feature id"))
        })
        .collect()
}

fn load_model_arg(args: &ModelArgs) -> Result<(String, TreeEnsembleModel), CliError> {
    match (&args.model, &args.fixture) {
        (Some(path), _) => {
            let name = path
                .file_stem()
                .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, load_model_file(path).map_err(input)?))
        }
        (None, Some(name)) => fixtures::model(name)
            .map(|m| (name.clone(), m))
            .ok_or_else(|| CliError::Input(format!("unknown fixture `{name}` (known: {})", fixtures::NAMES.join(", ")))),
        (None, None) => Err(CliError::Input("one of --model or --fixture is required".into())),
    }
}

fn load_point(args: &PointArgs) -> Result<(TreeEnsembleModel, Vec<Rational>), CliError> {
    let (_, model) = load_model_arg(&args.model)?;
    let point = match (&args.point, &args.model.fixture) {
        (Some(text), _) => parse_point(text).map_err(input)?,
        (None, Some(name)) if args.model.model.is_none() => fixtures::point(name).expect("fixture exists"),
        _ => return Err(CliError::Input("--point is required with --model".into())),
    };
    model.check_point(&point).map_err(input)?;
    Ok((model, point))
}

fn load_instance(args: &PointArgs) -> Result<(TreeEnsembleModel, Instance), CliError> {
    let (model, point) = load_point(args)?;
    let instance = Instance::predicted(&model, point).map_err(input)?;
    Ok((model, instance))
}

fn exit_for(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Validated => 0,
        Outcome::TError => 1,
        Outcome::RError | Outcome::ReasonerIssue | Outcome::Indeterminate => 2,
    }
}

fn point_text(point: &[Rational]) -> String {
    let parts: Vec<String> = point.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

fn describe(verdict: &Verdict) -> String {
    let mut out = String::new();
    let at = verdict.feature.map(|t| format!(" at feature {t}")).unwrap_or_default();
    out.push_str(&format!(
        "verdict {}{at}: {} {} ({:?}, culprit {:?})\n",
        verdict.case, verdict.kind, verdict.features, verdict.outcome, verdict.culprit
    ));
    out.push_str(&format!("trail {}\n", verdict.trail_cases().join(" ")));
    for e in &verdict.evidence {
        let line = match e {
            Evidence::Witness {
                source,
                feature,
                point,
                predicted,
                defect,
            } => {
                let at = feature.map(|t| format!(" without {t}")).unwrap_or_default();
                let predicted = predicted.map_or_else(|| "-".to_string(), |p| p.to_string());
                match defect {
                    None => format!("witness from {source:?}{at}: {} predicts {predicted}", point_text(point)),
                    Some(d) => format!("rejected witness from {source:?}{at}: {d}"),
                }
            }
            Evidence::Proof {
                feature, steps, status, file, ..
            } => {
                let at = feature.map(|t| format!(" without {t}")).unwrap_or_default();
                let file = file.as_ref().map(|f| format!(" [{f}]")).unwrap_or_default();
                format!("proof{at}: {steps} steps, {status:?}{file}")
            }
            Evidence::Oracle {
                feature, query, set, holds,
            } => {
                let at = feature.map(|t| format!(" without {t}")).unwrap_or_default();
                format!("enumeration{at}: {query:?}({set}) = {holds}")
            }
            Evidence::Note { message } => format!("note: {message}"),
        };
        out.push_str("  ");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn predict(args: &PointArgs) -> Result<u8, CliError> {
    let (model, point) = load_point(args)?;
    let class = model.predict(&point).map_err(input)?;
    let outputs = model.per_tree_outputs(&point).map_err(input)?;
    let mut value = json!({ "class": class });
    match outputs.first() {
        Some(TreeOutput::Score(_)) => {
            value["score"] = json!(model.score(&point).map_err(input)?.to_string());
            value["trees"] = json!(outputs
                .iter()
                .map(|o| match o {
                    TreeOutput::Score(s) => s.to_string(),
                    TreeOutput::Vote(k) => k.to_string(),
                })
                .collect::<Vec<_>>());
        }
        _ => {
            value["votes"] = json!(outputs
                .iter()
                .map(|o| match o {
                    TreeOutput::Vote(k) => *k,
                    TreeOutput::Score(_) => unreachable!("forests vote"),
                })
                .collect::<Vec<_>>());
        }
    }
    println!("{value}");
    Ok(0)
}

fn explain(args: &PointArgs, kind: ExplanationKind, audit: Option<&Path>) -> Result<u8, CliError> {
    let config = RunConfig::default().from_env().map_err(input)?;
    let (model, instance) = load_instance(args)?;
    let mut r = ExplainerR::new(&model, &instance, config.explainer()).map_err(internal)?;
    let (explanation, log) = r.find(kind).map_err(internal)?;
    if let Some(path) = audit {
        let mut text = String::new();
        for answer in &log.answers {
            text.push_str(&serde_json::to_string(answer).map_err(internal)?);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    match explanation {
        Some(e) => {
            println!("{}", serde_json::to_string(&e).map_err(internal)?);
            Ok(0)
        }
        None => {
            println!("{}", json!({"kind": kind, "features": null, "reason": "the prediction cannot change"}));
            Ok(0)
        }
    }
}

fn check(args: &CheckArgs) -> Result<u8, CliError> {
    let mut config = RunConfig::default().from_env().map_err(input)?;
    config.full_scan |= args.full_scan;
    let (model, instance) = load_instance(&args.point)?;
    if !args.features.within(model.num_features()) {
        return Err(CliError::Input(format!(
            "feature set {} is not within 1..={}",
            args.features,
            model.num_features()
        )));
    }
    let witness = args.witness.as_deref().map(parse_point).transpose().map_err(input)?;
    let mut validator = Validator::new(&model, &instance, config.validator()).map_err(internal)?;
    let verdict = if args.axp {
        validator.validate_axp(&args.features)
    } else {
        validator.validate_cxp(&args.features, witness.as_deref())
    }
    .map_err(internal)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&verdict).map_err(internal)?);
    } else {
        print!("{}", describe(&verdict));
    }
    Ok(exit_for(verdict.outcome))
}

fn parse_assumptions(text: &str) -> Result<Vec<Lit>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p.parse::<i32>() {
            Ok(v) if v != 0 => Ok(Lit::from_dimacs(v)),
            _ => Err(format!("`{p}` is not a non-zero DIMACS literal")),
        })
        .collect()
}

fn check_proof_cmd(premises: &Path, proof: &Path, assume: Option<&str>) -> Result<u8, CliError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())));
    let malformed = |e: String| {
        println!("malformed: {e}");
        Ok(2)
    };
    let formula = match CnfFormula::parse_dimacs(&read(premises)?) {
        Ok(f) => f,
        Err(e) => return malformed(format!("{}: {e}", premises.display())),
    };
    let steps = match ClausalProof::parse_drat(&read(proof)?) {
        Ok(p) => p,
        Err(e) => return malformed(format!("{}: {e}", proof.display())),
    };
    let assumptions = match assume.map(parse_assumptions).transpose() {
        Ok(a) => a.unwrap_or_default(),
        Err(e) => return malformed(e),
    };
    match check_proof(&formula, &assumptions, &steps) {
        CheckOutcome::Accept => {
            println!("accept");
            Ok(0)
        }
        CheckOutcome::Reject { step, reason } => {
            println!("reject at step {step}: {reason}");
            Ok(1)
        }
    }
}

fn report_cmd(verdicts: &Path, csv: Option<&Path>, markdown: Option<&Path>) -> Result<u8, CliError> {
    let file = fs::File::open(verdicts).map_err(|e| input(format!("{}: {e}", verdicts.display())))?;
    let records = read_records(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", verdicts.display())))?;
    let report = aggregate(&records);
    let md = report.to_markdown();
    if let Some(path) = csv {
        fs::write(path, report.to_csv()).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = markdown {
        fs::write(path, &md).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    print!("{md}");
    Ok(0)
}

fn encode(model_args: &ModelArgs, class: u32, fixed: Option<&FeatureSet>, point: Option<&str>) -> Result<u8, CliError> {
    let (_, model) = load_model_arg(model_args)?;
    let mut encoding = build_encoding(&model, class).map_err(input)?;
    if let (Some(fixed), Some(point)) = (fixed, point) {
        let point = parse_point(point).map_err(input)?;
        model.check_point(&point).map_err(input)?;
        let instance = Instance { point, klass: class };
        let units = encoding.abstraction.assumptions_for(&instance, fixed).map_err(input)?;
        encoding.formula.add_comment(format!("features {fixed} pinned by unit clauses"));
        for lit in units.literals {
            encoding.formula.add_clause(vec![lit]);
        }
    }
    print!("{}", encoding.formula.to_dimacs_string());
    Ok(0)
}

fn validate(args: &ValidateArgs) -> Result<u8, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).map_err(input)?,
        None => RunConfig::default(),
    }
    .from_env()
    .map_err(input)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.instances {
        config.instances = n;
    }
    let kinds: Vec<ExplanationKind> = match args.kind.as_str() {
        "both" => vec![ExplanationKind::Axp, ExplanationKind::Cxp],
        other => vec![other.parse().map_err(input)?],
    };
    let (name, model) = load_model_arg(&args.model)?;
    let dataset = match &args.data {
        Some(path) => load_csv_file(path, &model).map_err(input)?,
        None => generate_dataset(&name, &model, args.generate, config.seed),
    };
    let wanted = config.instances.min(dataset.points.len());
    let instances = sample_instances(&model, &dataset, Some(wanted), config.seed).map_err(input)?;

    let target: Box<dyn TargetExplainer> = match (&args.target, args.mutant) {
        (Some(command), _) => Box::new(ProcessEndpoint::spawn_str(command, config.timeout()).map_err(input)?),
        (None, Some(mode)) => Box::new(FaultyExplainer {
            mode,
            config: config.explainer(),
        }),
        (None, None) => unreachable!("clap requires one"),
    };
    let mut options = CampaignOptions::default();
    if let Some(out) = &args.out {
        let proofs = out.join("proofs");
        fs::create_dir_all(&proofs).map_err(|e| input(format!("{}: {e}", proofs.display())))?;
        options.proof_dir = Some(proofs);
    }
    let inputs = [CampaignInput {
        dataset: dataset.name.clone(),
        model: &model,
        instances,
    }];
    let records = run_campaign(&inputs, target.as_ref(), &kinds, &config, &options);
    let report = aggregate(&records);
    if let Some(out) = &args.out {
        let write = |file: &str, bytes: &[u8]| {
            let path = out.join(file);
            fs::write(&path, bytes).map_err(|e| input(format!("{}: {e}", path.display())))
        };
        let mut jsonl = Vec::new();
        write_records(&mut jsonl, &records).map_err(internal)?;
        write("verdicts.jsonl", &jsonl)?;
        write("report.csv", report.to_csv().as_bytes())?;
        write("report.md", report.to_markdown().as_bytes())?;
    }
    print!("{}", report.to_markdown());
    Ok(campaign_exit(&records))
}

fn campaign_exit(records: &[VerdictRecord]) -> u8 {
    let outcomes: Vec<Outcome> = records.iter().filter_map(|r| r.verdict.as_ref().map(|v| v.outcome)).collect();
    let r_side = records.iter().any(|r| r.setup_error.is_some())
        || outcomes.iter().any(|o| matches!(o, Outcome::RError | Outcome::ReasonerIssue | Outcome::Indeterminate));
    if r_side {
        2
    } else if outcomes.contains(&Outcome::TError) {
        1
    } else {
        0
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Predict(args) => predict(args),
        Command::Explain { point, kind, audit } => explain(point, *kind, audit.as_deref()),
        Command::Check(args) => check(args),
        Command::Validate(args) => validate(args),
        Command::CheckProof { premises, proof, assume } => check_proof_cmd(premises, proof, assume.as_deref()),
        Command::Report { verdicts, csv, markdown } => report_cmd(verdicts, csv.as_deref(), markdown.as_deref()),
        Command::Encode {
            model,
            class,
            fixed,
            point,
        } => encode(model, *class, fixed.as_ref(), point.as_deref()),
        Command::ServeMutant { mode } => {
            let explainer = FaultyExplainer::new(*mode);
            serve(io::stdin().lock(), io::stdout().lock(), &explainer).map_err(internal)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => {
            let _ = io::stdout().flush();
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
