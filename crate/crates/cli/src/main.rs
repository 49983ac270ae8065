//! `sbn`: fit, evaluate, and audit tree probability estimators.
//!
//! Exit codes: 0 success, 2 parse error (malformed Newick, parameter, or
//! table files), 3 validation error (inconsistent taxa, non-normalized
//! targets, enumeration caps, empty inputs). Diagnostics go to standard
//! error; results go to standard output or the requested output files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sbn_core::counting::collect_rooted_counts;
use sbn_core::enumerate::{enumerate_unrooted, unrooted_tree_count, DEFAULT_ENUM_CAP};
use sbn_core::estimators::{fit_ccd, fit_em, fit_ml_rooted, fit_sa, fit_srf};
use sbn_core::evaluation::{
    ccd_prob, ccd_prob_rooted, kl_divergence, normalization_audit_rooted,
    normalization_audit_unrooted, sbn_prob_rooted, sbn_prob_unrooted, KlDirection, KlOptions,
    KlSupport,
};
use sbn_core::fileio::{
    load_model, read_prob_table, read_prob_table_with_taxa, read_trees, rooted_sample,
    target_from_table, unrooted_sample, write_ccd_params, write_sbn_params, write_srf, FileError,
};
use sbn_core::model::{EmConfig, EmInit, FittedModel};
use sbn_core::simulation::{run_experiment, AlphaRule, ExperimentConfig, Method};
use sbn_core::taxa::TaxonSet;
use sbn_core::ParsedTree;

#[derive(Parser)]
#[command(
    name = "sbn",
    version,
    about = "Probability distributions over leaf-labeled trees: subsplit Bayesian network \
             estimators with CCD and SRF baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a tree sample file and write its parameters.
    Fit(FitArgs),
    /// Print the probability of each tree in a file under saved parameters.
    Eval(EvalArgs),
    /// KL divergence from saved parameters to a target distribution.
    Kl(KlArgs),
    /// Exhaustively sum a fitted distribution over the enumerated space.
    Audit(AuditArgs),
    /// Run the seeded simulation study and write its CSV results.
    Simulate(SimulateArgs),
    /// Enumerate all unrooted topologies on n taxa.
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    /// Maximum likelihood on rooted trees.
    SbnMl,
    /// Maximum simple-average lower bound on unrooted trees.
    SbnSa,
    /// Expectation maximization on unrooted trees (regularized if --alpha > 0).
    SbnEm,
    /// Conditional clade distribution baseline.
    Ccd,
    /// Sample relative frequencies.
    Srf,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FitMethod::SbnMl => "sbn-ml",
            FitMethod::SbnSa => "sbn-sa",
            FitMethod::SbnEm => "sbn-em",
            FitMethod::Ccd => "ccd",
            FitMethod::Srf => "srf",
        };
        f.write_str(name)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Tree sample file: one Newick per line, optional "<weight><TAB>" prefix.
    #[arg(long, short = 'i')]
    input: PathBuf,
    /// Where to write the fitted parameters.
    #[arg(long, short = 'o')]
    output: PathBuf,
    #[arg(long, short = 'm', value_enum)]
    method: FitMethod,
    /// Regularization coefficient for sbn-em.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    em_max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    em_rel_tol: f64,
    /// EM initialization: simple-average estimates or uniform over support.
    #[arg(long, value_enum, default_value_t = EmInitArg::Sa)]
    em_init: EmInitArg,
    /// Print the per-iteration log-likelihood trace (EM only).
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmInitArg {
    Sa,
    Uniform,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved parameters (sbn, ccd, or srf table).
    #[arg(long, short = 'p')]
    params: PathBuf,
    /// Trees to score, one Newick per line.
    #[arg(long, short = 't')]
    trees: PathBuf,
}

#[derive(Args)]
struct KlArgs {
    /// Target distribution: "<prob><TAB><newick>" lines summing to 1.
    #[arg(long)]
    target: PathBuf,
    /// Saved parameters (sbn, ccd, or srf table).
    #[arg(long, short = 'p')]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = DirectionArg::EstimateToTarget)]
    direction: DirectionArg,
    /// Floor for denominator probabilities (renormalized over the support).
    #[arg(long, default_value_t = 0.0)]
    epsilon_floor: f64,
    #[arg(long, value_enum, default_value_t = SupportArg::Target)]
    support: SupportArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    EstimateToTarget,
    TargetToEstimate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SupportArg {
    Target,
    Estimate,
    Union,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, short = 'p')]
    params: PathBuf,
    #[arg(long, value_enum)]
    space: SpaceArg,
    /// Enumeration cap (else $SBN_ENUM_CAP, else 10).
    #[arg(long)]
    enum_cap: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpaceArg {
    Rooted,
    Unrooted,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    n_taxa: usize,
    /// Comma-separated Dirichlet concentration values.
    #[arg(long, default_value = "0.01,0.05,0.1,0.2")]
    betas: String,
    /// Comma-separated sample sizes K.
    #[arg(long, default_value = "250,1000,4000,16000")]
    sample_sizes: String,
    /// Comma-separated subset of srf,ccd,sbn-sa,sbn-em,sbn-em-alpha.
    #[arg(long, default_value = "srf,ccd,sbn-sa,sbn-em,sbn-em-alpha")]
    methods: String,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// "50-over-k" or a fixed value for the sbn-em-alpha coefficient.
    #[arg(long, default_value = "50-over-k")]
    alpha_rule: String,
    /// Result CSV path (standard output if omitted).
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// Optional per-cell summary CSV (mean and standard deviation).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Record measured fit wall times in the CSV instead of zeros.
    /// Timing makes output bytes run-dependent; everything else is a pure
    /// function of the configuration.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    enum_cap: Option<usize>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Number of taxa (named t1..tn).
    #[arg(long, short = 'n')]
    n: usize,
    /// Print only the number of topologies.
    #[arg(long)]
    count_only: bool,
    #[arg(long)]
    enum_cap: Option<usize>,
}

enum CliError {
    Parse(String),
    Validation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
        }
    }

    fn validation(e: impl fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) | CliError::Validation(m) => f.write_str(m),
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        match &e {
            FileError::Parse { .. } => CliError::Parse(e.to_string()),
            FileError::Validation(_) => CliError::Validation(e.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn same_name_set(a: &TaxonSet, b: &TaxonSet) -> bool {
    let mut x: Vec<&str> = a.names().iter().map(String::as_str).collect();
    let mut y: Vec<&str> = b.names().iter().map(String::as_str).collect();
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

/// Reads a tree sample against a model's taxa. A tree file over a different
/// taxon set is a validation error (exit 3), not a parse error; when the
/// sets agree the model's taxon order is authoritative.
fn read_trees_for_model(
    text: &str,
    model_taxa: &std::sync::Arc<TaxonSet>,
) -> Result<Vec<(ParsedTree, f64)>, CliError> {
    let (taxa, records) = read_trees(text)?;
    if !same_name_set(&taxa, model_taxa) {
        return Err(CliError::Validation(format!(
            "tree taxa {{{taxa}}} do not match parameter taxa {{{model_taxa}}}"
        )));
    }
    if *taxa == **model_taxa {
        Ok(records)
    } else {
        Ok(sbn_core::fileio::read_trees_with_taxa(text, model_taxa)?)
    }
}

fn resolve_cap(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(cap) = flag {
        return Ok(cap);
    }
    match std::env::var("SBN_ENUM_CAP") {
        Ok(s) => s.trim().parse().map_err(|_| {
            CliError::Validation(format!("SBN_ENUM_CAP must be an integer, got {s:?}"))
        }),
        Err(_) => Ok(DEFAULT_ENUM_CAP),
    }
}

fn fmt_count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 9e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.16e}")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Kl(args) => cmd_kl(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Enumerate(args) => cmd_enumerate(args),
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let text = read_file(&args.input)?;
    let (_, records) = read_trees(&text)?;
    let k: f64 = records.iter().map(|(_, w)| w).sum();
    println!("method={}", args.method);
    println!("K={}", fmt_count(k));

    let output = match args.method {
        FitMethod::SbnMl => {
            let rooted = rooted_sample(records)?;
            let refs: Vec<_> = rooted.iter().map(|(t, w)| (t, *w)).collect();
            let counts = collect_rooted_counts(&refs).map_err(CliError::validation)?;
            let params = fit_ml_rooted(&counts).map_err(CliError::validation)?;
            println!("root_splits={}", params.n_root_splits());
            println!("pcsps={}", params.n_pcsps());
            write_sbn_params(&params)
        }
        FitMethod::SbnSa => {
            let trees = unrooted_sample(records)?;
            let refs: Vec<_> = trees.iter().map(|(t, w)| (t, *w)).collect();
            let params = fit_sa(&refs).map_err(CliError::validation)?;
            println!("root_splits={}", params.n_root_splits());
            println!("pcsps={}", params.n_pcsps());
            write_sbn_params(&params)
        }
        FitMethod::SbnEm => {
            let trees = unrooted_sample(records)?;
            let refs: Vec<_> = trees.iter().map(|(t, w)| (t, *w)).collect();
            if args.alpha < 0.0 {
                return Err(CliError::Validation("--alpha must be nonnegative".into()));
            }
            let cfg = EmConfig {
                alpha: args.alpha,
                max_iters: args.em_max_iters,
                rel_tol: args.em_rel_tol,
                init: match args.em_init {
                    EmInitArg::Sa => EmInit::SimpleAverage,
                    EmInitArg::Uniform => EmInit::UniformObserved,
                },
            };
            let (params, diag) = fit_em(&refs, &cfg).map_err(CliError::validation)?;
            println!("root_splits={}", params.n_root_splits());
            println!("pcsps={}", params.n_pcsps());
            println!("iterations={}", diag.iterations);
            println!("zero_support_trees={}", diag.zero_support_trees);
            if args.trace {
                for (i, ll) in diag.log_likelihoods.iter().enumerate() {
                    println!("loglik[{i}]={ll}");
                }
            }
            write_sbn_params(&params)
        }
        FitMethod::Ccd => {
            let trees = unrooted_sample(records)?;
            let refs: Vec<_> = trees.iter().map(|(t, w)| (t, *w)).collect();
            let params = fit_ccd(&refs).map_err(CliError::validation)?;
            println!("clades={}", params.n_clades());
            println!("splits={}", params.n_splits());
            write_ccd_params(&params)
        }
        FitMethod::Srf => {
            let trees = unrooted_sample(records)?;
            let refs: Vec<_> = trees.iter().map(|(t, w)| (t, *w)).collect();
            let params = fit_srf(&refs).map_err(CliError::validation)?;
            println!("unique_trees={}", params.n_trees());
            write_srf(&params)
        }
    };
    write_file(&args.output, &output)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let model = load_model(&read_file(&args.params)?)?;
    let text = read_file(&args.trees)?;
    let records = read_trees_for_model(&text, model.taxa())?;
    for (tree, _) in records {
        let (prob, newick) = match (&model, tree) {
            (FittedModel::Sbn(p), ParsedTree::Rooted(t)) => (
                sbn_prob_rooted(p, &t).map_err(CliError::validation)?,
                t.write_newick(),
            ),
            (FittedModel::Sbn(p), ParsedTree::Unrooted(t)) => (
                sbn_prob_unrooted(p, &t).map_err(CliError::validation)?,
                t.write_newick(),
            ),
            (FittedModel::Ccd(p), ParsedTree::Rooted(t)) => (
                ccd_prob_rooted(p, &t).map_err(CliError::validation)?,
                t.write_newick(),
            ),
            (FittedModel::Ccd(p), ParsedTree::Unrooted(t)) => (
                ccd_prob(p, &t).map_err(CliError::validation)?,
                t.write_newick(),
            ),
            (FittedModel::Srf(p), tree) => {
                let u = tree.into_unrooted().map_err(CliError::validation)?;
                (p.prob(&u.tree_id()), u.write_newick())
            }
        };
        println!("{}\t{}", fmt_prob(prob), newick);
    }
    Ok(())
}

fn cmd_kl(args: KlArgs) -> Result<(), CliError> {
    let model = load_model(&read_file(&args.params)?)?;
    let text = read_file(&args.target)?;
    let (taxa, records) = read_prob_table(&text)?;
    if !same_name_set(&taxa, model.taxa()) {
        return Err(CliError::Validation(format!(
            "target taxa {{{taxa}}} do not match parameter taxa {{{}}}",
            model.taxa()
        )));
    }
    let records = if *taxa == **model.taxa() {
        records
    } else {
        read_prob_table_with_taxa(&text, model.taxa())?
    };
    let target = target_from_table(records, 1e-6)?;
    let opts = KlOptions {
        direction: match args.direction {
            DirectionArg::EstimateToTarget => KlDirection::EstimateToTarget,
            DirectionArg::TargetToEstimate => KlDirection::TargetToEstimate,
        },
        epsilon_floor: args.epsilon_floor,
        support: match args.support {
            SupportArg::Target => KlSupport::Target,
            SupportArg::Estimate => KlSupport::Estimate,
            SupportArg::Union => KlSupport::Union,
        },
    };
    let kl = kl_divergence(&target, &model, &opts).map_err(CliError::validation)?;
    println!("{kl}");
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), CliError> {
    let model = load_model(&read_file(&args.params)?)?;
    let cap = resolve_cap(args.enum_cap)?;
    let total = match (args.space, &model) {
        (SpaceArg::Rooted, FittedModel::Sbn(p)) => {
            normalization_audit_rooted(p, cap).map_err(CliError::validation)?
        }
        (SpaceArg::Rooted, _) => {
            return Err(CliError::Validation(format!(
                "rooted-space audit applies to sbn parameters, not {}",
                model.kind()
            )))
        }
        (SpaceArg::Unrooted, m) => {
            normalization_audit_unrooted(m, cap).map_err(CliError::validation)?
        }
    };
    println!("{total}");
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Validation(format!("bad {what} value {s:?} in list")))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let methods = args
        .methods
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            Method::parse(s).ok_or_else(|| CliError::Validation(format!("unknown method {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let alpha_rule = if args.alpha_rule == "50-over-k" {
        AlphaRule::FiftyOverK
    } else {
        let a: f64 = args.alpha_rule.parse().map_err(|_| {
            CliError::Validation(format!(
                "--alpha-rule must be \"50-over-k\" or a number, got {:?}",
                args.alpha_rule
            ))
        })?;
        AlphaRule::Fixed(a)
    };
    let cfg = ExperimentConfig {
        n_taxa: args.n_taxa,
        betas: parse_list("beta", &args.betas)?,
        sample_sizes: parse_list("sample size", &args.sample_sizes)?,
        methods,
        replicates: args.replicates,
        seed: args.seed,
        alpha_rule,
        enum_cap: resolve_cap(args.enum_cap)?,
    };
    let table = run_experiment(&cfg).map_err(CliError::validation)?;
    for failure in &table.failures {
        eprintln!("warning: {failure}");
    }
    let mut csv = Vec::new();
    table
        .write_csv(&mut csv, args.timing)
        .map_err(CliError::validation)?;
    match &args.output {
        Some(path) => write_file(path, &String::from_utf8(csv).expect("csv is utf-8"))?,
        None => print!("{}", String::from_utf8(csv).expect("csv is utf-8")),
    }
    if let Some(path) = &args.summary {
        let mut csv = Vec::new();
        table
            .write_summary_csv(&mut csv, args.timing)
            .map_err(CliError::validation)?;
        write_file(path, &String::from_utf8(csv).expect("csv is utf-8"))?;
    }
    Ok(())
}

fn cmd_enumerate(args: EnumerateArgs) -> Result<(), CliError> {
    let cap = resolve_cap(args.enum_cap)?;
    let taxa = TaxonSet::numbered(args.n);
    if args.count_only {
        // Run the same range checks the stream applies.
        if let Err(e) = enumerate_unrooted(&taxa, cap) {
            return Err(CliError::validation(e));
        }
        let count = unrooted_tree_count(args.n)
            .ok_or_else(|| CliError::Validation("tree count overflows".into()))?;
        println!("{count}");
        return Ok(());
    }
    for tree in enumerate_unrooted(&taxa, cap).map_err(CliError::validation)? {
        println!("{}", tree.write_newick());
    }
    Ok(())
}
