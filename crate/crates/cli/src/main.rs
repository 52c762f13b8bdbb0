//! `sdsm`: build posting tables, parse queries, and run efficiency
//! experiments from the command line.
//!
//! Exit status is 0 on success, 2 when arguments or inputs fail validation
//! (nothing is computed or written), and 1 when a validated run fails.
//! Every command prints a one-line banner to stderr with its resolved
//! settings, seeds included.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sdsm_core::analytics::{
    block_moments, kgram_log_size_gap, kgram_table_efficiency, kgram_transition_matrix,
    lemma1_efficiency, lemma1_efficiency_expected_log, lemma2_efficiency, rle_per_run_constant,
    rle_table_efficiency, stationary_distribution, MAX_CHAIN_K,
};
use sdsm_core::experiments::{
    code_columns, estimate_with_sizes, sweep, with_workers, write_csv, SweepRow, CSV_HEADER,
    MAX_EMPIRICAL_N,
};
use sdsm_core::*;

#[derive(Parser)]
#[command(
    name = "sdsm",
    version,
    about = "Posting-code string matching workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an i.i.d. Bernoulli(p) source as an ASCII 0/1 string.
    GenSource(GenSource),
    /// Build a posting table over a source file and dump it.
    BuildTable(BuildTable),
    /// Parse a query into codewords; optionally retrieve its matches.
    Parse(ParseCmd),
    /// Expected list sizes and first-order efficiency predictions as CSV.
    Analytic(Analytic),
    /// Monte Carlo efficiency estimate for one code, as a CSV row.
    Efficiency(Efficiency),
    /// Run a JSON-configured sweep and write CSV.
    Sweep(SweepCmd),
}

#[derive(Args)]
struct CodeArgs {
    /// kgram:<k> | rle:<M> | random:<M>,<max_len> | file:<path>
    #[arg(long)]
    code: CodeSpec,
    /// Seed for random codes.
    #[arg(long)]
    code_seed: Option<u64>,
}

#[derive(Args)]
struct GenSource {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildTable {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long, alias = "source")]
    source_file: PathBuf,
    /// circular | truncated
    #[arg(long, default_value = "circular")]
    boundary: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParseCmd {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long)]
    query: BitString,
    /// Retrieve matches against this source.
    #[arg(long, alias = "source")]
    source_file: Option<PathBuf>,
}

#[derive(Args)]
struct Analytic {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long)]
    p: f64,
    /// Query symbol probability; enables efficiency predictions.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    n: u64,
    /// Query length law for k-gram predictions: fixed:<L> | geom:<s>,<max>
    #[arg(long, default_value = "geom:0.5,64")]
    length: CountLaw,
    /// Run-count law for run-length predictions.
    #[arg(long, default_value = "geom:0.8,4")]
    runs: CountLaw,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Efficiency {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    n: u64,
    /// i.i.d. queries with this length law.
    #[arg(long, conflicts_with = "runs")]
    length: Option<CountLaw>,
    /// Run-length queries with this run-count law.
    #[arg(long)]
    runs: Option<CountLaw>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// empirical | analytic_table
    #[arg(long, default_value = "analytic_table")]
    mode: TableMode,
    /// Query seed; the empirical source uses `derive_seed(seed, 2^63 - 1)`.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flags given here override the config file.
#[derive(Args)]
struct SweepCmd {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<TableMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = std::result::Result<(), Failure>;

trait Phase<T> {
    fn usage(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for std::result::Result<T, E> {
    fn usage(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenSource(a) => gen_source(a),
        Command::BuildTable(a) => build_table(a),
        Command::Parse(a) => parse(a),
        Command::Analytic(a) => analytic(a),
        Command::Efficiency(a) => efficiency(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn banner(command: &str, settings: Value) {
    eprintln!("# sdsm {command} {settings}");
}

/// Writes to `path` through a sibling temp file and rename, or to stdout.
fn emit(path: Option<&Path>, content: &[u8]) -> anyhow::Result<()> {
    match path {
        None => {
            let mut out = io::stdout().lock();
            out.write_all(content)?;
            out.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .with_context(|| format!("cannot write in {}", dir.display()))?;
            tmp.write_all(content)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

fn check_output_dir(path: Option<&Path>) -> anyhow::Result<()> {
    if let Some(dir) = path.and_then(Path::parent) {
        if !dir.as_os_str().is_empty() && !dir.is_dir() {
            return Err(anyhow!("output directory {} does not exist", dir.display()));
        }
    }
    Ok(())
}

fn load_code(args: &CodeArgs) -> anyhow::Result<PostingCode> {
    if args.code.is_random() && args.code_seed.is_none() {
        return Err(anyhow!("{} needs --code-seed", args.code));
    }
    let code = args.code.build(args.code_seed)?;
    Ok(code)
}

fn code_settings(args: &CodeArgs) -> Value {
    json!({ "code": args.code.to_string(), "code_seed": args.code_seed })
}

fn load_source(path: &Path) -> anyhow::Result<SourceSequence> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let bits: BitString = text
        .trim()
        .parse()
        .with_context(|| format!("{} is not a 0/1 string", path.display()))?;
    Ok(SourceSequence::from_bits(bits)?)
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut base, extra) {
        a.extend(b);
    }
    base
}

fn gen_source(a: GenSource) -> CmdResult {
    let spec = SourceSpec::new(a.p, a.n, a.seed).usage()?;
    check_output_dir(a.out.as_deref()).usage()?;
    banner(
        "gen-source",
        json!({ "p": a.p, "n": a.n, "seed": a.seed, "out": a.out }),
    );
    let source = sample_source(&spec).runtime()?;
    let mut text = source.bits().to_string().into_bytes();
    text.push(b'\n');
    emit(a.out.as_deref(), &text).runtime()
}

fn build_table(a: BuildTable) -> CmdResult {
    let code = load_code(&a.code).usage()?;
    let boundary = match a.boundary.as_str() {
        "circular" => Boundary::Circular,
        "truncated" => Boundary::Truncated,
        other => return Err(Failure::Usage(anyhow!("unknown boundary `{other}`"))),
    };
    code.complete_tree().usage()?;
    let source = load_source(&a.source_file).usage()?;
    check_output_dir(a.out.as_deref()).usage()?;
    banner(
        "build-table",
        merge(
            code_settings(&a.code),
            json!({ "source_file": a.source_file, "n": source.len(), "boundary": a.boundary, "out": a.out }),
        ),
    );
    let table = PostingTable::build(&code, &source, boundary).runtime()?;
    let mut buf = Vec::new();
    table.write_dump(&mut buf).runtime()?;
    emit(a.out.as_deref(), &buf).runtime()
}

fn parse(a: ParseCmd) -> CmdResult {
    let code = load_code(&a.code).usage()?;
    let parsing = parse_query(&code, &a.query).usage()?;
    let source = a
        .source_file
        .as_deref()
        .map(load_source)
        .transpose()
        .usage()?;
    if let Some(s) = &source {
        if a.query.len() > s.len() {
            return Err(Failure::Usage(anyhow!("query is longer than the source")));
        }
    }
    banner(
        "parse",
        merge(
            code_settings(&a.code),
            json!({ "query": a.query.to_string(), "source_file": a.source_file }),
        ),
    );
    let mut out = parsing.describe(&code);
    out.push('\n');
    if let Some(source) = &source {
        let table = build_posting_table(&code, source).runtime()?;
        let matches = retrieve_matches(&table, &parsing);
        let list: Vec<String> = matches.iter().map(u32::to_string).collect();
        out.push_str(&format!(
            "cost {}\n",
            experiments::format_sig(covering_cost(&table, &parsing))
        ));
        out.push_str(&format!("matches {}\n", list.join(",")));
    }
    emit(None, out.as_bytes()).runtime()
}

fn analytic(a: Analytic) -> CmdResult {
    let code = load_code(&a.code).usage()?;
    let table = analytic_list_size(&code, a.p, a.n).usage()?;
    if let Some(q) = a.q {
        QueryModel::iid(q, a.length.clone()).validate().usage()?;
        a.runs.validate().usage()?;
    }
    check_output_dir(a.out.as_deref()).usage()?;
    banner(
        "analytic",
        merge(
            code_settings(&a.code),
            json!({
                "p": a.p, "q": a.q, "n": a.n,
                "length": a.length.to_string(), "runs": a.runs.to_string(), "out": a.out,
            }),
        ),
    );
    let run = || -> anyhow::Result<String> {
        let fmt = experiments::format_sig;
        let stationary = match code.family() {
            CodeFamily::Kgram { k } if k <= MAX_CHAIN_K => {
                Some(stationary_distribution(&kgram_transition_matrix(k, a.p)?)?)
            }
            _ => None,
        };
        let mut out = String::from(if stationary.is_some() {
            "codeword,fraction,expected_size,stationary\n"
        } else {
            "codeword,fraction,expected_size\n"
        });
        let fractions = table.fractions();
        for (c, word) in code.codewords().iter().enumerate() {
            out.push_str(&format!(
                "{word},{},{}",
                fmt(fractions[c]),
                fmt(table.sizes()[c])
            ));
            if let Some(pi) = &stationary {
                out.push_str(&format!(",{}", fmt(pi[c])));
            }
            out.push('\n');
        }
        let Some(q) = a.q else { return Ok(out) };
        let n = a.n as f64;
        let mut rows: Vec<(&str, f64)> = Vec::new();
        match code.family() {
            CodeFamily::Kgram { k } => {
                let m = block_moments(k, &a.length)?;
                let l1 = lemma1_efficiency(a.p, q, k, &a.length, TailTerm::Unconditional)?;
                let l1c = lemma1_efficiency(a.p, q, k, &a.length, TailTerm::Conditional)?;
                let l1e =
                    lemma1_efficiency_expected_log(a.p, q, k, &a.length, TailTerm::Unconditional)?;
                let gap = kgram_log_size_gap(a.p, q, k as u32);
                let exact = kgram_table_efficiency(a.p, q, k, &a.length)?;
                rows.extend([
                    (
                        "expected_kgram_list_size",
                        analytics::expected_kgram_list_size(a.p, q, k as u32),
                    ),
                    ("mean_z", m.mean_z),
                    ("prob_tail", m.prob_tail),
                    ("lemma1_dominant", l1.dominant),
                    ("lemma1_dominant_conditional", l1c.dominant),
                    ("lemma1_correction", l1.correction),
                    ("lemma1_value", l1.value_at(n)),
                    ("lemma1_value_conditional", l1c.value_at(n)),
                    ("expected_log_correction", l1e.correction),
                    ("expected_log_value", l1e.value_at(n)),
                    ("log_size_gap", gap.gap()),
                    ("table_value", exact.value_at(n)),
                ]);
            }
            CodeFamily::Rle { m } => {
                let l2 = lemma2_efficiency(a.p, q, m, &a.runs)?;
                let exact = rle_table_efficiency(a.p, q, m, &a.runs)?;
                rows.extend([
                    ("expected_runs", a.runs.mean()),
                    ("lemma2_constant", rle_per_run_constant(a.p, q, m)),
                    ("lemma2_correction", l2.correction),
                    ("lemma2_value", l2.value_at(n)),
                    ("table_dominant", exact.dominant),
                    ("table_value", exact.value_at(n)),
                ]);
            }
            _ => {}
        }
        if !rows.is_empty() {
            out.push_str("\nquantity,value\n");
            for (name, v) in rows {
                out.push_str(&format!("{name},{}\n", fmt(v)));
            }
        }
        Ok(out)
    };
    let out = run().runtime()?;
    emit(a.out.as_deref(), out.as_bytes()).runtime()
}

fn efficiency(a: Efficiency) -> CmdResult {
    let code = load_code(&a.code).usage()?;
    code.complete_tree().usage()?;
    let shape = match (&a.runs, &a.length) {
        (Some(runs), _) => QueryShape::Runlength { runs: runs.clone() },
        (None, Some(length)) => QueryShape::Iid {
            length: length.clone(),
        },
        (None, None) => QueryShape::Iid {
            length: CountLaw::default(),
        },
    };
    let query = QueryModel { shape, q: a.q };
    query.validate().usage()?;
    let source_seed = derive_seed(a.seed, (1 << 63) - 1);
    let spec = SourceSpec::new(a.p, a.n, source_seed).usage()?;
    if a.trials == 0 {
        return Err(Failure::Usage(anyhow!("--trials must be at least 1")));
    }
    if a.n < 2 {
        return Err(Failure::Usage(anyhow!("--n must be at least 2")));
    }
    if a.mode == TableMode::Empirical && a.n > MAX_EMPIRICAL_N {
        return Err(Failure::Usage(anyhow!(
            "empirical mode needs N <= {MAX_EMPIRICAL_N}"
        )));
    }
    if a.workers == Some(0) {
        return Err(Failure::Usage(anyhow!("--workers must be at least 1")));
    }
    check_output_dir(a.out.as_deref()).usage()?;
    banner(
        "efficiency",
        merge(
            code_settings(&a.code),
            json!({
                "p": a.p, "q": a.q, "n": a.n, "query": serde_json::to_value(&query.shape).unwrap_or_default(),
                "trials": a.trials, "mode": a.mode.to_string(), "seed": a.seed,
                "source_seed": source_seed, "workers": a.workers, "out": a.out,
            }),
        ),
    );
    let est = with_workers(a.workers, || -> sdsm_core::Result<EfficiencyEstimate> {
        match a.mode {
            TableMode::AnalyticTable => {
                let sizes = analytic_list_size(&code, a.p, a.n)?;
                estimate_with_sizes(&code, &sizes, a.n, &query, a.trials, a.mode, a.seed)
            }
            TableMode::Empirical => {
                estimate_efficiency(&code, &spec, &query, a.trials, a.mode, a.seed)
            }
        }
    })
    .runtime()?
    .runtime()?;
    let (code_type, m, second) = code_columns(&code);
    let row = SweepRow {
        code_type,
        m,
        k_or_maxlen: second,
        n: a.n,
        p: a.p,
        q: a.q,
        trials: est.trials,
        eta_mean: est.eta_mean,
        eta_stderr: est.eta_stderr,
        infinite_cost_trials: est.infinite_cost_trials,
        seed: a.seed,
    };
    let out = format!("{CSV_HEADER}\n{}\n", row.to_csv());
    emit(a.out.as_deref(), out.as_bytes()).runtime()
}

fn sweep_cmd(a: SweepCmd) -> CmdResult {
    let mut cfg = ExperimentConfig::load(&a.config).usage()?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(o) = a.out {
        cfg.output = Some(o);
    }
    cfg.validate().usage()?;
    if a.workers == Some(0) {
        return Err(Failure::Usage(anyhow!("--workers must be at least 1")));
    }
    check_output_dir(cfg.output.as_deref()).usage()?;
    let settings: Value = serde_json::from_str(&cfg.to_json()).unwrap_or_default();
    banner("sweep", merge(settings, json!({ "workers": a.workers })));
    let rows = with_workers(a.workers, || sweep(&cfg))
        .runtime()?
        .runtime()?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).runtime()?;
    emit(cfg.output.as_deref(), &buf).runtime()
}
