//! The `gridstat` command line.
//!
//! Exit codes: 0 on success, 1 for usage, input or parse errors, 2 when
//! `validate` finds the case inconsistent with the profile.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{collect_samples, observe, AnalysisOptions, CaseSamples, CaseSummary};
use crate::distributions::Family;
use crate::empirical_stats::{band_fraction, histogram, summarize, Binning};
use crate::error::Error;
use crate::fitting::{fit_mle, kl_divergence, FitOptions};
use crate::grid_ingest::{
    parse_branch_csv, parse_matpower_case, serialize_branch_csv, write_matpower_case, BranchRecord,
    ClassTable, DEFAULT_CLASS_TOLERANCE,
};
use crate::reference_profiles::{builtin_profile, validate, ParameterKind, Profile, ValidationThresholds};
use crate::synth_sampler::{
    generate_lines, generate_transformers_with, params_csv, to_branch_records, SyntheticBranchParams,
    TransformerOptions, DEFAULT_SYSTEM_MVA_BASE, DEFAULT_TLS_NU,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION_FAILED: i32 = 2;

const TOOLKIT: &str = "gridstat";
const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Band reported next to own-base transformer reactance in `analyze`.
const REACTANCE_BAND: (f64, f64) = (0.05, 0.2);

#[derive(Debug, Parser)]
#[command(name = "gridstat", version, about = "Transformer and transmission-line parameter statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-class summary statistics of a case.
    Analyze(ReportArgs),
    /// Fit every family to every (parameter, class) sample and rank by KL divergence.
    Fit(ReportArgs),
    /// Check a case against a reference profile.
    Validate(ValidateArgs),
    /// Sample synthetic branch parameters from a profile.
    Generate(GenerateArgs),
    /// Histogram CSV per (parameter, class).
    Hist(ReportArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// MATPOWER case file.
    #[arg(long, value_name = "PATH")]
    case: Option<PathBuf>,
    /// Canonical branch CSV.
    #[arg(long, value_name = "PATH")]
    branches: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Nominal class voltages in kV.
    #[arg(long, value_delimiter = ',', default_value = "115,138,230")]
    classes: Vec<f64>,
    /// Bin count, or `fd` for Freedman–Diaconis.
    #[arg(long, default_value = "fd", value_parser = parse_bins)]
    bins: Binning,
    /// JSON file overriding validation thresholds.
    #[arg(long, value_name = "PATH")]
    thresholds: Option<PathBuf>,
    /// Output file (directory for `hist`); stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    report: ReportArgs,
    /// Profile JSON file, or `builtin`.
    #[arg(long, default_value = "builtin")]
    profile: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenerateKind {
    Transformers,
    Lines,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenerateFormat {
    /// Parameter table.
    Params,
    /// Canonical branch CSV.
    Branches,
    /// MATPOWER case.
    Matpower,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Class voltages in kV; each further class uses the next seed.
    #[arg(long = "class", value_delimiter = ',', required = true)]
    class: Vec<f64>,
    /// Units per class.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "transformers")]
    kind: GenerateKind,
    #[arg(long, value_enum, default_value = "params")]
    format: GenerateFormat,
    /// Profile JSON file, or `builtin`.
    #[arg(long, default_value = "builtin")]
    profile: String,
    #[arg(long, default_value_t = DEFAULT_SYSTEM_MVA_BASE)]
    system_mva_base: f64,
    /// Shape of the reactance t location-scale distribution.
    #[arg(long, default_value_t = DEFAULT_TLS_NU)]
    nu: f64,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_bins(s: &str) -> std::result::Result<Binning, String> {
    if s.eq_ignore_ascii_case("fd") {
        return Ok(Binning::FreedmanDiaconis);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 2 => Ok(Binning::FixedCount(k)),
        _ => Err(format!("expected `fd` or a bin count of at least 2, got `{s}`")),
    }
}

/// A failure ready to print: the message already names the file involved.
#[derive(Debug)]
struct Failure(String);

type CliResult<T> = std::result::Result<T, Failure>;

fn at(path: &Path, err: Error) -> Failure {
    let p = path.display();
    match err {
        Error::Parse { line, message } => Failure(format!("{p}:{line}: {message}")),
        Error::UnknownBus { row, line, bus } => {
            Failure(format!("{p}:{line}: branch row {row} references unknown bus {bus}"))
        }
        other => Failure(format!("{p}: {other}")),
    }
}

fn plain(err: Error) -> Failure {
    Failure(err.to_string())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

struct Input {
    records: Vec<BranchRecord>,
    digest: String,
}

fn load_input(args: &InputArgs) -> CliResult<Input> {
    let (path, matpower) = match (&args.case, &args.branches) {
        (Some(p), _) => (p, true),
        (None, Some(p)) => (p, false),
        (None, None) => return Err(Failure("one of --case or --branches is required".into())),
    };
    let bytes = read(path)?;
    let records = if matpower {
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Failure(format!("{}: not valid UTF-8", path.display())))?;
        parse_matpower_case(&text).map_err(|e| at(path, e))?.branches
    } else {
        parse_branch_csv(bytes.as_slice()).map_err(|e| at(path, e))?
    };
    Ok(Input {
        records,
        digest: digest(&bytes),
    })
}

fn load_profile(spec: &str) -> CliResult<(Profile, String)> {
    if spec == "builtin" {
        return Ok((builtin_profile(), "builtin".into()));
    }
    let path = Path::new(spec);
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure(format!("{spec}: not valid UTF-8")))?;
    let profile = Profile::from_json(&text).map_err(|e| at(path, e))?;
    Ok((profile, digest(&bytes)))
}

fn load_thresholds(path: Option<&Path>) -> CliResult<ValidationThresholds> {
    let Some(path) = path else {
        return Ok(ValidationThresholds::default());
    };
    let bytes = read(path)?;
    let t: ValidationThresholds = serde_json::from_slice(&bytes).map_err(|e| {
        at(
            path,
            Error::Parse {
                line: e.line(),
                message: e.to_string(),
            },
        )
    })?;
    t.check().map_err(|e| at(path, e))?;
    Ok(t)
}

fn class_table(classes: &[f64]) -> CliResult<ClassTable> {
    ClassTable::from_nominals(classes, DEFAULT_CLASS_TOLERANCE).map_err(plain)
}

#[derive(Serialize)]
struct Envelope<B: Serialize> {
    toolkit: &'static str,
    version: &'static str,
    command: &'static str,
    input_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<String>,
    seed: Option<u64>,
    binning: Binning,
    thresholds: ValidationThresholds,
    kl_units: &'static str,
    body: B,
}

struct Context {
    samples: CaseSamples,
    digest: String,
    thresholds: ValidationThresholds,
    binning: Binning,
    fit: FitOptions,
}

fn prepare(args: &ReportArgs) -> CliResult<Context> {
    let classes = class_table(&args.classes)?;
    let thresholds = load_thresholds(args.thresholds.as_deref())?;
    let input = load_input(&args.input)?;
    let opts = AnalysisOptions {
        classes,
        fit: FitOptions {
            binning: args.bins,
            ..FitOptions::default()
        },
        ..AnalysisOptions::default()
    };
    let samples = collect_samples(&input.records, &opts).map_err(plain)?;
    Ok(Context {
        samples,
        digest: input.digest,
        thresholds,
        binning: args.bins,
        fit: opts.fit,
    })
}

impl Context {
    fn envelope<B: Serialize>(&self, command: &'static str, profile: Option<String>, body: B) -> Envelope<B> {
        Envelope {
            toolkit: TOOLKIT,
            version: VERSION,
            command,
            input_digest: self.digest.clone(),
            profile,
            seed: None,
            binning: self.binning,
            thresholds: self.thresholds,
            kl_units: "nats",
            body,
        }
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct AnalyzeBody {
    case: CaseSummary,
    classes: Vec<Value>,
}

fn analyze(args: &ReportArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let ctx = prepare(args)?;
    let mut classes = Vec::new();
    for class in &ctx.samples.classes {
        let mut kinds = serde_json::Map::new();
        for kind in ParameterKind::ALL {
            let values = class.values(kind);
            let entry = if values.is_empty() {
                json!({ "status": "no_data" })
            } else {
                let mut e = json!({
                    "status": "ok",
                    "summary": summarize(values).map_err(plain)?,
                });
                if kind == ParameterKind::TransformerReactanceOwnBase {
                    let f = band_fraction(values, REACTANCE_BAND.0, REACTANCE_BAND.1).map_err(plain)?;
                    e["band"] = json!({ "lo": REACTANCE_BAND.0, "hi": REACTANCE_BAND.1, "fraction": f });
                }
                e
            };
            kinds.insert(kind.to_string(), entry);
        }
        classes.push(json!({
            "class_kv": class.class_kv,
            "transformers": class.transformer_count(),
            "lines": class.line_count(),
            "parameters": kinds,
        }));
    }
    let body = AnalyzeBody {
        case: ctx.samples.summary.clone(),
        classes,
    };
    emit(args.out.as_deref(), &to_json(&ctx.envelope("analyze", None, body)), stdout)?;
    Ok(EXIT_OK)
}

fn fit(args: &ReportArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let ctx = prepare(args)?;
    let mut entries = Vec::new();
    for class in &ctx.samples.classes {
        for kind in ParameterKind::ALL {
            let values = class.values(kind);
            let mut entry = json!({ "kind": kind, "class_kv": class.class_kv, "n": values.len() });
            if values.is_empty() {
                entry["status"] = json!("no_data");
                entries.push(entry);
                continue;
            }
            let hist = match histogram(values, ctx.binning) {
                Ok(h) => h,
                Err(e) => {
                    entry["status"] = json!("skipped");
                    entry["reason"] = json!(e.to_string());
                    entries.push(entry);
                    continue;
                }
            };
            let mut ranked = Vec::new();
            let mut failures = Vec::new();
            for family in Family::ALL {
                match fit_mle(family, values, &ctx.fit) {
                    Ok(fit) => {
                        let kl = kl_divergence(&hist, &fit.dist);
                        ranked.push((fit, kl));
                    }
                    Err(e) => failures.push(json!({ "family": family, "reason": e.to_string() })),
                }
            }
            ranked.sort_by(|a, b| {
                let (fa, fb) = (a.0.dist.family(), b.0.dist.family());
                b.0.converged
                    .cmp(&a.0.converged)
                    .then(a.1.d_kl.total_cmp(&b.1.d_kl))
                    .then(fa.param_count().cmp(&fb.param_count()))
                    .then(fa.tag().cmp(fb.tag()))
            });
            let results: Vec<Value> = ranked
                .into_iter()
                .enumerate()
                .map(|(i, (fit, kl))| {
                    json!({ "rank": i + 1, "family": fit.dist.family(), "fit": fit, "kl": kl })
                })
                .collect();
            entry["status"] = json!("ok");
            entry["bins"] = json!(hist.bins());
            entry["results"] = json!(results);
            if !failures.is_empty() {
                entry["failures"] = json!(failures);
            }
            entries.push(entry);
        }
    }
    let body = json!({ "fits": entries });
    emit(args.out.as_deref(), &to_json(&ctx.envelope("fit", None, body)), stdout)?;
    Ok(EXIT_OK)
}

fn validate_cmd(args: &ValidateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let (profile, profile_id) = load_profile(&args.profile)?;
    let ctx = prepare(&args.report)?;
    let observed = observe(&ctx.samples, &profile, ctx.binning, &ctx.fit).map_err(plain)?;
    let report = validate(&observed, &profile, &ctx.thresholds).map_err(plain)?;
    let code = if report.overall_pass {
        EXIT_OK
    } else {
        EXIT_VALIDATION_FAILED
    };
    let body = json!({ "overall_pass": report.overall_pass, "findings": report.findings });
    emit(
        args.report.out.as_deref(),
        &to_json(&ctx.envelope("validate", Some(profile_id), body)),
        stdout,
    )?;
    Ok(code)
}

fn hist(args: &ReportArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<i32> {
    let ctx = prepare(args)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    }
    let mut text = String::new();
    for class in &ctx.samples.classes {
        for kind in ParameterKind::ALL {
            let values = class.values(kind);
            if values.is_empty() {
                continue;
            }
            let label = format!("{kind}_{}", class.class_kv);
            let h = match histogram(values, ctx.binning) {
                Ok(h) => h,
                Err(e) => {
                    let _ = writeln!(stderr, "note: {label} skipped: {e}");
                    continue;
                }
            };
            match &args.out {
                Some(dir) => {
                    let path = dir.join(format!("{label}.csv"));
                    fs::write(&path, h.to_csv()).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                }
                None => {
                    text.push_str(&format!("# kind={kind} class_kv={} n={}\n", class.class_kv, values.len()));
                    text.push_str(&h.to_csv());
                }
            }
        }
    }
    if args.out.is_none() {
        emit(None, &text, stdout)?;
    }
    Ok(EXIT_OK)
}

fn generate(args: &GenerateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    if args.n == 0 {
        return Err(Failure("--n must be at least 1".into()));
    }
    let (profile, _) = load_profile(&args.profile)?;
    let opts = TransformerOptions {
        system_mva_base: args.system_mva_base,
        nu: args.nu,
    };
    let mut params: Vec<SyntheticBranchParams> = Vec::new();
    for (i, &class_kv) in args.class.iter().enumerate() {
        let seed = args.seed.wrapping_add(i as u64);
        let batch = match args.kind {
            GenerateKind::Transformers => generate_transformers_with(class_kv, args.n, seed, &profile, &opts),
            GenerateKind::Lines => generate_lines(class_kv, args.n, seed, &profile),
        }
        .map_err(plain)?;
        params.extend(batch);
    }
    let text = match args.format {
        GenerateFormat::Params => params_csv(&params),
        GenerateFormat::Branches => serialize_branch_csv(&to_branch_records(&params, args.system_mva_base)),
        GenerateFormat::Matpower => write_matpower_case(
            args.system_mva_base,
            &to_branch_records(&params, args.system_mva_base),
        ),
    };
    emit(args.out.as_deref(), &text, stdout)?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a, stdout),
        Command::Fit(a) => fit(a, stdout),
        Command::Validate(a) => validate_cmd(a, stdout),
        Command::Generate(a) => generate(a, stdout),
        Command::Hist(a) => hist(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_ERROR
        }
    }
}
