use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use noael_core::data::{BmScale, ParseOptions};
use noael_core::datasets;
use noael_core::mvdist::{mvt_cdf, CorrelationMatrix};
use noael_core::plot::plot_svg;
use noael_core::report::REPORT_SCHEMA;
use noael_core::{
    run_analysis, AnalysisConfig, Dataset, Direction, EndpointKind, Error, HcKind, Method, QmcConfig, ReportDocument,
};

#[derive(Parser)]
#[command(name = "noael", version, about = "NOAEL estimation by closed testing under order restriction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an analysis and print a report.
    Analyze(AnalyzeArgs),
    /// Render an SVG summary plot of a dataset.
    Plot(PlotArgs),
    /// List the bundled datasets.
    Datasets {
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a multivariate t (or normal) probability P(T <= upper).
    MvtCheck(MvtArgs),
    /// Print the JSON Schema of the report format.
    Schema,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// CSV file (`dose,response` or `dose,time,status`).
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Bundled dataset (see `noael datasets`).
    #[arg(long, value_name = "NAME")]
    dataset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndpointArg {
    Continuous,
    Score,
    Incidence,
}

impl From<EndpointArg> for EndpointKind {
    fn from(e: EndpointArg) -> Self {
        match e {
            EndpointArg::Continuous => EndpointKind::Continuous,
            EndpointArg::Score => EndpointKind::Score,
            EndpointArg::Incidence => EndpointKind::Incidence,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Tsv,
}

#[derive(Args)]
struct Input {
    #[command(flatten)]
    source: Source,
    /// Endpoint type of `--input`; defaults to continuous.
    #[arg(long, value_enum)]
    endpoint: Option<EndpointArg>,
    /// Dose value that marks a non-numeric control group in `--input`.
    #[arg(long, value_name = "LABEL")]
    control_label: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: Input,
    /// Defaults to ctp-pairwise, ctp-nonparametric or ctp-poly3 by endpoint.
    #[arg(long, value_parser = parse_from_str::<Method>)]
    method: Option<Method>,
    #[arg(long, default_value = "greater", value_parser = parse_from_str::<Direction>)]
    direction: Direction,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "hc3", value_parser = parse_from_str::<HcKind>)]
    hc: HcKind,
    /// Poly-k exponent.
    #[arg(long, default_value_t = 3.0)]
    k: f64,
    /// Ratio-to-control margin.
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    /// Scale of the relative-effect test.
    #[arg(long, default_value = "identity", value_parser = parse_from_str::<BmScale>)]
    rank_scale: BmScale,
    #[arg(long, default_value_t = 20230101)]
    seed: u64,
    /// Absolute error target of the multivariate t integration.
    #[arg(long, default_value_t = 1e-5)]
    qmc_error: f64,
    #[arg(long, value_enum, default_value = "json")]
    output: OutputFormat,
    /// Report unrounded numbers.
    #[arg(long)]
    full_precision: bool,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    title: Option<String>,
    /// Write the SVG here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MvtArgs {
    /// Comma-separated upper limits.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    upper: Vec<f64>,
    /// Common correlation of an equicorrelated matrix.
    #[arg(long, conflicts_with = "corr")]
    rho: Option<f64>,
    /// Full correlation matrix, row-major and comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    corr: Option<Vec<f64>>,
    /// Degrees of freedom; 0 gives the multivariate normal.
    #[arg(long, default_value_t = 0)]
    df: u32,
    #[arg(long, default_value_t = 20230101)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    qmc_error: f64,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidArgument(_) => (2, "usage"),
            Error::Data(_) | Error::Parse { .. } | Error::Csv(_) | Error::Io(_) | Error::MethodMismatch { .. } => {
                (3, "data")
            }
            Error::DimensionMismatch { .. } => (2, "usage"),
            Error::NotPositiveSemidefinite { .. } | Error::Numeric(_) | Error::Json(_) => (4, "numeric"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, kind: "io", message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, kind: "usage", message: message.into() }
}

struct Loaded {
    name: String,
    dataset: Dataset,
    sha256: Option<String>,
}

fn load(input: &Input) -> Result<Loaded, Failure> {
    if let Some(name) = &input.source.dataset {
        if input.control_label.is_some() {
            return Err(usage("--control-label applies to --input only"));
        }
        let l = datasets::load(name)?;
        if let Some(e) = input.endpoint {
            if EndpointKind::from(e) != l.dataset.kind() {
                return Err(Failure::from(Error::Data(format!(
                    "dataset {name} is a {} endpoint",
                    l.dataset.kind().as_str()
                ))));
            }
        }
        return Ok(Loaded { name: name.to_ascii_lowercase(), dataset: l.dataset, sha256: l.source_sha256 });
    }
    let path = input.source.input.as_ref().expect("clap enforces one source");
    let kind = input.endpoint.map_or(EndpointKind::Continuous, EndpointKind::from);
    let opts = ParseOptions { control_label: input.control_label.clone() };
    let l = datasets::load_checked(path, kind, &opts)?;
    Ok(Loaded { name: path.display().to_string(), dataset: l.dataset, sha256: l.source_sha256 })
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure { code: 3, kind: "io", message: format!("cannot write {}: {e}", p.display()) }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn default_method(kind: EndpointKind) -> Method {
    match kind {
        EndpointKind::Continuous => Method::CtpPairwise,
        EndpointKind::Score => Method::CtpNonparametric,
        EndpointKind::Incidence => Method::CtpPoly3,
    }
}

fn analyze(a: &AnalyzeArgs) -> Result<(), Failure> {
    let loaded = load(&a.input)?;
    let method = a.method.unwrap_or_else(|| default_method(loaded.dataset.kind()));
    let cfg = AnalysisConfig {
        alpha: a.alpha,
        direction: a.direction,
        method,
        hc: a.hc,
        qmc: QmcConfig { seed: a.seed, error_target: a.qmc_error, ..QmcConfig::default() },
        poly_k: a.k,
        ratio_margin: a.margin,
        bm_scale: a.rank_scale,
    };
    let outcome = run_analysis(&loaded.dataset, &cfg)?;
    let doc = ReportDocument::build(&outcome, &cfg, &loaded.name, loaded.sha256, a.full_precision);
    let text = match a.output {
        OutputFormat::Json => doc.to_json()?,
        OutputFormat::Tsv => doc.to_tsv(),
    };
    emit(a.out.as_ref(), &text)
}

fn plot(a: &PlotArgs) -> Result<(), Failure> {
    let loaded = load(&a.input)?;
    let title = a.title.clone().unwrap_or_else(|| loaded.name.clone());
    emit(a.out.as_ref(), &plot_svg(&loaded.dataset, &title))
}

fn list(json: bool) -> Result<(), Failure> {
    let infos = datasets::list();
    let text = if json {
        let mut s = serde_json::to_string_pretty(&infos).map_err(Error::from)?;
        s.push('\n');
        s
    } else {
        let mut s = String::new();
        for d in &infos {
            s.push_str(&format!(
                "{:<8} {:<11} n={:<4} groups={:<14} {}\n         source: {}\n",
                d.name,
                d.endpoint.as_str(),
                d.n,
                d.groups.join(","),
                d.description,
                d.provenance
            ));
        }
        if !infos.iter().any(|d| d.name == "bronch") {
            s.push_str(&format!(
                "bronch   (not installed; place it at {} or set {})\n",
                datasets::BRONCH_DEFAULT_PATH,
                datasets::BRONCH_ENV
            ));
        }
        s
    };
    emit(None, &text)
}

fn mvt_check(a: &MvtArgs) -> Result<(), Failure> {
    let m = a.upper.len();
    let corr = match (&a.corr, a.rho) {
        (Some(c), _) => CorrelationMatrix::new(m, c.clone())?,
        (None, Some(rho)) => CorrelationMatrix::equicorrelated(m, rho)?,
        (None, None) => CorrelationMatrix::identity(m),
    };
    let qmc = QmcConfig { seed: a.seed, error_target: a.qmc_error, ..QmcConfig::default() };
    let r = mvt_cdf(&a.upper, &corr, a.df, &qmc)?;
    let mut s = serde_json::to_string_pretty(&r).map_err(Error::from)?;
    s.push('\n');
    emit(None, &s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Plot(a) => plot(a),
        Command::Datasets { json } => list(*json),
        Command::MvtCheck(a) => mvt_check(a),
        Command::Schema => emit(None, REPORT_SCHEMA),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let err = serde_json::json!({ "error": { "kind": f.kind, "message": f.message } });
            eprintln!("{err}");
            ExitCode::from(f.code)
        }
    }
}
