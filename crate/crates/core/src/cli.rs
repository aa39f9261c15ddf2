//! Command-line front end. `run_cli` is the whole program; `main` only wires
//! it to the process streams and exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::distmodel::{flat_alternative, uniform, Histogram};
use crate::error::LabError;
use crate::exponents::{exponent_report, regime, sample_size, SampleSizeKind};
use crate::mc::{
    figure_epsilon, reproduce_figure, reproduce_intro, run_grid, x_axis, ExperimentRow, GridPoint, Tester,
    TesterChoice,
};
use crate::mgfnumeric::{depoissonize_raw, separable_log_generating, ContourSpec};
use crate::oracle::{composition_count, exact_error_rates_by, exact_mgf, ENUMERATION_CAP};
use crate::statistics::{default_beta, StatisticKind};
use crate::varianceopt::{kkt_residual_quadratic, min_nvar, nvar, quadratic_table, Target};

/// One CSV line.
pub type RunRow = ExperimentRow;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const WORKERS_ENV: &str = "UNIFORMITY_LAB_WORKERS";

pub const CSV_HEADER: &str =
    "tester,n,m,epsilon,gamma,side,trials,failures,delta_hat,ci_low,ci_high,threshold,beta,x_axis,seed";

const KNOWN_TESTERS: [&str; 9] =
    ["collisions", "squared", "tv", "raw_tv", "empty", "empty_bins", "singletons", "huber", "superlinear_tv"];

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "uniformity-lab", version, about = "Uniformity testers: experiments, exact oracles and calculators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config; CSV on stdout.
    Run {
        config: PathBuf,
    },
    /// Render a result CSV as an SVG plot.
    Plot {
        csv: PathBuf,
        out: PathBuf,
    },
    #[command(subcommand)]
    Calc(Calc),
    #[command(subcommand)]
    Oracle(OracleCmd),
    #[command(subcommand)]
    Depoissonize(DepoissonizeCmd),
    #[command(subcommand)]
    Reproduce(Reproduce),
}

#[derive(Subcommand, Debug)]
enum Calc {
    /// Sample size for target error probabilities.
    Samplesize {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        /// Sets both error probabilities.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        delta_minus: Option<f64>,
        #[arg(long)]
        delta_plus: Option<f64>,
        #[arg(long, default_value = "huber")]
        kind: String,
    },
    /// Normalized variance of the quadratic statistic and the optimum.
    Nvar {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value = "qbar")]
        target: String,
    },
    /// Error exponents at the default threshold.
    Exponent {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
    },
    /// Default Huber β.
    Beta {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long = "K", default_value_t = 2.0)]
        k: f64,
    },
    /// Regime label and applicability flags.
    Regime {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
}

#[derive(Args, Debug)]
struct TesterArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    beta: Option<f64>,
    /// Threshold on the rescaled scale.
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum OracleCmd {
    /// Exact (δ₋, δ₊) by enumerating histograms.
    ErrorRates {
        #[command(flatten)]
        tester: TesterArgs,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
    },
}

#[derive(Subcommand, Debug)]
enum DepoissonizeCmd {
    /// Contour-integral MGF against node doubling and, when feasible, enumeration.
    Check {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum Reproduce {
    /// m = n = 10⁴, ε = 1/8: TV against collisions.
    Intro {
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// n = m with ε = 0.7·n^(−1/8.1): collisions, TV, Huber.
    Figure {
        #[arg(long, value_delimiter = ',', default_values_t = vec![200, 300, 400, 500, 600])]
        n_values: Vec<usize>,
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

/// Tester entry: a bare kind name or an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TesterEntry {
    Name(String),
    Full(TesterChoice),
}

impl TesterEntry {
    pub fn choice(&self) -> TesterChoice {
        match self {
            TesterEntry::Name(s) => TesterChoice::named(s),
            TesterEntry::Full(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NValues {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    /// `n = m` for each value.
    Diagonal { n_values: Vec<usize> },
    Fixed { m: usize, n: NValues },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonRule {
    Fixed { fixed: f64 },
    /// Only `"figure8.1"`: `ε = 0.7·n^{−1/8.1}`.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub testers: Vec<TesterEntry>,
    pub grid: Grid,
    pub epsilon_rule: EpsilonRule,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.testers.is_empty() {
            return bad("config: no testers".into());
        }
        for t in &self.testers {
            let k = t.choice().kind;
            if !KNOWN_TESTERS.contains(&k.as_str()) {
                return bad(format!("config: unknown tester kind '{k}'"));
            }
        }
        if self.trials == 0 {
            return bad("config: trials must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("config: workers must be at least 1".into());
        }
        if let EpsilonRule::Named(s) = &self.epsilon_rule {
            if s != "figure8.1" {
                return bad(format!("config: unknown epsilon rule '{s}'"));
            }
        }
        if self.grid_points().is_empty() {
            return bad("config: empty grid".into());
        }
        Ok(())
    }

    pub fn grid_points(&self) -> Vec<GridPoint> {
        let pairs: Vec<(usize, usize)> = match &self.grid {
            Grid::Diagonal { n_values } => n_values.iter().map(|&n| (n, n)).collect(),
            Grid::Fixed { m, n: NValues::One(n) } => vec![(*n, *m)],
            Grid::Fixed { m, n: NValues::Many(ns) } => ns.iter().map(|&n| (n, *m)).collect(),
        };
        pairs
            .into_iter()
            .map(|(n, m)| GridPoint {
                n,
                m,
                epsilon: match &self.epsilon_rule {
                    EpsilonRule::Fixed { fixed } => *fixed,
                    EpsilonRule::Named(_) => figure_epsilon(n),
                },
            })
            .collect()
    }
}

/// `printf("%.9g")`.
pub fn fmt_g9(x: f64) -> String {
    fmt_g(x, 9)
}

pub fn fmt_g(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn rows_to_csv(rows: &[RunRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let beta = r.beta.map(fmt_g9).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tester,
            r.n,
            r.m,
            fmt_g9(r.epsilon),
            fmt_g9(r.gamma),
            r.side.as_str(),
            r.trials,
            r.failures,
            fmt_g9(r.delta_hat),
            fmt_g9(r.ci_low),
            fmt_g9(r.ci_high),
            fmt_g9(r.threshold),
            beta,
            fmt_g9(r.x_axis),
            r.seed
        );
    }
    out
}

/// One parsed CSV row, the fields the plot needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub tester: String,
    pub trials: u64,
    pub delta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub x_axis: f64,
}

pub fn parse_csv(text: &str) -> CliResult<Vec<PlotRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        None => return Err(CliError::Runtime("empty CSV".into())),
        Some(h) if h.trim() != CSV_HEADER => return Err(CliError::Runtime("CSV header does not match the schema".into())),
        Some(_) => {}
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(CliError::Runtime(format!("CSV line {}: expected 15 fields, found {}", i + 2, f.len())));
        }
        let num = |k: usize| -> CliResult<f64> {
            f[k].parse().map_err(|_| CliError::Runtime(format!("CSV line {}: bad number '{}'", i + 2, f[k])))
        };
        rows.push(PlotRow {
            tester: f[0].to_string(),
            trials: f[6].parse().map_err(|_| CliError::Runtime(format!("CSV line {}: bad trials", i + 2)))?,
            delta_hat: num(8)?,
            ci_low: num(9)?,
            ci_high: num(10)?,
            x_axis: num(13)?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("CSV has no data rows".into()));
    }
    Ok(rows)
}

struct Series {
    name: String,
    // (x, y, lo, hi, clamped)
    points: Vec<(f64, f64, f64, f64, bool)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Failure probability against `n²ε⁴/m`, one line per tester at the worse
/// of the two sides, log₁₀ y-axis with the 95% band. Zero estimates sit at
/// `1/(2·trials)` and get a circle marker.
pub fn render_svg(rows: &[PlotRow]) -> CliResult<String> {
    if rows.is_empty() {
        return Err(CliError::Runtime("nothing to plot".into()));
    }
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        let floor = 1.0 / (2.0 * r.trials.max(1) as f64);
        let clamped = r.delta_hat <= 0.0;
        let y = if clamped { floor } else { r.delta_hat };
        let pt = (r.x_axis, y, r.ci_low.max(floor).min(y), r.ci_high.max(y), clamped);
        let s = match series.iter_mut().position(|s| s.name == r.tester) {
            Some(i) => &mut series[i],
            None => {
                series.push(Series { name: r.tester.clone(), points: Vec::new() });
                series.last_mut().expect("just pushed")
            }
        };
        match s.points.iter_mut().find(|p| p.0 == pt.0) {
            Some(p) if pt.1 > p.1 => *p = pt,
            Some(_) => {}
            None => s.points.push(pt),
        }
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.2.log10());
        y1 = y1.max(p.3.log10());
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let (left, right, top, bottom) = (80.0, 620.0, 40.0, 540.0);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y.log10() - y0) / (y1 - y0) * (bottom - top);

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" height=\"600\" font-family=\"sans-serif\" font-size=\"12\">\n");
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n");
    let _ = writeln!(
        svg,
        "<path d=\"M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(svg, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{left:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>", left - 5.0);
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">1e{d}</text>", left - 8.0, y + 4.0);
    }
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let x = sx(xv);
        let _ = writeln!(svg, "<line x1=\"{x:.2}\" y1=\"{bottom:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", bottom + 5.0);
        let _ = writeln!(svg, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", bottom + 20.0, fmt_g(xv, 4));
    }
    let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"585\" text-anchor=\"middle\">n²ε⁴/m</text>", (left + right) / 2.0);
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">failure probability</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band = String::new();
        for p in &s.points {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.3));
        }
        for p in s.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.2));
        }
        let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>", band.trim_end());
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", line.join(" "));
        for p in s.points.iter().filter(|p| p.4) {
            let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"white\" stroke=\"{color}\"/>", sx(p.0), sy(p.1));
        }
        let ly = top + 20.0 * i as f64;
        let _ = writeln!(svg, "<rect x=\"640\" y=\"{:.2}\" width=\"14\" height=\"4\" fill=\"{color}\"/>", ly - 4.0);
        let _ = writeln!(svg, "<text x=\"660\" y=\"{ly:.2}\">{}</text>", xml_escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn workers_override(default: usize) -> CliResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(CliError::Config(format!("{WORKERS_ENV}='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(default),
    }
}

fn parse_kind(kind: &str, beta: Option<f64>, n: usize, m: usize, eps: f64) -> CliResult<StatisticKind> {
    Ok(match kind {
        "collisions" => StatisticKind::Collisions,
        "squared" => StatisticKind::Squared,
        "tv" | "raw_tv" => StatisticKind::Tv,
        "empty" | "empty_bins" => StatisticKind::EmptyBins,
        "singletons" => StatisticKind::Singletons,
        "huber" => StatisticKind::Huber {
            beta: match beta {
                Some(b) => b,
                None => default_beta(n, m, eps, crate::mc::DEFAULT_BETA_K)?.0,
            },
        },
        other => return Err(CliError::Config(format!("unknown statistic kind '{other}'"))),
    })
}

fn execute(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = RunConfig::parse(&text)?;
            let workers = workers_override(cfg.workers)?;
            let choices: Vec<TesterChoice> = cfg.testers.iter().map(TesterEntry::choice).collect();
            let rows = run_grid(&choices, &cfg.grid_points(), cfg.gamma, cfg.trials, cfg.seed, workers)?;
            out.write_all(rows_to_csv(&rows).as_bytes())?;
        }
        Command::Plot { csv, out: path } => {
            let text = std::fs::read_to_string(&csv)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", csv.display())))?;
            let svg = render_svg(&parse_csv(&text)?)?;
            std::fs::write(&path, svg)?;
        }
        Command::Calc(c) => calc(c, out)?,
        Command::Oracle(OracleCmd::ErrorRates { tester: t, gamma }) => {
            let choice = TesterChoice { kind: t.kind.clone(), beta: t.beta, threshold: t.threshold, k: None };
            if !KNOWN_TESTERS.contains(&t.kind.as_str()) {
                return Err(CliError::Config(format!("unknown tester kind '{}'", t.kind)));
            }
            let tester: Tester = choice.build(t.n, t.m, t.eps)?;
            let count = composition_count(t.n, t.m, ENUMERATION_CAP);
            if count > ENUMERATION_CAP {
                return Err(LabError::TooLarge(format!("more than {ENUMERATION_CAP} histograms")).into());
            }
            let p = uniform(t.m)?;
            let q = flat_alternative(t.m, t.eps, gamma)?.to_vector();
            let (dm, dp) = exact_error_rates_by(&p, &q, t.n, |h: &Histogram| tester.decide(h))?;
            writeln!(out, "delta_minus {}", fmt_g9(dm))?;
            writeln!(out, "delta_plus {}", fmt_g9(dp))?;
            writeln!(out, "threshold {}", fmt_g9(tester.threshold()))?;
        }
        Command::Depoissonize(DepoissonizeCmd::Check { kind, n, m, eps, theta, beta, nodes }) => {
            let k = parse_kind(&kind, beta, n, m, eps)?;
            let mut spec = ContourSpec::default_for(n);
            if let Some(nodes) = nodes {
                spec = ContourSpec::new(spec.lambda0, nodes)?;
            }
            let p = uniform(m)?;
            let once = depoissonize_raw(separable_log_generating(&k, theta, &p, n, m, eps)?, n, &spec);
            let doubled = ContourSpec { nodes: 2 * spec.nodes, ..spec };
            let twice = depoissonize_raw(separable_log_generating(&k, theta, &p, n, m, eps)?, n, &doubled);
            writeln!(out, "nodes {} value {}", spec.nodes, fmt_g(once, 15))?;
            writeln!(out, "nodes {} value {}", doubled.nodes, fmt_g(twice, 15))?;
            writeln!(out, "doubling_rel_change {}", fmt_g9(((once - twice) / twice).abs()))?;
            if composition_count(n, m, ENUMERATION_CAP) <= ENUMERATION_CAP {
                let exact = exact_mgf(&k, &p, n, m, eps, theta)?;
                writeln!(out, "exact {}", fmt_g(exact, 15))?;
                writeln!(out, "rel_error {}", fmt_g9(((twice - exact) / exact).abs()))?;
            }
        }
        Command::Reproduce(r) => {
            let rows = match r {
                Reproduce::Intro { trials, seed, workers } => reproduce_intro(trials, seed, workers_override(workers)?)?,
                Reproduce::Figure { n_values, trials, seed, workers } => {
                    reproduce_figure(&n_values, trials, seed, workers_override(workers)?)?
                }
            };
            out.write_all(rows_to_csv(&rows).as_bytes())?;
        }
    }
    Ok(())
}

fn calc(c: Calc, out: &mut dyn Write) -> CliResult<()> {
    match c {
        Calc::Samplesize { m, eps, delta, delta_minus, delta_plus, kind } => {
            let kind: SampleSizeKind = kind.parse().map_err(|e: LabError| CliError::Config(e.to_string()))?;
            let (dm, dp) = match (delta, delta_minus, delta_plus) {
                (_, Some(a), Some(b)) => (a, b),
                (Some(d), a, b) => (a.unwrap_or(d), b.unwrap_or(d)),
                _ => return Err(CliError::Config("give --delta or both --delta-minus and --delta-plus".into())),
            };
            writeln!(out, "{}", sample_size(m, eps, dm, dp, kind)?)?;
        }
        Calc::Nvar { n, m, eps, target } => {
            let target: Target = target.parse().map_err(|e: LabError| CliError::Config(e.to_string()))?;
            let quad = nvar(&quadratic_table(n), n, m, eps, target)?;
            let (_, best) = min_nvar(n, m, eps, target)?;
            writeln!(out, "nvar_quadratic {}", fmt_g9(quad))?;
            writeln!(out, "min_nvar {}", fmt_g9(best))?;
            writeln!(out, "ratio {}", fmt_g9(quad / best))?;
            writeln!(out, "kkt_residual {}", fmt_g9(kkt_residual_quadratic(n, m)?))?;
        }
        Calc::Exponent { kind, alpha, gamma } => {
            let k = parse_kind(&kind, Some(1.0), 1, 1, 1.0)?;
            let r = exponent_report(&k, alpha, gamma)?;
            writeln!(out, "tau {}", fmt_g9(r.tau))?;
            writeln!(out, "c_minus {}", fmt_g9(r.c_minus))?;
            writeln!(out, "c_plus {}", fmt_g9(r.c_plus))?;
            writeln!(out, "c {}", fmt_g9(r.c))?;
            writeln!(out, "sample_constant {}", fmt_g9(r.constant))?;
        }
        Calc::Beta { n, m, eps, k } => {
            let (beta, d) = default_beta(n, m, eps, k)?;
            writeln!(out, "beta {}", fmt_g9(beta))?;
            writeln!(out, "delta {}", fmt_g9(d.delta))?;
            writeln!(out, "delta_clamped {}", d.delta_clamped)?;
            writeln!(out, "third_moment_ok {}", d.third_moment_ok)?;
        }
        Calc::Regime { n, m, eps, delta } => {
            let r = regime(n, m, eps, delta);
            writeln!(out, "label {}", r.label.as_str())?;
            writeln!(out, "x_axis {}", fmt_g9(r.x_axis))?;
            writeln!(out, "huber_theorem_applicable {}", r.huber_theorem_applicable)?;
            writeln!(out, "collisions_window {}", r.collisions_window)?;
            writeln!(out, "paninski_fails {}", r.paninski_fails)?;
            writeln!(out, "peebles_regime {}", r.peebles_regime)?;
            debug_assert!((r.x_axis - x_axis(n, m, eps)).abs() <= 1e-9 * r.x_axis.max(1.0));
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name); returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (CliError::Config(msg) | CliError::Runtime(msg)) = &e;
            let _ = writeln!(err, "error: {msg}");
            e.code()
        }
    }
}
