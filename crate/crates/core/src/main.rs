use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use resi::bootstrap::{BootMethod, BootSpec};
use resi::convert::{convert, EffectScale};
use resi::covariance::VcovKind;
use resi::datasets::{read_csv, ColumnKind};
use resi::estimators::{convert_statistic, StatInput, StatSource};
use resi::fit::{Family, NlsControl, NlsProblem};
use resi::formula::parse_formula;
use resi::inference::AnovaType;
use resi::pipeline::{ModelSpec, Pipeline, ResiOptions};
use resi::report::{render_forest_svg, render_json, render_text, resi, resi_pe, ForestOptions, ForestRow};
use resi::{ResiError, Result};

#[derive(Parser)]
#[command(name = "resi", version, about = "Robust effect size index (RESI) for regression models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and report RESI estimates for coefficients, terms and the whole model.
    Fit(FitArgs),
    /// Convert a single test statistic to a RESI estimate.
    Stat(StatArgs),
    /// Convert between RESI and Cohen's d, f² or R².
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Lm,
    Gaussian,
    Binomial,
    Poisson,
    Nls,
}

#[derive(Clone, Copy, ValueEnum)]
enum VcovArg {
    Hc0,
    Hc1,
    Hc2,
    Hc3,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootArg {
    Nonparametric,
    Bayes,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotTable {
    Coefficients,
    Anova,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row; `NA` and empty cells are missing.
    #[arg(long)]
    data: PathBuf,
    /// Model formula, e.g. `charges ~ region * age + sex + bmi` or `s ~ c*a^z`.
    #[arg(long)]
    formula: String,
    /// Reduced model for the overall test (default: intercept-only).
    #[arg(long)]
    reduced: Option<String>,
    /// `lm` fits ordinary least squares; `gaussian` fits the identity-link GLM.
    #[arg(long, value_enum, default_value = "lm")]
    family: FamilyArg,
    /// Parameters and start values of an nls model, e.g. `c=3,z=0.25`.
    #[arg(long)]
    nls_params: Option<String>,
    /// Covariance estimator (default: hc3; the Jacobian sandwich for nls).
    #[arg(long, value_enum)]
    vcov: Option<VcovArg>,
    #[arg(long, default_value = "2", value_parser = ["2", "3"])]
    anova_type: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    unbiased: bool,
    #[arg(long, value_enum, default_value = "nonparametric")]
    boot: BootArg,
    #[arg(long, default_value_t = 1000)]
    nboot: usize,
    /// One or more comma-separated significance levels.
    #[arg(long, default_value = "0.05", value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Write the bootstrap replicates to this CSV file.
    #[arg(long)]
    store_boot: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write an SVG forest plot to this path.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "coefficients")]
    plot_table: PlotTable,
    #[arg(long, default_value_t = 640.0)]
    plot_width: f64,
    /// Scale of the row-label font in the plot.
    #[arg(long, default_value_t = 1.0)]
    plot_label_scale: f64,
    /// Columns to treat as categorical even if numeric.
    #[arg(long, value_delimiter = ',')]
    factor: Vec<String>,
    /// Bootstrap worker threads (also capped by RESI_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatKindArg {
    #[value(name = "chisq2S")]
    ChiSq,
    #[value(name = "f2S")]
    F,
    #[value(name = "z2S")]
    Z,
    #[value(name = "z2S-alt")]
    ZAlt,
    #[value(name = "t2S")]
    T,
    #[value(name = "t2S-alt")]
    TAlt,
}

#[derive(Args)]
struct StatArgs {
    #[arg(value_enum)]
    kind: StatKindArg,
    #[arg(long, allow_hyphen_values = true)]
    value: f64,
    /// Numerator degrees of freedom (chisq2S, f2S).
    #[arg(long)]
    df: Option<usize>,
    /// Residual degrees of freedom n − m (f2S).
    #[arg(long)]
    rdf: Option<usize>,
    #[arg(long)]
    n: usize,
    /// Number of model parameters (t2S, t2S-alt).
    #[arg(short = 'm', long = "m")]
    m: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    #[value(name = "S")]
    S,
    D,
    Fsq,
    Rsq,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    from: ScaleArg,
    #[arg(long, value_enum)]
    to: ScaleArg,
    #[arg(long, allow_hyphen_values = true)]
    value: f64,
    /// Proportion of observations in one group (Cohen's d only).
    #[arg(long)]
    pi: Option<f64>,
}

fn parse_nls_params(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .map(|pair| {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| ResiError::InvalidArgument(format!("expected name=value, got `{pair}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| ResiError::InvalidArgument(format!("bad start value in `{pair}`")))?;
            Ok((name.trim().to_string(), value))
        })
        .collect()
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let hints: HashMap<String, ColumnKind> = args.factor.iter().map(|c| (c.clone(), ColumnKind::Categorical)).collect();
    let data = read_csv(&args.data, &hints)?;

    let spec = match args.family {
        FamilyArg::Nls => {
            let text = args
                .nls_params
                .as_deref()
                .ok_or_else(|| ResiError::InvalidArgument("--nls-params is required for nls".into()))?;
            let start = parse_nls_params(text)?;
            let names: Vec<String> = start.iter().map(|(k, _)| k.clone()).collect();
            ModelSpec::Nls {
                problem: NlsProblem::parse(&args.formula, &names)?,
                start,
                control: NlsControl::default(),
            }
        }
        other => {
            if args.nls_params.is_some() {
                return Err(ResiError::InvalidArgument("--nls-params applies only to --family nls".into()));
            }
            let formula = parse_formula(&args.formula)?;
            match other {
                FamilyArg::Lm => ModelSpec::Linear(formula),
                FamilyArg::Gaussian => ModelSpec::Glm(formula, Family::Gaussian),
                FamilyArg::Binomial => ModelSpec::Glm(formula, Family::Binomial),
                FamilyArg::Poisson => ModelSpec::Glm(formula, Family::Poisson),
                FamilyArg::Nls => unreachable!(),
            }
        }
    };
    let options = ResiOptions {
        vcov: args.vcov.map(|v| match v {
            VcovArg::Hc0 => VcovKind::HC0,
            VcovArg::Hc1 => VcovKind::HC1,
            VcovArg::Hc2 => VcovKind::HC2,
            VcovArg::Hc3 => VcovKind::HC3,
            VcovArg::Naive => VcovKind::Naive,
        }),
        anova_type: args.anova_type.parse::<AnovaType>()?,
        unbiased: args.unbiased,
        coefficients: true,
        anova: true,
    };
    let reduced = Pipeline::parse_reduced(&spec, args.reduced.as_deref())?;
    let reduced_is_default = args.reduced.is_none();
    let pipeline = Pipeline::new(spec, reduced, options)?;

    let report = match args.boot {
        BootArg::None => {
            if args.store_boot.is_some() {
                return Err(ResiError::InvalidArgument("--store-boot needs a bootstrap".into()));
            }
            resi_pe(&pipeline, &data, reduced_is_default)?
        }
        BootArg::Nonparametric | BootArg::Bayes => {
            let boot = BootSpec {
                method: if matches!(args.boot, BootArg::Bayes) {
                    BootMethod::Bayesian
                } else {
                    BootMethod::Nonparametric
                },
                nboot: args.nboot,
                alphas: args.alpha.clone(),
                seed: args.seed,
                store_replicates: args.store_boot.is_some(),
                threads: args.threads,
                restart_at_estimates: true,
            };
            let (report, result) = resi(&pipeline, &data, reduced_is_default, &boot)?;
            if let Some(path) = &args.store_boot {
                result.write_replicates_csv(path)?;
            }
            report
        }
    };

    if let Some(path) = &args.plot {
        let rows = match args.plot_table {
            PlotTable::Coefficients => ForestRow::from_coefficients(&report.coefficients),
            PlotTable::Anova => ForestRow::from_anova(&report.anova),
        };
        let opts = ForestOptions {
            width: args.plot_width,
            label_scale: args.plot_label_scale,
            require_ci: !report.alphas.is_empty(),
        };
        std::fs::write(path, render_forest_svg(&rows, &opts)?)?;
    }

    match args.format {
        FormatArg::Text => print!("{}", render_text(&report)),
        FormatArg::Json => println!("{}", render_json(&report)),
    }
    Ok(())
}

fn run_stat(args: &StatArgs) -> Result<()> {
    let source = match args.kind {
        StatKindArg::ChiSq => StatSource::ChiSq,
        StatKindArg::F => StatSource::F,
        StatKindArg::Z => StatSource::Z,
        StatKindArg::ZAlt => StatSource::ZAlt,
        StatKindArg::T => StatSource::T,
        StatKindArg::TAlt => StatSource::TAlt,
    };
    let s = convert_statistic(
        source,
        &StatInput {
            value: args.value,
            df: args.df,
            rdf: args.rdf,
            n: args.n,
            m: args.m,
        },
    )?;
    println!("{s}");
    Ok(())
}

fn run_convert(args: &ConvertArgs) -> Result<()> {
    let scale = |s: ScaleArg| match s {
        ScaleArg::S => EffectScale::S,
        ScaleArg::D => EffectScale::D,
        ScaleArg::Fsq => EffectScale::Fsq,
        ScaleArg::Rsq => EffectScale::Rsq,
    };
    println!("{}", convert(scale(args.from), scale(args.to), args.value, args.pi)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Stat(a) => run_stat(a),
        Command::Convert(a) => run_convert(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
