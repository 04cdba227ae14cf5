//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 usage error, 3 numeric error.

use crate::crb::{
    compare_loewner, crb_from_fim, gg_crb_sigma2, gg_nuisance_info, Block, NuisancePolicy,
    ShapeKnowledge,
};
use crate::error::{Error, Result};
use crate::fim::{
    elliptical_coefficients_quadrature, elliptical_fim, gamma_fim, gg_coefficients_closed_form,
    slepian_bangs_gaussian, EllipticalCoefficients,
};
use crate::gamma::gamma_sample;
use crate::generator::{
    sample_elliptical, CompoundGaussian, DensityGenerator, Gaussian, GeneralizedGaussian,
    StudentT, Texture,
};
use crate::model::{builtin_iid_scalar, LocationScaleModel, ParameterVector};
use crate::verify::{run_verify_suite, CheckStatus, Fault};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;
use std::sync::Arc;

/// Format a float with 12 significant digits, '.' decimal, no locale.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=15).contains(&mag) {
        format!("{x:.11e}")
    } else {
        let decimals = (11 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

/// Texture mini-grammar: `point:1.0`, `two:0.5,1.5@0.5`, `invgamma:3.0`.
pub fn parse_texture(spec: &str) -> Result<Texture> {
    let bad = |msg: &str| Error::Domain(format!("texture spec '{spec}': {msg}"));
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected kind:params"))?;
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("'{s}' is not a number")))
    };
    match kind {
        "point" => Texture::point_mass(num(rest)?),
        "two" => {
            let (taus, p) = rest
                .split_once('@')
                .ok_or_else(|| bad("two-point form is two:tau1,tau2@p1"))?;
            let (t1, t2) = taus
                .split_once(',')
                .ok_or_else(|| bad("two-point form is two:tau1,tau2@p1"))?;
            Texture::two_point(num(t1)?, num(t2)?, num(p)?)
        }
        "invgamma" => Texture::inverse_gamma(num(rest)?),
        other => Err(bad(&format!("unknown kind '{other}'"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Gg,
    StudentT,
    CompoundGaussian,
    Gamma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "crb",
    about = "Fisher information and Cramér-Rao bounds for elliptical and Gamma models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the elliptical coefficients (a0, a1, a2) for a family.
    Coeffs(CoeffsArgs),
    /// Compute FIM and CRB blocks for a model, with the Gaussian reference.
    Crb(CrbArgs),
    /// Sweep the generalized Gaussian shape s and tabulate CRB(sigma^2).
    SweepS(SweepArgs),
    /// Run the verification battery; exit 0 iff every check passes.
    Verify(VerifyArgs),
    /// Draw observations and write them as CSV.
    Sample(SampleArgs),
}

#[derive(Parser, Debug)]
struct FamilyArgs {
    /// Distribution family.
    #[arg(long, value_enum)]
    family: Family,
    /// Dimension (elliptical families) or observation count (gamma).
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Generalized Gaussian exponent s.
    #[arg(long)]
    s: Option<f64>,
    /// Student-t degrees of freedom (> 2).
    #[arg(long)]
    nu: Option<f64>,
    /// Compound-Gaussian texture: point:V | two:T1,T2@P | invgamma:NU.
    #[arg(long)]
    texture: Option<String>,
}

impl FamilyArgs {
    fn generator(&self) -> Result<Arc<dyn DensityGenerator>> {
        let need = |opt: Option<f64>, flag: &str| {
            opt.ok_or_else(|| Error::Domain(format!("--{flag} is required for this family")))
        };
        Ok(match self.family {
            Family::Gaussian => Arc::new(Gaussian::new(self.n)),
            Family::Gg => Arc::new(GeneralizedGaussian::new(self.n, need(self.s, "s")?)?),
            Family::StudentT => Arc::new(StudentT::new(self.n, need(self.nu, "nu")?)?),
            Family::CompoundGaussian => {
                let spec = self
                    .texture
                    .as_deref()
                    .ok_or_else(|| Error::Domain("--texture is required for this family".into()))?;
                Arc::new(CompoundGaussian::new(self.n, parse_texture(spec)?)?)
            }
            Family::Gamma => {
                return Err(Error::Domain(
                    "the gamma family is not elliptical; this command needs an elliptical family"
                        .into(),
                ))
            }
        })
    }

    fn params_json(&self) -> serde_json::Value {
        json!({ "s": self.s, "nu": self.nu, "texture": self.texture })
    }
}

#[derive(Parser, Debug)]
struct CoeffsArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Parser, Debug)]
struct CrbArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Location parameter (elliptical) or Gamma mean.
    #[arg(long, default_value_t = 0.0)]
    m: f64,
    /// Scale / variance parameter sigma^2.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Number of i.i.d. observation vectors (elliptical families).
    #[arg(long, default_value_t = 1)]
    iid: usize,
    /// Treat the GG shape s as an unknown nuisance parameter.
    #[arg(long, default_value_t = false)]
    unknown_s: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Parser, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.25)]
    s_min: f64,
    #[arg(long, default_value_t = 2.0)]
    s_max: f64,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Parser, Debug)]
struct VerifyArgs {
    /// Monte Carlo sample count for the statistical checks.
    #[arg(long, default_value_t = 200_000)]
    n_samples: usize,
    /// Shortcut for --n-samples 10000.
    #[arg(long, default_value_t = false)]
    quick: bool,
    #[arg(long, default_value_t = 20240901)]
    seed: u64,
    /// Corrupt one density on purpose (supported: bad-normalization).
    #[arg(long)]
    inject_fault: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Parser, Debug)]
struct SampleArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Location parameter (elliptical) or Gamma mean.
    #[arg(long, default_value_t = 0.0)]
    m: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Number of draws (rows).
    #[arg(long, default_value_t = 1000)]
    n_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn emit(output: &Option<PathBuf>, content: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::Model(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn config_json(command: &str, fields: serde_json::Value) -> serde_json::Value {
    let mut obj = json!({ "command": command });
    if let (Some(dst), Some(src)) = (obj.as_object_mut(), fields.as_object()) {
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
    }
    obj
}

fn coeff_row(label: &str, c: &EllipticalCoefficients) -> String {
    let a0 = c.a0.map(fmt_sig).unwrap_or_else(|| "unavailable".into());
    format!("{label},{a0},{},{}\n", fmt_sig(c.a1), fmt_sig(c.a2))
}

fn cmd_coeffs(args: &CoeffsArgs) -> Result<()> {
    let gen = args.family.generator()?;
    let quad = elliptical_coefficients_quadrature(gen.as_ref())?;
    let closed = match args.family.family {
        Family::Gaussian => Some(EllipticalCoefficients::gaussian(args.family.n)),
        Family::Gg => Some(gg_coefficients_closed_form(
            args.family.n,
            args.family.s.expect("generator construction checked s"),
        )?),
        _ => None,
    };
    let config = config_json(
        "coeffs",
        json!({
            "family": args.family.family,
            "n": args.family.n,
            "params": args.family.params_json(),
            "format": args.format,
        }),
    );

    let content = match args.format {
        OutputFormat::Csv => {
            let mut out = format!("# config: {config}\n");
            out.push_str("method,a0,a1,a2\n");
            out.push_str(&coeff_row("quadrature", &quad));
            if let Some(c) = &closed {
                out.push_str(&coeff_row("closed-form", c));
                out.push_str(&format!(
                    "difference,,{},{}\n",
                    fmt_sig((quad.a1 - c.a1).abs()),
                    fmt_sig((quad.a2 - c.a2).abs())
                ));
            }
            out
        }
        OutputFormat::Json => {
            let diff = closed.as_ref().map(|c| {
                json!({ "a1": (quad.a1 - c.a1).abs(), "a2": (quad.a2 - c.a2).abs() })
            });
            serde_json::to_string_pretty(&json!({
                "config": config,
                "family": gen.family(),
                "n": args.family.n,
                "quadrature": quad,
                "closed_form": closed,
                "difference": diff,
            }))
            .expect("serializable") + "\n"
        }
    };
    emit(&args.output, &content)
}

fn crb_report_elliptical(args: &CrbArgs) -> Result<serde_json::Value> {
    let n = args.family.n;
    let gen = args.family.generator()?;
    let coeffs = match args.family.family {
        Family::Gaussian => EllipticalCoefficients::gaussian(n),
        Family::Gg => {
            // Closed form covers (a1, a2); a0 only exists by quadrature.
            let mut c = gg_coefficients_closed_form(n, args.family.s.unwrap())?;
            c.a0 = elliptical_coefficients_quadrature(gen.as_ref())?.a0;
            c
        }
        _ => elliptical_coefficients_quadrature(gen.as_ref())?,
    };
    let (mean_map, cov_map) = builtin_iid_scalar(n);
    let theta1 = [args.m];
    let theta2 = [args.sigma2];
    let per_obs = elliptical_fim(&mean_map, &cov_map, &coeffs, &theta1, &theta2)?;
    let fim = crate::fim::FimMatrix::new(args.iid as f64 * &per_obs.matrix, per_obs.blocks)?;
    let crb_m = crb_from_fim(&fim, Block::Theta1, NuisancePolicy::Schur)?;
    let crb_s2 = crb_from_fim(&fim, Block::Theta2, NuisancePolicy::Schur)?;

    let gauss_per_obs = slepian_bangs_gaussian(&mean_map, &cov_map, &theta1, &theta2)?;
    let gauss_fim =
        crate::fim::FimMatrix::new(args.iid as f64 * &gauss_per_obs.matrix, gauss_per_obs.blocks)?;
    let gauss_crb_m = crb_from_fim(&gauss_fim, Block::Theta1, NuisancePolicy::Schur)?;
    let gauss_crb_s2 = crb_from_fim(&gauss_fim, Block::Theta2, NuisancePolicy::Schur)?;
    let verdict = compare_loewner(&crb_s2, &gauss_crb_s2)?;

    let mut report = json!({
        "family": gen.family(),
        "crb_m": crb_m[(0, 0)],
        "crb_sigma2": crb_s2[(0, 0)],
        "gaussian_crb_m": gauss_crb_m[(0, 0)],
        "gaussian_crb_sigma2": gauss_crb_s2[(0, 0)],
        "verdict_vs_gaussian": verdict,
        "fim": fim.matrix.as_slice(),
    });
    if args.unknown_s {
        if args.family.family != Family::Gg {
            return Err(Error::Domain("--unknown-s applies to the gg family only".into()));
        }
        if n != 1 {
            return Err(Error::Domain("--unknown-s supports dimension n = 1 only".into()));
        }
        let unit = gg_crb_sigma2(args.iid, args.family.s.unwrap(), ShapeKnowledge::Unknown)?;
        let scaled = unit * args.sigma2 * args.sigma2;
        let info = gg_nuisance_info(args.family.s.unwrap())?;
        report["crb_sigma2_unknown_s"] = json!(scaled);
        report["a3_estimate"] = json!(info.a3);
    }
    Ok(report)
}

fn cmd_crb(args: &CrbArgs) -> Result<()> {
    let config = config_json(
        "crb",
        json!({
            "family": args.family.family,
            "n": args.family.n,
            "params": args.family.params_json(),
            "m": args.m,
            "sigma2": args.sigma2,
            "iid": args.iid,
            "unknown_s": args.unknown_s,
            "format": args.format,
        }),
    );
    let report = if args.family.family == Family::Gamma {
        let fim = gamma_fim(args.m, args.sigma2, args.family.n)?;
        let crb_m = crb_from_fim(&fim, Block::Theta1, NuisancePolicy::Schur)?;
        let crb_s2 = crb_from_fim(&fim, Block::Theta2, NuisancePolicy::Schur)?;
        let nf = args.family.n as f64;
        json!({
            "family": format!("gamma(m={}, sigma2={})", args.m, args.sigma2),
            "crb_m": crb_m[(0, 0)],
            "crb_sigma2": crb_s2[(0, 0)],
            "gaussian_crb_m": args.sigma2 / nf,
            "gaussian_crb_sigma2": 2.0 * args.sigma2 * args.sigma2 / nf,
            "fim": fim.matrix.as_slice(),
        })
    } else {
        crb_report_elliptical(args)?
    };

    let content = match args.format {
        OutputFormat::Csv => {
            let mut out = format!("# config: {config}\nquantity,value\n");
            let obj = report.as_object().expect("report is an object");
            for (k, v) in obj {
                if let Some(x) = v.as_f64() {
                    out.push_str(&format!("{k},{}\n", fmt_sig(x)));
                } else if let Some(s) = v.as_str() {
                    out.push_str(&format!("{k},{s}\n"));
                } else if k != "fim" {
                    out.push_str(&format!("{k},{v}\n"));
                }
            }
            out
        }
        OutputFormat::Json => {
            serde_json::to_string_pretty(&json!({ "config": config, "report": report }))
                .expect("serializable") + "\n"
        }
    };
    emit(&args.output, &content)
}

fn cmd_sweep_s(args: &SweepArgs) -> Result<()> {
    if args.steps < 2 {
        return Err(Error::Domain("--steps must be at least 2".into()));
    }
    if args.s_min >= args.s_max {
        return Err(Error::Domain("--s-min must be below --s-max".into()));
    }
    let config = config_json(
        "sweep-s",
        json!({ "s_min": args.s_min, "s_max": args.s_max, "steps": args.steps }),
    );
    let mut out = format!("# config: {config}\n");
    out.push_str("s,n,crb_known_s,crb_unknown_s,gaussian_level,a3_estimate\n");
    for i in 0..args.steps {
        let s = args.s_min + i as f64 * (args.s_max - args.s_min) / (args.steps - 1) as f64;
        let known = gg_crb_sigma2(1, s, ShapeKnowledge::Known)?;
        let unknown = gg_crb_sigma2(1, s, ShapeKnowledge::Unknown)?;
        let a3 = gg_nuisance_info(s)?.a3;
        out.push_str(&format!(
            "{},1,{},{},{},{}\n",
            fmt_sig(s),
            fmt_sig(known),
            fmt_sig(unknown),
            fmt_sig(2.0),
            fmt_sig(a3)
        ));
    }
    emit(&args.output, &out)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let fault = match args.inject_fault.as_deref() {
        None => Fault::None,
        Some("bad-normalization") => Fault::BadNormalization,
        Some(other) => {
            return Err(Error::Domain(format!(
                "unknown fault '{other}'; supported: bad-normalization"
            )))
        }
    };
    let n_samples = if args.quick { 10_000 } else { args.n_samples };
    let report = run_verify_suite(n_samples, args.seed, fault)?;
    let config = config_json(
        "verify",
        json!({
            "n_samples": n_samples,
            "seed": args.seed,
            "inject_fault": report.fault,
            "format": args.format,
        }),
    );
    let content = match args.format {
        OutputFormat::Csv => {
            let mut out = format!("# config: {config}\nstatus,check,detail\n");
            for c in &report.checks {
                let status = match c.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::Skipped => "SKIP",
                };
                out.push_str(&format!("{status},{},\"{}\"\n", c.name, c.detail));
            }
            let (p, f, s) = report.counts();
            out.push_str(&format!("# summary: {p} passed, {f} failed, {s} skipped\n"));
            out
        }
        OutputFormat::Json => {
            serde_json::to_string_pretty(&json!({ "config": config, "report": report }))
                .expect("serializable") + "\n"
        }
    };
    emit(&args.output, &content)?;
    Ok(report.all_passed())
}

fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let config = config_json(
        "sample",
        json!({
            "family": args.family.family,
            "n": args.family.n,
            "params": args.family.params_json(),
            "m": args.m,
            "sigma2": args.sigma2,
            "n_draws": args.n_draws,
            "seed": args.seed,
        }),
    );
    let data = if args.family.family == Family::Gamma {
        gamma_sample(args.m, args.sigma2, args.family.n, args.n_draws, args.seed)?
    } else {
        let gen = args.family.generator()?;
        let (mean_map, cov_map) = builtin_iid_scalar(args.family.n);
        let model = LocationScaleModel::new(mean_map, cov_map, gen)?;
        let theta = ParameterVector::new(vec![args.m], vec![args.sigma2], None)?;
        sample_elliptical(&model, &theta, args.n_draws, args.seed)?
    };
    let mut out = format!("# config: {config}\n");
    let header: Vec<String> = (1..=data.ncols()).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols()).map(|c| fmt_sig(data[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    emit(&args.output, &out)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) | Error::RankDeficient(_) => 3,
        _ => 2,
    }
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses 0 for --help/--version and 2 for usage errors.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Coeffs(a) => cmd_coeffs(a).map(|_| true),
        Command::Crb(a) => cmd_crb(a).map(|_| true),
        Command::SweepS(a) => cmd_sweep_s(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Sample(a) => cmd_sample(a).map(|_| true),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
