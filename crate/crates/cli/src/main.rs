use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Matrix5;
use serde_json::Value;

use normalflat::expr::parse_expr;
use normalflat::families::Source;
use normalflat::frames::compatibility_defect;
use normalflat::gcr::{
    curvature_defect, default_tolerance, dependence_report, detect_parallel_normal, env_tolerance, minors_norm,
    normal_flatness_defect, residuals, second_form_norm, Tolerances, Variant,
};
use normalflat::grid::{FieldGrid, FieldKind, GridSpec};
use normalflat::integrator::{
    auto_frame0, integrate_frame, mesh_from_csv, mesh_to_csv, mesh_to_obj, reconstruct_coefficients,
    IntegrateOptions,
};
use normalflat::io::{
    coefficients_from_file, coefficients_to_file, mesh_from_file, mesh_to_file, FamilyDescriptor, FieldFile,
    MetricSummary, Report,
};
use normalflat::riccati::{solve_riccati, RiccatiForms, RiccatiOptions};
use normalflat::spaceform::{CaseId, CaseSpec};
use normalflat::Error;

#[derive(Parser)]
#[command(name = "normalflat", version, about = "Surfaces with flat normal connection in 4-dimensional space forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structure equations for a coefficient file.
    Verify {
        #[arg(long)]
        coeffs: PathBuf,
        #[command(flatten)]
        case: CaseArgs,
        /// Pass threshold; defaults to NORMALFLAT_TOL or 10 h² (1 + scale).
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Build a coefficient set from a family descriptor.
    Construct {
        /// product, phi, notld or light; overrides the descriptor.
        #[arg(long)]
        family: Option<String>,
        #[command(flatten)]
        case: OptionalCaseArgs,
        /// JSON descriptor with "grid" and "params" (and optionally "family", "case").
        #[arg(long)]
        params: PathBuf,
        /// Coefficient field file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the auxiliary fields (γ, k±, potentials) here.
        #[arg(long)]
        extras: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Integrate the frame system into an immersion.
    Integrate {
        #[arg(long)]
        coeffs: PathBuf,
        #[command(flatten)]
        case: CaseArgs,
        /// "auto" or a JSON file holding the five frame columns.
        #[arg(long, default_value = "auto")]
        frame0: String,
        /// Mesh output; the format follows the extension (.csv, .obj, otherwise JSON field file).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        project_quadric: bool,
        /// Ambient axes (1-based) projected to the OBJ vertices.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        axes: Vec<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Recover coefficients from a sampled immersion.
    Reconstruct {
        /// Mesh as a JSON field file (x1, x2, …) or CSV.
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Decide whether a parallel normal vector field exists.
    Detect {
        #[arg(long)]
        coeffs: PathBuf,
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, value_enum, default_value_t = DetectVariant::Auto)]
        variant: DetectVariant,
        /// Write the normal field components (c1, c2) here when one exists.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Solve the angle system dt = ω₀ + tω₁ + t²ω₂.
    Riccati {
        /// Expression in u, v, or FILE.json[:FIELD] (field defaults to f_minus).
        #[arg(long)]
        fminus: String,
        /// Expression in s.
        #[arg(long)]
        xi: String,
        #[command(flatten)]
        case: CaseArgs,
        /// Form ordering for case NT: plus (ε = 1) or minus (ε = −1); auto uses --eps.
        #[arg(long, value_enum, default_value_t = RiccatiVariant::Auto)]
        variant: RiccatiVariant,
        #[arg(long)]
        t0: f64,
        /// u_min,u_max,v_min,v_max,nu,nv; required when --fminus is an expression.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Args)]
struct CaseArgs {
    /// R, NS, NT, LS or LT.
    #[arg(long)]
    case: CaseId,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    l0: f64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    eps: i8,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    delta: i8,
}

impl CaseArgs {
    fn spec(&self) -> Result<CaseSpec, Error> {
        CaseSpec::with_signs(self.case, self.l0, self.eps, self.delta)
    }
}

#[derive(Args)]
struct OptionalCaseArgs {
    #[arg(long)]
    case: Option<CaseId>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    l0: f64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    eps: i8,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    delta: i8,
}

#[derive(Args)]
struct ReportArgs {
    /// Also write the JSON report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectVariant {
    Auto,
    Rotation,
    Space,
    Time,
    Light,
}

impl From<DetectVariant> for Variant {
    fn from(v: DetectVariant) -> Self {
        match v {
            DetectVariant::Auto => Variant::Auto,
            DetectVariant::Rotation => Variant::Rotation,
            DetectVariant::Space => Variant::Space,
            DetectVariant::Time => Variant::Time,
            DetectVariant::Light => Variant::Light,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RiccatiVariant {
    Auto,
    Plus,
    Minus,
}

/// Successful run: the report and whether every verification passed.
struct Outcome {
    report: Report,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let report_path = match &cli.command {
        Command::Verify { report, .. }
        | Command::Construct { report, .. }
        | Command::Integrate { report, .. }
        | Command::Reconstruct { report, .. }
        | Command::Detect { report, .. }
        | Command::Riccati { report, .. } => report.report.clone(),
    };
    let outcome = run(cli.command).and_then(|o| {
        let json = o.report.to_json()?;
        if let Some(p) = &report_path {
            std::fs::write(p, &json)?;
        }
        match writeln!(std::io::stdout().lock(), "{json}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(o.passed),
        }
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ (Error::Residual { .. } | Error::NonIntegrable { .. })) => {
            eprintln!("normalflat: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("normalflat: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Verify { coeffs, case, tol, .. } => verify(&coeffs, case.spec()?, tol),
        Command::Construct { family, case, params, out, extras, .. } => {
            let case = case.case.map(|c| CaseSpec::with_signs(c, case.l0, case.eps, case.delta)).transpose()?;
            construct(family.as_deref(), case, &params, &out, extras.as_deref())
        }
        Command::Integrate { coeffs, case, frame0, out, project_quadric, axes, .. } => {
            integrate(&coeffs, case.spec()?, &frame0, &out, project_quadric, &axes)
        }
        Command::Reconstruct { mesh, case, out, .. } => reconstruct(&mesh, case.spec()?, &out),
        Command::Detect { coeffs, case, variant, out, .. } => detect(&coeffs, case.spec()?, variant.into(), out.as_deref()),
        Command::Riccati { fminus, xi, case, variant, t0, grid, out, .. } => {
            let mut case = case.spec()?;
            match variant {
                RiccatiVariant::Auto => {}
                RiccatiVariant::Plus => case.eps = 1,
                RiccatiVariant::Minus => case.eps = -1,
            }
            riccati(&fminus, &xi, case, t0, grid.as_deref(), &out)
        }
    }
}

fn verify(path: &Path, case: CaseSpec, tol: Option<f64>) -> Result<Outcome, Error> {
    let coeffs = coefficients_from_file(&FieldFile::load(path)?)?;
    let spec = *coeffs.spec();
    let tol = tol.or_else(env_tolerance).unwrap_or_else(|| default_tolerance(&spec, coeffs.scale()));
    let res = residuals(&coeffs, &case);
    let compat = compatibility_defect(&coeffs, &case);
    let mut report = Report::new(case, spec);
    report.metric("gauss", MetricSummary::of(&res.gauss));
    for (l, c) in res.codazzi.iter().enumerate() {
        report.metric(&format!("codazzi{}", l + 1), MetricSummary::of(c));
    }
    report.metric("ricci", MetricSummary::of(&res.ricci));
    report.metric("compatibility", MetricSummary::of(&compat));
    report.metric("flatness", MetricSummary::of(&normal_flatness_defect(&coeffs)));
    report.metric("k_minus_l0", MetricSummary::of(&curvature_defect(&coeffs, &case)));
    report.metric("minors", MetricSummary::of(&minors_norm(&coeffs)));
    let passed = res.max_abs() <= tol && compat.max_abs() <= tol;
    report.verdict("tolerance", tol);
    report.verdict("structure_equations", if passed { "pass" } else { "fail" });
    match dependence_report(&coeffs, &case, Variant::Auto, tol) {
        Ok(ld) => {
            report.verdict("dependence_variant", serde_json::to_value(ld.variant)?);
            report.verdict("dependence", if ld.satisfied { "satisfied" } else { "not-satisfied" });
        }
        Err(e) => report.verdict("dependence", format!("error: {e}")),
    }
    match detect_parallel_normal(&coeffs, &case, Variant::Auto, Tolerances::uniform(tol)) {
        Ok(d) => report.verdict("parallel_normal", d.verdict.as_str()),
        Err(e) => report.verdict("parallel_normal", format!("error: {e}")),
    }
    Ok(Outcome { report, passed })
}

fn construct(
    family: Option<&str>,
    case: Option<CaseSpec>,
    params: &Path,
    out: &Path,
    extras: Option<&Path>,
) -> Result<Outcome, Error> {
    let (desc, base) = FamilyDescriptor::load(params)?;
    let fam = desc.build(family, case, &base)?;
    coefficients_to_file(&fam.coeffs).save(out)?;
    if let Some(path) = extras {
        let complex = fam.extras.values().any(|f| f.kind() == FieldKind::Complex);
        let mut file = FieldFile::new(*fam.coeffs.spec(), if complex { FieldKind::Complex } else { FieldKind::Real });
        for (name, f) in &fam.extras {
            file.insert(name, f.clone())?;
        }
        file.save(path)?;
    }
    let mut report = Report::new(fam.case, *fam.coeffs.spec());
    for (name, value) in &fam.certificate.metrics {
        report.metric(name, MetricSummary::scalar(*value));
    }
    report.verdict("tolerance", fam.certificate.tol);
    report.verdict("certificate", if fam.certificate.passed { "pass" } else { "fail" });
    for (name, flag) in &fam.certificate.flags {
        report.verdict(name, *flag);
    }
    Ok(Outcome { report, passed: fam.certificate.passed })
}

fn integrate(
    path: &Path,
    case: CaseSpec,
    frame0: &str,
    out: &Path,
    project_quadric: bool,
    axes: &[usize],
) -> Result<Outcome, Error> {
    let coeffs = coefficients_from_file(&FieldFile::load(path)?)?;
    let frame0 = if frame0 == "auto" { auto_frame0(&coeffs, &case) } else { read_frame(Path::new(frame0))? };
    let options = IntegrateOptions { project_quadric, path_diagnostic: true };
    let (field, drift) = integrate_frame(&coeffs, &case, &frame0, options)?;
    let mesh = field.mesh();
    match extension(out).as_deref() {
        Some("csv") => std::fs::write(out, mesh_to_csv(&mesh))?,
        Some("obj") => {
            let axes = one_based_axes(axes)?;
            std::fs::write(out, mesh_to_obj(&mesh, axes)?)?
        }
        _ => mesh_to_file(&mesh).save(out)?,
    }
    let mut report = Report::new(case, *coeffs.spec());
    report.metric("gram_drift", MetricSummary::scalar(drift.gram_drift));
    report.metric("quadric_drift", MetricSummary::scalar(drift.quadric_drift));
    report.metric("compatibility", MetricSummary::scalar(drift.compatibility_max));
    if let Some(d) = drift.path_defect {
        report.metric("path_defect", MetricSummary::scalar(d));
    }
    report.verdict("warning", drift.warning.map_or(Value::Null, Value::from));
    Ok(Outcome { report, passed: true })
}

fn reconstruct(path: &Path, case: CaseSpec, out: &Path) -> Result<Outcome, Error> {
    let mesh = match extension(path).as_deref() {
        Some("csv") => mesh_from_csv(&std::fs::read_to_string(path)?)?,
        _ => mesh_from_file(&FieldFile::load(path)?)?,
    };
    let (coeffs, gauge) = reconstruct_coefficients(&mesh, &case, None)?;
    coefficients_to_file(&coeffs).save(out)?;
    let mut report = Report::new(case, mesh.spec);
    report.metric("conformality", MetricSummary::scalar(gauge.conformality_defect));
    report.metric("k_minus_l0", MetricSummary::of(&curvature_defect(&coeffs, &case)));
    report.metric("flatness", MetricSummary::of(&normal_flatness_defect(&coeffs)));
    report.metric("minors", MetricSummary::of(&minors_norm(&coeffs)));
    report.metric("second_form_norm", MetricSummary::of(&second_form_norm(&coeffs, &case)));
    report.verdict("conformality_tolerance", gauge.conformality_tol);
    report.verdict("base_normals", serde_json::to_value(&gauge.base_normals)?);
    Ok(Outcome { report, passed: true })
}

fn detect(path: &Path, case: CaseSpec, variant: Variant, out: Option<&Path>) -> Result<Outcome, Error> {
    let coeffs = coefficients_from_file(&FieldFile::load(path)?)?;
    let tol = Tolerances::default_for(&coeffs);
    let rep = detect_parallel_normal(&coeffs, &case, variant, tol)?;
    let mut report = Report::new(case, *coeffs.spec());
    report.metric("dependence_defect", MetricSummary::of(&rep.ld.defect));
    report.metric("constancy_defect", MetricSummary::scalar(rep.constancy_defect));
    report.metric("k_minus_l0", MetricSummary::scalar(rep.k_defect));
    report.verdict("tolerance", tol.residual);
    report.verdict("variant", serde_json::to_value(rep.ld.variant)?);
    report.verdict("dependence", if rep.ld.satisfied { "satisfied" } else { "not-satisfied" });
    report.verdict("k_equals_l0", rep.k_equals_l0);
    report.verdict("verdict", rep.verdict.as_str());
    report.verdict("reason", rep.reason.clone());
    if let (Some(path), Some(field)) = (out, &rep.field) {
        let mut file = FieldFile::new(*coeffs.spec(), FieldKind::Real);
        file.insert("c1", FieldGrid::Real(field.c1.clone()))?;
        file.insert("c2", FieldGrid::Real(field.c2.clone()))?;
        file.save(path)?;
    }
    Ok(Outcome { report, passed: true })
}

fn riccati(fminus: &str, xi: &str, case: CaseSpec, t0: f64, grid: Option<&[f64]>, out: &Path) -> Result<Outcome, Error> {
    let (source, spec) = match field_reference(fminus) {
        Some((file, name)) => {
            let loaded = FieldFile::load(Path::new(file))?;
            (Source::Field(loaded.get(name)?.clone()), loaded.spec)
        }
        None => {
            let g = grid.ok_or_else(|| Error::Config("--grid is required when --fminus is an expression".into()))?;
            if g.len() != 6 {
                return Err(Error::Config(format!("--grid needs six values, got {}", g.len())));
            }
            let count = |x: f64| {
                (x >= 0.0 && x.fract() == 0.0)
                    .then_some(x as usize)
                    .ok_or_else(|| Error::Config(format!("grid point count {x} is not a whole number")))
            };
            let spec = GridSpec::spanning((g[0], g[1]), (g[2], g[3]), count(g[4])?, count(g[5])?)?;
            (Source::parse(fminus)?, spec)
        }
    };
    let xi = parse_expr(xi)?;
    let forms = RiccatiForms::build(spec, &source, &xi, &case)?;
    let sol = solve_riccati(&forms, t0, RiccatiOptions::default())?;
    let mut file = FieldFile::new(spec, FieldKind::Real);
    file.insert("t", FieldGrid::Real(sol.t.clone()))?;
    file.save(out)?;
    let mut report = Report::new(case, spec);
    for (l, w) in forms.big_omega.iter().enumerate() {
        report.metric(&format!("Omega{l}"), MetricSummary::of(w));
    }
    report.metric("path_defect", MetricSummary::scalar(sol.path_defect));
    report.metric("residual", MetricSummary::scalar(sol.residual));
    report.verdict("obstruction", sol.obstruction.verdict.as_str());
    report.verdict("obstruction_tolerance", sol.obstruction.tol);
    Ok(Outcome { report, passed: true })
}

/// `FILE.json` or `FILE.json:FIELD`.
fn field_reference(arg: &str) -> Option<(&str, &str)> {
    if let Some((file, name)) = arg.rsplit_once(':') {
        if file.ends_with(".json") {
            return Some((file, name));
        }
    }
    arg.ends_with(".json").then_some((arg, "f_minus"))
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

fn one_based_axes(axes: &[usize]) -> Result<[usize; 3], Error> {
    match axes {
        [a, b, c] if axes.iter().all(|&x| x >= 1) => Ok([a - 1, b - 1, c - 1]),
        _ => Err(Error::Config(format!("--axes needs three 1-based indices, got {axes:?}"))),
    }
}

/// JSON array of five columns `[T₁, T₂, N₁, N₂, F]`, each of ambient length.
fn read_frame(path: &Path) -> Result<Matrix5<f64>, Error> {
    let cols: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if cols.len() != 5 || cols.iter().any(|c| c.len() > 5) {
        return Err(Error::Config("frame0 file must hold five columns of at most five entries".into()));
    }
    let mut m = Matrix5::zeros();
    for (c, col) in cols.iter().enumerate() {
        for (r, x) in col.iter().enumerate() {
            m[(r, c)] = *x;
        }
    }
    Ok(m)
}
