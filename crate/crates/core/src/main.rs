//! `mechkit` command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector, Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mechkit::analysis::{self, InertiaAxes, TransmissionOutput, WorkspaceConfig};
use mechkit::closure::{validate_assumptions, AssumptionReport, ClosureSystem, SelectionMap};
use mechkit::estimation::{self, CalibrationConfig, EstimatorConfig, EstimatorState, MeasurementSet};
use mechkit::floating::{assemble, inverse_dynamics, TaskSpec};
use mechkit::io::emit::{fmt_sig17, report_line};
use mechkit::io::log::parse_measurements;
use mechkit::io::{emit_csv, emit_json, load_model, parse_json, parse_log, LogSeries, ResultTable};
use mechkit::kinematics::{forward_kinematics, FramePose};
use mechkit::model::Contact;
use mechkit::{Error, GeneralizedState, MechanismModel};

#[derive(Parser)]
#[command(name = "mechkit", version, about = "Closed-loop mechanism kinematics, dynamics and estimation")]
struct Cli {
    /// Machine-readable JSON instead of text or CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Write the result to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct StateArgs {
    /// Every DOF position, comma separated, in model DOF order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "qa")]
    state: Option<Vec<f64>>,
    /// Actuated positions; passive DOFs are solved from the loops.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    qa: Option<Vec<f64>>,
    /// Actuated rates; passive rates follow from the loops.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rates: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axes {
    World,
    Frame,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model and check the loop-closure assumptions on sampled states.
    Validate {
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Link poses and closure error.
    Fk {
        model: PathBuf,
        #[command(flatten)]
        state: StateArgs,
        /// Report a single frame.
        #[arg(long)]
        frame: Option<String>,
    },
    /// Passive rates and the mapping Jacobian.
    Dfk {
        model: PathBuf,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Reachable boundary by limit-constrained velocity sweeps.
    Workspace {
        model: PathBuf,
        /// Passive DOFs reported alongside the actuators.
        #[arg(long, value_delimiter = ',')]
        select: Option<Vec<String>>,
        /// Dense feasibility grid points per actuator axis.
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long, default_value_t = 64)]
        directions: usize,
    },
    /// Normalized manipulability over an actuator grid.
    Manipulability {
        model: PathBuf,
        #[arg(long)]
        frame: String,
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Equivalent Cartesian inertia at a frame.
    Inertia {
        model: PathBuf,
        #[arg(long)]
        frame: String,
        #[arg(long, default_value_t = analysis::DEFAULT_INERTIA_EPS)]
        eps: f64,
        #[arg(long, value_enum, default_value = "world")]
        axes: Axes,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Column-norm ratios between two `inertia --json` results.
    InertiaRatio { reference: PathBuf, test: PathBuf },
    /// Centroidal momentum matrix and momentum.
    Camm {
        model: PathBuf,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Row-norm ratios between two `camm --json` results.
    CammRatio { reference: PathBuf, test: PathBuf },
    /// Output motion and transmitted effort along an actuator sweep.
    Transmission {
        model: PathBuf,
        /// Actuated joint to sweep.
        #[arg(long)]
        actuator: String,
        /// Output joint, or a frame whose origin is tracked along `--direction`.
        #[arg(long)]
        output: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0,0")]
        direction: Vec<f64>,
        /// `lo:hi:N`; defaults to the actuator limits with 21 samples.
        #[arg(long, allow_hyphen_values = true)]
        sweep: Option<String>,
        /// Applied input effort.
        #[arg(long, default_value_t = 1.0)]
        force: f64,
    },
    /// Whole-body QP inverse dynamics per trajectory row.
    Id {
        model: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        /// Active contacts; all model contacts when omitted.
        #[arg(long, value_delimiter = ',')]
        contacts: Option<Vec<String>>,
        /// Desired base acceleration (linear then angular).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0,0,0,0,0")]
        base_acc: Vec<f64>,
    },
    /// Passive-state estimator replay over an actuator log.
    Estimate {
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1000.0)]
        beta: f64,
    },
    /// Recover the DOF vector from actuator readings and absolute encoders.
    Calibrate {
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        max_iter: usize,
    },
    /// Quasi-static contact forces and ZMP from logged actuator efforts.
    Wrench {
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Low-pass cutoff [Hz] applied to the efforts.
        #[arg(long)]
        filter: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        contacts: Option<Vec<String>>,
    },
    /// Regenerate the fixture files.
    Fixtures {
        #[arg(default_value = "fixtures")]
        dir: PathBuf,
    },
}

struct Failure {
    code: String,
    message: String,
}

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Failure { code: code.into(), message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(e.code(), e.to_string())
    }
}

impl From<mechkit::io::LogError> for Failure {
    fn from(e: mechkit::io::LogError) -> Self {
        Failure::new(e.code(), e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct ErrorReport<'a> {
    code: &'a str,
    message: &'a str,
}

fn read(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::new("io_error", format!("{}: {e}", path.display())))
}

fn model_at(path: &Path) -> Outcome<MechanismModel> {
    load_model(&read(path)?).map_err(|e| Failure::new(e.code(), format!("{}:{e}", path.display())))
}

fn log_at(path: &Path) -> Outcome<LogSeries> {
    parse_log(&read(path)?).map_err(|e| Failure::new(e.code(), format!("{}: {e}", path.display())))
}

fn dof_of(model: &MechanismModel, name: &str) -> Outcome<usize> {
    model.dof_index(name).ok_or_else(|| Failure::new("unknown_reference", format!("no joint DOF named `{name}`")))
}

fn contacts_of(model: &MechanismModel, names: &Option<Vec<String>>) -> Outcome<Vec<Contact>> {
    match names {
        None => Ok(model.contacts.clone()),
        Some(names) => names
            .iter()
            .map(|n| {
                model.contacts.iter().find(|c| &c.name == n).cloned().ok_or_else(|| Failure::new("unknown_reference", format!("no contact named `{n}`")))
            })
            .collect(),
    }
}

fn expect_len(what: &str, v: &[f64], n: usize) -> Outcome<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has {} values, expected {n}", v.len())).into());
    }
    Ok(())
}

/// Closed state with the given actuated positions and rates; base at its home pose, at rest.
fn closed_state(model: &MechanismModel, qa: &[f64], rates: Option<&[f64]>) -> Outcome<GeneralizedState> {
    let na = model.n_actuated();
    expect_len("actuated positions", qa, na)?;
    let mut s = analysis::close_at(model, &model.home_state(), &DVector::from_column_slice(qa))?;
    if let Some(r) = rates {
        set_rates(model, &mut s, r)?;
    }
    Ok(s)
}

fn set_rates(model: &MechanismModel, s: &mut GeneralizedState, rates: &[f64]) -> Outcome<()> {
    let (m, na) = (model.m, model.n_actuated());
    expect_len("actuated rates", rates, na)?;
    let qa_dot = DVector::from_column_slice(rates);
    let qu_dot = ClosureSystem::from_state(model, s)?.dfk(&qa_dot)?;
    s.theta_dot.rows_mut(0, m).copy_from(&qu_dot);
    s.theta_dot.rows_mut(m, na).copy_from(&qa_dot);
    Ok(())
}

fn state_of(model: &MechanismModel, a: &StateArgs) -> Outcome<GeneralizedState> {
    let mut s = match (&a.state, &a.qa) {
        (Some(theta), _) => {
            expect_len("state", theta, model.n)?;
            let mut s = model.home_state();
            s.theta.copy_from_slice(theta);
            s
        }
        (None, Some(qa)) => closed_state(model, qa, None)?,
        (None, None) => model.home_state(),
    };
    if let Some(r) = &a.rates {
        set_rates(model, &mut s, r)?;
    }
    Ok(s)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn fmt_list<'a>(v: impl IntoIterator<Item = &'a f64>) -> String {
    v.into_iter().map(|&x| fmt_sig17(x)).collect::<Vec<_>>().join(", ")
}

fn matrix_lines(out: &mut String, m: &DMatrix<f64>) {
    for r in m.row_iter() {
        let _ = writeln!(out, "  {}", fmt_list(r.iter()));
    }
}

fn dof_names(model: &MechanismModel, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|d| model.dof_name(d).to_string()).collect()
}

fn actuated_names(model: &MechanismModel) -> Vec<String> {
    dof_names(model, model.m..model.n)
}

#[derive(Serialize)]
struct ValidateReport {
    model: String,
    total_mass: f64,
    unclosed: usize,
    #[serde(flatten)]
    report: AssumptionReport,
}

fn validate(json: bool, path: &Path, samples: usize, seed: u64) -> Outcome<(String, bool)> {
    let model = model_at(path)?;
    let home = model.home_state();
    let mut states = vec![home.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unclosed = 0;
    for _ in 0..samples {
        let qa = DVector::from_fn(model.n_actuated(), |k, _| {
            let d = model.m + k;
            let (lo, hi) = model.dof_limits(d);
            if lo.is_finite() && hi.is_finite() {
                lo + (hi - lo) * rng.gen_range(0.25..0.75)
            } else {
                home.theta[d] + rng.gen_range(-0.1..0.1)
            }
        });
        match analysis::close_at(&model, &home, &qa) {
            Ok(s) => states.push(s),
            Err(_) => unclosed += 1,
        }
    }
    let report = validate_assumptions(&model, &states)?;
    let pass = report.pass && unclosed == 0;
    let r = ValidateReport { model: model.name.clone(), total_mass: model.total_mass(), unclosed, report };
    if json {
        return Ok((emit_json("validate", &r), pass));
    }
    let mut out = String::new();
    report_line(&mut out, "model", &r.model);
    report_line(&mut out, "n", r.report.n);
    report_line(&mut out, "m", r.report.m);
    report_line(&mut out, "actuated", r.report.actuated);
    report_line(&mut out, "constraint_rows", r.report.constraint_rows);
    report_line(&mut out, "total_mass", fmt_sig17(r.total_mass));
    report_line(&mut out, "states", r.report.samples.len());
    report_line(&mut out, "unclosed", unclosed);
    let smin = r.report.samples.iter().map(|s| s.sigma_min).fold(f64::INFINITY, f64::min);
    report_line(&mut out, "min_sigma", fmt_sig17(smin));
    report_line(&mut out, "near_singular", r.report.near_singular.len());
    report_line(&mut out, "rank_deficient", r.report.rank_deficient.len());
    report_line(&mut out, "pass", pass);
    Ok((out, pass))
}

#[derive(Serialize)]
struct FkReport {
    frames: BTreeMap<String, FramePose>,
    closure_error: f64,
}

fn fk(json: bool, path: &Path, sa: &StateArgs, frame: &Option<String>) -> Outcome<String> {
    let model = model_at(path)?;
    let s = state_of(&model, sa)?;
    let kin = forward_kinematics(&model, &s)?;
    let frames = match frame {
        Some(f) => BTreeMap::from([(f.clone(), kin.frame_pose(&model.frame(f)?))]),
        None => kin.poses(&model),
    };
    let r = FkReport { frames, closure_error: mechkit::closure::closure_error(&model, &kin).norm() };
    if json {
        return Ok(emit_json("fk", &r));
    }
    let mut out = String::new();
    for (name, p) in &r.frames {
        let _ = writeln!(out, "{name}:");
        let _ = writeln!(out, "  position: {}", fmt_list(p.position.iter()));
        for row in p.rotation.row_iter() {
            let _ = writeln!(out, "  rotation: {}", fmt_list(row.iter()));
        }
    }
    report_line(&mut out, "closure_error", fmt_sig17(r.closure_error));
    Ok(out)
}

#[derive(Serialize)]
struct DfkReport {
    passive: Vec<String>,
    actuated: Vec<String>,
    passive_rates: Vec<f64>,
    mapping_jacobian: Vec<Vec<f64>>,
}

fn dfk(json: bool, path: &Path, sa: &StateArgs) -> Outcome<String> {
    let model = model_at(path)?;
    let s = state_of(&model, sa)?;
    let cs = ClosureSystem::from_state(&model, &s)?;
    let jm = cs.mapping_jacobian()?;
    let r = DfkReport {
        passive: dof_names(&model, 0..model.m),
        actuated: actuated_names(&model),
        passive_rates: (jm * model.actuated(&s.theta_dot)).iter().copied().collect(),
        mapping_jacobian: rows_of(jm),
    };
    if json {
        return Ok(emit_json("dfk", &r));
    }
    let mut out = String::new();
    for (n, v) in r.passive.iter().zip(&r.passive_rates) {
        report_line(&mut out, &format!("rate_{n}"), fmt_sig17(*v));
    }
    let _ = writeln!(out, "mapping_jacobian ({} x {}):", jm.nrows(), jm.ncols());
    matrix_lines(&mut out, jm);
    Ok(out)
}

#[derive(Serialize)]
struct WorkspaceReport {
    actuated: Vec<String>,
    selected: Vec<String>,
    boundary: Vec<analysis::WorkspaceSample>,
    grid_points: usize,
    grid_feasible: usize,
    /// Actuator-plane distance between the swept boundary and the dense region.
    hausdorff: Option<f64>,
    grid_spacing: Option<f64>,
}

fn workspace(json: bool, path: &Path, select: &Option<Vec<String>>, grid: usize, directions: usize) -> Outcome<String> {
    let model = model_at(path)?;
    let sel = match select {
        Some(names) => SelectionMap::new(&model, names.iter().map(|n| dof_of(&model, n)).collect::<Outcome<_>>()?)?,
        None => SelectionMap::from_model(&model),
    };
    let start = model.home_state();
    let cfg = WorkspaceConfig::radial(&model, directions)?;
    let boundary = analysis::workspace_explore(&model, &sel, &start, &cfg)?;
    let pts = analysis::actuator_grid(&model, grid)?;
    let dense = analysis::dense_feasibility(&model, &sel, &start, &pts);
    let (hausdorff, grid_spacing) = if model.n_actuated() == 2 {
        let poly: Vec<[f64; 2]> = boundary.iter().map(|b| [b.actuated[0], b.actuated[1]]).collect();
        let plane: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
        let feasible: Vec<bool> = dense.iter().map(|g| g.feasible).collect();
        let (lo, hi) = model.dof_limits(model.m);
        (Some(analysis::boundary_hausdorff(&poly, &plane, &feasible, grid)), Some((hi - lo) / (grid - 1) as f64))
    } else {
        (None, None)
    };
    let selected: Vec<String> = sel.dofs.iter().map(|&d| model.dof_name(d).to_string()).collect();
    let r = WorkspaceReport {
        actuated: actuated_names(&model),
        selected,
        grid_points: dense.len(),
        grid_feasible: dense.iter().filter(|g| g.feasible).count(),
        boundary,
        hausdorff,
        grid_spacing,
    };
    if json {
        return Ok(emit_json("workspace", &r));
    }
    let mut cols = vec!["direction".to_string()];
    cols.extend(r.actuated.iter().map(|n| format!("qa_{n}")));
    cols.extend(r.selected.iter().map(|n| format!("sel_{n}")));
    cols.extend(["feasible".into(), "steps".into()]);
    let mut t = ResultTable::new(cols);
    for b in &r.boundary {
        let mut row = vec![b.direction as f64];
        row.extend(&b.actuated);
        row.extend(if b.selected.len() == r.selected.len() { b.selected.clone() } else { vec![f64::NAN; r.selected.len()] });
        row.extend([f64::from(u8::from(b.feasible)), b.steps as f64]);
        t.push(row);
    }
    Ok(emit_csv(&t))
}

fn manipulability(json: bool, path: &Path, frame: &str, grid: usize) -> Outcome<String> {
    let model = model_at(path)?;
    let f = model.frame(frame)?;
    let pts = analysis::actuator_grid(&model, grid)?;
    let map = analysis::manipulability_map(&model, &model.home_state(), &pts, &f, frame)?;
    if json {
        return Ok(emit_json("manipulability", &map));
    }
    let mut cols: Vec<String> = actuated_names(&model).iter().map(|n| format!("qa_{n}")).collect();
    cols.extend(["linear".into(), "angular".into(), "singular".into()]);
    let mut t = ResultTable::new(cols);
    for s in &map.samples {
        let mut row = s.actuated.clone();
        row.extend([s.linear, s.angular, f64::from(u8::from(s.singular))]);
        t.push(row);
    }
    Ok(emit_csv(&t))
}

#[derive(Serialize, Deserialize)]
struct InertiaReport {
    frame: String,
    eps: f64,
    axes: String,
    lambda: Matrix6<f64>,
    column_norms: Vec<f64>,
}

fn inertia(json: bool, path: &Path, frame: &str, eps: f64, axes: Axes, sa: &StateArgs) -> Outcome<String> {
    let model = model_at(path)?;
    let s = state_of(&model, sa)?;
    let ax = match axes {
        Axes::World => InertiaAxes::World,
        Axes::Frame => InertiaAxes::Frame,
    };
    let a = analysis::cartesian_inertia(&model, &s, &model.frame(frame)?, eps, ax)?;
    let r = InertiaReport {
        frame: frame.to_string(),
        eps,
        axes: format!("{ax:?}").to_lowercase(),
        lambda: a.lambda,
        column_norms: a.column_norms.iter().copied().collect(),
    };
    if json {
        return Ok(emit_json("inertia", &r));
    }
    let mut out = String::new();
    report_line(&mut out, "frame", frame);
    report_line(&mut out, "eps", fmt_sig17(eps));
    let _ = writeln!(out, "lambda:");
    matrix_lines(&mut out, &DMatrix::from_iterator(6, 6, a.lambda.iter().copied()));
    report_line(&mut out, "column_norms", fmt_list(r.column_norms.iter()));
    Ok(out)
}

fn envelope<T: serde::de::DeserializeOwned>(path: &Path, kind: &str) -> Outcome<T> {
    let bad = |e: serde_json::Error| Failure::new("bad_json", format!("{}: {e}", path.display()));
    let env = parse_json::<serde_json::Value>(&read(path)?).map_err(bad)?;
    if env.format != 1 || env.kind != kind {
        return Err(Failure::new("bad_json", format!("{}: expected a format 1 `{kind}` result, found `{}`", path.display(), env.kind)));
    }
    serde_json::from_value(env.data).map_err(bad)
}

#[derive(Serialize)]
struct RatioReport {
    ratio: Vec<f64>,
}

fn ratio_output(json: bool, kind: &str, ratio: Vec<f64>) -> String {
    if json {
        return emit_json(kind, &RatioReport { ratio });
    }
    let mut out = String::new();
    report_line(&mut out, "ratio", fmt_list(ratio.iter()));
    out
}

fn inertia_ratio(json: bool, reference: &Path, test: &Path) -> Outcome<String> {
    let a: InertiaReport = envelope(reference, "inertia")?;
    let b: InertiaReport = envelope(test, "inertia")?;
    let chi = analysis::inertia_ratio(&a.lambda, &b.lambda)?;
    Ok(ratio_output(json, "inertia_ratio", chi.iter().copied().collect()))
}

#[derive(Serialize, Deserialize)]
struct CammReport {
    total_mass: f64,
    com: Vector3<f64>,
    momentum: Vec<f64>,
    base_dofs: usize,
    camm: Vec<Vec<f64>>,
    projected_camm: Vec<Vec<f64>>,
}

fn camm(json: bool, path: &Path, sa: &StateArgs) -> Outcome<String> {
    let model = model_at(path)?;
    let s = state_of(&model, sa)?;
    let c = analysis::centroidal_momentum(&model, &s)?;
    let r = CammReport {
        total_mass: c.total_mass,
        com: c.com,
        momentum: c.momentum.iter().copied().collect(),
        base_dofs: model.base_dofs(),
        camm: rows_of(&c.camm()),
        projected_camm: rows_of(&c.projected_camm),
    };
    if json {
        return Ok(emit_json("camm", &r));
    }
    let mut out = String::new();
    report_line(&mut out, "total_mass", fmt_sig17(r.total_mass));
    report_line(&mut out, "com", fmt_list(r.com.iter()));
    report_line(&mut out, "momentum", fmt_list(r.momentum.iter()));
    let _ = writeln!(out, "camm:");
    matrix_lines(&mut out, &c.camm());
    Ok(out)
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Outcome<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Failure::new("bad_json", "ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn camm_ratio(json: bool, reference: &Path, test: &Path) -> Outcome<String> {
    let a: CammReport = envelope(reference, "camm")?;
    let b: CammReport = envelope(test, "camm")?;
    let g = analysis::camm_ratio_offset(&matrix_from_rows(&a.camm)?, a.base_dofs, &matrix_from_rows(&b.camm)?, b.base_dofs)?;
    Ok(ratio_output(json, "camm_ratio", g.iter().copied().collect()))
}

fn parse_sweep(text: &str) -> Outcome<(f64, f64, usize)> {
    let bad = || Failure::new("invalid_config", format!("sweep `{text}` is not lo:hi:N"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].parse().map_err(|_| bad())?;
    let hi = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn transmission(json: bool, path: &Path, actuator: &str, output: &str, direction: &[f64], sweep: &Option<String>, force: f64) -> Outcome<String> {
    let model = model_at(path)?;
    let a = dof_of(&model, actuator)?;
    let out_spec = match model.dof_index(output) {
        Some(d) => TransmissionOutput::Dof(d),
        None => {
            expect_len("direction", direction, 3)?;
            let d = Vector3::new(direction[0], direction[1], direction[2]);
            if d.norm() == 0.0 {
                return Err(Failure::new("invalid_config", "zero output direction"));
            }
            TransmissionOutput::Point { frame: model.frame(output)?, direction: d.normalize() }
        }
    };
    let xs = match sweep {
        Some(s) => {
            let (lo, hi, n) = parse_sweep(s)?;
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        }
        None => analysis::actuator_sweep(&model, a, 21)?,
    };
    let samples = analysis::transmission_curve(&model, &model.home_state(), a, &out_spec, &xs, force)?;
    if json {
        return Ok(emit_json("transmission", &samples));
    }
    let mut t = ResultTable::new(vec!["input".into(), "output".into(), "ratio".into(), "force".into()]);
    for s in &samples {
        t.push(vec![s.input, s.output, s.ratio, s.force]);
    }
    Ok(emit_csv(&t))
}

/// Actuated positions and rates of a log row in model order.
fn row_values(log: &LogSeries, perm: &[usize], k: usize) -> (Vec<f64>, Vec<f64>) {
    let s = &log.samples[k];
    (perm.iter().map(|&c| s.pos[c]).collect(), perm.iter().map(|&c| s.vel[c]).collect())
}

fn table_output(json: bool, kind: &str, t: &ResultTable) -> String {
    if json {
        emit_json(kind, t)
    } else {
        emit_csv(t)
    }
}

fn id(json: bool, path: &Path, traj: &Path, contacts: &Option<Vec<String>>, base_acc: &[f64]) -> Outcome<String> {
    let model = model_at(path)?;
    let log = log_at(traj)?;
    let perm = log.bind(&model)?;
    let cs = contacts_of(&model, contacts)?;
    expect_len("base acceleration", base_acc, 6)?;
    let mut cols = vec!["time_s".to_string(), "nu_dot_norm".into(), "kkt".into()];
    cols.extend(actuated_names(&model).iter().map(|n| format!("tau_{n}")));
    cols.extend((0..model.m).map(|i| format!("lambda_{i}")));
    for c in &cs {
        cols.extend(["x", "y", "z"].iter().map(|a| format!("f_{}_{a}", c.name)));
    }
    let mut t = ResultTable::new(cols);
    for k in 0..log.samples.len() {
        let (qa, qd) = row_values(&log, &perm, k);
        let s = closed_state(&model, &qa, Some(&qd))?;
        let dc = assemble(&model, &s, &cs)?;
        let kin = forward_kinematics(&model, &s)?;
        let task = TaskSpec::base(&model, &kin, DVector::from_column_slice(base_acc));
        let r = inverse_dynamics(&dc, &task)?;
        let mut row = vec![log.samples[k].time, r.nu_dot.norm(), r.residuals.max()];
        row.extend(r.tau.iter());
        row.extend(r.lambda.iter());
        row.extend(r.forces.iter());
        t.push(row);
    }
    Ok(table_output(json, "id", &t))
}

fn estimate(json: bool, path: &Path, log_path: &Path, alpha: f64, beta: f64) -> Outcome<String> {
    let model = model_at(path)?;
    let log = log_at(log_path)?;
    let perm = log.bind(&model)?;
    let times: Vec<f64> = log.samples.iter().map(|s| s.time).collect();
    let dt = match times.as_slice() {
        [a, b, ..] => b - a,
        _ => 1e-3,
    };
    let cfg = EstimatorConfig { alpha, beta, dt, rate: 1.0 / dt };
    let meas: Vec<MeasurementSet> = (0..log.samples.len())
        .map(|k| {
            let (qa, qd) = row_values(&log, &perm, k);
            MeasurementSet { qa: DVector::from_vec(qa), qa_dot: DVector::from_vec(qd), absolute: vec![] }
        })
        .collect();
    let init = EstimatorState::new(&model, model.home_state().theta)?;
    let states = estimation::replay(&model, init, &meas, &cfg)?;
    let mut cols = vec!["time_s".to_string()];
    cols.extend(dof_names(&model, 0..model.n).iter().map(|n| format!("theta_{n}")));
    cols.extend(["closure_error".into(), "tracking_error".into()]);
    let mut t = ResultTable::new(cols);
    for (k, st) in states.iter().enumerate() {
        let mut row = vec![times[k]];
        row.extend(st.theta.iter());
        row.push(st.error_norm);
        row.push((model.actuated(&st.theta) - &meas[k].qa).norm());
        t.push(row);
    }
    Ok(table_output(json, "estimate", &t))
}

#[derive(Serialize)]
struct CalibrationReport {
    names: Vec<String>,
    theta: Vec<f64>,
    #[serde(flatten)]
    result: estimation::CalibrationResult,
}

fn calibrate(json: bool, path: &Path, log_path: &Path, meas_path: &Path, eps: f64, max_iter: usize) -> Outcome<String> {
    let model = model_at(path)?;
    let log = log_at(log_path)?;
    let perm = log.bind(&model)?;
    if log.samples.is_empty() {
        return Err(Failure::new("missing_header", "log has no samples"));
    }
    let raw = parse_measurements(&read(meas_path)?).map_err(|e| Failure::new(e.code(), format!("{}: {e}", meas_path.display())))?;
    let meas: Vec<(usize, f64)> = raw.iter().map(|(n, v)| dof_of(&model, n).map(|d| (d, *v))).collect::<Outcome<_>>()?;
    let (qa, _) = row_values(&log, &perm, 0);
    let mut theta0 = model.home_state().theta;
    theta0.rows_mut(model.m, model.n_actuated()).copy_from_slice(&qa);
    let cfg = CalibrationConfig { eps_stop: eps, max_iter, ..CalibrationConfig::default() };
    let result = estimation::calibrate(&model, &theta0, &meas, &cfg)?;
    let r = CalibrationReport { names: dof_names(&model, 0..model.n), theta: result.theta.iter().copied().collect(), result };
    if json {
        return Ok(emit_json("calibrate", &r));
    }
    let mut out = String::new();
    for (n, v) in r.names.iter().zip(&r.theta) {
        report_line(&mut out, &format!("theta_{n}"), fmt_sig17(*v));
    }
    report_line(&mut out, "iterations", r.result.iterations);
    report_line(&mut out, "error_norm", fmt_sig17(r.result.error_norm));
    Ok(out)
}

fn wrench(json: bool, path: &Path, log_path: &Path, filter: Option<f64>, contacts: &Option<Vec<String>>) -> Outcome<String> {
    let model = model_at(path)?;
    let log = log_at(log_path)?;
    let perm = log.bind(&model)?;
    if !log.has_tau {
        return Err(Failure::new("column_mismatch", format!("{}: wrench needs tau_<joint> columns", log_path.display())));
    }
    let cs = contacts_of(&model, contacts)?;
    let na = model.n_actuated();
    let mut tau: Vec<Vec<f64>> = log.samples.iter().map(|s| perm.iter().map(|&c| s.tau.as_ref().unwrap()[c]).collect()).collect();
    if let Some(cutoff) = filter {
        let rate = match log.samples.as_slice() {
            [a, b, ..] => 1.0 / (b.time - a.time),
            _ => 1000.0,
        };
        for k in 0..na {
            let col: Vec<f64> = tau.iter().map(|r| r[k]).collect();
            for (r, v) in tau.iter_mut().zip(estimation::lowpass_filter(&col, cutoff, rate)?) {
                r[k] = v;
            }
        }
    }
    let mut cols = vec!["time_s".to_string()];
    for c in &cs {
        cols.extend(["x", "y", "z"].iter().map(|a| format!("f_{}_{a}", c.name)));
    }
    cols.extend(["zmp_x".into(), "zmp_y".into(), "rank".into(), "residual".into()]);
    let mut t = ResultTable::new(cols);
    for (k, tau_k) in tau.iter().enumerate() {
        let (qa, _) = row_values(&log, &perm, k);
        let s = closed_state(&model, &qa, None)?;
        let w = estimation::static_wrench_estimate(&model, &s, &cs, &DVector::from_column_slice(tau_k))?;
        let mut row = vec![log.samples[k].time];
        for f in &w.forces {
            row.extend(f.iter());
        }
        let z0 = if w.positions.is_empty() { 0.0 } else { w.positions.iter().map(|p| p.z).sum::<f64>() / w.positions.len() as f64 };
        match estimation::zmp_cop(&w.positions, &w.forces, &w.links, z0, estimation::SUPPORT_THRESHOLD) {
            Ok(z) => row.extend([z.zmp.x, z.zmp.y]),
            Err(Error::NoSupport { .. }) => row.extend([f64::NAN, f64::NAN]),
            Err(e) => return Err(e.into()),
        }
        row.extend([w.rank as f64, w.residual]);
        t.push(row);
    }
    Ok(table_output(json, "wrench", &t))
}

fn fixtures(json: bool, dir: &Path) -> Outcome<String> {
    let files = mechkit::fixtures::files()?;
    let io = |e: std::io::Error| Failure::new("io_error", format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut names = Vec::new();
    for (name, text) in &files {
        std::fs::write(dir.join(name), text).map_err(io)?;
        names.push(name.clone());
    }
    if json {
        return Ok(emit_json("fixtures", &names));
    }
    Ok(names.iter().map(|n| format!("{n}\n")).collect())
}

fn run(cli: &Cli) -> Outcome<(String, bool)> {
    let j = cli.json;
    let ok = |r: Outcome<String>| r.map(|s| (s, true));
    match &cli.command {
        Command::Validate { model, samples, seed } => validate(j, model, *samples, *seed),
        Command::Fk { model, state, frame } => ok(fk(j, model, state, frame)),
        Command::Dfk { model, state } => ok(dfk(j, model, state)),
        Command::Workspace { model, select, grid, directions } => ok(workspace(j, model, select, *grid, *directions)),
        Command::Manipulability { model, frame, grid } => ok(manipulability(j, model, frame, *grid)),
        Command::Inertia { model, frame, eps, axes, state } => ok(inertia(j, model, frame, *eps, *axes, state)),
        Command::InertiaRatio { reference, test } => ok(inertia_ratio(j, reference, test)),
        Command::Camm { model, state } => ok(camm(j, model, state)),
        Command::CammRatio { reference, test } => ok(camm_ratio(j, reference, test)),
        Command::Transmission { model, actuator, output, direction, sweep, force } => {
            ok(transmission(j, model, actuator, output, direction, sweep, *force))
        }
        Command::Id { model, traj, contacts, base_acc } => ok(id(j, model, traj, contacts, base_acc)),
        Command::Estimate { model, log, alpha, beta } => ok(estimate(j, model, log, *alpha, *beta)),
        Command::Calibrate { model, log, measurements, eps, max_iter } => ok(calibrate(j, model, log, measurements, *eps, *max_iter)),
        Command::Wrench { model, log, filter, contacts } => ok(wrench(j, model, log, *filter, contacts)),
        Command::Fixtures { dir } => ok(fixtures(j, dir)),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MECH_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("MECH_THREADS must be a non-negative integer, got `{v}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let (text, pass) = match run(&cli) {
        Ok(r) => r,
        Err(f) => {
            if cli.json {
                print!("{}", emit_json("error", &ErrorReport { code: &f.code, message: &f.message }));
            }
            eprintln!("error[{}]: {}", f.code, f.message);
            return ExitCode::from(1);
        }
    };
    match &cli.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &text) {
                eprintln!("error[io_error]: {}: {e}", p.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
