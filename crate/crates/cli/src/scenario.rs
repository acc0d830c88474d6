//! Scenario execution and artifact generation.

use crate::config::{
    ConfigError, FormName, KernelKindName, Loaded, Method, Scenario, WeightModeName,
};
use nullctl::control::{
    memory_fixed_point, penalized_hum, two_phase_control, verify_null, weighted_variational_control,
    FixedPointMethod, FixedPointReport, WeightMode,
};
use nullctl::evolve::forward_solve;
use nullctl::export::{fmt_e12, norm_history, profile_table, trajectory_table, weight_table, field_table, Table};
use nullctl::verify::{
    carleman_suite, hardy_check, improved_hp_constant, supercritical_scan, CarlemanForm,
    HardyTestFunction,
};
use nullctl::weights::{kernel_admissibility, validate_params, ValidationMode};
use nullctl::{
    CgOptions, ControlResult, Error, MemoryKernel, PdeProblem, SpaceTimeGrid, WeightParams,
};
use serde_json::{json, Map, Value};
use std::fmt;

/// Process exit status, ordered by severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok = 0,
    Malformed = 1,
    Invalid = 2,
    NotConverged = 3,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn of(e: &Error) -> Self {
        match e {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::UndefinedInput(_)
            | Error::InfeasibleWeights { .. } => Status::Invalid,
            Error::NonConvergence { .. } | Error::Solver(_) => Status::NotConverged,
            Error::Consistency(_) | Error::Io(_) => Status::Malformed,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self {
            status: Status::Malformed,
            message: e.to_string(),
        }
    }
}

fn core_failure(context: &str, e: Error) -> Failure {
    Failure {
        status: Status::of(&e),
        message: format!("{context}: {e}"),
    }
}

fn invalid(message: String) -> Failure {
    Failure {
        status: Status::Invalid,
        message,
    }
}

/// Everything a validated config resolves to.
pub struct Prepared {
    pub loaded: Loaded,
    pub grid: SpaceTimeGrid,
    pub params: WeightParams,
    pub kernel: Option<MemoryKernel>,
    pub y0: Vec<f64>,
    /// Human-readable validation lines.
    pub report: Vec<String>,
}

fn uses_weights(l: &Loaded) -> bool {
    let c = &l.config;
    match c.scenario {
        Scenario::Memory | Scenario::TwoPhase | Scenario::CarlemanSuite => true,
        Scenario::Control => {
            c.solver.method == Method::Variational || c.solver.weight_mode == WeightModeName::Paper
        }
        _ => false,
    }
}

/// The validation phase shared by `run` and `validate`.
pub fn prepare(loaded: Loaded) -> Result<Prepared, Failure> {
    let grid = loaded.grid().map_err(|e| Failure {
        status: Status::Invalid,
        message: e.to_string(),
    })?;
    let y0 = loaded.initial_data(&grid).map_err(|e| {
        let missing = e.message.contains("cannot read");
        Failure {
            status: if missing { Status::Malformed } else { Status::Invalid },
            message: e.to_string(),
        }
    })?;
    let params = loaded.weights();
    let kernel = loaded.kernel(&params);
    let mut report = Vec::new();
    let c = &loaded.config;

    if uses_weights(&loaded) {
        let rep = validate_params(&params);
        let mode = match rep.mode {
            ValidationMode::Basic => "basic",
            ValidationMode::Memory => "memory",
        };
        report.push(format!("weight constraints ({mode} mode):"));
        for check in &rep.checks {
            report.push(format!(
                "  {:<38} {}  margin {}",
                check.constraint.name(),
                if check.passed { "ok  " } else { "FAIL" },
                fmt_e12(check.margin)
            ));
        }
        if !rep.passed() {
            let names: Vec<&str> = rep.failures().map(|f| f.constraint.name()).collect();
            let detail: Vec<String> = rep
                .failures()
                .map(|f| format!("{}: {}", f.constraint.name(), f.detail))
                .collect();
            return Err(invalid(format!(
                "{}: weight parameters violate {}\n  {}",
                loaded.anchor("weights"),
                names.join(", "),
                detail.join("\n  ")
            )));
        }
    }

    match c.scenario {
        Scenario::Memory | Scenario::TwoPhase => {
            let Some(k) = &kernel else {
                return Err(invalid(format!(
                    "{}: scenario {} needs a kernel block",
                    loaded.source_name,
                    c.scenario.name()
                )));
            };
            let rep = kernel_admissibility(k, &params, &grid)
                .map_err(|e| core_failure("kernel admissibility", e))?;
            report.push(format!(
                "kernel admissible: {} (log sup {}, threshold s*C0 = {})",
                rep.admissible,
                fmt_e12(rep.log_sup),
                fmt_e12(rep.threshold)
            ));
            // Phase two of the two-phase scenario runs on a shorter horizon and
            // records admissibility there instead.
            if c.scenario == Scenario::Memory && !rep.admissible {
                let kind = c.kernel.as_ref().map(|k| k.kind);
                let hint = match kind {
                    Some(KernelKindName::Constant) => "a constant kernel is never admissible".to_string(),
                    _ => format!("need M0 >= s*C0 = {}", rep.threshold),
                };
                return Err(invalid(format!(
                    "{}: kernel is not admissible: {hint}",
                    loaded.anchor("kernel")
                )));
            }
        }
        Scenario::Control if c.kernel.is_some() => {
            return Err(invalid(format!(
                "{}: the control scenario has no memory term; use memory or two_phase",
                loaded.anchor("kernel")
            )));
        }
        _ => {}
    }
    if c.solver.epsilon <= 0.0 || c.solver.cg_tol <= 0.0 || c.solver.picard_tol <= 0.0 {
        return Err(invalid(format!(
            "{}: epsilon, cg_tol and picard_tol must be positive",
            loaded.anchor("solver")
        )));
    }
    Ok(Prepared {
        loaded,
        grid,
        params,
        kernel,
        y0,
        report,
    })
}

/// Files to write plus the JSON summary.
pub struct Outcome {
    pub status: Status,
    pub summary: Map<String, Value>,
    pub artifacts: Vec<(String, String)>,
    pub message: Option<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            status: Status::Ok,
            summary: Map::new(),
            artifacts: Vec::new(),
            message: None,
        }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    fn file(&mut self, name: &str, contents: String) {
        self.artifacts.push((name.to_string(), contents));
    }

    fn not_converged(&mut self, what: &str) {
        self.status = Status::NotConverged;
        self.message = Some(format!("{what} did not converge"));
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Value::Object(self.summary.clone()))
            .expect("summary serializes");
        s.push('\n');
        s
    }
}

fn cg_options(p: &Prepared) -> CgOptions {
    CgOptions {
        rel_tol: p.loaded.config.solver.cg_tol,
        max_iter: p.loaded.config.solver.cg_max,
        ..CgOptions::default()
    }
}

fn problem(p: &Prepared) -> Result<PdeProblem, Failure> {
    PdeProblem::new(p.loaded.config.problem.mu, p.grid.clone(), p.y0.clone())
        .map_err(|e| core_failure("problem", e))
}

fn fixed_point_method(p: &Prepared) -> FixedPointMethod<f64> {
    let s = &p.loaded.config.solver;
    let cg = cg_options(p);
    match s.method {
        Method::Hum => FixedPointMethod::Hum {
            epsilon: s.epsilon,
            mode: match s.weight_mode {
                WeightModeName::Uniform => WeightMode::Uniform,
                WeightModeName::Paper => WeightMode::Paper(p.params.clone()),
            },
            cg,
        },
        Method::Variational => FixedPointMethod::Variational { cg },
    }
}

/// Executes a prepared scenario. Library errors become a failing status with
/// whatever summary was gathered before them.
pub fn run(p: &Prepared) -> Outcome {
    let mut out = Outcome::new();
    let c = &p.loaded.config;
    out.put("scenario", c.scenario.name());
    out.put("seed", c.seed);
    if !matches!(c.scenario, Scenario::SpectralScan | Scenario::HardySuite) {
        out.put("mu", c.problem.mu);
        out.put("T", c.problem.t_final);
        out.put("nx", c.problem.nx);
        out.put("nt", c.problem.nt);
    }
    let result = match c.scenario {
        Scenario::Forward => forward(p, &mut out),
        Scenario::Control => control(p, &mut out),
        Scenario::Memory | Scenario::TwoPhase => memory(p, &mut out),
        Scenario::CarlemanSuite => suite(p, &mut out),
        Scenario::SpectralScan => scan(p, &mut out),
        Scenario::HardySuite => hardy(p, &mut out),
    };
    if let Err(f) = result {
        out.status = out.status.max(f.status);
        out.put("error", f.message.clone());
        out.message = Some(f.message);
    }
    out.put("exit_code", out.status.code());
    out
}

fn forward(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let prob = problem(p)?;
    let traj = forward_solve(&prob, None).map_err(|e| core_failure("forward solve", e))?;
    let g = &p.grid;
    let initial = g.l2_norm(&p.y0);
    let terminal = g.l2_norm(traj.terminal());
    out.put("initial_norm", initial);
    out.put("terminal_norm", terminal);
    if let Some(b) = &traj.blow_up {
        out.put("blow_up_level", b.time_index);
    }
    let mu = c_mu(p);
    let rate = if initial > 0.0 && terminal > 0.0 {
        Some(-(terminal / initial).ln() / g.t_final)
    } else {
        None
    };
    if let Some(r) = rate {
        out.put("decay_rate", r);
    }
    // Closed-form terminal state when y0 is the first eigenfunction.
    let exact_rate = match &p.loaded.config.problem.y0 {
        crate::config::InitialData::Sine if mu == 0.0 => Some(std::f64::consts::PI.powi(2)),
        crate::config::InitialData::Bessel => nullctl::profiles::bessel_mode(g, mu).ok().map(|(_, l)| l),
        _ => None,
    };
    let mut terminal_rows = Table::new(["x", "y_T"]);
    if let Some(lambda) = exact_rate {
        let decay = (-lambda * g.t_final).exp();
        let exact: Vec<f64> = p.y0.iter().map(|v| v * decay).collect();
        let diff: Vec<f64> = traj.terminal().iter().zip(&exact).map(|(a, b)| a - b).collect();
        out.put("eigenvalue", lambda);
        out.put("terminal_error", g.l2_norm(&diff) / g.l2_norm(&exact));
        if let Some(r) = rate {
            out.put("decay_rate_error", (r - lambda).abs() / lambda);
        }
        terminal_rows = Table::new(["x", "y_T", "exact"]);
        for i in 0..g.nx {
            terminal_rows.push([g.x(i), traj.terminal()[i], exact[i]]);
        }
    } else {
        for i in 0..g.nx {
            terminal_rows.push([g.x(i), traj.terminal()[i]]);
        }
    }
    out.file("trajectory.csv", trajectory_table(&traj).to_csv());
    out.file("terminal.dat", terminal_rows.to_dat());
    out.file("norm.dat", norm_history(&traj).to_dat());
    Ok(())
}

fn c_mu(p: &Prepared) -> f64 {
    p.loaded.config.problem.mu
}

fn control_artifacts(p: &Prepared, res: &ControlResult, out: &mut Outcome) {
    out.put("initial_norm", res.initial_norm);
    out.put("terminal_norm", res.terminal_norm);
    out.put(
        "terminal_ratio",
        if res.initial_norm > 0.0 { res.terminal_norm / res.initial_norm } else { res.terminal_norm },
    );
    out.put("cg_iterations", res.cg_iterations);
    out.put("residual", res.residual);
    out.put("weighted_cost", res.weighted_cost);
    out.put("log_weight_scale", res.log_weight_scale);
    out.put("null_ok", verify_null(res, 1e-2));
    out.file("trajectory.csv", trajectory_table(&res.y).to_csv());
    out.file("control.csv", field_table(&res.u, &p.grid).to_csv());
    out.file("norm.dat", norm_history(&res.y).to_dat());
    out.file("terminal.dat", profile_table("y_T", res.y.terminal(), &p.grid).to_dat());
}

fn control(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let prob = problem(p)?;
    let s = &p.loaded.config.solver;
    let cg = cg_options(p);
    let res = match s.method {
        Method::Hum => {
            out.put("method", "hum");
            out.put("epsilon", s.epsilon);
            let mode = match s.weight_mode {
                WeightModeName::Uniform => WeightMode::Uniform,
                WeightModeName::Paper => WeightMode::Paper(p.params.clone()),
            };
            penalized_hum(&prob, s.epsilon, &mode, &cg)
        }
        Method::Variational => {
            out.put("method", "variational");
            weighted_variational_control(&prob, &p.params, &cg)
        }
    }
    .map_err(|e| core_failure("control synthesis", e))?;
    out.put("converged", res.converged);
    control_artifacts(p, &res, out);
    if uses_weights(&p.loaded) {
        out.file("weights.csv", weight_table(&p.params, &p.grid).to_csv());
    }
    if !res.converged {
        out.not_converged("control synthesis");
    }
    Ok(())
}

fn picard_artifacts(rep: &FixedPointReport<f64>, out: &mut Outcome) {
    out.put("picard_iterations", rep.iterations);
    out.put("picard_diffs", rep.diffs.clone());
    out.put("picard_monotone", rep.monotone);
    out.put("kernel_admissible", rep.kernel_admissible);
    out.put("log_radius", rep.log_radius);
    let ratios: Vec<f64> = rep.diffs.windows(2).map(|w| w[1] / w[0]).collect();
    out.put("picard_diff_ratios", ratios);
    let mut table = Table::new(["iteration", "diff"]);
    for (i, d) in rep.diffs.iter().enumerate() {
        table.push([(i + 1) as f64, *d]);
    }
    out.file("picard.dat", table.to_dat());
}

fn memory(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let c = &p.loaded.config;
    let kernel = p.kernel.clone().expect("checked in prepare");
    let prob = problem(p)?.with_kernel(kernel.clone());
    let method = fixed_point_method(p);
    out.put("method", match c.solver.method {
        Method::Hum => "hum",
        Method::Variational => "variational",
    });
    out.put("kernel_amplitude", kernel.amplitude);
    out.put("s", p.params.s);
    out.put("kernel_threshold", p.params.kernel_threshold());
    if let Some(k) = &c.kernel {
        out.put("M0", k.m0);
    }
    let (res, rep) = match c.scenario {
        Scenario::TwoPhase => {
            let t0 = c.solver.t0;
            two_phase_control(&prob, &p.params, &method, t0, c.solver.picard_tol, c.solver.picard_max)
        }
        _ => memory_fixed_point(&prob, &p.params, &method, c.solver.picard_tol, c.solver.picard_max),
    }
    .map_err(|e| core_failure("fixed point", e))?;
    let converged = rep.converged && res.converged;
    out.put("converged", converged);
    out.put("control_converged", res.converged);
    picard_artifacts(&rep, out);
    control_artifacts(p, &res, out);
    out.file("weights.csv", weight_table(&p.params, &p.grid).to_csv());
    if !converged {
        out.not_converged(if rep.converged { "control synthesis" } else { "Picard iteration" });
    }
    Ok(())
}

fn suite(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let c = &p.loaded.config;
    let block = c.suite.clone().unwrap_or(crate::config::SuiteBlock {
        draws: 20,
        form: FormName::Standard,
        s_factors: vec![1.0, 2.0],
    });
    let form = match block.form {
        FormName::Standard => CarlemanForm::Standard,
        FormName::Modified => CarlemanForm::Modified,
    };
    out.put("form", form.name());
    out.put("draws", block.draws);
    let mut samples = Table::new(["s", "sample", "lhs_log", "rhs_log", "ratio"]);
    let mut constants = Table::new(["s", "max_ratio", "max_log_ratio"]);
    let mut per_s = Vec::new();
    for f in &block.s_factors {
        let s = p.params.s * f;
        let rep = carleman_suite(&p.params.clone().with_s(s), form, &p.grid, block.draws, c.seed)
            .map_err(|e| core_failure("carleman suite", e))?;
        for smp in &rep.samples {
            samples.push([s, smp.index as f64, smp.lhs_log, smp.rhs_log, smp.ratio]);
        }
        constants.push([s, rep.max_ratio, rep.max_log_ratio]);
        per_s.push(json!({
            "s": s,
            "max_ratio": rep.max_ratio,
            "max_log_ratio": rep.max_log_ratio,
        }));
    }
    let finite = constants.rows.iter().all(|r| r[1].is_finite());
    out.put("all_finite", finite);
    if constants.rows.len() >= 2 {
        let first = constants.rows[0][1];
        let growth: Vec<f64> = constants.rows.windows(2).map(|w| w[1][1] / w[0][1]).collect();
        out.put("ratio_growth", growth);
        out.put("reference_ratio", first);
    }
    out.put("constants", per_s);
    out.file("carleman_samples.csv", samples.to_csv());
    out.file("carleman_constant.csv", constants.to_csv());
    out.file("carleman.dat", constants.to_dat());
    Ok(())
}

fn scan(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let (mus, nxs) = match &p.loaded.config.scan {
        Some(s) => (s.mu.clone(), s.nx.clone()),
        None => (vec![0.0, 0.2, 0.25, 0.26, 0.3], vec![50, 100, 200, 400]),
    };
    let rows = supercritical_scan(&mus, &nxs).map_err(|e| core_failure("spectral scan", e))?;
    let mut csv = String::from("mu");
    for nx in &nxs {
        csv.push_str(&format!(",lambda_nx_{nx}"));
    }
    csv.push_str(",classification\n");
    let mut header = vec!["nx".to_string()];
    header.extend(mus.iter().map(|m| format!("mu_{m}")));
    let mut dat = Table::new(header);
    for (j, &nx) in nxs.iter().enumerate() {
        dat.push(std::iter::once(nx as f64).chain(rows.iter().map(|r| r.lambdas[j])));
    }
    let mut classes = Map::new();
    for r in &rows {
        csv.push_str(&fmt_e12(r.mu));
        for l in &r.lambdas {
            csv.push(',');
            csv.push_str(&fmt_e12(*l));
        }
        csv.push(',');
        csv.push_str(r.class.name());
        csv.push('\n');
        classes.insert(format!("{}", r.mu), Value::from(r.class.name()));
    }
    out.put("classifications", Value::Object(classes));
    if let Some(r) = rows.iter().find(|r| r.mu == 0.0) {
        if let Some(last) = r.lambdas.last() {
            out.put("mu0_limit", *last);
            out.put("mu0_limit_error", (last - std::f64::consts::PI.powi(2)).abs());
        }
    }
    out.file("spectral_scan.csv", csv);
    out.file("spectral_scan.dat", dat.to_dat());
    Ok(())
}

fn hardy(p: &Prepared, out: &mut Outcome) -> Result<(), Failure> {
    let (nxs, etas) = match &p.loaded.config.hardy {
        Some(h) => (h.nx.clone(), h.eta.clone()),
        None => (vec![50, 100, 200], vec![1.0, 2.0]),
    };
    let rows = hardy_check::<f64>(&nxs).map_err(|e| core_failure("hardy suite", e))?;
    let mut csv = String::from("function,nx,ratio,bound,passed\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.function.name(),
            r.nx,
            fmt_e12(r.ratio),
            fmt_e12(r.bound),
            u8::from(r.passed)
        ));
    }
    let all = rows.iter().all(|r| r.passed);
    out.put("all_passed", all);
    out.put("max_ratio", rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max));

    let fns: Vec<Box<dyn Fn(f64) -> f64>> = HardyTestFunction::ALL
        .iter()
        .map(|&f| Box::new(move |x: f64| f.eval(x)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = fns.iter().map(|b| b.as_ref()).collect();
    let n = *nxs.last().unwrap_or(&200);
    let mut improved = Table::new(["eta", "constant"]);
    for &eta in &etas {
        let est = improved_hp_constant(eta, &refs, n).map_err(|e| core_failure("improved Hardy", e))?;
        improved.push([eta, est.constant]);
    }
    out.put(
        "improved_constants",
        improved.rows.iter().map(|r| json!({"eta": r[0], "constant": r[1]})).collect::<Vec<_>>(),
    );
    let mut dat = Table::new(
        std::iter::once("nx".to_string()).chain(HardyTestFunction::ALL.iter().map(|f| f.name().to_string())),
    );
    for &nx in &nxs {
        dat.push(
            std::iter::once(nx as f64)
                .chain(rows.iter().filter(|r| r.nx == nx).map(|r| r.ratio)),
        );
    }
    out.file("hardy.csv", csv);
    out.file("hardy.dat", dat.to_dat());
    out.file("improved_hardy.csv", improved.to_csv());
    Ok(())
}
