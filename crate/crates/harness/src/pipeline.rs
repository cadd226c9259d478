//! Pipeline stages and their file output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};
use subdiff_core::continuation::{reduce_data, AaaOptions, ContinuationOptions, FitVariable, ReducedTrace};
use subdiff_core::levelset::{
    init_levelset, recover_interface, symmetric_difference, IterationRecord, RecoveryOptions, RecoveryProblem,
    RecoveryResult, Snapshot,
};
use subdiff_core::order_recovery::OrderFit;
use subdiff_core::timefrac::{boundary_trace, BoundaryTrace, CqStepper};

use crate::config::{Config, Stage};
use crate::error::{io_err, HarnessError, Result};
use crate::noise::{add_noise, NoiseSpec};
use crate::scenario::{initial_value, source, Scenario};
use crate::verify::{self, RefinementRow};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Measured trace `h` and the trace `h*` of the flux alone.
#[derive(Debug, Clone)]
pub struct ForwardData {
    pub h: BoundaryTrace,
    pub h_star: BoundaryTrace,
}

pub fn forward(sc: &Scenario) -> Result<ForwardData> {
    let st = CqStepper::new(&sc.mesh, &sc.truth, sc.config.alpha, sc.grid)?;
    let stage = |source| HarnessError::Stage { stage: "forward", source };
    let full = st
        .solve_forward(&sc.mesh, &sc.u0, &sc.f, &sc.excitations)
        .map_err(stage)?;
    let zero = vec![0.0; sc.mesh.num_nodes()];
    let flux_only = st.solve_forward(&sc.mesh, &zero, &zero, &sc.excitations).map_err(stage)?;
    Ok(ForwardData {
        h: boundary_trace(&sc.mesh, &sc.grid, &full),
        h_star: boundary_trace(&sc.mesh, &sc.grid, &flux_only),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub t0: f64,
    pub alpha_true: f64,
    pub alpha_hat: f64,
    pub c0: f64,
    pub c1: f64,
    pub residual: f64,
}

/// Grid of order fits over the configured windows and true orders. The
/// data come from the modal oracle for the constant coefficient found at
/// the sample point.
pub fn order_table(sc: &Scenario) -> Result<Vec<OrderRow>> {
    let oc = &sc.config.order;
    let a = if sc.inclusion.contains(oc.point) {
        sc.config.a1
    } else {
        sc.config.a2
    };
    let onset = sc.flux_onset();
    if oc.t0.iter().any(|&t| t > onset) {
        warn!("order fit window extends past the flux onset {onset}; the flux is ignored in the fit data");
    }
    let (u0, f) = (initial_value(), source());
    let data = subdiff_core::spectral::ModalData::separable(a, oc.k_max, oc.axis_k_max, &u0, &f, &[])?;
    let mut rows = Vec::new();
    for &alpha in &oc.alphas {
        for &t0 in &oc.t0 {
            let fit: OrderFit = verify::order_fit_with(&data, alpha, t0, oc.point)
                .map_err(|e| match e {
                    HarnessError::Core(source) => HarnessError::Stage { stage: "order", source },
                    other => other,
                })?;
            rows.push(OrderRow {
                t0,
                alpha_true: alpha,
                alpha_hat: fit.alpha,
                c0: fit.c0,
                c1: fit.c1,
                residual: fit.residual,
            });
        }
    }
    Ok(rows)
}

pub fn continuation_options(cfg: &Config) -> ContinuationOptions {
    let cc = &cfg.continuation;
    ContinuationOptions {
        aaa: AaaOptions {
            max_degree: cc.degree,
            ..AaaOptions::default()
        },
        variable: cc.power.map_or(FitVariable::Time, FitVariable::Power),
        t_min: cc.t_min,
        ..ContinuationOptions::default()
    }
}

pub fn continue_data(sc: &Scenario, h: &BoundaryTrace) -> Result<ReducedTrace> {
    if sc.flux_onset() < sc.config.t_split {
        warn!(
            "flux switches on at {} before the continuation window ends at {}",
            sc.flux_onset(),
            sc.config.t_split
        );
    }
    reduce_data(h, sc.config.t_split, &continuation_options(&sc.config))
        .map_err(|source| HarnessError::Stage { stage: "continuation", source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Continued data `hbar`.
    Continued,
    /// Exact `h*`.
    Exact,
    /// `h*` with Gaussian noise.
    Noisy,
}

/// Recovery input: noisy or exact `h*` when requested (continuation is
/// bypassed), the continued data otherwise.
pub fn recovery_data(
    sc: &Scenario,
    fwd: &ForwardData,
    reduced: Option<&ReducedTrace>,
) -> Result<(BoundaryTrace, DataSource)> {
    if sc.config.noise > 0.0 {
        let spec = NoiseSpec {
            level: sc.config.noise,
            seed: sc.config.seed,
        };
        return Ok((add_noise(&fwd.h_star, spec), DataSource::Noisy));
    }
    if sc.config.recovery.exact_reduced_data {
        return Ok((fwd.h_star.clone(), DataSource::Exact));
    }
    match reduced {
        Some(r) => Ok((r.trace.clone(), DataSource::Continued)),
        None => Err(HarnessError::MissingInput {
            stage: "recovery",
            what: "continued data (enable the continuation stage or set recovery.exact_reduced_data)",
        }),
    }
}

pub fn recovery_problem<'a>(sc: &'a Scenario, data: BoundaryTrace) -> Result<RecoveryProblem<'a>> {
    let mut p = RecoveryProblem::new(
        &sc.mesh,
        sc.config.alpha,
        sc.grid,
        sc.excitations.clone(),
        data,
        sc.config.recovery.beta,
    )?
    .with_observed(&sc.observed)?;
    p.eps = sc.config.recovery.eps_factor * sc.mesh.h();
    Ok(p)
}

/// Step that moves the level set by at most `h` in the first iteration.
pub fn first_step_gamma(problem: &RecoveryProblem, phi0: &[f64], a1: f64, a2: f64) -> Result<f64> {
    let g = problem.gradient(phi0, a1, a2)?;
    let gmax = g.d_phi_l2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax == 0.0 {
        return Ok(1.0);
    }
    Ok(problem.mesh.h() / gmax)
}

#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub result: RecoveryResult,
    pub gamma: f64,
    pub eps: f64,
    pub symmetric_difference: f64,
    /// Symmetric difference relative to the inclusion area.
    pub relative_error: f64,
}

pub fn recover(sc: &Scenario, data: BoundaryTrace) -> Result<RecoveryOutcome> {
    let rc = &sc.config.recovery;
    let problem = recovery_problem(sc, data)?;
    let phi0 = init_levelset(&sc.mesh, &sc.initial)?;
    let gamma = match rc.gamma {
        Some(g) => g,
        None => first_step_gamma(&problem, &phi0, rc.a1_init, rc.a2_init)?,
    };
    info!("level-set step {gamma:e}, Heaviside width {:e}", problem.eps);
    let opts = RecoveryOptions {
        iterations: sc.config.iterations(),
        gamma,
        gamma_a1: rc.gamma_a1,
        gamma_a2: rc.gamma_a2,
        monotone: rc.monotone,
        snapshot_every: rc.snapshot_every,
        ..RecoveryOptions::default()
    };
    let result = recover_interface(&problem, &phi0, rc.a1_init, rc.a2_init, &opts)
        .map_err(|source| HarnessError::Stage { stage: "recovery", source })?;
    let sd = symmetric_difference(&sc.mesh, &result.phi, &sc.inclusion);
    Ok(RecoveryOutcome {
        gamma,
        eps: problem.eps,
        symmetric_difference: sd,
        relative_error: sd / sc.inclusion.area(),
        result,
    })
}

pub fn trace_csv(h: &BoundaryTrace) -> String {
    let mut buf = Vec::new();
    h.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn order_csv(rows: &[OrderRow]) -> String {
    let mut s = String::from("t0,alpha_true,alpha_hat,c0,c1,residual\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{},{:.6},{:e},{:e},{:e}", r.t0, r.alpha_true, r.alpha_hat, r.c0, r.c1, r.residual);
    }
    s
}

/// Per-node continuation report; the extension error against `h*` is
/// included when available.
pub fn continuation_csv(red: &ReducedTrace, h_star: Option<&BoundaryTrace>, t_split: f64) -> String {
    let mut s = String::from("node,residual,degree,poles_in_window,fallback,extension_error\n");
    for d in &red.diagnostics {
        let err = h_star.map(|hs| {
            red.trace
                .times
                .iter()
                .enumerate()
                .filter(|(_, &t)| t > t_split)
                .map(|(i, _)| (red.trace.values[i][d.node] - hs.values[i][d.node]).abs())
                .fold(0.0f64, f64::max)
        });
        let _ = writeln!(
            s,
            "{},{:e},{},{},{},{}",
            d.node,
            d.residual,
            d.degree,
            d.poles_in_window,
            d.fallback as u8,
            err.map_or(String::new(), |e| format!("{e:e}"))
        );
    }
    s
}

pub fn convergence_csv(history: &[IterationRecord]) -> String {
    let mut s = String::from("iter,J,misfit,tv,grad_norm,a1,a2,reinit_flag\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{},{},{}",
            r.iter, r.j, r.misfit, r.tv, r.grad_norm, r.a1, r.a2, r.reinit as u8
        );
    }
    s
}

pub fn contours_csv(snapshots: &[Snapshot]) -> String {
    let mut s = String::from("iter,segment_id,x,y\n");
    for snap in snapshots {
        for (id, line) in snap.contours.iter().enumerate() {
            for p in line {
                let _ = writeln!(s, "{},{},{},{}", snap.iter, id, p[0], p[1]);
            }
        }
    }
    s
}

pub fn refinement_csv(kind: &str, rows: &[RefinementRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "{kind},{},{},{},{:e},{:e},{}",
            r.alpha,
            r.n,
            r.steps,
            r.error,
            r.raw_error,
            r.ratio.map_or(String::new(), |v| format!("{v:.4}"))
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// Derived quantities recorded next to the configuration.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Derived {
    pub h: f64,
    pub tau: f64,
    pub boundary_nodes: usize,
    pub inclusion_area: f64,
    pub data_source: Option<DataSource>,
    pub gamma: Option<f64>,
    pub heaviside_eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub input_sha256: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub derived: Derived,
    pub summary: BTreeMap<String, f64>,
    pub outputs: Vec<OutputEntry>,
    pub config: Config,
}

/// Writes artifacts into one directory and keeps their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.outputs = std::mem::take(&mut self.outputs);
        let text = toml::to_string(&manifest).expect("manifest is serialisable");
        let path = self.dir.join("manifest.toml");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Everything a run produced, for callers that want the numbers.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub forward: Option<ForwardData>,
    pub order: Vec<OrderRow>,
    pub reduced: Option<ReducedTrace>,
    pub recovery: Option<RecoveryOutcome>,
    pub summary: BTreeMap<String, f64>,
}

/// Runs the requested stages in order. Prerequisites of a later stage are
/// computed in memory even if their stage is skipped; only requested
/// stages write files. A supplied `measured` trace replaces the forward
/// solve for `h`.
pub fn run(
    sc: &Scenario,
    stages: &[Stage],
    measured: Option<BoundaryTrace>,
    out: &Path,
    command: &str,
    input_sha256: &str,
) -> Result<RunReport> {
    let mut w = ArtifactWriter::new(out)?;
    let mut report = RunReport::default();
    let mut derived = Derived {
        h: sc.mesh.h(),
        tau: sc.grid.tau(),
        boundary_nodes: sc.mesh.boundary_nodes().len(),
        inclusion_area: sc.inclusion.area(),
        ..Derived::default()
    };
    let wants = |s: Stage| stages.contains(&s);
    let result = (|| -> Result<()> {
        let needs_forward = wants(Stage::Forward) || wants(Stage::Continuation) || wants(Stage::Recovery);
        if needs_forward {
            let mut fwd = forward(sc)?;
            if let Some(h) = measured.clone() {
                fwd.h = h;
            }
            if wants(Stage::Forward) {
                w.write("h.csv", &trace_csv(&fwd.h))?;
                w.write("h_star.csv", &trace_csv(&fwd.h_star))?;
                report.summary.insert("h_sup".into(), fwd.h.sup_norm());
                report.summary.insert("h_star_sup".into(), fwd.h_star.sup_norm());
            }
            report.forward = Some(fwd);
        }
        if wants(Stage::Order) {
            report.order = order_table(sc)?;
            w.write("order_table.csv", &order_csv(&report.order))?;
        }
        let fwd = report.forward.as_ref();
        let continue_needed = wants(Stage::Continuation)
            || (wants(Stage::Recovery) && sc.config.noise == 0.0 && !sc.config.recovery.exact_reduced_data);
        if continue_needed {
            let fwd = fwd.expect("forward data computed above");
            let red = continue_data(sc, &fwd.h)?;
            if wants(Stage::Continuation) {
                w.write("hbar.csv", &trace_csv(&red.trace))?;
                w.write(
                    "continuation_nodes.csv",
                    &continuation_csv(&red, Some(&fwd.h_star), sc.config.t_split),
                )?;
                let tw: Vec<f64> = sc
                    .grid
                    .trapezoid_weights()
                    .iter()
                    .zip(sc.grid.times())
                    .map(|(w, t)| if t >= sc.config.t_split { *w } else { 0.0 })
                    .collect();
                let bw = sc.mesh.boundary_weights();
                let d = red.trace.sub(&fwd.h_star);
                let rel = (d.inner(&d, &tw, &bw) / fwd.h_star.inner(&fwd.h_star, &tw, &bw)).sqrt();
                report.summary.insert("continuation_relative_error".into(), rel);
                report.summary.insert(
                    "continuation_fallbacks".into(),
                    red.diagnostics.iter().filter(|d| d.fallback).count() as f64,
                );
            }
            report.reduced = Some(red);
        }
        if wants(Stage::Recovery) {
            let fwd = report.forward.as_ref().expect("forward data computed above");
            let (data, src) = recovery_data(sc, fwd, report.reduced.as_ref())?;
            derived.data_source = Some(src);
            w.write("recovery_data.csv", &trace_csv(&data))?;
            let outcome = recover(sc, data)?;
            derived.gamma = Some(outcome.gamma);
            derived.heaviside_eps = Some(outcome.eps);
            w.write("convergence.csv", &convergence_csv(&outcome.result.history))?;
            w.write("contours.csv", &contours_csv(&outcome.result.snapshots))?;
            let last = outcome.result.history.last().expect("history has the initial record");
            report.summary.insert("recovery_iterations".into(), last.iter as f64);
            report.summary.insert("recovery_final_j".into(), last.j);
            report.summary.insert("recovery_a1".into(), outcome.result.a1);
            report.summary.insert("recovery_a2".into(), outcome.result.a2);
            report
                .summary
                .insert("symmetric_difference".into(), outcome.symmetric_difference);
            report
                .summary
                .insert("symmetric_difference_relative".into(), outcome.relative_error);
            report.recovery = Some(outcome);
        }
        Ok(())
    })();
    // Partial artifacts keep a manifest even when a stage failed.
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        input_sha256: input_sha256.into(),
        seed: sc.config.seed,
        stages: stages.to_vec(),
        derived,
        summary: report.summary.clone(),
        outputs: Vec::new(),
        config: sc.config.clone(),
    };
    w.finish(manifest)?;
    result.map(|_| report)
}

/// Solver refinement study for `a = 1`, `u0 = cos(pi x) cos(pi y)`.
pub fn oracle_check(alphas: &[f64], out: &Path, input_sha256: &str) -> Result<Vec<RefinementRow>> {
    let mut w = ArtifactWriter::new(out)?;
    let mut csv = String::from("kind,alpha,n,steps,error,raw_error,ratio\n");
    let mut all = Vec::new();
    let mut summary = BTreeMap::new();
    for &alpha in alphas {
        let t = verify::temporal_refinement(alpha, 32, &[32, 64, 128])?;
        let s = verify::spatial_refinement(alpha, &[8, 16, 32], 256)?;
        csv.push_str(&refinement_csv("temporal", &t));
        csv.push_str(&refinement_csv("spatial", &s));
        for (kind, rows) in [("temporal", &t), ("spatial", &s)] {
            for (i, r) in rows.iter().enumerate().skip(1) {
                summary.insert(format!("{kind}_ratio_alpha{alpha}_{i}"), r.ratio.unwrap_or(f64::NAN));
            }
        }
        all.extend(t);
        all.extend(s);
    }
    w.write("refinement.csv", &csv)?;
    let cfg = Config::default();
    w.finish(Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: "oracle-check".into(),
        input_sha256: input_sha256.into(),
        seed: 0,
        stages: Vec::new(),
        derived: Derived::default(),
        summary,
        outputs: Vec::new(),
        config: cfg,
    })?;
    Ok(all)
}
