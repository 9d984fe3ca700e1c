//! Batch evaluation over a grid of spectral points, with CSV output and an
//! identity-monitoring report.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{AtmError, Result};
use crate::green::{jump_checks, GreenOptions, JumpReport, StackGreen};
use crate::input::SweepSpec;
use crate::linalg::CMat;
use crate::observables::{find_bound_states, transmission, BoundStateOptions};
use crate::par::{self, Execution};
use crate::sl_system::SpectralPoint;
use crate::stack::LayerStack;
use crate::transfer::{symplectic_report, SymplecticReport, Transconjugated};

/// Residual limits enforced at real-axis points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub symplectic: f64,
    pub jump: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { symplectic: 1e-8, jump: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub execution: Execution,
    pub thresholds: Thresholds,
    pub green: GreenOptions,
    /// Natural energy unit in eV, recorded in the report.
    pub energy_unit_ev: Option<f64>,
}

/// Everything computed at one `(Ω, κ)` point.
#[derive(Debug, Clone, Default)]
pub struct PointResult {
    pub omega: f64,
    pub eta: f64,
    pub kappa: [f64; 2],
    /// `T(z_right, z_left)` across the stack at the real-axis point.
    pub transfer: Option<CMat>,
    pub symplectic: Option<SymplecticReport>,
    /// `𝒢(z)` at each requested position, at `Ω + iη`.
    pub green_diagonal: Option<Vec<CMat>>,
    pub dos: Option<Vec<f64>>,
    pub jumps: Option<JumpReport>,
    pub transmission: Option<f64>,
    pub errors: Vec<String>,
}

impl PointResult {
    fn fail(&mut self, what: &str, e: AtmError) {
        self.errors.push(format!("{what}: {e}"));
    }
}

fn evaluate_point(stack: &LayerStack, spec: &SweepSpec, opts: &SweepOptions, omega: f64, kappa: [f64; 2]) -> PointResult {
    let mut r = PointResult { omega, eta: spec.eta, kappa, ..Default::default() };
    let out = &spec.outputs;
    let real = SpectralPoint::real(omega).with_kappa(kappa);
    let (zl, zr) = (stack.left_edge(), stack.right_edge());

    if out.transfer || out.identity_report {
        match stack.transfer(zl, zr, &real, &opts.green.transfer) {
            Ok(t) => {
                let hermitean = stack.left().is_hermitean()
                    && stack.right().is_hermitean()
                    && stack.layers().iter().all(|l| l.medium.is_hermitean());
                if out.identity_report && hermitean {
                    match Transconjugated::from_real_axis(&t).and_then(|tc| symplectic_report(&t, &tc)) {
                        Ok(s) => r.symplectic = Some(s),
                        Err(e) => r.fail("symplectic report", e),
                    }
                }
                if out.transfer {
                    r.transfer = Some(t.into_matrix());
                }
            }
            Err(e) => r.fail("transfer", e),
        }
    }
    if out.transmission {
        match transmission(stack, &real, &opts.green.transfer) {
            Ok(t) => r.transmission = t,
            Err(e) => r.fail("transmission", e),
        }
    }
    if out.needs_green() || out.identity_report {
        let run = || -> Result<(Vec<CMat>, Option<JumpReport>)> {
            let sp = SpectralPoint::causal(omega, spec.eta)?.with_kappa(kappa);
            let anchor = spec.anchor.unwrap_or(0.5 * (zl + zr));
            let g = StackGreen::new(stack, &sp, anchor, &opts.green)?;
            let diag = if out.needs_green() {
                spec.z.iter().map(|&z| g.diagonal(z)).collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let jumps = if out.identity_report {
                let mut samples = vec![(g.transfer_to(anchor)?, g.transconjugate_to(anchor)?)];
                for &z in &spec.z {
                    if let (Ok(t), Ok(tc)) = (g.transfer_to(z), g.transconjugate_to(z)) {
                        samples.push((t, tc));
                    }
                }
                Some(jump_checks(g.coefficients(), &samples, opts.thresholds.jump)?)
            } else {
                None
            };
            Ok((diag, jumps))
        };
        match run() {
            Ok((diag, jumps)) => {
                if out.dos {
                    match crate::green::local_dos(&diag, &SpectralPoint::causal(omega, spec.eta).expect("validated eta")) {
                        Ok(d) => r.dos = Some(d),
                        Err(e) => r.fail("dos", e),
                    }
                }
                if out.green_diagonal {
                    r.green_diagonal = Some(diag);
                }
                r.jumps = jumps;
            }
            Err(e) => r.fail("green function", e),
        }
    }
    r
}

/// Evaluate every `(κ, Ω)` point of the sweep, in row order (κ outer, Ω inner).
pub fn evaluate_sweep(stack: &LayerStack, spec: &SweepSpec, opts: &SweepOptions) -> Vec<PointResult> {
    let points: Vec<(f64, [f64; 2])> =
        spec.kappas.iter().flat_map(|&k| spec.omegas.iter().map(move |&om| (om, k))).collect();
    par::map(opts.execution, &points, |&(om, k)| evaluate_point(stack, spec, opts, om, k))
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub omega: f64,
    pub kappa: [f64; 2],
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedPoint {
    pub omega: f64,
    pub kappa: [f64; 2],
    pub errors: Vec<String>,
}

/// Largest residual of each monitored identity over the sweep.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MaxResiduals {
    pub symplectic_full: f64,
    pub det_defect: f64,
    pub block_aa_da: f64,
    pub block_dd_ad: f64,
    pub block_aa_dd: f64,
    pub a_jump: f64,
    pub z_jump: f64,
    pub diagonal_continuity: f64,
    pub coefficient_relations: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundStateRow {
    pub kappa: [f64; 2],
    pub omega: f64,
}

/// Identity-monitoring summary of a sweep, written as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub points: usize,
    pub eta: f64,
    /// Natural energy unit in eV, when the stack file fixed physical units.
    pub energy_unit_ev: Option<f64>,
    pub thresholds: Thresholds,
    pub max_residuals: MaxResiduals,
    pub violations: Vec<Violation>,
    pub failed_points: Vec<FailedPoint>,
    pub bound_states: Vec<BoundStateRow>,
}

impl SweepReport {
    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty()
    }
}

/// Aggregate per-point results into a report.
pub fn summarize(results: &[PointResult], spec: &SweepSpec, thresholds: Thresholds) -> SweepReport {
    let mut m = MaxResiduals::default();
    let mut violations = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        let mut check = |quantity: &str, value: f64, threshold: f64| {
            if !(value < threshold) {
                violations.push(Violation { omega: r.omega, kappa: r.kappa, quantity: quantity.into(), value, threshold });
            }
        };
        if let Some(s) = &r.symplectic {
            m.symplectic_full = m.symplectic_full.max(s.residual_full);
            m.det_defect = m.det_defect.max(s.det_defect);
            m.block_aa_da = m.block_aa_da.max(s.residual_60);
            m.block_dd_ad = m.block_dd_ad.max(s.residual_61);
            m.block_aa_dd = m.block_aa_dd.max(s.residual_62);
            if s.at_real_axis {
                check("symplectic", s.max_residual(), thresholds.symplectic);
            }
        }
        if let Some(j) = &r.jumps {
            m.a_jump = m.a_jump.max(j.a_jump);
            m.z_jump = m.z_jump.max(j.z_jump);
            m.diagonal_continuity = m.diagonal_continuity.max(j.continuity);
            m.coefficient_relations = m.coefficient_relations.max(j.coefficients.max_residual());
            check("jump", j.max_residual(), thresholds.jump);
        }
        if !r.errors.is_empty() {
            failed.push(FailedPoint { omega: r.omega, kappa: r.kappa, errors: r.errors.clone() });
        }
    }
    SweepReport {
        points: results.len(),
        eta: spec.eta,
        energy_unit_ev: None,
        thresholds,
        max_residuals: m,
        violations,
        failed_points: failed,
        bound_states: Vec::new(),
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

const BLOCKS: [&str; 4] = ["AA", "AD", "DA", "DD"];

fn header(spec: &SweepSpec, n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["omega_re", "omega_im", "kappa_x", "kappa_y"].iter().map(|s| s.to_string()).collect();
    let out = &spec.outputs;
    let cells = |prefix: &str, h: &mut Vec<String>| {
        for i in 0..n {
            for j in 0..n {
                h.push(format!("{prefix}_{i}{j}_re"));
                h.push(format!("{prefix}_{i}{j}_im"));
            }
        }
    };
    if out.transfer {
        for b in BLOCKS {
            cells(&format!("T_{b}"), &mut h);
        }
    }
    if out.green_diagonal {
        for k in 0..spec.z.len() {
            cells(&format!("G_z{k}"), &mut h);
        }
    }
    if out.dos {
        for k in 0..spec.z.len() {
            h.push(format!("dos_z{k}"));
        }
    }
    if out.transmission {
        h.push("transmission".into());
    }
    h
}

fn row(r: &PointResult, spec: &SweepSpec, n: usize) -> Vec<String> {
    let mut v = vec![num(r.omega), num(r.eta), num(r.kappa[0]), num(r.kappa[1])];
    let out = &spec.outputs;
    let push_block = |m: Option<&CMat>, row0: usize, col0: usize, v: &mut Vec<String>| {
        for i in 0..n {
            for j in 0..n {
                match m {
                    Some(m) => {
                        let x = m[(row0 + i, col0 + j)];
                        v.push(num(x.re));
                        v.push(num(x.im));
                    }
                    None => {
                        v.push("nan".into());
                        v.push("nan".into());
                    }
                }
            }
        }
    };
    if out.transfer {
        for (bi, _) in BLOCKS.iter().enumerate() {
            push_block(r.transfer.as_ref(), (bi / 2) * n, (bi % 2) * n, &mut v);
        }
    }
    if out.green_diagonal {
        for k in 0..spec.z.len() {
            push_block(r.green_diagonal.as_ref().map(|g| &g[k]), 0, 0, &mut v);
        }
    }
    if out.dos {
        for k in 0..spec.z.len() {
            v.push(r.dos.as_ref().map(|d| num(d[k])).unwrap_or_else(|| "nan".into()));
        }
    }
    if out.transmission {
        v.push(r.transmission.map(num).unwrap_or_else(|| "nan".into()));
    }
    v
}

/// Run the sweep and write `sweep.csv`, `bound_states.csv` (when requested)
/// and `report.json` into `out_dir`.
pub fn run_sweep(stack: &LayerStack, spec: &SweepSpec, out_dir: &Path, opts: &SweepOptions) -> Result<SweepReport> {
    let io = |e: std::io::Error| AtmError::Io { path: out_dir.display().to_string(), reason: e.to_string() };
    fs::create_dir_all(out_dir).map_err(io)?;
    let results = evaluate_sweep(stack, spec, opts);
    let mut report = summarize(&results, spec, opts.thresholds);
    report.energy_unit_ev = opts.energy_unit_ev;

    let n = stack.dim();
    let csv_err = |e: csv::Error| AtmError::Io { path: out_dir.join("sweep.csv").display().to_string(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv")).map_err(csv_err)?;
    w.write_record(header(spec, n)).map_err(csv_err)?;
    for r in &results {
        w.write_record(row(r, spec, n)).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    if spec.outputs.bound_states {
        let bracket = spec.bound_bracket.expect("validated with the sweep");
        let mut bw = csv::Writer::from_path(out_dir.join("bound_states.csv")).map_err(csv_err)?;
        bw.write_record(["kappa_x", "kappa_y", "index", "omega"]).map_err(csv_err)?;
        for &kappa in &spec.kappas {
            let bo = BoundStateOptions { kappa, execution: opts.execution, transfer: opts.green.transfer, ..Default::default() };
            match find_bound_states(stack, bracket, spec.bound_tol, &bo) {
                Ok(roots) => {
                    for (i, om) in roots.iter().enumerate() {
                        bw.write_record([num(kappa[0]), num(kappa[1]), i.to_string(), num(*om)]).map_err(csv_err)?;
                        report.bound_states.push(BoundStateRow { kappa, omega: *om });
                    }
                }
                Err(e) => report.failed_points.push(FailedPoint {
                    omega: f64::NAN,
                    kappa,
                    errors: vec![format!("bound states: {e}")],
                }),
            }
        }
        bw.flush().map_err(io)?;
    }

    let json = serde_json::to_string_pretty(&report).map_err(|e| AtmError::Io {
        path: out_dir.join("report.json").display().to_string(),
        reason: e.to_string(),
    })?;
    let mut f = fs::File::create(out_dir.join("report.json")).map_err(io)?;
    f.write_all(json.as_bytes()).map_err(io)?;
    f.write_all(b"\n").map_err(io)?;
    Ok(report)
}
