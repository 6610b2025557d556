//! The experiment pipelines behind each subcommand.
//!
//! Stages share one lazily solved 1D layer and one extension of it. Every
//! stage returns checks; errors become failed checks in the summary.

use std::cell::OnceCell;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use jumpdiff_core::energy::{cutoff_pair_integrals, McOptions};
use jumpdiff_core::extension::{
    calibrate_with_scale, hamiltonian_residual, modica_check, pohozaev_and_igamma, radial_monotonicity,
};
use jumpdiff_core::grid::default_gradient_tolerance;
use jumpdiff_core::quadrature::cutoff_for;
use jumpdiff_core::{
    build_quadrature, energy_scan, extend, linearized_eigen, log_cutoff, poincare_check, solve_layer, ExtensionField,
    Grid1D, Grid2D, GridFn, KernelSpec, Nonlinearity, OperatorHandle, SolveReport, Tail,
};

use crate::config::{Check, ExperimentConfig};
use crate::report::{write_csv, Bound, CheckResult, RunSummary};

type StageResult = Result<Vec<CheckResult>, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub struct Lab {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    nl: Nonlinearity,
    op: OnceCell<Result<OperatorHandle, String>>,
    layer: OnceCell<Result<SolveReport, String>>,
    field: OnceCell<Result<ExtensionField, String>>,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> Result<Self, String> {
        let nl = Nonlinearity::by_name(&cfg.nonlinearity).map_err(err)?;
        fs::create_dir_all(&out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
        Ok(Lab {
            cfg,
            out,
            nl,
            op: OnceCell::new(),
            layer: OnceCell::new(),
            field: OnceCell::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn op(&self) -> Result<&OperatorHandle, String> {
        self.op
            .get_or_init(|| {
                let g = &self.cfg.grid;
                let grid = Grid1D::new(g.half_width, g.points).map_err(err)?;
                let spec = &self.cfg.kernel;
                let q = build_quadrature(spec, &grid.into(), cutoff_for(spec, g.spacing(), g.reach)).map_err(err)?;
                OperatorHandle::new(q, self.cfg.c, self.cfg.mode).map_err(err)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn layer(&self) -> Result<&SolveReport, String> {
        self.layer
            .get_or_init(|| {
                let op = self.op()?;
                let g = &self.cfg.grid;
                let grid = Grid1D::new(g.half_width, g.points).map_err(err)?;
                let init = GridFn::from_fn(grid, Tail::layer(), |p| (p[0] / std::f64::consts::SQRT_2).tanh());
                solve_layer(op, &self.nl, &init, self.cfg.solver_tol).map_err(err)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Extension of the layer's trace; only fractional kernels have one.
    fn field(&self) -> Result<&ExtensionField, String> {
        self.field
            .get_or_init(|| {
                let alpha = match self.cfg.kernel {
                    KernelSpec::Fractional { alpha, .. } => alpha,
                    _ => return Err("extension checks need a fractional kernel".into()),
                };
                extend(&self.layer()?.solution, alpha).map_err(err)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn fractional_order(&self) -> Option<f64> {
        match self.cfg.kernel {
            KernelSpec::Fractional { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn run(&self, summary: &mut RunSummary, check: Check) {
        let extension_only = matches!(check, Check::Hamiltonian | Check::Modica | Check::Igamma);
        if extension_only && self.fractional_order().is_none() {
            summary.checks.push(CheckResult::skipped(check.name(), "needs a fractional kernel"));
            return;
        }
        match check {
            Check::Layer => summary.stage("layer", || self.layer_stage()),
            Check::Stability => summary.stage("stability", || self.stability_stage()),
            Check::Energy => summary.stage("energy", || self.energy_stage()),
            Check::Poincare => summary.stage("poincare", || self.poincare_stage()),
            Check::Cutoff => summary.stage("cutoff", || self.cutoff_stage()),
            Check::Calibration => summary.stage("calibration", || self.calibration_stage()),
            Check::Hamiltonian => summary.stage("hamiltonian", || self.hamiltonian_stage()),
            Check::Modica => summary.stage("modica", || self.modica_stage()),
            Check::Igamma => summary.stage("igamma", || self.igamma_stage()),
        }
    }

    fn layer_stage(&self) -> StageResult {
        let rep = self.layer()?;
        let u = &rep.solution;
        let x = u.grid.axis(0).nodes();
        let rows: Vec<Vec<f64>> = x.iter().zip(&u.values).map(|(&x, &v)| vec![x, v]).collect();
        csv(&self.path("solution.csv"), &["x", "u"], &rows)?;
        Ok(vec![
            CheckResult::measured("layer.residual", rep.final_residual, self.cfg.tolerances.residual, Bound::Upper)
                .with_detail(format!("{} Newton iterations", rep.newton_iterations)),
            CheckResult::measured("layer.monotone", f64::from(u8::from(rep.monotone)), 1.0, Bound::Lower),
        ])
    }

    fn stability_stage(&self) -> StageResult {
        let op = self.op()?;
        let u = &self.layer()?.solution;
        let reports = self
            .cfg
            .stability_radii
            .iter()
            .map(|&r| linearized_eigen(op, &self.nl, u, r).map_err(err))
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<Vec<f64>> = reports
            .iter()
            .map(|s| vec![s.radius, s.lambda1, s.residual, s.nodes as f64])
            .collect();
        csv(&self.path("stability.csv"), &["R", "lambda1", "residual", "nodes"], &rows)?;
        let tol = self.cfg.tolerances.stability;
        let min = reports.iter().map(|s| s.lambda1).fold(f64::INFINITY, f64::min);
        let rise = reports
            .windows(2)
            .map(|w| w[1].lambda1 - w[0].lambda1)
            .fold(0.0, f64::max);
        Ok(vec![
            CheckResult::measured("stability.lambda1_min", min, -tol, Bound::Lower),
            CheckResult::measured("stability.lambda1_rise", rise, tol, Bound::Upper)
                .with_detail("largest increase of lambda1 along the radius ladder"),
        ])
    }

    fn energy_stage(&self) -> StageResult {
        let op = self.op()?;
        let u = &self.layer()?.solution;
        let fit = energy_scan(u, op, &self.nl, &self.cfg.energy_radii).map_err(err)?;
        let rows: Vec<Vec<f64>> = fit
            .reports
            .iter()
            .map(|r| vec![r.radius, r.sob_local, r.sob_nonlocal, r.pot, r.total])
            .collect();
        csv(&self.path("energy.csv"), &["R", "sob_local", "sob_nonlocal", "pot", "total"], &rows)?;
        let slack = self.cfg.tolerances.energy_slack;
        let alpha = self.cfg.kernel_order();
        let rms = fit.rms_residual;
        let check = match self.cfg.kernel {
            KernelSpec::Truncated { .. } => CheckResult::measured("energy.exponent", fit.exponent, slack, Bound::Upper)
                .with_detail(format!("finite range; rms {rms:.2e}")),
            _ if alpha == 1.0 => CheckResult::measured("energy.exponent", fit.log_corrected_exponent, slack, Bound::Upper)
                .with_detail(format!("log-corrected; raw exponent {:.4}; rms {rms:.2e}", fit.exponent)),
            _ => CheckResult::measured("energy.exponent", fit.exponent, (1.0 - alpha).max(0.0) + slack, Bound::Upper)
                .with_detail(format!("order {alpha}; rms {rms:.2e}")),
        };
        Ok(vec![check])
    }

    fn poincare_stage(&self) -> StageResult {
        let p = &self.cfg.poincare;
        let alpha = self.cfg.kernel_order();
        let spec = KernelSpec::truncated(2, alpha, 1.0, p.delta0);
        let grid = Grid2D::square(p.half_width, p.points).map_err(err)?;
        let h = grid.x.spacing();
        let q = build_quadrature(&spec, &grid.into(), cutoff_for(&spec, h, 0.0)).map_err(err)?;
        let op = OperatorHandle::mixed(q, self.cfg.c).map_err(err)?;
        // the bump breaks y-invariance; keeping it odd in x pins the layer at x = 0
        let init = GridFn::from_fn(grid, Tail::layer(), |x| {
            (x[0] / std::f64::consts::SQRT_2).tanh() + 0.05 * x[0] * (-(x[0] * x[0] + (x[1] - 1.0).powi(2)) / 4.0).exp()
        });
        let sol = solve_layer(&op, &self.nl, &init, self.cfg.solver_tol).map_err(err)?;
        let eta = log_cutoff(grid, p.cutoff_radius).map_err(err)?;
        let rep = poincare_check(&sol.solution, &op, &eta, default_gradient_tolerance(&sol.solution)).map_err(err)?;
        csv(
            &self.path("poincare.csv"),
            &["curvature", "tangential", "a_term", "gradient_cutoff", "b_term", "lhs", "rhs", "margin"],
            &[vec![rep.curvature, rep.tangential, rep.a_term, rep.gradient_cutoff, rep.b_term, rep.lhs, rep.rhs, rep.margin]],
        )?;
        let scale = rep.rhs.abs().max(f64::MIN_POSITIVE);
        Ok(vec![
            CheckResult::measured("poincare.margin", rep.margin / scale, -self.cfg.tolerances.poincare, Bound::Lower)
                .with_detail("margin relative to rhs"),
            CheckResult::measured("poincare.a_term", rep.a_term.abs() / scale, 1e-10, Bound::Upper)
                .with_detail("x-profile solution: A term relative to rhs"),
        ])
    }

    fn cutoff_stage(&self) -> StageResult {
        let p = &self.cfg.poincare;
        let spec = KernelSpec::truncated(2, self.cfg.kernel_order(), 1.0, p.delta0);
        let opts = McOptions {
            samples: self.cfg.cutoff_samples,
            seed: self.cfg.seed,
        };
        let sig = self.cfg.tolerances.mc_sigmas;
        let mut rows = Vec::new();
        let (mut gamma56, mut i4) = (0.0f64, 0.0f64);
        let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
        for &r in &self.cfg.cutoff_radii {
            let ci = cutoff_pair_integrals(&spec, r, &opts).map_err(err)?;
            let mut row = vec![r];
            row.extend((0..6).map(|k| ci.near[k].value + ci.far[k].value));
            row.extend((0..6).map(|k| ci.near[k].std_err.hypot(ci.far[k].std_err)));
            rows.push(row);
            for k in [4, 5] {
                gamma56 = gamma56.max(ci.near[k].value.abs()).max(ci.far[k].value.abs());
            }
            if r - r.sqrt() > p.delta0 {
                i4 = i4.max(ci.near[3].value.abs()).max(ci.far[3].value.abs());
            }
            let i2 = ci.near[1].value + ci.far[1].value;
            let se = ci.near[1].std_err.hypot(ci.far[1].std_err);
            hi = hi.max((i2 + sig * se) * r.ln());
            lo = lo.min((i2 - sig * se) * r.ln());
        }
        let header = [
            "R", "I1", "I2", "I3", "I4", "I5", "I6", "se1", "se2", "se3", "se4", "se5", "se6",
        ];
        csv(&self.path("cutoff.csv"), &header, &rows)?;
        let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        Ok(vec![
            CheckResult::measured("cutoff.gamma56", gamma56, 0.0, Bound::Upper),
            CheckResult::measured("cutoff.i4", i4, 0.0, Bound::Upper).with_detail("radii with R - sqrt(R) > delta0"),
            CheckResult::measured("cutoff.i2_log_spread", spread, 2.0, Bound::Upper)
                .with_detail(format!("max/min of I2 log R at {sig} sigma")),
        ])
    }

    fn calibration_stage(&self) -> StageResult {
        let alpha = self.fractional_order().unwrap_or(1.0);
        let cal = calibrate_with_scale(alpha, 1.0).map_err(err)?;
        csv(
            &self.path("calibration.csv"),
            &["alpha", "d_alpha", "spread", "samples"],
            &[vec![alpha, cal.d_alpha, cal.spread, cal.samples as f64]],
        )?;
        let mut out = vec![CheckResult::measured("calibration.spread", cal.spread, self.cfg.tolerances.calibration, Bound::Upper)
            .with_detail(format!("d = {:.6}", cal.d_alpha))];
        if alpha == 1.0 {
            out.push(CheckResult::measured("calibration.unit_order", (cal.d_alpha - 1.0).abs(), 0.02, Bound::Upper));
        }
        Ok(out)
    }

    fn hamiltonian_stage(&self) -> StageResult {
        let v = self.field()?;
        let rep = hamiltonian_residual(v, self.cfg.c, &self.nl).map_err(err)?;
        let rows: Vec<Vec<f64>> = (0..rep.x.len())
            .map(|i| vec![rep.x[i], rep.residual[i], rep.unscaled[i]])
            .collect();
        csv(&self.path("hamiltonian.csv"), &["x", "residual", "unscaled"], &rows)?;
        let ends = rep.residual[0].abs().max(rep.residual[rep.residual.len() - 1].abs());
        let w = self.cfg.extension.window;
        Ok(vec![
            CheckResult::measured("hamiltonian.max", rep.max_abs(), self.cfg.tolerances.hamiltonian, Bound::Upper)
                .with_detail(format!("oscillation on |x| <= {w}: {:.3e}", rep.oscillation(w))),
            // only the local identity vanishes exactly where the layer is flat
            if self.cfg.c == 0.0 {
                CheckResult::measured("hamiltonian.tails", ends, 1e-10, Bound::Upper)
            } else {
                CheckResult::skipped("hamiltonian.tails", "exact zeros only for c = 0")
            },
        ])
    }

    fn modica_stage(&self) -> StageResult {
        let v = self.field()?;
        let rep = modica_check(v, self.cfg.c, &self.nl).map_err(err)?;
        let nx = rep.x.len();
        // a thinned copy keeps the file small
        let mut rows = Vec::new();
        for (j, &y) in rep.y.iter().enumerate().step_by(4) {
            for (i, &x) in rep.x.iter().enumerate().step_by(4) {
                rows.push(vec![x, y, rep.margin[j * nx + i]]);
            }
        }
        csv(&self.path("modica.csv"), &["x", "y", "margin"], &rows)?;
        let floor = -self.cfg.tolerances.modica_factor * rep.eps_disc;
        Ok(vec![CheckResult::measured("modica.margin", rep.min_margin(), floor, Bound::Lower)
            .with_detail(format!("discretization estimate {:.3e}", rep.eps_disc))])
    }

    fn igamma_stage(&self) -> StageResult {
        let v = self.field()?;
        let c = self.cfg.c;
        let eps = hamiltonian_residual(v, c, &self.nl).map_err(err)?.max_abs();
        let tol = self.cfg.tolerances.modica_factor * eps;
        let ext = &self.cfg.extension;
        let radial = radial_monotonicity(v, c, &self.nl, &ext.radii, tol).map_err(err)?;
        let ig = pohozaev_and_igamma(v, c, &self.nl, ext.gamma, &ext.radii).map_err(err)?;
        let rows: Vec<Vec<f64>> = radial.radii.iter().zip(&radial.values).map(|(&r, &i)| vec![r, i]).collect();
        csv(&self.path("radial.csv"), &["r", "I"], &rows)?;
        let rows: Vec<Vec<f64>> = (0..ig.radii.len())
            .map(|k| {
                let (l, r) = ig.inequality.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
                vec![
                    ig.radii[k],
                    ig.values[k],
                    ig.derivative_numeric.get(k).copied().unwrap_or(f64::NAN),
                    ig.derivative_formula.get(k).copied().unwrap_or(f64::NAN),
                    l,
                    r,
                ]
            })
            .collect();
        csv(&self.path("igamma.csv"), &["R", "I", "dI_numeric", "dI_formula", "lhs", "rhs"], &rows)?;
        Ok(vec![
            CheckResult::measured("igamma.radial_violation", radial.worst_violation(), radial.tolerance, Bound::Upper),
            CheckResult::measured("igamma.violation", ig.worst_violation(), ig.tolerance, Bound::Upper)
                .with_detail(format!("gamma = {}", ext.gamma)),
            CheckResult::measured("igamma.derivative", ig.derivative_mismatch(), self.cfg.tolerances.derivative, Bound::Upper),
        ])
    }
}

fn csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), String> {
    write_csv(path, header, rows).map_err(|e: io::Error| format!("cannot write {}: {e}", path.display()))
}

/// Runs `checks` in order and writes the summary files.
pub fn run_checks(lab: &Lab, command: &str, checks: &[Check]) -> RunSummary {
    let mut summary = RunSummary::new(command, lab.cfg.seed);
    for &c in checks {
        lab.run(&mut summary, c);
    }
    if let Err(e) = summary.write(&lab.out) {
        summary.checks.push(CheckResult::failed("summary.write", e.to_string()));
    }
    summary
}
