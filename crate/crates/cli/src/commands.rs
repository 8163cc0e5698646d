//! The pipelines behind each subcommand.
//!
//! Every command returns its tables plus a list of failed invariants; the
//! caller decides what to write and which exit code to use.

use std::sync::Arc;

use prestrain_core::ansatz::{
    energy3d, h_sweep, kirchhoff_curved_ansatz, wrinkled_flat_ansatz, CurvedData, RateFit, SweepTable, WrinkleParams,
};
use prestrain_core::effective::{effective_model, PlateModel};
use prestrain_core::elastic::{law_from_descriptor, ElasticLaw, Q3Field};
use prestrain_core::midsurface::{build_surface, gamma_energy, gamma_energy_direct, Midsurface};
use prestrain_core::prestrain::{AbarSpec, Prestrain, PrestrainField};
use prestrain_core::quadrature::ThicknessQuadrature;
use prestrain_core::regimes::{
    beating_rotation, example_corner, example_cylinder, example_oscillation, nearest_rotation_gap, order_h_diagnostic,
    restricted_gap, AffineFamily, CylinderFamily, DoublyOscillatingFamily, ExponentFit, GapConfig, MetricFamily,
    SplitThicknessFamily,
};
use prestrain_core::verify::{run_suites, VerifyOptions};
use prestrain_core::{sampling, SymMat2, SymMat3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{num, Table};

/// Zero-energy tolerance per quadrature point for the exact-metric constructions.
pub const ZERO_ENERGY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub invariant_failures: Vec<String>,
}

impl Outcome {
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.invariant_failures.push(what.into());
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.check_command(cmd)?;
    match cmd {
        Command::Reduce => cmd_reduce(cfg),
        Command::Energy => cmd_energy(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Wrinkle => cmd_wrinkle(cfg),
        Command::Regimes => cmd_regimes(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

struct Sampled {
    quad: ThicknessQuadrature,
    field: PrestrainField,
    q3: Q3Field,
    model: PlateModel,
}

fn sample(cfg: &RunConfig, law: &dyn ElasticLaw) -> Result<Sampled, CliError> {
    let grid = cfg.grid.grid();
    let points = grid.points();
    let quad = ThicknessQuadrature::gauss(cfg.quad_nodes);
    let field = PrestrainField::sample(&cfg.prestrain, &points, &quad);
    let q3 = Q3Field::from_law(law, &points, &quad.nodes).context("law")?;
    let model = effective_model(&field, &q3, &quad).context("reduction")?;
    Ok(Sampled { quad, field, q3, model })
}

fn midsurface(cfg: &RunConfig) -> Result<Midsurface, CliError> {
    let grid = cfg.grid.grid();
    let mid = build_surface(cfg.surface.build().as_ref(), grid).context("surface")?;
    mid.with_metric(&vec![cfg.prestrain.abar.eval(); grid.len()])
        .context("surface")
}

fn rate_string(rate: &RateFit) -> String {
    match rate {
        RateFit::Fitted { rate, .. } => num(*rate),
        RateFit::NotApplicable => "n/a".into(),
    }
}

fn exponent_string(fit: &ExponentFit) -> String {
    match fit.exponent() {
        Some(e) => num(e),
        None => "below_noise".into(),
    }
}

fn sym2_cells(s: &SymMat2) -> [String; 3] {
    [num(s.a11), num(s.a22), num(s.a12)]
}

/// Effective plate model per grid node.
pub fn cmd_reduce(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let law = cfg.law()?;
    let s = sample(cfg, law.as_ref())?;
    let grid = cfg.grid.grid();
    let mut table = Table::new(
        "reduce",
        &[
            "x1", "x2", "t2_00", "t2_01", "t2_02", "t2_11", "t2_12", "t2_22", "n_11", "n_22", "n_12", "residue",
        ],
    );
    for (x, p) in grid.points().iter().zip(&s.model.points) {
        let mut row = vec![num(x[0]), num(x[1])];
        row.extend(p.t2_star.upper_entries().iter().map(|v| num(*v)));
        row.extend(sym2_cells(&p.n_star));
        row.push(num(p.residue));
        table.push(row);
    }
    let weights = grid.trapezoid_weights();
    let total_residue: f64 = prestrain_core::par::pairwise_sum(
        &s.model
            .points
            .iter()
            .zip(&weights)
            .map(|(p, w)| p.residue * w)
            .collect::<Vec<_>>(),
    );
    let min_eig = s.model.min_t2_eigenvalue();
    let min_residue = s.model.points.iter().map(|p| p.residue).fold(f64::INFINITY, f64::min);
    let mut out = Outcome::default();
    out.require(
        min_eig > 0.0,
        format!("effective bending tensor not positive: {min_eig:e}"),
    );
    out.require(min_residue >= -1e-12, format!("negative residue {min_residue:e}"));
    out.tables.push(table);
    out.tables.push(Table::summary(
        "reduce_summary",
        vec![
            ("points", s.model.len().to_string()),
            ("quad_nodes", s.quad.len().to_string()),
            ("min_t2_eigenvalue", num(min_eig)),
            ("total_residue", num(total_residue)),
            ("min_residue", num(min_residue)),
        ],
    ));
    Ok(out)
}

/// Limit energy of the configured surface, closed form and direct minimum.
pub fn cmd_energy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let law = cfg.law()?;
    let s = sample(cfg, law.as_ref())?;
    let mid = midsurface(cfg)?;
    let tol = cfg.tolerances.isometry;
    let closed = gamma_energy(&mid, &s.model, tol).context("limit energy")?;
    let direct = gamma_energy_direct(&mid, &s.field, &s.q3, &s.quad, tol).context("direct limit energy")?;
    let mut table = Table::new(
        "energy",
        &["x1", "x2", "h_11", "h_22", "h_12", "density", "density_direct"],
    );
    for (p, x) in mid.grid.points().iter().enumerate() {
        let mut row = vec![num(x[0]), num(x[1])];
        row.extend(sym2_cells(&mid.curvature[p]));
        row.push(num(closed.density[p]));
        row.push(num(direct.density[p]));
        table.push(row);
    }
    let rel = (closed.total - direct.total).abs() / direct.total.abs().max(f64::MIN_POSITIVE);
    let rel = if closed.total == direct.total { 0.0 } else { rel };
    let mut out = Outcome::default();
    out.require(
        rel <= cfg.tolerances.energy_agreement,
        format!("closed-form and direct energies differ by {rel:e}"),
    );
    out.tables.push(table);
    out.tables.push(Table::summary(
        "energy_summary",
        vec![
            ("total", num(closed.total)),
            ("total_direct", num(direct.total)),
            ("relative_difference", num(rel)),
        ],
    ));
    Ok(out)
}

fn sweep_rows(name: &str, table: &SweepTable) -> Table {
    let mut t = Table::new(name, &["h", "energy", "target", "error", "relative_error"]);
    for r in &table.rows {
        t.push(vec![
            num(r.h),
            num(r.value),
            num(table.target),
            num(r.error),
            num(r.error / table.target.abs().max(f64::MIN_POSITIVE)),
        ]);
    }
    t
}

fn require_identity_abar(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    match cfg.prestrain.abar {
        AbarSpec::Identity => Ok(()),
        AbarSpec::Constant { value } if value.max_abs_diff(&SymMat3::identity()) == 0.0 => Ok(()),
        _ => Err(CliError::Config {
            path: "prestrain.abar".into(),
            message: format!("{what} needs the identity reference metric"),
        }),
    }
}

/// Curved-ansatz sweep and its target, exposed for tests.
pub fn curved_sweep(cfg: &RunConfig) -> Result<(SweepTable, SymMat2), CliError> {
    require_identity_abar(cfg, "the curved ansatz")?;
    if !cfg.surface.has_constant_curvature_form() {
        return Err(CliError::Config {
            path: "surface".into(),
            message: "the curved ansatz needs a constant second fundamental form".into(),
        });
    }
    let law = cfg.law()?;
    let s = sample(cfg, law.as_ref())?;
    let mid = midsurface(cfg)?;
    let target = gamma_energy(&mid, &s.model, cfg.tolerances.isometry)
        .context("limit energy")?
        .total;
    let centre = cfg.grid.grid().index(cfg.grid.n1 / 2, cfg.grid.n2 / 2);
    let membrane = s.model.points[centre].optimal_membrane(&mid.curvature[centre]);
    let surface = cfg.surface.build();
    let prestrain: Arc<dyn Prestrain> = Arc::new(cfg.prestrain.clone());
    let grid = cfg.grid.grid();
    let table = h_sweep(&cfg.h_list, target, |h| {
        let ansatz = kirchhoff_curved_ansatz(
            surface.clone(),
            CurvedData::from_membrane(&membrane),
            prestrain.clone(),
            law.clone(),
            h,
            &s.quad.nodes,
        )?;
        energy3d(&ansatz, prestrain.as_ref(), law.as_ref(), &grid, &s.quad)
    })
    .context("curved ansatz")?;
    Ok((table, membrane))
}

/// `E/h²` of the curved ansatz along `h_list` against the limit energy.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (table, membrane) = curved_sweep(cfg)?;
    let err = table.final_relative_error();
    let mut out = Outcome::default();
    out.require(
        err <= cfg.tolerances.max_relative_error,
        format!(
            "final relative error {err:e} exceeds {:e}",
            cfg.tolerances.max_relative_error
        ),
    );
    out.tables.push(sweep_rows("sweep", &table));
    let [m11, m22, m12] = sym2_cells(&membrane);
    out.tables.push(Table::summary(
        "sweep_summary",
        vec![
            ("target", num(table.target)),
            ("final_relative_error", num(err)),
            ("rate", rate_string(&table.rate)),
            ("monotone_tail", table.monotone_tail.to_string()),
            ("membrane_11", m11),
            ("membrane_22", m22),
            ("membrane_12", m12),
        ],
    ));
    Ok(out)
}

/// Wrinkled-ansatz sweep, its target, and the worst corrugation residual.
pub fn wrinkle_sweep(cfg: &RunConfig) -> Result<(SweepTable, f64), CliError> {
    require_identity_abar(cfg, "the wrinkled ansatz")?;
    let law = cfg.law()?;
    let quad = ThicknessQuadrature::gauss(cfg.quad_nodes);
    let grid = cfg.grid.grid();
    // ½|Ω| ∫ Q₂(s − β(t)) dt, with B and W independent of x′
    let probe = [grid.point(cfg.grid.n1 / 2, cfg.grid.n2 / 2)];
    let field = PrestrainField::sample(&cfg.prestrain, &probe, &quad);
    let q3 = Q3Field::from_law(law.as_ref(), &probe, &quad.nodes).context("law")?;
    let model = effective_model(&field, &q3, &quad).context("reduction")?;
    let p = &model.points[0];
    let s = cfg.wrinkle.s;
    let per_area: f64 = (0..quad.len())
        .map(|k| quad.weights[k] * p.l2[k].eval(&(s - p.beta[k])))
        .sum();
    let target = 0.5 * grid.area() * per_area;
    let params = WrinkleParams {
        s,
        k: cfg.wrinkle.k,
        gamma: cfg.wrinkle.gamma,
    };
    let surface = cfg.surface.build();
    let prestrain: Arc<dyn Prestrain> = Arc::new(cfg.prestrain.clone());
    let mut residual = 0.0f64;
    let table = h_sweep(&cfg.h_list, target, |h| {
        let ansatz = wrinkled_flat_ansatz(surface.clone(), params, prestrain.clone(), law.clone(), h, &quad.nodes)?;
        let corr = ansatz.corrugation();
        residual = grid.points().iter().map(|x| corr.residual(*x)).fold(residual, f64::max);
        energy3d(&ansatz, prestrain.as_ref(), law.as_ref(), &grid, &quad)
    })
    .context("wrinkled ansatz")?;
    Ok((table, residual))
}

/// `E/h²` of the wrinkled ansatz on a flat sheet.
pub fn cmd_wrinkle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (table, residual) = wrinkle_sweep(cfg)?;
    let err = table.final_relative_error();
    let mut out = Outcome::default();
    out.require(
        err <= cfg.wrinkle.max_relative_error,
        format!(
            "final relative error {err:e} exceeds {:e}",
            cfg.wrinkle.max_relative_error
        ),
    );
    out.require(residual <= 1e-12, format!("corrugation identity residual {residual:e}"));
    out.tables.push(sweep_rows("wrinkle", &table));
    out.tables.push(Table::summary(
        "wrinkle_summary",
        vec![
            ("target", num(table.target)),
            ("final_relative_error", num(err)),
            ("rate", rate_string(&table.rate)),
            ("monotone_tail", table.monotone_tail.to_string()),
            ("corrugation_residual", num(residual)),
        ],
    ));
    Ok(out)
}

fn commuting_pair(rng: &mut ChaCha8Rng) -> (SymMat3, SymMat3) {
    let q = sampling::random_rotation(rng);
    let mut diag = || {
        nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(
            sampling::uniform(rng, 0.3, 3.0),
            sampling::uniform(rng, 0.3, 3.0),
            sampling::uniform(rng, 0.3, 3.0),
        ))
    };
    let (da, dm) = (diag(), diag());
    (
        SymMat3::sym_of(&(q * da * q.transpose())),
        SymMat3::sym_of(&(q * dm * q.transpose())),
    )
}

/// The large-prestrain constructions, the nearest-rotation check, metric families and the gradient gap.
pub fn cmd_regimes(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rc = &cfg.regimes;
    let quad = ThicknessQuadrature::gauss(cfg.quad_nodes);
    let mut out = Outcome::default();

    let mut cyl = Table::new(
        "regimes_cylinder",
        &[
            "h",
            "alpha",
            "energy",
            "max_integrand",
            "amplitude_at_half",
            "l2_sq_deviation",
            "sign_change",
        ],
    );
    let small = prestrain_core::midsurface::Grid::unit(9, 5);
    for &alpha in &rc.cylinder_alpha {
        for &h in &rc.cylinder_h {
            let r = example_cylinder(h, alpha, &small, &quad).context("regimes.cylinder")?;
            out.require(
                r.max_integrand <= ZERO_ENERGY_TOL,
                format!("cylinder example energy {:e} at h={h}, alpha={alpha}", r.max_integrand),
            );
            cyl.push(vec![
                num(h),
                num(alpha),
                num(r.energy),
                num(r.max_integrand),
                num(r.amplitude_at_half),
                num(r.l2_sq_deviation),
                r.sign_change.to_string(),
            ]);
        }
    }
    out.tables.push(cyl);

    let mut corner = Table::new(
        "regimes_corner",
        &[
            "h",
            "radius",
            "max_integrand",
            "sup_metric_defect",
            "l1_metric_defect",
            "curvature",
            "curvature_fd",
            "midplane_defect",
        ],
    );
    for &h in &rc.corner_h {
        let r = example_corner(h, rc.corner_lambda, &quad).context("regimes.corner")?;
        out.require(
            r.max_integrand <= ZERO_ENERGY_TOL,
            format!("corner example energy {:e} at h={h}", r.max_integrand),
        );
        corner.push(vec![
            num(h),
            num(r.radius),
            num(r.max_integrand),
            num(r.sup_metric_defect),
            num(r.l1_metric_defect),
            num(r.curvature),
            num(r.curvature_fd),
            num(r.midplane_defect),
        ]);
    }
    out.tables.push(corner);

    let osc = example_oscillation(&rc.oscillation_h, rc.oscillation_alpha, rc.oscillation_beta)
        .context("regimes.oscillation")?;
    let mut osc_t = Table::new(
        "regimes_oscillation",
        &["h", "max_integrand", "scaled_deviation", "scaled_bending", "metric_l2"],
    );
    for r in &osc.rows {
        out.require(
            r.max_integrand <= ZERO_ENERGY_TOL,
            format!("oscillation example energy {:e} at h={}", r.max_integrand, r.h),
        );
        osc_t.push(vec![
            num(r.h),
            num(r.max_integrand),
            num(r.scaled_deviation),
            num(r.scaled_bending),
            num(r.metric_l2),
        ]);
    }
    out.tables.push(osc_t);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rot = Table::new(
        "regimes_rotation",
        &["pair", "kind", "identity_value", "best_value", "violation"],
    );
    for i in 0..rc.rotation_pairs {
        let (a, m) = commuting_pair(&mut rng);
        let r = nearest_rotation_gap(&a, &m, rc.rotation_samples, &mut rng).context("regimes.rotation")?;
        out.require(r.violation <= 1e-12, format!("identity beaten for commuting pair {i}"));
        rot.push(vec![
            i.to_string(),
            "commuting".into(),
            num(r.identity_value),
            num(r.sampled_min),
            num(r.violation),
        ]);
    }
    for i in 0..rc.rotation_pairs {
        let a = sampling::random_spd3(&mut rng, 0.2);
        let m = sampling::random_spd3(&mut rng, 0.2);
        let b = beating_rotation(&a, &m).context("regimes.rotation")?;
        out.require(
            b.value < b.identity_value,
            format!("no rotation beats the identity for pair {i}"),
        );
        rot.push(vec![
            i.to_string(),
            "non_commuting".into(),
            num(b.identity_value),
            num(b.value),
            num(0.0),
        ]);
    }
    out.tables.push(rot);

    let families: Vec<Box<dyn MetricFamily>> = vec![
        Box::new(CylinderFamily { alpha: 0.5 }),
        Box::new(AffineFamily {
            abar: cfg.prestrain.abar.eval(),
            b: cfg.prestrain.b.eval(0.0),
        }),
        Box::new(DoublyOscillatingFamily { alpha: 2.0, beta: 3.0 }),
        Box::new(SplitThicknessFamily),
    ];
    let mut metric = Table::new(
        "regimes_metric",
        &[
            "family",
            "h",
            "l2_sq_deviation",
            "l1_metric",
            "l1_metric_inplane",
            "inplane_thickness_variation",
            "thickness_variation",
            "pointwise_rotation_sq",
            "averaged_rotation_sq",
        ],
    );
    let mut fits = Table::new(
        "regimes_metric_fits",
        &[
            "family",
            "l1_exponent",
            "l2_exponent",
            "pointwise_rotation_exponent",
            "averaged_rotation_exponent",
            "h2_consistent",
            "stable",
        ],
    );
    let opt = |v: Option<f64>| v.map(num).unwrap_or_else(|| "n/a".into());
    for fam in &families {
        let r = order_h_diagnostic(fam.as_ref(), &rc.metric_h).context("regimes.metric")?;
        for row in &r.rows {
            if let Some(e) = row.max_integrand {
                out.require(
                    e <= ZERO_ENERGY_TOL,
                    format!("{} energy {e:e} at h={}", r.family, row.h),
                );
            }
            metric.push(vec![
                r.family.clone(),
                num(row.h),
                num(row.l2_sq_deviation),
                num(row.l1_metric),
                num(row.l1_metric_inplane),
                num(row.inplane_thickness_variation),
                num(row.thickness_variation),
                opt(row.pointwise_rotation_sq),
                opt(row.averaged_rotation_sq),
            ]);
        }
        let opt_fit = |f: Option<ExponentFit>| f.map(|f| exponent_string(&f)).unwrap_or_else(|| "n/a".into());
        fits.push(vec![
            r.family.clone(),
            exponent_string(&r.l1_exponent),
            exponent_string(&r.l2_exponent),
            opt_fit(r.pointwise_rotation_exponent),
            opt_fit(r.averaged_rotation_exponent),
            r.h2_consistent.to_string(),
            r.l1_exponent.is_stable(0.05).to_string(),
        ]);
    }
    out.tables.push(metric);
    out.tables.push(fits);

    let mut summary = vec![
        ("oscillation_regime", format!("{:?}", osc.regime)),
        ("oscillation_exponent", exponent_string(&osc.exponent)),
        ("oscillation_predicted_exponent", num(osc.predicted_exponent)),
        ("oscillation_metric_exponent", exponent_string(&osc.metric_exponent)),
    ];
    match cfg.prestrain.abar {
        AbarSpec::Identity => {
            let law = cfg.law()?;
            let gap_cfg = GapConfig {
                max_iterations: rc.gap_max_iterations,
                ..GapConfig::default()
            };
            let g = restricted_gap(&cfg.prestrain, law.as_ref(), &rc.gap_grid.grid(), &quad, &gap_cfg)
                .context("regimes.gap")?;
            out.require(
                g.gap >= -1e-10,
                format!("restricted minimum below the free one by {:e}", -g.gap),
            );
            summary.extend([
                ("gap_restricted", num(g.restricted)),
                ("gap_unrestricted", num(g.unrestricted)),
                ("gap", num(g.gap)),
                ("gap_iterations", g.iterations.to_string()),
                ("gap_relative_residual", num(g.relative_residual)),
            ]);
        }
        AbarSpec::Constant { .. } => summary.push(("gap", "skipped (non-identity reference metric)".into())),
    }
    out.tables.push(Table::summary("regimes_summary", summary));
    Ok(out)
}

/// Invariant suites on the configured law plus any extra laws.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut laws: Vec<Arc<dyn ElasticLaw>> = vec![cfg.law()?];
    for d in &cfg.verify.extra_laws {
        laws.push(law_from_descriptor(d).context("verify.extra_laws")?);
    }
    let report = run_suites(&VerifyOptions {
        seed: cfg.seed,
        samples: cfg.verify.samples,
        laws,
        b_profile: cfg.prestrain.b.clone(),
        quad_nodes: cfg.quad_nodes,
    });
    let mut table = Table::new("verify", &["suite", "check", "measured", "tolerance", "passed", "note"]);
    let mut out = Outcome::default();
    for c in &report.checks {
        out.require(c.passed, c.to_string());
        table.push(vec![
            c.suite.clone(),
            c.name.clone(),
            num(c.measured),
            num(c.tolerance),
            c.passed.to_string(),
            c.note.clone().unwrap_or_default(),
        ]);
    }
    out.tables.push(table);
    Ok(out)
}
