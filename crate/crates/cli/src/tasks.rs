//! One runner per task kind; each turns a resolved spec into tables and a summary.

use std::sync::Arc;

use adiabatics::analysis::{fit_log_linear, fit_power_law, trk_sum};
use adiabatics::dynamics::{
    audit_scaling, coupled_reference, dressed_state, effective_trajectory, leakage_scan, velocity_sweep,
    AuditOptions, ClassicalOptions, EvolutionOptions, InitialMomentum, LeakageOptions, ModelFields, SweepOptions,
    TrajectoryRecord,
};
use adiabatics::geometry::{
    geometry_grid, induced_inertia, isotropic_inertia, scalar_potential, GridOptions, LevelGeometry,
};
use adiabatics::linalg::{spectral_norm_sym, RMatrix};
use adiabatics::models::{FastModel, MovingWellModel};
use adiabatics::ParameterPoint;
use serde_json::{json, Map, Value};

use crate::output::{Cell, Table};
use crate::spec::{BuiltModel, ExperimentSpec, TaskSpec, TrajectoryMethod};
use crate::CliError;

pub struct TaskOutput {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    /// Points that failed without aborting the task.
    pub failures: usize,
}

fn numeric(e: adiabatics::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

fn point(v: &[f64]) -> Result<ParameterPoint, CliError> {
    ParameterPoint::new(v.to_vec()).map_err(numeric)
}

fn flat(m: &RMatrix) -> impl Iterator<Item = Cell> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| Cell::Float(m[(i, j)])))
}

fn matrix_header(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).flat_map(move |i| (0..d).map(move |j| format!("{prefix}_{i}{j}")))
}

pub fn run(spec: &ExperimentSpec, built: &BuiltModel) -> Result<TaskOutput, CliError> {
    let model = built.model.as_ref();
    let num = &spec.numeric;
    let sopts = num.spectral();
    let d = model.n_params();
    let i_prim = isotropic_inertia(d, num.mass);
    let evolution = EvolutionOptions { dt: num.dt, stride: spec.output.stride, step_limit: num.step_limit, ..EvolutionOptions::default() };
    let mut summary = Map::new();
    let mut failures = 0;
    let mut tables = Vec::new();

    match &spec.task {
        TaskSpec::GeometryGrid { level, axes, fail_fast } => {
            let values: Vec<Vec<f64>> = axes.iter().map(|a| a.values()).collect();
            let mut points = vec![Vec::new()];
            for axis in &values {
                points = points
                    .into_iter()
                    .flat_map(|p| axis.iter().map(move |&x| [p.clone(), vec![x]].concat()))
                    .collect();
            }
            let grid = points.iter().map(|p| point(p)).collect::<Result<Vec<_>, _>>()?;
            let records = geometry_grid(model, &grid, *level, &i_prim, &sopts, GridOptions { fail_fast: *fail_fast })
                .map_err(numeric)?;
            let header: Vec<String> = (0..d)
                .map(|i| format!("X_{i}"))
                .chain(["E_n".to_string()])
                .chain((0..d).map(|i| format!("A_{i}")))
                .chain(matrix_header("g", d))
                .chain(matrix_header("F", d))
                .chain(matrix_header("I_ind", d))
                .chain(["Phi".to_string(), "Phi_tilde".to_string()])
                .collect();
            let mut table = Table::new("geometry", header);
            let mut failed = Table::new(
                "failures",
                (0..d).map(|i| format!("X_{i}")).chain(["error".to_string()]).collect(),
            );
            for (p, rec) in points.iter().zip(records) {
                match rec {
                    Ok(r) => {
                        let t = &r.tensors;
                        let row: Vec<Cell> = p
                            .iter()
                            .map(|&x| Cell::Float(x))
                            .chain([Cell::Float(t.energy)])
                            .chain(t.connection.iter().map(|&a| Cell::Float(a)))
                            .chain(flat(&t.metric))
                            .chain(flat(&t.curvature))
                            .chain(flat(&t.induced_inertia))
                            .chain([Cell::Float(t.scalar_potential), Cell::Float(r.field.scalar_potential)])
                            .collect();
                        table.push(row);
                    }
                    Err(e) => {
                        failed.push(p.iter().map(|&x| Cell::Float(x)).chain([Cell::Text(e.to_string())]).collect());
                    }
                }
            }
            failures = failed.rows.len();
            summary.insert("points".into(), json!(points.len()));
            summary.insert("level".into(), json!(level));
            tables.push(table);
            if failures > 0 {
                tables.push(failed);
            }
        }

        TaskSpec::VelocitySweep { level, origin, direction, speeds, duration, transient_fraction, tolerance, dressed_start } => {
            let opts = SweepOptions {
                evolution,
                duration: *duration,
                transient_fraction: *transient_fraction,
                tolerance: *tolerance,
                dressed_start: *dressed_start,
                spectral: sopts,
            };
            let origin_pt = point(origin)?;
            let sweep = velocity_sweep(model, &origin_pt, direction, speeds, *level, &opts).map_err(numeric)?;
            let mut table = Table::new("sweep", ["speed", "mean_shift", "ratio", "final_leakage"].map(String::from).to_vec());
            for r in &sweep.rows {
                table.push(vec![r.speed.into(), r.mean_shift.into(), r.ratio.into(), r.final_leakage.into()]);
            }
            let inertia = induced_inertia(model, &origin_pt, *level, &sopts).map_err(numeric)?;
            let norm: f64 = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = direction.iter().map(|x| x / norm).collect();
            let directional: f64 = (0..d).map(|i| (0..d).map(|j| u[i] * inertia[(i, j)] * u[j]).sum::<f64>()).sum();
            summary.insert("directional_induced_inertia".into(), json!(directional));
            summary.insert("slowest_ratio".into(), json!(sweep.slowest_ratio()));
            summary.insert("converged".into(), json!(sweep.converged));
            let positive: Vec<_> = sweep.rows.iter().filter(|r| r.mean_shift.abs() > 0.0).collect();
            if positive.len() >= 2 {
                let v: Vec<f64> = positive.iter().map(|r| r.speed).collect();
                let s: Vec<f64> = positive.iter().map(|r| r.mean_shift.abs()).collect();
                if let Ok(fit) = fit_log_linear(&[v], &s) {
                    summary.insert("log_slope".into(), json!(fit.exponents[0]));
                }
            }
            tables.push(table);
        }

        TaskSpec::LeakageScan { level, start, end, rates, floor, dressed_start } => {
            let opts = LeakageOptions { evolution, floor: *floor, dressed_start: *dressed_start, spectral: sopts };
            let scan = leakage_scan(model, &point(start)?, &point(end)?, rates, *level, &opts).map_err(numeric)?;
            let mut table =
                Table::new("leakage", ["rate", "final_leakage", "max_leakage", "censored"].map(String::from).to_vec());
            for r in &scan.rows {
                table.push(vec![r.rate.into(), r.final_leakage.into(), r.max_leakage.into(), r.censored.into()]);
            }
            summary.insert("correlation".into(), json!(scan.correlation));
            summary.insert("censored".into(), json!(scan.rows.iter().filter(|r| r.censored).count()));
            tables.push(table);
        }

        TaskSpec::Trajectory { level, start, velocity, duration, method, external_force, scalar_potential } => {
            let copts = ClassicalOptions { dt: num.dt, stride: spec.output.stride, step_limit: num.step_limit, keep_states: false };
            let mut effective = None;
            if *method != TrajectoryMethod::Coupled {
                let mut fields = ModelFields::new(built.model.clone(), *level, i_prim.clone())
                    .map_err(numeric)?
                    .with_step(num.fd_step)
                    .with_options(sopts);
                if let Some(f) = external_force {
                    fields = fields.with_external_force(f.clone()).map_err(numeric)?;
                }
                if !scalar_potential {
                    fields = fields.without_scalar_potential();
                }
                let rec = effective_trajectory(&fields, start, &InitialMomentum::Velocity(velocity.clone()), *duration, &copts)
                    .map_err(numeric)?;
                summary.insert("effective_energy_drift".into(), json!(rec.energy_drift()));
                summary.insert("effective_truncated".into(), json!(rec.truncated));
                tables.push(trajectory_table("effective", &rec, d, false));
                effective = Some(rec);
            }
            if *method != TrajectoryMethod::Effective {
                let x0 = point(start)?;
                let psi0 = dressed_state(model, &x0, velocity, *level, &sopts).map_err(numeric)?;
                let p0: Vec<f64> = velocity.iter().map(|v| v * num.mass).collect();
                let rec = coupled_reference(model, &i_prim, start, &p0, &psi0, *level, *duration, &copts).map_err(numeric)?;
                summary.insert("coupled_energy_drift".into(), json!(rec.energy_drift()));
                summary.insert("coupled_max_leakage".into(), json!(rec.max_leakage()));
                if let Some(eff) = &effective {
                    let n = eff.positions.len().min(rec.positions.len());
                    let dev = (0..n)
                        .map(|k| {
                            eff.positions[k].iter().zip(&rec.positions[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                        })
                        .fold(0.0, f64::max);
                    summary.insert("max_position_deviation".into(), json!(dev));
                }
                tables.push(trajectory_table("coupled", &rec, d, true));
            }
        }

        TaskSpec::CrossingScan { level, centre, direction, r_min, r_max, samples } => {
            let q = isotropic_inertia(d, 1.0 / num.mass);
            let norm: f64 = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radii: Vec<f64> =
                (0..*samples).map(|k| r_min * (r_max / r_min).powf(k as f64 / (*samples - 1) as f64)).collect();
            let mut table = Table::new("crossing", ["r", "sqrt_tr_g", "Phi", "I_ind_norm"].map(String::from).to_vec());
            let mut cols = [Vec::new(), Vec::new(), Vec::new()];
            for &r in &radii {
                let x: Vec<f64> = centre.iter().zip(direction).map(|(c, u)| c + r * u / norm).collect();
                let geo = LevelGeometry::compute(model, &point(&x)?, *level, &sopts).map_err(numeric)?;
                let (g, _) = geo.metric_and_curvature();
                let vals = [
                    g.trace().sqrt(),
                    scalar_potential(&g, &q, num.hbar).map_err(numeric)?,
                    spectral_norm_sym(&geo.induced_inertia().map_err(numeric)?),
                ];
                for (c, v) in cols.iter_mut().zip(vals) {
                    c.push(v);
                }
                table.push(vec![r.into(), vals[0].into(), vals[1].into(), vals[2].into()]);
            }
            for (name, col) in ["sqrt_tr_g", "Phi", "I_ind_norm"].iter().zip(&cols) {
                let value = match fit_power_law(&radii, col) {
                    Ok(f) => json!({ "exponent": f.exponent, "std_error": f.std_error, "decades": f.decades }),
                    Err(e) => json!({ "error": e.to_string() }),
                };
                summary.insert(format!("{name}_fit"), value);
            }
            tables.push(table);
        }

        TaskSpec::Trk { level, position, refine } => {
            let well = built.well.as_ref().expect("checked before running");
            let mut table = Table::new("trk", ["n_points", "spacing", "trk_sum", "inertia_ratio"].map(String::from).to_vec());
            let mut errors = Vec::new();
            let mut grids = vec![well.clone()];
            if *refine {
                grids.push(Arc::new(
                    MovingWellModel::new(
                        2 * well.n_points() - 1,
                        well.spacing() / 2.0,
                        well.mass(),
                        well.well().clone(),
                        well.stencil(),
                        num.hbar,
                    )
                    .map_err(numeric)?,
                ));
            }
            for m in &grids {
                let p = ParameterPoint::from(*position);
                let trk = trk_sum(m, &p, *level, &sopts).map_err(numeric)?;
                let ratio = induced_inertia(m.as_ref(), &p, *level, &sopts).map_err(numeric)?[(0, 0)] / m.mass();
                errors.push(((trk - 1.0).abs(), (ratio - 1.0).abs()));
                table.push(vec![m.n_points().into(), m.spacing().into(), trk.into(), ratio.into()]);
            }
            if errors.len() == 2 {
                summary.insert("trk_error_reduction".into(), json!(errors[0].0 / errors[1].0));
                summary.insert("inertia_error_reduction".into(), json!(errors[0].1 / errors[1].1));
            }
            tables.push(table);
        }

        TaskSpec::Inglis { theta } => {
            let m = built.cranked.as_ref().expect("checked before running");
            let inglis = m.inglis_inertia(*theta, &sopts).map_err(numeric)?;
            let rigid = m.rigid_inertia(*theta).map_err(numeric)?;
            let mut table = Table::new(
                "inglis",
                ["theta", "omega_x", "omega_z", "n_occupied", "inglis", "rigid", "ratio"].map(String::from).to_vec(),
            );
            table.push(vec![
                (*theta).into(),
                m.omega_x().into(),
                m.omega_z().into(),
                m.n_occupied().into(),
                inglis.into(),
                rigid.into(),
                (inglis / rigid).into(),
            ]);
            summary.insert("omega_x".into(), json!(m.omega_x()));
            summary.insert("ratio".into(), json!(inglis / rigid));
            tables.push(table);
        }

        TaskSpec::OrderAudit { level, centre, axes, speeds, periods, time_nodes, radial_nodes, angular_nodes } => {
            let fields = ModelFields::new(built.model.clone(), *level, i_prim.clone())
                .map_err(numeric)?
                .with_step(num.fd_step)
                .with_options(sopts);
            let opts = AuditOptions { time_nodes: *time_nodes, radial_nodes: *radial_nodes, angular_nodes: *angular_nodes };
            let audit = audit_scaling(&fields, centre, (axes[0], axes[1]), speeds, periods, &opts).map_err(numeric)?;
            let mut table = Table::new(
                "audit",
                ["speed", "period", "radius", "scalar_action", "berry_phase", "inertial_action"].map(String::from).to_vec(),
            );
            for s in &audit.samples {
                table.push(vec![
                    s.speed.into(),
                    s.period.into(),
                    s.radius.into(),
                    s.scalar_action.into(),
                    s.berry_phase.into(),
                    s.inertial_action.into(),
                ]);
            }
            for (name, fit) in [("scalar", &audit.scalar), ("berry", &audit.berry), ("inertial", &audit.inertial)] {
                summary.insert(
                    format!("{name}_exponents"),
                    json!({ "speed": fit.exponents[0], "period": fit.exponents[1] }),
                );
            }
            tables.push(table);
        }
    }
    Ok(TaskOutput { tables, summary, failures })
}

fn trajectory_table(name: &str, rec: &TrajectoryRecord, d: usize, with_leakage: bool) -> Table {
    let mut header: Vec<String> = ["t".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("X_{i}")))
        .chain((0..d).map(|i| format!("P_{i}")))
        .chain(["energy".to_string()])
        .collect();
    if with_leakage {
        header.push("leakage".into());
    }
    let mut table = Table::new(name, header);
    for k in 0..rec.times.len() {
        let mut row: Vec<Cell> = [Cell::Float(rec.times[k])]
            .into_iter()
            .chain(rec.positions[k].iter().map(|&x| Cell::Float(x)))
            .chain(rec.momenta[k].iter().map(|&p| Cell::Float(p)))
            .chain([Cell::Float(rec.conserved_energy[k])])
            .collect();
        if with_leakage {
            row.push(rec.leakage.get(k).copied().into());
        }
        table.push(row);
    }
    table
}

/// One-line description of a constructed model.
pub fn describe_model(model: &dyn FastModel) -> String {
    format!("{} ({} levels, {} slow coordinates)", model.name(), model.dim(), model.n_params())
}
