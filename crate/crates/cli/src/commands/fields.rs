//! `sample-field` and `solve-forward`.

use chance_design::fem::{Mesh, VtkWriter};
use chance_design::forward::{porosity_map, ChanceFunction, ForwardModel, Qoi, StateSolution, ThermalCompliance};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliResult, Stage};
use crate::run::RunDir;

/// Dense marginal variance is only extracted on modest meshes.
const DENSE_VARIANCE_LIMIT: usize = 4000;

pub fn sample_field(cfg: &RunConfig, run: &mut RunDir, count: usize) -> CliResult<usize> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let mesh = model.parameter_mesh();
    let design = vec![cfg.design; field.dim()];
    for i in 0..count {
        let m = field.sample(cfg.seed, i as u64);
        let phi = porosity_map(&design, &m).stage("porosity")?;
        let vtk = VtkWriter::new(mesh)
            .point_scalar("m", &m)
            .and_then(|w| w.point_scalar("porosity", &phi))
            .stage("vtk export")?
            .finish(&format!("sample {i} seed {}", cfg.seed));
        run.write(&format!("sample_{i:04}.vtk"), vtk.as_bytes())?;
    }
    if count > 0 && field.dim() <= DENSE_VARIANCE_LIMIT {
        let var = field.marginal_variance();
        let rows: Vec<Vec<f64>> = mesh.vertices().iter().zip(&var).map(|(p, v)| vec![p[0], p[1], *v]).collect();
        run.write_csv("marginal_variance.csv", &["x", "y", "variance"], &rows)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct ForwardSummary {
    design: f64,
    thermal_compliance: f64,
    stress_norm: f64,
    chance_function: f64,
    state_dofs: usize,
    parameters: usize,
}

/// Nodal field on the full mesh from parameter-mesh values (NaN on the beam).
fn lift(model: &ForwardModel, values: &[f64]) -> Vec<f64> {
    (0..model.mesh().n_vertices()).map(|v| model.vertex_param(v).map_or(f64::NAN, |k| values[k])).collect()
}

pub fn state_vtk(model: &ForwardModel, state: &StateSolution, phi: &[f64], title: &str) -> CliResult<String> {
    let mesh: &Mesh = model.mesh();
    let [ts, tf, tb] = model.temperatures(state);
    let w = VtkWriter::new(mesh)
        .point_scalar("theta_solid", &ts)
        .and_then(|w| w.point_scalar("theta_fluid", &tf))
        .and_then(|w| w.point_scalar("theta_beam", &tb))
        .and_then(|w| w.point_vector("displacement", &model.displacement(state)))
        .and_then(|w| w.point_scalar("porosity", &lift(model, phi)))
        .and_then(|w| w.cell_scalar("von_mises", &model.von_mises(state)))
        .and_then(|w| w.cell_scalar("pore_pressure", &model.pore_pressure(state)))
        .stage("vtk export")?;
    Ok(w.finish(title))
}

pub fn solve_forward(cfg: &RunConfig, run: &mut RunDir) -> CliResult<usize> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let design = vec![cfg.design; model.n_params()];
    let phi = porosity_map(&design, field.mean()).stage("porosity")?;
    let state = model.solve_state(&phi).stage("state solve")?;
    let q = ThermalCompliance::new(&model);
    let f = ChanceFunction::new(&model, cfg.cost.chance.clone());
    let summary = ForwardSummary {
        design: cfg.design,
        thermal_compliance: q.value(&state.x, &phi),
        stress_norm: f.stress_norm(&state.x),
        chance_function: f.value(&state.x, &phi),
        state_dofs: model.n_state(),
        parameters: model.n_params(),
    };
    run.write("state.vtk", state_vtk(&model, &state, &phi, "forward solution")?.as_bytes())?;
    run.write_json("summary.json", &summary)?;
    Ok(model.counter().total_pde_solves())
}
