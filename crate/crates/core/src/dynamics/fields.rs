use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{geometry_grid, record_from, GridOptions, GridRecord, LevelGeometry};
use crate::linalg::{self, RMatrix};
use crate::models::FastModel;
use crate::spectral::{ParameterPoint, SpectralOptions};

/// Effective-field data at one slow configuration, with the derivatives the
/// equations of motion need.
#[derive(Debug, Clone)]
pub struct FieldSample {
    /// `U = V_BO + Phi~ - f.X`
    pub potential: f64,
    pub potential_gradient: Vec<f64>,
    pub scalar_potential: f64,
    pub connection: Vec<f64>,
    pub curvature: RMatrix,
    pub total_inertia: RMatrix,
    pub inverse_inertia: RMatrix,
    /// `d_k I~`, one matrix per coordinate.
    pub inertia_gradient: Vec<RMatrix>,
    pub induced_inertia: RMatrix,
}

/// Anything that can supply effective fields at arbitrary slow coordinates.
///
/// Sampling outside the supported region must return [`Error::OutOfDomain`].
pub trait FieldSource: Send + Sync {
    fn n_params(&self) -> usize;
    fn sample(&self, x: &[f64]) -> Result<FieldSample>;
}

/// Position-independent fields: constant inertia and curvature, linear potential.
#[derive(Debug, Clone)]
pub struct UniformField {
    pub force: Vec<f64>,
    pub curvature: RMatrix,
    pub total_inertia: RMatrix,
    pub induced_inertia: RMatrix,
    pub scalar_potential: f64,
}

impl UniformField {
    pub fn free(inertia: RMatrix) -> Self {
        let d = inertia.nrows();
        Self {
            force: vec![0.0; d],
            curvature: RMatrix::zeros(d, d),
            induced_inertia: RMatrix::zeros(d, d),
            total_inertia: inertia,
            scalar_potential: 0.0,
        }
    }
}

impl FieldSource for UniformField {
    fn n_params(&self) -> usize {
        self.total_inertia.nrows()
    }

    fn sample(&self, x: &[f64]) -> Result<FieldSample> {
        let d = self.n_params();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let work: f64 = self.force.iter().zip(x).map(|(f, x)| f * x).sum();
        Ok(FieldSample {
            potential: self.scalar_potential - work,
            potential_gradient: self.force.iter().map(|f| -f).collect(),
            scalar_potential: self.scalar_potential,
            connection: vec![0.0; d],
            curvature: self.curvature.clone(),
            inverse_inertia: linalg::spd_inverse(&self.total_inertia, "total inertia")?,
            total_inertia: self.total_inertia.clone(),
            inertia_gradient: vec![RMatrix::zeros(d, d); d],
            induced_inertia: self.induced_inertia.clone(),
        })
    }
}

/// Fields evaluated directly from the model by exact diagonalization, with
/// central differences (step `step`) for the gradients of `U` and `I~`.
pub struct ModelFields {
    model: Arc<dyn FastModel>,
    level: usize,
    primitive_inertia: RMatrix,
    options: SpectralOptions,
    step: f64,
    external_force: Vec<f64>,
    scalar_potential: bool,
}

impl ModelFields {
    pub fn new(model: Arc<dyn FastModel>, level: usize, primitive_inertia: RMatrix) -> Result<Self> {
        let d = model.n_params();
        if primitive_inertia.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: primitive_inertia.nrows() });
        }
        Ok(Self {
            model,
            level,
            primitive_inertia,
            options: SpectralOptions::default(),
            step: 1e-4,
            external_force: vec![0.0; d],
            scalar_potential: true,
        })
    }

    /// Adds the potential `-f.X` of a constant external force.
    pub fn with_external_force(mut self, force: Vec<f64>) -> Result<Self> {
        if force.len() != self.model.n_params() {
            return Err(Error::DimensionMismatch { expected: self.model.n_params(), found: force.len() });
        }
        self.external_force = force;
        Ok(self)
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_options(mut self, options: SpectralOptions) -> Self {
        self.options = options;
        self
    }

    /// Drops `Phi~` from the potential (diagnostic use: isolates its effect).
    pub fn without_scalar_potential(mut self) -> Self {
        self.scalar_potential = false;
        self
    }

    pub fn model(&self) -> &Arc<dyn FastModel> {
        &self.model
    }

    pub fn primitive_inertia(&self) -> &RMatrix {
        &self.primitive_inertia
    }

    fn record(&self, x: &[f64]) -> Result<GridRecord> {
        let p = ParameterPoint::new(x.to_vec())?;
        let geo = LevelGeometry::compute(self.model.as_ref(), &p, self.level, &self.options)?;
        record_from(&geo, &self.primitive_inertia)
    }

    fn potential_of(&self, rec: &GridRecord, x: &[f64]) -> f64 {
        let work: f64 = self.external_force.iter().zip(x).map(|(f, x)| f * x).sum();
        let phi = if self.scalar_potential { rec.field.scalar_potential } else { 0.0 };
        rec.field.v_bo + phi - work
    }
}

impl FieldSource for ModelFields {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    fn sample(&self, x: &[f64]) -> Result<FieldSample> {
        let d = self.n_params();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let centre = self.record(x)?;
        let mut grad = vec![0.0; d];
        let mut igrad = Vec::with_capacity(d);
        for k in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += self.step;
            xm[k] -= self.step;
            let (rp, rm) = (self.record(&xp)?, self.record(&xm)?);
            grad[k] = (self.potential_of(&rp, &xp) - self.potential_of(&rm, &xm)) / (2.0 * self.step);
            igrad.push((&rp.field.total_inertia - &rm.field.total_inertia) / (2.0 * self.step));
        }
        Ok(FieldSample {
            potential: self.potential_of(&centre, x),
            potential_gradient: grad,
            scalar_potential: if self.scalar_potential { centre.field.scalar_potential } else { 0.0 },
            connection: centre.field.connection,
            curvature: centre.tensors.curvature,
            total_inertia: centre.field.total_inertia,
            inverse_inertia: centre.field.inverse_inertia,
            inertia_gradient: igrad,
            induced_inertia: centre.tensors.induced_inertia,
        })
    }
}

#[derive(Debug, Clone)]
struct NodeData {
    potential: f64,
    scalar_potential: f64,
    connection: Vec<f64>,
    curvature: RMatrix,
    total_inertia: RMatrix,
    induced_inertia: RMatrix,
}

/// Multilinear interpolation of precomputed effective fields on a rectilinear grid.
///
/// Gradients are those of the interpolant itself, so the interpolated dynamics
/// is exactly Hamiltonian within each cell.
#[derive(Debug, Clone)]
pub struct GridFields {
    axes: Vec<Vec<f64>>,
    nodes: Vec<NodeData>,
}

impl GridFields {
    /// Evaluates the model on every node of the tensor grid spanned by `axes`.
    pub fn build(
        model: &dyn FastModel,
        level: usize,
        primitive_inertia: &RMatrix,
        axes: Vec<Vec<f64>>,
        options: &SpectralOptions,
    ) -> Result<Self> {
        if axes.len() != model.n_params() {
            return Err(Error::DimensionMismatch { expected: model.n_params(), found: axes.len() });
        }
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidParameter("grid axes need >= 2 increasing nodes".into()));
            }
        }
        let points = tensor_points(&axes)?;
        let records = geometry_grid(model, &points, level, primitive_inertia, options, GridOptions { fail_fast: true })?;
        let nodes = records
            .into_iter()
            .map(|r| {
                let r = r?;
                Ok(NodeData {
                    potential: r.field.v_bo + r.field.scalar_potential,
                    scalar_potential: r.field.scalar_potential,
                    connection: r.field.connection,
                    curvature: r.tensors.curvature,
                    total_inertia: r.field.total_inertia,
                    induced_inertia: r.tensors.induced_inertia,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes, nodes })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        // last axis fastest, matching tensor_points
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.len() + i)
    }

    /// Cell lower corner and local coordinates in `[0, 1]` per axis.
    fn locate(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let mut cell = Vec::with_capacity(x.len());
        let mut frac = Vec::with_capacity(x.len());
        let mut width = Vec::with_capacity(x.len());
        for (xi, a) in x.iter().zip(&self.axes) {
            let (lo, hi) = (a[0], a[a.len() - 1]);
            if !(*xi >= lo && *xi <= hi) {
                return Err(Error::OutOfDomain(x.to_vec()));
            }
            let j = a.partition_point(|v| v <= xi).clamp(1, a.len() - 1) - 1;
            let w = a[j + 1] - a[j];
            cell.push(j);
            frac.push((xi - a[j]) / w);
            width.push(w);
        }
        Ok((cell, frac, width))
    }

    /// Interpolated `U` and `I~` at `x`.
    pub fn interpolate_scalar_and_inertia(&self, x: &[f64]) -> Result<(f64, RMatrix)> {
        let s = self.sample(x)?;
        Ok((s.potential, s.total_inertia))
    }

    /// Largest relative discrepancy between interpolated and directly computed
    /// `U` and `I~` at the cell centres.
    pub fn refinement_check(&self, model: &dyn FastModel, level: usize, primitive_inertia: &RMatrix, options: &SpectralOptions) -> Result<f64> {
        let mids: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
            .collect();
        let mut worst = 0.0f64;
        for p in tensor_points(&mids)? {
            let geo = LevelGeometry::compute(model, &p, level, options)?;
            let direct = record_from(&geo, primitive_inertia)?;
            let (u, i) = self.interpolate_scalar_and_inertia(p.coords())?;
            let u_direct = direct.field.v_bo + direct.field.scalar_potential;
            worst = worst.max((u - u_direct).abs() / u_direct.abs().max(1e-300));
            let di = &direct.field.total_inertia;
            worst = worst.max((&i - di).amax() / di.amax());
        }
        Ok(worst)
    }
}

fn tensor_points(axes: &[Vec<f64>]) -> Result<Vec<ParameterPoint>> {
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        out.push(ParameterPoint::new(idx.iter().zip(axes).map(|(&i, a)| a[i]).collect())?);
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

impl FieldSource for GridFields {
    fn n_params(&self) -> usize {
        self.axes.len()
    }

    fn sample(&self, x: &[f64]) -> Result<FieldSample> {
        let d = self.n_params();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let (cell, frac, width) = self.locate(x)?;
        let zero = RMatrix::zeros(d, d);
        let mut potential = 0.0;
        let mut phi = 0.0;
        let mut grad = vec![0.0; d];
        let mut conn = vec![0.0; d];
        let mut curv = zero.clone();
        let mut inertia = zero.clone();
        let mut induced = zero.clone();
        let mut igrad = vec![zero; d];
        for corner in 0..(1usize << d) {
            let mut idx = cell.clone();
            let mut w = 1.0;
            let mut dw = vec![1.0; d];
            for k in 0..d {
                let upper = (corner >> k) & 1 == 1;
                if upper {
                    idx[k] += 1;
                }
                let (wk, dk) = if upper { (frac[k], 1.0 / width[k]) } else { (1.0 - frac[k], -1.0 / width[k]) };
                w *= wk;
                for (j, g) in dw.iter_mut().enumerate() {
                    *g *= if j == k { dk } else { wk };
                }
            }
            let node = &self.nodes[self.flat_index(&idx)];
            potential += w * node.potential;
            phi += w * node.scalar_potential;
            for k in 0..d {
                conn[k] += w * node.connection[k];
                grad[k] += dw[k] * node.potential;
                igrad[k] += &node.total_inertia * dw[k];
            }
            curv += &node.curvature * w;
            inertia += &node.total_inertia * w;
            induced += &node.induced_inertia * w;
        }
        Ok(FieldSample {
            potential,
            potential_gradient: grad,
            scalar_potential: phi,
            connection: conn,
            curvature: curv,
            inverse_inertia: linalg::spd_inverse(&inertia, "interpolated total inertia")?,
            total_inertia: inertia,
            inertia_gradient: igrad,
            induced_inertia: induced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{SpinFieldModel, SpinProfile};

    fn spin() -> Arc<dyn FastModel> {
        Arc::new(
            SpinFieldModel::new(
                1,
                SpinProfile::Linear { offset: [0.3, 0.0, 1.0], jacobian: vec![[1.0, 0.0, 0.2], [0.0, 0.5, 0.0]] },
                1.0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn grid_reproduces_nodes_and_converges() {
        let model = spin();
        let i_prim = RMatrix::identity(2, 2) * 10.0;
        let o = SpectralOptions::default();
        let axis = |n: usize| (0..n).map(|k| -0.2 + 0.4 * k as f64 / (n - 1) as f64).collect::<Vec<_>>();
        let coarse = GridFields::build(model.as_ref(), 0, &i_prim, vec![axis(5), axis(5)], &o).unwrap();
        let fine = GridFields::build(model.as_ref(), 0, &i_prim, vec![axis(9), axis(9)], &o).unwrap();
        let direct = ModelFields::new(model.clone(), 0, i_prim.clone()).unwrap();
        let node = [axis(5)[1], axis(5)[3]];
        let (a, b) = (coarse.sample(&node).unwrap(), direct.sample(&node).unwrap());
        assert!((a.potential - b.potential).abs() < 1e-14);
        let e1 = coarse.refinement_check(model.as_ref(), 0, &i_prim, &o).unwrap();
        let e2 = fine.refinement_check(model.as_ref(), 0, &i_prim, &o).unwrap();
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
        assert!(matches!(coarse.sample(&[0.3, 0.0]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn grid_gradient_is_the_interpolant_slope() {
        let model = spin();
        let i_prim = RMatrix::identity(2, 2) * 3.0;
        let axis: Vec<f64> = (0..6).map(|k| -0.25 + 0.1 * k as f64).collect();
        let g = GridFields::build(model.as_ref(), 0, &i_prim, vec![axis.clone(), axis], &SpectralOptions::default()).unwrap();
        let x = [0.013, -0.071];
        let s = g.sample(&x).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (g.sample(&xp).unwrap().potential - g.sample(&xm).unwrap().potential) / (2.0 * h);
            assert!((fd - s.potential_gradient[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn model_fields_gradient_is_consistent() {
        let f = ModelFields::new(spin(), 0, RMatrix::identity(2, 2) * 5.0).unwrap()
            .with_external_force(vec![0.1, -0.2])
            .unwrap();
        let x = [0.05, 0.02];
        let s = f.sample(&x).unwrap();
        let h = 1e-3;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.sample(&xp).unwrap().potential - f.sample(&xm).unwrap().potential) / (2.0 * h);
            assert!((fd - s.potential_gradient[k]).abs() < 1e-6);
        }
        assert!((&s.total_inertia * &s.inverse_inertia - RMatrix::identity(2, 2)).amax() < 1e-10);
    }
}
