//! Linear 2D magnetostatics in the out-of-plane vector potential `A_z`.
//!
//! First-order triangles, `B = (dA/dy, -dA/dx)`, homogeneous Dirichlet
//! condition on the outer air circle. The magnet enters through its
//! remanence as an equivalent magnetization-current source.

pub mod sparse;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::materials::{coenergy_density, magnetizing_field, MaterialModel};
use crate::mesh::{Mesh, Region};

pub use sparse::{CsrMatrix, Preconditioner, SolveStats, SolverMethod, SolverOptions};

/// Symmetry threshold for the assembled matrix, `max|K - K^T| / max|K|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MagnetostaticsError {
    #[error("no material assigned to region '{0}'")]
    MissingMaterial(Region),
    #[error("mesh has no interior nodes")]
    EmptySystem,
    #[error("assembled matrix is not symmetric (asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("linear solve failed: {detail} (relative residual {residual:.3e} after {iterations} iterations)")]
    Solver {
        residual: f64,
        iterations: usize,
        detail: String,
    },
}

/// Material per region tag.
pub type RegionMaterials = BTreeMap<Region, MaterialModel>;

fn material_of(materials: &RegionMaterials, r: Region) -> Result<&MaterialModel, MagnetostaticsError> {
    materials.get(&r).ok_or(MagnetostaticsError::MissingMaterial(r))
}

/// Shape-function data of a P1 triangle: `grad phi_i = (b_i, c_i) / (2 area)`.
#[derive(Debug, Clone, Copy)]
struct ElementGeom {
    area: f64,
    b: [f64; 3],
    c: [f64; 3],
}

fn element_geom(mesh: &Mesh, e: usize) -> ElementGeom {
    let t = mesh.triangles[e];
    let p = t.map(|i| mesh.nodes[i]);
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j].y - p[k].y;
        c[i] = p[k].x - p[j].x;
    }
    ElementGeom {
        area: mesh.signed_area(e),
        b,
        c,
    }
}

/// Reduced system after eliminating the Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Unknown index of each mesh node, `None` on the boundary.
    pub dof_of_node: Vec<Option<usize>>,
}

impl LinearSystem {
    /// Scatter a reduced solution back onto all mesh nodes.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.dof_of_node.iter().map(|d| d.map_or(0.0, |i| x[i])).collect()
    }
}

type Local = ([[f64; 3]; 3], [f64; 3]);

fn local_system(mesh: &Mesh, e: usize, m: &MaterialModel) -> Local {
    let g = element_geom(mesh, e);
    let nu = m.reluctivity();
    let br = m.remanence();
    let mut k = [[0.0; 3]; 3];
    let mut f = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = nu * (g.b[i] * g.b[j] + g.c[i] * g.c[j]) / (4.0 * g.area);
        }
        f[i] = 0.5 * nu * (br.x * g.c[i] - br.y * g.b[i]);
    }
    (k, f)
}

/// Assemble the stiffness matrix and remanence source.
///
/// With `parallel`, element matrices are computed on the rayon pool; the
/// reduction order is the element order either way, so the result is
/// bit-identical.
pub fn assemble(mesh: &Mesh, materials: &RegionMaterials, parallel: bool) -> Result<LinearSystem, MagnetostaticsError> {
    let mut mats = Vec::with_capacity(mesh.triangles.len());
    for &r in &mesh.regions {
        mats.push(*material_of(materials, r)?);
    }
    let mut dof_of_node = vec![None; mesh.nodes.len()];
    let mut on_boundary = vec![false; mesh.nodes.len()];
    for &i in &mesh.boundary_nodes {
        on_boundary[i] = true;
    }
    let mut n = 0;
    for (i, d) in dof_of_node.iter_mut().enumerate() {
        if !on_boundary[i] {
            *d = Some(n);
            n += 1;
        }
    }
    if n == 0 {
        return Err(MagnetostaticsError::EmptySystem);
    }
    let locals: Vec<Local> = if parallel {
        (0..mesh.triangles.len())
            .into_par_iter()
            .map(|e| local_system(mesh, e, &mats[e]))
            .collect()
    } else {
        (0..mesh.triangles.len()).map(|e| local_system(mesh, e, &mats[e])).collect()
    };
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    let mut rhs = vec![0.0; n];
    for (t, (k, f)) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            let Some(di) = dof_of_node[t[i]] else { continue };
            rhs[di] += f[i];
            for j in 0..3 {
                // A = 0 on the boundary, so eliminated columns drop out
                if let Some(dj) = dof_of_node[t[j]] {
                    triplets.push((di, dj, k[i][j]));
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n, &triplets);
    let asym = matrix.asymmetry();
    if asym >= SYMMETRY_TOL {
        return Err(MagnetostaticsError::Asymmetric(asym));
    }
    Ok(LinearSystem {
        matrix,
        rhs,
        dof_of_node,
    })
}

/// Nodal potential and element-wise fields on one mesh.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub a: Vec<f64>,
    pub b_elem: Vec<Vec2>,
    pub h_elem: Vec<Vec2>,
    pub mesh: Mesh,
    pub stats: SolveStats,
}

impl FieldSolution {
    /// Area-weighted mean of B over one region.
    pub fn mean_b(&self, r: Region) -> Vec2 {
        let mut acc = Vec2::zeros();
        let mut area = 0.0;
        for e in 0..self.mesh.triangles.len() {
            if self.mesh.regions[e] == r {
                let w = self.mesh.signed_area(e);
                acc += self.b_elem[e] * w;
                area += w;
            }
        }
        if area > 0.0 {
            acc / area
        } else {
            acc
        }
    }

    /// CSV with one line per element: centroid, B and region tag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_m,y_m,bx_T,by_T,region")?;
        for e in 0..self.mesh.triangles.len() {
            let c = self.mesh.centroid(e);
            let b = self.b_elem[e];
            writeln!(w, "{},{},{},{},{}", c.x, c.y, b.x, b.y, self.mesh.regions[e])?;
        }
        Ok(())
    }
}

/// Piecewise-constant flux density of each element for nodal potential `a`.
pub fn element_flux_density(mesh: &Mesh, a: &[f64]) -> Vec<Vec2> {
    (0..mesh.triangles.len())
        .map(|e| {
            let g = element_geom(mesh, e);
            let t = mesh.triangles[e];
            let mut b = Vec2::zeros();
            for i in 0..3 {
                b += Vec2::new(g.c[i], -g.b[i]) * a[t[i]];
            }
            b / (2.0 * g.area)
        })
        .collect()
}

/// Assemble and solve on `mesh`.
pub fn solve_field(
    mesh: &Mesh,
    materials: &RegionMaterials,
    opts: &SolverOptions,
) -> Result<FieldSolution, MagnetostaticsError> {
    solve_field_with(mesh, materials, opts, false)
}

/// [`solve_field`] with optional parallel element assembly.
pub fn solve_field_with(
    mesh: &Mesh,
    materials: &RegionMaterials,
    opts: &SolverOptions,
    parallel_assembly: bool,
) -> Result<FieldSolution, MagnetostaticsError> {
    let sys = assemble(mesh, materials, parallel_assembly)?;
    let (x, stats) = sparse::solve_spd(&sys.matrix, &sys.rhs, opts).map_err(|f| MagnetostaticsError::Solver {
        residual: f.relative_residual,
        iterations: f.iterations,
        detail: f.detail,
    })?;
    let a = sys.expand(&x);
    let b_elem = element_flux_density(mesh, &a);
    let mut h_elem = Vec::with_capacity(b_elem.len());
    for (b, &r) in b_elem.iter().zip(&mesh.regions) {
        h_elem.push(magnetizing_field(material_of(materials, r)?, *b));
    }
    Ok(FieldSolution {
        a,
        b_elem,
        h_elem,
        mesh: mesh.clone(),
        stats,
    })
}

/// Total magnetic coenergy of the extruded 2D field (J).
pub fn total_coenergy(sol: &FieldSolution, materials: &RegionMaterials, depth: f64) -> Result<f64, MagnetostaticsError> {
    let mut total = 0.0;
    for (e, b) in sol.b_elem.iter().enumerate() {
        let m = material_of(materials, sol.mesh.regions[e])?;
        total += coenergy_density(m, *b) * sol.mesh.signed_area(e);
    }
    Ok(total * depth)
}
