//! Doubly periodic structured quadrilateral mesh, the affine element map,
//! Piola transforms and global numbering for the three spaces.
//!
//! Local orderings (with `i` along ξ and `j` along η):
//!
//! * V0: `j*(p+1) + i`, basis `l_i(ξ) l_j(η)`.
//! * V1: x-component `j*(p+1) + i` (`i ≤ p`, `j < p`), basis `l_i(ξ) e_j(η)`;
//!   then y-component `p(p+1) + j*p + i` (`i < p`, `j ≤ p`), basis
//!   `e_i(ξ) l_j(η)`.
//! * V2: `j*p + i`, basis `e_i(ξ) e_j(η)`.
//!
//! Globally the nodes form an `Nx × Ny` periodic lattice with `Nx = nx·p`;
//! V1 x-fluxes sit on (node column, y-interval) pairs, y-fluxes on
//! (x-interval, node row) pairs, V2 on (x-interval, y-interval) cells.

use std::ops::{Deref, DerefMut};

use crate::error::{Result, SweError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicQuadMesh {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub p: usize,
}

impl PeriodicQuadMesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, p: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(SweError::InvalidArgument(format!(
                "element counts must be positive, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(SweError::InvalidArgument(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        if p == 0 {
            return Err(SweError::InvalidArgument("polynomial degree must be >= 1".into()));
        }
        Ok(Self { nx, ny, lx, ly, p })
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Determinant of the affine map from `[-1,1]²`.
    pub fn jac_det(&self) -> f64 {
        0.25 * self.dx() * self.dy()
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Physical coordinates of reference point `(ξ, η)` in element `e`.
    pub fn to_physical(&self, e: usize, xi: f64, eta: f64) -> (f64, f64) {
        let (ex, ey) = self.element_ij(e);
        let x = (ex as f64 + 0.5 * (xi + 1.0)) * self.dx();
        let y = (ey as f64 + 0.5 * (eta + 1.0)) * self.dy();
        (x, y)
    }

    /// Element and reference coordinates containing physical point `(x, y)`
    /// after periodic wrapping.
    pub fn locate(&self, x: f64, y: f64) -> (usize, f64, f64) {
        let xw = x.rem_euclid(self.lx) / self.dx();
        let yw = y.rem_euclid(self.ly) / self.dy();
        let ex = (xw.floor() as usize).min(self.nx - 1);
        let ey = (yw.floor() as usize).min(self.ny - 1);
        let xi = 2.0 * (xw - ex as f64) - 1.0;
        let eta = 2.0 * (yw - ey as f64) - 1.0;
        (ey * self.nx + ex, xi, eta)
    }

    /// Number of global nodes along x and y.
    pub fn node_counts(&self) -> (usize, usize) {
        (self.nx * self.p, self.ny * self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    V0,
    V1,
    V2,
}

/// Element-local to global maps with periodic identification.
#[derive(Debug, Clone)]
pub struct DofMaps {
    pub n_nodes_x: usize,
    pub n_nodes_y: usize,
    pub v0: Vec<Vec<usize>>,
    pub v1: Vec<Vec<usize>>,
    pub v2: Vec<Vec<usize>>,
}

impl DofMaps {
    pub fn new(mesh: &PeriodicQuadMesh) -> Self {
        let p = mesh.p;
        let (nxn, nyn) = mesh.node_counts();
        let mut v0 = Vec::with_capacity(mesh.n_elements());
        let mut v1 = Vec::with_capacity(mesh.n_elements());
        let mut v2 = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let (ex, ey) = mesh.element_ij(e);
            let gx = |i: usize| (ex * p + i) % nxn;
            let gy = |j: usize| (ey * p + j) % nyn;

            let mut m0 = Vec::with_capacity((p + 1) * (p + 1));
            for j in 0..=p {
                for i in 0..=p {
                    m0.push(gy(j) * nxn + gx(i));
                }
            }
            let mut m1 = Vec::with_capacity(2 * p * (p + 1));
            for j in 0..p {
                for i in 0..=p {
                    m1.push(gy(j) * nxn + gx(i));
                }
            }
            for j in 0..=p {
                for i in 0..p {
                    m1.push(nxn * nyn + gy(j) * nxn + gx(i));
                }
            }
            let mut m2 = Vec::with_capacity(p * p);
            for j in 0..p {
                for i in 0..p {
                    m2.push(gy(j) * nxn + gx(i));
                }
            }
            v0.push(m0);
            v1.push(m1);
            v2.push(m2);
        }
        Self {
            n_nodes_x: nxn,
            n_nodes_y: nyn,
            v0,
            v1,
            v2,
        }
    }

    pub fn dim(&self, space: Space) -> usize {
        let n = self.n_nodes_x * self.n_nodes_y;
        match space {
            Space::V0 | Space::V2 => n,
            Space::V1 => 2 * n,
        }
    }

    pub fn map(&self, space: Space) -> &[Vec<usize>] {
        match space {
            Space::V0 => &self.v0,
            Space::V1 => &self.v1,
            Space::V2 => &self.v2,
        }
    }
}

/// Builds the mesh and its DOF maps.
pub fn build_mesh(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    p: usize,
) -> Result<(PeriodicQuadMesh, DofMaps)> {
    let mesh = PeriodicQuadMesh::new(nx, ny, lx, ly, p)?;
    let dofs = DofMaps::new(&mesh);
    Ok((mesh, dofs))
}

/// Coefficient vector of a field in one of the discrete spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVec {
    pub space: Space,
    pub coeffs: Vec<f64>,
}

impl FieldVec {
    pub fn new(space: Space, coeffs: Vec<f64>) -> Self {
        Self { space, coeffs }
    }

    pub fn zeros(space: Space, dofs: &DofMaps) -> Self {
        Self::new(space, vec![0.0; dofs.dim(space)])
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }
}

impl Deref for FieldVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coeffs
    }
}

impl DerefMut for FieldVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }
}

/// Contravariant Piola map `u = J û / det J`.
pub fn piola_vector(mesh: &PeriodicQuadMesh, u_hat: [f64; 2]) -> [f64; 2] {
    [2.0 * u_hat[0] / mesh.dy(), 2.0 * u_hat[1] / mesh.dx()]
}

/// Inverse of [`piola_vector`]: physical vector to reference components.
pub fn pullback_velocity(mesh: &PeriodicQuadMesh, u: [f64; 2]) -> [f64; 2] {
    [0.5 * mesh.dy() * u[0], 0.5 * mesh.dx() * u[1]]
}
