//! Structural checks of the assembled operators.

use crate::mesh::Space;
use crate::operators::{Discretisation, QuadratureField};

/// Largest violations of the discrete complex identities.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorReport {
    /// `max |DIV·PERP|`.
    pub div_perp: f64,
    /// `max |D - M2·DIV|`, relative to `max |D|`.
    pub weak_div: f64,
    /// `max |R - M1·PERP|`, relative to `max |R|`.
    pub weak_perp: f64,
    /// `max |C + Cᵀ|` for a smooth non-constant PV, relative to `max |C|`.
    pub c_antisymmetry: f64,
    /// Largest relative asymmetry of the three mass matrices.
    pub mass_asymmetry: f64,
}

impl OperatorReport {
    pub const DIV_PERP_TOL: f64 = 1e-13;
    pub const RELATIVE_TOL: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.div_perp <= Self::DIV_PERP_TOL
            && [self.weak_div, self.weak_perp, self.c_antisymmetry, self.mass_asymmetry]
                .iter()
                .all(|v| *v <= Self::RELATIVE_TOL)
    }
}

pub fn check_operators(disc: &Discretisation) -> OperatorReport {
    let ops = &disc.ops;
    let div_perp = ops.div.matmul(&ops.perp).max_abs();
    let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    let m2div = ops.m2.matmul(&ops.div);
    let weak_div = rel(ops.d.linear_combination(1.0, &m2div, -1.0).max_abs(), ops.d.max_abs());
    let m1perp = ops.m1.matmul(&ops.perp);
    let weak_perp = rel(ops.r.linear_combination(1.0, &m1perp, -1.0).max_abs(), ops.r.max_abs());

    let (lx, ly) = (disc.mesh.lx, disc.mesh.ly);
    let tau = std::f64::consts::TAU;
    let values = disc
        .quadrature_coordinates()
        .iter()
        .map(|&(x, y)| 1.0 + (tau * x / lx).sin() * (2.0 * tau * y / ly).cos() + 0.3 * (tau * (x / lx + y / ly)).sin())
        .collect();
    let q = QuadratureField {
        n_qp: disc.n_qp(),
        values,
    };
    let c = disc.assemble_c(&q);
    let c_antisymmetry = rel(c.linear_combination(1.0, &c.transpose(), 1.0).max_abs(), c.max_abs());

    let mass_asymmetry = [Space::V0, Space::V1, Space::V2]
        .iter()
        .map(|&s| rel(disc.mass(s).asymmetry(), disc.mass(s).max_abs()))
        .fold(0.0, f64::max);

    OperatorReport {
        div_perp,
        weak_div,
        weak_perp,
        c_antisymmetry,
        mass_asymmetry,
    }
}
