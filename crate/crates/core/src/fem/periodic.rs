//! Identification of opposite face nodes of the reference cell.

use thiserror::Error;

use super::sparse::CsrMatrix;
use crate::geometry::CellMesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodicError {
    #[error("pair ({0}, {1}) does not differ by a unit shift")]
    InconsistentPair(usize, usize),
    #[error("node {0} appears in more than one pair on the same face")]
    DuplicateNode(usize),
}

/// Map from mesh nodes to reduced degrees of freedom (the matrix `P`).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub dof_of_node: Vec<usize>,
    pub n_dofs: usize,
    /// Number of nodes sharing each reduced dof.
    pub multiplicity: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn periodic_dofmap(cell: &CellMesh) -> Result<DofMap, PeriodicError> {
    let nodes = &cell.mesh.nodes;
    let n = nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for (pairs, axis) in [(&cell.left_right, 0usize), (&cell.bottom_top, 1usize)] {
        let mut seen = vec![false; n];
        for &(a, b) in pairs.iter() {
            let (pa, pb) = (nodes[a], nodes[b]);
            let other = 1 - axis;
            if (pb[axis] - pa[axis] - 1.0).abs() > 1e-12 || (pb[other] - pa[other]).abs() > 1e-12 {
                return Err(PeriodicError::InconsistentPair(a, b));
            }
            for x in [a, b] {
                if std::mem::replace(&mut seen[x], true) {
                    return Err(PeriodicError::DuplicateNode(x));
                }
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut dof_of_root = vec![usize::MAX; n];
    let mut dof_of_node = vec![0; n];
    let mut multiplicity = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if dof_of_root[r] == usize::MAX {
            dof_of_root[r] = multiplicity.len();
            multiplicity.push(0);
        }
        dof_of_node[i] = dof_of_root[r];
        multiplicity[dof_of_node[i]] += 1;
    }
    Ok(DofMap { dof_of_node, n_dofs: multiplicity.len(), multiplicity })
}

impl DofMap {
    pub fn identity(n: usize) -> Self {
        DofMap { dof_of_node: (0..n).collect(), n_dofs: n, multiplicity: vec![1; n] }
    }

    pub fn n_nodes(&self) -> usize {
        self.dof_of_node.len()
    }

    /// `P x`: copies each reduced value to all its nodes.
    pub fn prolong(&self, x: &[f64]) -> Vec<f64> {
        self.dof_of_node.iter().map(|&d| x[d]).collect()
    }

    /// `Pᵀ b`: sums nodal contributions.
    pub fn restrict(&self, b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_dofs];
        for (i, &d) in self.dof_of_node.iter().enumerate() {
            r[d] += b[i];
        }
        r
    }

    /// Reduced values obtained by averaging over each class.
    pub fn average(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.restrict(u);
        for (v, &m) in r.iter_mut().zip(&self.multiplicity) {
            *v /= m as f64;
        }
        r
    }

    /// Orthogonal projection of a nodal field onto periodic fields.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.prolong(&self.average(u))
    }

    /// `Pᵀ A P`.
    pub fn reduce_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        let mut t = Vec::with_capacity(a.nnz());
        for i in 0..a.n_rows {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                t.push((self.dof_of_node[i], self.dof_of_node[a.col_idx[p]], a.values[p]));
            }
        }
        let mut r = CsrMatrix::from_triplets(self.n_dofs, self.n_dofs, t);
        r.symmetric = a.symmetric && r.symmetric;
        r
    }
}

/// Reduces `(A, b)` to the periodic subspace: returns `(PᵀAP, Pᵀb, P)`.
pub fn apply_periodic_constraints(
    cell: &CellMesh,
    a: &CsrMatrix,
    b: &[f64],
) -> Result<(CsrMatrix, Vec<f64>, DofMap), PeriodicError> {
    let map = periodic_dofmap(cell)?;
    Ok((map.reduce_matrix(a), map.restrict(b), map))
}
