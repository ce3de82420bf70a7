//! Global numbering of the Taylor-Hood fields.
//!
//! The system vector is laid out as `[u (2 per Q2 node, interleaved) | p (Q1) | phi (Q1)]`.

use std::collections::HashMap;

use crate::mesh::{CellKey, IPoint, QuadMesh};

/// Which unknown a DoF belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Ux,
    Uy,
    P,
    Phi,
}

/// Number of local DoFs of one cell: 18 displacement, 4 pressure, 4 phase-field.
pub const CELL_DOFS: usize = 26;
pub const CELL_U: usize = 18;

#[derive(Clone, Debug)]
pub struct DofMap {
    q2_nodes: Vec<IPoint>,
    q1_nodes: Vec<IPoint>,
    q2_index: HashMap<IPoint, usize>,
    q1_index: HashMap<IPoint, usize>,
    cell_q2: Vec<[usize; 9]>,
    cell_q1: Vec<[usize; 4]>,
    cell_of: HashMap<CellKey, usize>,
}

impl DofMap {
    /// Numbers Q2 and Q1 nodes in order of first appearance over the leaves.
    pub fn build(mesh: &QuadMesh) -> Self {
        let mut q2_nodes = Vec::new();
        let mut q1_nodes = Vec::new();
        let mut q2_index = HashMap::new();
        let mut q1_index = HashMap::new();
        let mut cell_q2 = Vec::with_capacity(mesh.num_leaves());
        let mut cell_q1 = Vec::with_capacity(mesh.num_leaves());
        let mut cell_of = HashMap::with_capacity(mesh.num_leaves());
        for (ci, c) in mesh.leaves().iter().enumerate() {
            let lo = c.lower();
            let h = c.size() / 2;
            let mut q2 = [0usize; 9];
            for j in 0..3 {
                for i in 0..3 {
                    let p = IPoint::new(lo.x + i * h, lo.y + j * h);
                    let next = q2_nodes.len();
                    let id = *q2_index.entry(p).or_insert_with(|| {
                        q2_nodes.push(p);
                        next
                    });
                    q2[(i + 3 * j) as usize] = id;
                }
            }
            let mut q1 = [0usize; 4];
            for (k, p) in c.corners().into_iter().enumerate() {
                let next = q1_nodes.len();
                q1[k] = *q1_index.entry(p).or_insert_with(|| {
                    q1_nodes.push(p);
                    next
                });
            }
            cell_q2.push(q2);
            cell_q1.push(q1);
            cell_of.insert(*c, ci);
        }
        Self {
            q2_nodes,
            q1_nodes,
            q2_index,
            q1_index,
            cell_q2,
            cell_q1,
            cell_of,
        }
    }

    pub fn n_q2(&self) -> usize {
        self.q2_nodes.len()
    }

    pub fn n_q1(&self) -> usize {
        self.q1_nodes.len()
    }

    pub fn n_u(&self) -> usize {
        2 * self.n_q2()
    }

    pub fn n_total(&self) -> usize {
        self.n_u() + 2 * self.n_q1()
    }

    pub fn q2_nodes(&self) -> &[IPoint] {
        &self.q2_nodes
    }

    pub fn q1_nodes(&self) -> &[IPoint] {
        &self.q1_nodes
    }

    pub fn q2_node_at(&self, p: IPoint) -> Option<usize> {
        self.q2_index.get(&p).copied()
    }

    pub fn q1_node_at(&self, p: IPoint) -> Option<usize> {
        self.q1_index.get(&p).copied()
    }

    pub fn cell_q2(&self, cell: usize) -> &[usize; 9] {
        &self.cell_q2[cell]
    }

    pub fn cell_q1(&self, cell: usize) -> &[usize; 4] {
        &self.cell_q1[cell]
    }

    /// Position of a leaf in the cell tables.
    pub fn cell_index(&self, key: &CellKey) -> Option<usize> {
        self.cell_of.get(key).copied()
    }

    pub fn u_dof(&self, node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn p_dof(&self, node: usize) -> usize {
        self.n_u() + node
    }

    pub fn phi_dof(&self, node: usize) -> usize {
        self.n_u() + self.n_q1() + node
    }

    pub fn dof(&self, comp: Component, node: usize) -> usize {
        match comp {
            Component::Ux => self.u_dof(node, 0),
            Component::Uy => self.u_dof(node, 1),
            Component::P => self.p_dof(node),
            Component::Phi => self.phi_dof(node),
        }
    }

    /// Global indices of a cell's local DoFs: 18 displacement (node-major,
    /// x before y), then 4 pressure, then 4 phase-field.
    pub fn cell_dofs(&self, cell: usize) -> [usize; CELL_DOFS] {
        let mut out = [0usize; CELL_DOFS];
        for (a, &n) in self.cell_q2[cell].iter().enumerate() {
            out[2 * a] = self.u_dof(n, 0);
            out[2 * a + 1] = self.u_dof(n, 1);
        }
        for (k, &n) in self.cell_q1[cell].iter().enumerate() {
            out[CELL_U + k] = self.p_dof(n);
            out[CELL_U + 4 + k] = self.phi_dof(n);
        }
        out
    }

    /// Splits a system vector into its `(u, p, phi)` blocks.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (u, rest) = x.split_at(self.n_u());
        let (p, phi) = rest.split_at(self.n_q1());
        (u, p, phi)
    }

    pub fn split_mut<'a>(&self, x: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64], &'a mut [f64]) {
        let (u, rest) = x.split_at_mut(self.n_u());
        let (p, phi) = rest.split_at_mut(self.n_q1());
        (u, p, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_lshape_counts() {
        let d = DofMap::build(&QuadMesh::lshape(0));
        assert_eq!(d.n_q1(), 8);
        assert_eq!(d.n_q2(), 21);
        assert_eq!(d.n_total(), 58);
    }

    #[test]
    fn unit_square_counts() {
        let d = DofMap::build(&QuadMesh::rectangle([0.0, 0.0], 1.0, 1, 1, 0));
        assert_eq!(d.n_q1(), 4);
        assert_eq!(d.n_q2(), 9);
    }

    #[test]
    fn uniform_lshape_counts_match_lattice_formula() {
        for k in 0..4 {
            let d = DofMap::build(&QuadMesh::lshape(k));
            let m1 = 1usize << k;
            let m2 = 2 * m1;
            assert_eq!(d.n_q1(), (2 * m1 + 1).pow(2) - m1 * m1);
            assert_eq!(d.n_q2(), (2 * m2 + 1).pow(2) - m2 * m2);
        }
    }

    #[test]
    fn refinement_never_decreases_counts() {
        let mut m = QuadMesh::lshape(0);
        let mut prev = DofMap::build(&m);
        for _ in 0..3 {
            m = m.refine_uniform();
            let d = DofMap::build(&m);
            assert!(d.n_q1() >= prev.n_q1() && d.n_q2() >= prev.n_q2());
            prev = d;
        }
    }

    #[test]
    fn hanging_vertex_is_shared_q2_node() {
        let m = QuadMesh::lshape(0).refine(&[CellKey::root(0, 0)]);
        let d = DofMap::build(&m);
        // 8 + 5 new vertices (the split cell's edge midpoints and centre)
        assert_eq!(d.n_q1(), 13);
        for hv in m.hanging_vertices() {
            assert!(d.q2_node_at(hv.vertex).is_some());
        }
    }
}
