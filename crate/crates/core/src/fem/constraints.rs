//! Affine constraints `x_slave = sum w_i x_master_i + c` and their elimination.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::dofs::{Component, DofMap};
use super::element::ReferenceElement;
use crate::mesh::{IPoint, QuadMesh};
use crate::{Error, Result};

const WEIGHT_DROP: f64 = 1e-14;

/// Predicate on physical coordinates.
pub type PointPredicate = Arc<dyn Fn([f64; 2]) -> bool + Send + Sync>;
/// Prescribed value as a function of position and time.
pub type BoundaryValue = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Dirichlet data on the boundary nodes of one component.
#[derive(Clone)]
pub struct DirichletRule {
    pub component: Component,
    pub on: PointPredicate,
    pub value: BoundaryValue,
}

impl DirichletRule {
    pub fn new(
        component: Component,
        on: impl Fn([f64; 2]) -> bool + Send + Sync + 'static,
        value: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            component,
            on: Arc::new(on),
            value: Arc::new(value),
        }
    }
}

impl std::fmt::Debug for DirichletRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletRule")
            .field("component", &self.component)
            .finish_non_exhaustive()
    }
}

/// Unresolved constraint lists, indexed by global DoF.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    n: usize,
    hanging: BTreeMap<usize, Vec<(usize, f64)>>,
    dirichlet: BTreeMap<usize, f64>,
}

impl ConstraintSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add_hanging(&mut self, dof: usize, masters: Vec<(usize, f64)>) {
        self.hanging.insert(dof, masters);
    }

    /// Adds `x_dof = value`; a second, different value for the same DoF is a conflict.
    pub fn add_dirichlet(&mut self, dof: usize, value: f64) -> Result<()> {
        if let Some(&old) = self.dirichlet.get(&dof) {
            if (old - value).abs() > 1e-12 * old.abs().max(1.0) {
                return Err(Error::ConstraintConflict { dof });
            }
        }
        self.dirichlet.insert(dof, value);
        Ok(())
    }

    pub fn is_hanging(&self, dof: usize) -> bool {
        self.hanging.contains_key(&dof)
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet.contains_key(&dof)
    }

    pub fn dirichlet_value(&self, dof: usize) -> Option<f64> {
        self.dirichlet.get(&dof).copied()
    }

    pub fn hanging_masters(&self, dof: usize) -> Option<&[(usize, f64)]> {
        self.hanging.get(&dof).map(|v| v.as_slice())
    }

    /// The same set without its Dirichlet part.
    pub fn hanging_only(&self) -> ConstraintSet {
        ConstraintSet {
            n: self.n,
            hanging: self.hanging.clone(),
            dirichlet: BTreeMap::new(),
        }
    }

    /// Resolves master chains so every constraint refers to free DoFs only.
    pub fn close(&self) -> Result<Condensation> {
        let mut memo: Vec<Option<(Vec<(usize, f64)>, f64)>> = vec![None; self.n];
        for d in 0..self.n {
            self.resolve(d, &mut memo, 0)?;
        }
        let mut free = Vec::new();
        let mut full_to_free = vec![usize::MAX; self.n];
        for d in 0..self.n {
            if !self.hanging.contains_key(&d) && !self.dirichlet.contains_key(&d) {
                full_to_free[d] = free.len();
                free.push(d);
            }
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut entries = Vec::new();
        let mut offset = vec![0.0; self.n];
        row_ptr.push(0);
        for d in 0..self.n {
            let (masters, c) = memo[d].take().expect("resolved");
            for (m, w) in masters {
                entries.push((full_to_free[m], w));
            }
            offset[d] = c;
            row_ptr.push(entries.len());
        }
        Ok(Condensation {
            free,
            full_to_free,
            row_ptr,
            entries,
            offset,
        })
    }

    fn resolve(
        &self,
        d: usize,
        memo: &mut Vec<Option<(Vec<(usize, f64)>, f64)>>,
        depth: usize,
    ) -> Result<()> {
        if memo[d].is_some() {
            return Ok(());
        }
        if depth > 64 {
            return Err(Error::ConstraintConflict { dof: d });
        }
        let resolved = if let Some(masters) = self.hanging.get(&d) {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            let mut c = 0.0;
            for &(m, w) in masters {
                self.resolve(m, memo, depth + 1)?;
                let (mm, mc) = memo[m].as_ref().expect("resolved");
                for &(k, wk) in mm {
                    *acc.entry(k).or_insert(0.0) += w * wk;
                }
                c += w * mc;
            }
            let masters: Vec<(usize, f64)> = acc
                .into_iter()
                .filter(|(_, w)| w.abs() > WEIGHT_DROP)
                .collect();
            if let Some(&v) = self.dirichlet.get(&d) {
                // hanging and Dirichlet at once: only consistent when the
                // hanging value is fully determined and equal
                if !masters.is_empty() || (c - v).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::ConstraintConflict { dof: d });
                }
                (Vec::new(), v)
            } else {
                (masters, c)
            }
        } else if let Some(&v) = self.dirichlet.get(&d) {
            (Vec::new(), v)
        } else {
            (vec![(d, 1.0)], 0.0)
        };
        memo[d] = Some(resolved);
        Ok(())
    }
}

/// Closed constraints: the map `x = T y + g` from free to full DoFs.
#[derive(Clone, Debug)]
pub struct Condensation {
    free: Vec<usize>,
    full_to_free: Vec<usize>,
    row_ptr: Vec<usize>,
    entries: Vec<(usize, f64)>,
    offset: Vec<f64>,
}

impl Condensation {
    pub fn n_full(&self) -> usize {
        self.full_to_free.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full index of each free DoF.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        let f = self.full_to_free[full];
        (f != usize::MAX).then_some(f)
    }

    pub fn is_constrained(&self, full: usize) -> bool {
        self.full_to_free[full] == usize::MAX
    }

    /// Row of `T` (free indices and weights) and the offset of one full DoF.
    pub fn expansion(&self, full: usize) -> (&[(usize, f64)], f64) {
        (
            &self.entries[self.row_ptr[full]..self.row_ptr[full + 1]],
            self.offset[full],
        )
    }

    /// Overwrites constrained entries from the free ones; idempotent.
    pub fn distribute(&self, x: &mut [f64]) {
        for d in 0..self.n_full() {
            if self.is_constrained(d) {
                let (row, c) = self.expansion(d);
                x[d] = row.iter().map(|&(f, w)| w * x[self.free[f]]).sum::<f64>() + c;
            }
        }
    }

    /// Like [`distribute`](Self::distribute) but ignoring the offsets.
    pub fn distribute_homogeneous(&self, x: &mut [f64]) {
        for d in 0..self.n_full() {
            if self.is_constrained(d) {
                let (row, _) = self.expansion(d);
                x[d] = row.iter().map(|&(f, w)| w * x[self.free[f]]).sum::<f64>();
            }
        }
    }

    /// `T y + g`.
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n_full())
            .map(|d| {
                let (row, c) = self.expansion(d);
                row.iter().map(|&(f, w)| w * y[f]).sum::<f64>() + c
            })
            .collect()
    }

    /// `T^T r`: folds a full residual onto the free DoFs.
    pub fn reduce(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free()];
        for (d, &rd) in r.iter().enumerate() {
            if rd == 0.0 {
                continue;
            }
            let (row, _) = self.expansion(d);
            for &(f, w) in row {
                out[f] += w * rd;
            }
        }
        out
    }

    /// Free entries of a full vector.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| x[d]).collect()
    }
}

/// Hanging-node relations in node-index space, shared by all fields.
#[derive(Clone, Debug, Default)]
pub struct HangingNodes {
    /// Q1 slave node and its masters.
    pub q1: BTreeMap<usize, Vec<(usize, f64)>>,
    /// Q2 slave node and its masters.
    pub q2: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl HangingNodes {
    pub fn build(mesh: &QuadMesh, dofs: &DofMap) -> Self {
        let mut out = HangingNodes::default();
        for ci in mesh.coarse_interfaces() {
            let [a, b] = ci.ends;
            let mid = IPoint::midpoint(a, b);
            let len = (b.x - a.x) + (b.y - a.y);
            let param = |p: IPoint| ((p.x - a.x) + (p.y - a.y)) as f64 / len as f64;
            let fine_ends = ci.fine.face_endpoints(ci.face);

            // Q1: the fine endpoint at the coarse midpoint hangs linearly
            let (na, nb) = (
                dofs.q1_node_at(a).expect("coarse vertex"),
                dofs.q1_node_at(b).expect("coarse vertex"),
            );
            let slave = dofs.q1_node_at(mid).expect("hanging vertex");
            out.q1.insert(slave, vec![(na, 0.5), (nb, 0.5)]);

            // Q2: the fine edge midpoint hangs quadratically on (a, mid, b)
            let fmid = IPoint::midpoint(fine_ends[0], fine_ends[1]);
            let t = param(fmid);
            let w = ReferenceElement::Q2.line_basis(t);
            let masters = [a, mid, b]
                .iter()
                .zip(w)
                .map(|(p, w)| (dofs.q2_node_at(*p).expect("coarse Q2 node"), w))
                .collect();
            out.q2
                .insert(dofs.q2_node_at(fmid).expect("fine Q2 node"), masters);
        }
        out
    }

    pub fn is_q1_slave(&self, node: usize) -> bool {
        self.q1.contains_key(&node)
    }

    pub fn is_q2_slave(&self, node: usize) -> bool {
        self.q2.contains_key(&node)
    }

    /// Adds the hanging relations of all three fields to a system-wide set.
    pub fn add_to(&self, dofs: &DofMap, set: &mut ConstraintSet) {
        for (&s, masters) in &self.q2 {
            for comp in 0..2 {
                set.add_hanging(
                    dofs.u_dof(s, comp),
                    masters
                        .iter()
                        .map(|&(m, w)| (dofs.u_dof(m, comp), w))
                        .collect(),
                );
            }
        }
        for (&s, masters) in &self.q1 {
            set.add_hanging(
                dofs.p_dof(s),
                masters.iter().map(|&(m, w)| (dofs.p_dof(m), w)).collect(),
            );
            set.add_hanging(
                dofs.phi_dof(s),
                masters.iter().map(|&(m, w)| (dofs.phi_dof(m), w)).collect(),
            );
        }
    }

    /// Constraint set on a scalar Q1 vector (node-index space).
    pub fn q1_scalar_set(&self, n_q1: usize) -> ConstraintSet {
        let mut set = ConstraintSet::new(n_q1);
        for (&s, masters) in &self.q1 {
            set.add_hanging(s, masters.clone());
        }
        set
    }
}

/// Q2 and Q1 nodes on the domain boundary.
pub fn boundary_nodes(mesh: &QuadMesh, dofs: &DofMap) -> (Vec<usize>, Vec<usize>) {
    let mut q2 = std::collections::BTreeSet::new();
    let mut q1 = std::collections::BTreeSet::new();
    for e in mesh.boundary_edges() {
        let [a, b] = e.ends;
        let m = IPoint::midpoint(a, b);
        for p in [a, m, b] {
            if let Some(n) = dofs.q2_node_at(p) {
                q2.insert(n);
            }
        }
        for p in [a, b] {
            if let Some(n) = dofs.q1_node_at(p) {
                q1.insert(n);
            }
        }
    }
    (q2.into_iter().collect(), q1.into_iter().collect())
}

/// Hanging-node and Dirichlet constraints of the full system at time `t`.
/// Dirichlet predicates are evaluated at boundary DoF support points.
pub fn build_constraints(
    mesh: &QuadMesh,
    dofs: &DofMap,
    hanging: &HangingNodes,
    rules: &[DirichletRule],
    t: f64,
) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::new(dofs.n_total());
    hanging.add_to(dofs, &mut set);
    let (bq2, bq1) = boundary_nodes(mesh, dofs);
    for rule in rules {
        let (nodes, pts): (&[usize], &[IPoint]) = match rule.component {
            Component::Ux | Component::Uy => (&bq2, dofs.q2_nodes()),
            Component::P | Component::Phi => (&bq1, dofs.q1_nodes()),
        };
        for &n in nodes {
            let x = mesh.to_phys(pts[n]);
            if (rule.on)(x) {
                set.add_dirichlet(dofs.dof(rule.component, n), (rule.value)(x, t))?;
            }
        }
    }
    Ok(set)
}
