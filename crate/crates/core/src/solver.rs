//! One loading increment by semi-smooth Newton with a primal-dual active set,
//! the loading loop, and force extraction.
//!
//! The multiplier `Lambda` is a nodal Q1 quantity paired with test functions
//! through the lumped mass `m_i`, so irreversibility reduces to the nodal
//! complementarity system
//! `Lambda_i >= 0, phi_i <= phi_old_i, Lambda_i (phi_old_i - phi_i) = 0`.

use std::sync::Arc;

use log::debug;
use rayon::prelude::*;

use crate::fem::constraints::{boundary_nodes, PointPredicate};
use crate::fem::interpolate::conforming_interpolant;
use crate::fem::{
    build_constraints, gauss_square, interpolate_field, Component, Condensation, DirichletRule,
    DofMap, FieldKind, HangingNodes, Tabulation, CELL_DOFS,
};
use crate::linalg::{assemble, solve, SparseMatrix, TripletBuffer};
use crate::mesh::{BoundaryMarker, CellBox, Forest, QuadMesh};
use crate::physics::{cell_jacobian, cell_residual, CellData, MaterialParams};
use crate::{Error, Result};

/// Predicate on cells, used for the region where the phase-field is frozen.
pub type CellPredicate = Arc<dyn Fn(&CellBox) -> bool + Send + Sync>;

/// Left edge of the region where the phase-field of the L-panel is held at 1.
pub const PHASE_FIELD_LIMIT_X: f64 = 400.0;

/// Boundary data, body load and force measurement of a scenario.
#[derive(Clone)]
pub struct LoadCase {
    pub rules: Vec<DirichletRule>,
    /// Cells where `phi = 1` is imposed; a node is fixed when every cell
    /// having it as a corner is frozen.
    pub frozen: Option<CellPredicate>,
    pub body_force: [f64; 2],
    /// Boundary points whose y-reaction makes up the reported force.
    pub measured: PointPredicate,
    /// Prescribed load-point displacement (mm) at time `t`, for the record.
    pub prescribed: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for LoadCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadCase")
            .field("rules", &self.rules)
            .field("body_force", &self.body_force)
            .finish_non_exhaustive()
    }
}

impl LoadCase {
    /// L-shaped panel: clamped bottom edge, `u_y = t` (mm, t in s) on the
    /// loading stripe with `u_x` free there, `phi = 1` for `x >= 400`, force
    /// measured on the clamped edge.
    pub fn lshape_panel() -> Self {
        let forest = Arc::new(Forest::lshape());
        let on = |marker: BoundaryMarker| {
            let forest = forest.clone();
            move |x: [f64; 2]| forest.classify(x) == marker
        };
        let clamp = on(BoundaryMarker::BottomClamp);
        let rules = vec![
            DirichletRule::new(Component::Ux, clamp.clone(), |_, _| 0.0),
            DirichletRule::new(Component::Uy, clamp, |_, _| 0.0),
            DirichletRule::new(Component::Uy, on(BoundaryMarker::LoadStripe), |_, t| t),
        ];
        let tol = 1e-9 * PHASE_FIELD_LIMIT_X;
        Self {
            rules,
            frozen: Some(Arc::new(move |b: &CellBox| {
                b.x0 >= PHASE_FIELD_LIMIT_X - tol
            })),
            body_force: [0.0, 0.0],
            measured: Arc::new(on(BoundaryMarker::MEASURE_SEGMENT)),
            prescribed: Arc::new(|t| t),
        }
    }
}

/// Everything about one mesh that does not change during a loading step.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: QuadMesh,
    pub dofs: DofMap,
    pub hanging: HangingNodes,
    pub boxes: Vec<CellBox>,
    pub frozen_cells: Vec<bool>,
    /// Q1 nodes whose phase-field is fixed to 1.
    pub frozen_nodes: Vec<bool>,
    /// Lumped Q1 mass per node: a quarter of the area of each cell having
    /// the node as a corner.
    pub lumped: Vec<f64>,
    pub tab: Tabulation,
}

impl Discretization {
    pub fn new(mesh: QuadMesh, case: &LoadCase) -> Self {
        let dofs = DofMap::build(&mesh);
        let hanging = HangingNodes::build(&mesh, &dofs);
        let boxes: Vec<CellBox> = mesh.leaves().iter().map(|c| mesh.cell_box(c)).collect();
        let frozen_cells: Vec<bool> = boxes
            .iter()
            .map(|b| case.frozen.as_ref().is_some_and(|f| f(b)))
            .collect();
        let mut frozen_nodes = vec![true; dofs.n_q1()];
        let mut lumped = vec![0.0; dofs.n_q1()];
        for (ci, b) in boxes.iter().enumerate() {
            for &n in dofs.cell_q1(ci) {
                lumped[n] += 0.25 * b.area();
                if !frozen_cells[ci] {
                    frozen_nodes[n] = false;
                }
            }
        }
        for (&s, _) in &hanging.q1 {
            frozen_nodes[s] = false;
        }
        Self {
            mesh,
            dofs,
            hanging,
            boxes,
            frozen_cells,
            frozen_nodes,
            lumped,
            tab: Tabulation::new(&gauss_square(3)),
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.n_total()
    }

    /// All constraints at time `t`: hanging nodes, Dirichlet data and the
    /// frozen phase-field.
    pub fn constraints(&self, case: &LoadCase, t: f64) -> Result<Condensation> {
        let mut set = build_constraints(&self.mesh, &self.dofs, &self.hanging, &case.rules, t)?;
        for (n, &f) in self.frozen_nodes.iter().enumerate() {
            if f {
                set.add_dirichlet(self.dofs.phi_dof(n), 1.0)?;
            }
        }
        set.close()
    }

    fn cell_data(&self, x: &[f64], phi_old: &[f64], ci: usize) -> CellData {
        let idx = self.dofs.cell_dofs(ci);
        let q1 = self.dofs.cell_q1(ci);
        CellData {
            u: std::array::from_fn(|a| x[idx[a]]),
            p: std::array::from_fn(|k| x[idx[18 + k]]),
            phi: std::array::from_fn(|k| x[idx[22 + k]]),
            phi_old: std::array::from_fn(|k| phi_old[q1[k]]),
            lambda: [0.0; 4],
        }
    }

    /// Unconstrained residual without the multiplier term.
    pub fn residual(
        &self,
        case: &LoadCase,
        params: &MaterialParams,
        x: &[f64],
        phi_old: &[f64],
    ) -> Vec<f64> {
        let local: Vec<[f64; CELL_DOFS]> = (0..self.boxes.len())
            .into_par_iter()
            .map(|ci| {
                let d = self.cell_data(x, phi_old, ci);
                cell_residual(self.boxes[ci].size, &d, params, case.body_force, &self.tab)
                    .to_array()
            })
            .collect();
        let mut r = vec![0.0; x.len()];
        for (ci, loc) in local.iter().enumerate() {
            for (a, &g) in self.dofs.cell_dofs(ci).iter().enumerate() {
                r[g] += loc[a];
            }
        }
        r
    }

    /// `T^T K T` on the free DoFs, with the rows listed in `replaced`
    /// overwritten by a scaled identity row.
    pub fn reduced_jacobian(
        &self,
        params: &MaterialParams,
        x: &[f64],
        phi_old: &[f64],
        cond: &Condensation,
        replaced: &[Option<f64>],
    ) -> Result<SparseMatrix> {
        let local: Vec<Box<[[f64; CELL_DOFS]; CELL_DOFS]>> = (0..self.boxes.len())
            .into_par_iter()
            .map(|ci| {
                cell_jacobian(
                    self.boxes[ci].size,
                    &self.cell_data(x, phi_old, ci),
                    params,
                    &self.tab,
                )
            })
            .collect();
        let mut trip = TripletBuffer::with_capacity(local.len() * CELL_DOFS * CELL_DOFS);
        for (ci, k) in local.iter().enumerate() {
            let idx = self.dofs.cell_dofs(ci);
            let rows: [&[(usize, f64)]; CELL_DOFS] =
                std::array::from_fn(|a| cond.expansion(idx[a]).0);
            for a in 0..CELL_DOFS {
                for &(fa, wa) in rows[a] {
                    if replaced[fa].is_some() {
                        continue;
                    }
                    for b in 0..CELL_DOFS {
                        let v = k[a][b];
                        if v == 0.0 {
                            continue;
                        }
                        for &(fb, wb) in rows[b] {
                            trip.push(fa, fb, wa * wb * v);
                        }
                    }
                }
            }
        }
        for (f, r) in replaced.iter().enumerate() {
            if let Some(d) = r {
                trip.push(f, f, *d);
            }
        }
        assemble(&trip, cond.n_free())
    }

    /// Y-reaction on the measured boundary in N, as the residual functional
    /// tested with the conforming extension of the indicator of the
    /// measured y-DoFs.
    pub fn reaction_force(
        &self,
        case: &LoadCase,
        params: &MaterialParams,
        state: &IncrementState,
    ) -> f64 {
        let r = self.residual(case, params, &state.full_vector(), &state.phi_old);
        let mut chi = vec![0.0; self.dofs.n_q2()];
        let (bq2, _) = boundary_nodes(&self.mesh, &self.dofs);
        for n in bq2 {
            if (case.measured)(self.mesh.to_phys(self.dofs.q2_nodes()[n])) {
                chi[n] = 1.0;
            }
        }
        for (&s, masters) in &self.hanging.q2 {
            chi[s] = masters.iter().map(|&(m, w)| w * chi[m]).sum();
        }
        let f: f64 = chi
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(n, &c)| c * r[self.dofs.u_dof(n, 1)])
            .sum();
        -1000.0 * f
    }
}

/// Discrete state at the end of one loading increment.
#[derive(Clone, Debug)]
pub struct IncrementState {
    pub disc: Arc<Discretization>,
    pub t: f64,
    /// Interleaved Q2 displacement.
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    /// Obstacle of this increment on this mesh.
    pub phi_old: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Multiplier of the lower bound `phi >= 0`.
    pub lambda_lower: Vec<f64>,
    /// Q1 nodes where `phi = phi_old` is enforced.
    pub active: Vec<usize>,
    pub newton_iterations: usize,
}

impl IncrementState {
    /// Intact, unloaded state: `u = 0`, `p = 0`, `phi = 1`, `Lambda = 0`.
    pub fn initial(disc: Arc<Discretization>) -> Self {
        let (nu, nq1) = (disc.dofs.n_u(), disc.dofs.n_q1());
        Self {
            disc,
            t: 0.0,
            u: vec![0.0; nu],
            p: vec![0.0; nq1],
            phi: vec![1.0; nq1],
            phi_old: vec![1.0; nq1],
            lambda: vec![0.0; nq1],
            lambda_lower: vec![0.0; nq1],
            active: Vec::new(),
            newton_iterations: 0,
        }
    }

    pub fn full_vector(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.disc.num_dofs());
        x.extend_from_slice(&self.u);
        x.extend_from_slice(&self.p);
        x.extend_from_slice(&self.phi);
        x
    }

    pub fn constraint_report(&self) -> ConstraintReport {
        let mut r = ConstraintReport {
            min_lambda: f64::INFINITY,
            max_increase: f64::NEG_INFINITY,
            max_complementarity: 0.0,
            phi_min: f64::INFINITY,
            phi_max: f64::NEG_INFINITY,
        };
        for i in 0..self.phi.len() {
            let (l, phi, old) = (self.lambda[i], self.phi[i], self.phi_old[i]);
            r.min_lambda = r.min_lambda.min(l);
            r.max_increase = r.max_increase.max(phi - old);
            r.max_complementarity = r
                .max_complementarity
                .max((l * (old - phi)).abs() / l.abs().max(1.0));
            r.phi_min = r.phi_min.min(phi);
            r.phi_max = r.phi_max.max(phi);
        }
        r
    }
}

/// Extremes of the irreversibility and bound quantities of one state.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub min_lambda: f64,
    /// `max_i (phi_i - phi_old_i)`.
    pub max_increase: f64,
    /// `max_i |Lambda_i (phi_old_i - phi_i)| / max(1, Lambda_i)`.
    pub max_complementarity: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl ConstraintReport {
    pub fn merge(&self, o: &ConstraintReport) -> ConstraintReport {
        ConstraintReport {
            min_lambda: self.min_lambda.min(o.min_lambda),
            max_increase: self.max_increase.max(o.max_increase),
            max_complementarity: self.max_complementarity.max(o.max_complementarity),
            phi_min: self.phi_min.min(o.phi_min),
            phi_max: self.phi_max.max(o.phi_max),
        }
    }
}

/// Newton controls.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// Active-set constant; `Gc / eps` when unset.
    pub c: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_iterations: 50,
            max_backtracks: 12,
            c: None,
        }
    }
}

/// `{ i : Lambda_i + c (phi_i - phi_old_i) > 0 }`.
pub fn update_active_set(phi: &[f64], phi_old: &[f64], lambda: &[f64], c: f64) -> Vec<usize> {
    (0..phi.len())
        .filter(|&i| lambda[i] + c * (phi[i] - phi_old[i]) > 0.0)
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Moves the fields of `prev` onto `disc`'s mesh. Returns `(u, p, phi_old,
/// lambda)`; the obstacle is the conforming interpolant of the previous
/// phase-field, raised to 1 on frozen nodes.
fn transfer(
    prev: &IncrementState,
    disc: &Discretization,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let pd = &prev.disc;
    let (u, p, mut phi_old, lambda) =
        if pd.mesh.same_forest(&disc.mesh) && pd.mesh.leaves() == disc.mesh.leaves() {
            (
                prev.u.clone(),
                prev.p.clone(),
                prev.phi.clone(),
                prev.lambda.clone(),
            )
        } else {
            let q1 = |f: &[f64]| {
                interpolate_field(
                    f,
                    &pd.mesh,
                    &pd.dofs,
                    &disc.mesh,
                    &disc.dofs,
                    FieldKind::ScalarQ1,
                )
            };
            (
                interpolate_field(
                    &prev.u,
                    &pd.mesh,
                    &pd.dofs,
                    &disc.mesh,
                    &disc.dofs,
                    FieldKind::VectorQ2,
                )?,
                q1(&prev.p)?,
                conforming_interpolant(
                    &prev.phi,
                    &pd.mesh,
                    &pd.dofs,
                    &disc.mesh,
                    &disc.dofs,
                    &disc.hanging,
                )?,
                q1(&prev.lambda)?,
            )
        };
    for (n, &f) in disc.frozen_nodes.iter().enumerate() {
        if f {
            phi_old[n] = 1.0;
        }
    }
    Ok((u, p, phi_old, lambda))
}

/// Free phase-field node of the reduced system.
struct PhiNode {
    node: usize,
    free: usize,
    mass: f64,
}

/// Which bound, if any, a phase-field node is held at.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    /// `phi = phi_old`.
    Upper,
    /// `phi = 0`.
    Lower,
}

/// The set to try after `active`. When `proposed` was tried already, only
/// one node changes, the lowest index first, so that the iteration cannot
/// return to an earlier set.
fn next_set(active: &[Bound], proposed: Vec<Bound>, visited: &[Vec<Bound>]) -> Option<Vec<Bound>> {
    if !visited.contains(&proposed) {
        return Some(proposed);
    }
    (0..active.len())
        .filter(|&k| proposed[k] != active[k])
        .map(|k| {
            let mut a = active.to_vec();
            a[k] = proposed[k];
            a
        })
        .find(|a| !visited.contains(a))
}

/// Merit vector for a fixed active set, and the signed multiplier it
/// implies (positive at the upper bound, negative at the lower one).
fn merit(
    f: &[f64],
    x: &[f64],
    phi_old: &[f64],
    nodes: &[PhiNode],
    active: &[Bound],
    c: f64,
    disc: &Discretization,
) -> (Vec<f64>, Vec<f64>) {
    let mut g = f.to_vec();
    let mut lambda = vec![0.0; phi_old.len()];
    for (k, pn) in nodes.iter().enumerate() {
        let target = match active[k] {
            Bound::Free => continue,
            Bound::Upper => phi_old[pn.node],
            Bound::Lower => 0.0,
        };
        let phi = x[disc.dofs.phi_dof(pn.node)];
        lambda[pn.node] = -f[pn.free] / pn.mass;
        g[pn.free] = c * pn.mass * (phi - target);
    }
    (g, lambda)
}

/// Solves the increment at time `t` on `disc`, starting from `prev`.
pub fn solve_increment(
    prev: &IncrementState,
    disc: &Arc<Discretization>,
    case: &LoadCase,
    params: &MaterialParams,
    t: f64,
    opts: &NewtonOptions,
) -> Result<IncrementState> {
    let c = opts.c.unwrap_or(params.gc / params.eps);
    let dofs = &disc.dofs;
    let (u0, p0, phi_old, lambda0) = transfer(prev, disc)?;
    let cond = disc.constraints(case, t)?;

    let mut x = Vec::with_capacity(dofs.n_total());
    x.extend_from_slice(&u0);
    x.extend_from_slice(&p0);
    x.extend_from_slice(&phi_old);
    cond.distribute(&mut x);

    let nodes: Vec<PhiNode> = (0..dofs.n_q1())
        .filter_map(|n| {
            cond.free_index(dofs.phi_dof(n)).map(|free| PhiNode {
                node: n,
                free,
                mass: disc.lumped[n],
            })
        })
        .collect();
    let phi_of = |x: &[f64]| x[dofs.n_u() + dofs.n_q1()..].to_vec();
    let warm: Vec<f64> = {
        let mut l = vec![0.0; dofs.n_q1()];
        for pn in &nodes {
            l[pn.node] = lambda0[pn.node].max(0.0);
        }
        l
    };
    // the lower bound is implied by the continuous problem but not by the
    // discrete one once hanging nodes are condensed out. Its constant is
    // large so that a node enters it only by going negative, never by
    // leaving the upper bound with a small negative multiplier.
    let c_lower = 1e6 * c;
    let set_from = |x: &[f64], lambda: &[f64]| -> Vec<Bound> {
        let phi = phi_of(x);
        let mut flag = vec![Bound::Free; dofs.n_q1()];
        for i in update_active_set(&phi, &phi_old, lambda, c) {
            flag[i] = Bound::Upper;
        }
        for (i, b) in flag.iter_mut().enumerate() {
            if *b == Bound::Free && lambda[i] + c_lower * phi[i] < 0.0 {
                *b = Bound::Lower;
            }
        }
        nodes.iter().map(|pn| flag[pn.node]).collect()
    };
    let mut active = set_from(&x, &warm);

    let eval = |x: &[f64]| cond.reduce(&disc.residual(case, params, x, &phi_old));
    let mut f = eval(&x);
    let (mut g, mut lambda) = merit(&f, &x, &phi_old, &nodes, &active, c, disc);
    let tol = (opts.rel_tol * norm(&g)).max(opts.abs_tol);
    let mut visited: Vec<Vec<Bound>> = Vec::new();
    let mut history: Vec<f64> = Vec::new();

    for it in 0..=opts.max_iterations {
        let gn = norm(&g);
        if gn <= tol {
            let next = set_from(&x, &lambda);
            if next == active {
                let (u, rest) = x.split_at(dofs.n_u());
                let (p, phi) = rest.split_at(dofs.n_q1());
                let upper = |k: &usize| active[*k] == Bound::Upper;
                debug!(
                    "t = {t:.4e}: converged in {it} iterations, |active| = {}",
                    (0..nodes.len()).filter(upper).count()
                );
                return Ok(IncrementState {
                    disc: disc.clone(),
                    t,
                    u: u.to_vec(),
                    p: p.to_vec(),
                    phi: phi.to_vec(),
                    phi_old,
                    lambda: lambda.iter().map(|l| l.max(0.0)).collect(),
                    lambda_lower: lambda.iter().map(|l| (-l).max(0.0)).collect(),
                    active: (0..nodes.len())
                        .filter(upper)
                        .map(|k| nodes[k].node)
                        .collect(),
                    newton_iterations: it,
                });
            }
            let Some(next) = next_set(&active, next, &visited) else {
                return Err(Error::ActiveSetCycle { iteration: it });
            };
            visited.push(std::mem::replace(&mut active, next));
            g = merit(&f, &x, &phi_old, &nodes, &active, c, disc).0;
        }
        if it == opts.max_iterations {
            break;
        }

        let mut replaced = vec![None; cond.n_free()];
        for (k, pn) in nodes.iter().enumerate() {
            if active[k] != Bound::Free {
                replaced[pn.free] = Some(c * pn.mass);
            }
        }
        let k = disc.reduced_jacobian(params, &x, &phi_old, &cond, &replaced)?;
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dy = solve(&k, &rhs)?;
        let mut dx = vec![0.0; dofs.n_total()];
        for (fi, &d) in cond.free_dofs().iter().enumerate() {
            dx[d] = dy[fi];
        }
        cond.distribute_homogeneous(&mut dx);

        let g0 = norm(&g);
        history.push(g0);
        let gref = history.iter().rev().take(5).cloned().fold(0.0, f64::max);
        let mut alpha = 1.0;
        let mut backtracks = 0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let ft = eval(&xt);
            let (gt, lt) = merit(&ft, &xt, &phi_old, &nodes, &active, c, disc);
            let gtn = norm(&gt);
            if gtn <= (1.0 - 1e-4 * alpha) * gref || gtn <= tol {
                x = xt;
                f = ft;
                g = gt;
                lambda = lt;
                break;
            }
            backtracks += 1;
            if backtracks > opts.max_backtracks {
                // the current set may admit no root: move on to the set the
                // iterate suggests unless that one was tried already
                let next = set_from(&x, &lambda);
                let next = (next != active)
                    .then(|| next_set(&active, next, &visited))
                    .flatten();
                let Some(next) = next else {
                    return Err(Error::LineSearchStall {
                        iteration: it,
                        residual: g0,
                    });
                };
                visited.push(std::mem::replace(&mut active, next));
                g = merit(&f, &x, &phi_old, &nodes, &active, c, disc).0;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: norm(&g),
    })
}

/// One row of the load-displacement record.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LoadStep {
    pub step: usize,
    pub t: f64,
    /// Prescribed displacement (mm).
    pub u_y: f64,
    /// Reaction (N).
    pub f_y: f64,
    pub dofs: usize,
    pub eta: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadDisplacementRecord {
    pub rows: Vec<LoadStep>,
}

impl LoadDisplacementRecord {
    pub fn peak_force(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.f_y).reduce(f64::max)
    }
}

/// Runs all increments. `discs[n]` is the mesh of step `n` (index 0 holds
/// the initial state); a single entry is reused for every step. `on_step`
/// sees each converged state.
pub fn run_loading_loop(
    discs: &[Arc<Discretization>],
    case: &LoadCase,
    params: &MaterialParams,
    opts: &NewtonOptions,
    mut on_step: impl FnMut(usize, &IncrementState),
) -> Result<(Vec<IncrementState>, LoadDisplacementRecord)> {
    let n_steps = params.num_steps();
    if discs.len() != 1 && discs.len() != n_steps + 1 {
        return Err(Error::DimensionMismatch {
            expected: n_steps + 1,
            got: discs.len(),
        });
    }
    let disc_at = |n: usize| {
        if discs.len() == 1 {
            &discs[0]
        } else {
            &discs[n]
        }
    };
    let mut states = vec![IncrementState::initial(disc_at(0).clone())];
    let mut record = LoadDisplacementRecord::default();
    for n in 1..=n_steps {
        let t = params.time(n);
        let disc = disc_at(n);
        let state = solve_increment(&states[n - 1], disc, case, params, t, opts).map_err(|e| {
            Error::Step {
                step: n,
                source: Box::new(e),
            }
        })?;
        record.rows.push(LoadStep {
            step: n,
            t,
            u_y: (case.prescribed)(t),
            f_y: disc.reaction_force(case, params, &state),
            dofs: disc.num_dofs(),
            eta: 0.0,
        });
        on_step(n, &state);
        states.push(state);
    }
    Ok((states, record))
}
