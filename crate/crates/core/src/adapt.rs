//! Residual error indicators for the phase-field inequality, Dörfler marking
//! and the space-adaptive outer loop over all loading steps.
//!
//! The indicators are those of a singularly perturbed reaction-diffusion
//! operator `-a Lap v + b v`. With `a = Gc eps`, `b = Gc / eps`:
//!
//! `eta_T^2 = alpha_T^2 |R_T|^2_T + 1/2 sum_E a^{-1/2} alpha_E |J_E|^2_E`,
//! `alpha_S = min(h_S sqrt(b/a), 1) / sqrt(b) = min(h_S / eps, 1) sqrt(eps / Gc)`,
//!
//! where `J_E = a [d v / dn]` on interior edges. For bilinear fields on
//! squares the Laplacian vanishes cell-wise, so `R_T` only has zero-order
//! terms.

use std::sync::Arc;

use log::info;
use rayon::prelude::*;

use crate::fem::element::{q1_eval, q2_eval};
use crate::fem::interpolate::eval_q1;
use crate::fem::{gauss_line, gauss_square, interpolation_error, DofMap};
use crate::mesh::{CellKey, Face, Neighbors, QuadMesh};
use crate::physics::{positive_strain, strain, MaterialParams};
use crate::solver::{
    run_loading_loop, Discretization, IncrementState, LoadCase, LoadDisplacementRecord,
    NewtonOptions,
};
use crate::{Error, Result};

/// Per-leaf indicators of one loading step, in the mesh's leaf order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorIndicators {
    pub cells: Vec<f64>,
}

impl ErrorIndicators {
    /// `sum_T eta_T^2`.
    pub fn squared_total(&self) -> f64 {
        self.cells.iter().map(|e| e * e).sum()
    }

    /// `eta = (sum_T eta_T^2)^{1/2}`.
    pub fn total(&self) -> f64 {
        self.squared_total().sqrt()
    }
}

/// Coefficients of `-a Lap v + b v`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ReactionDiffusion {
    pub diffusion: f64,
    pub reaction: f64,
}

impl ReactionDiffusion {
    pub fn phase_field(params: &MaterialParams) -> Self {
        Self {
            diffusion: params.gc * params.eps,
            reaction: params.gc / params.eps,
        }
    }

    /// `min(h sqrt(b/a), 1) / sqrt(b)`.
    pub fn weight(&self, h: f64) -> f64 {
        (h * (self.reaction / self.diffusion).sqrt()).min(1.0) / self.reaction.sqrt()
    }
}

/// Indicators of a Q1 field `v` for `-a Lap v + b v = f`. `residual(cell,
/// xi, v)` returns the strong element residual at reference point `xi`;
/// cells flagged in `skip` get zero.
pub fn residual_indicators(
    mesh: &QuadMesh,
    dofs: &DofMap,
    v: &[f64],
    op: &ReactionDiffusion,
    skip: &[bool],
    residual: impl Fn(usize, [f64; 2], f64) -> f64 + Sync,
) -> ErrorIndicators {
    let area_rule = gauss_square(3);
    let line_rule = gauss_line(3);
    let leaves = mesh.leaves();
    let cells = (0..leaves.len())
        .into_par_iter()
        .map(|ci| {
            if skip[ci] {
                return 0.0;
            }
            let key = leaves[ci];
            let b = mesh.cell_box(&key);
            let q1 = dofs.cell_q1(ci);
            let mut r2 = 0.0;
            for (xi, w) in area_rule.points.iter().zip(&area_rule.weights) {
                let (n, _) = q1_eval(*xi);
                let val: f64 = (0..4).map(|k| n[k] * v[q1[k]]).sum();
                let r = residual(ci, *xi, val);
                r2 += w * b.area() * r * r;
            }
            let wt = op.weight(b.size);
            let mut eta2 = wt * wt * r2;

            for face in Face::ALL {
                let others = match mesh.neighbors(&key, face) {
                    Neighbors::Boundary => continue,
                    Neighbors::Single(n) => vec![(n, key.face_endpoints(face))],
                    Neighbors::Finer(ch) => ch
                        .into_iter()
                        .map(|c| (c, c.face_endpoints(face.opposite())))
                        .collect(),
                };
                let normal = face.normal();
                for (other, [pa, pb]) in others {
                    let (xa, xb) = (mesh.to_phys(pa), mesh.to_phys(pb));
                    let len = ((xb[0] - xa[0]).powi(2) + (xb[1] - xa[1]).powi(2)).sqrt();
                    let ob = mesh.cell_box(&other);
                    let mut j2 = 0.0;
                    for (s, w) in line_rule.points.iter().zip(&line_rule.weights) {
                        let x = [
                            xa[0] + s[0] * (xb[0] - xa[0]),
                            xa[1] + s[0] * (xb[1] - xa[1]),
                        ];
                        let xi_in = [(x[0] - b.x0) / b.size, (x[1] - b.y0) / b.size];
                        let xi_out = [(x[0] - ob.x0) / ob.size, (x[1] - ob.y0) / ob.size];
                        let (_, g_in) = eval_q1(mesh, dofs, v, &key, xi_in);
                        let (_, g_out) = eval_q1(mesh, dofs, v, &other, xi_out);
                        let jump = op.diffusion
                            * ((g_in[0] - g_out[0]) * normal[0] + (g_in[1] - g_out[1]) * normal[1]);
                        j2 += w * len * jump * jump;
                    }
                    eta2 += 0.5 * op.weight(len) / op.diffusion.sqrt() * j2;
                }
            }
            eta2.sqrt()
        })
        .collect();
    ErrorIndicators { cells }
}

/// Strong residual of the phase-field equation at a point of a cell:
/// `Gc/eps (1 - phi) - (1 - kappa) phi sigma+:E - Lambda`.
fn phase_field_residual(
    state: &IncrementState,
    params: &MaterialParams,
    ci: usize,
    xi: [f64; 2],
    phi: f64,
) -> f64 {
    let disc = &state.disc;
    let size = disc.boxes[ci].size;
    let (_, g2) = q2_eval(xi);
    let mut grad = [[0.0; 2]; 2];
    for (a, &n) in disc.dofs.cell_q2(ci).iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                grad[i][j] += state.u[2 * n + i] * g2[a][j] / size;
            }
        }
    }
    let (n1, _) = q1_eval(xi);
    let q1 = disc.dofs.cell_q1(ci);
    let p: f64 = (0..4).map(|k| n1[k] * state.p[q1[k]]).sum();
    let lambda: f64 = (0..4)
        .map(|k| n1[k] * (state.lambda[q1[k]] - state.lambda_lower[q1[k]]))
        .sum();
    let e = strain(grad);
    let (eplus, _) = positive_strain(&e);
    let drive = 2.0 * params.mu * eplus.ddot(&e) + p.max(0.0) * e.trace();
    params.gc / params.eps * (1.0 - phi) - (1.0 - params.kappa) * phi * drive - lambda
}

/// Indicators of a converged increment; zero on cells of the frozen region.
pub fn estimate(state: &IncrementState, params: &MaterialParams) -> ErrorIndicators {
    let disc = &state.disc;
    residual_indicators(
        &disc.mesh,
        &disc.dofs,
        &state.phi,
        &ReactionDiffusion::phase_field(params),
        &disc.frozen_cells,
        |ci, xi, phi| phase_field_residual(state, params, ci, xi, phi),
    )
}

/// Dörfler marking: the shortest prefix of the cells sorted by descending
/// indicator (ties by index) whose squared mass reaches `theta^2` of the total.
pub fn mark(ind: &ErrorIndicators, theta: f64) -> Vec<usize> {
    let total = ind.squared_total();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..ind.cells.len()).collect();
    order.sort_by(|&a, &b| ind.cells[b].total_cmp(&ind.cells[a]).then(a.cmp(&b)));
    let goal = theta * theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= goal {
            break;
        }
        acc += ind.cells[i] * ind.cells[i];
        out.push(i);
    }
    out
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RefinementMode {
    /// Mark per step from the indicators.
    Adaptive,
    /// Refine every step's mesh uniformly each cycle.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    /// Dörfler fraction in `(0, 1)`.
    pub theta: f64,
    /// Stop when `sum_n (eta^n)^2` is at most this ...
    pub tol_eta: f64,
    /// ... and every interpolation error is at most this.
    pub tol_interp: f64,
    /// Number of refinement cycles after the first loading loop.
    pub max_cycles: usize,
    /// Uniform refinements of the initial mesh.
    pub initial_refinements: usize,
    pub mode: RefinementMode,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            theta: 0.3,
            tol_eta: 0.0,
            tol_interp: 0.0,
            max_cycles: 3,
            initial_refinements: 3,
            mode: RefinementMode::Adaptive,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta = {} must lie in (0, 1)",
                self.theta
            )));
        }
        if self.tol_eta.is_nan() || self.tol_interp.is_nan() {
            return Err(Error::InvalidParameter("tolerances must be numbers".into()));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Both stopping tests of the loop passed.
    Converged,
    /// The cycle budget ran out first.
    StoppedByBudget,
}

/// Outcome of one pass over all loading steps.
#[derive(Clone, Debug)]
pub struct CycleReport {
    pub cycle: usize,
    /// States of steps `0..=N`; only kept for the last cycle.
    pub states: Vec<IncrementState>,
    /// Load-displacement record with `eta^n` filled in.
    pub record: LoadDisplacementRecord,
    /// Indicators of steps `1..=N` (entry `n - 1`).
    pub indicators: Vec<ErrorIndicators>,
    /// `sum_n (eta^n)^2`.
    pub eta_squared_sum: f64,
    /// `|I_h^n phi^{n-1} - phi^{n-1}|_{L2}` for steps `1..=N` (entry `n - 1`).
    pub interpolation_errors: Vec<f64>,
    /// Leaves of each step's mesh, steps `0..=N`.
    pub num_cells: Vec<usize>,
    /// Per-step `(u, p, phi)` DoF counts, steps `0..=N`.
    pub field_dofs: Vec<(usize, usize, usize)>,
}

impl CycleReport {
    pub fn max_dofs(&self) -> usize {
        self.field_dofs
            .iter()
            .map(|(u, p, f)| u + p + f)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub cycles: Vec<CycleReport>,
    pub termination: Termination,
}

/// Shares one `Discretization` between consecutive steps with equal meshes.
fn discretize(meshes: &[QuadMesh], case: &LoadCase) -> Vec<Arc<Discretization>> {
    let mut out: Vec<Arc<Discretization>> = Vec::with_capacity(meshes.len());
    for (n, m) in meshes.iter().enumerate() {
        if n > 0 && meshes[n - 1].leaves() == m.leaves() {
            let prev = out[n - 1].clone();
            out.push(prev);
        } else {
            out.push(Arc::new(Discretization::new(m.clone(), case)));
        }
    }
    out
}

/// The adaptive loop: solve all steps on the current per-step meshes,
/// estimate, stop or mark and refine each step's mesh, repeat. `on_cycle`
/// sees every report while its states are still attached; its errors abort
/// the loop and are returned as they are.
pub fn algorithm1<E: From<Error>>(
    config: &AdaptConfig,
    initial: &QuadMesh,
    case: &LoadCase,
    params: &MaterialParams,
    opts: &NewtonOptions,
    mut on_cycle: impl FnMut(&CycleReport) -> std::result::Result<(), E>,
) -> std::result::Result<AdaptiveRun, E> {
    config.validate()?;
    params.validate()?;
    let n_steps = params.num_steps();
    let mut meshes = vec![initial.clone(); n_steps + 1];
    let mut cycles = Vec::new();
    for cycle in 0.. {
        let annotate = |e: Error| Error::Cycle {
            cycle,
            source: Box::new(e),
        };
        let discs = discretize(&meshes, case);
        let (states, mut record) = run_loading_loop(&discs, case, params, opts, |n, s| {
            if n % 10 == 0 {
                info!(
                    "cycle {cycle} step {n}/{n_steps}: t = {:.4}, {} dofs",
                    s.t,
                    s.disc.num_dofs()
                );
            }
        })
        .map_err(annotate)?;
        let indicators: Vec<ErrorIndicators> = states[1..]
            .par_iter()
            .map(|s| estimate(s, params))
            .collect();
        for (row, ind) in record.rows.iter_mut().zip(&indicators) {
            row.eta = ind.total();
        }
        let eta_squared_sum = indicators.iter().map(|i| i.squared_total()).sum();
        let interpolation_errors = (1..=n_steps)
            .into_par_iter()
            .map(|n| {
                let (a, b) = (&discs[n - 1], &discs[n]);
                if Arc::ptr_eq(a, b) {
                    Ok(0.0)
                } else {
                    interpolation_error(&states[n - 1].phi, &a.mesh, &a.dofs, &b.mesh, &b.dofs)
                }
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(annotate)?;
        let report = CycleReport {
            cycle,
            states,
            record,
            indicators,
            eta_squared_sum,
            interpolation_errors,
            num_cells: discs.iter().map(|d| d.mesh.num_leaves()).collect(),
            field_dofs: discs
                .iter()
                .map(|d| (d.dofs.n_u(), d.dofs.n_q1(), d.dofs.n_q1()))
                .collect(),
        };
        info!(
            "cycle {cycle}: sum eta^2 = {:.4e}, max dofs = {}",
            report.eta_squared_sum,
            report.max_dofs()
        );
        on_cycle(&report)?;

        let converged = report.eta_squared_sum <= config.tol_eta
            && report
                .interpolation_errors
                .iter()
                .all(|&e| e <= config.tol_interp);
        let budget = cycle >= config.max_cycles;
        let mut report = report;
        if converged || budget {
            cycles.push(report);
            let termination = if converged {
                Termination::Converged
            } else {
                Termination::StoppedByBudget
            };
            return Ok(AdaptiveRun {
                cycles,
                termination,
            });
        }

        for n in 1..=n_steps {
            meshes[n] = match config.mode {
                RefinementMode::Uniform => meshes[n].refine_uniform(),
                RefinementMode::Adaptive => {
                    let leaves = meshes[n].leaves();
                    let keys: Vec<CellKey> = mark(&report.indicators[n - 1], config.theta)
                        .into_iter()
                        .map(|i| leaves[i])
                        .collect();
                    meshes[n].refine(&keys)
                }
            };
        }
        if config.mode == RefinementMode::Uniform {
            meshes[0] = meshes[0].refine_uniform();
        }
        report.states.clear();
        cycles.push(report);
    }
    unreachable!("the cycle loop returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::QuadMesh;

    #[test]
    fn equal_indicators_mark_a_quarter_at_half_theta() {
        for n in [4usize, 7, 12, 100] {
            let ind = ErrorIndicators {
                cells: vec![1.0; n],
            };
            assert_eq!(mark(&ind, 0.5).len(), (0.25 * n as f64).ceil() as usize);
        }
    }

    #[test]
    fn dominant_cell_is_marked_alone() {
        let ind = ErrorIndicators {
            cells: vec![0.1, 10.0, 0.2, 0.1],
        };
        assert_eq!(mark(&ind, 0.5), vec![1]);
    }

    #[test]
    fn greedy_marking_is_minimal_prefix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(1..30);
            let ind = ErrorIndicators {
                cells: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            };
            let theta = rng.gen_range(0.05..0.95);
            let marked = mark(&ind, theta);
            let mass = |s: &[usize]| s.iter().map(|&i| ind.cells[i] * ind.cells[i]).sum::<f64>();
            let goal = theta * theta * ind.squared_total();
            assert!(mass(&marked) >= goal);
            // brute force over prefixes of the sorted order
            let mut sorted: Vec<usize> = (0..n).collect();
            sorted.sort_by(|&a, &b| ind.cells[b].total_cmp(&ind.cells[a]).then(a.cmp(&b)));
            let k = (0..=n).find(|&k| mass(&sorted[..k]) >= goal).unwrap();
            assert_eq!(marked, sorted[..k].to_vec());
        }
    }

    #[test]
    fn zero_indicators_mark_nothing() {
        assert!(mark(
            &ErrorIndicators {
                cells: vec![0.0; 5]
            },
            0.3
        )
        .is_empty());
    }

    #[test]
    fn intact_unloaded_state_has_zero_indicators() {
        let case = LoadCase::lshape_panel();
        let disc = Arc::new(Discretization::new(
            QuadMesh::lshape(2).refine(&[CellKey {
                level: 2,
                ix: 3,
                iy: 3,
            }]),
            &case,
        ));
        let s = IncrementState::initial(disc);
        let ind = estimate(&s, &MaterialParams::default());
        assert!(ind.cells.iter().all(|&e| e < 1e-15), "{:?}", ind.cells);
    }

    #[test]
    fn weights_follow_singular_perturbation_scaling() {
        let prm = MaterialParams::default();
        let op = ReactionDiffusion::phase_field(&prm);
        let s = (prm.eps / prm.gc).sqrt();
        assert!((op.weight(7.0) - 0.5 * s).abs() < 1e-12 * s);
        assert!((op.weight(28.0) - s).abs() < 1e-12 * s);
    }

    #[test]
    fn bilinear_field_has_no_jumps_and_no_laplacian() {
        // v = x y solves -a Lap v + b v = b x y exactly in the Q1 space
        let mesh = QuadMesh::rectangle([0.0, 0.0], 1.0, 1, 1, 2).refine(&[CellKey {
            level: 2,
            ix: 0,
            iy: 0,
        }]);
        let dofs = DofMap::build(&mesh);
        let v: Vec<f64> = dofs
            .q1_nodes()
            .iter()
            .map(|&p| {
                let x = mesh.to_phys(p);
                x[0] * x[1]
            })
            .collect();
        let op = ReactionDiffusion {
            diffusion: 0.3,
            reaction: 2.0,
        };
        let leaves = mesh.leaves().to_vec();
        let ind = residual_indicators(
            &mesh,
            &dofs,
            &v,
            &op,
            &vec![false; leaves.len()],
            |ci, xi, val| {
                let b = mesh.cell_box(&leaves[ci]);
                let x = b.map(xi);
                op.reaction * x[0] * x[1] - op.reaction * val
            },
        );
        // the gradient (y, x) is continuous, so the jumps vanish too
        assert!(ind.total() < 1e-13, "{}", ind.total());
    }
}
