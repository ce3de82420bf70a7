//! Geometry, boundary data and measurement of the runnable scenarios.

use std::sync::Arc;

use crackfield_core::fem::{Component, DirichletRule};
use crackfield_core::mesh::QuadMesh;
use crackfield_core::solver::LoadCase;

use crate::config::ScenarioKind;

pub struct Scenario {
    pub name: &'static str,
    pub initial_mesh: QuadMesh,
    pub case: LoadCase,
}

impl Scenario {
    pub fn build(kind: ScenarioKind, initial_refinements: usize) -> Self {
        match kind {
            ScenarioKind::LShape => lshape_panel(initial_refinements),
            ScenarioKind::SmoothStretch => smooth_stretch(initial_refinements),
        }
    }
}

pub fn lshape_panel(initial_refinements: usize) -> Scenario {
    Scenario {
        name: "lshape",
        initial_mesh: QuadMesh::lshape(initial_refinements),
        case: LoadCase::lshape_panel(),
    }
}

/// Side of the smooth-stretch square.
pub const STRETCH_SIDE: f64 = 100.0;
/// Peak boundary strain of the smooth stretch per unit time.
pub const STRETCH_RATE: f64 = 2e-4;

/// Square `[0, 100]^2` with `u = t s (x^2, y^2) / L` on the whole boundary.
/// The strain and so the crack driving force vary smoothly; for small `t`
/// the phase-field dips slightly below 1 without localizing.
pub fn smooth_stretch(initial_refinements: usize) -> Scenario {
    let l = STRETCH_SIDE;
    let s = STRETCH_RATE;
    let case = LoadCase {
        rules: vec![
            DirichletRule::new(Component::Ux, |_| true, move |x, t| t * s * x[0] * x[0] / l),
            DirichletRule::new(Component::Uy, |_| true, move |x, t| t * s * x[1] * x[1] / l),
        ],
        frozen: None,
        body_force: [0.0, 0.0],
        measured: Arc::new(|x| x[1] == 0.0),
        prescribed: Arc::new(move |t| t * s * l),
    };
    Scenario {
        name: "smooth_stretch",
        initial_mesh: QuadMesh::rectangle([0.0, 0.0], l, 1, 1, initial_refinements),
        case,
    }
}

/// Linear displacement `u = (a x + b y, c x + d y)` on the whole boundary of
/// the L-panel, phase-field held at 1.
pub fn linear_patch(coeffs: [f64; 4]) -> LoadCase {
    let [a, b, c, d] = coeffs;
    LoadCase {
        rules: vec![
            DirichletRule::new(Component::Ux, |_| true, move |x, _| a * x[0] + b * x[1]),
            DirichletRule::new(Component::Uy, |_| true, move |x, _| c * x[0] + d * x[1]),
        ],
        frozen: Some(Arc::new(|_| true)),
        body_force: [0.0, 0.0],
        measured: Arc::new(|x| x[1] == 0.0),
        prescribed: Arc::new(|t| t),
    }
}

/// Cantilever strip geometry: length, height and root cell size (mm).
pub const STRIP: (f64, f64, f64) = (500.0, 50.0, 50.0);

/// Strip `[0, 500] x [0, 50]` clamped at `x = 0` under a downward body
/// load `q` (kN/mm^3), phase-field held at 1.
pub fn cantilever_strip(initial_refinements: usize, q: f64) -> Scenario {
    let (len, height, root) = STRIP;
    let case = LoadCase {
        rules: vec![
            DirichletRule::new(Component::Ux, |x| x[0] == 0.0, |_, _| 0.0),
            DirichletRule::new(Component::Uy, |x| x[0] == 0.0, |_, _| 0.0),
        ],
        frozen: Some(Arc::new(|_| true)),
        body_force: [0.0, -q],
        measured: Arc::new(|x| x[0] == 0.0),
        prescribed: Arc::new(|_| 0.0),
    };
    Scenario {
        name: "cantilever",
        initial_mesh: QuadMesh::rectangle(
            [0.0, 0.0],
            root,
            (len / root) as i64,
            (height / root) as i64,
            initial_refinements,
        ),
        case,
    }
}
