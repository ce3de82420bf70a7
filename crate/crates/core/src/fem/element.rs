//! Lagrange Q1 and Q2 elements on the reference square `[0,1]^2`.
//!
//! Nodes are numbered lexicographically, `x` fastest: Q1 node `i + 2j` sits at
//! `(i, j)`, Q2 node `i + 3j` at `(i/2, j/2)`.

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ReferenceElement {
    Q1,
    Q2,
}

impl ReferenceElement {
    pub fn num_nodes(self) -> usize {
        match self {
            ReferenceElement::Q1 => 4,
            ReferenceElement::Q2 => 9,
        }
    }

    /// Per-direction polynomial degree.
    pub fn degree(self) -> usize {
        match self {
            ReferenceElement::Q1 => 1,
            ReferenceElement::Q2 => 2,
        }
    }

    pub fn nodes(self) -> Vec<[f64; 2]> {
        let k = self.degree();
        let mut out = Vec::with_capacity(self.num_nodes());
        for j in 0..=k {
            for i in 0..=k {
                out.push([i as f64 / k as f64, j as f64 / k as f64]);
            }
        }
        out
    }

    /// Shape values and reference gradients at `xi`.
    pub fn eval(self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        match self {
            ReferenceElement::Q1 => {
                let (v, g) = q1_eval(xi);
                (v.to_vec(), g.to_vec())
            }
            ReferenceElement::Q2 => {
                let (v, g) = q2_eval(xi);
                (v.to_vec(), g.to_vec())
            }
        }
    }

    /// 1D Lagrange basis on `[0,1]` with equispaced nodes of this degree.
    pub fn line_basis(self, t: f64) -> Vec<f64> {
        match self {
            ReferenceElement::Q1 => lagrange1(t).0.to_vec(),
            ReferenceElement::Q2 => lagrange2(t).0.to_vec(),
        }
    }
}

#[inline]
fn lagrange1(t: f64) -> ([f64; 2], [f64; 2]) {
    ([1.0 - t, t], [-1.0, 1.0])
}

#[inline]
fn lagrange2(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [
            (2.0 * t - 1.0) * (t - 1.0),
            4.0 * t * (1.0 - t),
            t * (2.0 * t - 1.0),
        ],
        [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
    )
}

#[inline]
pub fn q1_eval(xi: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let (lx, dx) = lagrange1(xi[0]);
    let (ly, dy) = lagrange1(xi[1]);
    let mut v = [0.0; 4];
    let mut g = [[0.0; 2]; 4];
    for j in 0..2 {
        for i in 0..2 {
            let a = i + 2 * j;
            v[a] = lx[i] * ly[j];
            g[a] = [dx[i] * ly[j], lx[i] * dy[j]];
        }
    }
    (v, g)
}

#[inline]
pub fn q2_eval(xi: [f64; 2]) -> ([f64; 9], [[f64; 2]; 9]) {
    let (lx, dx) = lagrange2(xi[0]);
    let (ly, dy) = lagrange2(xi[1]);
    let mut v = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    for j in 0..3 {
        for i in 0..3 {
            let a = i + 3 * j;
            v[a] = lx[i] * ly[j];
            g[a] = [dx[i] * ly[j], lx[i] * dy[j]];
        }
    }
    (v, g)
}

/// Shape data tabulated at the points of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub q1: Vec<([f64; 4], [[f64; 2]; 4])>,
    pub q2: Vec<([f64; 9], [[f64; 2]; 9])>,
}

impl Tabulation {
    pub fn new(rule: &super::QuadratureRule<2>) -> Self {
        Self {
            weights: rule.weights.clone(),
            points: rule.points.clone(),
            q1: rule.points.iter().map(|&p| q1_eval(p)).collect(),
            q2: rule.points.iter().map(|&p| q2_eval(p)).collect(),
        }
    }
}
