//! Constitutive law of the mixed phase-field model and the cell kernels.
//!
//! Units are kN, mm and s throughout. The stress is split into a tensile part
//! `sigma+ = 2 mu E+ + max(p, 0) I` and a compressive remainder, where `E+` is
//! the projection of the linearized strain onto positive semidefinite
//! matrices. Only the tensile part is degraded, by `g(phi_old)`.

use crate::fem::element::Tabulation;
use crate::fem::{CELL_DOFS, CELL_U};
use crate::{Error, Result};

/// Material and loading parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    /// Shear modulus (kN/mm^2).
    pub mu: f64,
    /// First Lamé coefficient (kN/mm^2), derived from `mu` and `nu`.
    pub lambda: f64,
    pub nu: f64,
    /// Critical energy release rate (kN/mm).
    pub gc: f64,
    /// Phase-field bandwidth (mm).
    pub eps: f64,
    /// Residual stiffness in the degradation function.
    pub kappa: f64,
    /// Loading increment (s).
    pub dt: f64,
    /// End time (s).
    pub t_end: f64,
}

impl Default for MaterialParams {
    /// Concrete L-panel settings.
    fn default() -> Self {
        Self::from_poisson(10.95, 0.18, 8.9e-5, 14.0, 1e-10, 1e-4, 0.4)
            .expect("default parameters are valid")
    }
}

impl MaterialParams {
    pub fn from_poisson(
        mu: f64,
        nu: f64,
        gc: f64,
        eps: f64,
        kappa: f64,
        dt: f64,
        t_end: f64,
    ) -> Result<Self> {
        let p = Self {
            mu,
            lambda: lame_from_poisson(mu, nu)?,
            nu,
            gc,
            eps,
            kappa,
            dt,
            t_end,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same material with a different Poisson ratio; `lambda` follows.
    pub fn with_poisson(&self, nu: f64) -> Result<Self> {
        let mut p = self.clone();
        p.nu = nu;
        p.lambda = lame_from_poisson(p.mu, nu)?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.mu > 0.0) {
            return bad("mu must be positive");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return bad("nu must lie in (0, 0.5)");
        }
        let expect = 2.0 * self.mu * self.nu / (1.0 - 2.0 * self.nu);
        if (self.lambda - expect).abs() > 1e-9 * expect {
            return bad("lambda inconsistent with mu and nu");
        }
        if !(self.gc > 0.0) {
            return bad("gc must be positive");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in (0, 1)");
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return bad("dt and t_end must be positive");
        }
        Ok(())
    }

    /// Number of loading increments, `round(t_end / dt)`.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Time of increment `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// `lambda = 2 mu nu / (1 - 2 nu)`.
pub fn lame_from_poisson(mu: f64, nu: f64) -> Result<f64> {
    if !(nu < 0.5) || nu.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "Poisson ratio {nu} must be below 0.5"
        )));
    }
    Ok(2.0 * mu * nu / (1.0 - 2.0 * nu))
}

/// Symmetric 2x2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        yy: 1.0,
        xy: 0.0,
    };

    pub const fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Frobenius product `A : B`.
    pub fn ddot(&self, o: &Sym2) -> f64 {
        self.xx * o.xx + self.yy * o.yy + 2.0 * self.xy * o.xy
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(&self, a: f64) -> Sym2 {
        Sym2::new(a * self.xx, a * self.yy, a * self.xy)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.yy + o.yy, self.xy + o.xy)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.yy - o.yy, self.xy - o.xy)
    }

    /// Row `i` of the tensor.
    pub fn row(&self, i: usize) -> [f64; 2] {
        if i == 0 {
            [self.xx, self.xy]
        } else {
            [self.xy, self.yy]
        }
    }

    /// Eigenvalues `(l1 >= l2)` and the unit eigenvector of `l1`.
    pub fn eigen(&self) -> (f64, f64, [f64; 2]) {
        let m = 0.5 * (self.xx + self.yy);
        let d = 0.5 * (self.xx - self.yy);
        let r = d.hypot(self.xy);
        let angle = 0.5 * self.xy.atan2(d);
        (m + r, m - r, [angle.cos(), angle.sin()])
    }

    /// `Q A Q^T` for a rotation by `angle`.
    pub fn rotate(&self, angle: f64) -> Sym2 {
        let (s, c) = angle.sin_cos();
        // rows of Q: (c, -s), (s, c)
        let a = [[self.xx, self.xy], [self.xy, self.yy]];
        let q = [[c, -s], [s, c]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[i][j] += q[i][k] * a[k][l] * q[j][l];
                    }
                }
            }
        }
        Sym2::new(out[0][0], out[1][1], 0.5 * (out[0][1] + out[1][0]))
    }

    fn outer(v: [f64; 2], w: [f64; 2]) -> Sym2 {
        // symmetric part of v w^T
        Sym2::new(v[0] * w[0], v[1] * w[1], 0.5 * (v[0] * w[1] + v[1] * w[0]))
    }

    fn quad_form(&self, v: [f64; 2], w: [f64; 2]) -> f64 {
        v[0] * (self.xx * w[0] + self.xy * w[1]) + v[1] * (self.xy * w[0] + self.yy * w[1])
    }
}

/// Linear map on symmetric tensors acting on `(xx, yy, xy)` components.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Tangent(pub [[f64; 3]; 3]);

impl Tangent {
    pub fn apply(&self, d: &Sym2) -> Sym2 {
        let v = [d.xx, d.yy, d.xy];
        let m = &self.0;
        let r: [f64; 3] = std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2]);
        Sym2::new(r[0], r[1], r[2])
    }
}

#[inline]
fn ramp(x: f64) -> f64 {
    x.max(0.0)
}

/// Derivative of the ramp; zero at the kink.
#[inline]
fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `E = (grad u + grad u^T) / 2` with `grad[i][j] = d u_i / d x_j`.
pub fn strain(grad: [[f64; 2]; 2]) -> Sym2 {
    Sym2::new(grad[0][0], grad[1][1], 0.5 * (grad[0][1] + grad[1][0]))
}

/// Relative eigenvalue gap below which the coalesced tangent is used.
pub const COALESCENCE_TOL: f64 = 1e-8;

/// Projection of `E` onto positive semidefinite tensors and its derivative.
pub fn positive_strain(e: &Sym2) -> (Sym2, Tangent) {
    let (l1, l2, v1) = e.eigen();
    let v2 = [-v1[1], v1[0]];
    let p1 = Sym2::outer(v1, v1);
    let p2 = Sym2::outer(v2, v2);
    let plus = p1.scale(ramp(l1)).add(&p2.scale(ramp(l2)));

    let coalesced = (l1 - l2).abs() < COALESCENCE_TOL * (l1.abs() + l2.abs() + 1e-30);
    let basis = [
        Sym2::new(1.0, 0.0, 0.0),
        Sym2::new(0.0, 1.0, 0.0),
        Sym2::new(0.0, 0.0, 1.0),
    ];
    let mut m = [[0.0; 3]; 3];
    for (k, d) in basis.iter().enumerate() {
        let dplus = if coalesced {
            d.scale(heaviside(0.5 * (l1 + l2)))
        } else {
            let rho = (ramp(l1) - ramp(l2)) / (l1 - l2);
            p1.scale(heaviside(l1) * d.quad_form(v1, v1))
                .add(&p2.scale(heaviside(l2) * d.quad_form(v2, v2)))
                .add(&Sym2::outer(v1, v2).scale(2.0 * rho * d.quad_form(v1, v2)))
        };
        m[0][k] = dplus.xx;
        m[1][k] = dplus.yy;
        m[2][k] = dplus.xy;
    }
    (plus, Tangent(m))
}

/// Point-wise state entering the stress split.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StrainState {
    pub e: Sym2,
    pub p: f64,
    pub phi_old: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StressPair {
    pub plus: Sym2,
    pub minus: Sym2,
}

impl StressPair {
    /// `g sigma+ + sigma-`.
    pub fn degraded(&self, g: f64) -> Sym2 {
        self.plus.scale(g).add(&self.minus)
    }
}

pub fn stress_split(state: &StrainState, params: &MaterialParams) -> StressPair {
    let (eplus, _) = positive_strain(&state.e);
    split_with(&state.e, &eplus, state.p, params.mu)
}

fn split_with(e: &Sym2, eplus: &Sym2, p: f64, mu: f64) -> StressPair {
    let pp = ramp(p);
    StressPair {
        plus: eplus.scale(2.0 * mu).add(&Sym2::IDENTITY.scale(pp)),
        minus: e
            .sub(eplus)
            .scale(2.0 * mu)
            .add(&Sym2::IDENTITY.scale(p - pp)),
    }
}

/// `g(phi) = (1 - kappa) phi^2 + kappa`.
pub fn degradation(phi: f64, kappa: f64) -> f64 {
    (1.0 - kappa) * phi * phi + kappa
}

/// Nodal values on one cell: Q2 displacement (node-major, x before y), Q1
/// pressure, phase-field, previous phase-field and multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct CellData {
    pub u: [f64; CELL_U],
    pub p: [f64; 4],
    pub phi: [f64; 4],
    pub phi_old: [f64; 4],
    pub lambda: [f64; 4],
}

impl Default for CellData {
    fn default() -> Self {
        Self {
            u: [0.0; CELL_U],
            p: [0.0; 4],
            phi: [1.0; 4],
            phi_old: [1.0; 4],
            lambda: [0.0; 4],
        }
    }
}

/// Local residual blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResidual {
    pub ru: [f64; CELL_U],
    pub rp: [f64; 4],
    pub rphi: [f64; 4],
}

impl CellResidual {
    pub fn to_array(&self) -> [f64; CELL_DOFS] {
        let mut out = [0.0; CELL_DOFS];
        out[..CELL_U].copy_from_slice(&self.ru);
        out[CELL_U..CELL_U + 4].copy_from_slice(&self.rp);
        out[CELL_U + 4..].copy_from_slice(&self.rphi);
        out
    }
}

pub type CellMatrix = [[f64; CELL_DOFS]; CELL_DOFS];

const P0: usize = CELL_U;
const F0: usize = CELL_U + 4;

/// Fields of one quadrature point.
struct PointEval {
    weight: f64,
    n2: [f64; 9],
    g2: [[f64; 2]; 9],
    n1: [f64; 4],
    g1: [[f64; 2]; 4],
    e: Sym2,
    p: f64,
    grad_phi: [f64; 2],
    g: f64,
}

fn point_evals<'a>(
    size: f64,
    data: &'a CellData,
    params: &'a MaterialParams,
    tab: &'a Tabulation,
) -> impl Iterator<Item = PointEval> + 'a {
    let area = size * size;
    (0..tab.weights.len()).map(move |q| {
        let (n2, rg2) = tab.q2[q];
        let (n1, rg1) = tab.q1[q];
        let g2: [[f64; 2]; 9] = std::array::from_fn(|a| [rg2[a][0] / size, rg2[a][1] / size]);
        let g1: [[f64; 2]; 4] = std::array::from_fn(|a| [rg1[a][0] / size, rg1[a][1] / size]);
        let mut grad = [[0.0; 2]; 2];
        for a in 0..9 {
            for i in 0..2 {
                for j in 0..2 {
                    grad[i][j] += data.u[2 * a + i] * g2[a][j];
                }
            }
        }
        let (mut p, mut phi_old) = (0.0, 0.0);
        let mut grad_phi = [0.0; 2];
        for k in 0..4 {
            p += n1[k] * data.p[k];
            phi_old += n1[k] * data.phi_old[k];
            grad_phi[0] += g1[k][0] * data.phi[k];
            grad_phi[1] += g1[k][1] * data.phi[k];
        }
        PointEval {
            weight: tab.weights[q] * area,
            n2,
            g2,
            n1,
            g1,
            e: strain(grad),
            p,
            grad_phi,
            g: degradation(phi_old, params.kappa),
        }
    })
}

/// Residual of the mixed system on one square cell of side `size`.
///
/// `R_u` tests `g(phi_old)(sigma+, E(w)) + (sigma-, E(w)) - (f, w)`, `R_p` tests
/// `(div u, q) - (p, q)/lambda`, and `R_phi` tests
/// `(1-kappa)(phi sigma+:E, psi) + Gc/eps (phi - 1, psi) + Gc eps (grad phi, grad psi)`
/// plus the multiplier with the lumped pairing `sum_k (size^2/4) Lambda_k psi_k`.
///
/// The zero-order phase-field terms are row-sum lumped, e.g.
/// `(phi D, psi_k) ~ phi_k (D, psi_k)`, so the phase-field matrix is an
/// M-matrix on squares and discrete solutions stay in `[0, 1]`.
pub fn cell_residual(
    size: f64,
    data: &CellData,
    params: &MaterialParams,
    body_force: [f64; 2],
    tab: &Tabulation,
) -> CellResidual {
    let mut r = CellResidual {
        ru: [0.0; CELL_U],
        rp: [0.0; 4],
        rphi: [0.0; 4],
    };
    let reaction = params.gc / params.eps;
    let diffusion = params.gc * params.eps;
    for pe in point_evals(size, data, params, tab) {
        let (eplus, _) = positive_strain(&pe.e);
        let split = split_with(&pe.e, &eplus, pe.p, params.mu);
        let sigma = split.degraded(pe.g);
        let w = pe.weight;
        for a in 0..9 {
            for i in 0..2 {
                let s = sigma.row(i);
                r.ru[2 * a + i] +=
                    w * (s[0] * pe.g2[a][0] + s[1] * pe.g2[a][1] - body_force[i] * pe.n2[a]);
            }
        }
        let drive = split.plus.ddot(&pe.e);
        let div_res = pe.e.trace() - pe.p / params.lambda;
        for k in 0..4 {
            r.rp[k] += w * div_res * pe.n1[k];
            r.rphi[k] += w
                * (((1.0 - params.kappa) * data.phi[k] * drive + reaction * (data.phi[k] - 1.0))
                    * pe.n1[k]
                    + diffusion * (pe.grad_phi[0] * pe.g1[k][0] + pe.grad_phi[1] * pe.g1[k][1]));
        }
    }
    let lump = 0.25 * size * size;
    for k in 0..4 {
        r.rphi[k] += lump * data.lambda[k];
    }
    r
}

/// Derivative of [`cell_residual`] with respect to the local `(u, p, phi)`
/// values, with `g(phi_old)` and the multiplier held fixed.
pub fn cell_jacobian(
    size: f64,
    data: &CellData,
    params: &MaterialParams,
    tab: &Tabulation,
) -> Box<CellMatrix> {
    let mut k = Box::new([[0.0; CELL_DOFS]; CELL_DOFS]);
    let reaction = params.gc / params.eps;
    let diffusion = params.gc * params.eps;
    let mu2 = 2.0 * params.mu;
    for pe in point_evals(size, data, params, tab) {
        let (eplus, tangent) = positive_strain(&pe.e);
        let split = split_with(&pe.e, &eplus, pe.p, params.mu);
        let hp = heaviside(pe.p);
        let pplus = ramp(pe.p);
        let w = pe.weight;
        let drive = split.plus.ddot(&pe.e);
        let omk = 1.0 - params.kappa;
        // dD/dE = 4 mu E+ + p+ I
        let ddrive = eplus.scale(2.0 * mu2).add(&Sym2::IDENTITY.scale(pplus));
        let dsig_dp = pe.g * hp + 1.0 - hp;

        // strain perturbations of each displacement dof
        let de: [Sym2; CELL_U] = std::array::from_fn(|col| {
            let (b, d) = (col / 2, col % 2);
            let g = pe.g2[b];
            if d == 0 {
                Sym2::new(g[0], 0.0, 0.5 * g[1])
            } else {
                Sym2::new(0.0, g[1], 0.5 * g[0])
            }
        });

        for col in 0..CELL_U {
            let dp = tangent.apply(&de[col]);
            let dsig = de[col].add(&dp.scale(pe.g - 1.0)).scale(mu2);
            for a in 0..9 {
                for i in 0..2 {
                    let s = dsig.row(i);
                    k[2 * a + i][col] += w * (s[0] * pe.g2[a][0] + s[1] * pe.g2[a][1]);
                }
            }
            let (b, d) = (col / 2, col % 2);
            let dd = ddrive.ddot(&de[col]);
            for m in 0..4 {
                k[P0 + m][col] += w * pe.n1[m] * pe.g2[b][d];
                k[F0 + m][col] += w * omk * data.phi[m] * pe.n1[m] * dd;
            }
        }
        for l in 0..4 {
            for a in 0..9 {
                for i in 0..2 {
                    k[2 * a + i][P0 + l] += w * dsig_dp * pe.g2[a][i] * pe.n1[l];
                }
            }
            for m in 0..4 {
                k[P0 + m][P0 + l] -= w * pe.n1[m] * pe.n1[l] / params.lambda;
                k[F0 + m][P0 + l] +=
                    w * omk * data.phi[m] * hp * pe.e.trace() * pe.n1[m] * pe.n1[l];
                k[F0 + m][F0 + l] +=
                    w * diffusion * (pe.g1[m][0] * pe.g1[l][0] + pe.g1[m][1] * pe.g1[l][1]);
            }
            k[F0 + l][F0 + l] += w * (omk * drive + reaction) * pe.n1[l];
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quadrature::gauss_square;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn lame_values() {
        let l = lame_from_poisson(10.95e3, 0.18).unwrap();
        assert!((l - 6.16e3).abs() / 6.16e3 < 0.01);
        assert!((l - 6.18e3).abs() / 6.18e3 < 0.01);
        let l = lame_from_poisson(10.95e3, 0.40).unwrap();
        assert!((l - 43.8e3).abs() < 1.0);
        assert!(lame_from_poisson(10.95e3, 1e-12).unwrap() < 1e-7);
        assert!(lame_from_poisson(1.0, 0.5).is_err());
        assert!(lame_from_poisson(1.0, 0.6).is_err());
    }

    #[test]
    fn strain_of_rotation_vanishes() {
        assert_eq!(strain([[0.0, 0.3], [-0.3, 0.0]]), Sym2::ZERO);
        assert_eq!(strain([[1.0, 2.0], [4.0, 5.0]]), Sym2::new(1.0, 5.0, 3.0));
    }

    #[test]
    fn positive_part_examples() {
        let (p, _) = positive_strain(&Sym2::new(0.3, 0.0, 0.0));
        assert!((p.xx - 0.3).abs() < 1e-15 && p.yy.abs() < 1e-15 && p.xy.abs() < 1e-15);
        let (p, _) = positive_strain(&Sym2::new(-1.0, -1.0, 0.0));
        assert_eq!(p, Sym2::ZERO);
        let s = 0.2;
        let (p, _) = positive_strain(&Sym2::new(0.0, 0.0, s));
        for v in [p.xx, p.yy, p.xy] {
            assert!((v - 0.5 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn split_consistency_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prm = params();
        for _ in 0..1000 {
            let e = Sym2::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let p = rng.gen_range(-5.0..5.0);
            let st = StrainState { e, p, phi_old: 1.0 };
            let sp = stress_split(&st, &prm);
            let full = e.scale(2.0 * prm.mu).add(&Sym2::IDENTITY.scale(p));
            let diff = sp.plus.add(&sp.minus).sub(&full);
            assert!(diff.norm() <= 1e-12 * full.norm().max(1e-300));
        }
    }

    #[test]
    fn split_examples() {
        let prm = params();
        let sp = stress_split(
            &StrainState {
                e: Sym2::new(0.2, 0.1, 0.05),
                p: 1.0,
                phi_old: 1.0,
            },
            &prm,
        );
        assert!(sp.minus.norm() < 1e-14);
        let sp = stress_split(
            &StrainState {
                e: Sym2::new(-1.0, -1.0, 0.0),
                p: -1.0,
                phi_old: 1.0,
            },
            &prm,
        );
        assert_eq!(sp.plus, Sym2::ZERO);
    }

    #[test]
    fn degradation_values() {
        assert_eq!(degradation(1.0, 1e-10), 1.0);
        assert_eq!(degradation(0.0, 1e-10), 1e-10);
        assert_eq!(degradation(0.5, 1e-10), 0.25 * (1.0 - 1e-10) + 1e-10);
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let e = Sym2::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let (l1, l2, _) = e.eigen();
            if (l1 - l2).abs() < 1e-3 || l1.abs() < 1e-3 || l2.abs() < 1e-3 {
                continue;
            }
            let (_, t) = positive_strain(&e);
            let h = 1e-7;
            for (k, d) in [
                Sym2::new(1.0, 0.0, 0.0),
                Sym2::new(0.0, 1.0, 0.0),
                Sym2::new(0.0, 0.0, 1.0),
            ]
            .iter()
            .enumerate()
            {
                let (pp, _) = positive_strain(&e.add(&d.scale(h)));
                let (pm, _) = positive_strain(&e.sub(&d.scale(h)));
                let fd = pp.sub(&pm).scale(0.5 / h);
                let an = Sym2::new(t.0[0][k], t.0[1][k], t.0[2][k]);
                assert!(fd.sub(&an).norm() < 1e-6, "{fd:?} vs {an:?}");
            }
        }
    }

    #[test]
    fn coalesced_tangent_is_identity_or_zero() {
        let (_, t) = positive_strain(&Sym2::new(0.3, 0.3, 0.0));
        assert_eq!(t.0, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let (_, t) = positive_strain(&Sym2::new(-0.3, -0.3, 0.0));
        assert_eq!(t.0, [[0.0; 3]; 3]);
    }

    fn tab() -> Tabulation {
        Tabulation::new(&gauss_square(3))
    }

    #[test]
    fn intact_unloaded_cell_is_in_equilibrium() {
        let r = cell_residual(10.0, &CellData::default(), &params(), [0.0, 0.0], &tab());
        assert!(r.to_array().iter().all(|&v| v.abs() < 1e-18));
    }

    #[test]
    fn uniform_dilation_satisfies_pressure_identity() {
        let prm = params();
        let alpha = 1e-3;
        let size = 7.0;
        let (x0, y0) = (3.0, -2.0);
        let mut d = CellData::default();
        for j in 0..3 {
            for i in 0..3 {
                let a = i + 3 * j;
                d.u[2 * a] = alpha * (x0 + 0.5 * i as f64 * size);
                d.u[2 * a + 1] = alpha * (y0 + 0.5 * j as f64 * size);
            }
        }
        d.p = [prm.lambda * 2.0 * alpha; 4];
        let r = cell_residual(size, &d, &prm, [0.0, 0.0], &tab());
        for v in r.rp {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_jacobian_is_linear_mixed_elasticity() {
        let prm = params();
        let k = cell_jacobian(1.0, &CellData::default(), &prm, &tab());
        // compare the (u,u) block with 2 mu (E(v), E(w)) computed directly
        let t = tab();
        for row in 0..CELL_U {
            for col in 0..CELL_U {
                let mut v = 0.0;
                for q in 0..t.weights.len() {
                    let g = t.q2[q].1;
                    let e = |c: usize| {
                        let (b, d) = (c / 2, c % 2);
                        if d == 0 {
                            Sym2::new(g[b][0], 0.0, 0.5 * g[b][1])
                        } else {
                            Sym2::new(0.0, g[b][1], 0.5 * g[b][0])
                        }
                    };
                    v += t.weights[q] * 2.0 * prm.mu * e(row).ddot(&e(col));
                }
                assert!((k[row][col] - v).abs() < 1e-12 * prm.mu);
            }
        }
        // (u,p) and (p,u) blocks are transposes when g = 1
        for a in 0..CELL_U {
            for m in 0..4 {
                assert!((k[a][P0 + m] - k[P0 + m][a]).abs() < 1e-14);
            }
        }
    }

    fn random_cell(rng: &mut ChaCha8Rng, scale: f64) -> CellData {
        CellData {
            u: std::array::from_fn(|_| scale * rng.gen_range(-1.0..1.0)),
            p: std::array::from_fn(|_| rng.gen_range(-0.05..0.05)),
            phi: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
            phi_old: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
            lambda: std::array::from_fn(|_| rng.gen_range(-1e-6..0.0)),
        }
    }

    fn perturb(d: &CellData, j: usize, h: f64) -> CellData {
        let mut d = d.clone();
        if j < CELL_U {
            d.u[j] += h;
        } else if j < F0 {
            d.p[j - P0] += h;
        } else {
            d.phi[j - F0] += h;
        }
        d
    }

    #[test]
    fn cell_jacobian_matches_central_differences() {
        let prm = params();
        let t = tab();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let size = 12.5;
        for _ in 0..20 {
            let d = random_cell(&mut rng, 0.05);
            let k = cell_jacobian(size, &d, &prm, &t);
            for j in 0..CELL_DOFS {
                let h = if j < CELL_U { 1e-7 } else { 1e-6 };
                let rp = cell_residual(size, &perturb(&d, j, h), &prm, [0.0, 0.0], &t).to_array();
                let rm = cell_residual(size, &perturb(&d, j, -h), &prm, [0.0, 0.0], &t).to_array();
                let col_norm: f64 = (0..CELL_DOFS)
                    .map(|i| k[i][j] * k[i][j])
                    .sum::<f64>()
                    .sqrt();
                for i in 0..CELL_DOFS {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!(
                        (fd - k[i][j]).abs() <= 1e-5 * col_norm.max(1e-12),
                        "entry ({i},{j}): fd {fd} vs {}",
                        k[i][j]
                    );
                }
            }
        }
    }

    fn random_sym(rng: &mut ChaCha8Rng) -> Sym2 {
        Sym2::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
    }

    /// Eigenvalues of a symmetric 2x2 matrix from the characteristic polynomial.
    fn eigvals(a: &Sym2) -> (f64, f64) {
        let m = 0.5 * (a.xx + a.yy);
        let r = (0.25 * (a.xx - a.yy).powi(2) + a.xy * a.xy).sqrt();
        (m - r, m + r)
    }

    #[test]
    fn projection_is_psd_with_nsd_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let e = random_sym(&mut rng);
            let (ep, _) = positive_strain(&e);
            assert!(eigvals(&ep).0 >= -1e-14);
            assert!(eigvals(&e.sub(&ep)).1 <= 1e-14);
            // E+ and E- are orthogonal
            assert!(ep.ddot(&e.sub(&ep)).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_commutes_with_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let e = random_sym(&mut rng);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (th.cos(), th.sin());
            // Q A Q^T with Q = [[c, -s], [s, c]]
            let rot = |a: &Sym2| {
                Sym2::new(
                    c * c * a.xx - 2.0 * c * s * a.xy + s * s * a.yy,
                    s * s * a.xx + 2.0 * c * s * a.xy + c * c * a.yy,
                    c * s * (a.xx - a.yy) + (c * c - s * s) * a.xy,
                )
            };
            let lhs = positive_strain(&rot(&e)).0;
            let rhs = rot(&positive_strain(&e).0);
            assert!(lhs.sub(&rhs).norm() < 1e-10, "{lhs:?} vs {rhs:?}");
        }
    }

    /// Residual written out directly from the weak form with a 6x6 Gauss
    /// rule; valid where `E` is positive semidefinite and `p > 0`, so the
    /// split is the identity on the positive side.
    fn oracle_residual(size: f64, d: &CellData, prm: &MaterialParams) -> [f64; CELL_DOFS] {
        let lag = |t: f64| {
            [
                2.0 * (t - 0.5) * (t - 1.0),
                -4.0 * t * (t - 1.0),
                2.0 * t * (t - 0.5),
            ]
        };
        let dlag = |t: f64| [4.0 * t - 3.0, -8.0 * t + 4.0, 4.0 * t - 1.0];
        let rule = gauss_square(6);
        let mut r = [0.0; CELL_DOFS];
        let g = degradation(1.0, prm.kappa);
        for (xi, w) in rule.iter() {
            let w = w * size * size;
            let (lx, ly, dx, dy) = (lag(xi[0]), lag(xi[1]), dlag(xi[0]), dlag(xi[1]));
            let g2: Vec<[f64; 2]> = (0..9)
                .map(|a| [dx[a % 3] * ly[a / 3] / size, lx[a % 3] * dy[a / 3] / size])
                .collect();
            let n1 = [
                (1.0 - xi[0]) * (1.0 - xi[1]),
                xi[0] * (1.0 - xi[1]),
                (1.0 - xi[0]) * xi[1],
                xi[0] * xi[1],
            ];
            let g1 = [
                [-(1.0 - xi[1]) / size, -(1.0 - xi[0]) / size],
                [(1.0 - xi[1]) / size, -xi[0] / size],
                [-xi[1] / size, (1.0 - xi[0]) / size],
                [xi[1] / size, xi[0] / size],
            ];
            let (mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0);
            for a in 0..9 {
                exx += d.u[2 * a] * g2[a][0];
                eyy += d.u[2 * a + 1] * g2[a][1];
                exy += 0.5 * (d.u[2 * a] * g2[a][1] + d.u[2 * a + 1] * g2[a][0]);
            }
            let p: f64 = (0..4).map(|k| n1[k] * d.p[k]).sum();
            assert!(p > 0.0 && exx + eyy > 0.0 && exx * eyy - exy * exy > 0.0);
            let gphi = [
                (0..4).map(|k| g1[k][0] * d.phi[k]).sum::<f64>(),
                (0..4).map(|k| g1[k][1] * d.phi[k]).sum::<f64>(),
            ];
            // all of the stress is on the tensile side
            let sxx = g * (2.0 * prm.mu * exx + p);
            let syy = g * (2.0 * prm.mu * eyy + p);
            let sxy = g * 2.0 * prm.mu * exy;
            let drive = 2.0 * prm.mu * (exx * exx + eyy * eyy + 2.0 * exy * exy) + p * (exx + eyy);
            for a in 0..9 {
                r[2 * a] += w * (sxx * g2[a][0] + sxy * g2[a][1]);
                r[2 * a + 1] += w * (sxy * g2[a][0] + syy * g2[a][1]);
            }
            for k in 0..4 {
                r[CELL_U + k] += w * (exx + eyy - p / prm.lambda) * n1[k];
                r[F0 + k] += w
                    * (((1.0 - prm.kappa) * drive + prm.gc / prm.eps) * d.phi[k] * n1[k]
                        - prm.gc / prm.eps * n1[k]
                        + prm.gc * prm.eps * (gphi[0] * g1[k][0] + gphi[1] * g1[k][1]));
            }
        }
        for k in 0..4 {
            r[F0 + k] += 0.25 * size * size * d.lambda[k];
        }
        r
    }

    #[test]
    fn residual_matches_high_order_quadrature_on_tensile_states() {
        let prm = params();
        let t = tab();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let size = 9.0;
        for _ in 0..50 {
            // dominant dilation keeps E positive definite over the cell
            let alpha = rng.gen_range(1e-3..2e-3);
            let mut d = CellData::default();
            for a in 0..9 {
                let x = [0.5 * (a % 3) as f64 * size, 0.5 * (a / 3) as f64 * size];
                d.u[2 * a] = alpha * x[0] + 1e-4 * size * rng.gen_range(-1.0..1.0);
                d.u[2 * a + 1] = alpha * x[1] + 1e-4 * size * rng.gen_range(-1.0..1.0);
            }
            d.p = std::array::from_fn(|_| rng.gen_range(0.01..0.02));
            d.phi = std::array::from_fn(|_| rng.gen_range(0.2..1.0));
            d.lambda = std::array::from_fn(|_| rng.gen_range(0.0..1e-6));
            let r = cell_residual(size, &d, &prm, [0.0, 0.0], &t).to_array();
            let o = oracle_residual(size, &d, &prm);
            let scale = o.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..CELL_DOFS {
                assert!(
                    (r[i] - o[i]).abs() <= 1e-12 * scale,
                    "row {i}: {} vs {}",
                    r[i],
                    o[i]
                );
            }
        }
    }
}
