//! Point evaluation of nodal fields and nodal interpolation between meshes
//! of one forest.

use super::constraints::HangingNodes;
use super::dofs::DofMap;
use super::element::{q1_eval, q2_eval};
use super::quadrature::gauss_square;
use crate::mesh::{CellKey, IPoint, QuadMesh};
use crate::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// One value per Q1 node.
    ScalarQ1,
    /// Two interleaved values per Q2 node.
    VectorQ2,
}

/// Reference coordinates of a lattice point inside a cell.
pub fn local_coords(cell: &CellKey, p: IPoint) -> [f64; 2] {
    let lo = cell.lower();
    let s = cell.size() as f64;
    [(p.x - lo.x) as f64 / s, (p.y - lo.y) as f64 / s]
}

/// Q1 field value and physical gradient at reference point `xi` of a cell.
pub fn eval_q1(
    mesh: &QuadMesh,
    dofs: &DofMap,
    field: &[f64],
    cell: &CellKey,
    xi: [f64; 2],
) -> (f64, [f64; 2]) {
    let ci = dofs.cell_index(cell).expect("leaf of this mesh");
    let h = mesh.cell_box(cell).size;
    let (v, g) = q1_eval(xi);
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    for (k, &n) in dofs.cell_q1(ci).iter().enumerate() {
        val += v[k] * field[n];
        grad[0] += g[k][0] * field[n] / h;
        grad[1] += g[k][1] * field[n] / h;
    }
    (val, grad)
}

/// Q2 vector field value at reference point `xi` of a cell.
pub fn eval_q2_vec(dofs: &DofMap, field: &[f64], cell: &CellKey, xi: [f64; 2]) -> [f64; 2] {
    let ci = dofs.cell_index(cell).expect("leaf of this mesh");
    let (v, _) = q2_eval(xi);
    let mut out = [0.0; 2];
    for (a, &n) in dofs.cell_q2(ci).iter().enumerate() {
        out[0] += v[a] * field[2 * n];
        out[1] += v[a] * field[2 * n + 1];
    }
    out
}

/// Nodal interpolation: the destination node values are the source field
/// evaluated at the destination node positions. Hanging destination nodes get
/// the point value as well; use [`conforming_interpolant`] for a field in the
/// constrained space.
pub fn interpolate_field(
    src: &[f64],
    src_mesh: &QuadMesh,
    src_dofs: &DofMap,
    dst_mesh: &QuadMesh,
    dst_dofs: &DofMap,
    kind: FieldKind,
) -> Result<Vec<f64>> {
    if !src_mesh.same_forest(dst_mesh) {
        return Err(Error::ForestMismatch);
    }
    let locate = |p: IPoint| -> Result<(CellKey, [f64; 2])> {
        let c = src_mesh.locate(p).ok_or(Error::ForestMismatch)?;
        Ok((c, local_coords(&c, p)))
    };
    match kind {
        FieldKind::ScalarQ1 => dst_dofs
            .q1_nodes()
            .iter()
            .map(|&p| {
                let (c, xi) = locate(p)?;
                Ok(eval_q1(src_mesh, src_dofs, src, &c, xi).0)
            })
            .collect(),
        FieldKind::VectorQ2 => {
            let mut out = Vec::with_capacity(2 * dst_dofs.n_q2());
            for &p in dst_dofs.q2_nodes() {
                let (c, xi) = locate(p)?;
                out.extend(eval_q2_vec(src_dofs, src, &c, xi));
            }
            Ok(out)
        }
    }
}

/// Nodal interpolant of a Q1 field into the conforming Q1 space of `dst`:
/// free nodes take point values, hanging nodes follow their masters.
pub fn conforming_interpolant(
    src: &[f64],
    src_mesh: &QuadMesh,
    src_dofs: &DofMap,
    dst_mesh: &QuadMesh,
    dst_dofs: &DofMap,
    dst_hanging: &HangingNodes,
) -> Result<Vec<f64>> {
    let mut out = interpolate_field(
        src,
        src_mesh,
        src_dofs,
        dst_mesh,
        dst_dofs,
        FieldKind::ScalarQ1,
    )?;
    dst_hanging
        .q1_scalar_set(dst_dofs.n_q1())
        .close()?
        .distribute(&mut out);
    Ok(out)
}

/// `||I_h f - f||_{L2}` for a Q1 field `f` on `src_mesh`, with `I_h` the
/// conforming nodal interpolant onto `dst_mesh`. Integrated on the common
/// refinement of both meshes.
pub fn interpolation_error(
    field: &[f64],
    src_mesh: &QuadMesh,
    src_dofs: &DofMap,
    dst_mesh: &QuadMesh,
    dst_dofs: &DofMap,
) -> Result<f64> {
    let hanging = HangingNodes::build(dst_mesh, dst_dofs);
    let interp = conforming_interpolant(field, src_mesh, src_dofs, dst_mesh, dst_dofs, &hanging)?;
    l2_distance_q1(field, src_mesh, src_dofs, &interp, dst_mesh, dst_dofs)
}

/// L2 distance of two Q1 fields living on meshes of one forest.
pub fn l2_distance_q1(
    a: &[f64],
    a_mesh: &QuadMesh,
    a_dofs: &DofMap,
    b: &[f64],
    b_mesh: &QuadMesh,
    b_dofs: &DofMap,
) -> Result<f64> {
    let common = a_mesh
        .common_refinement(b_mesh)
        .ok_or(Error::ForestMismatch)?;
    let rule = gauss_square(3);
    let mut sum = 0.0;
    for c in common.leaves() {
        let ca = a_mesh.ancestor_leaf(c).ok_or(Error::ForestMismatch)?;
        let cb = b_mesh.ancestor_leaf(c).ok_or(Error::ForestMismatch)?;
        let bx = common.cell_box(c);
        let (ba, bb) = (a_mesh.cell_box(&ca), b_mesh.cell_box(&cb));
        for (p, w) in rule.iter() {
            let x = bx.map(*p);
            let xa = [(x[0] - ba.x0) / ba.size, (x[1] - ba.y0) / ba.size];
            let xb = [(x[0] - bb.x0) / bb.size, (x[1] - bb.y0) / bb.size];
            let d = eval_q1(a_mesh, a_dofs, a, &ca, xa).0 - eval_q1(b_mesh, b_dofs, b, &cb, xb).0;
            sum += w * bx.area() * d * d;
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::constraints::ConstraintSet;

    fn nodal<F: Fn([f64; 2]) -> f64>(m: &QuadMesh, d: &DofMap, f: F) -> Vec<f64> {
        d.q1_nodes().iter().map(|&p| f(m.to_phys(p))).collect()
    }

    #[test]
    fn identity_transfer() {
        let m = QuadMesh::lshape(2);
        let d = DofMap::build(&m);
        let f = nodal(&m, &d, |x| x[0].sin() + x[1]);
        let g = interpolate_field(&f, &m, &d, &m, &d, FieldKind::ScalarQ1).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn bilinear_field_reproduced_on_refinement() {
        let coarse = QuadMesh::lshape(1);
        let dc = DofMap::build(&coarse);
        let fine = coarse.refine(&[coarse.leaves()[0], coarse.leaves()[5]]);
        let df = DofMap::build(&fine);
        let f = nodal(&coarse, &dc, |x| x[0] * x[1]);
        let g = interpolate_field(&f, &coarse, &dc, &fine, &df, FieldKind::ScalarQ1).unwrap();
        // bilinear on each coarse cell: the oracle is the coarse-cell interpolant,
        // which equals x*y at every point of a coarse-cell edge or vertex lattice
        for (n, &p) in df.q1_nodes().iter().enumerate() {
            let c = coarse.locate(p).unwrap();
            let b = coarse.cell_box(&c);
            let x = fine.to_phys(p);
            let (s, t) = ((x[0] - b.x0) / b.size, (x[1] - b.y0) / b.size);
            let corner = |i: f64, j: f64| (b.x0 + i * b.size) * (b.y0 + j * b.size);
            let oracle = (1.0 - s) * (1.0 - t) * corner(0.0, 0.0)
                + s * (1.0 - t) * corner(1.0, 0.0)
                + (1.0 - s) * t * corner(0.0, 1.0)
                + s * t * corner(1.0, 1.0);
            assert!((g[n] - oracle).abs() < 1e-9);
        }
        let err = interpolation_error(&f, &coarse, &dc, &fine, &df).unwrap();
        // roundoff relative to |f|_max * sqrt(area)
        let scale = 250_000.0 * coarse.total_area().sqrt();
        assert!(err < 1e-14 * scale, "{err}");
    }

    #[test]
    fn constants_survive_any_transfer() {
        let a = QuadMesh::lshape(2).refine(&[CellKey {
            level: 2,
            ix: 3,
            iy: 3,
        }]);
        let b = QuadMesh::lshape(1);
        let (da, db) = (DofMap::build(&a), DofMap::build(&b));
        let f = vec![0.7; da.n_q1()];
        let g = interpolate_field(&f, &a, &da, &b, &db, FieldKind::ScalarQ1).unwrap();
        assert!(g.iter().all(|v| (v - 0.7).abs() < 1e-15));
        assert!(interpolation_error(&f, &a, &da, &b, &db).unwrap() < 1e-12);
    }

    #[test]
    fn different_forests_are_rejected() {
        let a = QuadMesh::lshape(0);
        let b = QuadMesh::rectangle([0.0, 0.0], 1.0, 1, 1, 0);
        let (da, db) = (DofMap::build(&a), DofMap::build(&b));
        let f = vec![0.0; da.n_q1()];
        assert!(matches!(
            interpolate_field(&f, &a, &da, &b, &db, FieldKind::ScalarQ1),
            Err(Error::ForestMismatch)
        ));
    }

    #[test]
    fn coarsening_error_matches_dense_quadrature() {
        // x^2 on a fine strip transferred to a coarser one; the error only
        // depends on x, so a 1D high-order quadrature is the oracle
        let fine = QuadMesh::rectangle([0.0, 0.0], 1.0, 1, 1, 4);
        let coarse = QuadMesh::rectangle([0.0, 0.0], 1.0, 1, 1, 2);
        let (df, dc) = (DofMap::build(&fine), DofMap::build(&coarse));
        let f = nodal(&fine, &df, |x| x[0] * x[0]);
        let err = interpolation_error(&f, &fine, &df, &coarse, &dc).unwrap();

        let hf = 1.0 / 16.0;
        let hc = 0.25;
        let pl = |x: f64, h: f64| {
            let i = ((x / h).floor()).min(1.0 / h - 1.0);
            let (a, b) = (i * h, (i + 1.0) * h);
            let s = (x - a) / h;
            (1.0 - s) * a * a + s * b * b
        };
        let n = 200_000;
        let mut oracle = 0.0;
        for k in 0..n {
            let x = (k as f64 + 0.5) / n as f64;
            let d = pl(x, hc) - pl(x, hf);
            oracle += d * d / n as f64;
        }
        let oracle = oracle.sqrt();
        assert!((err - oracle).abs() / oracle < 1e-6, "{err} vs {oracle}");
        // classical h^2/sqrt(30) bound, off by at most the fine-grid error
        let classical = |h: f64| h * h / 30f64.sqrt();
        assert!((err - classical(hc)).abs() <= classical(hf));
    }

    #[test]
    fn conforming_interpolant_is_continuous_across_hanging_edges() {
        let coarse = QuadMesh::lshape(2);
        let dc = DofMap::build(&coarse);
        let fine = coarse.refine(&[
            CellKey {
                level: 2,
                ix: 3,
                iy: 3,
            },
            CellKey {
                level: 2,
                ix: 0,
                iy: 2,
            },
        ]);
        let df = DofMap::build(&fine);
        let hang = HangingNodes::build(&fine, &df);
        assert!(!hang.q1.is_empty());
        let f = nodal(&coarse, &dc, |x| (x[0] / 90.0).sin() * (x[1] / 70.0).cos());
        // transfer to an unrelated mesh and back so the values are not nested
        let g = conforming_interpolant(&f, &coarse, &dc, &fine, &df, &hang).unwrap();
        let mut set = ConstraintSet::new(df.n_q1());
        for (&s, m) in &hang.q1 {
            set.add_hanging(s, m.clone());
        }
        let _ = set.close().unwrap();
        for ci in fine.coarse_interfaces() {
            let ends = ci.fine.face_endpoints(ci.face);
            for t in [0.1, 0.37, 0.5, 0.9] {
                let a = fine.to_phys(ends[0]);
                let b = fine.to_phys(ends[1]);
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let bf = fine.cell_box(&ci.fine);
                let bc = fine.cell_box(&ci.coarse);
                let vf = eval_q1(
                    &fine,
                    &df,
                    &g,
                    &ci.fine,
                    [(x[0] - bf.x0) / bf.size, (x[1] - bf.y0) / bf.size],
                )
                .0;
                let vc = eval_q1(
                    &fine,
                    &df,
                    &g,
                    &ci.coarse,
                    [(x[0] - bc.x0) / bc.size, (x[1] - bc.y0) / bc.size],
                )
                .0;
                assert!((vf - vc).abs() < 1e-12);
            }
        }
    }
}
