//! CSV records and ASCII VTU snapshots, plus a small VTU reader used to
//! check what was written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crackfield_core::adapt::CycleReport;
use crackfield_core::solver::{IncrementState, LoadDisplacementRecord};

pub const LOADS_HEADER: &str = "step,time_s,u_y_mm,F_y_N,dofs,eta";
pub const STATS_HEADER: &str = "cycle,step,cells,dofs_u,dofs_p,dofs_phi,eta";

/// Shortest round-trip decimal form; never locale dependent.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn loads_csv(record: &LoadDisplacementRecord) -> String {
    let mut out = format!("{LOADS_HEADER}\n");
    for r in &record.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            num(r.t),
            num(r.u_y),
            num(r.f_y),
            r.dofs,
            num(r.eta)
        );
    }
    out
}

pub fn write_loads_csv(record: &LoadDisplacementRecord, path: &Path) -> io::Result<()> {
    fs::write(path, loads_csv(record))
}

/// One row per loading step `1..=N` of a cycle.
pub fn stats_csv(report: &CycleReport) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for n in 1..report.field_dofs.len() {
        let (du, dp, dphi) = report.field_dofs[n];
        let eta = report
            .indicators
            .get(n - 1)
            .map(|i| i.total())
            .unwrap_or(0.0);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            report.cycle,
            n,
            report.num_cells[n],
            du,
            dp,
            dphi,
            num(eta)
        );
    }
    out
}

pub fn write_stats_csv(report: &CycleReport, path: &Path) -> io::Result<()> {
    fs::write(path, stats_csv(report))
}

fn data_array(out: &mut String, name: &str, components: usize, values: impl Iterator<Item = f64>) {
    let _ = write!(
        out,
        "        <DataArray type=\"Float64\" Name=\"{name}\" NumberOfComponents=\"{components}\" format=\"ascii\">\n         "
    );
    for v in values {
        let _ = write!(out, " {}", num(v));
    }
    out.push_str("\n        </DataArray>\n");
}

/// Unstructured grid of the leaf cells (as `VTK_QUAD`, hanging vertices
/// are not part of the connectivity) with point fields `u` (z = 0), `p`,
/// `phi`, `lambda` and the cell field `eta`.
pub fn vtu_string(state: &IncrementState, eta: Option<&[f64]>) -> String {
    let disc = &state.disc;
    let (mesh, dofs) = (&disc.mesh, &disc.dofs);
    let nodes = dofs.q1_nodes();
    let n_cells = mesh.num_leaves();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    out.push_str(
        "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n",
    );
    out.push_str("  <UnstructuredGrid>\n");
    let _ = writeln!(
        out,
        "    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
        nodes.len(),
        n_cells
    );

    out.push_str("      <PointData Scalars=\"phi\" Vectors=\"u\">\n");
    let u = nodes.iter().flat_map(|&p| {
        let q = dofs.q2_node_at(p).expect("cell corners are Q2 nodes");
        [state.u[2 * q], state.u[2 * q + 1], 0.0]
    });
    data_array(&mut out, "u", 3, u);
    data_array(&mut out, "p", 1, state.p.iter().copied());
    data_array(&mut out, "phi", 1, state.phi.iter().copied());
    data_array(&mut out, "lambda", 1, state.lambda.iter().copied());
    out.push_str("      </PointData>\n");

    out.push_str("      <CellData Scalars=\"eta\">\n");
    let zeros = vec![0.0; n_cells];
    data_array(&mut out, "eta", 1, eta.unwrap_or(&zeros).iter().copied());
    out.push_str("      </CellData>\n");

    out.push_str("      <Points>\n");
    data_array(
        &mut out,
        "Points",
        3,
        nodes.iter().flat_map(|&p| {
            let x = mesh.to_phys(p);
            [x[0], x[1], 0.0]
        }),
    );
    out.push_str("      </Points>\n");

    out.push_str("      <Cells>\n");
    out.push_str(
        "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n         ",
    );
    for ci in 0..n_cells {
        // counter-clockwise from the lower-left corner
        let [a, b, c, d] = *dofs.cell_q1(ci);
        let _ = write!(out, " {a} {b} {d} {c}");
    }
    out.push_str("\n        </DataArray>\n");
    out.push_str("        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n         ");
    for ci in 0..n_cells {
        let _ = write!(out, " {}", 4 * (ci + 1));
    }
    out.push_str("\n        </DataArray>\n");
    out.push_str("        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n         ");
    for _ in 0..n_cells {
        out.push_str(" 9");
    }
    out.push_str("\n        </DataArray>\n");
    out.push_str("      </Cells>\n");
    out.push_str("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
    out
}

pub fn write_vtu(state: &IncrementState, eta: Option<&[f64]>, path: &Path) -> io::Result<()> {
    fs::write(path, vtu_string(state, eta))
}

/// Contents of an ASCII VTU file as read back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VtuData {
    pub num_points: usize,
    pub num_cells: usize,
    pub points: Vec<[f64; 3]>,
    pub connectivity: Vec<usize>,
    pub offsets: Vec<usize>,
    pub types: Vec<u8>,
    /// Name -> (components, values).
    pub point_data: BTreeMap<String, (usize, Vec<f64>)>,
    pub cell_data: BTreeMap<String, (usize, Vec<f64>)>,
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Parses the subset of VTU that [`vtu_string`] produces: one piece, ASCII
/// data arrays. Array lengths are checked against the declared sizes.
pub fn parse_vtu(text: &str) -> io::Result<VtuData> {
    let piece_at = text.find("<Piece").ok_or_else(|| invalid("no Piece"))?;
    let piece_end = piece_at
        + text[piece_at..]
            .find('>')
            .ok_or_else(|| invalid("open Piece tag"))?;
    let piece = &text[piece_at..piece_end];
    let count = |n: &str| -> io::Result<usize> {
        attr(piece, n)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| invalid(format!("missing {n}")))
    };
    let mut data = VtuData {
        num_points: count("NumberOfPoints")?,
        num_cells: count("NumberOfCells")?,
        ..Default::default()
    };

    let mut rest = &text[piece_end..];
    while let Some(at) = rest.find("<DataArray") {
        let section = &text[..text.len() - rest.len() + at];
        let in_section = |open: &str, close: &str| {
            section
                .rfind(open)
                .map_or(false, |o| section.rfind(close).map_or(true, |c| c < o))
        };
        let tag_end = at
            + rest[at..]
                .find('>')
                .ok_or_else(|| invalid("open DataArray tag"))?;
        let tag = &rest[at..tag_end];
        let body_end = tag_end
            + rest[tag_end..]
                .find("</DataArray>")
                .ok_or_else(|| invalid("unclosed DataArray"))?;
        let body = &rest[tag_end + 1..body_end];
        if attr(tag, "format") != Some("ascii") {
            return Err(invalid("only ascii arrays are supported"));
        }
        let name = attr(tag, "Name")
            .ok_or_else(|| invalid("unnamed DataArray"))?
            .to_string();
        let comps: usize = attr(tag, "NumberOfComponents")
            .and_then(|v| v.parse().ok())
            .unwrap_or(1);
        let values: Vec<f64> = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| invalid(format!("bad number `{t}` in {name}")))
            })
            .collect::<io::Result<_>>()?;
        let check = |n: usize| {
            if values.len() == n {
                Ok(())
            } else {
                Err(invalid(format!(
                    "{name}: {} values, expected {n}",
                    values.len()
                )))
            }
        };
        if in_section("<PointData", "</PointData>") {
            check(comps * data.num_points)?;
            data.point_data.insert(name, (comps, values));
        } else if in_section("<CellData", "</CellData>") {
            check(comps * data.num_cells)?;
            data.cell_data.insert(name, (comps, values));
        } else if in_section("<Points", "</Points>") {
            check(3 * data.num_points)?;
            data.points = values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        } else {
            match name.as_str() {
                "connectivity" => data.connectivity = values.iter().map(|&v| v as usize).collect(),
                "offsets" => {
                    check(data.num_cells)?;
                    data.offsets = values.iter().map(|&v| v as usize).collect();
                }
                "types" => {
                    check(data.num_cells)?;
                    data.types = values.iter().map(|&v| v as u8).collect();
                }
                _ => return Err(invalid(format!("unexpected array {name}"))),
            }
        }
        rest = &rest[body_end + "</DataArray>".len()..];
    }
    if data.offsets.last().copied().unwrap_or(0) != data.connectivity.len() {
        return Err(invalid("offsets do not match connectivity"));
    }
    if data.connectivity.iter().any(|&i| i >= data.num_points) {
        return Err(invalid("connectivity refers to a missing point"));
    }
    Ok(data)
}

pub fn read_vtu(path: &Path) -> io::Result<VtuData> {
    parse_vtu(&fs::read_to_string(path)?)
}
