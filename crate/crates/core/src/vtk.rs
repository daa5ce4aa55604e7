//! Legacy-VTK ASCII output of a state, and a reader for the same subset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{Discretization, FieldState};

/// Parsed contents of a legacy unstructured-grid file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    /// Point arrays; vectors are stored flattened with 3 components.
    pub point_data: BTreeMap<String, Vec<f64>>,
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn scalars(out: &mut String, name: &str, values: impl Iterator<Item = f64>) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        num(out, v);
        out.push('\n');
    }
}

/// Render the state as a legacy-VTK document.
pub fn render(disc: &Discretization, state: &FieldState) -> String {
    let mesh = &disc.mesh;
    let n = mesh.num_vertices();
    let mut out = String::with_capacity(n * 400);
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nvefem t={:.17e}\nASCII\nDATASET UNSTRUCTURED_GRID", state.time);
    let _ = writeln!(out, "POINTS {n} double");
    for p in &mesh.vertices {
        num(&mut out, p[0]);
        out.push(' ');
        num(&mut out, p[1]);
        out.push_str(" 0\n");
    }
    let m = mesh.num_elements();
    let _ = writeln!(out, "CELLS {m} {}", 4 * m);
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {m}");
    for _ in 0..m {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    scalars(&mut out, "phi", state.phi.iter().copied());
    scalars(&mut out, "mu", state.mu.iter().copied());
    scalars(&mut out, "sigma", state.sigma.iter().copied());
    scalars(&mut out, "p", state.p.iter().copied());
    // vertex coefficients are point values for both velocity elements
    let nn = disc.velocity.n_nodes;
    let _ = writeln!(out, "VECTORS v double");
    for i in 0..n {
        num(&mut out, state.v[i]);
        out.push(' ');
        num(&mut out, state.v[nn + i]);
        out.push_str(" 0\n");
    }
    scalars(&mut out, "v_magnitude", (0..n).map(|i| state.v[i].hypot(state.v[nn + i])));
    for (k, name) in ["B_xx", "B_yy", "B_xy"].iter().enumerate() {
        scalars(&mut out, name, state.b.iter().map(|b| b.components()[k]));
    }
    let eig: Vec<(f64, f64)> = state
        .b
        .iter()
        .map(|b| {
            let e = b.eigen();
            (e.min_value(), e.max_value())
        })
        .collect();
    scalars(&mut out, "B_eig_min", eig.iter().map(|e| e.0));
    scalars(&mut out, "B_eig_max", eig.iter().map(|e| e.1));
    out
}

pub fn write_vtk(disc: &Discretization, state: &FieldState, path: &Path) -> Result<()> {
    std::fs::write(path, render(disc, state))?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::invalid(format!("vtk: {}", msg.into()))
}

/// Parse the subset of legacy VTK produced by [`render`].
pub fn parse(text: &str) -> Result<VtkData> {
    let mut tok = text.lines().skip(3).flat_map(str::split_whitespace);
    let mut next = || tok.next().ok_or_else(|| bad("unexpected end of file"));
    fn f(s: &str) -> Result<f64> {
        s.parse().map_err(|_| bad(format!("bad number `{s}`")))
    }
    fn u(s: &str) -> Result<usize> {
        s.parse().map_err(|_| bad(format!("bad integer `{s}`")))
    }
    let mut data = VtkData::default();
    let mut npoints = 0;
    if next()? != "DATASET" || next()? != "UNSTRUCTURED_GRID" {
        return Err(bad("expected DATASET UNSTRUCTURED_GRID"));
    }
    while let Ok(key) = next() {
        match key {
            "POINTS" => {
                npoints = u(next()?)?;
                next()?;
                for _ in 0..npoints {
                    data.points.push([f(next()?)?, f(next()?)?, f(next()?)?]);
                }
            }
            "CELLS" => {
                let m = u(next()?)?;
                next()?;
                for _ in 0..m {
                    let k = u(next()?)?;
                    data.cells.push((0..k).map(|_| next().and_then(u)).collect::<Result<_>>()?);
                }
            }
            "CELL_TYPES" => {
                let m = u(next()?)?;
                for _ in 0..m {
                    data.cell_types.push(next()?.parse().map_err(|_| bad("bad cell type"))?);
                }
            }
            "POINT_DATA" => {
                u(next()?)?;
            }
            "SCALARS" => {
                let name = next()?.to_string();
                next()?;
                let ncomp = u(next()?)?;
                if next()? != "LOOKUP_TABLE" {
                    return Err(bad("expected LOOKUP_TABLE"));
                }
                next()?;
                let vals = (0..npoints * ncomp).map(|_| next().and_then(f)).collect::<Result<_>>()?;
                data.point_data.insert(name, vals);
            }
            "VECTORS" => {
                let name = next()?.to_string();
                next()?;
                let vals = (0..npoints * 3).map(|_| next().and_then(f)).collect::<Result<_>>()?;
                data.point_data.insert(name, vals);
            }
            other => return Err(bad(format!("unsupported section `{other}`"))),
        }
    }
    Ok(data)
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    parse(&std::fs::read_to_string(path)?)
}
