//! Run artifacts: history and sweep tables, VTK and SVG renderings,
//! manifests and checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::write_config;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::optimizer::{HistoryRow, OptimizerState, ProblemSpec, SweepRow};
use crate::Scalar;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_history_csv<W: Write>(out: W, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(crate::optimizer::HISTORY_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    write_history_csv(create(path)?, rows)
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn save_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if rows.is_empty() {
        w.write_record(crate::optimizer::SWEEP_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Fields written to a VTK file: nodal `phi` and `density`, per-element
/// stresses, and optionally the nodal `dtL` and element `stress_sens`.
pub struct VtkFields<'a, T> {
    pub phi: &'a [T],
    pub density: &'a [T],
    pub von_mises: &'a [T],
    pub relaxed_von_mises: &'a [T],
    pub stress_ratio: &'a [T],
    pub dtl: Option<&'a [T]>,
    pub stress_sens: Option<&'a [T]>,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::SizeMismatch { expected, got });
    }
    Ok(())
}

/// Legacy ASCII unstructured grid of linear triangles (cell type 5).
pub fn write_vtk<T: Scalar, W: Write>(
    mut out: W,
    mesh: &Mesh<T>,
    fields: &VtkFields<T>,
) -> Result<()> {
    let (np, ne) = (mesh.node_count(), mesh.element_count());
    check_len(np, fields.phi.len())?;
    check_len(np, fields.density.len())?;
    check_len(ne, fields.von_mises.len())?;
    check_len(ne, fields.relaxed_von_mises.len())?;
    check_len(ne, fields.stress_ratio.len())?;
    if let Some(d) = fields.dtl {
        check_len(np, d.len())?;
    }
    if let Some(d) = fields.stress_sens {
        check_len(ne, d.len())?;
    }

    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "level-set design")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {np} double")?;
    for p in &mesh.nodes {
        writeln!(out, "{} {} 0", p[0].as_f64(), p[1].as_f64())?;
    }
    writeln!(out, "CELLS {ne} {}", 4 * ne)?;
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(out, "5")?;
    }
    let scalars = |out: &mut W, name: &str, v: &[T]| -> std::io::Result<()> {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for x in v {
            writeln!(out, "{}", x.as_f64())?;
        }
        Ok(())
    };
    writeln!(out, "POINT_DATA {np}")?;
    scalars(&mut out, "phi", fields.phi)?;
    scalars(&mut out, "density", fields.density)?;
    if let Some(d) = fields.dtl {
        scalars(&mut out, "dtL", d)?;
    }
    writeln!(out, "CELL_DATA {ne}")?;
    scalars(&mut out, "von_mises", fields.von_mises)?;
    scalars(&mut out, "relaxed_von_mises", fields.relaxed_von_mises)?;
    scalars(&mut out, "stress_ratio", fields.stress_ratio)?;
    if let Some(d) = fields.stress_sens {
        scalars(&mut out, "stress_sens", d)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_vtk<T: Scalar>(path: &Path, mesh: &Mesh<T>, fields: &VtkFields<T>) -> Result<()> {
    write_vtk(create(path)?, mesh, fields)
}

/// One polygon per element, filled with gray level `1 − h`.
pub fn write_svg<T: Scalar, W: Write>(
    mut out: W,
    mesh: &Mesh<T>,
    element_density: &[T],
) -> Result<()> {
    check_len(mesh.element_count(), element_density.len())?;
    let (w, h) = (mesh.extent[0].as_f64(), mesh.extent[1].as_f64());
    let scale = 1000.0 / w.max(h);
    let (sw, sh) = (w * scale, h * scale);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {sw:.3} {sh:.3}" width="{sw:.0}" height="{sh:.0}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for (t, &rho) in mesh.triangles.iter().zip(element_density) {
        let g = (255.0 * (1.0 - rho.as_f64().clamp(0.0, 1.0))).round() as u8;
        let pts: Vec<String> = t
            .iter()
            .map(|&n| {
                let p = mesh.nodes[n];
                format!(
                    "{:.3},{:.3}",
                    p[0].as_f64() * scale,
                    (h - p[1].as_f64()) * scale
                )
            })
            .collect();
        writeln!(
            out,
            r#"<polygon points="{}" fill="rgb({g},{g},{g})" stroke="rgb({g},{g},{g})" stroke-width="0.2"/>"#,
            pts.join(" ")
        )?;
    }
    writeln!(out, "</svg>")?;
    out.flush()?;
    Ok(())
}

pub fn save_svg<T: Scalar>(path: &Path, mesh: &Mesh<T>, element_density: &[T]) -> Result<()> {
    write_svg(create(path)?, mesh, element_density)
}

/// SHA-256 of the canonical configuration text.
pub fn config_hash(spec: &ProblemSpec) -> String {
    Sha256::digest(write_config(spec).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
    pub status: String,
    pub reason: Option<String>,
    pub disconnected: bool,
    pub iterations: usize,
    pub threads: usize,
    pub final_row: Option<HistoryRow>,
}

impl Manifest {
    pub fn versions() -> BTreeMap<String, String> {
        let mut v = BTreeMap::new();
        v.insert(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        v.insert("history_format".to_string(), "1".to_string());
        v
    }
}

/// Everything needed to resume or render a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ProblemSpec,
    pub state: OptimizerState<f64>,
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let f = std::io::BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}
