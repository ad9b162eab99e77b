//! Result files: density fields, load and path curves, design summaries.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design_field::{DesignVector, FieldState};
use crate::error::{Error, Result};
use crate::mesh::{ElementTag, MeshModel, Point};
use crate::optimizer::StopReason;
use crate::problems::{f_in, f_p, u_out, Evaluation, ProblemInstance, ProblemSpec};
use crate::solver::EquilibriumPath;

/// Legacy ASCII VTK text of the mesh with per-element scalars.
pub fn format_vtk(mesh: &MeshModel, title: &str, cell_data: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    let n = mesh.num_nodes();
    let m = mesh.num_elements();
    writeln!(s, "# vtk DataFile Version 4.2").unwrap();
    writeln!(s, "{}", title.replace('\n', " ")).unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {n} double").unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:?} {:?} 0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {m} {}", 4 * m).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        s.push_str("5\n");
    }
    writeln!(s, "CELL_DATA {m}").unwrap();
    let tags: Vec<f64> = mesh.tags().iter().map(|t| t.code() as f64).collect();
    for (name, values) in std::iter::once(("tag", tags.as_slice())).chain(cell_data.iter().copied()) {
        assert_eq!(values.len(), m, "cell data `{name}` has the wrong length");
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in values {
            writeln!(s, "{v:?}").unwrap();
        }
    }
    s
}

/// Writes the density, support stiffness, load footprint and energy blend fields.
pub fn write_density_vtk(path: &Path, mesh: &MeshModel, fields: &FieldState, title: &str) -> Result<()> {
    let text = format_vtk(
        mesh,
        title,
        &[
            ("rho_bar", &fields.rho_bar),
            ("k_s", &fields.k_s),
            ("f_e", &fields.f_e),
            ("gamma", &fields.gamma),
        ],
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mesh and cell scalars read back from a VTK file written by [`format_vtk`].
#[derive(Debug, Clone)]
pub struct VtkData {
    pub mesh: MeshModel,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

struct Tokens<'a> {
    iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.iter.next() {
            Some((l, t)) => {
                self.line = l;
                Ok(t)
            }
            None => Err(Error::MeshFormat {
                line: self.line,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.next(what)?;
        t.parse().map_err(|_| Error::MeshFormat {
            line: self.line,
            message: format!("bad {what} `{t}`"),
        })
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let t = self.next(want)?;
        if t == want {
            Ok(())
        } else {
            Err(Error::MeshFormat {
                line: self.line,
                message: format!("expected `{want}`, found `{t}`"),
            })
        }
    }
}

pub fn parse_vtk(text: &str, thickness: f64) -> Result<VtkData> {
    let mut tk = Tokens {
        iter: Box::new(
            text.lines()
                .enumerate()
                .skip(2)
                .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t))),
        ),
        line: 3,
    };
    for want in ["ASCII", "DATASET", "UNSTRUCTURED_GRID", "POINTS"] {
        tk.expect(want)?;
    }
    let n: usize = tk.num("node count")?;
    tk.next("point type")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let x = tk.num("x")?;
        let y = tk.num("y")?;
        tk.next("z")?;
        nodes.push([x, y]);
    }
    tk.expect("CELLS")?;
    let m: usize = tk.num("cell count")?;
    tk.next("cell list size")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        tk.expect("3")?;
        triangles.push([tk.num("node index")?, tk.num("node index")?, tk.num("node index")?]);
    }
    tk.expect("CELL_TYPES")?;
    tk.next("cell count")?;
    for _ in 0..m {
        tk.expect("5")?;
    }
    let mut cell_data = Vec::new();
    if tk.expect("CELL_DATA").is_ok() {
        tk.next("cell count")?;
        while tk.expect("SCALARS").is_ok() {
            let name = tk.next("name")?.to_string();
            tk.next("type")?;
            tk.next("components")?;
            tk.expect("LOOKUP_TABLE")?;
            tk.next("table name")?;
            let values = (0..m).map(|_| tk.num("value")).collect::<Result<Vec<f64>>>()?;
            cell_data.push((name, values));
        }
    }
    let tags = match cell_data.iter().position(|(name, _)| name == "tag") {
        Some(i) => cell_data
            .remove(i)
            .1
            .iter()
            .map(|&c| {
                ElementTag::from_code(c as u8).ok_or_else(|| Error::MeshFormat {
                    line: 0,
                    message: format!("bad element tag {c}"),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![ElementTag::Designable; m],
    };
    Ok(VtkData {
        mesh: MeshModel::new(nodes, triangles, tags, thickness)?,
        cell_data,
    })
}

pub fn read_vtk(path: &Path, thickness: f64) -> Result<VtkData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text, thickness)
}

pub fn density_file_name(iteration: usize) -> String {
    format!("density_{iteration:03}.vtk")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// `step, input_disp_m, F_in_N, F_p_N, lambda_x, lambda_y`, one row per step.
pub fn write_load_displacement(path: &Path, instance: &ProblemInstance, design: &DesignVector, eq: &EquilibriumPath) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["step", "input_disp_m", "F_in_N", "F_p_N", "lambda_x", "lambda_y"])
        .map_err(&err)?;
    for (m, s) in eq.states.iter().enumerate() {
        w.write_record([
            (m + 1).to_string(),
            format!("{:e}", s.fraction * instance.spec.u_in),
            format!("{:e}", f_in(s.lambda, design.theta)),
            format!("{:e}", f_p(s.lambda, design.theta)),
            format!("{:e}", s.lambda[0]),
            format!("{:e}", s.lambda[1]),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Deformed output point along the path, with the selected output displacement.
pub fn write_output_path(path: &Path, instance: &ProblemInstance, eq: &EquilibriumPath) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["step", "input_disp_m", "x_out_m", "y_out_m", "u_out_m"])
        .map_err(&err)?;
    for (m, s) in eq.states.iter().enumerate() {
        let p = instance.output_position(&s.u);
        w.write_record([
            (m + 1).to_string(),
            format!("{:e}", s.fraction * instance.spec.u_in),
            format!("{:e}", p[0]),
            format!("{:e}", p[1]),
            format!("{:e}", u_out(&s.u, instance.selection())),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Every converged state, including bisection substeps.
pub fn write_solver_trace(path: &Path, eq: &EquilibriumPath) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "step",
        "fraction",
        "bisections",
        "iterations",
        "residual_N",
        "lambda_x",
        "lambda_y",
        "substep",
    ])
    .map_err(&err)?;
    for t in &eq.trace {
        w.write_record([
            t.step.to_string(),
            format!("{:e}", t.fraction),
            t.bisections.to_string(),
            t.iterations.to_string(),
            format!("{:e}", t.residual),
            format!("{:e}", t.lambda_x),
            format!("{:e}", t.lambda_y),
            (t.substep as u8).to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Curves of every load case, named `<prefix>load_displacement_caseI.csv` etc.
pub fn write_curves(dir: &Path, prefix: &str, instance: &ProblemInstance, design: &DesignVector, paths: &[EquilibriumPath], trace: bool) -> Result<()> {
    for (i, eq) in paths.iter().enumerate() {
        let case = i + 1;
        write_load_displacement(&dir.join(format!("{prefix}load_displacement_case{case}.csv")), instance, design, eq)?;
        write_output_path(&dir.join(format!("{prefix}output_path_case{case}.csv")), instance, eq)?;
        if trace {
            write_solver_trace(&dir.join(format!("{prefix}solver_trace_case{case}.csv")), eq)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitySummary {
    pub label: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<bool>,
}

/// Final design, its responses and everything needed to re-analyze it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub problem: String,
    pub fixed_bcs: bool,
    pub stop: Option<StopReason>,
    pub iterations: usize,
    pub objective: QuantitySummary,
    pub constraints: Vec<QuantitySummary>,
    pub supports: Vec<Point>,
    pub load: Point,
    pub theta_rad: f64,
    /// Mesh file, relative to the summary's directory.
    pub mesh_file: PathBuf,
    pub spec: ProblemSpec,
    pub rho: Vec<f64>,
}

impl DesignSummary {
    pub fn new(
        instance: &ProblemInstance,
        design: &DesignVector,
        evaluation: &Evaluation,
        stop: Option<StopReason>,
        iterations: usize,
        mesh_file: PathBuf,
    ) -> Self {
        let spec = &instance.spec;
        DesignSummary {
            problem: spec.name.clone(),
            fixed_bcs: spec.fixed_bcs,
            stop,
            iterations,
            objective: QuantitySummary {
                label: spec.objective.quantity.label(),
                value: evaluation.objective,
                bound: None,
                satisfied: None,
            },
            constraints: evaluation
                .constraints
                .iter()
                .zip(&spec.constraints)
                .map(|(c, s)| QuantitySummary {
                    label: format!(
                        "{} {} {}",
                        c.label,
                        match s.kind {
                            crate::problems::BoundKind::Upper => "<=",
                            crate::problems::BoundKind::Lower => ">=",
                        },
                        c.bound
                    ),
                    value: c.value,
                    bound: Some(c.bound),
                    satisfied: Some(c.normalized <= 0.0),
                })
                .collect(),
            supports: design.supports.clone(),
            load: design.load,
            theta_rad: design.theta,
            mesh_file,
            spec: spec.clone(),
            rho: design.rho.clone(),
        }
    }

    pub fn design(&self) -> DesignVector {
        DesignVector {
            rho: self.rho.clone(),
            supports: self.supports.clone(),
            load: self.load,
            theta: self.theta_rad,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::load_fixture;

    #[test]
    fn vtk_round_trips_mesh_and_fields() {
        let f = load_fixture("mini_gripper_100").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let text = format_vtk(&inst.mesh, "test", &[("rho_bar", &fields.rho_bar), ("k_s", &fields.k_s)]);
        let back = parse_vtk(&text, inst.mesh.thickness()).unwrap();
        assert_eq!(back.mesh.num_nodes(), inst.mesh.num_nodes());
        assert_eq!(back.mesh.num_elements(), inst.mesh.num_elements());
        assert_eq!(back.mesh, inst.mesh);
        assert_eq!(back.cell_data[0].0, "rho_bar");
        assert_eq!(back.cell_data[0].1, fields.rho_bar);
        assert_eq!(back.cell_data[1].1, fields.k_s);
    }

    #[test]
    fn vtk_rejects_truncated_file() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let text = format_vtk(&f.mesh, "t", &[]);
        let cut = &text[..text.find("CELL_TYPES").unwrap()];
        assert!(parse_vtk(cut, 0.01).is_err());
    }

    #[test]
    fn summary_round_trips_through_json() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let inst = f.instance().unwrap();
        let ev = inst.evaluate(&f.design, false).unwrap();
        let s = DesignSummary::new(&inst, &f.design, &ev, None, 0, "mesh.txt".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("design.json");
        s.write(&p).unwrap();
        let back = DesignSummary::read(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.design(), f.design);
    }

    #[test]
    fn curves_have_one_row_per_step() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let inst = f.instance().unwrap();
        let ev = inst.evaluate(&f.design, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_curves(dir.path(), "", &inst, &f.design, &ev.paths, true).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join("load_displacement_case1.csv")).unwrap();
        assert_eq!(
            r.headers().unwrap(),
            vec!["step", "input_disp_m", "F_in_N", "F_p_N", "lambda_x", "lambda_y"]
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), inst.spec.solver.steps);
        let last: f64 = rows.last().unwrap()[1].parse().unwrap();
        assert_eq!(last, inst.spec.u_in);
        let r = csv::Reader::from_path(dir.path().join("output_path_case1.csv")).unwrap();
        assert_eq!(r.into_records().count(), inst.spec.solver.steps);
        assert!(dir.path().join("solver_trace_case1.csv").exists());
    }
}
