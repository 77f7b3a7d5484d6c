//! MPS writer for the assembled MILP, plus a reader for round-trip checks.
//!
//! The writer emits the standard section structure (NAME, ROWS, COLUMNS with
//! INTORG/INTEND markers, RHS, RANGES-free, BOUNDS, ENDATA) with fixed
//! column naming and deterministic ordering, so identical models produce
//! byte-identical files. Values print with 17 significant digits, which
//! round-trips f64 exactly; field widths are relaxed accordingly, as modern
//! solvers accept whitespace-delimited MPS.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::milp::MilpModel;

fn var_name(model: &MilpModel, j: usize) -> String {
    let n = model.n_items;
    match j {
        j if j < n => format!("X{:04}", j),
        j if j < 2 * n => format!("V{:04}", j - n),
        j if j < 3 * n => format!("SZ{:04}", j - 2 * n),
        j if j < 4 * n => format!("SO{:04}", j - 3 * n),
        j if j < 5 * n => format!("UZ{:04}", j - 4 * n),
        j if j < 6 * n => format!("UO{:04}", j - 5 * n),
        _ => "ALPHA".to_string(),
    }
}

fn fmt(v: f64) -> String {
    format!("{:.17e}", v)
}

/// Writes the model in MPS form; minimization objective named COST.
pub fn export_mps(model: &MilpModel, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n_eq = model.lp.a_eq.nrows();
    let n_le = model.lp.a_le.nrows();
    let cols = model.lp.c.len();
    writeln!(out, "NAME          MNLLMO")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N  COST")?;
    for r in 0..n_eq {
        writeln!(out, " E  EQ{:04}", r)?;
    }
    for r in 0..n_le {
        writeln!(out, " L  LE{:04}", r)?;
    }
    writeln!(out, "COLUMNS")?;
    let mut marker = 0usize;
    for j in 0..cols {
        let integral = model.integer_vars.contains(&j);
        if integral {
            writeln!(out, "    MARKER{:04}  'MARKER'  'INTORG'", marker)?;
            marker += 1;
        }
        let name = var_name(model, j);
        if model.lp.c[j] != 0.0 {
            writeln!(out, "    {}  COST  {}", name, fmt(model.lp.c[j]))?;
        }
        for r in 0..n_eq {
            let v = model.lp.a_eq[(r, j)];
            if v != 0.0 {
                writeln!(out, "    {}  EQ{:04}  {}", name, r, fmt(v))?;
            }
        }
        for r in 0..n_le {
            let v = model.lp.a_le[(r, j)];
            if v != 0.0 {
                writeln!(out, "    {}  LE{:04}  {}", name, r, fmt(v))?;
            }
        }
        if integral {
            writeln!(out, "    MARKER{:04}  'MARKER'  'INTEND'", marker)?;
            marker += 1;
        }
    }
    writeln!(out, "RHS")?;
    for r in 0..n_eq {
        if model.lp.b_eq[r] != 0.0 {
            writeln!(out, "    RHS  EQ{:04}  {}", r, fmt(model.lp.b_eq[r]))?;
        }
    }
    for r in 0..n_le {
        if model.lp.b_le[r] != 0.0 {
            writeln!(out, "    RHS  LE{:04}  {}", r, fmt(model.lp.b_le[r]))?;
        }
    }
    writeln!(out, "BOUNDS")?;
    for j in 0..cols {
        let name = var_name(model, j);
        if model.lp.lower[j] != 0.0 {
            writeln!(out, " LO BND  {}  {}", name, fmt(model.lp.lower[j]))?;
        }
        if model.lp.upper[j].is_finite() {
            writeln!(out, " UP BND  {}  {}", name, fmt(model.lp.upper[j]))?;
        }
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}

/// Parsed coefficient view, keyed by names, for round-trip comparisons.
#[derive(Debug, Default, PartialEq)]
pub struct MpsDocument {
    pub objective: BTreeMap<String, f64>,
    /// (row, column) -> value for E and L rows alike.
    pub entries: BTreeMap<(String, String), f64>,
    pub row_kinds: BTreeMap<String, char>,
    pub rhs: BTreeMap<String, f64>,
    pub lower: BTreeMap<String, f64>,
    pub upper: BTreeMap<String, f64>,
    pub integers: Vec<String>,
}

pub fn parse_mps(path: &Path) -> Result<MpsDocument> {
    let text = std::fs::read_to_string(path)?;
    let mut doc = MpsDocument::default();
    let mut section = String::new();
    let mut in_integer = false;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if !line.starts_with(' ') {
            section = line.split_whitespace().next().unwrap_or("").to_string();
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section.as_str() {
            "ROWS" => {
                if fields.len() >= 2 {
                    doc.row_kinds.insert(fields[1].to_string(), fields[0].chars().next().unwrap());
                }
            }
            "COLUMNS" => {
                if fields.len() >= 3 && fields[1] == "'MARKER'" {
                    in_integer = fields[2] == "'INTORG'";
                    continue;
                }
                if fields.len() >= 3 {
                    let col = fields[0].to_string();
                    if in_integer && !doc.integers.contains(&col) {
                        doc.integers.push(col.clone());
                    }
                    let mut k = 1;
                    while k + 1 < fields.len() + 1 && k + 1 <= fields.len() {
                        let row = fields[k].to_string();
                        let val: f64 = fields[k + 1]
                            .parse()
                            .map_err(|e| Error::Numerical(format!("bad MPS number: {e}")))?;
                        if row == "COST" {
                            doc.objective.insert(col.clone(), val);
                        } else {
                            doc.entries.insert((row, col.clone()), val);
                        }
                        k += 2;
                    }
                }
            }
            "RHS" => {
                let mut k = 1;
                while k + 1 <= fields.len() - 1 {
                    let row = fields[k].to_string();
                    let val: f64 = fields[k + 1]
                        .parse()
                        .map_err(|e| Error::Numerical(format!("bad MPS number: {e}")))?;
                    doc.rhs.insert(row, val);
                    k += 2;
                }
            }
            "BOUNDS" => {
                if fields.len() >= 4 {
                    let kind = fields[0];
                    let col = fields[2].to_string();
                    let val: f64 = fields[3]
                        .parse()
                        .map_err(|e| Error::Numerical(format!("bad MPS number: {e}")))?;
                    match kind {
                        "LO" => {
                            doc.lower.insert(col, val);
                        }
                        "UP" => {
                            doc.upper.insert(col, val);
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{big_m, build_milp, build_qfip, BigMMode};
    use crate::mnl::Instance;
    use nalgebra::{DMatrix, DVector};

    fn toy_model() -> MilpModel {
        let features = DMatrix::from_row_slice(2, 1, &[0.6, -0.4]);
        let inst = Instance::new(features, vec![0.3, 0.9], 2, 1.0, None, false).unwrap();
        let q = build_qfip(&inst, &DVector::from_vec(vec![0.2]), &DMatrix::identity(1, 1)).unwrap();
        build_milp(&q, &big_m(&q, BigMMode::Tight))
    }

    #[test]
    fn round_trip_is_coefficient_exact() {
        let model = toy_model();
        let dir = std::env::temp_dir().join("mnldesign-mps-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy.mps");
        export_mps(&model, &path).unwrap();
        let doc = parse_mps(&path).unwrap();
        // Objective sense is MIN by construction; COST row is type N.
        assert_eq!(doc.row_kinds.get("COST"), Some(&'N'));
        let cols = model.lp.c.len();
        for j in 0..cols {
            let name = var_name(&model, j);
            let c = doc.objective.get(&name).copied().unwrap_or(0.0);
            assert_eq!(c, model.lp.c[j], "objective coefficient of {name}");
            for r in 0..model.lp.a_eq.nrows() {
                let got = doc.entries.get(&(format!("EQ{:04}", r), name.clone())).copied();
                let want = model.lp.a_eq[(r, j)];
                assert_eq!(got.unwrap_or(0.0), want);
            }
            for r in 0..model.lp.a_le.nrows() {
                let got = doc.entries.get(&(format!("LE{:04}", r), name.clone())).copied();
                let want = model.lp.a_le[(r, j)];
                assert_eq!(got.unwrap_or(0.0), want);
            }
        }
        for r in 0..model.lp.b_le.nrows() {
            let got = doc.rhs.get(&format!("LE{:04}", r)).copied().unwrap_or(0.0);
            assert_eq!(got, model.lp.b_le[r]);
        }
        assert_eq!(doc.integers, vec!["X0000".to_string(), "X0001".to_string()]);
    }

    #[test]
    fn export_is_byte_stable() {
        let model = toy_model();
        let dir = std::env::temp_dir().join("mnldesign-mps-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.mps");
        let p2 = dir.join("b.mps");
        export_mps(&model, &p1).unwrap();
        export_mps(&model, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        assert!(String::from_utf8(b1).unwrap().contains("ENDATA"));
    }
}
