//! Minimal fixed-MPS reader used to round-trip exported models in tests.

use std::collections::HashMap;
use tclflex::milp::ir::{CmpOp, LinExpr, Model, Sense, VarId};

/// Parses the subset of fixed MPS the exporter emits. The sense is not part
/// of MPS, so the caller provides it.
pub fn parse_mps(text: &str, sense: Sense) -> Result<Model, String> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let mut model = Model::new("reparsed", sense);
    let mut section = Section::None;
    let mut row_ops: Vec<(String, CmpOp)> = Vec::new();
    let mut row_terms: HashMap<String, Vec<(VarId, f64)>> = HashMap::new();
    let mut row_rhs: HashMap<String, f64> = HashMap::new();
    let mut obj_terms: Vec<(VarId, f64)> = Vec::new();
    let mut obj_offset = 0.0;
    let mut cols: HashMap<String, VarId> = HashMap::new();
    let mut integer_cols: Vec<String> = Vec::new();
    let mut in_int = false;

    for line in text.lines() {
        if line.starts_with('*') || line.trim().is_empty() {
            continue;
        }
        if !line.starts_with(' ') {
            section = match line.split_whitespace().next().unwrap_or("") {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => return Err(format!("unknown section {other}")),
            };
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Rows => {
                let (code, name) = (fields[0], fields[1]);
                if code == "N" {
                    continue; // objective row
                }
                let op = match code {
                    "L" => CmpOp::Le,
                    "G" => CmpOp::Ge,
                    "E" => CmpOp::Eq,
                    other => return Err(format!("unknown row code {other}")),
                };
                row_ops.push((name.to_string(), op));
                row_terms.insert(name.to_string(), Vec::new());
            }
            Section::Columns => {
                if fields.get(1) == Some(&"'MARKER'") {
                    match *fields.last().unwrap() {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        other => return Err(format!("unknown marker {other}")),
                    }
                    continue;
                }
                let col = fields[0].to_string();
                let id = *cols.entry(col.clone()).or_insert_with(|| {
                    if in_int {
                        integer_cols.push(col.clone());
                    }
                    // bounds refined later; binaries get BV lines
                    model.add_continuous(col.clone(), 0.0, f64::INFINITY)
                });
                let mut i = 1;
                while i + 1 < fields.len() {
                    let row = fields[i];
                    let coef: f64 = fields[i + 1].parse().map_err(|e| format!("bad coef: {e}"))?;
                    if row == "OBJ" {
                        obj_terms.push((id, coef));
                    } else {
                        row_terms
                            .get_mut(row)
                            .ok_or_else(|| format!("unknown row {row}"))?
                            .push((id, coef));
                    }
                    i += 2;
                }
            }
            Section::Rhs => {
                let mut i = 1;
                while i + 1 < fields.len() {
                    let row = fields[i];
                    let val: f64 = fields[i + 1].parse().map_err(|e| format!("bad rhs: {e}"))?;
                    if row == "OBJ" {
                        obj_offset = -val;
                    } else {
                        row_rhs.insert(row.to_string(), val);
                    }
                    i += 2;
                }
            }
            Section::Bounds => {
                let kind = fields[0];
                let col = fields[2];
                let id = *cols.get(col).ok_or_else(|| format!("bound on unknown col {col}"))?;
                let var = model.var(id);
                let (lb, ub) = (var.lb, var.ub);
                match kind {
                    "UP" => {
                        let v: f64 = fields[3].parse().map_err(|e| format!("bad bound: {e}"))?;
                        model.set_bounds(id, lb, v);
                    }
                    "LO" => {
                        let v: f64 = fields[3].parse().map_err(|e| format!("bad bound: {e}"))?;
                        model.set_bounds(id, v, ub);
                    }
                    "FX" => {
                        let v: f64 = fields[3].parse().map_err(|e| format!("bad bound: {e}"))?;
                        model.set_bounds(id, v, v);
                    }
                    "MI" => model.set_bounds(id, f64::NEG_INFINITY, ub),
                    "BV" => model.set_bounds(id, 0.0, 1.0),
                    other => return Err(format!("unknown bound kind {other}")),
                }
            }
            _ => {}
        }
    }

    for (name, op) in row_ops {
        let terms = row_terms.remove(&name).unwrap();
        let rhs = row_rhs.get(&name).copied().unwrap_or(0.0);
        let expr = LinExpr {
            terms,
            constant: 0.0,
        };
        model.add_row(name, expr, op, rhs);
    }
    let mut obj = LinExpr {
        terms: obj_terms,
        constant: obj_offset,
    };
    obj = obj.canonical();
    model.set_objective(obj);
    Ok(model)
}

/// Marks the integer-block columns as binary after bounds are applied.
/// Exporter writes BV for binaries, so bounds are already {0,1}; this only
/// needs the names. Kept separate so `parse_mps` stays order-independent.
pub fn binary_names(text: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut in_int = false;
    let mut in_cols = false;
    for line in text.lines() {
        if !line.starts_with(' ') {
            in_cols = line.starts_with("COLUMNS");
            continue;
        }
        if !in_cols {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.get(1) == Some(&"'MARKER'") {
            in_int = *fields.last().unwrap() == "'INTORG'";
            continue;
        }
        if in_int && !names.contains(&fields[0].to_string()) {
            names.push(fields[0].to_string());
        }
    }
    names
}
