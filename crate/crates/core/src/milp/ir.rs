//! A small mixed-integer linear model representation.
//!
//! Builders assemble [`LinExpr`]s with ordinary operators, attach them to a
//! [`Model`] as rows, and hand the model to a [`super::solver::SolverBackend`].
//! The representation is solver-agnostic and can be written out as free-format
//! LP or fixed-format MPS text.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Index of a variable within its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

/// Linear expression: sum of coefficient * variable plus a constant.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(v: VarId, coeff: f64) -> Self {
        LinExpr {
            terms: vec![(v, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) {
        self.terms.push((v, coeff));
    }

    /// Merges duplicate variables, drops zero coefficients, sorts by id.
    pub fn canonical(mut self) -> Self {
        self.terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        LinExpr {
            terms: out,
            constant: self.constant,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

impl Add<VarId> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: VarId) -> LinExpr {
        self.terms.push((rhs, 1.0));
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms.into_iter().map(|(v, c)| (v, -c)));
        self.constant -= rhs.constant;
        self
    }
}

impl Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: f64) -> LinExpr {
        self.constant -= rhs;
        self
    }
}

impl Sub<VarId> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: VarId) -> LinExpr {
        self.terms.push((rhs, -1.0));
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, rhs: f64) -> LinExpr {
        for (_, c) in &mut self.terms {
            *c *= rhs;
        }
        self.constant *= rhs;
        self
    }
}

impl Mul<LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, rhs: LinExpr) -> LinExpr {
        rhs * self
    }
}

impl Mul<VarId> for f64 {
    type Output = LinExpr;
    fn mul(self, rhs: VarId) -> LinExpr {
        LinExpr::term(rhs, self)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl std::iter::Sum for LinExpr {
    fn sum<I: Iterator<Item = LinExpr>>(iter: I) -> Self {
        iter.fold(LinExpr::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Eq,
}

impl CmpOp {
    fn lp_symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    fn mps_code(self) -> &'static str {
        match self {
            CmpOp::Le => "L",
            CmpOp::Ge => "G",
            CmpOp::Eq => "E",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RowDef {
    pub name: String,
    /// Canonical terms; the expression constant is already folded into `rhs`.
    pub terms: Vec<(VarId, f64)>,
    pub op: CmpOp,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// A single bound or row violation found when checking a candidate point.
#[derive(Debug, Clone)]
pub struct Violation {
    pub what: String,
    pub amount: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub sense: Sense,
    vars: Vec<VarDef>,
    rows: Vec<RowDef>,
    objective: LinExpr,
    /// Constant added to the reported objective value.
    pub objective_offset: f64,
}

impl Model {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Model {
            name: name.into(),
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            objective: LinExpr::default(),
            objective_offset: 0.0,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lb: f64, ub: f64) -> VarId {
        debug_assert!(lb <= ub, "variable bounds crossed");
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.into(),
            kind,
            lb,
            ub,
        });
        id
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds `expr op rhs`; the expression's constant is folded into the rhs.
    pub fn add_row(&mut self, name: impl Into<String>, expr: LinExpr, op: CmpOp, rhs: f64) {
        let expr = expr.canonical();
        self.rows.push(RowDef {
            name: name.into(),
            rhs: rhs - expr.constant,
            terms: expr.terms,
            op,
        });
    }

    pub fn set_objective(&mut self, expr: LinExpr) {
        let expr = expr.canonical();
        self.objective_offset = expr.constant;
        self.objective = LinExpr {
            terms: expr.terms,
            constant: 0.0,
        };
    }

    pub fn objective_terms(&self) -> &[(VarId, f64)] {
        &self.objective.terms
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values) + self.objective_offset
    }

    pub fn fix_var(&mut self, v: VarId, value: f64) {
        self.vars[v.0].lb = value;
        self.vars[v.0].ub = value;
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        debug_assert!(lb <= ub);
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn var(&self, v: VarId) -> &VarDef {
        &self.vars[v.0]
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn rows(&self) -> &[RowDef] {
        &self.rows
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binary_ids(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vars.is_empty() {
            return Err(Error::invalid("model has no variables"));
        }
        for v in &self.vars {
            if v.lb > v.ub {
                return Err(Error::invalid(format!("bounds crossed on {}", v.name)));
            }
            if v.lb.is_nan() || v.ub.is_nan() {
                return Err(Error::invalid(format!("NaN bound on {}", v.name)));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(Error::invalid(format!("non-finite rhs on row {}", r.name)));
            }
            if r.terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(Error::invalid(format!("non-finite coefficient in row {}", r.name)));
            }
        }
        if self.objective.terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::invalid("non-finite objective coefficient"));
        }
        Ok(())
    }

    /// Checks a candidate point against bounds, integrality and all rows.
    /// Tolerance is absolute plus relative in the row's rhs.
    pub fn check_feasibility(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if values.len() != self.vars.len() {
            out.push(Violation {
                what: "value vector length mismatch".into(),
                amount: f64::INFINITY,
            });
            return out;
        }
        for (i, v) in self.vars.iter().enumerate() {
            let x = values[i];
            let scale = 1.0 + v.lb.abs().max(v.ub.abs().min(1e30));
            if x < v.lb - tol * scale || x > v.ub + tol * scale {
                out.push(Violation {
                    what: format!("bounds on {}: {x} outside [{}, {}]", v.name, v.lb, v.ub),
                    amount: (v.lb - x).max(x - v.ub),
                });
            }
            if v.kind == VarKind::Binary && (x - x.round()).abs() > 1e-5 {
                out.push(Violation {
                    what: format!("integrality on {}: {x}", v.name),
                    amount: (x - x.round()).abs(),
                });
            }
        }
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|(v, c)| c * values[v.0]).sum();
            let slack = tol * (1.0 + r.rhs.abs());
            let viol = match r.op {
                CmpOp::Le => lhs - r.rhs,
                CmpOp::Ge => r.rhs - lhs,
                CmpOp::Eq => (lhs - r.rhs).abs(),
            };
            if viol > slack {
                out.push(Violation {
                    what: format!("row {}: lhs {lhs} {} rhs {}", r.name, r.op.lp_symbol(), r.rhs),
                    amount: viol,
                });
            }
        }
        out
    }

    /// Free-format LP text (CPLEX dialect) with the original names.
    pub fn write_lp(&self, mut w: impl Write) -> Result<()> {
        self.validate()?;
        let mut buf = String::new();
        writeln!(buf, "\\ Problem: {}", self.name).unwrap();
        if self.objective_offset != 0.0 {
            writeln!(buf, "\\ objective offset (not part of LP text): {}", self.objective_offset).unwrap();
        }
        buf.push_str(match self.sense {
            Sense::Maximize => "Maximize\n",
            Sense::Minimize => "Minimize\n",
        });
        buf.push_str(" obj:");
        if self.objective.terms.is_empty() {
            buf.push_str(" 0 ");
            buf.push_str(&self.vars[0].name);
        }
        for (v, c) in &self.objective.terms {
            write!(buf, " {} {}", signed(*c), self.vars[v.0].name).unwrap();
        }
        buf.push_str("\nSubject To\n");
        for r in &self.rows {
            write!(buf, " {}:", r.name).unwrap();
            if r.terms.is_empty() {
                buf.push_str(" 0 ");
                buf.push_str(&self.vars[0].name);
            }
            for (v, c) in &r.terms {
                write!(buf, " {} {}", signed(*c), self.vars[v.0].name).unwrap();
            }
            writeln!(buf, " {} {}", r.op.lp_symbol(), r.rhs).unwrap();
        }
        buf.push_str("Bounds\n");
        for v in &self.vars {
            if v.kind == VarKind::Binary && v.lb == 0.0 && v.ub == 1.0 {
                continue; // implied by the Binary section
            }
            match (v.lb.is_finite(), v.ub.is_finite()) {
                (true, true) => writeln!(buf, " {} <= {} <= {}", v.lb, v.name, v.ub).unwrap(),
                (true, false) => writeln!(buf, " {} >= {}", v.name, v.lb).unwrap(),
                (false, true) => writeln!(buf, " -inf <= {} <= {}", v.name, v.ub).unwrap(),
                (false, false) => writeln!(buf, " {} free", v.name).unwrap(),
            }
        }
        let binaries: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            buf.push_str("Binary\n");
            for name in binaries {
                writeln!(buf, " {name}").unwrap();
            }
        }
        buf.push_str("End\n");
        w.write_all(buf.as_bytes()).map_err(|e| Error::io("<lp writer>", e))
    }

    /// Fixed-format MPS. Names longer than 8 characters are replaced by
    /// positional aliases (`X0000001`, `R0000001`); a comment block at the
    /// top records the mapping for rows whose names were rewritten.
    pub fn write_mps(&self, mut w: impl Write) -> Result<()> {
        self.validate()?;
        let col_alias: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| mps_name('X', i, &v.name))
            .collect();
        let row_alias: Vec<String> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| mps_name('R', i, &r.name))
            .collect();

        let mut buf = String::new();
        writeln!(buf, "* Problem: {}", self.name).unwrap();
        if self.objective_offset != 0.0 {
            writeln!(buf, "* objective offset carried on the OBJ rhs").unwrap();
        }
        writeln!(buf, "NAME          {}", mps_name('P', 0, &self.name)).unwrap();
        buf.push_str("ROWS\n N  OBJ\n");
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(buf, " {}  {}", r.op.mps_code(), row_alias[i]).unwrap();
        }

        // column-major view
        let mut col_entries: Vec<Vec<(String, f64)>> = vec![Vec::new(); self.vars.len()];
        for (v, c) in &self.objective.terms {
            col_entries[v.0].push(("OBJ".to_string(), *c));
        }
        for (i, r) in self.rows.iter().enumerate() {
            for (v, c) in &r.terms {
                col_entries[v.0].push((row_alias[i].clone(), *c));
            }
        }

        buf.push_str("COLUMNS\n");
        let mut in_int_block = false;
        for (i, v) in self.vars.iter().enumerate() {
            let want_int = v.kind == VarKind::Binary;
            if want_int != in_int_block {
                let marker = if want_int { "'INTORG'" } else { "'INTEND'" };
                writeln!(buf, "    MARKER                 'MARKER'                 {marker}").unwrap();
                in_int_block = want_int;
            }
            if col_entries[i].is_empty() {
                // keep the column present so counts round-trip
                writeln!(buf, "    {:<8}  {:<8}  {}", col_alias[i], "OBJ", 0.0).unwrap();
                continue;
            }
            for chunk in col_entries[i].chunks(2) {
                write!(buf, "    {:<8}", col_alias[i]).unwrap();
                for (row, c) in chunk {
                    write!(buf, "  {:<8}  {:<12}", row, trim_num(*c)).unwrap();
                }
                buf.push('\n');
            }
        }
        if in_int_block {
            buf.push_str("    MARKER                 'MARKER'                 'INTEND'\n");
        }

        buf.push_str("RHS\n");
        if self.objective_offset != 0.0 {
            writeln!(buf, "    RHS       {:<8}  {:<12}", "OBJ", trim_num(-self.objective_offset)).unwrap();
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.rhs != 0.0 {
                writeln!(buf, "    RHS       {:<8}  {:<12}", row_alias[i], trim_num(r.rhs)).unwrap();
            }
        }

        buf.push_str("BOUNDS\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Binary && v.lb == 0.0 && v.ub == 1.0 {
                writeln!(buf, " BV BND       {:<8}", col_alias[i]).unwrap();
                continue;
            }
            if v.lb == v.ub {
                writeln!(buf, " FX BND       {:<8}  {:<12}", col_alias[i], trim_num(v.lb)).unwrap();
                continue;
            }
            match (v.lb.is_finite(), v.ub.is_finite()) {
                (true, _) if v.lb != 0.0 => {
                    writeln!(buf, " LO BND       {:<8}  {:<12}", col_alias[i], trim_num(v.lb)).unwrap()
                }
                (false, _) => writeln!(buf, " MI BND       {:<8}", col_alias[i]).unwrap(),
                _ => {}
            }
            if v.ub.is_finite() {
                writeln!(buf, " UP BND       {:<8}  {:<12}", col_alias[i], trim_num(v.ub)).unwrap();
            }
        }
        buf.push_str("ENDATA\n");
        w.write_all(buf.as_bytes()).map_err(|e| Error::io("<mps writer>", e))
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", -c)
    } else {
        format!("+ {c}")
    }
}

fn trim_num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.6e}")
    }
}

fn mps_name(prefix: char, index: usize, original: &str) -> String {
    if original.len() <= 8 && original.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        original.to_string()
    } else {
        format!("{prefix}{index:07}")
    }
}

/// Duplicate-name guard used by builders; names are also how exported files
/// stay navigable, so collisions are a bug.
pub fn assert_unique_names(model: &Model) {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for v in model.vars() {
        if let Some(prev) = seen.insert(v.name.as_str(), 1) {
            let _ = prev;
            panic!("duplicate variable name {}", v.name);
        }
    }
}
