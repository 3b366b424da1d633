//! Free-format MPS reading and writing.
//!
//! Names are whitespace-free tokens; whitespace in model names is replaced by
//! `_` on export. Ranged rows are read as a pair of one-sided rows.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::model::{LinearProgram, Relation, VarId};
use crate::LpError;

const OBJ_ROW: &str = "COST";

fn token(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn num(x: f64) -> String {
    // Shortest representation that round-trips.
    format!("{x:?}")
}

pub fn write_mps<W: Write>(lp: &LinearProgram, mut w: W) -> std::io::Result<()> {
    let row_names: Vec<String> = lp.rows().iter().map(|r| token(&r.name)).collect();
    writeln!(w, "NAME {}", token(&lp.name))?;
    writeln!(w, "ROWS")?;
    writeln!(w, " N {OBJ_ROW}")?;
    for (r, name) in lp.rows().iter().zip(&row_names) {
        let t = match r.relation {
            Relation::Le => "L",
            Relation::Ge => "G",
            Relation::Eq => "E",
        };
        writeln!(w, " {t} {name}")?;
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, r) in lp.rows().iter().enumerate() {
        for &(v, a) in &r.terms {
            by_col[v.0].push((i, a));
        }
    }
    writeln!(w, "COLUMNS")?;
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in lp.vars().iter().enumerate() {
        if v.integer != in_int {
            let kind = if v.integer { "INTORG" } else { "INTEND" };
            writeln!(w, "    M{marker} 'MARKER' '{kind}'")?;
            marker += 1;
            in_int = v.integer;
        }
        let name = token(&v.name);
        if v.cost != 0.0 || by_col[j].is_empty() {
            writeln!(w, "    {name} {OBJ_ROW} {}", num(v.cost))?;
        }
        for &(i, a) in &by_col[j] {
            writeln!(w, "    {name} {} {}", row_names[i], num(a))?;
        }
    }
    if in_int {
        writeln!(w, "    M{marker} 'MARKER' 'INTEND'")?;
    }

    writeln!(w, "RHS")?;
    if lp.objective_offset() != 0.0 {
        writeln!(w, "    RHS {OBJ_ROW} {}", num(-lp.objective_offset()))?;
    }
    for (r, name) in lp.rows().iter().zip(&row_names) {
        if r.rhs != 0.0 {
            writeln!(w, "    RHS {name} {}", num(r.rhs))?;
        }
    }

    writeln!(w, "BOUNDS")?;
    for v in lp.vars() {
        let name = token(&v.name);
        let (lo, hi) = (v.lower, v.upper);
        if lo == hi {
            writeln!(w, " FX BND {name} {}", num(lo))?;
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            writeln!(w, " FR BND {name}")?;
            continue;
        }
        if lo == f64::NEG_INFINITY {
            writeln!(w, " MI BND {name}")?;
        } else if lo != 0.0 {
            writeln!(w, " LO BND {name} {}", num(lo))?;
        }
        if hi.is_finite() {
            writeln!(w, " UP BND {name} {}", num(hi))?;
        } else if v.integer {
            writeln!(w, " PL BND {name}")?;
        }
    }
    writeln!(w, "ENDATA")?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    ObjSense,
    End,
}

fn parse_num(s: &str, line: usize) -> Result<f64, LpError> {
    s.parse::<f64>().map_err(|_| LpError::Mps {
        line,
        msg: format!("invalid number '{s}'"),
    })
}

pub fn read_mps<R: BufRead>(r: R) -> Result<LinearProgram, LpError> {
    let mut lp = LinearProgram::new("");
    let mut section = Section::None;
    let mut obj_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(String, Relation)> = Vec::new();
    let mut row_terms: Vec<Vec<(VarId, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut ranges: Vec<Option<f64>> = Vec::new();
    let mut cols: HashMap<String, VarId> = HashMap::new();
    let mut integer = false;
    let mut maximize = false;
    let mut offset = 0.0;

    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let ln = k + 1;
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| LpError::Mps { line: ln, msg };
        if !line.starts_with(char::is_whitespace) {
            section = match tok[0] {
                "NAME" => {
                    lp.name = tok.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "OBJSENSE" => {
                    if let Some(s) = tok.get(1) {
                        maximize = s.starts_with("MAX");
                    }
                    Section::ObjSense
                }
                "ENDATA" => Section::End,
                other => return Err(err(format!("unknown section '{other}'"))),
            };
            continue;
        }
        match section {
            Section::ObjSense => maximize = tok[0].starts_with("MAX"),
            Section::Rows => {
                if tok.len() < 2 {
                    return Err(err("row line needs type and name".into()));
                }
                let rel = match tok[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(tok[1].to_string());
                        }
                        continue;
                    }
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    "E" => Relation::Eq,
                    t => return Err(err(format!("unknown row type '{t}'"))),
                };
                row_index.insert(tok[1].to_string(), rows.len());
                rows.push((tok[1].to_string(), rel));
                row_terms.push(Vec::new());
                rhs.push(0.0);
                ranges.push(None);
            }
            Section::Columns => {
                if tok.len() >= 3 && tok[1] == "'MARKER'" {
                    match tok[2] {
                        "'INTORG'" => integer = true,
                        "'INTEND'" => integer = false,
                        m => return Err(err(format!("unknown marker {m}"))),
                    }
                    continue;
                }
                if tok.len() < 3 || tok.len() % 2 == 0 {
                    return Err(err("column line needs name and row/value pairs".into()));
                }
                let v = match cols.get(tok[0]) {
                    Some(&v) => v,
                    None => {
                        let v = lp.add_var(tok[0], 0.0, f64::INFINITY, 0.0);
                        lp.set_integer(v, integer);
                        cols.insert(tok[0].to_string(), v);
                        v
                    }
                };
                for pair in tok[1..].chunks(2) {
                    let a = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        lp.var_mut(v).cost += a;
                    } else {
                        let i = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row '{}'", pair[0])))?;
                        row_terms[i].push((v, a));
                    }
                }
            }
            Section::Rhs | Section::Ranges => {
                let pairs = if tok.len() % 2 == 1 { &tok[1..] } else { &tok[..] };
                for pair in pairs.chunks(2) {
                    if pair.len() != 2 {
                        return Err(err("expected row/value pairs".into()));
                    }
                    let a = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        if section == Section::Rhs {
                            offset = -a;
                        }
                        continue;
                    }
                    let i = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(format!("unknown row '{}'", pair[0])))?;
                    if section == Section::Rhs {
                        rhs[i] = a;
                    } else {
                        ranges[i] = Some(a);
                    }
                }
            }
            Section::Bounds => {
                let kind = tok[0];
                let needs_value = matches!(kind, "UP" | "LO" | "FX" | "LI" | "UI");
                let name_at = match (needs_value, tok.len()) {
                    (true, 4) | (false, 3) | (false, 4) => 2,
                    (true, 3) | (false, 2) => 1,
                    _ => return Err(err("malformed bound line".into())),
                };
                let name_at = if kind == "BV" && tok.len() == 3 && !cols.contains_key(tok[2]) {
                    1
                } else {
                    name_at
                };
                let v = *cols
                    .get(tok[name_at])
                    .ok_or_else(|| err(format!("unknown column '{}'", tok[name_at])))?;
                let value = tok.get(name_at + 1).map(|s| parse_num(s, ln)).transpose()?;
                let need = || value.ok_or_else(|| err(format!("{kind} bound needs a value")));
                let var = lp.var_mut(v);
                match kind {
                    "UP" => var.upper = need()?,
                    "LO" => var.lower = need()?,
                    "FX" => {
                        var.lower = need()?;
                        var.upper = var.lower;
                    }
                    "FR" => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    "MI" => var.lower = f64::NEG_INFINITY,
                    "PL" => var.upper = f64::INFINITY,
                    "BV" => {
                        var.lower = 0.0;
                        var.upper = 1.0;
                        var.integer = true;
                    }
                    "LI" => {
                        var.lower = need()?;
                        var.integer = true;
                    }
                    "UI" => {
                        var.upper = need()?;
                        var.integer = true;
                    }
                    k => return Err(err(format!("unsupported bound type '{k}'"))),
                }
            }
            Section::None => return Err(err("data outside a section".into())),
            Section::End => break,
        }
    }

    if maximize {
        for j in 0..lp.num_vars() {
            let v = lp.var_mut(VarId(j));
            v.cost = -v.cost;
        }
        offset = -offset;
    }
    lp.set_objective_offset(offset);
    for (i, ((name, rel), terms)) in rows.into_iter().zip(row_terms).enumerate() {
        let b = rhs[i];
        match ranges[i] {
            None => {
                lp.add_row(name, terms, rel, b);
            }
            Some(r) => {
                let (lo, hi) = match rel {
                    Relation::Le => (b - r.abs(), b),
                    Relation::Ge => (b, b + r.abs()),
                    Relation::Eq if r >= 0.0 => (b, b + r),
                    Relation::Eq => (b + r, b),
                };
                lp.add_row(format!("{name}.lo"), terms.clone(), Relation::Ge, lo);
                lp.add_row(format!("{name}.hi"), terms, Relation::Le, hi);
            }
        }
    }
    Ok(lp)
}
