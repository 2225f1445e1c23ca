//! CPLEX LP text format: writer and a reader for the subset the writer emits
//! (linear objective with optional constant, named rows, bounds, binaries).

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{MilpModel, ObjSense, Sense, VarDef, VarId, VarKind};
use crate::error::{Error, Result};

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn write_terms(out: &mut String, model: &MilpModel, terms: &[(VarId, f64)]) {
    for (i, &(v, c)) in terms.iter().enumerate() {
        let name = model.var_name(v);
        if c < 0.0 {
            let _ = write!(out, " - {} {name}", fmt_num(-c));
        } else if i == 0 {
            let _ = write!(out, " {} {name}", fmt_num(c));
        } else {
            let _ = write!(out, " + {} {name}", fmt_num(c));
        }
    }
}

/// Renders `model` in LP format. Unnamed variables are written as `x<index>`
/// and unnamed rows as `r<index>`.
pub fn write_lp(model: &MilpModel) -> Result<String> {
    if !super::has_unique_names(model) {
        return Err(Error::Model("variable names must be unique for LP output".into()));
    }
    let mut out = String::new();
    out.push_str(match model.sense {
        ObjSense::Max => "Maximize\n",
        ObjSense::Min => "Minimize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, model, &model.objective);
    if model.objective_constant != 0.0 || model.objective.is_empty() {
        let c = model.objective_constant;
        if c < 0.0 {
            let _ = write!(out, " - {}", fmt_num(-c));
        } else {
            let _ = write!(out, " + {}", fmt_num(c));
        }
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.constraints.iter().enumerate() {
        let name = row.name.clone().unwrap_or_else(|| format!("r{i}"));
        let _ = write!(out, " {name}:");
        if row.terms.is_empty() {
            // LP format has no empty rows; a zero-coefficient term keeps the row.
            let _ = write!(out, " 0 {}", model.var_name(VarId(0)));
        }
        write_terms(&mut out, model, &row.terms);
        let _ = writeln!(out, " {} {}", row.sense, fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (i, def) in model.vars.iter().enumerate() {
        let name = model.var_name(VarId(i));
        if def.lower == f64::NEG_INFINITY && def.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(def.lower), fmt_num(def.upper));
        }
    }
    let binaries: Vec<String> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == VarKind::Binary)
        .map(|(i, _)| model.var_name(VarId(i)))
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Colon,
    Cmp(Sense),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            ':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            '<' | '>' | '=' => {
                let mut j = i + 1;
                while j < chars.len() && matches!(chars[j], '<' | '>' | '=') {
                    j += 1;
                }
                let op: String = chars[i..j].iter().collect();
                let sense = match op.as_str() {
                    "<" | "<=" | "=<" => Sense::Le,
                    ">" | ">=" | "=>" => Sense::Ge,
                    "=" => Sense::Eq,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("unknown operator {op}"),
                        })
                    }
                };
                toks.push(Tok::Cmp(sense));
                i = j;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '+' || d == '-') && j > i && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[i..j].iter().collect();
                let v = s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad number {s}"),
                })?;
                toks.push(Tok::Num(v));
                i = j;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_alphanumeric() || matches!(chars[j], '_' | '.' | '[' | ']'))
                {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                match s.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                    _ => toks.push(Tok::Ident(s)),
                }
                i = j;
            }
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(toks)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
}

struct Reader {
    model: MilpModel,
    names: HashMap<String, VarId>,
}

impl Reader {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.names.get(name) {
            return v;
        }
        let id = VarId(self.model.vars.len());
        // LP default bounds
        self.model.vars.push(VarDef {
            kind: VarKind::Continuous,
            lower: 0.0,
            upper: f64::INFINITY,
            name: Some(name.to_string()),
        });
        self.names.insert(name.to_string(), id);
        id
    }

    /// Parses `[name:] expr` and returns (name, terms, constant, rest).
    fn expression<'a>(
        &mut self,
        toks: &'a [Tok],
        line: usize,
    ) -> Result<(Option<String>, Vec<(VarId, f64)>, f64, &'a [Tok])> {
        let mut rest = toks;
        let mut name = None;
        if let [Tok::Ident(n), Tok::Colon, tail @ ..] = rest {
            name = Some(n.clone());
            rest = tail;
        }
        let mut terms = Vec::new();
        let mut constant = 0.0;
        loop {
            let mut sign = 1.0;
            let mut saw_sign = false;
            while let Some(t @ (Tok::Plus | Tok::Minus)) = rest.first() {
                if *t == Tok::Minus {
                    sign = -sign;
                }
                saw_sign = true;
                rest = &rest[1..];
            }
            let mut coef = None;
            if let Some(Tok::Num(v)) = rest.first() {
                coef = Some(*v);
                rest = &rest[1..];
            }
            match rest.first() {
                Some(Tok::Ident(n)) => {
                    let v = self.var(n);
                    terms.push((v, sign * coef.unwrap_or(1.0)));
                    rest = &rest[1..];
                }
                _ => match coef {
                    Some(c) => constant += sign * c,
                    None if saw_sign => {
                        return Err(Error::Parse {
                            line,
                            msg: "dangling sign".into(),
                        })
                    }
                    None => break,
                },
            }
        }
        if let Some(Tok::Colon) = rest.first() {
            return Err(Error::Parse {
                line,
                msg: "unexpected ':'".into(),
            });
        }
        Ok((name, terms, constant, rest))
    }
}

/// Parses LP text produced by [`write_lp`] (and simple hand-written files in
/// the same subset).
pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut reader = Reader {
        model: MilpModel::new(ObjSense::Max),
        names: HashMap::new(),
    };
    let mut section = Section::None;
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut binaries: Vec<String> = Vec::new();

    let flush_row = |reader: &mut Reader, toks: &mut Vec<Tok>, line: usize| -> Result<()> {
        if toks.is_empty() {
            return Ok(());
        }
        let (name, terms, constant, rest) = reader.expression(toks, line)?;
        let (sense, rhs_toks) = match rest {
            [Tok::Cmp(s), tail @ ..] => (*s, tail),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: "row without a comparison".into(),
                })
            }
        };
        let rhs = match rhs_toks {
            [Tok::Num(v)] => *v,
            [Tok::Minus, Tok::Num(v)] => -*v,
            [Tok::Plus, Tok::Num(v)] => *v,
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: "malformed right-hand side".into(),
                })
            }
        };
        reader.model.constraints.push(super::LinConstraint {
            terms: terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            sense,
            rhs: rhs - constant,
            name,
        });
        toks.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('\\').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let header = content.to_ascii_lowercase();
        let new_section = match header.as_str() {
            "maximize" | "maximise" | "max" => {
                reader.model.sense = ObjSense::Max;
                Some(Section::Objective)
            }
            "minimize" | "minimise" | "min" => {
                reader.model.sense = ObjSense::Min;
                Some(Section::Objective)
            }
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::None),
            _ => None,
        };
        if let Some(s) = new_section {
            if section == Section::Constraints {
                flush_row(&mut reader, &mut pending, pending_line)?;
            }
            if section == Section::Objective && !pending.is_empty() {
                let (_, terms, constant, rest) = reader.expression(&pending, pending_line)?;
                if !rest.is_empty() {
                    return Err(Error::Parse {
                        line: pending_line,
                        msg: "comparison in objective".into(),
                    });
                }
                reader.model.objective = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
                reader.model.objective_constant = constant;
                pending.clear();
            }
            section = s;
            continue;
        }
        let toks = tokenize(content, line)?;
        match section {
            Section::None => {
                return Err(Error::Parse {
                    line,
                    msg: "content outside of any section".into(),
                })
            }
            Section::Objective => {
                if pending.is_empty() {
                    pending_line = line;
                }
                pending.extend(toks);
            }
            Section::Constraints => {
                // A new `name:` starts a new row.
                if matches!(toks.as_slice(), [Tok::Ident(_), Tok::Colon, ..]) {
                    flush_row(&mut reader, &mut pending, pending_line)?;
                }
                if pending.is_empty() {
                    pending_line = line;
                }
                pending.extend(toks);
            }
            Section::Bounds => parse_bound(&mut reader, &toks, line)?,
            Section::Binaries => {
                for t in toks {
                    match t {
                        Tok::Ident(n) => binaries.push(n),
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: "expected variable names".into(),
                            })
                        }
                    }
                }
            }
        }
    }
    for name in binaries {
        let v = reader.var(&name);
        let def = &mut reader.model.vars[v.0];
        def.kind = VarKind::Binary;
        def.lower = def.lower.max(0.0);
        def.upper = def.upper.min(1.0);
    }
    Ok(reader.model)
}

fn signed_num(toks: &[Tok]) -> Option<(f64, &[Tok])> {
    match toks {
        [Tok::Minus, Tok::Num(v), rest @ ..] => Some((-v, rest)),
        [Tok::Plus, Tok::Num(v), rest @ ..] => Some((*v, rest)),
        [Tok::Num(v), rest @ ..] => Some((*v, rest)),
        _ => None,
    }
}

fn parse_bound(reader: &mut Reader, toks: &[Tok], line: usize) -> Result<()> {
    let bad = || Error::Parse {
        line,
        msg: "unsupported bound".into(),
    };
    match toks {
        [Tok::Ident(n), Tok::Ident(kw)] if kw.eq_ignore_ascii_case("free") => {
            let v = reader.var(n);
            reader.model.set_bounds(v, f64::NEG_INFINITY, f64::INFINITY);
        }
        _ => {
            if let Some((lo, rest)) = signed_num(toks) {
                // lo <= x [<= hi]
                let [Tok::Cmp(Sense::Le), Tok::Ident(n), tail @ ..] = rest else {
                    return Err(bad());
                };
                let v = reader.var(n);
                reader.model.vars[v.0].lower = lo;
                if let [Tok::Cmp(Sense::Le), more @ ..] = tail {
                    let (hi, _) = signed_num(more).ok_or_else(bad)?;
                    reader.model.vars[v.0].upper = hi;
                }
            } else if let [Tok::Ident(n), Tok::Cmp(sense), rest @ ..] = toks {
                let (val, _) = signed_num(rest).ok_or_else(bad)?;
                let v = reader.var(n);
                match sense {
                    Sense::Le => reader.model.vars[v.0].upper = val,
                    Sense::Ge => reader.model.vars[v.0].lower = val,
                    Sense::Eq => reader.model.set_bounds(v, val, val),
                }
            } else {
                return Err(bad());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model_stats;

    fn sample() -> MilpModel {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_binary("x");
        let y = m.add_continuous(0.0, 2.5, "y");
        let d = m.add_continuous(f64::NEG_INFINITY, f64::INFINITY, "d");
        m.add_objective_term(x, 3.0);
        m.add_objective_term(y, -1.25e-3);
        m.add_objective_term(d, 1.0);
        m.objective_constant = -4.0;
        m.add_constraint(vec![(x, 1.0), (y, -2.0)], Sense::Le, 1.5, "c1");
        m.add_constraint(vec![(d, 1.0), (x, 1.0)], Sense::Eq, -0.5, "c2");
        m.add_constraint(vec![(y, 1.0)], Sense::Ge, 1e-7, "c3");
        m
    }

    #[test]
    fn writes_and_reads_back() {
        let m = sample();
        let text = write_lp(&m).unwrap();
        assert!(text.contains("c1: 1.0 x - 2.0 y <= 1.5"));
        assert!(text.contains("d free"));
        let back = parse_lp(&text).unwrap();
        assert_eq!(model_stats(&back), model_stats(&m));
        assert_eq!(back.sense, ObjSense::Max);
        assert_eq!(back.objective_constant, -4.0);
        assert_eq!(back.constraints[0].terms.len(), 2);
        assert_eq!(back.constraints[1].rhs, -0.5);
        assert_eq!(back.constraints[2].rhs, 1e-7);
        assert_eq!(back.vars[1].upper, 2.5);
        assert_eq!(back.vars[2].lower, f64::NEG_INFINITY);
        assert_eq!(back.vars[0].kind, VarKind::Binary);
        let xs = [1.0, 2.0, -1.5];
        assert!((back.objective_value(&xs) - m.objective_value(&xs)).abs() < 1e-12);
    }

    #[test]
    fn parses_hand_written_rows_spanning_lines() {
        let text = "\\ test\nMinimize\n obj: 2 a\n + 3 b\nSubject To\n r: a + b\n >= 1\nBounds\n a <= 4\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.sense, ObjSense::Min);
        assert_eq!(m.objective.len(), 2);
        assert_eq!(m.constraints.len(), 1);
        assert_eq!(m.constraints[0].sense, Sense::Ge);
        assert_eq!(m.vars[0].upper, 4.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_lp("Maximize\n obj: x\nSubject To\n c: x ? 1\nEnd\n").is_err());
        assert!(parse_lp("x + y <= 1\n").is_err());
    }
}
