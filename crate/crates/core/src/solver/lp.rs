//! LP text format (CPLEX dialect) export and a reader for the subset we
//! write.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::ilp::{Cmp, Domain, LinExpr, MilpModel};

const TERMS_PER_LINE: usize = 8;

fn write_terms(out: &mut String, expr: &LinExpr, names: &[String]) {
    let terms = expr.normalized().terms;
    if terms.is_empty() {
        // LP needs at least one term; any declared variable with coefficient 0
        if let Some(n) = names.first() {
            let _ = write!(out, " 0 {n}");
        }
        return;
    }
    for (i, (v, c)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n  ");
        }
        let sign = if *c < 0.0 { '-' } else { '+' };
        if i == 0 && sign == '+' {
            let _ = write!(out, " {} {}", c.abs(), names[*v]);
        } else {
            let _ = write!(out, " {sign} {} {}", c.abs(), names[*v]);
        }
    }
}

/// LP text for `model`: `Maximize`, tagged constraint blocks (tags as `\`
/// comments), `Bounds` for continuous variables and a `Binaries` section.
pub fn export_lp(model: &MilpModel) -> String {
    let names: Vec<String> = model.variables().iter().map(|v| v.key.lp_name()).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ variables {} constraints {}",
        model.num_vars(),
        model.constraints.len()
    );
    out.push_str("Maximize\n obj:");
    write_terms(&mut out, &model.objective, &names);
    out.push_str("\nSubject To\n");
    let mut current: Option<&str> = None;
    for (i, c) in model.constraints.iter().enumerate() {
        if current != Some(c.tag) {
            let _ = writeln!(out, "\\ tag {}", c.tag);
            current = Some(c.tag);
        }
        let _ = write!(out, " c{i}:");
        write_terms(&mut out, &c.expr, &names);
        let op = match c.cmp {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables().iter().zip(&names) {
        if v.domain == Domain::Continuous {
            match v.upper {
                Some(u) => {
                    let _ = writeln!(out, " 0 <= {name} <= {u}");
                }
                None => {
                    let _ = writeln!(out, " {name} >= 0");
                }
            }
        }
    }
    out.push_str("Binaries\n");
    for (v, name) in model.variables().iter().zip(&names) {
        if v.domain == Domain::Binary {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedConstraint {
    pub name: String,
    pub tag: Option<String>,
    pub terms: Vec<(String, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLp {
    pub maximize: bool,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<ParsedConstraint>,
    pub bounded: Vec<String>,
    pub binaries: Vec<String>,
}

impl ParsedLp {
    /// Every variable name mentioned anywhere.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut all: BTreeSet<String> = self.objective.iter().map(|(n, _)| n.clone()).collect();
        for c in &self.constraints {
            all.extend(c.terms.iter().map(|(n, _)| n.clone()));
        }
        all.extend(self.bounded.iter().cloned());
        all.extend(self.binaries.iter().cloned());
        all
    }

    pub fn tag_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.constraints {
            if let Some(t) = &c.tag {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
        counts
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Done,
}

fn parse_terms(tokens: &[&str]) -> Result<Vec<(String, f64)>, String> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => match tok.parse::<f64>() {
                Ok(v) => coef = Some(v),
                Err(_) => {
                    terms.push((tok.to_string(), sign * coef.unwrap_or(1.0)));
                    sign = 1.0;
                    coef = None;
                }
            },
        }
    }
    if coef.is_some() {
        return Err("dangling coefficient".into());
    }
    Ok(terms)
}

/// Reads LP text produced by [`export_lp`].
pub fn parse_lp(text: &str) -> Result<ParsedLp, String> {
    let mut lp = ParsedLp::default();
    let mut section = Section::Header;
    let mut tag: Option<String> = None;
    // statements may span lines; gather until the next statement starts
    let mut pending: Vec<String> = Vec::new();

    fn flush(
        lp: &mut ParsedLp,
        section: Section,
        tag: &Option<String>,
        pending: &mut Vec<String>,
    ) -> Result<(), String> {
        if pending.is_empty() {
            return Ok(());
        }
        let joined = pending.join(" ");
        pending.clear();
        let (name, body) = match joined.split_once(':') {
            Some((n, b)) => (n.trim().to_string(), b.to_string()),
            None => (String::new(), joined),
        };
        let tokens: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::Objective => lp.objective = parse_terms(&tokens)?,
            Section::Constraints => {
                let pos = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>"))
                    .ok_or_else(|| format!("constraint {name} has no relation"))?;
                let cmp = match tokens[pos] {
                    "<=" | "=<" => Cmp::Le,
                    ">=" | "=>" => Cmp::Ge,
                    _ => Cmp::Eq,
                };
                let rhs = tokens
                    .get(pos + 1)
                    .ok_or_else(|| format!("constraint {name} has no right-hand side"))?
                    .parse::<f64>()
                    .map_err(|e| format!("constraint {name}: {e}"))?;
                lp.constraints.push(ParsedConstraint {
                    name,
                    tag: tag.clone(),
                    terms: parse_terms(&tokens[..pos])?,
                    cmp,
                    rhs,
                });
            }
            _ => {}
        }
        Ok(())
    }

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('\\') {
            if let Some(t) = comment.trim().strip_prefix("tag ") {
                flush(&mut lp, section, &tag, &mut pending)?;
                tag = Some(t.trim().to_string());
            }
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "maximize" | "maximise" | "max" => {
                lp.maximize = true;
                Some(Section::Objective)
            }
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "subject to" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::Done),
            _ => None,
        };
        if let Some(next) = next {
            flush(&mut lp, section, &tag, &mut pending)?;
            section = next;
            continue;
        }
        match section {
            Section::Objective => pending.push(line.to_string()),
            Section::Constraints => {
                if line.contains(':') {
                    flush(&mut lp, section, &tag, &mut pending)?;
                }
                pending.push(line.to_string());
            }
            Section::Bounds => {
                let name = line
                    .split_whitespace()
                    .find(|t| t.parse::<f64>().is_err() && !matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| format!("bad bound line `{line}`"))?;
                lp.bounded.push(name.to_string());
            }
            Section::Binaries => lp.binaries.extend(line.split_whitespace().map(String::from)),
            Section::Header | Section::Done => {}
        }
    }
    flush(&mut lp, section, &tag, &mut pending)?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilp::{assemble, FlowId, VarKey};
    use crate::network::StateId;
    use crate::problem::tests::fig1;

    #[test]
    fn empty_model() {
        let text = export_lp(&MilpModel::new());
        for section in ["Maximize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section));
        }
        let parsed = parse_lp(&text).unwrap();
        assert!(parsed.maximize);
        assert!(parsed.constraints.is_empty() && parsed.objective.is_empty());
    }

    #[test]
    fn round_trip_counts_match_metadata() {
        let model = assemble(&fig1(2)).unwrap();
        let text = export_lp(&model);
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.constraints.len(), model.constraints.len());
        assert_eq!(parsed.variables().len(), model.num_vars());
        let counts: BTreeMap<String, usize> = model.counts.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(parsed.tag_counts(), counts);
        let nonzero = model.objective.normalized().terms.len();
        assert_eq!(parsed.objective.len(), nonzero);
    }

    #[test]
    fn flows_are_continuous_and_positions_binary() {
        let model = assemble(&fig1(2)).unwrap();
        let parsed = parse_lp(&export_lp(&model)).unwrap();
        let f = VarKey::Fbar {
            b: FlowId::Agent(0),
            edge: 0,
            t: 1,
        }
        .lp_name();
        let z = VarKey::Z {
            r: 1,
            s: StateId(2),
            t: 1,
        }
        .lp_name();
        assert!(parsed.bounded.contains(&f) && !parsed.binaries.contains(&f));
        assert!(parsed.binaries.contains(&z) && !parsed.bounded.contains(&z));
    }

    #[test]
    fn coefficients_survive() {
        let mut model = MilpModel::new();
        let a = model.var(VarKey::Y { s: StateId(0), k: 1 });
        let b = model.var(VarKey::Y { s: StateId(1), k: 2 });
        model.add_objective(a, 2.5);
        model.add_objective(b, -1.0);
        let mut e = LinExpr::new();
        e.add(a, 3.0).add(b, -0.5);
        model.add_constraint(e, Cmp::Ge, -1.25, "t");
        let parsed = parse_lp(&export_lp(&model)).unwrap();
        assert_eq!(
            parsed.objective,
            vec![("y_0_1".into(), 2.5), ("y_1_2".into(), -1.0)]
        );
        let c = &parsed.constraints[0];
        assert_eq!(c.terms, vec![("y_0_1".into(), 3.0), ("y_1_2".into(), -0.5)]);
        assert_eq!((c.cmp, c.rhs), (Cmp::Ge, -1.25));
    }
}
