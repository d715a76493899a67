use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::StateId;

/// Identifier of an information flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowId {
    /// Data flow named after its source (one-to-many) or sink (many-to-one) agent.
    Agent(usize),
    Master,
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowId::Agent(a) => write!(f, "{a}"),
            FlowId::Master => write!(f, "m"),
        }
    }
}

/// Variable identity. Edge-indexed variables refer to positions in the
/// network's mobility (`X`, `F`) or communication (`Fbar`, `CommActive`)
/// edge lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKey {
    Z { r: usize, s: StateId, t: usize },
    Y { s: StateId, k: usize },
    X { r: usize, edge: usize, t: usize },
    F { b: FlowId, edge: usize, t: usize },
    Fbar { b: FlowId, edge: usize, t: usize },
    CommActive { edge: usize, t: usize },
}

impl VarKey {
    pub fn domain(&self) -> Domain {
        match self {
            VarKey::F { .. } | VarKey::Fbar { .. } => Domain::Continuous,
            _ => Domain::Binary,
        }
    }

    /// Name used in LP files.
    pub fn lp_name(&self) -> String {
        match *self {
            VarKey::Z { r, s, t } => format!("z_{r}_{}_{t}", s.0),
            VarKey::Y { s, k } => format!("y_{}_{k}", s.0),
            VarKey::X { r, edge, t } => format!("x_{r}_{edge}_{t}"),
            VarKey::F { b, edge, t } => format!("f_{b}_{edge}_{t}"),
            VarKey::Fbar { b, edge, t } => format!("fbar_{b}_{edge}_{t}"),
            VarKey::CommActive { edge, t } => format!("ca_{edge}_{t}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Binary,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

impl Cmp {
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Cmp::Le => lhs <= rhs + tol,
            Cmp::Eq => (lhs - rhs).abs() <= tol,
            Cmp::Ge => lhs >= rhs - tol,
        }
    }
}

pub type VarIndex = usize;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarIndex, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, var: VarIndex, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn normalized(&self) -> LinExpr {
        let mut acc: BTreeMap<VarIndex, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v).or_default() += c;
        }
        LinExpr {
            terms: acc.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub rhs: f64,
    pub tag: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub key: VarKey,
    pub domain: Domain,
    pub upper: Option<f64>,
}

/// Solver-neutral MILP: maximize `objective` subject to `constraints`, all
/// variables non-negative.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    vars: Vec<Variable>,
    index: HashMap<VarKey, VarIndex>,
    pub constraints: Vec<Constraint>,
    pub objective: LinExpr,
    /// Constraint count per tag.
    pub counts: BTreeMap<&'static str, usize>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `key`, allocating it on first use.
    pub fn var(&mut self, key: VarKey) -> VarIndex {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let domain = key.domain();
        let i = self.vars.len();
        self.vars.push(Variable {
            key,
            domain,
            upper: (domain == Domain::Binary).then_some(1.0),
        });
        self.index.insert(key, i);
        i
    }

    pub fn lookup(&self, key: &VarKey) -> Option<VarIndex> {
        self.index.get(key).copied()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_constraint(&mut self, expr: LinExpr, cmp: Cmp, rhs: f64, tag: &'static str) {
        *self.counts.entry(tag).or_default() += 1;
        self.constraints.push(Constraint { expr, cmp, rhs, tag });
    }

    pub fn count(&self, tag: &str) -> usize {
        self.counts.get(tag).copied().unwrap_or(0)
    }

    pub fn add_objective(&mut self, var: VarIndex, coef: f64) {
        if coef != 0.0 {
            self.objective.add(var, coef);
        }
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }

    /// Largest violation of any constraint or bound under `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs = c.expr.eval(values);
            let v = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (i, var) in self.vars.iter().enumerate() {
            worst = worst.max(-values[i]);
            if let Some(u) = var.upper {
                worst = worst.max(values[i] - u);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_is_idempotent() {
        let mut m = MilpModel::new();
        let a = m.var(VarKey::Y { s: StateId(1), k: 1 });
        let b = m.var(VarKey::Y { s: StateId(1), k: 1 });
        assert_eq!(a, b);
        let f = m.var(VarKey::F {
            b: FlowId::Master,
            edge: 0,
            t: 0,
        });
        assert_eq!(m.variables()[f].domain, Domain::Continuous);
        assert_eq!(m.variables()[a].upper, Some(1.0));
    }

    #[test]
    fn normalized_merges_terms() {
        let mut e = LinExpr::new();
        e.add(0, 1.0).add(1, 2.0).add(0, -1.0);
        assert_eq!(e.normalized().terms, vec![(1, 2.0)]);
    }

    #[test]
    fn violation_measure() {
        let mut m = MilpModel::new();
        let a = m.var(VarKey::Y { s: StateId(0), k: 1 });
        let mut e = LinExpr::new();
        e.add(a, 1.0);
        m.add_constraint(e, Cmp::Le, 0.25, "t");
        assert!((m.max_violation(&[1.0]) - 0.75).abs() < 1e-12);
        assert_eq!(m.count("t"), 1);
    }
}
