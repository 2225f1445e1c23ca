//! Solver-agnostic linear models.
//!
//! A [`MilpModel`] is built column by column and row by row, then handed to
//! [`solve`], which runs it through HiGHS. Models can also be dumped to (and
//! read back from) the CPLEX LP text format for cross-checking with other
//! solvers.

mod backend;
pub mod lp_format;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDef {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub vars: Vec<VarDef>,
    pub constraints: Vec<LinConstraint>,
    pub objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
    pub sense: ObjSense,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new(ObjSense::Max)
    }
}

impl MilpModel {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            sense,
        }
    }

    pub fn add_var(&mut self, kind: VarKind, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            kind,
            lower,
            upper,
            name: Some(name.into()),
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Binary, 0.0, 1.0, name)
    }

    pub fn add_continuous(&mut self, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Continuous, lower, upper, name)
    }

    pub fn add_constraint(
        &mut self,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        name: impl Into<String>,
    ) -> ConstraintId {
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(LinConstraint {
            terms,
            sense,
            rhs,
            name: Some(name.into()),
        });
        id
    }

    /// Adds `coef · var` to the objective.
    pub fn add_objective_term(&mut self, var: VarId, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let def = &mut self.vars[var.0];
        def.lower = lower;
        def.upper = upper;
    }

    pub fn var(&self, id: VarId) -> &VarDef {
        &self.vars[id.0]
    }

    pub fn var_name(&self, id: VarId) -> String {
        self.vars[id.0]
            .name
            .clone()
            .unwrap_or_else(|| format!("x{}", id.0))
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Checks that bounds are ordered, coefficients finite and every term
    /// references a declared variable.
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Model(format!(
                    "variable {} has bounds [{}, {}]",
                    self.var_name(VarId(i)),
                    v.lower,
                    v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Model(format!(
                    "binary variable {} has bounds outside [0, 1]",
                    self.var_name(VarId(i))
                )));
            }
        }
        let check_terms = |terms: &[(VarId, f64)], what: &str| -> Result<()> {
            for &(v, c) in terms {
                if v.0 >= n {
                    return Err(Error::Model(format!("{what} references undeclared variable {}", v.0)));
                }
                if !c.is_finite() {
                    return Err(Error::Model(format!("{what} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        check_terms(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            let label = c.name.clone().unwrap_or_else(|| format!("row {i}"));
            check_terms(&c.terms, &label)?;
            if !c.rhs.is_finite() {
                return Err(Error::Model(format!("{label} has a non-finite right-hand side")));
            }
        }
        Ok(())
    }

    /// Objective value at `values`.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Largest violation of any row or bound at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (def, &v) in self.vars.iter().zip(values) {
            worst = worst.max(def.lower - v).max(v - def.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelStats {
    pub num_vars: usize,
    pub num_binary: usize,
    pub num_continuous: usize,
    pub num_constraints: usize,
}

pub fn model_stats(model: &MilpModel) -> ModelStats {
    let num_binary = model
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .count();
    ModelStats {
        num_vars: model.vars.len(),
        num_binary,
        num_continuous: model.vars.len() - num_binary,
        num_constraints: model.constraints.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// A time or node limit stopped the solver; `values` hold the best
    /// incumbent if one was found.
    LimitReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row duals for pure LPs, as d(objective)/d(rhs) in the model's own
    /// objective sense.
    pub duals: Option<Vec<f64>>,
    pub solve_seconds: f64,
}

impl Solution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub time_limit_seconds: f64,
    pub mip_gap: f64,
    pub threads: usize,
    pub integrality_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit_seconds: f64::INFINITY,
            mip_gap: 1e-6,
            threads: 1,
            integrality_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_seconds = seconds;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.time_limit_seconds.is_nan()
            || self.time_limit_seconds < 0.0
            || self.mip_gap.is_nan()
            || self.mip_gap < 0.0
            || self.integrality_tolerance.is_nan()
            || self.integrality_tolerance < 0.0
        {
            return Err(Error::InvalidConfig(
                "solver limits and tolerances must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Rounds binary values that are within `tol` of 0 or 1 and rejects the rest.
pub(crate) fn round_binaries(model: &MilpModel, values: &mut [f64], tol: f64) -> Result<()> {
    for (i, def) in model.vars.iter().enumerate() {
        if def.kind != VarKind::Binary {
            continue;
        }
        let v = values[i];
        let r = v.round();
        if (v - r).abs() > tol || !(r == 0.0 || r == 1.0) {
            return Err(Error::Integrality {
                name: model.var_name(VarId(i)),
                value: v,
                tolerance: tol,
            });
        }
        values[i] = r;
    }
    Ok(())
}

/// Names must be unique for the LP text format; used by the writer.
pub(crate) fn has_unique_names(model: &MilpModel) -> bool {
    let mut seen = HashSet::new();
    model
        .vars
        .iter()
        .enumerate()
        .all(|(i, v)| seen.insert(v.name.clone().unwrap_or_else(|| format!("x{i}"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_empty_model() {
        assert_eq!(model_stats(&MilpModel::default()), ModelStats::default());
    }

    #[test]
    fn validate_rejects_bad_models() {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_continuous(1.0, 0.0, "x");
        assert!(m.validate().is_err());
        m.set_bounds(x, 0.0, 1.0);
        assert!(m.validate().is_ok());
        m.add_constraint(vec![(VarId(7), 1.0)], Sense::Le, 1.0, "bad");
        assert!(m.validate().is_err());
    }

    #[test]
    fn rounding_binaries() {
        let mut m = MilpModel::new(ObjSense::Max);
        m.add_binary("a");
        m.add_continuous(0.0, 1.0, "b");
        let mut vals = vec![0.9999999, 0.5];
        round_binaries(&m, &mut vals, 1e-6).unwrap();
        assert_eq!(vals, vec![1.0, 0.5]);
        let mut vals = vec![0.4, 0.5];
        assert!(matches!(
            round_binaries(&m, &mut vals, 1e-6),
            Err(Error::Integrality { .. })
        ));
    }
}
