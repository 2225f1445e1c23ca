//! HiGHS adapter over the raw C interface.

use std::ffi::CString;
use std::os::raw::c_void;
use std::time::Instant;

use highs_sys::*;

use super::{round_binaries, MilpModel, ObjSense, Sense, Solution, SolveStatus, SolverConfig, VarKind};
use crate::error::{Error, Result};

const STATUS_ERROR: HighsInt = -1;

/// Owned HiGHS instance; destroyed on drop.
struct Highs(*mut c_void);

impl Highs {
    fn new() -> Self {
        // SAFETY: Highs_create has no preconditions and returns an owned handle.
        Self(unsafe { Highs_create() })
    }

    fn check(&self, status: HighsInt, what: &str) -> Result<()> {
        if status == STATUS_ERROR {
            Err(Error::Solver(format!("HiGHS rejected {what}")))
        } else {
            Ok(())
        }
    }

    fn set_bool(&mut self, option: &str, value: bool) -> Result<()> {
        let key = CString::new(option).expect("option names have no NUL");
        // SAFETY: valid handle and NUL-terminated key.
        let st = unsafe { Highs_setBoolOptionValue(self.0, key.as_ptr(), value as HighsInt) };
        self.check(st, option)
    }

    fn set_int(&mut self, option: &str, value: HighsInt) -> Result<()> {
        let key = CString::new(option).expect("option names have no NUL");
        // SAFETY: as above.
        let st = unsafe { Highs_setIntOptionValue(self.0, key.as_ptr(), value) };
        self.check(st, option)
    }

    fn set_double(&mut self, option: &str, value: f64) -> Result<()> {
        let key = CString::new(option).expect("option names have no NUL");
        // SAFETY: as above.
        let st = unsafe { Highs_setDoubleOptionValue(self.0, key.as_ptr(), value) };
        self.check(st, option)
    }

    fn int_info(&self, info: &str) -> Option<HighsInt> {
        let key = CString::new(info).expect("info names have no NUL");
        let mut out: HighsInt = 0;
        // SAFETY: valid handle, key and out-pointer.
        let st = unsafe { Highs_getIntInfoValue(self.0, key.as_ptr(), &mut out) };
        (st != STATUS_ERROR).then_some(out)
    }
}

impl Drop for Highs {
    fn drop(&mut self) {
        // SAFETY: the handle came from Highs_create and is destroyed once.
        unsafe { Highs_destroy(self.0) }
    }
}

fn to_highs_int(n: usize) -> Result<HighsInt> {
    HighsInt::try_from(n).map_err(|_| Error::Solver(format!("model dimension {n} too large")))
}

/// Solves `model` with HiGHS.
///
/// Optimal and limit-reached solutions have their binary values rounded to
/// exact 0/1 (values further than `integrality_tolerance` from an integer are
/// an error). Row duals are returned for models without binaries.
pub fn solve(model: &MilpModel, config: &SolverConfig) -> Result<Solution> {
    model.validate()?;
    config.check()?;
    let start = Instant::now();
    let n = model.vars.len();
    if n == 0 {
        let infeasible = model.constraints.iter().any(|c| match c.sense {
            Sense::Le => 0.0 > c.rhs + 1e-9,
            Sense::Ge => 0.0 < c.rhs - 1e-9,
            Sense::Eq => c.rhs.abs() > 1e-9,
        });
        return Ok(Solution {
            status: if infeasible {
                SolveStatus::Infeasible
            } else {
                SolveStatus::Optimal
            },
            objective: model.objective_constant,
            values: Vec::new(),
            duals: (!model.is_mip()).then(|| vec![0.0; model.constraints.len()]),
            solve_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let m = model.constraints.len();
    let mut cost = vec![0.0; n];
    for &(v, c) in &model.objective {
        cost[v.0] += c;
    }
    let lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut row_lower = Vec::with_capacity(m);
    let mut row_upper = Vec::with_capacity(m);
    let mut starts = Vec::with_capacity(m + 1);
    let mut index = Vec::new();
    let mut value = Vec::new();
    for row in &model.constraints {
        starts.push(to_highs_int(index.len())?);
        // HiGHS wants each column at most once per row.
        let mut terms = row.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v.0 => last.1 += c,
                _ => merged.push((v.0, c)),
            }
        }
        for (v, c) in merged {
            index.push(to_highs_int(v)?);
            value.push(c);
        }
        let (lo, hi) = match row.sense {
            Sense::Le => (f64::NEG_INFINITY, row.rhs),
            Sense::Ge => (row.rhs, f64::INFINITY),
            Sense::Eq => (row.rhs, row.rhs),
        };
        row_lower.push(lo);
        row_upper.push(hi);
    }
    starts.push(to_highs_int(index.len())?);
    let integrality: Vec<HighsInt> = model
        .vars
        .iter()
        .map(|v| match v.kind {
            VarKind::Binary => 1,
            VarKind::Continuous => 0,
        })
        .collect();
    let is_mip = model.is_mip();
    let sense: HighsInt = match model.sense {
        ObjSense::Min => 1,
        ObjSense::Max => -1,
    };

    let mut highs = Highs::new();
    highs.set_bool("output_flag", false)?;
    if config.time_limit_seconds.is_finite() {
        highs.set_double("time_limit", config.time_limit_seconds)?;
    }
    highs.set_double("mip_rel_gap", config.mip_gap)?;
    highs.set_double("mip_feasibility_tolerance", config.integrality_tolerance.max(1e-10))?;
    if config.threads > 0 {
        highs.set_int("threads", to_highs_int(config.threads)?)?;
    }

    let nz = to_highs_int(index.len())?;
    let (nc, nr) = (to_highs_int(n)?, to_highs_int(m)?);
    // SAFETY: every array has the length HiGHS expects for a row-wise
    // (format 2) matrix: n columns, m rows, m + 1 starts, nz entries.
    let st = unsafe {
        if is_mip {
            Highs_passMip(
                highs.0,
                nc,
                nr,
                nz,
                2,
                sense,
                model.objective_constant,
                cost.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                row_lower.as_ptr(),
                row_upper.as_ptr(),
                starts.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
                integrality.as_ptr(),
            )
        } else {
            Highs_passLp(
                highs.0,
                nc,
                nr,
                nz,
                2,
                sense,
                model.objective_constant,
                cost.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                row_lower.as_ptr(),
                row_upper.as_ptr(),
                starts.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
            )
        }
    };
    highs.check(st, "the model")?;

    // SAFETY: valid handle with a model loaded.
    let st = unsafe { Highs_run(highs.0) };
    highs.check(st, "the solve")?;
    // SAFETY: valid handle.
    let model_status = unsafe { Highs_getModelStatus(highs.0) };
    let status = match model_status {
        7 => SolveStatus::Optimal,
        8 | 9 => SolveStatus::Infeasible,
        11 | 13 | 14 | 16 | 17 => SolveStatus::LimitReached,
        10 => return Err(Error::Solver("model is unbounded".into())),
        other => return Err(Error::Solver(format!("HiGHS model status {other}"))),
    };

    // primal_solution_status 2 == feasible point available
    let has_point = status == SolveStatus::Optimal
        || (status == SolveStatus::LimitReached && highs.int_info("primal_solution_status") == Some(2));
    let mut values = Vec::new();
    let mut duals = None;
    if has_point {
        let mut col_value = vec![0.0; n];
        let mut col_dual = vec![0.0; n];
        let mut row_value = vec![0.0; m];
        let mut row_dual = vec![0.0; m];
        // SAFETY: buffers sized to the loaded model.
        let st = unsafe {
            Highs_getSolution(
                highs.0,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            )
        };
        highs.check(st, "solution retrieval")?;
        if is_mip {
            round_binaries(model, &mut col_value, config.integrality_tolerance)?;
        } else if status == SolveStatus::Optimal {
            duals = Some(row_dual);
        }
        values = col_value;
    }
    let objective = if has_point {
        model.objective_value(&values)
    } else {
        f64::NAN
    };
    Ok(Solution {
        status,
        objective,
        values,
        duals,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{MilpModel, ObjSense, Sense, VarId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn single_continuous_variable() {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_continuous(0.0, 1.0, "x");
        m.add_objective_term(x, 1.0);
        let s = solve(&m, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!(s.duals.is_some());
    }

    #[test]
    fn two_binaries_sharing_a_row() {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_binary("x");
        let y = m.add_binary("y");
        m.add_objective_term(x, 1.0);
        m.add_objective_term(y, 1.0);
        m.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0, "c");
        let s = solve(&m, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, 1.0);
        assert!(s.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.duals.is_none());
    }

    #[test]
    fn infeasible_model() {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_binary("x");
        m.add_constraint(vec![(x, 1.0)], Sense::Ge, 2.0, "c");
        assert_eq!(solve(&m, &cfg()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_model() {
        let mut m = MilpModel::new(ObjSense::Min);
        m.objective_constant = 2.5;
        let s = solve(&m, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, 2.5);
    }

    /// max 3x + y, x + y <= 4, x <= 3: shadow prices are 1 and 2.
    #[test]
    fn duals_are_shadow_prices() {
        for sense in [ObjSense::Max, ObjSense::Min] {
            let sign = if sense == ObjSense::Max { 1.0 } else { -1.0 };
            let mut m = MilpModel::new(sense);
            let x = m.add_continuous(0.0, f64::INFINITY, "x");
            let y = m.add_continuous(0.0, f64::INFINITY, "y");
            m.add_objective_term(x, 3.0 * sign);
            m.add_objective_term(y, sign);
            m.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0, "r1");
            m.add_constraint(vec![(x, 1.0)], Sense::Le, 3.0, "r2");
            let s = solve(&m, &cfg()).unwrap();
            let d = s.duals.unwrap();
            assert!((d[0] - sign).abs() < 1e-9, "{d:?}");
            assert!((d[1] - 2.0 * sign).abs() < 1e-9, "{d:?}");
        }
    }

    /// Random packing LPs: duals agree with finite differences of the optimum
    /// and satisfy complementary slackness.
    #[test]
    fn random_lp_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let rows = rng.random_range(1..5);
            let mut m = MilpModel::new(ObjSense::Max);
            let vars: Vec<VarId> = (0..n)
                .map(|i| m.add_continuous(0.0, 1.0, format!("x{i}")))
                .collect();
            for &v in &vars {
                m.add_objective_term(v, rng.random_range(0.0..5.0));
            }
            for r in 0..rows {
                let terms = vars.iter().map(|&v| (v, rng.random_range(0.1..2.0))).collect();
                m.add_constraint(terms, Sense::Le, rng.random_range(0.5..3.0), format!("r{r}"));
            }
            let s = solve(&m, &cfg()).unwrap();
            let duals = s.duals.clone().unwrap();
            for (i, row) in m.constraints.iter().enumerate() {
                let lhs: f64 = row.terms.iter().map(|&(v, a)| a * s.value(v)).sum();
                let slack = row.rhs - lhs;
                assert!(duals[i] >= -1e-7);
                assert!((duals[i] * slack).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn limit_reached_keeps_incumbent_flag() {
        let mut m = MilpModel::new(ObjSense::Max);
        let x = m.add_binary("x");
        m.add_objective_term(x, 1.0);
        let s = solve(&m, &cfg().with_time_limit(0.0)).unwrap();
        assert!(matches!(s.status, SolveStatus::Optimal | SolveStatus::LimitReached));
    }
}
