use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::VarId;

/// Approximate values below this are clamped inside the KL term.
pub const KL_CLAMP: f64 = 1e-12;

/// Error triple pooled over every value of every compared variable, plus
/// the conventional per-variable summed KL.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Metrics {
    pub absolute: f64,
    pub relative: f64,
    pub kl: f64,
    pub kl_summed: f64,
    /// Values with exact probability zero, left out of relative error and KL.
    pub skipped: usize,
    /// KL terms whose approximate value was clamped.
    pub clamped: usize,
}

fn check(exact: &[f64], approx: &[f64]) -> Result<()> {
    if exact.is_empty() || exact.len() != approx.len() {
        return Err(Error::UndefinedMetric(format!(
            "tables of length {} and {}",
            exact.len(),
            approx.len()
        )));
    }
    Ok(())
}

/// Mean of `|P_e - P_a|` over the values of one table.
pub fn absolute_error(exact: &[f64], approx: &[f64]) -> Result<f64> {
    check(exact, approx)?;
    Ok(exact.iter().zip(approx).map(|(e, a)| (e - a).abs()).sum::<f64>() / exact.len() as f64)
}

/// Mean of `|P_e - P_a| / P_e` over values with `P_e > 0`.
pub fn relative_error(exact: &[f64], approx: &[f64]) -> Result<f64> {
    compare(&[(exact, approx)]).map(|m| m.relative)
}

/// Mean of `P_e ln(P_e / P_a)` over values with `P_e > 0`.
pub fn kl_distance(exact: &[f64], approx: &[f64]) -> Result<f64> {
    compare(&[(exact, approx)]).map(|m| m.kl)
}

/// Pools the metrics over several `(exact, approx)` tables.
pub fn compare(tables: &[(&[f64], &[f64])]) -> Result<Metrics> {
    let mut m = Metrics::default();
    let (mut n_abs, mut n_pos) = (0usize, 0usize);
    for (exact, approx) in tables {
        check(exact, approx)?;
        let mut summed = 0.0;
        for (&e, &a) in exact.iter().zip(approx.iter()) {
            m.absolute += (e - a).abs();
            n_abs += 1;
            if e <= 0.0 {
                m.skipped += 1;
                continue;
            }
            m.relative += (e - a).abs() / e;
            if a < KL_CLAMP {
                m.clamped += 1;
            }
            let term = e * (e / a.max(KL_CLAMP)).ln();
            m.kl += term;
            summed += term;
            n_pos += 1;
        }
        m.kl_summed += summed;
    }
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("no value has positive exact probability".into()));
    }
    m.absolute /= n_abs as f64;
    m.relative /= n_pos as f64;
    m.kl /= n_pos as f64;
    m.kl_summed /= tables.len() as f64;
    Ok(m)
}

/// Metrics over every variable present in `exact`.
pub fn compare_marginals(exact: &BTreeMap<VarId, Vec<f64>>, approx: &BTreeMap<VarId, Vec<f64>>) -> Result<Metrics> {
    let tables = exact
        .iter()
        .map(|(v, e)| {
            let a = approx
                .get(v)
                .ok_or_else(|| Error::UndefinedMetric(format!("no estimate for {v}")))?;
            Ok((e.as_slice(), a.as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    compare(&tables)
}
