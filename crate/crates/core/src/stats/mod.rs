//! Group-comparison statistics: outlier clamping, detrending regression,
//! TOST equivalence, and fixed-effect / two-stage group tests.

pub mod compare;
pub mod special;

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use special::{student_t_cdf, student_t_two_sided};
use std::collections::BTreeMap;

/// Clamps each value into `[mean - 3*sd, mean + 3*sd]`, using the input's
/// own sample mean and standard deviation. Order preserved; zero-variance
/// input is returned unchanged.
pub fn clamp_outliers(values: &[f64]) -> Vec<f64> {
    if values.len() < 2 {
        return values.to_vec();
    }
    let (mean, sd) = mean_sd(values);
    if sd == 0.0 {
        return values.to_vec();
    }
    let (lo, hi) = (mean - 3.0 * sd, mean + 3.0 * sd);
    values.iter().map(|&v| v.clamp(lo, hi)).collect()
}

/// Sample mean and standard deviation (n-1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// least squares

/// A named regression design matrix. The intercept column is explicit.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    /// Column-major predictor data, all columns the same length.
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len());
        Design { names, columns }
    }

    /// intercept + session + trial, the detrending design.
    pub fn detrend(session: &[f64], trial: &[f64]) -> Self {
        let n = session.len();
        Design::new(
            vec!["intercept".into(), "session".into(), "trial".into()],
            vec![vec![1.0; n], session.to_vec(), trial.to_vec()],
        )
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|c| c.len()).unwrap_or(0)
    }
}

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    /// Two-sided p-values against zero.
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub dof: f64,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.p_values[i])
    }
}

/// Solves min ||y - X b|| by normal equations with partial pivoting.
/// Rank deficiency produces an error naming the collinear columns.
pub fn fit_linear(y: &[f64], design: &Design) -> Result<FitResult> {
    let n = y.len();
    let k = design.columns.len();
    if k == 0 || n == 0 {
        return Err(Error::config("empty regression design"));
    }
    if design.columns.iter().any(|c| c.len() != n) {
        return Err(Error::config("design column length mismatch"));
    }
    if n <= k {
        return Err(Error::Degenerate(format!(
            "{n} observations cannot identify {k} coefficients"
        )));
    }
    // XtX and Xty
    let mut xtx = vec![vec![0.0f64; k]; k];
    let mut xty = vec![0.0f64; k];
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for r in 0..n {
                acc += design.columns[i][r] * design.columns[j][r];
            }
            xtx[i][j] = acc;
            xtx[j][i] = acc;
        }
        let mut acc = 0.0;
        for r in 0..n {
            acc += design.columns[i][r] * y[r];
        }
        xty[i] = acc;
    }
    let scale: Vec<f64> = (0..k).map(|i| xtx[i][i].max(1e-300)).collect();
    let inv = invert_spd(&xtx).ok_or_else(|| {
        // name the columns involved in the dependency: those whose pivot
        // collapsed relative to their scale
        let mut cols = Vec::new();
        let mut m = xtx.clone();
        for col in 0..k {
            let pivot = m[col][col];
            if pivot.abs() < 1e-10 * scale[col] {
                cols.push(design.names[col].clone());
                continue;
            }
            for r in (col + 1)..k {
                let f = m[r][col] / pivot;
                for c in col..k {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        if cols.is_empty() {
            cols.push("unknown".into());
        }
        Error::RankDeficient(cols)
    })?;
    let coefficients: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum())
        .collect();
    let mut residuals = Vec::with_capacity(n);
    let mut rss = 0.0;
    for r in 0..n {
        let fitted: f64 = (0..k).map(|i| coefficients[i] * design.columns[i][r]).sum();
        let res = y[r] - fitted;
        rss += res * res;
        residuals.push(res);
    }
    let dof = (n - k) as f64;
    let sigma2 = rss / dof;
    let std_errors: Vec<f64> = (0..k).map(|i| (sigma2 * inv[i][i]).max(0.0).sqrt()).collect();
    let t_values: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| if se > 0.0 { b / se } else { f64::INFINITY })
        .collect();
    let p_values: Vec<f64> = t_values
        .iter()
        .map(|&t| {
            if t.is_finite() {
                student_t_two_sided(t, dof)
            } else {
                0.0
            }
        })
        .collect();
    Ok(FitResult {
        names: design.names.clone(),
        coefficients,
        std_errors,
        t_values,
        p_values,
        residuals,
        dof,
    })
}

/// Gauss-Jordan inverse for small symmetric positive-definite systems;
/// `None` when a pivot collapses (rank deficiency).
fn invert_spd(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv = vec![vec![0.0; k]; k];
    let scale: Vec<f64> = (0..k).map(|i| m[i][i].abs().max(1e-300)).collect();
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..k {
        // partial pivot
        let mut pivot_row = col;
        for r in (col + 1)..k {
            if a[r][col].abs() > a[pivot_row][col].abs() {
                pivot_row = r;
            }
        }
        if a[pivot_row][col].abs() < 1e-12 * scale[col] {
            return None;
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col];
        for c in 0..k {
            a[col][c] /= pivot;
            inv[col][c] /= pivot;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..k {
                        a[r][c] -= f * a[col][c];
                        inv[r][c] -= f * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}

// ---------------------------------------------------------------------------
// TOST

/// Whether the TOST operates on raw trial residuals or per-participant
/// aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TostMode {
    #[default]
    TrialResiduals,
    ParticipantMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TostConfig {
    /// delta = delta_factor * pooled sd of the samples.
    pub delta_factor: f64,
    pub alpha: f64,
    pub mode: TostMode,
}

impl Default for TostConfig {
    fn default() -> Self {
        TostConfig {
            delta_factor: 0.2,
            alpha: 0.05,
            mode: TostMode::TrialResiduals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TostResult {
    pub p_equivalence: f64,
    pub equivalent: bool,
    /// The equivalence margin actually used.
    pub delta: f64,
    pub mean_diff: f64,
    pub dof: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two one-sided Welch t-tests against ±delta, delta = factor * pooled
/// sd. `p_equivalence` is the max of the two one-sided p-values;
/// equivalence is declared when it is below alpha.
pub fn tost(a: &[f64], b: &[f64], cfg: &TostConfig) -> Result<TostResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate("TOST needs n >= 2 per group".into()));
    }
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled_sd =
        (((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0)).sqrt();
    let delta = cfg.delta_factor * pooled_sd;
    let diff = ma - mb;
    if pooled_sd == 0.0 {
        // degenerate: equivalence iff the means are identical
        let equivalent = diff == 0.0;
        return Ok(TostResult {
            p_equivalence: if equivalent { 0.0 } else { 1.0 },
            equivalent,
            delta,
            mean_diff: diff,
            dof: na + nb - 2.0,
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    let va = sa * sa / na;
    let vb = sb * sb / nb;
    let se = (va + vb).sqrt();
    // Welch-Satterthwaite degrees of freedom
    let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    // H01: diff >= delta  (reject for small t_upper)
    let t_upper = (diff - delta) / se;
    let p_upper = student_t_cdf(t_upper, dof);
    // H02: diff <= -delta (reject for large t_lower)
    let t_lower = (diff + delta) / se;
    let p_lower = 1.0 - student_t_cdf(t_lower, dof);
    let p_equivalence = p_upper.max(p_lower);
    Ok(TostResult {
        p_equivalence,
        equivalent: p_equivalence < cfg.alpha,
        delta,
        mean_diff: diff,
        dof,
        n_a: a.len(),
        n_b: b.len(),
    })
}

// ---------------------------------------------------------------------------
// group difference / learning rate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// One observation of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub group: Group,
    pub participant: String,
    pub session: u32,
    pub trial: u32,
    pub value: f64,
}

/// Long-format observation table for one parameter.
#[derive(Debug, Clone, Default)]
pub struct ObservationTable {
    pub rows: Vec<Observation>,
}

impl ObservationTable {
    pub fn group_values(&self, group: Group) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.value)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTestResult {
    /// Fixed-effect regression: group coefficient and session x group
    /// interaction.
    pub p_difference: f64,
    pub p_learning_rate: f64,
    /// Two-stage per-participant comparison (Welch t-tests on intercepts
    /// and slopes). `None` when a group has fewer than two usable
    /// participants.
    pub p_difference_two_stage: Option<f64>,
    pub p_learning_rate_two_stage: Option<f64>,
    pub slope_a: f64,
    pub slope_b: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub dropped_participants: u32,
}

/// Group difference and learning-rate tests.
///
/// Route 1 (fixed effect): value ~ intercept + trial + session + group +
/// session x group; `p_difference` from the group coefficient,
/// `p_learning_rate` from the interaction.
///
/// Route 2 (two-stage): per participant value ~ intercept + session, then
/// Welch t-tests comparing group means of intercepts and slopes.
/// Participants with fewer than 3 observations are dropped from route 2.
pub fn group_difference(table: &ObservationTable) -> Result<GroupTestResult> {
    let rows = &table.rows;
    if rows.is_empty() {
        return Err(Error::Degenerate("empty observation table".into()));
    }
    for g in [Group::A, Group::B] {
        if !rows.iter().any(|r| r.group == g) {
            return Err(Error::Degenerate(format!("group {g:?} has no observations")));
        }
    }
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (v0, all_same) = (values[0], values.iter().all(|&v| v == values[0]));
    if all_same {
        return Err(Error::Degenerate(format!(
            "all observations constant at {v0}; tests undefined"
        )));
    }

    // fixed-effect route
    let n = rows.len();
    let session: Vec<f64> = rows.iter().map(|r| r.session as f64).collect();
    let trial: Vec<f64> = rows.iter().map(|r| r.trial as f64).collect();
    let group_ind: Vec<f64> = rows
        .iter()
        .map(|r| if r.group == Group::B { 1.0 } else { 0.0 })
        .collect();
    let interaction: Vec<f64> = session
        .iter()
        .zip(&group_ind)
        .map(|(s, g)| s * g)
        .collect();
    let design = Design::new(
        vec![
            "intercept".into(),
            "trial".into(),
            "session".into(),
            "group".into(),
            "session_x_group".into(),
        ],
        vec![vec![1.0; n], trial, session, group_ind, interaction],
    );
    let fit = fit_linear(&values, &design)?;
    let p_difference = fit.p_value("group").unwrap();
    let p_learning_rate = fit.p_value("session_x_group").unwrap();

    // two-stage route
    let mut per_participant: BTreeMap<(Group, &str), Vec<&Observation>> = BTreeMap::new();
    for r in rows {
        per_participant
            .entry((r.group, r.participant.as_str()))
            .or_default()
            .push(r);
    }
    let mut dropped = 0u32;
    let mut intercepts: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    let mut slopes: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    for ((group, _pid), obs) in &per_participant {
        if obs.len() < 3 {
            dropped += 1;
            continue;
        }
        let y: Vec<f64> = obs.iter().map(|o| o.value).collect();
        let s: Vec<f64> = obs.iter().map(|o| o.session as f64).collect();
        let d = Design::new(
            vec!["intercept".into(), "session".into()],
            vec![vec![1.0; y.len()], s],
        );
        match fit_linear(&y, &d) {
            Ok(f) => {
                intercepts.entry(*group).or_default().push(f.coefficients[0]);
                slopes.entry(*group).or_default().push(f.coefficients[1]);
            }
            Err(_) => dropped += 1,
        }
    }
    let welch = |a: &[f64], b: &[f64]| -> Option<f64> {
        if a.len() < 2 || b.len() < 2 {
            return None;
        }
        let (ma, sa) = mean_sd(a);
        let (mb, sb) = mean_sd(b);
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (va, vb) = (sa * sa / na, sb * sb / nb);
        if va + vb == 0.0 {
            return Some(if ma == mb { 1.0 } else { 0.0 });
        }
        let t = (ma - mb) / (va + vb).sqrt();
        let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        Some(student_t_two_sided(t, dof))
    };
    let empty: Vec<f64> = Vec::new();
    let ia = intercepts.get(&Group::A).unwrap_or(&empty);
    let ib = intercepts.get(&Group::B).unwrap_or(&empty);
    let sa = slopes.get(&Group::A).unwrap_or(&empty);
    let sb = slopes.get(&Group::B).unwrap_or(&empty);
    let p_difference_two_stage = welch(ia, ib);
    let p_learning_rate_two_stage = welch(sa, sb);

    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(GroupTestResult {
        p_difference,
        p_learning_rate,
        p_difference_two_stage,
        p_learning_rate_two_stage,
        slope_a: mean_of(sa),
        slope_b: mean_of(sb),
        mean_a: mean_of(&table.group_values(Group::A)),
        mean_b: mean_of(&table.group_values(Group::B)),
        dropped_participants: dropped,
    })
}

/// Numeric normality report (replaces QQ plots): sample skewness and
/// excess kurtosis.
pub fn skewness_kurtosis(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.len() < 3 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}
