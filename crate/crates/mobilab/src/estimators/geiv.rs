//! Errors-in-variables diagnostics: the age profile of the projection of
//! annual on lifetime income, and the age profile of the annual-on-parent
//! slope.

use crate::error::{Error, Result};
use crate::estimators::simple_ols;
use crate::panel::Panel;

/// Per-age projection slopes and the age at which the annual-on-lifetime
/// slope crosses one.
#[derive(Debug, Clone)]
pub struct GeivResult {
    pub ages: Vec<u16>,
    /// Slope of annual log income on own log lifetime income, per age.
    pub lambda: Vec<f64>,
    pub lambda_se: Vec<f64>,
    /// Slope of annual log income on parent log income, per age.
    pub beta_t: Vec<f64>,
    pub beta_t_se: Vec<f64>,
    pub n_per_age: Vec<usize>,
    /// Age where lambda crosses 1 (linear interpolation between bracketing
    /// ages); absent when lambda never reaches 1.
    pub t_star: Option<f64>,
}

/// Estimate the per-age projection slopes.
///
/// Lifetime income is the stored truth when available, otherwise the log sum
/// of the person's observed level incomes (requires full profiles to be
/// meaningful).
pub fn geiv_diagnostics(panel: &Panel, ages: &[u16]) -> Result<GeivResult> {
    if ages.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 ages".into()));
    }
    // Lifetime and parent income per person.
    let lifetimes: Vec<Option<f64>> = (0..panel.n_persons())
        .map(|i| {
            panel.persons()[i].true_log_lifetime.or_else(|| {
                let obs = panel.obs_for(i);
                if obs.is_empty() || obs.iter().any(|o| o.income_level <= 0.0) {
                    None
                } else {
                    Some(obs.iter().map(|o| o.income_level).sum::<f64>().ln())
                }
            })
        })
        .collect();

    let mut lambda = Vec::with_capacity(ages.len());
    let mut lambda_se = Vec::with_capacity(ages.len());
    let mut beta_t = Vec::with_capacity(ages.len());
    let mut beta_t_se = Vec::with_capacity(ages.len());
    let mut n_per_age = Vec::with_capacity(ages.len());
    for &age in ages {
        let mut annual = Vec::new();
        let mut life = Vec::new();
        let mut parent = Vec::new();
        for i in 0..panel.n_persons() {
            let (Some(lt), Some(px)) = (lifetimes[i], panel.persons()[i].parent_log_income)
            else {
                continue;
            };
            if let Some(o) = panel.obs_for(i).iter().find(|o| o.age == age) {
                if o.income_level <= 0.0 {
                    continue;
                }
                annual.push(o.income_level.ln());
                life.push(lt);
                parent.push(px);
            }
        }
        if annual.len() < 3 {
            return Err(Error::EmptySample(format!("no usable observations at age {age}")));
        }
        let l = simple_ols(&life, &annual)?;
        let b = simple_ols(&parent, &annual)?;
        lambda.push(l.slope);
        lambda_se.push(l.se);
        beta_t.push(b.slope);
        beta_t_se.push(b.se);
        n_per_age.push(annual.len());
    }

    // First crossing of 1, interpolated between bracketing ages.
    let mut t_star = None;
    if lambda[0] >= 1.0 {
        t_star = Some(f64::from(ages[0]));
    } else {
        for k in 1..lambda.len() {
            if lambda[k - 1] < 1.0 && lambda[k] >= 1.0 {
                let frac = (1.0 - lambda[k - 1]) / (lambda[k] - lambda[k - 1]);
                t_star = Some(f64::from(ages[k - 1]) + frac * f64::from(ages[k] - ages[k - 1]));
                break;
            }
        }
    }

    Ok(GeivResult { ages: ages.to_vec(), lambda, lambda_se, beta_t, beta_t_se, n_per_age, t_star })
}
