//! On-chip power from the input-line attenuation budget, mean intracavity
//! photon number, and per-resonator power series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{keys, FitGates, ResonanceFit};
use crate::units::{angular, dbm_to_watts, HBAR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetItem {
    pub label: String,
    pub loss_db: f64,
    #[serde(default)]
    pub note: String,
}

impl BudgetItem {
    pub fn new(label: &str, loss_db: f64, note: &str) -> Self {
        BudgetItem { label: label.to_string(), loss_db, note: note.to_string() }
    }
}

/// Itemized input-line loss between the source and the chip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttenuationBudget {
    pub items: Vec<BudgetItem>,
    pub total_db: f64,
    /// Attenuation applied to source powers.
    pub used_db: f64,
    pub used_overridden: bool,
}

impl AttenuationBudget {
    /// Budget whose applied attenuation defaults to the total rounded to the
    /// nearest dB.
    pub fn new(items: Vec<BudgetItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidInput("attenuation budget has no items".into()));
        }
        for it in &items {
            if !(it.loss_db.is_finite() && it.loss_db >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "budget item '{}' has loss {} dB; losses must be finite and >= 0",
                    it.label, it.loss_db
                )));
            }
        }
        let total_db = items.iter().map(|i| i.loss_db).sum::<f64>();
        Ok(AttenuationBudget { items, total_db, used_db: total_db.round(), used_overridden: false })
    }

    pub fn with_used_db(mut self, used_db: f64) -> Result<Self> {
        if !used_db.is_finite() {
            return Err(Error::InvalidInput(format!("used attenuation {used_db} dB is not finite")));
        }
        self.used_db = used_db;
        self.used_overridden = true;
        Ok(self)
    }

    /// The budget shifted by `delta_db` of applied attenuation.
    pub fn shifted(&self, delta_db: f64) -> Result<Self> {
        self.clone().with_used_db(self.used_db + delta_db)
    }

    /// Input line of the primary cooldown, itemized.
    pub fn reference_input_line() -> Self {
        Self::new(vec![
            BudgetItem::new("Direct Attenuators", 62.0, "Fixed value (sum of discrete cryogenic attenuators)"),
            BudgetItem::new("RLC F-30-8000-R LPF", 0.35, "Spec: 0.35 dB max"),
            BudgetItem::new("Eccosorb IR Filter", 2.0, "Spec: <1.8 dB at 10 GHz (4 K)"),
            BudgetItem::new("Room-Temp Coax", 3.0, "3-4 m cables plus connectors"),
            BudgetItem::new("Bluefors Internal Coax", 2.0, ""),
        ])
        .expect("static budget is valid")
    }
}

/// `p_source − used_db`, in dBm.
pub fn chip_power(p_source_dbm: f64, budget: &AttenuationBudget) -> f64 {
    p_source_dbm - budget.used_db
}

/// Mean photon number `2 P Ql² / (ħ ωr² |Qe|)`.
pub fn photon_number(p_chip_w: f64, f_r: f64, q_loaded: f64, q_external_mag: f64) -> f64 {
    let w = angular(f_r);
    2.0 * p_chip_w * q_loaded * q_loaded / (HBAR * w * w * q_external_mag)
}

/// One drive power of a power series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub p_source_dbm: f64,
    pub p_chip_dbm: f64,
    pub n_bar: f64,
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_external_mag: f64,
    pub q_internal: f64,
    /// One-sigma uncertainty of `q_internal`, when known.
    pub q_internal_sigma: Option<f64>,
    /// The resonance fit this point came from.
    #[serde(skip)]
    pub fit: Option<ResonanceFit>,
}

impl PowerPoint {
    pub fn from_fit(p_source_dbm: f64, fit: &ResonanceFit, budget: &AttenuationBudget) -> Result<Self> {
        let p_chip_dbm = chip_power(p_source_dbm, budget);
        let p = fit.params;
        let sigma = fit.sigma_of(keys::Q_INTERNAL);
        Ok(PowerPoint {
            p_source_dbm,
            p_chip_dbm,
            n_bar: photon_number(dbm_to_watts(p_chip_dbm)?, p.f_r, p.q_loaded, p.q_external_mag),
            f_r: p.f_r,
            q_loaded: p.q_loaded,
            q_external_mag: p.q_external_mag,
            q_internal: fit.q_internal,
            q_internal_sigma: (sigma.is_finite() && sigma > 0.0).then_some(sigma),
            fit: Some(fit.clone()),
        })
    }

    /// A point given directly by photon number and internal Q.
    pub fn from_loss(n_bar: f64, q_internal: f64, q_internal_sigma: Option<f64>) -> Self {
        PowerPoint {
            p_source_dbm: f64::NAN,
            p_chip_dbm: f64::NAN,
            n_bar,
            f_r: f64::NAN,
            q_loaded: f64::NAN,
            q_external_mag: f64::NAN,
            q_internal,
            q_internal_sigma,
            fit: None,
        }
    }

    pub fn inverse_q(&self) -> f64 {
        1.0 / self.q_internal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedFit {
    pub p_source_dbm: f64,
    pub reason: String,
}

/// Power points of one resonator, ascending in photon number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSeries {
    pub resonator_id: String,
    points: Vec<PowerPoint>,
    pub f_r_median: f64,
    pub rejected: Vec<RejectedFit>,
}

impl PowerSeries {
    pub fn new(resonator_id: &str) -> Self {
        PowerSeries {
            resonator_id: resonator_id.to_string(),
            points: Vec::new(),
            f_r_median: f64::NAN,
            rejected: Vec::new(),
        }
    }

    pub fn from_points(resonator_id: &str, points: impl IntoIterator<Item = PowerPoint>) -> Self {
        let mut s = Self::new(resonator_id);
        for p in points {
            s.insert(p);
        }
        s
    }

    /// Inserts keeping ascending `n_bar`; equal photon numbers keep
    /// insertion order.
    pub fn insert(&mut self, p: PowerPoint) {
        let at = self.points.partition_point(|q| q.n_bar <= p.n_bar);
        self.points.insert(at, p);
        self.f_r_median = median(self.points.iter().map(|p| p.f_r).filter(|f| f.is_finite()));
    }

    pub fn points(&self) -> &[PowerPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_bar_range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.n_bar, self.points.last()?.n_bar))
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn build_power_series(fits: &[(f64, ResonanceFit)], budget: &AttenuationBudget, id: &str) -> Result<PowerSeries> {
    build_power_series_with(fits, budget, id, &FitGates::default())
}

/// Power series from `(source power, fit)` pairs. Fits failing `gates` are
/// kept in [`PowerSeries::rejected`] with the reason.
pub fn build_power_series_with(
    fits: &[(f64, ResonanceFit)],
    budget: &AttenuationBudget,
    id: &str,
    gates: &FitGates,
) -> Result<PowerSeries> {
    let mut series = PowerSeries::new(id);
    for (p_source, fit) in fits {
        if let Some(reason) = fit.gate_failure(gates) {
            log::info!("{id}: rejecting fit at {p_source} dBm: {reason}");
            series.rejected.push(RejectedFit { p_source_dbm: *p_source, reason });
            continue;
        }
        series.insert(PowerPoint::from_fit(*p_source, fit, budget)?);
    }
    if series.len() < gates.min_series_points {
        return Err(Error::InsufficientSeries(format!(
            "{id}: {} accepted fits, need {}",
            series.len(),
            gates.min_series_points
        )));
    }
    let (lo, hi) = series
        .points
        .iter()
        .map(|p| p.p_source_dbm)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p), b.max(p)));
    if hi - lo < gates.min_series_span_db {
        return Err(Error::InsufficientSeries(format!(
            "{id}: accepted powers span {:.1} dB, need {}",
            hi - lo,
            gates.min_series_span_db
        )));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_budget() {
        let b = AttenuationBudget::reference_input_line();
        assert_eq!(b.total_db, 69.35);
        assert_eq!(b.used_db, 69.0);
        assert!(!b.used_overridden);
        assert_eq!(chip_power(-80.0, &b), -149.0);
        let zero = AttenuationBudget::new(vec![BudgetItem::new("none", 0.0, "")]).unwrap();
        assert_eq!(chip_power(0.0, &zero), 0.0);
    }

    #[test]
    fn budget_validation() {
        assert!(AttenuationBudget::new(vec![]).is_err());
        assert!(AttenuationBudget::new(vec![BudgetItem::new("x", -1.0, "")]).is_err());
        let b = AttenuationBudget::reference_input_line().with_used_db(72.0).unwrap();
        assert!(b.used_overridden);
        assert_eq!(b.total_db, 69.35);
    }

    #[test]
    fn photon_number_examples() {
        let p = dbm_to_watts(-149.0).unwrap();
        let n = photon_number(p, 5.5e9, 9.5238e4, 1.0e5);
        assert_relative_eq!(n, 1.8, max_relative = 0.02);
        assert_relative_eq!(photon_number(2.0 * p, 5.5e9, 9.5238e4, 1.0e5), 2.0 * n, max_relative = 1e-15);
        assert_relative_eq!(photon_number(p, 5.5e9, 9.5238e4 / 2.0, 1.0e5), n / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn insertion_keeps_order() {
        let mut s = PowerSeries::new("r");
        for n in [5.0, 1.0, 3.0, 3.0, 10.0, 0.5] {
            s.insert(PowerPoint::from_loss(n, 1e6, None));
            assert!(s.points().windows(2).all(|w| w[0].n_bar <= w[1].n_bar));
        }
        assert_eq!(s.len(), 6);
    }
}
