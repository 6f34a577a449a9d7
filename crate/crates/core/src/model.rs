//! Domain types shared by every stage of the pipeline and the change-point
//! item response function.
//!
//! Item and change-point indices are 1-based in every public signature
//! (item `j` runs over `1..=J`, a change-point `tau` over `c..=J`). Storage is
//! 0-based, so item `j` lives at slot `j - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for either sign of `x`.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(logistic(x))`, finite for every finite `x`.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Binary response data: one row per respondent, one column per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMatrix {
    n_persons: usize,
    n_items: usize,
    entries: Vec<u8>,
}

impl ResponseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(n_persons: usize, n_items: usize, entries: Vec<u8>) -> Result<Self> {
        if n_persons < 1 {
            return Err(Error::invalid("response matrix needs at least one respondent"));
        }
        if n_items < 2 {
            return Err(Error::invalid("response matrix needs at least two items"));
        }
        if entries.len() != n_persons * n_items {
            return Err(Error::invalid(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                n_persons * n_items,
                n_persons,
                n_items,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|&y| y > 1) {
            return Err(Error::invalid(format!(
                "entry ({}, {}) is {}, expected 0 or 1",
                pos / n_items + 1,
                pos % n_items + 1,
                entries[pos]
            )));
        }
        Ok(Self {
            n_persons,
            n_items,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_items = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != n_items) {
            return Err(Error::invalid(format!(
                "row {} has {} entries, expected {}",
                i + 1,
                rows[i].len(),
                n_items
            )));
        }
        Self::new(rows.len(), n_items, rows.concat())
    }

    pub fn n_persons(&self) -> usize {
        self.n_persons
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Responses of respondent `i` (0-based row).
    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.n_items..(i + 1) * self.n_items]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.entries.chunks_exact(self.n_items)
    }

    /// Entry for 0-based row `i` and 0-based column `j`.
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n_items + j]
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Proportion correct per item.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0usize; self.n_items];
        for row in self.rows() {
            for (s, &y) in sums.iter_mut().zip(row) {
                *s += y as usize;
            }
        }
        sums.into_iter()
            .map(|s| s as f64 / self.n_persons as f64)
            .collect()
    }

    /// Copy with rows reordered so that new row `r` is old row `order[r]`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_persons {
            return Err(Error::invalid("permutation length differs from row count"));
        }
        let mut entries = Vec::with_capacity(self.entries.len());
        for &i in order {
            entries.extend_from_slice(self.row(i));
        }
        Self::new(self.n_persons, self.n_items, entries)
    }
}

/// Earliest change-point `c` and test length `J`; the support of the
/// change-point is `{c, ..., J}` and `c == J` is the no-change model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangePointSupport {
    c: usize,
    n_items: usize,
}

impl ChangePointSupport {
    pub fn new(c: usize, n_items: usize) -> Result<Self> {
        if c < 1 || c > n_items {
            return Err(Error::invalid(format!(
                "earliest change-point {c} outside 1..={n_items}"
            )));
        }
        Ok(Self { c, n_items })
    }

    /// The no-change support `{J}`.
    pub fn baseline(n_items: usize) -> Result<Self> {
        Self::new(n_items, n_items)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of support points, `J - c + 1`.
    pub fn len(&self) -> usize {
        self.n_items - self.c + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_degenerate(&self) -> bool {
        self.c == self.n_items
    }

    /// Number of items that can carry a change effect, `J - c`.
    pub fn n_post_items(&self) -> usize {
        self.n_items - self.c
    }

    pub fn points(&self) -> std::ops::RangeInclusive<usize> {
        self.c..=self.n_items
    }

    pub fn contains(&self, tau: usize) -> bool {
        tau >= self.c && tau <= self.n_items
    }

    /// Position of `tau` within the support, if present.
    pub fn index_of(&self, tau: usize) -> Option<usize> {
        self.contains(tau).then(|| tau - self.c)
    }
}

/// Change-point hazard log-odds `alpha` and no-change logit `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralParameters {
    pub alpha: f64,
    pub beta: f64,
}

impl StructuralParameters {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::invalid("structural parameters must be finite"));
        }
        Ok(Self { alpha, beta })
    }
}

/// Per-item easiness `d`, discrimination `a` and change effect `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters {
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ItemParameters {
    pub fn new(d: Vec<f64>, a: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let items = Self { d, a, gamma };
        items.check_shape()?;
        Ok(items)
    }

    /// Items with no change effect anywhere.
    pub fn baseline(d: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let gamma = vec![0.0; d.len()];
        Self::new(d, a, gamma)
    }

    pub fn n_items(&self) -> usize {
        self.d.len()
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.d.len();
        if self.a.len() != n || self.gamma.len() != n {
            return Err(Error::invalid(format!(
                "item parameter lengths differ: d {}, a {}, gamma {}",
                n,
                self.a.len(),
                self.gamma.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.d) || !finite(&self.a) || !finite(&self.gamma) {
            return Err(Error::invalid("item parameters must be finite"));
        }
        if let Some(j) = self.gamma.iter().position(|&g| g > 0.0) {
            return Err(Error::invalid(format!(
                "change effect of item {} is positive ({})",
                j + 1,
                self.gamma[j]
            )));
        }
        Ok(())
    }

    /// Checks the shape invariants plus the support-dependent ones:
    /// one entry per item and no change effect on items `1..=c`.
    pub fn validate_for(&self, support: &ChangePointSupport) -> Result<()> {
        self.check_shape()?;
        if self.n_items() != support.n_items() {
            return Err(Error::invalid(format!(
                "{} item parameters for a {}-item support",
                self.n_items(),
                support.n_items()
            )));
        }
        if let Some(j) = self.gamma[..support.c()].iter().position(|&g| g != 0.0) {
            return Err(Error::invalid(format!(
                "item {} precedes the earliest change-point {} but has change effect {}",
                j + 1,
                support.c(),
                self.gamma[j]
            )));
        }
        Ok(())
    }

    /// Linear predictor of item `j` (0-based) at ability `theta`.
    #[inline]
    pub(crate) fn predictor(&self, j: usize, theta: f64, post_change: bool) -> f64 {
        let base = self.d[j] + self.a[j] * theta;
        if post_change {
            base + self.gamma[j]
        } else {
            base
        }
    }
}

/// Probability of a correct response.
pub fn irf(d: f64, a: f64, gamma: f64, theta: f64, post_change: bool) -> Result<f64> {
    if !(d.is_finite() && a.is_finite() && gamma.is_finite() && theta.is_finite()) {
        return Err(Error::invalid("item response function needs finite inputs"));
    }
    if gamma > 0.0 {
        return Err(Error::invalid(format!("change effect {gamma} is positive")));
    }
    let eta = if post_change {
        d + a * theta + gamma
    } else {
        d + a * theta
    };
    Ok(logistic(eta))
}

/// Bernoulli log-mass of response `y` under success probability `prob`.
pub fn response_logmass(prob: f64, y: u8) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!(
            "probability {prob} outside the open unit interval"
        )));
    }
    match y {
        1 => Ok(prob.ln()),
        0 => Ok((-prob).ln_1p()),
        _ => Err(Error::invalid(format!("response {y} is not binary"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn irf_examples() {
        assert_eq!(irf(0.0, 1.0, -1.0, 0.0, false).unwrap(), 0.5);
        assert_abs_diff_eq!(irf(0.0, 1.0, -1.0, 0.0, true).unwrap(), 0.268941, epsilon = 1e-6);
        assert_abs_diff_eq!(irf(0.5, 2.0, 0.0, 1.0, true).unwrap(), 0.924142, epsilon = 1e-6);
    }

    #[test]
    fn irf_rejects_bad_input() {
        assert!(irf(f64::NAN, 1.0, 0.0, 0.0, false).is_err());
        assert!(irf(0.0, 1.0, 0.0, f64::INFINITY, false).is_err());
        assert!(irf(0.0, 1.0, 0.5, 0.0, true).is_err());
    }

    #[test]
    fn logmass_examples() {
        assert_abs_diff_eq!(response_logmass(0.5, 1).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(response_logmass(0.5, 0).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(response_logmass(logistic(-1.0), 1).unwrap(), -1.313262, epsilon = 1e-6);
        assert!(response_logmass(0.0, 1).is_err());
        assert!(response_logmass(1.0, 0).is_err());
        assert!(response_logmass(0.3, 2).is_err());
    }

    #[test]
    fn log_logistic_is_finite_in_the_tails() {
        assert!(log_logistic(-800.0).is_finite());
        assert_abs_diff_eq!(log_logistic(-800.0), -800.0, epsilon = 1e-12);
        assert_eq!(log_logistic(800.0), 0.0);
        assert!(log_logistic(-800.0).is_finite());
    }

    #[test]
    fn response_matrix_validation() {
        assert!(ResponseMatrix::new(0, 2, vec![]).is_err());
        assert!(ResponseMatrix::new(1, 1, vec![1]).is_err());
        assert!(ResponseMatrix::new(1, 2, vec![1, 2]).is_err());
        assert!(ResponseMatrix::from_rows(&[vec![1, 0], vec![1]]).is_err());
        let m = ResponseMatrix::from_rows(&[vec![1, 0, 1], vec![0, 0, 1]]).unwrap();
        assert_eq!((m.n_persons(), m.n_items()), (2, 3));
        assert_eq!(m.row(1), &[0, 0, 1]);
        assert_eq!(m.column_means(), vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn support_bounds() {
        assert!(ChangePointSupport::new(0, 5).is_err());
        assert!(ChangePointSupport::new(6, 5).is_err());
        let s = ChangePointSupport::new(3, 5).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.index_of(5), Some(2));
        assert_eq!(s.index_of(2), None);
        assert!(ChangePointSupport::baseline(5).unwrap().is_degenerate());
    }

    #[test]
    fn item_invariants() {
        let s = ChangePointSupport::new(1, 2).unwrap();
        assert!(ItemParameters::new(vec![0.0], vec![1.0, 1.0], vec![0.0]).is_err());
        assert!(ItemParameters::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.1]).is_err());
        let items = ItemParameters::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, 0.0]).unwrap();
        assert!(items.validate_for(&s).is_err());
    }

    proptest! {
        #[test]
        fn change_effect_lowers_success(d in -5.0..5.0f64, a in -3.0..3.0f64,
                                        theta in -4.0..4.0f64, gamma in -4.0..-1e-3f64) {
            let pre = irf(d, a, gamma, theta, false).unwrap();
            let post = irf(d, a, gamma, theta, true).unwrap();
            prop_assert!(post < pre);
        }

        #[test]
        fn increasing_in_ability(d in -4.0..4.0f64, a in 0.05..3.0f64, gamma in -3.0..0.0f64,
                                 theta in -4.0..4.0f64, step in 0.01..1.0f64, post in any::<bool>()) {
            let lo = irf(d, a, gamma, theta, post).unwrap();
            let hi = irf(d, a, gamma, theta + step, post).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn zero_effect_is_neutral(d in -5.0..5.0f64, a in -3.0..3.0f64, theta in -4.0..4.0f64) {
            prop_assert_eq!(irf(d, a, 0.0, theta, true).unwrap(), irf(d, a, 0.0, theta, false).unwrap());
        }

        #[test]
        fn logmass_complement(p in 1e-9..(1.0 - 1e-9f64)) {
            let total = response_logmass(p, 1).unwrap().exp() + response_logmass(p, 0).unwrap().exp();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
