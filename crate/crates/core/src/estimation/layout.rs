use crate::error::{Error, Result};
use crate::model::{ChangePointSupport, ItemParameters, StructuralParameters};

/// Floor used for `log(-gamma)` when a free change effect is exactly zero.
pub const LOG_GAMMA_FLOOR: f64 = -18.420680743952367; // ln(1e-8)

/// Position of every free parameter in the packed vector
/// `(d_1..d_J, a_1..a_J, g_{c+1}..g_J, alpha, beta)`.
///
/// With `constrain_gamma` the change effects are stored as
/// `g_j = log(-gamma_j)`, so `gamma_j = -exp(g_j)` stays negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    support: ChangePointSupport,
    constrain_gamma: bool,
}

/// A packed parameter vector plus any notes produced while packing.
#[derive(Debug, Clone, PartialEq)]
pub struct Packed {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ParameterLayout {
    pub fn new(support: ChangePointSupport, constrain_gamma: bool) -> Self {
        Self {
            support,
            constrain_gamma,
        }
    }

    pub fn support(&self) -> &ChangePointSupport {
        &self.support
    }

    pub fn constrain_gamma(&self) -> bool {
        self.constrain_gamma
    }

    fn n_items(&self) -> usize {
        self.support.n_items()
    }

    pub fn len(&self) -> usize {
        2 * self.n_items() + self.support.n_post_items() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn d(&self, j: usize) -> usize {
        j
    }

    pub fn a(&self, j: usize) -> usize {
        self.n_items() + j
    }

    /// Slot of the change effect of 0-based item `j`, for `j >= c`.
    pub fn g(&self, j: usize) -> usize {
        debug_assert!(j >= self.support.c());
        2 * self.n_items() + j - self.support.c()
    }

    pub fn alpha(&self) -> usize {
        self.len() - 2
    }

    pub fn beta(&self) -> usize {
        self.len() - 1
    }

    /// Whether `alpha` and `beta` have no influence on the likelihood.
    pub fn structural_inert(&self) -> bool {
        self.support.is_degenerate()
    }

    /// Slots holding item parameters (subject to the ridge penalty).
    pub fn item_slots(&self) -> std::ops::Range<usize> {
        0..self.alpha()
    }

    /// Number of parameters counted by information criteria: inert
    /// structural parameters do not count.
    pub fn n_free_parameters(&self) -> usize {
        if self.structural_inert() {
            2 * self.n_items()
        } else {
            self.len()
        }
    }

    pub fn pack(&self, items: &ItemParameters, structural: &StructuralParameters) -> Result<Packed> {
        items.validate_for(&self.support)?;
        let n = self.n_items();
        let mut values = Vec::with_capacity(self.len());
        let mut warnings = Vec::new();
        values.extend_from_slice(&items.d);
        values.extend_from_slice(&items.a);
        for j in self.support.c()..n {
            let gamma = items.gamma[j];
            if self.constrain_gamma {
                if gamma == 0.0 {
                    warnings.push(format!(
                        "item {}: zero change effect mapped to log-scale floor",
                        j + 1
                    ));
                    values.push(LOG_GAMMA_FLOOR);
                } else {
                    values.push((-gamma).ln());
                }
            } else {
                values.push(gamma);
            }
        }
        values.push(structural.alpha);
        values.push(structural.beta);
        Ok(Packed { values, warnings })
    }

    pub fn unpack(&self, values: &[f64]) -> Result<(ItemParameters, StructuralParameters)> {
        let (items, structural) = self.unpack_unchecked(values)?;
        let items = ItemParameters::new(items.d, items.a, items.gamma)?;
        let structural = StructuralParameters::new(structural.alpha, structural.beta)?;
        Ok((items, structural))
    }

    /// Unpacks without enforcing the sign or finiteness invariants; used for
    /// trial points inside the optimizer.
    pub(crate) fn unpack_unchecked(
        &self,
        values: &[f64],
    ) -> Result<(ItemParameters, StructuralParameters)> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "packed vector has length {}, layout expects {}",
                values.len(),
                self.len()
            )));
        }
        let n = self.n_items();
        let mut gamma = vec![0.0; n];
        for (j, slot) in gamma.iter_mut().enumerate().skip(self.support.c()) {
            let g = values[self.g(j)];
            *slot = if self.constrain_gamma { -g.exp() } else { g };
        }
        let items = ItemParameters {
            d: values[..n].to_vec(),
            a: values[n..2 * n].to_vec(),
            gamma,
        };
        let structural = StructuralParameters {
            alpha: values[self.alpha()],
            beta: values[self.beta()],
        };
        Ok((items, structural))
    }
}
