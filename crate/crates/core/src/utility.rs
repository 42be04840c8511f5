//! The `(q, β)` family of spare-capacity utilities.
//!
//! `V(s) = q log s` for `β = 1` and `V(s) = q s^(1-β) / (1-β)` otherwise. The marginal
//! utility `V'(s) = q / s^β` doubles as the first link weight at optimality, so the link
//! subproblem `max V(s) - w s` is solved by inverting it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkId, Topology};

/// Named special cases with closed-form weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedObjective {
    /// `β = 1, q = 1`: weight `1 / (c - f)`.
    Proportional,
    /// `β = 2, q = c`: weight `c / (c - f)^2`.
    C2,
    /// `β = 0, q = d` (per-link delay): weight `d` on unsaturated links.
    D0,
}

/// Resolved utility parameters for one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    beta: f64,
    q: Vec<f64>,
    mode: Option<NamedObjective>,
}

impl UtilitySpec {
    pub fn new(beta: f64, q: Vec<f64>) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
        }
        if let Some(bad) = q.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
            return Err(Error::Domain(format!("q must be positive and finite, got {bad}")));
        }
        Ok(UtilitySpec { beta, q, mode: None })
    }

    /// `q_ij = 1` on every link.
    pub fn uniform(topo: &Topology, beta: f64) -> Result<Self> {
        Self::new(beta, vec![1.0; topo.num_links()])
    }

    pub fn named(topo: &Topology, mode: NamedObjective, delays: Option<&[f64]>) -> Result<Self> {
        let mut spec = match mode {
            NamedObjective::Proportional => Self::uniform(topo, 1.0)?,
            NamedObjective::C2 => Self::new(2.0, topo.capacities())?,
            NamedObjective::D0 => {
                let q = match delays {
                    Some(d) if d.len() == topo.num_links() => d.to_vec(),
                    Some(d) => {
                        return Err(Error::Domain(format!(
                            "{} delays given for {} links",
                            d.len(),
                            topo.num_links()
                        )))
                    }
                    None => vec![1.0; topo.num_links()],
                };
                Self::new(0.0, q)?
            }
        };
        spec.mode = Some(mode);
        Ok(spec)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn q(&self, l: LinkId) -> f64 {
        self.q[l.index()]
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    pub fn mode(&self) -> Option<NamedObjective> {
        self.mode
    }

    pub fn num_links(&self) -> usize {
        self.q.len()
    }

    /// `β > 0`, i.e. the utility is strictly concave and the spare optimum is unique.
    pub fn is_strict(&self) -> bool {
        self.beta > 0.0
    }

    /// `V_ij(s)`.
    pub fn utility(&self, l: LinkId, s: f64) -> Result<f64> {
        let q = self.q(l);
        if s <= 0.0 && self.beta >= 1.0 {
            return Err(Error::Domain(format!(
                "utility with beta {} undefined at spare {s}",
                self.beta
            )));
        }
        Ok(raw_utility(q, self.beta, s))
    }

    /// `V'_ij(s) = q / s^β`.
    pub fn marginal_utility(&self, l: LinkId, s: f64) -> Result<f64> {
        if self.beta == 0.0 {
            return Ok(self.q(l));
        }
        if !(s > 0.0) {
            return Err(Error::Domain(format!("marginal utility undefined at spare {s}")));
        }
        Ok(raw_marginal(self.q(l), self.beta, s))
    }

    /// `V''_ij(s) = -β q / s^(β+1)`.
    pub fn curvature(&self, l: LinkId, s: f64) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        -self.beta * self.q(l) * s.powf(-self.beta - 1.0)
    }

    /// `(V')^{-1}(w)` for `β > 0`, unclipped.
    pub fn inverse_marginal(&self, l: LinkId, w: f64) -> Result<f64> {
        if self.beta == 0.0 {
            return Err(Error::Domain("marginal utility is constant for beta = 0".into()));
        }
        if !(w > 0.0) {
            return Err(Error::Domain(format!("weight must be positive, got {w}")));
        }
        Ok(raw_inverse(self.q(l), self.beta, w))
    }

    /// Maximizer of `V(s) - w s` over `[0, cap]`.
    pub fn solve_link_subproblem(&self, l: LinkId, w: f64, cap: f64) -> Result<f64> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("link price must be positive, got {w}")));
        }
        if !(cap > 0.0) {
            return Err(Error::Domain(format!("capacity must be positive, got {cap}")));
        }
        Ok(self.spare_at_price(l, w, cap))
    }

    /// Same as [`Self::solve_link_subproblem`] but total: `w <= 0` yields `cap`, and the
    /// result never drops below the floor `1e-12 * cap` used to keep iterates finite.
    pub(crate) fn spare_at_price(&self, l: LinkId, w: f64, cap: f64) -> f64 {
        let q = self.q(l);
        if self.beta == 0.0 {
            return if w > q { 0.0 } else { cap };
        }
        if w <= 0.0 {
            return cap;
        }
        raw_inverse(q, self.beta, w).clamp(SPARE_FLOOR * cap, cap)
    }
}

/// Relative floor applied to spare capacities inside the dual iteration.
pub(crate) const SPARE_FLOOR: f64 = 1e-12;

fn raw_utility(q: f64, beta: f64, s: f64) -> f64 {
    if beta == 1.0 {
        q * s.ln()
    } else if beta == 0.0 {
        q * s
    } else {
        q * s.powf(1.0 - beta) / (1.0 - beta)
    }
}

fn raw_marginal(q: f64, beta: f64, s: f64) -> f64 {
    if beta == 1.0 {
        q / s
    } else {
        q * s.powf(-beta)
    }
}

fn raw_inverse(q: f64, beta: f64, w: f64) -> f64 {
    if beta == 1.0 {
        q / w
    } else {
        (q / w).powf(1.0 / beta)
    }
}

/// Closed-form optimal weight for the named objectives, given capacity `c`, load `f`
/// and per-link delay `d` (only used by [`NamedObjective::D0`]).
pub fn named_weight_formula(example: NamedObjective, c: f64, f: f64, d: f64) -> Result<f64> {
    match example {
        NamedObjective::Proportional | NamedObjective::C2 if f >= c => Err(Error::Domain(
            format!("load {f} saturates capacity {c}"),
        )),
        NamedObjective::Proportional => Ok(1.0 / (c - f)),
        NamedObjective::C2 => Ok(c / ((c - f) * (c - f))),
        NamedObjective::D0 => Ok(d),
    }
}
