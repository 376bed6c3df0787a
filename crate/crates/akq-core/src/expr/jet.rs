//! Jets: all partial derivatives of an expression up to a requested order at
//! a point, computed by repeated symbolic differentiation then evaluation.

use super::{DomainError, Expr};
use crate::multi_index::{self, MIdx};
use std::collections::BTreeMap;

/// All partials of total order <= `order` at `base`, stored once per sorted
/// multi-index (mixed partials are symmetric by construction).
#[derive(Debug, Clone)]
pub struct Jet {
    pub base: Vec<f64>,
    pub order: usize,
    /// multi-index -> derivative value (not divided by t!)
    pub vals: BTreeMap<MIdx, f64>,
}

impl Jet {
    /// Compute the jet of `e` at `u` (slice of length dim) up to `order`.
    pub fn of(e: &Expr, u: &[f64], order: usize) -> Result<Jet, DomainError> {
        let dim = u.len();
        let mut deriv_cache: BTreeMap<MIdx, Expr> = BTreeMap::new();
        deriv_cache.insert(vec![0u8; dim], e.simplify());
        let mut vals = BTreeMap::new();
        for t in multi_index::up_to(dim, order) {
            let expr = if multi_index::degree(&t) == 0 {
                deriv_cache[&t].clone()
            } else {
                // differentiate the parent along the first nonzero axis
                let axis = t.iter().position(|&c| c > 0).unwrap();
                let mut parent = t.clone();
                parent[axis] -= 1;
                let d = deriv_cache[&parent].diff(axis);
                deriv_cache.insert(t.clone(), d.clone());
                d
            };
            vals.insert(t, expr.eval(u)?);
        }
        Ok(Jet {
            base: u.to_vec(),
            order,
            vals,
        })
    }

    pub fn value(&self) -> f64 {
        self.vals[&vec![0u8; self.base.len()]]
    }

    pub fn get(&self, t: &[u8]) -> Option<f64> {
        self.vals.get(t).copied()
    }
}
