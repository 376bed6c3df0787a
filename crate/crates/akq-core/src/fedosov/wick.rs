//! Sparse graded elements of the formal Wick algebra W (x) Lambda over a base
//! point, and the fiberwise operators delta, delta^{-1}, sigma and the formal
//! Wick product.
//!
//! A key holds the v-power, the z-multi-index over the 2n fiber variables,
//! the strictly increasing coframe index tuple, and a u-jet multi-index; the
//! value is a complex Taylor coefficient (derivative over t!).  The gradings
//! are deg_v = r, deg_s = |z|, deg_a = |q| and Deg = 2 deg_v + deg_s; keys
//! above the Deg cap or the jet budget are dropped at insertion.

use crate::forms::sort_signed;
use crate::multi_index::{self, MIdx};
use crate::taylor::Series;
use num_complex::Complex64;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WickError {
    #[error("cap mismatch: {0}")]
    CapMismatch(String),
    #[error("jet budget exhausted")]
    JetExhausted,
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
}

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WKey {
    /// formal parameter power (deg_v)
    pub v: u8,
    /// z-multi-index over the 2n fiber variables (deg_s = |z|)
    pub z: MIdx,
    /// strictly increasing coframe indices (deg_a = |q|)
    pub q: Vec<u8>,
    /// u-jet multi-index (Taylor data)
    pub t: MIdx,
}

impl WKey {
    pub fn scalar(dim: usize) -> WKey {
        WKey {
            v: 0,
            z: vec![0; dim],
            q: vec![],
            t: vec![0; dim],
        }
    }

    pub fn deg(&self) -> usize {
        2 * self.v as usize + multi_index::degree(&self.z)
    }
}

#[derive(Debug, Clone)]
pub struct WickElement {
    pub dim: usize,
    /// total-degree cap on Deg = 2 deg_v + deg_s
    pub deg_cap: usize,
    /// remaining jet depth: keys satisfy |t| <= jet_budget
    pub jet_budget: usize,
    pub c: BTreeMap<WKey, Complex64>,
}

impl WickElement {
    pub fn zero(dim: usize, deg_cap: usize, jet_budget: usize) -> WickElement {
        WickElement {
            dim,
            deg_cap,
            jet_budget,
            c: BTreeMap::new(),
        }
    }

    /// A scalar (z-free, form-free) element from a Taylor series.
    pub fn from_series(s: &Series, deg_cap: usize, jet_budget: usize) -> WickElement {
        let mut out = WickElement::zero(s.dim, deg_cap, jet_budget);
        for (t, v) in &s.c {
            if multi_index::degree(t) <= jet_budget {
                out.c.insert(
                    WKey {
                        v: 0,
                        z: vec![0; s.dim],
                        q: vec![],
                        t: t.clone(),
                    },
                    *v,
                );
            }
        }
        out
    }

    pub fn insert_acc(&mut self, k: WKey, v: Complex64) {
        if v == ZERO {
            return;
        }
        if k.deg() > self.deg_cap
            || k.q.len() > self.dim
            || multi_index::degree(&k.t) > self.jet_budget
        {
            return;
        }
        let slot = self.c.entry(k).or_insert(ZERO);
        *slot += v;
        // exact zeros are removed lazily by prune()
    }

    pub fn prune(&mut self) {
        self.c.retain(|_, v| *v != ZERO);
    }

    pub fn is_empty(&self) -> bool {
        self.c.values().all(|v| *v == ZERO)
    }

    pub fn add(&self, o: &WickElement) -> WickElement {
        let mut out = self.clone();
        out.deg_cap = self.deg_cap.min(o.deg_cap);
        out.jet_budget = self.jet_budget.min(o.jet_budget);
        out.c.retain(|k, _| {
            k.deg() <= out.deg_cap && multi_index::degree(&k.t) <= out.jet_budget
        });
        for (k, v) in &o.c {
            out.insert_acc(k.clone(), *v);
        }
        out.prune();
        out
    }

    pub fn sub(&self, o: &WickElement) -> WickElement {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, k: Complex64) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        if k == ZERO {
            return out;
        }
        for (key, v) in &self.c {
            out.c.insert(key.clone(), v * k);
        }
        out
    }

    /// Multiply by i/v: shifts every v-power down by one.  Panics if a v^0
    /// key survives, which the graded-commutator call sites exclude
    /// structurally.
    pub fn mul_i_over_v(&self) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (key, v) in &self.c {
            assert!(key.v > 0, "i/v applied to an element with a v^0 term");
            let mut k = key.clone();
            k.v -= 1;
            // Deg drops by 2, always within cap
            out.c.insert(k, v * I);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.c.values().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// Max-abs coefficient difference over keys with jet depth <= tmax and
    /// Deg <= degmax.
    pub fn max_abs_diff_within(&self, o: &WickElement, tmax: usize, degmax: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let mut seen = std::collections::BTreeSet::new();
        for (k, v) in &self.c {
            if multi_index::degree(&k.t) > tmax || k.deg() > degmax {
                continue;
            }
            let w = o.c.get(k).copied().unwrap_or(ZERO);
            worst = worst.max((v - w).norm());
            seen.insert(k.clone());
        }
        for (k, w) in &o.c {
            if multi_index::degree(&k.t) > tmax || k.deg() > degmax || seen.contains(k) {
                continue;
            }
            worst = worst.max(w.norm());
        }
        worst
    }

    /// Deg-homogeneous component.
    pub fn component(&self, deg: usize) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (k, v) in &self.c {
            if k.deg() == deg {
                out.c.insert(k.clone(), *v);
            }
        }
        out
    }

    /// delta(a) = e^alpha ^ d a / d z^alpha (deg_s down, deg_a up).
    pub fn delta(&self) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (k, v) in &self.c {
            for alpha in 0..self.dim {
                if k.z[alpha] == 0 {
                    continue;
                }
                let mut idx = vec![alpha as u8];
                idx.extend_from_slice(&k.q);
                if let Some((sign, q)) = sort_signed(&idx) {
                    let mut z = k.z.clone();
                    z[alpha] -= 1;
                    out.insert_acc(
                        WKey {
                            v: k.v,
                            z,
                            q,
                            t: k.t.clone(),
                        },
                        v * (k.z[alpha] as f64) * (sign as f64),
                    );
                }
            }
        }
        out.prune();
        out
    }

    /// delta^{-1}: on a (p, q)-bihomogeneous part with p + q > 0 it is
    /// z^alpha iota(e_alpha) / (p + q); zero on the scalar part.
    pub fn delta_inv(&self) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (k, v) in &self.c {
            let p = multi_index::degree(&k.z);
            let m = k.q.len();
            if p + m == 0 {
                continue;
            }
            let inv = 1.0 / (p + m) as f64;
            for (j, &alpha) in k.q.iter().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let mut z = k.z.clone();
                z[alpha as usize] += 1;
                let mut q = k.q.clone();
                q.remove(j);
                out.insert_acc(
                    WKey {
                        v: k.v,
                        z,
                        q,
                        t: k.t.clone(),
                    },
                    v * inv * sign,
                );
            }
        }
        out.prune();
        out
    }

    /// Projection onto the (deg_s, deg_a) = (0, 0) part.
    pub fn sigma(&self) -> WickElement {
        let mut out = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (k, v) in &self.c {
            if multi_index::degree(&k.z) == 0 && k.q.is_empty() {
                out.c.insert(k.clone(), *v);
            }
        }
        out
    }

    /// Scalar series (v-power -> Taylor map) of the sigma part.
    pub fn scalar_series(&self) -> BTreeMap<u8, BTreeMap<MIdx, Complex64>> {
        let mut out: BTreeMap<u8, BTreeMap<MIdx, Complex64>> = BTreeMap::new();
        for (k, v) in &self.c {
            if multi_index::degree(&k.z) == 0 && k.q.is_empty() && *v != ZERO {
                out.entry(k.v).or_default().insert(k.t.clone(), *v);
            }
        }
        out
    }

    /// Split by form-degree parity (even, odd).
    pub fn split_parity(&self) -> (WickElement, WickElement) {
        let mut even = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        let mut odd = WickElement::zero(self.dim, self.deg_cap, self.jet_budget);
        for (k, v) in &self.c {
            if k.q.len() % 2 == 0 {
                even.c.insert(k.clone(), *v);
            } else {
                odd.c.insert(k.clone(), *v);
            }
        }
        (even, odd)
    }
}

fn falling(s: u8, k: u8) -> f64 {
    let mut f = 1.0;
    for j in 0..k {
        f *= (s - j) as f64;
    }
    f
}

/// The formal Wick product with a lower bound on the number of pairings
/// (min_pairs = 0 is the full product; 1 skips the pointwise part, which the
/// graded commutators cancel structurally).
///
/// Pairings contract d/dz^alpha on the left factor with d/dz^beta on the
/// right against the jet of Lambda^{alpha beta}; each pairing raises the
/// v-power by one and multiplies by i/2.
pub fn wick_product_min(
    a: &WickElement,
    b: &WickElement,
    lambda: &[Vec<Series>],
    min_pairs: usize,
) -> Result<WickElement, WickError> {
    if a.dim != b.dim {
        return Err(WickError::CapMismatch(format!(
            "dim {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.deg_cap != b.deg_cap {
        return Err(WickError::CapMismatch(format!(
            "Deg cap {} vs {}",
            a.deg_cap, b.deg_cap
        )));
    }
    let dim = a.dim;
    let deg_cap = a.deg_cap;
    let budget = a.jet_budget.min(b.jet_budget);
    let mut out = WickElement::zero(dim, deg_cap, budget);
    for (ka, ca) in &a.c {
        for (kb, cb) in &b.c {
            let mut idx = ka.q.clone();
            idx.extend_from_slice(&kb.q);
            let (fsign, q) = match sort_signed(&idx) {
                None => continue,
                Some(s) => s,
            };
            let cells: Vec<(usize, usize)> = (0..dim)
                .flat_map(|al| (0..dim).map(move |be| (al, be)))
                .filter(|&(al, be)| ka.z[al] > 0 && kb.z[be] > 0)
                .collect();
            let mut st = PairState {
                lambda,
                cells: &cells,
                min_pairs,
                deg_cap,
                budget,
                base_v: ka.v as usize + kb.v as usize,
                base_t: multi_index::add(&ka.t, &kb.t),
                fsign,
                q: &q,
                za: ka.z.clone(),
                zb: kb.z.clone(),
                out: &mut out,
            };
            let mut unit = BTreeMap::new();
            unit.insert(vec![0u8; dim], Complex64::new(1.0, 0.0));
            st.walk(0, 0, ca * cb, &unit);
        }
    }
    out.prune();
    Ok(out)
}

struct PairState<'s> {
    lambda: &'s [Vec<Series>],
    cells: &'s [(usize, usize)],
    min_pairs: usize,
    deg_cap: usize,
    budget: usize,
    base_v: usize,
    base_t: MIdx,
    fsign: i32,
    q: &'s Vec<u8>,
    za: MIdx,
    zb: MIdx,
    out: &'s mut WickElement,
}

impl<'s> PairState<'s> {
    /// Walk the pairing matrices cell by cell; each complete assignment is
    /// emitted exactly once.
    fn walk(&mut self, ci: usize, pairs: usize, factor: Complex64, jet: &BTreeMap<MIdx, Complex64>) {
        if ci == self.cells.len() {
            self.emit(pairs, factor, jet);
            return;
        }
        // skip the cell
        self.walk(ci + 1, pairs, factor, jet);
        // contract through it 1..m times
        let (al, be) = self.cells[ci];
        let za0 = self.za[al];
        let zb0 = self.zb[be];
        let mut fac = factor;
        let mut jet_m = jet.clone();
        let mut m = 0u8;
        while self.za[al] > 0 && self.zb[be] > 0 {
            let za_left = self.za[al] as f64;
            let zb_left = self.zb[be] as f64;
            m += 1;
            fac = fac * Complex64::new(0.0, 0.5) * za_left * zb_left / (m as f64);
            let lam = &self.lambda[al][be];
            let mut next = BTreeMap::new();
            for (t1, c1) in &jet_m {
                for (t2, c2) in &lam.c {
                    let t = multi_index::add(t1, t2);
                    if multi_index::degree(&t) > self.budget {
                        continue;
                    }
                    let slot = next.entry(t).or_insert(ZERO);
                    *slot += c1 * c2;
                }
            }
            jet_m = next;
            if jet_m.is_empty() {
                break;
            }
            self.za[al] -= 1;
            self.zb[be] -= 1;
            let j = jet_m.clone();
            self.walk(ci + 1, pairs + m as usize, fac, &j);
        }
        self.za[al] = za0;
        self.zb[be] = zb0;
    }

    fn emit(&mut self, pairs: usize, factor: Complex64, jet: &BTreeMap<MIdx, Complex64>) {
        if pairs < self.min_pairs {
            return;
        }
        let v = self.base_v + pairs;
        let deg = 2 * v + multi_index::degree(&self.za) + multi_index::degree(&self.zb);
        if deg > self.deg_cap || v > u8::MAX as usize {
            return;
        }
        let mut z = self.za.clone();
        for (i, e) in self.zb.iter().enumerate() {
            z[i] += e;
        }
        for (tj, cj) in jet {
            let c = factor * cj * (self.fsign as f64);
            if c == ZERO {
                continue;
            }
            let t = multi_index::add(tj, &self.base_t);
            if multi_index::degree(&t) > self.budget {
                continue;
            }
            self.out.insert_acc(
                WKey {
                    v: v as u8,
                    z: z.clone(),
                    q: self.q.clone(),
                    t,
                },
                c,
            );
        }
    }
}

/// deg_a-graded Wick commutator ad(c)(x) = c o x - (-1)^{|c||x|} x o c,
/// with the zero-pairing parts skipped (they cancel identically).
pub fn ad_wick(
    c: &WickElement,
    x: &WickElement,
    lambda: &[Vec<Series>],
) -> Result<WickElement, WickError> {
    let (ce, co) = c.split_parity();
    let (xe, xo) = x.split_parity();
    let mut out = wick_product_min(c, x, lambda, 1)?;
    // (-1)^{|c||x|} x o c: sign -1 only for odd-odd
    if !xe.is_empty() && !ce.is_empty() {
        out = out.sub(&wick_product_min(&xe, &ce, lambda, 1)?);
    }
    if !xe.is_empty() && !co.is_empty() {
        out = out.sub(&wick_product_min(&xe, &co, lambda, 1)?);
    }
    if !xo.is_empty() && !ce.is_empty() {
        out = out.sub(&wick_product_min(&xo, &ce, lambda, 1)?);
    }
    if !xo.is_empty() && !co.is_empty() {
        out = out.add(&wick_product_min(&xo, &co, lambda, 1)?);
    }
    Ok(out)
}
