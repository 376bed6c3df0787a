//! Multi-index bookkeeping shared by jets, Taylor series and the Wick algebra.
//!
//! A multi-index over `dim` variables is a `Vec<u8>` of exponents.  All
//! enumeration is graded-lexicographic so that every consumer iterates in the
//! same deterministic order.

pub type MIdx = Vec<u8>;

/// Total degree |t|.
pub fn degree(t: &[u8]) -> usize {
    t.iter().map(|&e| e as usize).sum()
}

/// All multi-indices over `dim` variables with total degree exactly `deg`,
/// in lexicographic order.
pub fn of_degree(dim: usize, deg: usize) -> Vec<MIdx> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; dim];
    fill(dim, deg, 0, &mut cur, &mut out);
    out
}

fn fill(dim: usize, rem: usize, pos: usize, cur: &mut MIdx, out: &mut Vec<MIdx>) {
    if pos == dim - 1 {
        cur[pos] = rem as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=rem).rev() {
        cur[pos] = k as u8;
        fill(dim, rem - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// All multi-indices with total degree <= `max_deg`, graded-lex order.
pub fn up_to(dim: usize, max_deg: usize) -> Vec<MIdx> {
    let mut out = Vec::new();
    for d in 0..=max_deg {
        out.extend(of_degree(dim, d));
    }
    out
}

/// Componentwise sum.
pub fn add(a: &[u8], b: &[u8]) -> MIdx {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// Componentwise difference, `None` if any component would go negative.
pub fn sub(a: &[u8], b: &[u8]) -> Option<MIdx> {
    let mut out = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        if y > x {
            return None;
        }
        out.push(x - y);
    }
    Some(out)
}

/// Unit multi-index e_axis.
pub fn unit(dim: usize, axis: usize) -> MIdx {
    let mut t = vec![0u8; dim];
    t[axis] = 1;
    t
}

/// t! = prod_i (t_i)!
pub fn factorial(t: &[u8]) -> f64 {
    let mut f = 1.0;
    for &e in t {
        for k in 2..=(e as u64) {
            f *= k as f64;
        }
    }
    f
}
