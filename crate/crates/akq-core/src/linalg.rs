//! Small dense matrix utilities: f64 matrices with Gauss-Jordan inversion and
//! a deterministic Jacobi symmetric eigensolver, plus symbolic matrices of
//! expressions with cofactor inversion.

use crate::expr::Expr;

/// Row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows);
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let v = self[(i, k)];
                if v == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    out[(i, j)] += v * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Gauss-Jordan inverse with partial pivoting; `None` if singular.
    pub fn inverse(&self) -> Option<Mat> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut aug = Mat::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)];
            }
            aug[(i, n + i)] = 1.0;
        }
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if aug[(r, col)].abs() > aug[(piv, col)].abs() {
                    piv = r;
                }
            }
            if aug[(piv, col)].abs() < 1e-300 {
                return None;
            }
            if piv != col {
                for j in 0..2 * n {
                    let tmp = aug[(col, j)];
                    aug[(col, j)] = aug[(piv, j)];
                    aug[(piv, j)] = tmp;
                }
            }
            let d = aug[(col, col)];
            for j in 0..2 * n {
                aug[(col, j)] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[(r, col)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..2 * n {
                    aug[(r, j)] -= f * aug[(col, j)];
                }
            }
        }
        Some(Mat::from_fn(n, n, |i, j| aug[(i, n + j)]))
    }

    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut m = self.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if m[(r, col)].abs() > m[(piv, col)].abs() {
                    piv = r;
                }
            }
            if m[(piv, col)] == 0.0 {
                return 0.0;
            }
            if piv != col {
                det = -det;
                for j in 0..n {
                    let tmp = m[(col, j)];
                    m[(col, j)] = m[(piv, j)];
                    m[(piv, j)] = tmp;
                }
            }
            det *= m[(col, col)];
            for r in col + 1..n {
                let f = m[(r, col)] / m[(col, col)];
                for j in col..n {
                    m[(r, j)] -= f * m[(col, j)];
                }
            }
        }
        det
    }

    /// Jacobi eigendecomposition of a symmetric matrix.  Returns
    /// (eigenvalues, eigenvector columns) sorted by descending eigenvalue,
    /// eigenvector signs fixed so the first component of largest magnitude
    /// is positive.  Fully deterministic.
    pub fn sym_eigen(&self) -> (Vec<f64>, Mat) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Mat::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
        let vals: Vec<f64> = idx.iter().map(|&i| a[(i, i)]).collect();
        let mut vecs = Mat::zeros(n, n);
        for (newc, &oldc) in idx.iter().enumerate() {
            // sign gauge: component of largest magnitude positive
            let mut best = 0;
            for r in 1..n {
                if v[(r, oldc)].abs() > v[(best, oldc)].abs() {
                    best = r;
                }
            }
            let sign = if v[(best, oldc)] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..n {
                vecs[(r, newc)] = sign * v[(r, oldc)];
            }
        }
        (vals, vecs)
    }

    /// Sylvester inertia (positives, negatives, zeros) with a relative cutoff.
    pub fn inertia(&self, tol: f64) -> (usize, usize, usize) {
        let (vals, _) = self.sym_eigen();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
        let mut p = 0;
        let mut q = 0;
        let mut z = 0;
        for v in vals {
            if v > tol * scale {
                p += 1;
            } else if v < -tol * scale {
                q += 1;
            } else {
                z += 1;
            }
        }
        (p, q, z)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.cols + j]
    }
}

// ---- symbolic matrices ------------------------------------------------------

pub type MatE = Vec<Vec<Expr>>;

pub fn mat_e_zeros(rows: usize, cols: usize) -> MatE {
    vec![vec![Expr::zero(); cols]; rows]
}

pub fn mat_e_identity(n: usize) -> MatE {
    let mut m = mat_e_zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Expr::one();
    }
    m
}

pub fn mat_e_mul(a: &MatE, b: &MatE) -> MatE {
    let rows = a.len();
    let inner = b.len();
    let cols = b[0].len();
    let mut out = mat_e_zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = Expr::zero();
            for k in 0..inner {
                acc = Expr::add(&acc, &Expr::mul(&a[i][k], &b[k][j]));
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Determinant by cofactor expansion (fine for the small dimensions here).
pub fn mat_e_det(m: &MatE) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    if n == 2 {
        return Expr::sub(
            &Expr::mul(&m[0][0], &m[1][1]),
            &Expr::mul(&m[0][1], &m[1][0]),
        );
    }
    let mut det = Expr::zero();
    for j in 0..n {
        let minor = minor_of(m, 0, j);
        let term = Expr::mul(&m[0][j], &mat_e_det(&minor));
        if j % 2 == 0 {
            det = Expr::add(&det, &term);
        } else {
            det = Expr::sub(&det, &term);
        }
    }
    det
}

fn minor_of(m: &MatE, row: usize, col: usize) -> MatE {
    let n = m.len();
    let mut out = Vec::with_capacity(n - 1);
    for i in 0..n {
        if i == row {
            continue;
        }
        let mut r = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == col {
                continue;
            }
            r.push(m[i][j].clone());
        }
        out.push(r);
    }
    out
}

/// Symbolic inverse through the adjugate; caller guards against the
/// determinant vanishing at evaluation points.
pub fn mat_e_inverse(m: &MatE) -> (MatE, Expr) {
    let n = m.len();
    let det = mat_e_det(m);
    let mut inv = mat_e_zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // adjugate: cofactor C_ji
            let minor = minor_of(m, j, i);
            let mut c = mat_e_det(&minor);
            if (i + j) % 2 == 1 {
                c = Expr::neg(&c);
            }
            inv[i][j] = Expr::div(&c, &det);
        }
    }
    (inv, det)
}

pub fn mat_e_eval(m: &MatE, u: &[f64]) -> Result<Mat, crate::expr::DomainError> {
    let rows = m.len();
    let cols = m[0].len();
    let mut out = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = m[i][j].eval(u)?;
        }
    }
    Ok(out)
}
