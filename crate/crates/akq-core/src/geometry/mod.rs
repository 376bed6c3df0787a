//! Canonical geometry of a 2+2 (more generally n+n) splitting: Hessian
//! metric, semispray, nonlinear connection, adapted frames, nonholonomy,
//! Sasaki-type metric, almost complex and almost symplectic structures.
//!
//! All tensor components are kept as symbolic expressions of the 2n
//! coordinates; point evaluation and jet extraction happen at the edges.

use crate::expr::{DomainError, Expr, Point};
use crate::linalg::{mat_e_eval, mat_e_inverse, mat_e_zeros, Mat, MatE};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("degenerate Hessian: |det| = {det:.3e} <= tol {tol:.3e}")]
    DegenerateHessian { det: f64, tol: f64 },
    #[error("degenerate metric block: |det| = {det:.3e} <= tol {tol:.3e}")]
    DegenerateMetric { det: f64, tol: f64 },
    #[error("v-v block of the 2-form is rank deficient")]
    RankDeficient,
    #[error("operation requires a generating function (Lagrange or Finsler mode)")]
    NotLagrange,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Relative degeneracy cutoff: |det| <= 1e-10 * (max |entry|)^n.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Input model: a generating function or an explicit N-adapted block metric.
#[derive(Debug, Clone)]
pub enum Model {
    Lagrange { n: usize, l: Expr },
    Finsler { n: usize, f: Expr, l: Expr },
    Metric { n: usize, g: MatE, h: MatE, nconn: MatE },
}

impl Model {
    pub fn lagrange(n: usize, l: Expr) -> Model {
        Model::Lagrange { n, l }
    }

    /// Finsler mode stores F and works with L = F^2.
    pub fn finsler(n: usize, f: Expr) -> Model {
        let l = Expr::mul(&f, &f);
        Model::Finsler { n, f, l }
    }

    pub fn metric(n: usize, g: MatE, h: MatE, nconn: MatE) -> Model {
        Model::Metric { n, g, h, nconn }
    }

    pub fn n(&self) -> usize {
        match self {
            Model::Lagrange { n, .. } | Model::Finsler { n, .. } | Model::Metric { n, .. } => *n,
        }
    }

    pub fn generating(&self) -> Option<&Expr> {
        match self {
            Model::Lagrange { l, .. } | Model::Finsler { l, .. } => Some(l),
            Model::Metric { .. } => None,
        }
    }

    pub fn is_lagrange_type(&self) -> bool {
        self.generating().is_some()
    }
}

/// All canonical fields of the model as symbolic tensors.
///
/// Index layout: coordinates are `u^0..u^{2n-1}` with the h-block first.
/// A v-index stored as `a in 0..n` refers to coordinate `n+a`.
#[derive(Debug, Clone)]
pub struct CanonicalFields {
    pub n: usize,
    /// v-block metric (Hessian in Lagrange mode)
    pub h_v: MatE,
    pub h_v_inv: MatE,
    pub h_v_det: Expr,
    /// h-block metric (equals `h_v` in Lagrange mode)
    pub g_h: MatE,
    pub g_h_inv: MatE,
    pub g_h_det: Expr,
    /// semispray coefficients G^a (Lagrange/Finsler mode only)
    pub spray: Option<Vec<Expr>>,
    /// N-connection coefficients N^a_i
    pub nconn: MatE,
    /// dn_dy[b][i][a] = d N^b_i / d y^a
    pub dn_dy: Vec<MatE>,
    /// N-connection curvature Omega^a_{ij}
    pub omega: Vec<MatE>,
    /// Liouville 1-form h-components (Lagrange mode): omega_i = 1/2 dL/dy^i
    pub liouville: Option<Vec<Expr>>,
    /// whether the model identifies g and h blocks (honest almost Kahler data)
    pub lagrange_identified: bool,
}

impl CanonicalFields {
    pub fn build(model: &Model) -> Result<CanonicalFields, GeomError> {
        let n = model.n();
        match model {
            Model::Lagrange { l, .. } | Model::Finsler { l, .. } => {
                // Hessian h_ab = 1/2 d^2 L / dy^a dy^b
                let mut h_v = mat_e_zeros(n, n);
                for a in 0..n {
                    let da = l.diff(n + a);
                    for b in 0..n {
                        h_v[a][b] = Expr::mul(&Expr::num(0.5), &da.diff(n + b));
                    }
                }
                let (h_v_inv, h_v_det) = mat_e_inverse(&h_v);
                // 2G^a = 1/2 h^{a i} ( d2L/dy^i dx^k y^k - dL/dx^i )
                let mut spray = Vec::with_capacity(n);
                for a in 0..n {
                    let mut acc = Expr::zero();
                    for i in 0..n {
                        let mut inner = Expr::neg(&l.diff(i));
                        let dyi = l.diff(n + i);
                        for k in 0..n {
                            inner = Expr::add(
                                &inner,
                                &Expr::mul(&dyi.diff(k), &Expr::var(n + k)),
                            );
                        }
                        acc = Expr::add(&acc, &Expr::mul(&h_v_inv[a][i], &inner));
                    }
                    spray.push(Expr::mul(&Expr::num(0.25), &acc));
                }
                // N^a_i = dG^a / dy^i
                let mut nconn = mat_e_zeros(n, n);
                for a in 0..n {
                    for i in 0..n {
                        nconn[a][i] = spray[a].diff(n + i);
                    }
                }
                let liouville = (0..n)
                    .map(|i| Expr::mul(&Expr::num(0.5), &l.diff(n + i)))
                    .collect();
                let mut cf = CanonicalFields {
                    n,
                    g_h: h_v.clone(),
                    g_h_inv: h_v_inv.clone(),
                    g_h_det: h_v_det.clone(),
                    h_v,
                    h_v_inv,
                    h_v_det,
                    spray: Some(spray),
                    nconn,
                    dn_dy: Vec::new(),
                    omega: Vec::new(),
                    liouville: Some(liouville),
                    lagrange_identified: true,
                };
                cf.finish();
                Ok(cf)
            }
            Model::Metric { g, h, nconn, .. } => {
                let (g_h_inv, g_h_det) = mat_e_inverse(g);
                let (h_v_inv, h_v_det) = mat_e_inverse(h);
                let mut cf = CanonicalFields {
                    n,
                    h_v: h.clone(),
                    h_v_inv,
                    h_v_det,
                    g_h: g.clone(),
                    g_h_inv,
                    g_h_det,
                    spray: None,
                    nconn: nconn.clone(),
                    dn_dy: Vec::new(),
                    omega: Vec::new(),
                    liouville: None,
                    lagrange_identified: false,
                };
                cf.finish();
                Ok(cf)
            }
        }
    }

    fn finish(&mut self) {
        let n = self.n;
        // dN/dy
        let mut dn_dy = Vec::with_capacity(n);
        for b in 0..n {
            let mut m = mat_e_zeros(n, n);
            for i in 0..n {
                for a in 0..n {
                    m[i][a] = self.nconn[b][i].diff(n + a);
                }
            }
            dn_dy.push(m);
        }
        // Omega^a_{ij} = dN^a_i/dx^j - dN^a_j/dx^i + N^b_i dN^a_j/dy^b - N^b_j dN^a_i/dy^b
        let mut omega = Vec::with_capacity(n);
        for a in 0..n {
            let mut m = mat_e_zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Expr::sub(&self.nconn[a][i].diff(j), &self.nconn[a][j].diff(i));
                    for b in 0..n {
                        acc = Expr::add(
                            &acc,
                            &Expr::mul(&self.nconn[b][i], &dn_dy[a][j][b]),
                        );
                        acc = Expr::sub(
                            &acc,
                            &Expr::mul(&self.nconn[b][j], &dn_dy[a][i][b]),
                        );
                    }
                    m[i][j] = acc;
                }
            }
            omega.push(m);
        }
        self.dn_dy = dn_dy;
        self.omega = omega;
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// N-adapted frame derivative of a scalar field:
    /// `e_alpha(f)` with `e_i = d/dx^i - N^a_i d/dy^a` and `e_{n+a} = d/dy^a`.
    pub fn frame_diff(&self, f: &Expr, alpha: usize) -> Expr {
        let n = self.n;
        if alpha < n {
            let mut out = f.diff(alpha);
            for b in 0..n {
                out = Expr::sub(&out, &Expr::mul(&self.nconn[b][alpha], &f.diff(n + b)));
            }
            out
        } else {
            f.diff(alpha)
        }
    }

    /// Frame matrix: column alpha holds the coordinate components of the
    /// frame vector e_alpha.
    pub fn frame_matrix(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut f = mat_e_zeros(dim, dim);
        for i in 0..n {
            f[i][i] = Expr::one();
            for b in 0..n {
                f[n + b][i] = Expr::neg(&self.nconn[b][i]);
            }
        }
        for a in 0..n {
            f[n + a][n + a] = Expr::one();
        }
        f
    }

    /// Coframe matrix: row alpha holds the coordinate components of the
    /// coframe 1-form e^alpha (so coframe * frame = identity).
    pub fn coframe_matrix(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut e = mat_e_zeros(dim, dim);
        for i in 0..n {
            e[i][i] = Expr::one();
        }
        for a in 0..n {
            e[n + a][n + a] = Expr::one();
            for i in 0..n {
                e[n + a][i] = self.nconn[a][i].clone();
            }
        }
        e
    }

    /// Full anholonomy coefficients W^gamma_{alpha beta} with
    /// [e_alpha, e_beta] = W^gamma_{alpha beta} e_gamma.
    pub fn anholonomy(&self) -> Vec<MatE> {
        let n = self.n;
        let dim = 2 * n;
        let mut w = vec![mat_e_zeros(dim, dim); dim];
        for a in 0..n {
            for i in 0..n {
                for j in 0..n {
                    // [e_i, e_j] = Omega^a_{ij} d/dy^a
                    w[n + a][i][j] = self.omega[a][i][j].clone();
                }
                for b in 0..n {
                    // [e_i, e_{n+b}] = dN^a_i/dy^b d/dy^a
                    w[n + a][i][n + b] = self.dn_dy[a][i][b].clone();
                    w[n + a][n + b][i] = Expr::neg(&self.dn_dy[a][i][b]);
                }
            }
        }
        w
    }

    /// Frame-basis metric: block diag(g_h, h_v).
    pub fn metric_frame(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut g = mat_e_zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                g[i][j] = self.g_h[i][j].clone();
                g[n + i][n + j] = self.h_v[i][j].clone();
            }
        }
        g
    }

    pub fn metric_frame_inv(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut g = mat_e_zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                g[i][j] = self.g_h_inv[i][j].clone();
                g[n + i][n + j] = self.h_v_inv[i][j].clone();
            }
        }
        g
    }

    /// Coordinate-basis metric E^T G_frame E (carries the h N h terms).
    pub fn metric_coord(&self) -> MatE {
        let e = self.coframe_matrix();
        let gf = self.metric_frame();
        let et: MatE = transpose_e(&e);
        crate::linalg::mat_e_mul(&crate::linalg::mat_e_mul(&et, &gf), &e)
    }

    /// Coordinate-basis inverse metric F G_frame^{-1} F^T.
    pub fn metric_coord_inv(&self) -> MatE {
        let f = self.frame_matrix();
        let gfi = self.metric_frame_inv();
        let ft = transpose_e(&f);
        crate::linalg::mat_e_mul(&crate::linalg::mat_e_mul(&f, &gfi), &ft)
    }

    /// Almost complex structure in the frame basis: J(e_i) = -e_{n+i},
    /// J(e_{n+i}) = e_i; constant blocks [[0, I], [-I, 0]].
    pub fn almost_complex_frame(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut j = mat_e_zeros(dim, dim);
        for i in 0..n {
            j[i][n + i] = Expr::one();
            j[n + i][i] = Expr::neg(&Expr::one());
        }
        j
    }

    /// Almost complex structure as a coordinate-basis matrix F J_frame E.
    pub fn almost_complex_coord(&self) -> MatE {
        let f = self.frame_matrix();
        let jf = self.almost_complex_frame();
        let e = self.coframe_matrix();
        crate::linalg::mat_e_mul(&crate::linalg::mat_e_mul(&f, &jf), &e)
    }

    /// Almost symplectic form in the frame basis:
    /// theta = g_ij e^{n+i} ^ e^j, i.e. blocks [[0, -g],[g, 0]].
    pub fn theta_frame(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut t = mat_e_zeros(dim, dim);
        for a in 0..n {
            for k in 0..n {
                t[n + a][k] = self.g_h[a][k].clone();
                t[k][n + a] = Expr::neg(&self.g_h[a][k]);
            }
        }
        t
    }

    /// Poisson inverse of theta in the frame basis: [[0, ginv],[-ginv, 0]]
    /// (theta^{ab} theta_{bc} = delta^a_c).
    pub fn theta_frame_inv(&self) -> MatE {
        let n = self.n;
        let dim = 2 * n;
        let mut t = mat_e_zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                t[i][n + j] = self.g_h_inv[i][j].clone();
                t[n + i][j] = Expr::neg(&self.g_h_inv[i][j]);
            }
        }
        t
    }

    /// Coordinate-basis components of theta: E^T theta_frame E.
    pub fn theta_coord(&self) -> MatE {
        let e = self.coframe_matrix();
        let tf = self.theta_frame();
        crate::linalg::mat_e_mul(&crate::linalg::mat_e_mul(&transpose_e(&e), &tf), &e)
    }

    pub fn theta_coord_inv(&self) -> MatE {
        let f = self.frame_matrix();
        let tfi = self.theta_frame_inv();
        crate::linalg::mat_e_mul(&crate::linalg::mat_e_mul(&f, &tfi), &transpose_e(&f))
    }
}

pub(crate) fn transpose_e(m: &MatE) -> MatE {
    let rows = m.len();
    let cols = m[0].len();
    let mut out = mat_e_zeros(cols, rows);
    for i in 0..rows {
        for j in 0..cols {
            out[j][i] = m[i][j].clone();
        }
    }
    out
}

// ---- pointwise operations ---------------------------------------------------

fn check_block(m: &Mat, hessian: bool) -> Result<(), GeomError> {
    let n = m.rows;
    let det = m.det();
    let tol = DEGENERACY_TOL * m.max_abs().max(1e-30).powi(n as i32);
    if det.abs() <= tol {
        if hessian {
            return Err(GeomError::DegenerateHessian { det: det.abs(), tol });
        }
        return Err(GeomError::DegenerateMetric { det: det.abs(), tol });
    }
    Ok(())
}

/// Hessian metric and its inverse at a point.
pub fn hessian_metric(cf: &CanonicalFields, u: &Point) -> Result<(Mat, Mat), GeomError> {
    let h = mat_e_eval(&cf.h_v, &u.u)?;
    check_block(&h, true)?;
    let hinv = mat_e_eval(&cf.h_v_inv, &u.u)?;
    Ok((h, hinv))
}

/// Semispray coefficients G^a at a point (Lagrange/Finsler mode).
pub fn semispray(cf: &CanonicalFields, u: &Point) -> Result<Vec<f64>, GeomError> {
    let spray = cf.spray.as_ref().ok_or(GeomError::NotLagrange)?;
    hessian_metric(cf, u)?;
    Ok(spray
        .iter()
        .map(|g| g.eval(&u.u))
        .collect::<Result<_, _>>()?)
}

/// N-connection coefficients N^a_i at a point.
pub fn nconnection(cf: &CanonicalFields, u: &Point) -> Result<Mat, GeomError> {
    if cf.lagrange_identified {
        hessian_metric(cf, u)?;
    }
    Ok(mat_e_eval(&cf.nconn, &u.u)?)
}

/// Euler-Lagrange residual along the semispray flow:
/// R_i = L_{y_i y_j} (-2 G^j) + L_{y_i x_j} y^j - L_{x_i}.
pub fn euler_lagrange_residual(
    model: &Model,
    cf: &CanonicalFields,
    u: &Point,
) -> Result<Vec<f64>, GeomError> {
    let l = model.generating().ok_or(GeomError::NotLagrange)?;
    let n = cf.n;
    let g = semispray(cf, u)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let dyi = l.diff(n + i);
        let mut r = -l.diff(i).eval(&u.u)?;
        for j in 0..n {
            r += dyi.diff(n + j).eval(&u.u)? * (-2.0 * g[j]);
            r += dyi.diff(j).eval(&u.u)? * u.u[n + j];
        }
        out.push(r);
    }
    Ok(out)
}

/// Frame and coframe coefficient matrices at a point given N there.
/// Returns (frame, coframe) with coframe * frame = I.
pub fn adapted_frames(nconn: &Mat) -> (Mat, Mat) {
    let n = nconn.rows;
    let dim = 2 * n;
    let mut frame = Mat::identity(dim);
    let mut coframe = Mat::identity(dim);
    for b in 0..n {
        for i in 0..n {
            frame[(n + b, i)] = -nconn[(b, i)];
            coframe[(n + b, i)] = nconn[(b, i)];
        }
    }
    (frame, coframe)
}

/// Nonholonomy data at a point: full anholonomy coefficients
/// W^gamma_{alpha beta} and the N-connection curvature Omega^a_{ij}.
pub struct Nonholonomy {
    /// w[gamma][(alpha, beta)]
    pub w: Vec<Mat>,
    /// omega[a][(i, j)]
    pub omega: Vec<Mat>,
    /// true when Omega = 0 and the antisymmetrized dN/dy vanishes
    pub integrable: bool,
}

pub fn nonholonomy(cf: &CanonicalFields, u: &Point) -> Result<Nonholonomy, GeomError> {
    let w_sym = cf.anholonomy();
    let w = w_sym
        .iter()
        .map(|m| mat_e_eval(m, &u.u))
        .collect::<Result<Vec<_>, _>>()?;
    let omega = cf
        .omega
        .iter()
        .map(|m| mat_e_eval(m, &u.u))
        .collect::<Result<Vec<_>, _>>()?;
    let n = cf.n;
    let mut integrable = omega.iter().all(|m| m.max_abs() < 1e-12);
    if integrable {
        for a in 0..n {
            let d = mat_e_eval(&cf.dn_dy[a], &u.u)?;
            for i in 0..n {
                for j in 0..n {
                    if (d[(i, j)] - d[(j, i)]).abs() > 1e-12 {
                        integrable = false;
                    }
                }
            }
        }
    }
    Ok(Nonholonomy { w, omega, integrable })
}

/// Sasaki-type metric at a point: N-adapted blocks, the coordinate-basis
/// matrix and its inverse.
pub struct SasakiMetric {
    pub g_h: Mat,
    pub h_v: Mat,
    pub frame_block: Mat,
    pub coord: Mat,
    pub coord_inv: Mat,
}

pub fn sasaki_metric(cf: &CanonicalFields, u: &Point) -> Result<SasakiMetric, GeomError> {
    let g_h = mat_e_eval(&cf.g_h, &u.u)?;
    let h_v = mat_e_eval(&cf.h_v, &u.u)?;
    check_block(&g_h, false)?;
    check_block(&h_v, false)?;
    let frame_block = mat_e_eval(&cf.metric_frame(), &u.u)?;
    let coord = mat_e_eval(&cf.metric_coord(), &u.u)?;
    let coord_inv = mat_e_eval(&cf.metric_coord_inv(), &u.u)?;
    Ok(SasakiMetric {
        g_h,
        h_v,
        frame_block,
        coord,
        coord_inv,
    })
}

/// Almost complex structure in the coordinate basis at a point.
pub fn almost_complex(cf: &CanonicalFields, u: &Point) -> Result<Mat, GeomError> {
    Ok(mat_e_eval(&cf.almost_complex_coord(), &u.u)?)
}

/// Almost symplectic 2-form at a point: coordinate components and the
/// Poisson inverse (theta^{ab} theta_{bc} = delta^a_c).
pub fn almost_symplectic(cf: &CanonicalFields, u: &Point) -> Result<(Mat, Mat), GeomError> {
    let g = mat_e_eval(&cf.g_h, &u.u)?;
    check_block(&g, false)?;
    let lo = mat_e_eval(&cf.theta_coord(), &u.u)?;
    let up = mat_e_eval(&cf.theta_coord_inv(), &u.u)?;
    Ok((lo, up))
}

/// Recover the unique N^b_i adapted to a compatible pair (g, theta) from
/// their coordinate components at a point.
///
/// The operator J^gamma_alpha = theta_{alpha beta} g^{beta gamma} of the
/// pair has the block form [[N, I], [-N^2 - I, -N]] in coordinates, so the
/// horizontal splitting is read off from the two upper blocks: N = A B^{-1}
/// with A the h-h and B the h-v block.  B is the pairing block that must
/// have full rank; the canonical theta built from a Lagrange model recovers
/// its own N-connection exactly.  (The 2-form alone does not determine N:
/// its coordinate components only see the g-antisymmetric part of N, so the
/// metric of the compatible pair is a required input.)
pub fn nconnection_from_symplectic(
    theta: &Mat,
    g_inv: &Mat,
    n: usize,
) -> Result<Mat, GeomError> {
    let dim = 2 * n;
    assert_eq!(theta.rows, dim);
    assert_eq!(g_inv.rows, dim);
    // J^gamma_alpha = theta_{alpha beta} g^{beta gamma}; as a matrix acting on
    // column vectors, J[gamma][alpha].
    let mut j = Mat::zeros(dim, dim);
    for gamma in 0..dim {
        for alpha in 0..dim {
            let mut acc = 0.0;
            for beta in 0..dim {
                acc += theta[(alpha, beta)] * g_inv[(beta, gamma)];
            }
            j[(gamma, alpha)] = acc;
        }
    }
    let b = Mat::from_fn(n, n, |p, q| j[(p, n + q)]);
    let tolb = DEGENERACY_TOL * b.max_abs().max(1e-30).powi(n as i32);
    if b.det().abs() <= tolb {
        return Err(GeomError::RankDeficient);
    }
    let binv = b.inverse().ok_or(GeomError::RankDeficient)?;
    let a = Mat::from_fn(n, n, |p, q| j[(p, q)]);
    Ok(a.matmul(&binv))
}

/// Max relative homogeneity violation of F over the given scalings.
pub fn finsler_homogeneity_check(
    model: &Model,
    u: &Point,
    betas: &[f64],
) -> Result<f64, GeomError> {
    let f = match model {
        Model::Finsler { f, .. } => f,
        _ => return Err(GeomError::NotLagrange),
    };
    let n = model.n();
    let f0 = f.eval(&u.u)?;
    let mut worst: f64 = 0.0;
    for &beta in betas {
        let mut v = u.u.clone();
        for a in 0..n {
            v[n + a] *= beta;
        }
        let fb = f.eval(&v)?;
        let want = beta.abs() * f0;
        let denom = f0.abs().max(1e-300);
        worst = worst.max((fb - want).abs() / denom);
    }
    Ok(worst)
}

/// Point-evaluated bundle of every canonical object, plus diagnostics.
pub struct GeometryBundle {
    pub n: usize,
    pub h_v: Mat,
    pub h_v_inv: Mat,
    pub spray: Option<Vec<f64>>,
    pub nconn: Mat,
    pub frame: Mat,
    pub coframe: Mat,
    pub w: Vec<Mat>,
    pub omega: Vec<Mat>,
    pub metric_coord: Mat,
    pub metric_coord_inv: Mat,
    pub metric_frame: Mat,
    pub j_coord: Mat,
    pub theta_coord: Mat,
    pub theta_coord_inv: Mat,
    pub integrable: bool,
    pub jet_depth: usize,
}

pub fn geometry_bundle(
    cf: &CanonicalFields,
    u: &Point,
    jet_depth: usize,
) -> Result<GeometryBundle, GeomError> {
    let (h_v, h_v_inv) = hessian_metric(cf, u)?;
    let spray = match &cf.spray {
        Some(_) => Some(semispray(cf, u)?),
        None => None,
    };
    let nconn = nconnection(cf, u)?;
    let (frame, coframe) = adapted_frames(&nconn);
    let nh = nonholonomy(cf, u)?;
    let sas = sasaki_metric(cf, u)?;
    let j_coord = almost_complex(cf, u)?;
    let (theta_coord, theta_coord_inv) = almost_symplectic(cf, u)?;
    Ok(GeometryBundle {
        n: cf.n,
        h_v,
        h_v_inv,
        spray,
        nconn,
        frame,
        coframe,
        w: nh.w,
        omega: nh.omega,
        metric_coord: sas.coord,
        metric_coord_inv: sas.coord_inv,
        metric_frame: sas.frame_block,
        j_coord,
        theta_coord,
        theta_coord_inv,
        integrable: nh.integrable,
        jet_depth,
    })
}

#[cfg(test)]
mod tests;
