//! Dense least-squares reference.
//!
//! Builds the strided convolution of one channel as explicit matrices
//! (`A = S·K`, `S` a row selector, `K` circulant-of-circulant), forms the
//! weighted normal equations
//!
//! ```text
//! (Aᵀ D_w A + D_reg) x = Aᵀ D_w y + D_reg x0
//! ```
//!
//! and solves them with a dense Cholesky factorization. Everything here is
//! assembled in the spatial domain, so it shares no code with the FFT solver.
//! The one frequency-domain route, [`woodbury_solve`], builds explicit DFT
//! matrices rather than calling the FFT.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};

use crate::error::{Result, WrcError};
use crate::solver::WrcProblem;
use crate::tensor::{FeatureMap, Shape};

/// Largest `H·W` the dense path will assemble.
pub const MAX_DENSE_UNKNOWNS: usize = 4096;

/// Relative residual `‖Mx − b‖/‖b‖` a dense solution must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Largest `|a − b| / max(1, |b|)` over all entries: relative for entries of
/// magnitude above one, absolute below.
pub fn max_relative_error(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    Ok(a.zip_with(b, |p, q| (p - q).abs() / q.abs().max(1.0))?
        .max_abs())
}

/// Explicit matrices of one channel's weighted problem.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    /// `N_h × N_h` circular convolution.
    pub conv: Mat<f64>,
    /// `N_l × N_h` selector with one unit entry per row.
    pub down: Mat<f64>,
    /// Diagonal of `D_w`, length `N_l`.
    pub w_data: Vec<f64>,
    /// Diagonal of `D_reg`, length `N_h`.
    pub w_reg: Vec<f64>,
    pub y: Vec<f64>,
    pub x0: Vec<f64>,
    /// High-resolution grid `(H, W)`.
    pub grid: (usize, usize),
    pub scale: usize,
    /// Column of `conv` picked by each row of `down`.
    selected: Vec<usize>,
}

/// Assembles channel `channel` of `p`.
pub fn assemble(p: &WrcProblem, channel: usize) -> Result<DenseProblem> {
    p.validate()?;
    let high = p.high_shape();
    let low = p.y.shape();
    if channel >= high.channels {
        return Err(WrcError::Dimension(format!(
            "channel {channel} out of range for {} channels",
            high.channels
        )));
    }
    let n_h = high.plane();
    if n_h > MAX_DENSE_UNKNOWNS {
        return Err(WrcError::Capacity {
            size: n_h,
            limit: MAX_DENSE_UNKNOWNS,
        });
    }
    let (h, w) = (high.height, high.width);
    let s = p.scale();
    let canvas = p.spec.kernel.embed(channel, h, w)?;

    // (Kx)(r) = Σ_q c(r − q) x(q)
    let conv = Mat::from_fn(n_h, n_h, |r, q| {
        let (ry, rx) = (r / w, r % w);
        let (qy, qx) = (q / w, q % w);
        canvas[((ry + h - qy) % h) * w + (rx + w - qx) % w]
    });

    let selected: Vec<usize> = (0..low.height)
        .flat_map(|y| (0..low.width).map(move |x| (y * s) * w + x * s))
        .collect();
    let mut down = Mat::zeros(low.plane(), n_h);
    for (row, &col) in selected.iter().enumerate() {
        down[(row, col)] = 1.0;
    }

    Ok(DenseProblem {
        conv,
        down,
        w_data: p.w_data.channel(channel).to_vec(),
        w_reg: p.w_reg.channel(channel).to_vec(),
        y: p.y.channel(channel).to_vec(),
        x0: p.x0.channel(channel).to_vec(),
        grid: (h, w),
        scale: s,
        selected,
    })
}

impl DenseProblem {
    pub fn n_high(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn n_low(&self) -> usize {
        self.selected.len()
    }

    /// `A = S·K`, taken as the selected rows of `K`.
    pub fn system_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.n_low(), self.n_high(), |r, q| {
            self.conv[(self.selected[r], q)]
        })
    }

    /// `(M, b)` of the weighted normal equations.
    pub fn normal_equations(&self) -> (Mat<f64>, Mat<f64>) {
        let a = self.system_matrix();
        let weighted = Mat::from_fn(a.nrows(), a.ncols(), |r, q| self.w_data[r] * a[(r, q)]);
        let mut m = a.transpose() * &weighted;
        for i in 0..self.n_high() {
            m[(i, i)] += self.w_reg[i];
        }
        let wy = Mat::from_fn(self.n_low(), 1, |r, _| self.w_data[r] * self.y[r]);
        let mut b = a.transpose() * &wy;
        for i in 0..self.n_high() {
            b[(i, 0)] += self.w_reg[i] * self.x0[i];
        }
        (m, b)
    }

    pub fn to_feature_map(&self, x: &[f64]) -> Result<FeatureMap> {
        FeatureMap::new(Shape::new(1, self.grid.0, self.grid.1), x.to_vec())
    }
}

fn condition_estimate(m: &Mat<f64>) -> f64 {
    match m.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            if min == 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        }
        Err(_) => f64::NAN,
    }
}

fn col_norm(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m[(i, 0)] * m[(i, 0)])
        .sum::<f64>()
        .sqrt()
}

fn relative_residual(m: &Mat<f64>, x: &Mat<f64>, b: &Mat<f64>) -> (Mat<f64>, f64) {
    let r = b - m * x;
    let nb = col_norm(b);
    let rel = if nb == 0.0 {
        col_norm(&r)
    } else {
        col_norm(&r) / nb
    };
    (r, rel)
}

/// Solves the normal equations by Cholesky, with one refinement step if the
/// first residual misses [`RESIDUAL_TOLERANCE`].
pub fn dense_solve(d: &DenseProblem) -> Result<FeatureMap> {
    let (m, b) = d.normal_equations();
    let llt = m.llt(Side::Lower).map_err(|e| WrcError::Singularity {
        reason: format!("normal matrix is not positive definite ({e})"),
        condition: condition_estimate(&m),
    })?;
    let mut x = llt.solve(&b);
    let (r, mut rel) = relative_residual(&m, &x, &b);
    if rel >= RESIDUAL_TOLERANCE {
        x += llt.solve(&r);
        rel = relative_residual(&m, &x, &b).1;
    }
    if rel.is_nan() || rel >= RESIDUAL_TOLERANCE {
        return Err(WrcError::Singularity {
            reason: format!("relative residual {rel:.3e} after refinement"),
            condition: condition_estimate(&m),
        });
    }
    let flat: Vec<f64> = (0..d.n_high()).map(|i| x[(i, 0)]).collect();
    d.to_feature_map(&flat)
}

/// Dense solution of every channel, stacked.
pub fn dense_solve_problem(p: &WrcProblem) -> Result<FeatureMap> {
    let high = p.high_shape();
    let mut planes = Vec::with_capacity(high.channels);
    for c in 0..high.channels {
        planes.push(dense_solve(&assemble(p, c)?)?.into_data());
    }
    FeatureMap::from_planes(high.height, high.width, planes)
}

/// `‖D_w^{1/2}(y − Ax)‖² + ‖D_reg^{1/2}(x − x0)‖²` with spatial-diagonal weights.
pub fn dense_objective(d: &DenseProblem, x: &[f64]) -> f64 {
    let a = d.system_matrix();
    let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let ax = &a * &xm;
    let data: f64 = (0..d.n_low())
        .map(|r| d.w_data[r] * (d.y[r] - ax[(r, 0)]).powi(2))
        .sum();
    let reg: f64 = (0..d.n_high())
        .map(|i| d.w_reg[i] * (x[i] - d.x0[i]).powi(2))
        .sum();
    data + reg
}

/// Unitary 2-D DFT matrix for a row-major `h×w` grid.
fn dft_matrix(h: usize, w: usize) -> Mat<c64> {
    let n = h * w;
    let scale = 1.0 / (n as f64).sqrt();
    Mat::from_fn(n, n, |k, q| {
        let (u, v) = (k / w, k % w);
        let (y, x) = (q / w, q % w);
        let phase = -2.0 * PI * (((u * y) % h) as f64 / h as f64 + ((v * x) % w) as f64 / w as f64);
        c64::from_polar(scale, phase)
    })
}

fn scaled(m: &Mat<c64>, a: f64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * a)
}

fn to_complex(m: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// Frequency-domain solve through the matrix-inversion lemma:
///
/// ```text
/// x = Fᴴ [D⁻¹ − D⁻¹ Λ̲ᴴ (C⁻¹ + Λ̲ D⁻¹ Λ̲ᴴ)⁻¹ Λ̲ D⁻¹] G
/// ```
///
/// with `Λ̲ = [Λ₁ … Λ_d]` the coset blocks of the kernel spectrum,
/// `C = (1/d)·F_l D_w F_lᴴ` (dense, since `D_w` may vary) and
/// `G = Λᴴ F Sᴴ D_w y + D F x0`. `D` is `D_reg` seen in the frequency domain,
/// which is diagonal only when `D_reg` is a multiple of the identity, so other
/// inputs are rejected.
pub fn woodbury_solve(d: &DenseProblem) -> Result<FeatureMap> {
    let delta = d.w_reg[0];
    if d.w_reg
        .iter()
        .any(|&v| (v - delta).abs() > 1e-12 * delta.abs())
    {
        return Err(WrcError::Contract(
            "Woodbury route needs a constant regularizer weight".into(),
        ));
    }
    if delta <= 0.0 || d.w_data.iter().any(|&v| v <= 0.0) {
        return Err(WrcError::Contract(
            "Woodbury route needs strictly positive weights".into(),
        ));
    }
    let (h, w) = d.grid;
    let s = d.scale;
    let (lh, lw) = (h / s, w / s);
    let n = d.n_high();
    let nl = d.n_low();
    let blocks = (s * s) as f64;

    let f = dft_matrix(h, w);
    let f_low = dft_matrix(lh, lw);

    // Λ = diag(√N · F c) where c is the first column of the circulant.
    let c = Mat::from_fn(n, 1, |i, _| c64::new(d.conv[(i, 0)], 0.0));
    let lambda = scaled(&(&f * &c), (n as f64).sqrt());

    // Λ̲: N_l × N_h, entry (l(k), k) = λ_k
    let coset_of = |k: usize| ((k / w) % lh) * lw + (k % w) % lw;
    let mut lam_bar = Mat::<c64>::zeros(nl, n);
    for k in 0..n {
        lam_bar[(coset_of(k), k)] = lambda[(k, 0)];
    }

    // C⁻¹ = d · F_l D_w⁻¹ F_lᴴ
    let inv_w = Mat::from_fn(nl, nl, |i, j| {
        if i == j {
            c64::new(1.0 / d.w_data[i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let c_inv = scaled(&(&f_low * &inv_w * f_low.adjoint()), blocks);

    // G = Λᴴ F Sᴴ D_w y + δ F x0
    let wy = Mat::from_fn(nl, 1, |r, _| c64::new(d.w_data[r] * d.y[r], 0.0));
    let up = to_complex(&d.down).transpose() * &wy;
    let f_up = &f * &up;
    let x0 = Mat::from_fn(n, 1, |i, _| c64::new(d.x0[i], 0.0));
    let f_x0 = &f * &x0;
    let g = Mat::from_fn(n, 1, |k, _| {
        lambda[(k, 0)].conj() * f_up[(k, 0)] + f_x0[(k, 0)] * delta
    });

    let d_inv_g = scaled(&g, 1.0 / delta);
    let gram: Mat<c64> = &lam_bar * lam_bar.adjoint();
    let inner = &c_inv + scaled(&gram, 1.0 / delta);
    let rhs: Mat<c64> = &lam_bar * &d_inv_g;
    let t = inner.partial_piv_lu().solve(&rhs);
    let back: Mat<c64> = lam_bar.adjoint() * &t;
    let x_hat = &d_inv_g - scaled(&back, 1.0 / delta);

    let x: Mat<c64> = f.adjoint() * &x_hat;
    let residue = (0..n).fold(0.0f64, |m, i| m.max(x[(i, 0)].im.abs()));
    if residue >= 1e-8 {
        return Err(WrcError::NumericalConsistency {
            residue,
            threshold: 1e-8,
        });
    }
    let flat: Vec<f64> = (0..n).map(|i| x[(i, 0)].re).collect();
    d.to_feature_map(&flat)
}
