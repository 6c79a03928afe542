//! Closed-form weighted reverse convolution.
//!
//! Solves, per channel,
//!
//! ```text
//! min_X  Σ w_data·(Y − (X ⊗ K)↓s)²  +  Σ w_reg·(X − X0)²
//! ```
//!
//! in the Fourier domain. The weight fields hold the squared weights directly.
//! The general solver follows the reference listing step for step: the data
//! weight is applied to `Y` before zero insertion, the prior weight to `X0`
//! before the FFT, and both fields multiply the frequency grid elementwise in
//! the block-mean quotient and the outer division. That reduces exactly to the
//! unweighted reverse convolution and to the Wiener filter for constant
//! fields. For spatially varying fields it is not the exact minimizer of the
//! spatial objective, and the inverse FFT is complex; [`SolveOptions`]
//! controls whether that residue is an error.

use rustfft::num_complex::Complex64;

use crate::error::{Result, WrcError};
use crate::fft::{
    block_broadcast_multiply, block_mean_downsample, fft2, ifft2, ifft2_real, imag_residue,
    psf_to_otf, upsample_zero_insert, BlockView, Fft2Plan,
};
use crate::forward::{forward_adjoint, forward_spatial, ForwardSpec};
use crate::tensor::{FeatureMap, Kernel, Shape, Spectrum, WeightField, WeightRole};

/// Largest imaginary part tolerated when the output is declared real.
pub const SOLVER_RESIDUE: f64 = 1e-6;

/// Inputs of one weighted inversion.
#[derive(Debug, Clone)]
pub struct WrcProblem {
    pub y: FeatureMap,
    pub spec: ForwardSpec,
    /// `|W|²`, shape of `y`.
    pub w_data: WeightField,
    /// `|W_λ|²`, shape of `x0`.
    pub w_reg: WeightField,
    pub x0: FeatureMap,
    /// Added to `w_reg` wherever it weights `X0` or divides, and once to the
    /// block-mean denominator. Zero disables the guard.
    pub eps: f64,
}

impl WrcProblem {
    pub fn new(
        y: FeatureMap,
        spec: ForwardSpec,
        w_data: WeightField,
        w_reg: WeightField,
        x0: FeatureMap,
        eps: f64,
    ) -> Result<Self> {
        let p = WrcProblem {
            y,
            spec,
            w_data,
            w_reg,
            x0,
            eps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let high = self.spec.input_shape(self.y.shape())?;
        self.y
            .shape()
            .expect_eq(&self.w_data.shape(), "data-fidelity weights")?;
        high.expect_eq(&self.w_reg.shape(), "regularizer weights")?;
        high.expect_eq(&self.x0.shape(), "prior x0")?;
        if self.w_data.role() != WeightRole::DataFidelity
            || self.w_reg.role() != WeightRole::Regularizer
        {
            return Err(WrcError::Validation(
                "weight fields have swapped roles".into(),
            ));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(WrcError::Contract(format!(
                "eps must be finite and >= 0, got {}",
                self.eps
            )));
        }
        if self.eps == 0.0 && self.w_reg.min_value() <= 0.0 {
            return Err(WrcError::Contract(
                "regularizer weights must be strictly positive when eps = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn high_shape(&self) -> Shape {
        self.x0.shape()
    }

    pub fn scale(&self) -> usize {
        self.spec.scale
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// `Some(t)`: fail if the inverse FFT has an imaginary part ≥ `t`.
    /// `None`: keep the real part, as the reference listing does.
    pub max_imag_residue: Option<f64>,
    /// Channels solved concurrently. 0 and 1 both mean single-threaded.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_imag_residue: Some(SOLVER_RESIDUE),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: FeatureMap,
    /// Largest imaginary part discarded from the inverse FFT.
    pub imag_residue: f64,
}

/// Closed-form solve with the strict residue check.
pub fn wrc_solve(p: &WrcProblem) -> Result<FeatureMap> {
    wrc_solve_with(p, &SolveOptions::default()).map(|s| s.x)
}

pub fn wrc_solve_with(p: &WrcProblem, opts: &SolveOptions) -> Result<Solution> {
    p.validate()?;
    let high = p.high_shape();
    let (h, w) = (high.height, high.width);
    let view = BlockView::new(high, p.scale())?;
    let plan = Fft2Plan::new(h, w);
    let otf = psf_to_otf(&p.spec.kernel, (h, w))?;

    let solve = |c: usize| solve_channel(p, c, &plan, &view, otf.channel(c));
    let planes: Vec<Vec<Complex64>> = if opts.threads > 1 && high.channels > 1 {
        let per = high.channels.div_ceil(opts.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..high.channels)
                .collect::<Vec<_>>()
                .chunks(per)
                .map(|chunk| {
                    let chunk = chunk.to_vec();
                    let solve = &solve;
                    scope.spawn(move || chunk.into_iter().map(solve).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("solver thread panicked"))
                .collect()
        })
    } else {
        (0..high.channels).map(solve).collect()
    };

    let mut residue = 0.0f64;
    let mut data = Vec::with_capacity(high.len());
    for plane in planes {
        residue = residue.max(imag_residue(&plane));
        data.extend(plane.into_iter().map(|z| z.re));
    }
    if let Some(limit) = opts.max_imag_residue {
        if residue >= limit || residue.is_nan() {
            return Err(WrcError::NumericalConsistency {
                residue,
                threshold: limit,
            });
        }
    }
    Ok(Solution {
        x: FeatureMap::new(high, data)?,
        imag_residue: residue,
    })
}

fn solve_channel(
    p: &WrcProblem,
    c: usize,
    plan: &Fft2Plan,
    view: &BlockView,
    fk: &[Complex64],
) -> Vec<Complex64> {
    let s = p.scale();
    let high = view.high_shape();
    let low = view.low_shape();
    let w = high.width;
    let eps = p.eps;
    let y = p.y.channel(c);
    let wd = p.w_data.channel(c);
    let wr = p.w_reg.channel(c);
    let x0 = p.x0.channel(c);

    // F((|W|² ⊙ Y)↑s)
    let mut fy = vec![Complex64::default(); high.plane()];
    for u in 0..low.height {
        for v in 0..low.width {
            let l = u * low.width + v;
            fy[u * s * w + v * s] = Complex64::new(wd[l] * y[l], 0.0);
        }
    }
    plan.forward(&mut fy);

    // F((|W_λ|² + eps) ⊙ X0)
    let mut fx0: Vec<Complex64> = x0
        .iter()
        .zip(wr)
        .map(|(&x, &r)| Complex64::new((r + eps) * x, 0.0))
        .collect();
    plan.forward(&mut fx0);

    let l: Vec<Complex64> = fk
        .iter()
        .zip(&fy)
        .zip(&fx0)
        .map(|((k, a), b)| k.conj() * a + b)
        .collect();
    let fkl: Vec<Complex64> = fk.iter().zip(&l).map(|(k, v)| k * v).collect();
    let fk2: Vec<f64> = fk.iter().map(|k| k.norm_sqr()).collect();

    let fkl_mean = view.mean_plane(&fkl);
    let fk2_mean = view.mean_plane(&fk2);
    let wr_mean = view.mean_plane(wr);
    let quotient: Vec<Complex64> = (0..low.plane())
        .map(|i| wd[i] * fkl_mean[i] / (wd[i] * fk2_mean[i] + wr_mean[i] + eps))
        .collect();

    let mut out: Vec<Complex64> = (0..high.plane())
        .map(|i| (l[i] - fk[i].conj() * quotient[view.low_index(i)]) / (wr[i] + eps))
        .collect();
    plan.inverse(&mut out);
    out
}

/// Direct elementwise form for `s = 1`:
/// `F⁻¹[(conj(F_K)·F(w_data·Y) + F((w_reg+eps)·X0)) / (w_data·|F_K|² + w_reg + eps)]`.
pub fn wrc_solve_s1(p: &WrcProblem) -> Result<FeatureMap> {
    wrc_solve_s1_with(p, &SolveOptions::default()).map(|s| s.x)
}

pub fn wrc_solve_s1_with(p: &WrcProblem, opts: &SolveOptions) -> Result<Solution> {
    if p.scale() != 1 {
        return Err(WrcError::Contract(format!(
            "s=1 solver called with s={}",
            p.scale()
        )));
    }
    p.validate()?;
    let shape = p.high_shape();
    let fk = psf_to_otf(&p.spec.kernel, (shape.height, shape.width))?;
    let wy = p.y.zip_with(&p.w_data.to_feature_map(), |a, b| a * b)?;
    let wx0 =
        p.x0.zip_with(&p.w_reg.to_feature_map(), |a, b| a * (b + p.eps))?;
    let numerator = fk
        .zip_with(&fft2(&wy), |k, a| k.conj() * a)?
        .zip_with(&fft2(&wx0), |a, b| a + b)?;
    let denom: Vec<Complex64> = fk
        .data()
        .iter()
        .zip(p.w_data.data())
        .zip(p.w_reg.data())
        .map(|((k, &d), &r)| Complex64::new(d * k.norm_sqr() + r + p.eps, 0.0))
        .collect();
    let out = ifft2(&numerator.zip_with(&Spectrum::new(shape, denom)?, |a, b| a / b)?);
    let residue = imag_residue(out.data());
    if let Some(limit) = opts.max_imag_residue {
        if residue >= limit || residue.is_nan() {
            return Err(WrcError::NumericalConsistency {
                residue,
                threshold: limit,
            });
        }
    }
    let x = FeatureMap::new(shape, out.data().iter().map(|z| z.re).collect())?;
    Ok(Solution {
        x,
        imag_residue: residue,
    })
}

/// Unweighted reverse convolution with scalar regularization `λ`.
pub fn converse2d_solve(
    y: &FeatureMap,
    spec: &ForwardSpec,
    lambda: f64,
    x0: &FeatureMap,
) -> Result<FeatureMap> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(WrcError::Contract(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let high = spec.input_shape(y.shape())?;
    high.expect_eq(&x0.shape(), "prior x0")?;
    let s = spec.scale;
    let fk = psf_to_otf(&spec.kernel, (high.height, high.width))?;
    let fk_conj = fk.conj();
    let lam = Complex64::new(lambda, 0.0);

    let l = fk_conj
        .zip_with(&fft2(&upsample_zero_insert(y, s)?), |a, b| a * b)?
        .zip_with(&fft2(x0), |a, b| a + lam * b)?;
    let fkl_mean = block_mean_downsample(&fk.zip_with(&l, |a, b| a * b)?, s)?;
    let fk2_mean = block_mean_downsample(
        &fk.zip_with(&fk, |a, _| Complex64::new(a.norm_sqr(), 0.0))?,
        s,
    )?;
    let quotient = fkl_mean.zip_with(&fk2_mean, |a, b| a / (b + lam))?;
    let correction = block_broadcast_multiply(&quotient, &fk_conj, s)?;
    let out = l.zip_with(&correction, |a, b| (a - b) / lam)?;
    ifft2_real(&out, SOLVER_RESIDUE)
}

/// Classical inverse filter for `s = 1`:
/// `F⁻¹[(conj(F_K)·F_Y + λ·F_X0) / (|F_K|² + λ)]`.
pub fn wiener_solve(
    y: &FeatureMap,
    kernel: &Kernel,
    lambda: f64,
    x0: &FeatureMap,
) -> Result<FeatureMap> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(WrcError::Contract(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let shape = y.shape();
    kernel.check_fits(shape)?;
    shape.expect_eq(&x0.shape(), "prior x0")?;
    let fk = psf_to_otf(kernel, (shape.height, shape.width))?;
    let fy = fft2(y);
    let fx0 = fft2(x0);
    let data: Vec<Complex64> = fk
        .data()
        .iter()
        .zip(fy.data())
        .zip(fx0.data())
        .map(|((k, a), b)| (k.conj() * a + lambda * b) / (k.norm_sqr() + lambda))
        .collect();
    ifft2_real(&Spectrum::new(shape, data)?, SOLVER_RESIDUE)
}

/// `Σ w_data·(Y − forward(X))² + Σ w_reg·(X − X0)²`, over all channels. The
/// guard `eps` is not part of the objective.
pub fn objective_value(p: &WrcProblem, x: &FeatureMap) -> Result<f64> {
    p.high_shape().expect_eq(&x.shape(), "candidate x")?;
    let fx = forward_spatial(x, &p.spec)?;
    let data: f64 = fx
        .data()
        .iter()
        .zip(p.y.data())
        .zip(p.w_data.data())
        .map(|((f, y), w)| w * (y - f) * (y - f))
        .sum();
    let reg: f64 = x
        .data()
        .iter()
        .zip(p.x0.data())
        .zip(p.w_reg.data())
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum();
    Ok(data + reg)
}

/// Analytic gradient `2·KᴴSᴴ w_data (SKX − Y) + 2·w_reg (X − X0)`.
pub fn objective_gradient(p: &WrcProblem, x: &FeatureMap) -> Result<FeatureMap> {
    p.high_shape().expect_eq(&x.shape(), "candidate x")?;
    let residual = forward_spatial(x, &p.spec)?
        .zip_with(&p.y, |f, y| f - y)?
        .zip_with(&p.w_data.to_feature_map(), |r, w| r * w)?;
    let back = forward_adjoint(&residual, &p.spec)?;
    let prior = x
        .zip_with(&p.x0, |a, b| a - b)?
        .zip_with(&p.w_reg.to_feature_map(), |d, w| d * w)?;
    back.zip_with(&prior, |a, b| 2.0 * (a + b))
}

/// Stationarity measure `max|∇| / (1 + max|X|)`.
pub fn stationarity(p: &WrcProblem, x: &FeatureMap) -> Result<f64> {
    Ok(objective_gradient(p, x)?.max_abs() / (1.0 + x.max_abs()))
}
