//! Frequency-domain primitives.
//!
//! Forward transforms are unnormalized, inverse transforms carry the `1/(H·W)`
//! factor. The distinct-block operators treat an `H×W` grid with scale `s` as
//! `s²` cosets of the `(H/s)×(W/s)` grid: coset member `(i, j)` of low-res
//! index `(u, v)` sits at `(u + i·H/s, v + j·W/s)`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{dim_err, Result, WrcError};
use crate::tensor::{FeatureMap, Kernel, Shape, Spectrum};

/// Planned forward and inverse 2-D transforms for one plane size.
#[derive(Clone)]
pub struct Fft2Plan {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2Plan {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2Plan {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// In-place unnormalized forward transform of one row-major plane.
    pub fn forward(&self, plane: &mut [Complex64]) {
        self.run(plane, &self.row_fwd, &self.col_fwd);
    }

    /// In-place inverse transform, including the `1/(H·W)` factor.
    pub fn inverse(&self, plane: &mut [Complex64]) {
        self.run(plane, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        plane.iter_mut().for_each(|z| *z *= scale);
    }

    fn run(&self, plane: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(plane.len(), h * w, "plane size does not match the plan");
        if h * w == 0 {
            return;
        }
        rows.process(plane);
        let mut column = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            cols.process(&mut column);
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }
}

/// Forward 2-D DFT of every channel.
pub fn fft2(x: &FeatureMap) -> Spectrum {
    fft2_complex(&x.to_complex())
}

/// Forward 2-D DFT of a complex tensor.
pub fn fft2_complex(x: &Spectrum) -> Spectrum {
    let shape = x.shape();
    let plan = Fft2Plan::new(shape.height, shape.width);
    let mut data = x.data().to_vec();
    for plane in data.chunks_exact_mut(shape.plane().max(1)) {
        plan.forward(plane);
    }
    Spectrum::new(shape, data).expect("shape preserved")
}

/// Inverse 2-D DFT with `1/(H·W)` normalization, complex result.
pub fn ifft2(s: &Spectrum) -> Spectrum {
    let shape = s.shape();
    let plan = Fft2Plan::new(shape.height, shape.width);
    let mut data = s.data().to_vec();
    for plane in data.chunks_exact_mut(shape.plane().max(1)) {
        plan.inverse(plane);
    }
    Spectrum::new(shape, data).expect("shape preserved")
}

/// Largest absolute imaginary part.
pub fn imag_residue(values: &[Complex64]) -> f64 {
    values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
}

/// Inverse transform of a spectrum whose result the caller declares real.
///
/// Fails when any imaginary part exceeds `max_residue`.
pub fn ifft2_real(s: &Spectrum, max_residue: f64) -> Result<FeatureMap> {
    let out = ifft2(s);
    let residue = imag_residue(out.data());
    if residue >= max_residue || residue.is_nan() {
        return Err(WrcError::NumericalConsistency {
            residue,
            threshold: max_residue,
        });
    }
    FeatureMap::new(out.shape(), out.data().iter().map(|z| z.re).collect())
}

/// Optical transfer function of a kernel on an `H×W` grid.
///
/// The kernel is zero-padded, circularly shifted so its origin tap sits at
/// `(0, 0)`, and transformed.
pub fn psf_to_otf(k: &Kernel, target: (usize, usize)) -> Result<Spectrum> {
    let (h, w) = target;
    let shape = Shape::new(k.channels(), h, w);
    let mut data = Vec::with_capacity(shape.len());
    for c in 0..k.channels() {
        data.extend(
            k.embed(c, h, w)?
                .into_iter()
                .map(|v| Complex64::new(v, 0.0)),
        );
    }
    Ok(fft2_complex(&Spectrum::new(shape, data)?))
}

/// Zero-insertion upsampling: sample `(y, x)` moves to `(y·s, x·s)`, every
/// other output entry is zero.
pub fn upsample_zero_insert(y: &FeatureMap, s: usize) -> Result<FeatureMap> {
    if s == 0 {
        return Err(WrcError::Contract("scale must be at least 1".into()));
    }
    let shape = y.shape();
    let out_shape = shape.upscaled(s);
    let mut data = vec![0.0; out_shape.len()];
    for c in 0..shape.channels {
        for yy in 0..shape.height {
            for xx in 0..shape.width {
                data[out_shape.offset(c, yy * s, xx * s)] = y.get(c, yy, xx);
            }
        }
    }
    FeatureMap::new(out_shape, data)
}

/// Coset structure of an `H×W` grid split by scale `s`.
#[derive(Debug, Clone, Copy)]
pub struct BlockView {
    high: Shape,
    low: Shape,
    scale: usize,
}

impl BlockView {
    pub fn new(high: Shape, scale: usize) -> Result<Self> {
        let low = high.downscaled(scale)?;
        Ok(BlockView { high, low, scale })
    }

    pub fn high_shape(&self) -> Shape {
        self.high
    }

    pub fn low_shape(&self) -> Shape {
        self.low
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn block_len(&self) -> usize {
        self.scale * self.scale
    }

    /// Flat offsets, within one plane, of the `s²` members of coset `(u, v)`.
    pub fn coset(&self, u: usize, v: usize) -> impl Iterator<Item = usize> + '_ {
        let (lh, lw, w) = (self.low.height, self.low.width, self.high.width);
        (0..self.scale)
            .flat_map(move |i| (0..self.scale).map(move |j| (u + i * lh) * w + (v + j * lw)))
    }

    /// Low-res index a high-res plane offset belongs to.
    #[inline]
    pub fn low_index(&self, high_offset: usize) -> usize {
        let w = self.high.width;
        let (y, x) = (high_offset / w, high_offset % w);
        (y % self.low.height) * self.low.width + x % self.low.width
    }

    /// Coset mean of one plane.
    pub fn mean_plane<T>(&self, plane: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T>,
    {
        let d = self.block_len() as f64;
        let mut out = Vec::with_capacity(self.low.plane());
        for u in 0..self.low.height {
            for v in 0..self.low.width {
                let sum = self.coset(u, v).fold(T::default(), |acc, i| acc + plane[i]);
                out.push(sum / d);
            }
        }
        out
    }

    /// Tiles a low-res plane `s×s` times and multiplies it into a high-res plane.
    pub fn broadcast_mul_plane(&self, low: &[Complex64], high: &[Complex64]) -> Vec<Complex64> {
        high.iter()
            .enumerate()
            .map(|(i, &b)| low[self.low_index(i)] * b)
            .collect()
    }
}

/// Distinct-block mean: `out(c,u,v)` averages the `s²` coset members of `(u, v)`.
pub fn block_mean_downsample(x: &Spectrum, s: usize) -> Result<Spectrum> {
    let view = BlockView::new(x.shape(), s)?;
    let mut data = Vec::with_capacity(view.low_shape().len());
    for c in 0..x.shape().channels {
        data.extend(view.mean_plane(x.channel(c)));
    }
    Spectrum::new(view.low_shape(), data)
}

/// Block-broadcast product: `a` tiled `s×s` times, multiplied elementwise into `b`.
pub fn block_broadcast_multiply(a: &Spectrum, b: &Spectrum, s: usize) -> Result<Spectrum> {
    let view = BlockView::new(b.shape(), s)?;
    if a.shape() != view.low_shape() {
        return dim_err(format!(
            "low-res operand {} does not match {} / {s}",
            a.shape(),
            b.shape()
        ));
    }
    let mut data = Vec::with_capacity(b.shape().len());
    for c in 0..b.shape().channels {
        data.extend(view.broadcast_mul_plane(a.channel(c), b.channel(c)));
    }
    Spectrum::new(b.shape(), data)
}
