//! Core tensor types.
//!
//! Every tensor is stored channel-major, then row-major: element `(c, y, x)`
//! lives at flat offset `c·H·W + y·W + x`. All types are immutable once
//! constructed.

use std::fmt;

use rustfft::num_complex::Complex64;

use crate::error::{dim_err, Result, WrcError};

/// Channel count and spatial extent of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn offset(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    /// Shape with both spatial axes multiplied by `s`.
    pub const fn upscaled(&self, s: usize) -> Shape {
        Shape::new(self.channels, self.height * s, self.width * s)
    }

    /// Shape with both spatial axes divided by `s`, if they divide evenly.
    pub fn downscaled(&self, s: usize) -> Result<Shape> {
        if s == 0 || !self.height.is_multiple_of(s) || !self.width.is_multiple_of(s) {
            return dim_err(format!("{self} is not divisible by scale {s}"));
        }
        Ok(Shape::new(self.channels, self.height / s, self.width / s))
    }

    pub(crate) fn expect_eq(&self, other: &Shape, what: &str) -> Result<()> {
        if self != other {
            return dim_err(format!("{what}: expected {self}, got {other}"));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

fn check_len(shape: Shape, len: usize) -> Result<()> {
    if shape.len() != len {
        return dim_err(format!(
            "shape {shape} needs {} values, got {len}",
            shape.len()
        ));
    }
    Ok(())
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(WrcError::Validation(format!(
            "{what} has non-finite value {} at flat index {i}",
            data[i]
        )));
    }
    Ok(())
}

/// A real `C×H×W` feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    shape: Shape,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        check_len(shape, data.len())?;
        check_finite(&data, "feature map")?;
        Ok(FeatureMap { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        FeatureMap {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        FeatureMap::new(shape, vec![value; shape.len()])
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        FeatureMap::new(shape, data)
    }

    /// Stacks equally sized planes into a multi-channel tensor.
    pub fn from_planes(height: usize, width: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let shape = Shape::new(planes.len(), height, width);
        let mut data = Vec::with_capacity(shape.len());
        for p in planes {
            if p.len() != height * width {
                return dim_err(format!(
                    "plane has {} values, expected {}",
                    p.len(),
                    height * width
                ));
            }
            data.extend(p);
        }
        FeatureMap::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.offset(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.shape.plane().max(1))
    }

    /// Applies `f` elementwise; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<FeatureMap> {
        FeatureMap::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_with(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> Result<FeatureMap> {
        self.shape.expect_eq(&other.shape, "elementwise operand")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        FeatureMap::new(self.shape, data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Converts to a spectrum with zero imaginary part.
    pub fn to_complex(&self) -> Spectrum {
        Spectrum {
            shape: self.shape,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Which term of the weighted objective a weight field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRole {
    /// `|W|²`, lives on the low-resolution grid.
    DataFidelity,
    /// `|W_λ|²`, lives on the high-resolution grid.
    Regularizer,
}

/// Nonnegative per-location weights. The stored value is already the squared
/// magnitude that enters the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    shape: Shape,
    data: Vec<f64>,
    role: WeightRole,
}

impl WeightField {
    pub fn new(shape: Shape, data: Vec<f64>, role: WeightRole) -> Result<Self> {
        check_len(shape, data.len())?;
        check_finite(&data, "weight field")?;
        if let Some(i) = data.iter().position(|&v| v < 0.0) {
            return Err(WrcError::Validation(format!(
                "weight field has negative entry {} at flat index {i}",
                data[i]
            )));
        }
        Ok(WeightField { shape, data, role })
    }

    pub fn constant(shape: Shape, value: f64, role: WeightRole) -> Result<Self> {
        WeightField::new(shape, vec![value; shape.len()], role)
    }

    pub fn from_map(map: &FeatureMap, role: WeightRole) -> Result<Self> {
        WeightField::new(map.shape(), map.data().to_vec(), role)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn role(&self) -> WeightRole {
        self.role
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap {
            shape: self.shape,
            data: self.data.clone(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-channel convolution kernel with an explicit anchor tap.
///
/// The tap at `origin` is the one that lands on spatial index `(0, 0)` when the
/// kernel is circularly embedded into a feature-map-sized canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    channels: usize,
    kh: usize,
    kw: usize,
    taps: Vec<f64>,
    origin: (usize, usize),
}

impl Kernel {
    pub fn new(
        channels: usize,
        kh: usize,
        kw: usize,
        taps: Vec<f64>,
        origin: (usize, usize),
    ) -> Result<Self> {
        if kh == 0 || kw == 0 {
            return dim_err("kernel must have at least one tap");
        }
        check_len(Shape::new(channels, kh, kw), taps.len())?;
        check_finite(&taps, "kernel")?;
        if origin.0 >= kh || origin.1 >= kw {
            return Err(WrcError::Validation(format!(
                "kernel origin {origin:?} outside {kh}x{kw}"
            )));
        }
        Ok(Kernel {
            channels,
            kh,
            kw,
            taps,
            origin,
        })
    }

    /// Kernel anchored at `(kh/2, kw/2)`.
    pub fn centered(channels: usize, kh: usize, kw: usize, taps: Vec<f64>) -> Result<Self> {
        Kernel::new(channels, kh, kw, taps, (kh / 2, kw / 2))
    }

    /// Unit impulse: the identity operator under convolution.
    pub fn delta(channels: usize) -> Self {
        Kernel {
            channels,
            kh: 1,
            kw: 1,
            taps: vec![1.0; channels],
            origin: (0, 0),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> (usize, usize) {
        (self.kh, self.kw)
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn channel_taps(&self, c: usize) -> &[f64] {
        let n = self.kh * self.kw;
        &self.taps[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn tap(&self, c: usize, i: usize, j: usize) -> f64 {
        self.taps[(c * self.kh + i) * self.kw + j]
    }

    /// Checks that the kernel fits a feature map of the given shape.
    pub fn check_fits(&self, shape: Shape) -> Result<()> {
        if self.channels != shape.channels {
            return dim_err(format!(
                "kernel has {} channels, tensor has {}",
                self.channels, shape.channels
            ));
        }
        if self.kh > shape.height || self.kw > shape.width {
            return dim_err(format!(
                "kernel {}x{} larger than {}x{} grid",
                self.kh, self.kw, shape.height, shape.width
            ));
        }
        Ok(())
    }

    /// Circularly embeds channel `c` into an `h×w` canvas, origin tap at `(0, 0)`.
    pub fn embed(&self, c: usize, h: usize, w: usize) -> Result<Vec<f64>> {
        if self.kh > h || self.kw > w {
            return dim_err(format!(
                "kernel {}x{} larger than {h}x{w} target",
                self.kh, self.kw
            ));
        }
        let mut canvas = vec![0.0; h * w];
        let (oy, ox) = self.origin;
        for i in 0..self.kh {
            let y = (i + h - oy) % h;
            for j in 0..self.kw {
                let x = (j + w - ox) % w;
                canvas[y * w + x] += self.tap(c, i, j);
            }
        }
        Ok(canvas)
    }
}

/// Complex `C×H×W` frequency-domain tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    shape: Shape,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Spectrum { shape, data })
    }

    pub fn filled(shape: Shape, value: Complex64) -> Self {
        Spectrum {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> Complex64 {
        self.data[self.shape.offset(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.shape.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn conj(&self) -> Spectrum {
        Spectrum {
            shape: self.shape,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Spectrum,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Spectrum> {
        self.shape.expect_eq(&other.shape, "spectrum operand")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Spectrum {
            shape: self.shape,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Spectrum) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
