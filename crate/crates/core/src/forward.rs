//! Strided circular convolution `Y = (X ⊗ K)↓s` and its adjoint.

use crate::error::{Result, WrcError};
use crate::fft::{fft2, ifft2_real, psf_to_otf, upsample_zero_insert};
use crate::tensor::{FeatureMap, Kernel, Shape};

/// Residue bound used when a spectral path must come back real.
pub(crate) const REAL_RESIDUE: f64 = 1e-8;

/// Depthwise convolution kernel plus decimation stride. Boundaries are always
/// circular.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSpec {
    pub kernel: Kernel,
    pub scale: usize,
}

impl ForwardSpec {
    pub fn new(kernel: Kernel, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(WrcError::Contract("scale must be at least 1".into()));
        }
        Ok(ForwardSpec { kernel, scale })
    }

    /// Checks a high-resolution input and returns the low-resolution output shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.kernel.check_fits(input)?;
        input.downscaled(self.scale)
    }

    /// High-resolution shape that maps onto a given observation shape.
    pub fn input_shape(&self, observed: Shape) -> Result<Shape> {
        let high = observed.upscaled(self.scale);
        self.kernel.check_fits(high)?;
        Ok(high)
    }
}

/// Spatial reference path: direct circular convolution, then keep `(y·s, x·s)`.
pub fn forward_spatial(x: &FeatureMap, spec: &ForwardSpec) -> Result<FeatureMap> {
    let out_shape = spec.output_shape(x.shape())?;
    let Shape {
        height: h,
        width: w,
        ..
    } = x.shape();
    let k = &spec.kernel;
    let (kh, kw) = k.size();
    let (oy, ox) = k.origin();
    let s = spec.scale;
    let mut data = Vec::with_capacity(out_shape.len());
    for c in 0..out_shape.channels {
        let plane = x.channel(c);
        for yo in 0..out_shape.height {
            for xo in 0..out_shape.width {
                let (y, xx) = (yo * s, xo * s);
                let mut acc = 0.0;
                for i in 0..kh {
                    // tap i sits at offset i - oy, so it reads x[y - (i - oy)]
                    let sy = (y + h + oy - i) % h;
                    for j in 0..kw {
                        let sx = (xx + w + ox - j) % w;
                        acc += k.tap(c, i, j) * plane[sy * w + sx];
                    }
                }
                data.push(acc);
            }
        }
    }
    FeatureMap::new(out_shape, data)
}

/// Spectral path: `ifft2(OTF ⊙ fft2(x))`, then decimate.
pub fn forward_spectral(x: &FeatureMap, spec: &ForwardSpec) -> Result<FeatureMap> {
    let out_shape = spec.output_shape(x.shape())?;
    let shape = x.shape();
    let otf = psf_to_otf(&spec.kernel, (shape.height, shape.width))?;
    let full = ifft2_real(&fft2(x).zip_with(&otf, |a, b| a * b)?, REAL_RESIDUE)?;
    decimate(&full, spec.scale, out_shape)
}

fn decimate(full: &FeatureMap, s: usize, out_shape: Shape) -> Result<FeatureMap> {
    FeatureMap::from_fn(out_shape, |c, y, x| full.get(c, y * s, x * s))
}

/// Adjoint `Kᴴ Sᴴ r`: zero-insert the low-res residual, then correlate with the
/// kernel (multiply by the conjugate OTF).
pub fn forward_adjoint(r: &FeatureMap, spec: &ForwardSpec) -> Result<FeatureMap> {
    let high = spec.input_shape(r.shape())?;
    let up = upsample_zero_insert(r, spec.scale)?;
    let otf = psf_to_otf(&spec.kernel, (high.height, high.width))?;
    let prod = fft2(&up).zip_with(&otf, |a, b| a * b.conj())?;
    ifft2_real(&prod, REAL_RESIDUE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Synth;

    fn max_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
        a.zip_with(b, |p, q| (p - q).abs()).unwrap().max_abs()
    }

    #[test]
    fn delta_kernel_identity_and_decimation() {
        let x = Synth::new(1).feature_map(Shape::new(2, 6, 6), -1.0, 1.0);
        let id = ForwardSpec::new(Kernel::delta(2), 1).unwrap();
        assert_eq!(forward_spatial(&x, &id).unwrap(), x);

        let ramp = FeatureMap::from_fn(Shape::new(1, 4, 4), |_, y, x| (y * 4 + x) as f64).unwrap();
        let dec = ForwardSpec::new(Kernel::delta(1), 2).unwrap();
        assert_eq!(
            forward_spatial(&ramp, &dec).unwrap().data(),
            &[0.0, 2.0, 8.0, 10.0]
        );
    }

    #[test]
    fn averaging_kernel_preserves_constants() {
        let x = FeatureMap::filled(Shape::new(1, 6, 6), 3.25).unwrap();
        let k = Kernel::new(1, 2, 2, vec![0.25; 4], (0, 0)).unwrap();
        let spec = ForwardSpec::new(k, 2).unwrap();
        let y = forward_spectral(&x, &spec).unwrap();
        assert!(y.data().iter().all(|v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn s1_spectrum_is_otf_times_input() {
        let mut g = Synth::new(2);
        let x = g.feature_map(Shape::new(1, 6, 8), -1.0, 1.0);
        let spec = ForwardSpec::new(g.kernel(1, 3, 3), 1).unwrap();
        let lhs = fft2(&forward_spectral(&x, &spec).unwrap());
        let rhs = fft2(&x)
            .zip_with(&psf_to_otf(&spec.kernel, (6, 8)).unwrap(), |a, b| a * b)
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn spatial_matches_spectral() {
        let mut g = Synth::new(3);
        let x = g.feature_map(Shape::new(1, 8, 8), -1.0, 1.0);
        let spec = ForwardSpec::new(g.kernel(1, 3, 3), 2).unwrap();
        assert!(
            max_diff(
                &forward_spatial(&x, &spec).unwrap(),
                &forward_spectral(&x, &spec).unwrap()
            ) < 1e-10
        );

        let x = g.feature_map(Shape::new(2, 12, 12), -1.0, 1.0);
        let spec = ForwardSpec::new(g.kernel(2, 5, 5), 3).unwrap();
        assert!(
            max_diff(
                &forward_spatial(&x, &spec).unwrap(),
                &forward_spectral(&x, &spec).unwrap()
            ) < 1e-10
        );
    }

    #[test]
    fn adjoint_identity() {
        let mut g = Synth::new(4);
        let spec = ForwardSpec::new(g.kernel(1, 3, 5), 2).unwrap();
        let x = g.feature_map(Shape::new(1, 8, 10), -1.0, 1.0);
        let u = g.feature_map(Shape::new(1, 4, 5), -1.0, 1.0);
        let ax = forward_spatial(&x, &spec).unwrap();
        let atu = forward_adjoint(&u, &spec).unwrap();
        let lhs: f64 = ax.data().iter().zip(u.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(atu.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = FeatureMap::zeros(Shape::new(1, 5, 6));
        let spec = ForwardSpec::new(Kernel::delta(1), 2).unwrap();
        assert!(matches!(
            forward_spatial(&x, &spec),
            Err(WrcError::Dimension(_))
        ));
        let big = ForwardSpec::new(Kernel::centered(1, 7, 7, vec![0.0; 49]).unwrap(), 1).unwrap();
        assert!(forward_spectral(&FeatureMap::zeros(Shape::new(1, 6, 6)), &big).is_err());
        assert!(ForwardSpec::new(Kernel::delta(1), 0).is_err());
    }
}
