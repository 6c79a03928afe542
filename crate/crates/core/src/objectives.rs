//! Cosine-plus-L2 feature losses.

use crate::error::{Result, WrcError};
use crate::tensor::{FeatureMap, Shape};

/// Window of a high-resolution feature map, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRegion {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        CropRegion {
            top,
            left,
            height,
            width,
        }
    }

    pub fn check_inside(&self, shape: Shape) -> Result<()> {
        let fits = self.height > 0
            && self.width > 0
            && self.top + self.height <= shape.height
            && self.left + self.width <= shape.width;
        if fits {
            Ok(())
        } else {
            Err(WrcError::Dimension(format!(
                "region {}x{} at ({}, {}) does not fit in {shape}",
                self.height, self.width, self.top, self.left
            )))
        }
    }

    pub fn extract(&self, z: &FeatureMap) -> Result<FeatureMap> {
        self.check_inside(z.shape())?;
        let shape = Shape::new(z.shape().channels, self.height, self.width);
        FeatureMap::from_fn(shape, |c, y, x| z.get(c, self.top + y, self.left + x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// `1 − mean cos`, in `[0, 2]`.
    pub cosine_term: f64,
    /// Euclidean norm of the difference over the whole tensor.
    pub l2_term: f64,
    /// Locations where a channel vector was zero and the cosine was taken as 0.
    pub degenerate: usize,
}

impl LossValue {
    pub fn value(&self) -> f64 {
        self.cosine_term + self.l2_term
    }
}

/// `1 − mean_(y,x) cos(a[:,y,x], b[:,y,x]) + ‖a − b‖₂`.
pub fn cosine_l2_loss(a: &FeatureMap, b: &FeatureMap) -> Result<LossValue> {
    let shape = a.shape();
    shape.expect_eq(&b.shape(), "loss operands")?;
    let plane = shape.plane();
    if plane == 0 {
        return Err(WrcError::Dimension("loss over an empty grid".into()));
    }
    let mut dot = vec![0.0; plane];
    let mut na = vec![0.0; plane];
    let mut nb = vec![0.0; plane];
    let mut sq = 0.0;
    for c in 0..shape.channels {
        for (i, (&p, &q)) in a.channel(c).iter().zip(b.channel(c)).enumerate() {
            dot[i] += p * q;
            na[i] += p * p;
            nb[i] += q * q;
            sq += (p - q) * (p - q);
        }
    }
    let mut degenerate = 0;
    let mut cos_sum = 0.0;
    for i in 0..plane {
        let denom = (na[i] * nb[i]).sqrt();
        if denom == 0.0 {
            degenerate += 1;
        } else {
            cos_sum += (dot[i] / denom).clamp(-1.0, 1.0);
        }
    }
    Ok(LossValue {
        cosine_term: 1.0 - cos_sum / plane as f64,
        l2_term: sq.sqrt(),
        degenerate,
    })
}

/// Loss between a crop's features and the matching window of the full map.
pub fn local_loss(z_c: &FeatureMap, z_pp: &FeatureMap, region: CropRegion) -> Result<LossValue> {
    let zs = z_c.shape();
    if (zs.height, zs.width) != (region.height, region.width) {
        return Err(WrcError::Dimension(format!(
            "region {}x{} does not match crop features {zs}",
            region.height, region.width
        )));
    }
    cosine_l2_loss(z_c, &region.extract(z_pp)?)
}

pub fn total_loss(l_global: f64, l_local: f64, l_self: f64) -> f64 {
    l_global + l_local + l_self
}
