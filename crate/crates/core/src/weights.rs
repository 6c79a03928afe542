//! Weight prediction, positivity parameterizations and the bilinear prior.

use crate::error::{Result, WrcError};
use crate::forward::{forward_spatial, ForwardSpec};
use crate::tensor::{FeatureMap, Kernel, Shape, WeightField, WeightRole};

/// Offset added to `softplus(bias)` when the guard is derived from a bias.
pub const EPS_FLOOR: f64 = 1e-5;

/// Default guard when no learnable bias is in play.
pub const DEFAULT_EPS: f64 = 1e-5;

/// `ln(1 + eᵛ)` without overflow for large `v`.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// How raw predictor outputs are mapped to nonnegative weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Values pass through; negatives are rejected.
    None,
    /// `ln(1 + eᵛ)`.
    Softplus,
    /// `ln(1 + v²)`.
    #[default]
    Log1p,
}

impl std::str::FromStr for WeightMode {
    type Err = WrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightMode::None),
            "softplus" => Ok(WeightMode::Softplus),
            "log1p" => Ok(WeightMode::Log1p),
            other => Err(WrcError::Validation(format!(
                "unknown weight mode {other:?} (expected none, softplus or log1p)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightParam {
    pub mode: WeightMode,
    /// Feeds the epsilon guard as `softplus(bias) + 1e-5`.
    pub bias: f64,
}

impl WeightParam {
    pub fn new(mode: WeightMode, bias: f64) -> Self {
        WeightParam { mode, bias }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match self.mode {
            WeightMode::None => v,
            WeightMode::Softplus => softplus(v),
            WeightMode::Log1p => (v * v).ln_1p(),
        }
    }

    /// Denominator guard derived from the bias.
    pub fn eps(&self) -> f64 {
        softplus(self.bias) + EPS_FLOOR
    }
}

/// Maps raw predictor output through the parameterization.
pub fn apply_weight_param(
    raw: &FeatureMap,
    p: &WeightParam,
    role: WeightRole,
) -> Result<WeightField> {
    let data = raw.data().iter().map(|&v| p.apply(v)).collect();
    WeightField::new(raw.shape(), data, role)
}

/// Source of the two weight fields.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPredictor {
    /// Fixed fields, returned as stored.
    Matrix { data: WeightField, reg: WeightField },
    /// One depthwise circular convolution per field, followed by the
    /// parameterization. `data_conv` sees the low-res input, `reg_conv` the prior.
    Convolution {
        data_conv: Kernel,
        reg_conv: Kernel,
        param: WeightParam,
    },
}

impl WeightPredictor {
    pub fn matrix(data: WeightField, reg: WeightField) -> Result<Self> {
        if data.role() != WeightRole::DataFidelity || reg.role() != WeightRole::Regularizer {
            return Err(WrcError::Validation(
                "matrix predictor fields have swapped roles".into(),
            ));
        }
        Ok(WeightPredictor::Matrix { data, reg })
    }

    /// Parameterization in effect (matrix fields are used as-is).
    pub fn param(&self) -> WeightParam {
        match self {
            WeightPredictor::Matrix { .. } => WeightParam::new(WeightMode::None, 0.0),
            WeightPredictor::Convolution { param, .. } => *param,
        }
    }
}

/// Produces `(w_data, w_reg)` from the low-res input and the high-res prior.
pub fn predict_weights(
    predictor: &WeightPredictor,
    x_lo: &FeatureMap,
    x0: &FeatureMap,
) -> Result<(WeightField, WeightField)> {
    match predictor {
        WeightPredictor::Matrix { data, reg } => {
            x_lo.shape()
                .expect_eq(&data.shape(), "data-fidelity weight field")?;
            x0.shape()
                .expect_eq(&reg.shape(), "regularizer weight field")?;
            Ok((data.clone(), reg.clone()))
        }
        WeightPredictor::Convolution {
            data_conv,
            reg_conv,
            param,
        } => {
            let raw_data = forward_spatial(x_lo, &ForwardSpec::new(data_conv.clone(), 1)?)?;
            let raw_reg = forward_spatial(x0, &ForwardSpec::new(reg_conv.clone(), 1)?)?;
            Ok((
                apply_weight_param(&raw_data, param, WeightRole::DataFidelity)?,
                apply_weight_param(&raw_reg, param, WeightRole::Regularizer)?,
            ))
        }
    }
}

/// Corner-aligned bilinear upsampling by an integer factor.
///
/// Output sample `o` along an axis of input length `n` reads input position
/// `o·(n−1)/(n·s−1)`, so the corner samples coincide.
pub fn default_x0(y: &FeatureMap, s: usize) -> Result<FeatureMap> {
    if s == 0 {
        return Err(WrcError::Contract("scale must be at least 1".into()));
    }
    let shape = y.shape();
    let out = shape.upscaled(s);
    let rows = axis_taps(shape.height, out.height);
    let cols = axis_taps(shape.width, out.width);
    FeatureMap::from_fn(out, |c, oy, ox| {
        let (y0, y1, fy) = rows[oy];
        let (x0, x1, fx) = cols[ox];
        let top = y.get(c, y0, x0) * (1.0 - fx) + y.get(c, y0, x1) * fx;
        let bottom = y.get(c, y1, x0) * (1.0 - fx) + y.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let ratio = if n_out > 1 {
        (n_in - 1) as f64 / (n_out - 1) as f64
    } else {
        0.0
    };
    (0..n_out)
        .map(|o| {
            let pos = o as f64 * ratio;
            let lo = (pos.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Constant weight fields for the given observation and scale.
pub fn constant_fields(
    observed: Shape,
    s: usize,
    data_value: f64,
    reg_value: f64,
) -> Result<(WeightField, WeightField)> {
    Ok((
        WeightField::constant(observed, data_value, WeightRole::DataFidelity)?,
        WeightField::constant(observed.upscaled(s), reg_value, WeightRole::Regularizer)?,
    ))
}
