#![allow(dead_code)]

use std::path::PathBuf;

use wrc_core::synth::Synth;
use wrc_core::{FeatureMap, ForwardSpec, Kernel, Shape, WeightRole, WrcProblem};

pub const GOLDEN_SEED: u64 = 2024;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
}

/// 4×16×16 uniform [-1, 1] tensor followed by a 4-channel centered 3×3 kernel,
/// both from one stream seeded with [`GOLDEN_SEED`].
pub fn golden_inputs() -> (FeatureMap, Kernel) {
    let mut g = Synth::new(GOLDEN_SEED);
    let x = g.feature_map(Shape::new(4, 16, 16), -1.0, 1.0);
    let k = g.kernel(4, 3, 3);
    (x, k)
}

/// Observation, prior and constant weights for the golden solve.
pub fn golden_problem() -> WrcProblem {
    let (x, k) = golden_inputs();
    let spec = ForwardSpec::new(k, 2).unwrap();
    let y = wrc_core::forward_spatial(&x, &spec).unwrap();
    let x0 = wrc_core::weights::default_x0(&y, 2).unwrap();
    let (d, r) = wrc_core::weights::constant_fields(y.shape(), 2, 1.0, 0.1).unwrap();
    WrcProblem::new(y, spec, d, r, x0, 0.0).unwrap()
}

/// Random problem with every field drawn from `g`; weights uniform in `[lo, hi]`
/// per entry when `varying`, else one constant per field.
pub fn random_problem(
    g: &mut Synth,
    high: Shape,
    s: usize,
    k: usize,
    (lo, hi): (f64, f64),
    varying: bool,
) -> WrcProblem {
    let low = high.downscaled(s).unwrap();
    let y = g.feature_map(low, -1.0, 1.0);
    let spec = ForwardSpec::new(g.kernel(high.channels, k, k), s).unwrap();
    let x0 = g.feature_map(high, -1.0, 1.0);
    let (d, r) = if varying {
        (
            g.weight_field(low, lo, hi, WeightRole::DataFidelity),
            g.weight_field(high, lo, hi, WeightRole::Regularizer),
        )
    } else {
        let (dv, rv) = (g.uniform(lo, hi), g.uniform(lo, hi));
        wrc_core::weights::constant_fields(low, s, dv, rv).unwrap()
    };
    WrcProblem::new(y, spec, d, r, x0, 0.0).unwrap()
}

pub fn max_abs_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
    a.zip_with(b, |p, q| (p - q).abs()).unwrap().max_abs()
}
