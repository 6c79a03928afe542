//! Nearest block-circulant-with-circulant-blocks (BCCB) approximation of
//! token-to-token attention matrices.
//!
//! A BCCB matrix on an `h×w` token grid is fixed by one `h×w` generator: entry
//! `(q, p)` depends only on the circular offset `p − q`. Averaging each offset
//! class gives the Frobenius-orthogonal projection onto that subspace.

use crate::error::{Result, WrcError};
use crate::tensor::{FeatureMap, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    grid: (usize, usize),
    data: Vec<f64>,
}

impl AttentionMatrix {
    /// Row-major `(h·w)×(h·w)` matrix; row = query token.
    pub fn new(grid: (usize, usize), data: Vec<f64>) -> Result<Self> {
        let n = grid.0 * grid.1;
        if n == 0 {
            return Err(WrcError::Dimension("empty token grid".into()));
        }
        if data.len() != n * n {
            return Err(WrcError::Dimension(format!(
                "{}x{} grid needs {} entries, got {}",
                grid.0,
                grid.1,
                n * n,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WrcError::Validation(
                "attention entries must be finite".into(),
            ));
        }
        Ok(AttentionMatrix { grid, data })
    }

    pub fn from_fn(grid: (usize, usize), f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = grid.0 * grid.1;
        Self::new(grid, (0..n * n).map(|i| f(i / n, i % n)).collect())
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, q: usize, p: usize) -> f64 {
        self.data[q * self.side() + p]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Offset class of entry `(q, p)` as a generator index.
    fn offset(&self, q: usize, p: usize) -> usize {
        let (h, w) = self.grid;
        let (qy, qx) = (q / w, q % w);
        let (py, px) = (p / w, p % w);
        ((py + h - qy) % h) * w + (px + w - qx) % w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BccbGenerator {
    pub grid: (usize, usize),
    /// `h×w` map indexed by circular offset `(Δy, Δx)`.
    pub gen: Vec<f64>,
}

impl BccbGenerator {
    pub fn new(grid: (usize, usize), gen: Vec<f64>) -> Result<Self> {
        if gen.len() != grid.0 * grid.1 || gen.is_empty() {
            return Err(WrcError::Dimension(format!(
                "generator for a {}x{} grid needs {} entries, got {}",
                grid.0,
                grid.1,
                grid.0 * grid.1,
                gen.len()
            )));
        }
        Ok(BccbGenerator { grid, gen })
    }

    pub fn to_feature_map(&self) -> Result<FeatureMap> {
        FeatureMap::new(Shape::new(1, self.grid.0, self.grid.1), self.gen.clone())
    }
}

pub fn project_bccb(m: &AttentionMatrix) -> BccbGenerator {
    let n = m.side();
    // Row 0 holds one member of every offset class. Averaging deviations from
    // it keeps already-constant classes exact.
    let anchor: Vec<f64> = (0..n).map(|p| m.get(0, p)).collect();
    let mut dev = vec![0.0; n];
    for q in 0..n {
        for p in 0..n {
            let d = m.offset(q, p);
            dev[d] += m.get(q, p) - anchor[d];
        }
    }
    let gen = anchor
        .iter()
        .zip(&dev)
        .map(|(a, d)| a + d / n as f64)
        .collect();
    BccbGenerator { grid: m.grid, gen }
}

pub fn expand_bccb(g: &BccbGenerator) -> AttentionMatrix {
    let (h, w) = g.grid;
    AttentionMatrix::from_fn(g.grid, |q, p| {
        let (qy, qx) = (q / w, q % w);
        let (py, px) = (p / w, p % w);
        g.gen[((py + h - qy) % h) * w + (px + w - qx) % w]
    })
    .expect("generator grid is nonempty")
}

/// `‖m − expand(project(m))‖_F / ‖m‖_F` and the projected generator.
pub fn bccb_residual(m: &AttentionMatrix) -> Result<(f64, BccbGenerator)> {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Err(WrcError::Contract(
            "residual of a zero matrix is undefined".into(),
        ));
    }
    let g = project_bccb(m);
    let n = m.side();
    let mut sq = 0.0;
    for q in 0..n {
        for p in 0..n {
            let d = m.get(q, p) - g.gen[m.offset(q, p)];
            sq += d * d;
        }
    }
    Ok((sq.sqrt() / norm, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportMode {
    /// Average all matrices entrywise, then project once.
    #[default]
    HeadAveraged,
    /// Project every matrix separately.
    PerMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub residuals: Vec<f64>,
    pub generators: Vec<BccbGenerator>,
}

impl LayerReport {
    /// Residuals as a `1×1×L` tensor and generators as an `L×h×w` tensor.
    pub fn to_tensors(&self) -> Result<(FeatureMap, FeatureMap)> {
        let res = FeatureMap::new(
            Shape::new(1, 1, self.residuals.len()),
            self.residuals.clone(),
        )?;
        let (h, w) = self.generators[0].grid;
        let gens = FeatureMap::from_planes(
            h,
            w,
            self.generators.iter().map(|g| g.gen.clone()).collect(),
        )?;
        Ok((res, gens))
    }
}

pub fn layer_report(mats: &[AttentionMatrix], mode: ReportMode) -> Result<LayerReport> {
    let first = mats
        .first()
        .ok_or_else(|| WrcError::Contract("layer report needs at least one matrix".into()))?;
    if let Some(m) = mats.iter().find(|m| m.grid != first.grid) {
        return Err(WrcError::Dimension(format!(
            "grid {:?} does not match {:?}",
            m.grid, first.grid
        )));
    }
    let targets = match mode {
        ReportMode::PerMatrix => mats.to_vec(),
        ReportMode::HeadAveraged => {
            let scale = 1.0 / mats.len() as f64;
            let mut mean = vec![0.0; first.data.len()];
            for m in mats {
                for (acc, v) in mean.iter_mut().zip(&m.data) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v *= scale);
            vec![AttentionMatrix::new(first.grid, mean)?]
        }
    };
    let mut report = LayerReport {
        residuals: Vec::new(),
        generators: Vec::new(),
    };
    for m in &targets {
        let (r, g) = bccb_residual(m)?;
        report.residuals.push(r);
        report.generators.push(g);
    }
    Ok(report)
}

/// Reads every channel of an `L×N×N` tensor as an attention matrix on `grid`.
/// Without a grid, `N` must be a perfect square and the grid is taken square.
pub fn matrices_from_tensor(
    t: &FeatureMap,
    grid: Option<(usize, usize)>,
) -> Result<Vec<AttentionMatrix>> {
    let s = t.shape();
    if s.height != s.width {
        return Err(WrcError::Validation(format!(
            "attention slices must be square, got {s}"
        )));
    }
    let grid = match grid {
        Some(g) => g,
        None => {
            let r = (s.height as f64).sqrt().round() as usize;
            if r * r != s.height {
                return Err(WrcError::Validation(format!(
                    "side {} is not a perfect square; pass the token grid explicitly",
                    s.height
                )));
            }
            (r, r)
        }
    };
    if grid.0 * grid.1 != s.height {
        return Err(WrcError::Dimension(format!(
            "grid {}x{} does not match slice side {}",
            grid.0, grid.1, s.height
        )));
    }
    t.channels()
        .map(|plane| AttentionMatrix::new(grid, plane.to_vec()))
        .collect()
}

pub fn matrices_to_tensor(mats: &[AttentionMatrix]) -> Result<FeatureMap> {
    let n = mats.first().map_or(0, |m| m.side());
    FeatureMap::from_planes(n, n, mats.iter().map(|m| m.data.clone()).collect())
}
