//! Wall-clock timings of the FFT solver against the dense reference.
//!
//! Problems are generated from a seed with unit data weights and a constant
//! regularizer, which is the regime where both paths solve the same system.
//! Each case is checked for correctness on its warmup output before any timed
//! sample is taken.

use std::time::Instant;

use crate::error::{Result, WrcError};
use crate::forward::ForwardSpec;
use crate::oracle::{dense_solve_problem, max_relative_error, MAX_DENSE_UNKNOWNS};
use crate::solver::{converse2d_solve, wrc_solve_with, SolveOptions, WrcProblem};
use crate::synth::Synth;
use crate::tensor::{FeatureMap, Shape};
use crate::weights::constant_fields;

pub const WARMUP: usize = 2;
/// Regularizer weight of generated problems.
pub const BENCH_LAMBDA: f64 = 0.05;
/// Gate tolerance against the dense solve.
pub const DENSE_GATE: f64 = 1e-6;
/// Gate tolerance against the Converse2D reduction.
pub const REDUCTION_GATE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: String,
    pub channels: usize,
    /// High-resolution height.
    pub height: usize,
    /// High-resolution width.
    pub width: usize,
    pub scale: usize,
    pub kernel: usize,
    pub repeats: usize,
    pub seed: u64,
    pub dense: bool,
    /// Channel-parallel worker count for the FFT path.
    pub threads: usize,
}

impl BenchCase {
    pub fn square(name: impl Into<String>, side: usize, scale: usize) -> Self {
        BenchCase {
            name: name.into(),
            channels: 1,
            height: side,
            width: side,
            scale,
            kernel: 3,
            repeats: 5,
            seed: 0,
            dense: true,
            threads: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 {
            return Err(WrcError::Contract(format!(
                "repeats must be at least 3, got {}",
                self.repeats
            )));
        }
        if self.channels == 0 || self.threads == 0 || self.scale == 0 {
            return Err(WrcError::Contract(
                "channels, threads and scale must be positive".into(),
            ));
        }
        if !self.height.is_multiple_of(self.scale) || !self.width.is_multiple_of(self.scale) {
            return Err(WrcError::Dimension(format!(
                "{}x{} is not divisible by scale {}",
                self.height, self.width, self.scale
            )));
        }
        if self.dense && self.n() > MAX_DENSE_UNKNOWNS {
            return Err(WrcError::Capacity {
                size: self.n(),
                limit: MAX_DENSE_UNKNOWNS,
            });
        }
        Ok(())
    }

    /// Deterministic problem for this case; timings never feed back into it.
    pub fn problem(&self) -> Result<WrcProblem> {
        self.validate()?;
        let mut g = Synth::new(self.seed);
        let low = Shape::new(
            self.channels,
            self.height / self.scale,
            self.width / self.scale,
        );
        let y = g.feature_map(low, -1.0, 1.0);
        let spec = ForwardSpec::new(
            g.kernel(self.channels, self.kernel, self.kernel),
            self.scale,
        )?;
        let x0 = g.feature_map(low.upscaled(self.scale), -1.0, 1.0);
        let (w_data, w_reg) = constant_fields(low, self.scale, 1.0, BENCH_LAMBDA)?;
        WrcProblem::new(y, spec, w_data, w_reg, x0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub median_ns: u128,
    pub min_ns: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub name: String,
    pub n: usize,
    pub fft: Timing,
    pub dense: Option<Timing>,
    /// Max relative discrepancy seen by the correctness gate.
    pub gate_error: f64,
}

impl BenchResult {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![bench_line(&self.name, "fft", self.n, self.fft)];
        if let Some(t) = self.dense {
            out.push(bench_line(&self.name, "dense", self.n, t));
        }
        out
    }
}

pub fn bench_line(name: &str, path: &str, n: usize, t: Timing) -> String {
    format!(
        "bench case={name} path={path} n={n} median_ns={} min_ns={}",
        t.median_ns, t.min_ns
    )
}

/// Upper median and minimum of the samples.
pub fn summarize(samples: &mut [u128]) -> Timing {
    samples.sort_unstable();
    Timing {
        median_ns: samples[samples.len() / 2],
        min_ns: samples[0],
    }
}

/// Runs `f` for `WARMUP + repeats` iterations, hands the first warmup output
/// to `gate`, and times only the post-warmup iterations.
fn time_path(
    repeats: usize,
    mut f: impl FnMut() -> Result<FeatureMap>,
    gate: impl FnOnce(&FeatureMap) -> Result<()>,
) -> Result<Timing> {
    gate(&f()?)?;
    for _ in 1..WARMUP {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        let out = f()?;
        samples.push(t.elapsed().as_nanos());
        std::hint::black_box(out);
    }
    Ok(summarize(&mut samples))
}

pub fn run_bench(case: &BenchCase) -> Result<BenchResult> {
    let p = case.problem()?;
    let opts = SolveOptions {
        threads: case.threads,
        ..SolveOptions::default()
    };
    let solve = || wrc_solve_with(&p, &opts).map(|s| s.x);

    let mut reference = None;
    let dense = if case.dense {
        Some(time_path(
            case.repeats,
            || dense_solve_problem(&p),
            |x| {
                reference = Some(x.clone());
                Ok(())
            },
        )?)
    } else {
        None
    };
    let (reference, tol, against) = match reference {
        Some(x) => (x, DENSE_GATE, "dense solve"),
        None => (
            converse2d_solve(&p.y, &p.spec, BENCH_LAMBDA, &p.x0)?,
            REDUCTION_GATE,
            "converse2d",
        ),
    };
    let mut gate_error = f64::NAN;
    let fft = time_path(case.repeats, solve, |x| {
        gate_error = max_relative_error(x, &reference)?;
        if gate_error < tol {
            Ok(())
        } else {
            Err(WrcError::Contract(format!(
                "correctness gate against {against} failed: {gate_error:.3e} >= {tol:.0e}"
            )))
        }
    })?;
    Ok(BenchResult {
        name: case.name.clone(),
        n: case.n(),
        fft,
        dense,
        gate_error,
    })
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(points: &[(usize, u128)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|&(_, t)| (t.max(1) as f64).ln())
        .collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub results: Vec<BenchResult>,
    pub fft_slope: Option<f64>,
    pub dense_slope: Option<f64>,
}

impl Sweep {
    pub fn summary(&self) -> String {
        let fmt = |s: Option<f64>| s.map_or("na".to_string(), |v| format!("{v:.3}"));
        format!(
            "fit fft_slope={} dense_slope={}",
            fmt(self.fft_slope),
            fmt(self.dense_slope)
        )
    }
}

/// Runs `base` at each square side and fits the growth of both paths.
pub fn run_sweep(base: &BenchCase, sides: &[usize]) -> Result<Sweep> {
    let mut results = Vec::with_capacity(sides.len());
    for &side in sides {
        let case = BenchCase {
            name: format!("{}{side}", base.name),
            height: side,
            width: side,
            ..base.clone()
        };
        results.push(run_bench(&case)?);
    }
    let fft: Vec<_> = results.iter().map(|r| (r.n, r.fft.median_ns)).collect();
    let dense: Vec<_> = results
        .iter()
        .filter_map(|r| r.dense.map(|t| (r.n, t.median_ns)))
        .collect();
    Ok(Sweep {
        fft_slope: loglog_slope(&fft),
        dense_slope: loglog_slope(&dense),
        results,
    })
}
