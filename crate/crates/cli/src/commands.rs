use std::path::Path;

use wrc_core::bccb::{layer_report, matrices_from_tensor, ReportMode};
use wrc_core::bench::{run_bench, run_sweep, BenchCase};
use wrc_core::oracle::{dense_solve_problem, max_relative_error};
use wrc_core::solver::stationarity;
use wrc_core::synth::Synth;
use wrc_core::weights::{default_x0, predict_weights, WeightParam, WeightPredictor};
use wrc_core::wrct::{
    read_kernel, read_tensor, read_weight_field, write_kernel, write_tensor, write_weight_field,
};
use wrc_core::{
    forward_spatial, objective_gradient, wrc_solve_with, FeatureMap, ForwardSpec, Shape,
    SolveOptions, WeightField, WeightRole, WrcError, WrcProblem,
};

use crate::{exit, CmdResult, Command, FixtureKind, ProblemArgs};

/// Agreement required between the closed form and the dense solve.
const ORACLE_TOL: f64 = 1e-6;

pub fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Forward {
            x,
            kernel,
            scale,
            out,
        } => forward(&x, &kernel, scale as usize, &out),
        Command::Solve {
            problem,
            out,
            check_stationarity,
            allow_complex,
            threads,
        } => solve(
            &problem,
            &out,
            check_stationarity,
            allow_complex,
            threads as usize,
        ),
        Command::OracleCheck {
            problem,
            out,
            corrupt_solver,
        } => oracle_check(&problem, out.as_deref(), corrupt_solver),
        Command::Bccb {
            attn,
            grid,
            per_slice,
            out,
        } => bccb(&attn, grid, per_slice, &out),
        Command::Bench {
            sizes,
            scale,
            kernel,
            channels,
            repeats,
            seed,
            no_dense,
            threads,
        } => {
            let base = BenchCase {
                name: if threads > 1 {
                    format!("par{threads}-side")
                } else {
                    "side".into()
                },
                channels: channels as usize,
                height: 0,
                width: 0,
                scale: scale as usize,
                kernel: kernel as usize,
                repeats: repeats as usize,
                seed,
                dense: !no_dense,
                threads: threads as usize,
            };
            bench(&base, &sizes)
        }
        Command::Generate {
            kind,
            shape,
            seed,
            lo,
            hi,
            out,
        } => generate(kind, shape, seed, lo, hi, &out),
    }
}

fn forward(x: &Path, kernel: &Path, scale: usize, out: &Path) -> CmdResult {
    let x = read_tensor(x)?;
    let spec = ForwardSpec::new(read_kernel(kernel)?, scale)?;
    let y = forward_spatial(&x, &spec)?;
    write_tensor(&y, out)?;
    println!("forward {} -> {}", x.shape(), y.shape());
    Ok(0)
}

fn load_x0(policy: &str, y: &FeatureMap, s: usize) -> wrc_core::Result<FeatureMap> {
    match policy {
        "zero" => Ok(FeatureMap::zeros(y.shape().upscaled(s))),
        "bilinear" => default_x0(y, s),
        path => read_tensor(path),
    }
}

fn weight_source(
    constant: Option<f64>,
    file: Option<&Path>,
    shape: Shape,
    role: WeightRole,
    default: Option<f64>,
) -> wrc_core::Result<WeightField> {
    match (constant, file) {
        (Some(v), _) => WeightField::constant(shape, v, role),
        (None, Some(p)) => read_weight_field(p, role),
        (None, None) => match default {
            Some(v) => WeightField::constant(shape, v, role),
            None => Err(WrcError::Validation(
                "no regularizer weight given (use --wlam-const, --wlam, or --data-conv/--reg-conv)"
                    .into(),
            )),
        },
    }
}

fn build_problem(a: &ProblemArgs) -> wrc_core::Result<WrcProblem> {
    let y = read_tensor(&a.y)?;
    let s = a.scale as usize;
    let spec = ForwardSpec::new(read_kernel(&a.kernel)?, s)?;
    let high = spec.input_shape(y.shape())?;
    let x0 = load_x0(&a.x0, &y, s)?;
    let (w_data, w_reg, default_eps) = match (&a.data_conv, &a.reg_conv) {
        (Some(dc), Some(rc)) => {
            let param = WeightParam::new(a.weight_mode.into(), a.bias);
            let predictor = WeightPredictor::Convolution {
                data_conv: read_kernel(dc)?,
                reg_conv: read_kernel(rc)?,
                param,
            };
            let (d, r) = predict_weights(&predictor, &y, &x0)?;
            (d, r, param.eps())
        }
        _ => (
            weight_source(
                a.w_const,
                a.w.as_deref(),
                y.shape(),
                WeightRole::DataFidelity,
                Some(1.0),
            )?,
            weight_source(
                a.wlam_const,
                a.wlam.as_deref(),
                high,
                WeightRole::Regularizer,
                None,
            )?,
            0.0,
        ),
    };
    WrcProblem::new(y, spec, w_data, w_reg, x0, a.eps.unwrap_or(default_eps))
}

fn solve(
    a: &ProblemArgs,
    out: &Path,
    check: bool,
    allow_complex: bool,
    threads: usize,
) -> CmdResult {
    let p = build_problem(a)?;
    let mut opts = SolveOptions {
        threads,
        ..SolveOptions::default()
    };
    if allow_complex {
        opts.max_imag_residue = None;
    }
    let sol = wrc_solve_with(&p, &opts)?;
    write_tensor(&sol.x, out)?;
    println!(
        "solve {} -> {} imag_residue={:e}",
        p.y.shape(),
        sol.x.shape(),
        sol.imag_residue
    );
    if check {
        let grad = objective_gradient(&p, &sol.x)?.max_abs();
        println!(
            "stationarity grad_max={grad:e} scaled={:e}",
            stationarity(&p, &sol.x)?
        );
    }
    Ok(0)
}

fn oracle_check(a: &ProblemArgs, out: Option<&Path>, corrupt: bool) -> CmdResult {
    let p = build_problem(a)?;
    let opts = SolveOptions {
        max_imag_residue: None,
        threads: 1,
    };
    let sol = wrc_solve_with(&p, &opts)?;
    let mut x = sol.x;
    if corrupt {
        let mut data = x.into_data();
        data[0] += 1e-3;
        x = FeatureMap::new(p.high_shape(), data)?;
    }
    let dense = dense_solve_problem(&p)?;
    if let Some(path) = out {
        write_tensor(&dense, path)?;
    }
    let err = max_relative_error(&x, &dense)?;
    println!(
        "oracle max_rel_err={err:e} stationarity={:e} imag_residue={:e}",
        stationarity(&p, &x)?,
        sol.imag_residue
    );
    if err < ORACLE_TOL {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL");
        Ok(exit::ORACLE_FAIL)
    }
}

fn bccb(attn: &Path, grid: Option<(usize, usize)>, per_slice: bool, out: &Path) -> CmdResult {
    let mats = matrices_from_tensor(&read_tensor(attn)?, grid)?;
    let each = layer_report(&mats, ReportMode::PerMatrix)?;
    for (i, r) in each.residuals.iter().enumerate() {
        println!("bccb slice={i} rel_residual={r:?}");
    }
    let report = if per_slice {
        each
    } else {
        let avg = layer_report(&mats, ReportMode::HeadAveraged)?;
        println!(
            "bccb mean slices={} rel_residual={:?}",
            mats.len(),
            avg.residuals[0]
        );
        avg
    };
    let (_, gens) = report.to_tensors()?;
    write_tensor(&gens, out)?;
    Ok(0)
}

fn bench(base: &BenchCase, sizes: &[usize]) -> CmdResult {
    if sizes.is_empty() {
        return Err(WrcError::Validation("no sizes given".into()));
    }
    if sizes.len() == 1 {
        let case = BenchCase {
            name: format!("{}{}", base.name, sizes[0]),
            height: sizes[0],
            width: sizes[0],
            ..base.clone()
        };
        for line in run_bench(&case)?.lines() {
            println!("{line}");
        }
        return Ok(0);
    }
    let sweep = run_sweep(base, sizes)?;
    for r in &sweep.results {
        for line in r.lines() {
            println!("{line}");
        }
    }
    println!("{}", sweep.summary());
    Ok(0)
}

fn generate(
    kind: FixtureKind,
    (c, h, w): (usize, usize, usize),
    seed: u64,
    lo: f64,
    hi: f64,
    out: &Path,
) -> CmdResult {
    if lo > hi {
        return Err(WrcError::Validation(format!("--lo {lo} exceeds --hi {hi}")));
    }
    let mut g = Synth::new(seed);
    let shape = Shape::new(c, h, w);
    match kind {
        FixtureKind::Tensor => write_tensor(&g.feature_map(shape, lo, hi), out)?,
        FixtureKind::Kernel => {
            let k = wrc_core::Kernel::centered(c, h, w, g.values(shape.len(), lo, hi))?;
            write_kernel(&k, out)?
        }
        FixtureKind::DataWeight | FixtureKind::RegWeight => {
            if lo < 0.0 {
                return Err(WrcError::Validation("weights need --lo >= 0".into()));
            }
            let role = if kind == FixtureKind::DataWeight {
                WeightRole::DataFidelity
            } else {
                WeightRole::Regularizer
            };
            write_weight_field(&g.weight_field(shape, lo, hi, role), out)?
        }
    }
    println!("generate {shape} seed={seed}");
    Ok(0)
}
