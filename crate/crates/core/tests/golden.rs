//! Byte-level and value-level regression against files in `tests/data`.
//!
//! Regenerate with `cargo test -p wrc-core --test golden -- --ignored`.

mod common;

use std::fs;

use common::{data_dir, golden_inputs, golden_problem};
use wrc_core::wrct::{encode_tensor, read_kernel, read_tensor, write_kernel, write_tensor};
use wrc_core::{forward_spatial, wrc_solve, ForwardSpec};

const TENSOR: &str = "tensor_4x16x16.wrct";
const KERNEL: &str = "kernel_4x3x3.wrct";
const FORWARD: &str = "forward_s2.wrct";
const SOLVE: &str = "solve_s2.wrct";

#[test]
#[ignore = "rewrites the golden files"]
fn regenerate_golden_files() {
    let dir = data_dir();
    fs::create_dir_all(&dir).unwrap();
    let (x, k) = golden_inputs();
    write_tensor(&x, dir.join(TENSOR)).unwrap();
    write_kernel(&k, dir.join(KERNEL)).unwrap();
    let y = forward_spatial(&x, &ForwardSpec::new(k, 2).unwrap()).unwrap();
    write_tensor(&y, dir.join(FORWARD)).unwrap();
    write_tensor(&wrc_solve(&golden_problem()).unwrap(), dir.join(SOLVE)).unwrap();
}

#[test]
fn tensor_golden_is_byte_identical() {
    let (x, _) = golden_inputs();
    let stored = fs::read(data_dir().join(TENSOR)).unwrap();
    assert_eq!(stored.len(), 4 + 1 + 1 + 12 + 4 * 16 * 16 * 8);
    assert_eq!(encode_tensor(&x), stored);
}

#[test]
fn golden_header_fields() {
    let stored = fs::read(data_dir().join(TENSOR)).unwrap();
    assert_eq!(&stored[..4], b"WRCT");
    assert_eq!(stored[4], 1);
    assert_eq!(stored[5], 0);
    assert_eq!(&stored[6..18], &[4, 0, 0, 0, 16, 0, 0, 0, 16, 0, 0, 0]);
}

#[test]
fn kernel_golden_round_trips() {
    let (_, k) = golden_inputs();
    assert_eq!(read_kernel(data_dir().join(KERNEL)).unwrap(), k);
}

#[test]
fn forward_golden_is_bit_exact() {
    let (x, k) = golden_inputs();
    let y = forward_spatial(&x, &ForwardSpec::new(k, 2).unwrap()).unwrap();
    assert_eq!(read_tensor(data_dir().join(FORWARD)).unwrap(), y);
}

#[test]
fn solve_golden_within_tolerance() {
    // FFT rounding may differ across platforms, so compare values, not bytes.
    let stored = read_tensor(data_dir().join(SOLVE)).unwrap();
    let x = wrc_solve(&golden_problem()).unwrap();
    assert!(common::max_abs_diff(&x, &stored) < 1e-12);
}

#[test]
fn frozen_values() {
    let (x, _) = golden_inputs();
    assert_eq!(x.get(0, 0, 0).to_bits(), FROZEN_X000);
    let y = read_tensor(data_dir().join(FORWARD)).unwrap();
    assert!((y.get(3, 7, 7) - FROZEN_Y377).abs() < 1e-15);
    let s = read_tensor(data_dir().join(SOLVE)).unwrap();
    assert!((s.get(1, 5, 9) - FROZEN_S159).abs() < 1e-12);
}

const FROZEN_X000: u64 = 0x3fcf_6d8f_ecf8_8ee8;
const FROZEN_Y377: f64 = -0.9441000652049332;
const FROZEN_S159: f64 = 0.21625852300258902;
