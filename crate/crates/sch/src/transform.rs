//! Multi-axis cosine transforms between collocation values and spectral
//! coefficients, backed by `rustdct`.
//!
//! The per-axis kernels are the unnormalized DCT-II (analysis) and DCT-III
//! (synthesis); all normalization lives in the grid's scaling tables so that
//! the spectral array holds coefficients with respect to the L²-orthonormal
//! cosine basis.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

pub struct CosinePlans {
    n: usize,
    dct2: Arc<dyn TransformType2And3<f64>>,
    dct3: Arc<dyn TransformType2And3<f64>>,
}

impl CosinePlans {
    pub fn new(n: usize) -> Self {
        let mut planner = DctPlanner::new();
        CosinePlans {
            n,
            dct2: planner.plan_dct2(n),
            dct3: planner.plan_dct3(n),
        }
    }

    fn scratch_len(&self) -> usize {
        self.dct2
            .get_scratch_len()
            .max(self.dct3.get_scratch_len())
    }
}

enum Kernel {
    Analysis,
    Synthesis,
}

/// Apply the per-axis kernel along every axis of the row-major array
/// `data` of shape `[n; d]`.
fn transform_all_axes(plans: &CosinePlans, d: usize, data: &mut [f64], kernel: Kernel) {
    let n = plans.n;
    debug_assert_eq!(data.len(), n.pow(d as u32));
    let mut line = vec![0.0; n];
    let mut scratch = vec![0.0; plans.scratch_len()];
    for axis in 0..d {
        // stride between consecutive entries along `axis`
        let stride = n.pow((d - 1 - axis) as u32);
        let lines = data.len() / n;
        for li in 0..lines {
            // decompose li into (outer, inner) blocks around the axis
            let inner = li % stride;
            let outer = li / stride;
            let base = outer * stride * n + inner;
            if stride == 1 {
                let row = &mut data[base..base + n];
                match kernel {
                    Kernel::Analysis => plans.dct2.process_dct2_with_scratch(row, &mut scratch),
                    Kernel::Synthesis => plans.dct3.process_dct3_with_scratch(row, &mut scratch),
                }
            } else {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                match kernel {
                    Kernel::Analysis => {
                        plans.dct2.process_dct2_with_scratch(&mut line, &mut scratch)
                    }
                    Kernel::Synthesis => {
                        plans.dct3.process_dct3_with_scratch(&mut line, &mut scratch)
                    }
                }
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Collocation values -> orthonormal-basis coefficients (in place, with the
/// grid's forward scaling applied by the caller).
pub fn analyze(plans: &CosinePlans, d: usize, data: &mut [f64]) {
    transform_all_axes(plans, d, data, Kernel::Analysis);
}

/// Scaled coefficients -> collocation values (in place).
pub fn synthesize(plans: &CosinePlans, d: usize, data: &mut [f64]) {
    transform_all_axes(plans, d, data, Kernel::Synthesis);
}
