use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::ParamBlocks;
use super::real::Real;

/// Relative errors are measured against `max(|numeric|, RELATIVE_FLOOR)`.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    /// Worst relative error per parameter block.
    pub per_block: Vec<(String, f64)>,
}

/// Compares analytic gradients with central differences.
///
/// `f` returns the loss and the analytic gradient (shaped like the parameters).
/// The loss is taken as `f64` so a 32-bit model can be differenced against a
/// wider evaluation of the same parameter values. For each block, `probe_count` coordinates are chosen at random (all of them if
/// the block is smaller) and perturbed by ±`h`.
pub fn finite_diff_check<T, P, F>(
    f: F,
    params: &P,
    probe_count: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport
where
    T: Real,
    P: ParamBlocks<T> + Clone,
    F: Fn(&P) -> (f64, P),
{
    let (_, analytic) = f(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        per_block: Vec::new(),
    };
    let analytic_blocks: Vec<Vec<T>> = analytic
        .blocks()
        .into_iter()
        .map(|(_, d)| d.to_vec())
        .collect();
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    for (b, name) in names.iter().enumerate() {
        let len = params.blocks()[b].1.len();
        if len == 0 {
            continue;
        }
        let coords = sample(&mut rng, len, probe_count.min(len));
        let mut worst = 0.0f64;
        for i in coords.iter() {
            let original = params.blocks()[b].1[i];
            let plus = original + T::of(h);
            let minus = original - T::of(h);
            work.blocks_mut()[b].1[i] = plus;
            let (lp, _) = f(&work);
            work.blocks_mut()[b].1[i] = minus;
            let (lm, _) = f(&work);
            work.blocks_mut()[b].1[i] = original;
            // Divide by the step actually representable in T.
            let step = plus.f64() - minus.f64();
            let numeric = (lp - lm) / step;
            let a = analytic_blocks[b][i].f64();
            let rel = (a - numeric).abs() / numeric.abs().max(RELATIVE_FLOOR);
            worst = worst.max(rel);
            report.probes += 1;
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.per_block.push((name.clone(), worst));
    }
    report
}
