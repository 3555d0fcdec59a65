use super::TrainConfig;

/// Number of warmup steps: `round(warmup_fraction × total_steps)`.
pub fn warmup_steps(total_steps: usize, cfg: &TrainConfig) -> usize {
    (cfg.warmup_fraction * total_steps as f64).round() as usize
}

/// Linear ramp `0 → peak` over the warmup steps, then linear decay to `0` at
/// `total_steps`. Step `s` is the 0-based index of the optimizer update.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    assert!(step <= total_steps, "step {step} beyond total {total_steps}");
    let warmup = warmup_steps(total_steps, cfg);
    if step < warmup {
        cfg.peak_lr * step as f64 / warmup as f64
    } else if total_steps == warmup {
        0.0
    } else {
        cfg.peak_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}
