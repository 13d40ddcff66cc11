use rand::Rng;

/// Trigger probability per event: `min(c·log n / r, 1)`.
pub fn coin_probability(c_log_n: u32, r: u64) -> f64 {
    (c_log_n as f64 / r.max(1) as f64).min(1.0)
}

/// Triggers the leader must collect: `⌈c·log n / 2⌉`.
pub fn trigger_target(c_log_n: u32) -> u32 {
    c_log_n.div_ceil(2).max(1)
}

/// The detector's coin process in isolation. Feeds up to `k` events, each
/// flipping a coin with [`coin_probability`], and returns the number of
/// events seen when the leader's trigger count reached [`trigger_target`],
/// or `None` if it never did.
pub fn threshold_coin_process<R: Rng>(k: u64, r: u64, c_log_n: u32, rng: &mut R) -> Option<u64> {
    let p = coin_probability(c_log_n, r);
    let target = trigger_target(c_log_n);
    let mut heads = 0;
    for event in 1..=k {
        if rng.gen_bool(p) {
            heads += 1;
            if heads >= target {
                return Some(event);
            }
        }
    }
    None
}
