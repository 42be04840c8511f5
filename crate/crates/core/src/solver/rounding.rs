/// Integer weights `max(1, round(w_ij * max s))` for routers that only accept integers.
pub fn round_weights(w: &[f64], spare: &[f64]) -> Vec<u64> {
    let smax = spare.iter().copied().fold(0.0, f64::max);
    w.iter()
        .map(|&x| ((x * smax).round() as u64).max(1))
        .collect()
}
