use rand::Rng;

use super::tensor::{Real, Tensor};

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform matrix of shape `rows×cols`, with `rows` as fan-in.
pub fn xavier_uniform<R: Real>(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<R> {
    let bound = xavier_bound(rows, cols);
    let data = (0..rows * cols)
        .map(|_| R::from_f64_lossy(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let a: Tensor<f32> = xavier_uniform(4, 5, &mut ChaCha8Rng::seed_from_u64(1));
        let b: Tensor<f32> = xavier_uniform(4, 5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let one: Tensor<f64> = xavier_uniform(1, 1, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(one.scalar_value().abs() <= xavier_bound(1, 1));
    }

    #[test]
    fn mean_near_zero() {
        let n = 100_000;
        let t: Tensor<f64> = xavier_uniform(1, n, &mut ChaCha8Rng::seed_from_u64(3));
        let bound = xavier_bound(1, n);
        let mean = t.sum() / n as f64;
        // uniform(-b, b) has standard deviation b/sqrt(3)
        let std_err = bound / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * std_err, "mean {mean} vs 3se {}", 3.0 * std_err);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }
}
