//! Image quality metrics and clustering agreement scores.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::image::Image;

/// Peak signal-to-noise ratio in dB with peak 255. Identical images give
/// `f64::INFINITY`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::Dimension(format!(
            "psnr of {}x{} and {}x{} images",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    let mse = mse(reference.pixels(), test.pixels());
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |k: u64| (k * k.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&k| pairs(k)).sum();
    let sum_a: f64 = rows.values().map(|&k| pairs(k)).sum();
    let sum_b: f64 = cols.values().map(|&k| pairs(k)).sum();
    let total = pairs(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        // both labelings trivial (all-in-one or all-singletons)
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_are_infinite() {
        let a = Image::filled(3, 3, 9.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn maximal_error_is_zero_db() {
        let a = Image::filled(4, 2, 0.0);
        let b = Image::filled(4, 2, 255.0);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_computed_two_pixels() {
        let a = Image::new(2, 1, vec![0.0, 0.0]).unwrap();
        let b = Image::new(2, 1, vec![10.0, 0.0]).unwrap();
        let expect = 10.0 * (65025.0f64 / 50.0).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 31.1411).abs() < 1e-4);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        assert!(psnr(&Image::filled(2, 2, 0.0), &Image::filled(4, 1, 0.0)).is_err());
    }

    #[test]
    fn ari_is_permutation_invariant() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [5, 5, 3, 3, 9, 9];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_known_value() {
        // classic example: ARI of these two partitions is 0.24242...
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - 0.242_424_242_424_242_4).abs() < 1e-12);
    }
}
