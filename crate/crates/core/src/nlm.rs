//! Pixelwise non-local means baseline.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Image;

/// NLM parameters. The filter strength is `h = filter_k · σ̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmConfig {
    pub filter_k: f64,
    /// Side of the comparison patch (odd).
    pub patch_size: usize,
    /// Side of the search window (odd).
    pub search_window: usize,
}

impl Default for NlmConfig {
    fn default() -> Self {
        NlmConfig {
            filter_k: 0.01,
            patch_size: 7,
            search_window: 21,
        }
    }
}

impl NlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.filter_k > 0.0 && self.filter_k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter_k {} must be positive",
                self.filter_k
            )));
        }
        for (name, v) in [
            ("patch_size", self.patch_size),
            ("search_window", self.search_window),
        ] {
            if v == 0 || v % 2 == 0 {
                return Err(Error::InvalidParameter(format!("{name} {v} must be odd")));
            }
        }
        Ok(())
    }
}

/// Weight given to a neighbour whose patch differs by `dist2` (sum of
/// squares over `d` pixels).
pub fn nlm_weight(dist2: f64, d: usize, sigma_hat: f64, h: f64) -> f64 {
    let excess = (dist2 / d as f64 - 2.0 * sigma_hat * sigma_hat).max(0.0);
    (-excess / (h * h)).exp()
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Denoises `y` with
/// `x̂ᵢ = Σⱼ w(i,j) yⱼ / Σⱼ w(i,j)` over the search window, where
/// `w(i,j) = exp(−max(‖Pᵢ − Pⱼ‖²/d − 2σ̂², 0) / h²)`.
///
/// The image is extended by mirror reflection, so border pixels see full
/// windows. `σ̂ = 0` returns `y` unchanged.
pub fn nlm_denoise(y: &Image, cfg: &NlmConfig, sigma_hat: f64) -> Result<Image> {
    cfg.validate()?;
    if !(sigma_hat >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma_hat {sigma_hat} must be non-negative"
        )));
    }
    let h = cfg.filter_k * sigma_hat;
    if h == 0.0 {
        return Ok(y.clone());
    }
    let (w, ht) = (y.width(), y.height());
    let hp = cfg.patch_size / 2;
    let hs = cfg.search_window / 2;
    let pad = hp + hs;
    let pw = w + 2 * pad;
    let ph = ht + 2 * pad;
    let mut padded = vec![0.0; pw * ph];
    for r in 0..ph {
        let sr = reflect(r as isize - pad as isize, ht);
        for c in 0..pw {
            let sc = reflect(c as isize - pad as isize, w);
            padded[r * pw + c] = y.get(sr, sc);
        }
    }
    let d = cfg.patch_size * cfg.patch_size;
    let span = 2 * hp + 1;

    let rows: Vec<Vec<f64>> = (0..ht)
        .into_par_iter()
        .map(|r| {
            let mut num = vec![0.0; w];
            let mut den = vec![0.0; w];
            let mut colsum = vec![0.0; w + 2 * hp];
            let at = |row: usize, col: usize| padded[row * pw + col];
            for dy in -(hs as isize)..=hs as isize {
                for dx in -(hs as isize)..=hs as isize {
                    let rr = (r + pad) as isize;
                    // colsum[q]: squared differences down patch column q
                    for (q, cs) in colsum.iter_mut().enumerate() {
                        let c0 = q + pad - hp;
                        let c1 = (c0 as isize + dx) as usize;
                        let mut acc = 0.0;
                        for a in -(hp as isize)..=hp as isize {
                            let r0 = (rr + a) as usize;
                            let r1 = (rr + a + dy) as usize;
                            let diff = at(r0, c0) - at(r1, c1);
                            acc += diff * diff;
                        }
                        *cs = acc;
                    }
                    let mut window: f64 = colsum[..span].iter().sum();
                    for c in 0..w {
                        if c > 0 {
                            window += colsum[c + span - 1] - colsum[c - 1];
                        }
                        let wt = nlm_weight(window.max(0.0), d, sigma_hat, h);
                        if wt > 0.0 {
                            let nr = (rr + dy) as usize;
                            let nc = ((c + pad) as isize + dx) as usize;
                            num[c] += wt * at(nr, nc);
                            den[c] += wt;
                        }
                    }
                }
            }
            num.iter().zip(&den).map(|(n, d)| n / d).collect()
        })
        .collect();
    Image::new(w, ht, rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{corrupt, NoiseSpec};

    #[test]
    fn zero_sigma_is_identity() {
        let img = Image::from_fn(9, 7, |r, c| (r * 13 + c * 7) as f64);
        assert_eq!(nlm_denoise(&img, &NlmConfig::default(), 0.0).unwrap(), img);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(12, 10, 42.0);
        let out = nlm_denoise(&img, &NlmConfig::default(), 5.0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn weights_bounded_and_self_maximal() {
        assert_eq!(nlm_weight(0.0, 49, 10.0, 0.1), 1.0);
        for dist2 in [1.0, 1e3, 1e5, 1e7] {
            let w = nlm_weight(dist2, 49, 3.0, 5.0);
            assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn output_is_convex_combination() {
        let img = corrupt(
            &Image::filled(20, 20, 100.0),
            NoiseSpec {
                sigma: 30.0,
                seed: 4,
            },
        );
        let cfg = NlmConfig {
            filter_k: 1.0,
            patch_size: 3,
            search_window: 5,
        };
        let out = nlm_denoise(&img, &cfg, 30.0).unwrap();
        let (lo, hi) = img
            .pixels()
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(out
            .pixels()
            .iter()
            .all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn matches_direct_sum_on_small_image() {
        let img = Image::from_fn(6, 5, |r, c| ((r * 31 + c * 17) % 23) as f64 * 5.0);
        let cfg = NlmConfig {
            filter_k: 0.5,
            patch_size: 3,
            search_window: 3,
        };
        let sigma = 8.0;
        let h = cfg.filter_k * sigma;
        let out = nlm_denoise(&img, &cfg, sigma).unwrap();
        let px = |r: isize, c: isize| img.get(reflect(r, 5), reflect(c, 6));
        for r in 0..5isize {
            for c in 0..6isize {
                let (mut num, mut den) = (0.0, 0.0);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let mut d2 = 0.0;
                        for a in -1..=1 {
                            for b in -1..=1 {
                                let diff = px(r + a, c + b) - px(r + dy + a, c + dx + b);
                                d2 += diff * diff;
                            }
                        }
                        let wt = nlm_weight(d2, 9, sigma, h);
                        num += wt * px(r + dy, c + dx);
                        den += wt;
                    }
                }
                let got = out.get(r as usize, c as usize);
                assert!((got - num / den).abs() < 1e-9, "pixel ({r}, {c})");
            }
        }
    }

    #[test]
    fn rejects_even_windows() {
        let cfg = NlmConfig {
            patch_size: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(NlmConfig::default().validate().is_ok());
    }
}
