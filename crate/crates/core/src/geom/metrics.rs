//! Image metrics: PSNR, SSIM and mean angular error of normal maps.
//!
//! All metrics run over jointly valid pixels only. PSNR of identical images
//! is capped at 99 dB so JSON reports stay finite.

use crate::error::{Error, Result};

use super::image::ImageBuffer;

/// Cap applied when MSE underflows (identical images).
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB for values in [0, 1].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("psnr: image shapes differ"));
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for (x, y) in a.jointly_valid(b) {
        for c in 0..a.channels {
            let d = a.get(x, y, c) - b.get(x, y, c);
            se += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("psnr: no jointly valid pixels"));
    }
    let mse = se / n as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean angular error between two unit-normal images, in degrees.
pub fn mae_degrees(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::shape("mae: image shapes differ"));
    }
    if pred.channels < 3 {
        return Err(Error::shape("mae: normal maps need 3 channels"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in pred.jointly_valid(gt) {
        let d = pred.pixel_vec3(x, y).dot(gt.pixel_vec3(x, y)).clamp(-1.0, 1.0);
        sum += d.acos();
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("mae: no jointly valid pixels"));
    }
    Ok(sum / n as f64 * 180.0 / std::f64::consts::PI)
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5) and the
/// standard constants. Reporting-only; channels are averaged. The validity
/// mask gates which window centers contribute.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("ssim: image shapes differ"));
    }
    const WIN: i64 = 11;
    const HALF: i64 = WIN / 2;
    const SIGMA: f64 = 1.5;
    const K1: f64 = 0.01;
    const K2: f64 = 0.03;
    let c1 = (K1 * 1.0f64).powi(2);
    let c2 = (K2 * 1.0f64).powi(2);

    let mut kernel = [0.0f64; WIN as usize];
    let mut ksum = 0.0;
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - HALF as f64;
        *k = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        ksum += *k;
    }
    for k in kernel.iter_mut() {
        *k /= ksum;
    }

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..a.height as i64 {
        for x in 0..a.width as i64 {
            if !a.is_valid(x as usize, y as usize) || !b.is_valid(x as usize, y as usize) {
                continue;
            }
            for c in 0..a.channels {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                let mut sab = 0.0;
                let mut wsum = 0.0;
                for dy in -HALF..=HALF {
                    let yy = y + dy;
                    if yy < 0 || yy >= a.height as i64 {
                        continue;
                    }
                    for dx in -HALF..=HALF {
                        let xx = x + dx;
                        if xx < 0 || xx >= a.width as i64 {
                            continue;
                        }
                        if !a.is_valid(xx as usize, yy as usize)
                            || !b.is_valid(xx as usize, yy as usize)
                        {
                            continue;
                        }
                        let w = kernel[(dy + HALF) as usize] * kernel[(dx + HALF) as usize];
                        let va = a.get(xx as usize, yy as usize, c);
                        let vb = b.get(xx as usize, yy as usize, c);
                        mu_a += w * va;
                        mu_b += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                        wsum += w;
                    }
                }
                if wsum <= 0.0 {
                    continue;
                }
                mu_a /= wsum;
                mu_b /= wsum;
                let var_a = (saa / wsum - mu_a * mu_a).max(0.0);
                let var_b = (sbb / wsum - mu_b * mu_b).max(0.0);
                let cov = sab / wsum - mu_a * mu_b;
                let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += s;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("ssim: no jointly valid pixels"));
    }
    Ok(total / count as f64)
}
