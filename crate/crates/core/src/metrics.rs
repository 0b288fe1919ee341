//! Image similarity scores: SSIM between separated components, MSE/PSNR
//! against synthetic ground truth.

use crate::error::{Error, Result};
use crate::image::Image;

/// SSIM window and stabilization constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimParams {
    /// Odd side length of the Gaussian window.
    pub window_side: usize,
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Intensity range `R` in `C1 = (k1 R)²`, `C2 = (k2 R)²`. `None` uses the
    /// max − min over both images (1 if both are constant and equal).
    pub dynamic_range: Option<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window_side: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: None,
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_side == 0 || self.window_side.is_multiple_of(2) {
            return Err(Error::param(format!(
                "SSIM window side {} must be odd",
                self.window_side
            )));
        }
        if [self.sigma, self.k1, self.k2].iter().any(|&x| !positive(x)) {
            return Err(Error::param("SSIM sigma, k1 and k2 must be positive"));
        }
        if let Some(r) = self.dynamic_range {
            if !positive(r) {
                return Err(Error::param("SSIM dynamic range must be positive"));
            }
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window_side / 2) as f64;
        let raw: Vec<f64> = (0..self.window_side)
            .map(|i| {
                let x = i as f64 - half;
                (-x * x / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    /// `R` for the pair `(a, b)`.
    pub fn range_for(&self, a: &Image, b: &Image) -> f64 {
        if let Some(r) = self.dynamic_range {
            return r;
        }
        let (lo_a, hi_a) = a.min_max();
        let (lo_b, hi_b) = b.min_max();
        let r = hi_a.max(hi_b) - lo_a.min(lo_b);
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(format!(
            "images differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Valid-mode separable filtering of a row-major `h × w` buffer.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all window positions fully inside the image.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    check_pair(a, b)?;
    params.validate()?;
    let (h, w) = a.dims();
    let k = params.window_side;
    if h < k || w < k {
        return Err(Error::dims(format!(
            "{h}x{w} image is smaller than the {k}x{k} SSIM window"
        )));
    }
    let taps = params.taps();
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let sq = |x: &[f64]| x.iter().map(|v| v * v).collect::<Vec<_>>();
    let cross: Vec<f64> = xa.iter().zip(xb).map(|(p, q)| p * q).collect();
    let mu_a = filter_valid(xa, h, w, &taps);
    let mu_b = filter_valid(xb, h, w, &taps);
    let e_aa = filter_valid(&sq(xa), h, w, &taps);
    let e_bb = filter_valid(&sq(xb), h, w, &taps);
    let e_ab = filter_valid(&cross, h, w, &taps);

    let range = params.range_for(a, b);
    let c1 = (params.k1 * range).powi(2);
    let c2 = (params.k2 * range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Mean squared error and PSNR in dB. PSNR is `+∞` when the images are equal.
pub fn mse_psnr(a: &Image, b: &Image, peak: f64) -> Result<(f64, f64)> {
    check_pair(a, b)?;
    let n = a.as_slice().len();
    if n == 0 {
        return Ok((0.0, f64::INFINITY));
    }
    let mse = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n as f64;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok((mse, psnr))
}
