use super::RasterImage;

/// Per-pixel gradient magnitude, maximum over channels.
///
/// Central differences in the interior, one-sided differences on the border
/// row/column so the output keeps the input size.
pub fn gradient_magnitude(img: &RasterImage) -> RasterImage {
    let (w, h, ch) = (img.width, img.height, img.channels);
    let d = &img.data;
    let at = |x: usize, y: usize, c: usize| d[(y * w + x) * ch + c];
    let diff = |i: usize, n: usize, f: &dyn Fn(usize) -> f32| -> f32 {
        if n == 1 {
            0.0
        } else if i == 0 {
            f(1) - f(0)
        } else if i == n - 1 {
            f(n - 1) - f(n - 2)
        } else {
            (f(i + 1) - f(i - 1)) * 0.5
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = 0.0f32;
            for c in 0..ch {
                let gx = diff(x, w, &|i| at(i, y, c));
                let gy = diff(y, h, &|j| at(x, j, c));
                best = best.max((gx * gx + gy * gy).sqrt());
            }
            out.push(best);
        }
    }
    RasterImage::from_raw(w, h, 1, out)
}

/// Normalized Gaussian taps for `sigma`, truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma.is_finite());
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with clamped borders. `sigma == 0` returns the
/// input unchanged.
pub fn gaussian_blur(img: &RasterImage, sigma: f64) -> RasterImage {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h, ch) = (img.width, img.height, img.channels);

    let mut tmp = vec![0.0f32; w * h * ch];
    let mut acc = vec![0.0f64; ch];
    for y in 0..h {
        let row = &img.data[y * w * ch..(y + 1) * w * ch];
        for x in 0..w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &wk) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                for c in 0..ch {
                    acc[c] += wk * row[sx * ch + c] as f64;
                }
            }
            for c in 0..ch {
                tmp[(y * w + x) * ch + c] = acc[c] as f32;
            }
        }
    }

    let mut out = vec![0.0f32; w * h * ch];
    let mut col = vec![0.0f64; h * ch];
    for x in 0..w {
        for y in 0..h {
            for c in 0..ch {
                col[y * ch + c] = tmp[(y * w + x) * ch + c] as f64;
            }
        }
        for y in 0..h {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &wk) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                for c in 0..ch {
                    acc[c] += wk * col[sy * ch + c];
                }
            }
            for c in 0..ch {
                out[(y * w + x) * ch + c] = acc[c] as f32;
            }
        }
    }
    RasterImage::from_raw(w, h, ch, out)
}
