use std::f64::consts::PI;
use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{BlurParams, DegradeError, DrawnParams, NoiseKind, NoiseParams, SincParams};
use crate::imaging::{convolve, resize_to, to_luma, Border, ImageBuffer, ImagingError, Kernel};

/// Rotated anisotropic Gaussian, normalized.
pub fn blur_kernel(p: &BlurParams) -> Kernel {
    let k = p.kernel_size as usize;
    let r = (k / 2) as f64;
    let (sx, sy) = (p.sigma_x.max(1e-3), p.sigma_y.max(1e-3));
    let (c, s) = (p.rotation.cos(), p.rotation.sin());
    // inverse covariance of R diag(sx², sy²) Rᵀ
    let (a, d) = (1.0 / (sx * sx), 1.0 / (sy * sy));
    let i11 = c * c * a + s * s * d;
    let i22 = s * s * a + c * c * d;
    let i12 = c * s * (a - d);
    let mut w = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let (dx, dy) = (x as f64 - r, y as f64 - r);
            w.push((-0.5 * (i11 * dx * dx + 2.0 * i12 * dx * dy + i22 * dy * dy)).exp());
        }
    }
    Kernel::new(k, k, w).normalized()
}

/// Circular low-pass (2-D sinc) kernel with cutoff `omega`, normalized.
pub fn sinc_kernel(p: &SincParams) -> Kernel {
    let k = p.kernel_size as usize;
    let r0 = (k / 2) as f64;
    let mut w = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let r = (x as f64 - r0).hypot(y as f64 - r0);
            w.push(if r == 0.0 {
                p.omega * p.omega / (4.0 * PI)
            } else {
                p.omega * puruspe::Jn(1, p.omega * r) / (2.0 * PI * r)
            });
        }
    }
    Kernel::new(k, k, w).normalized()
}

fn add_noise(img: &ImageBuffer, p: &NoiseParams) -> Result<ImageBuffer, DegradeError> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // one field per channel, or a single field shared by all channels
    let planes = if p.gray || ch == 1 { 1 } else { ch };
    let source: Vec<ImageBuffer> = if planes == 1 {
        vec![to_luma(img)]
    } else {
        (0..ch).map(|c| img.channel(c)).collect()
    };
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(planes);
    match p.kind {
        NoiseKind::Gaussian { sigma } => {
            let normal =
                Normal::new(0.0, sigma).map_err(|e| DegradeError::Config(e.to_string()))?;
            for _ in 0..planes {
                fields.push((0..w * h).map(|_| normal.sample(&mut rng)).collect());
            }
        }
        NoiseKind::Poisson { scale } => {
            // 8-bit values on a 256-level intensity grid
            const VALS: f64 = 256.0;
            for plane in &source {
                let f = plane
                    .data()
                    .iter()
                    .map(|&v| {
                        let lambda = (v.clamp(0.0, 255.0) / 255.0) * VALS;
                        let k = if lambda > 0.0 {
                            Poisson::new(lambda)
                                .expect("positive rate")
                                .sample(&mut rng)
                        } else {
                            0.0
                        };
                        (k / VALS * 255.0 - v.clamp(0.0, 255.0)) * scale
                    })
                    .collect();
                fields.push(f);
            }
        }
    }
    let mut out = img.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let field = if planes == 1 {
            &fields[0]
        } else {
            &fields[i % ch]
        };
        *v = (*v + field[i / ch]).clamp(0.0, 255.0);
    }
    Ok(out)
}

fn jpeg_roundtrip(img: &ImageBuffer, quality: u32) -> Result<ImageBuffer, DegradeError> {
    if quality >= 100 {
        return Ok(img.clone());
    }
    let mut buf = Cursor::new(Vec::new());
    let enc = JpegEncoder::new_with_quality(&mut buf, quality as u8);
    img.to_dynamic()
        .write_with_encoder(enc)
        .map_err(ImagingError::Encode)?;
    Ok(ImageBuffer::decode(buf.get_ref())?)
}

fn is_identity_blur(p: &BlurParams) -> bool {
    p.sigma_x.max(p.sigma_y) < 1e-6
}

/// Apply drawn parameters. Pure: the same input and parameters always give
/// the same output.
pub fn render(img: &ImageBuffer, params: &DrawnParams) -> Result<ImageBuffer, DegradeError> {
    let mut cur = img.clone();
    for round in &params.rounds {
        if let Some(b) = round.blur.filter(|b| !is_identity_blur(b)) {
            cur = convolve(&cur, &blur_kernel(&b), Border::Reflect);
        }
        cur = resize_to(
            &cur,
            round.resize.width,
            round.resize.height,
            round.resize.filter,
        )?;
        let silent = match round.noise.kind {
            NoiseKind::Gaussian { sigma } => sigma == 0.0,
            NoiseKind::Poisson { scale } => scale == 0.0,
        };
        if !silent {
            cur = add_noise(&cur, &round.noise)?;
        }
        cur = jpeg_roundtrip(&cur, round.jpeg.quality)?;
    }
    if let Some(s) = params.sinc {
        cur = convolve(&cur, &sinc_kernel(&s), Border::Reflect);
    }
    let n = params.output_size;
    cur = resize_to(&cur, n, n, params.final_filter)?;
    Ok(cur.quantized())
}
