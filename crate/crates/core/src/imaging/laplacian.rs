use super::filter::{convolve, Border, Kernel};
use super::{ImageBuffer, ImagingError};

/// 4-neighbour Laplacian kernel.
pub fn laplacian_kernel() -> Kernel {
    Kernel::new(3, 3, vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0])
}

/// Population variance of the Laplacian response, borders replicated.
pub fn laplacian_variance(gray: &ImageBuffer) -> Result<f64, ImagingError> {
    if gray.channels() != 1 {
        return Err(ImagingError::NotGray(gray.channels()));
    }
    if gray.width() < 3 || gray.height() < 3 {
        return Err(ImagingError::TooSmall {
            width: gray.width(),
            height: gray.height(),
            min: 3,
        });
    }
    let response = convolve(gray, &laplacian_kernel(), Border::Replicate);
    Ok(population_variance(response.data()))
}

/// Two-pass population variance.
pub fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_zero() {
        let img = ImageBuffer::filled(8, 6, 1, 77.0);
        assert_eq!(laplacian_variance(&img).unwrap(), 0.0);
    }

    #[test]
    fn too_small() {
        let img = ImageBuffer::filled(2, 8, 1, 0.0);
        assert!(matches!(
            laplacian_variance(&img),
            Err(ImagingError::TooSmall { .. })
        ));
    }

    #[test]
    fn rejects_color() {
        let img = ImageBuffer::filled(4, 4, 3, 0.0);
        assert!(matches!(
            laplacian_variance(&img),
            Err(ImagingError::NotGray(3))
        ));
    }

    #[test]
    fn step_edge_beats_constant() {
        let step = ImageBuffer::gray_from_fn(8, 8, |x, _| if x < 4 { 0.0 } else { 255.0 });
        assert!(laplacian_variance(&step).unwrap() > 0.0);
    }
}
