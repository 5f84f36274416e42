//! Iterative radix-2 FFT on split real/imaginary buffers.

use crate::error::{Error, Result};

/// In-place forward DFT, `X_k = sum_n x_n e^{-2 pi i k n / L}`.
/// The length must be a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    transform(re, im, false)
}

/// In-place inverse DFT including the `1/L` factor.
pub fn ifft(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    transform(re, im, true)?;
    let scale = 1.0 / re.len() as f64;
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= scale);
    Ok(())
}

fn transform(re: &mut [f64], im: &mut [f64], inverse: bool) -> Result<()> {
    let n = re.len();
    if im.len() != n {
        return Err(Error::Dimension(format!(
            "fft buffers differ: {n} vs {}",
            im.len()
        )));
    }
    if !n.is_power_of_two() {
        return Err(Error::Dimension(format!("fft length {n} is not a power of two")));
    }
    if n == 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        for k in 0..half {
            let (s, c) = (step * k as f64).sin_cos();
            for start in (0..n).step_by(len) {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Magnitudes of bins `0..=L/2` of a real frame.
pub fn magnitude_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    let mut re = frame.to_vec();
    let mut im = vec![0.0; frame.len()];
    fft(&mut re, &mut im)?;
    Ok((0..=frame.len() / 2)
        .map(|k| re[k].hypot(im[k]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (j, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                re[k] += v * a.cos();
                im[k] += v * a.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = RandomSource::new(1);
        for n in [1, 2, 8, 64] {
            let x = rng.normal_vec(n);
            let (er, ei) = naive_dft(&x);
            let mut re = x.clone();
            let mut im = vec![0.0; n];
            fft(&mut re, &mut im).unwrap();
            for k in 0..n {
                assert!((re[k] - er[k]).abs() < 1e-10 && (im[k] - ei[k]).abs() < 1e-10);
            }
            ifft(&mut re, &mut im).unwrap();
            for k in 0..n {
                assert!((re[k] - x[k]).abs() < 1e-12 && im[k].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bin_sinusoid_concentrates_in_its_bin() {
        let n = 512;
        let bin = 37;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (bin * i) as f64 / n as f64 + 0.3).sin())
            .collect();
        let mag = magnitude_spectrum(&x).unwrap();
        let total: f64 = mag.iter().map(|m| m * m).sum();
        assert!(mag[bin] * mag[bin] / total > 0.99);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(fft(&mut [0.0; 6], &mut [0.0; 6]).is_err());
    }
}
