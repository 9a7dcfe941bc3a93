//! Iterative radix-2 FFT.
//!
//! Shared by the STFT and by the frequency-domain CWT. Lengths must be powers
//! of two; callers zero-pad with [`next_pow2`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Forward DFT, `X[k] = Σ x[n]·exp(−2πi·kn/N)`.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, false)?;
    Ok(buf)
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, true)?;
    Ok(buf)
}

/// Forward transform of a real signal, zero-padded to `n`.
pub fn rfft_padded(x: &[f64], n: usize) -> Result<Vec<Complex64>> {
    if n < x.len() {
        return Err(Error::Size(format!(
            "cannot pad {} samples into {n} points",
            x.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_in_place(&mut buf, false)?;
    Ok(buf)
}

pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(format!("FFT length {n} is not a power of two")));
    }
    if n == 1 {
        return Ok(());
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        // twiddles computed directly per index; recurrence drifts at large n
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![c(0.0); 16];
        x[0] = c(1.0);
        for v in fft(&x).unwrap() {
            assert!((v - c(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ones_concentrate_in_dc() {
        let x = vec![c(1.0); 8];
        let spec = fft(&x).unwrap();
        assert!((spec[0] - c(8.0)).norm() < 1e-12);
        for v in &spec[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(fft(&[c(1.0); 6]), Err(Error::Size(_))));
        assert!(matches!(fft(&[]), Err(Error::Size(_))));
    }

    #[test]
    fn length_one_is_identity() {
        assert_eq!(fft(&[c(3.5)]).unwrap(), vec![c(3.5)]);
    }

    #[test]
    fn inverse_round_trip() {
        let x: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let back = ifft(&fft(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
