use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the eigenvalues of the residual projector `A_k` are updated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ARecursion {
    /// `λ(A_k) = λ(A_{k-1}) - λ(C_k)`: each step removes the direction mass
    /// it just covered, matching `A_k = A_{k-1} - normalized R_k`.
    #[default]
    SelfConsistent,
    /// `λ(A_k) = λ(A_{k-1}) - λ(C_{k-1})` with `λ(C_0) = 0`, so `A_1 = I`.
    Lagged,
}

/// Per-step state of the eigenvalue approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxTrace {
    /// `lam_c[k-1][i]`: approximated eigenvalues of `C_k`.
    pub lam_c: Vec<Vec<f64>>,
    /// `lam_a[k][i]`: approximated eigenvalues of `A_k`, starting at `A_0 = I`.
    pub lam_a: Vec<Vec<f64>>,
    /// `E_k` before the excess cutoff.
    pub raw: Vec<f64>,
    /// `E_k` after the cutoff.
    pub e: Vec<f64>,
}

/// Approximates `E_1..E_{k_max}` from covariance eigenvalues in `Θ(d k_max)`.
pub(crate) fn approximate(
    lambdas: &[f64],
    k_max: usize,
    recursion: ARecursion,
) -> Result<ApproxTrace> {
    let d = lambdas.len();
    if d == 0 {
        return Err(Error::Empty);
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Parameter(format!(
            "eigenvalues must be finite and nonnegative, got {bad}"
        )));
    }
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Err(Error::Parameter("spectrum is all zero".into()));
    }
    if k_max > d {
        return Err(Error::Parameter(format!(
            "k_max {k_max} exceeds spectrum length {d}"
        )));
    }
    let exponent = d as f64 / (d as f64 + 2.0);

    let mut lam_a = vec![vec![1.0; d]];
    let mut lam_c: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut raw = Vec::with_capacity(k_max);
    let mut e = Vec::with_capacity(k_max);
    let mut covered = 0.0;
    let mut prev_c = vec![0.0; d];
    for _ in 0..k_max {
        let a = lam_a.last().expect("A_0 is present");
        let w: Vec<f64> = lambdas
            .iter()
            .zip(a)
            .map(|(l, a)| {
                let base = l * a * a;
                if base > 0.0 {
                    base.powf(exponent)
                } else {
                    0.0
                }
            })
            .collect();
        let norm: f64 = w.iter().sum();
        let c: Vec<f64> = if norm > 0.0 {
            w.iter().map(|w| w / norm).collect()
        } else {
            vec![0.0; d]
        };
        let e_raw: f64 = c.iter().zip(lambdas).map(|(c, l)| c * l).sum();
        let e_k = e_raw.min(total - covered).max(0.0);
        covered += e_k;

        let removed = match recursion {
            ARecursion::SelfConsistent => &c,
            ARecursion::Lagged => &prev_c,
        };
        let next_a = a
            .iter()
            .zip(removed)
            .map(|(a, c)| (a - c).max(0.0))
            .collect();
        lam_a.push(next_a);
        prev_c = c.clone();
        lam_c.push(c);
        raw.push(e_raw);
        e.push(e_k);
    }
    Ok(ApproxTrace {
        lam_c,
        lam_a,
        raw,
        e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_spectrum_is_flat() {
        let t = approximate(&[2.0; 5], 5, ARecursion::SelfConsistent).unwrap();
        for (k, c) in t.lam_c.iter().enumerate() {
            for v in c {
                assert!((v - 0.2).abs() < 1e-15, "step {k}: {v}");
            }
            assert!((t.e[k] - 2.0).abs() < 1e-12);
        }
        assert!((t.e.iter().sum::<f64>() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_spectrum() {
        let t = approximate(&[1.0, 0.0, 0.0, 0.0], 4, ARecursion::SelfConsistent).unwrap();
        assert_eq!(t.e, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lagged_recursion_repeats_first_step() {
        let lambdas = [0.7, 0.2, 0.1];
        let t = approximate(&lambdas, 3, ARecursion::Lagged).unwrap();
        assert_eq!(t.lam_a[1], vec![1.0; 3]);
        assert_eq!(t.lam_c[0], t.lam_c[1]);
    }

    #[test]
    fn hand_computed_first_step() {
        // d = 2: exponent 1/2, weights sqrt(0.8), sqrt(0.2).
        let t = approximate(&[0.8, 0.2], 1, ARecursion::SelfConsistent).unwrap();
        let (a, b) = (0.8f64.sqrt(), 0.2f64.sqrt());
        let expected = (0.8 * a + 0.2 * b) / (a + b);
        assert!((t.e[0] - expected).abs() < 1e-15);
        assert!((t.lam_a[1][0] - (1.0 - a / (a + b))).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(approximate(&[], 0, ARecursion::SelfConsistent).is_err());
        assert!(approximate(&[0.0, 0.0], 2, ARecursion::SelfConsistent).is_err());
        assert!(approximate(&[1.0, -0.1], 2, ARecursion::SelfConsistent).is_err());
        assert!(approximate(&[1.0], 2, ARecursion::SelfConsistent).is_err());
    }
}
