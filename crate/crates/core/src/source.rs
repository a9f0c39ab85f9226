//! Per-gate photon statistics: Poissonian laser pulses, binomial
//! efficiency thinning and single-carrier dark events.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, FieldError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhotonDraw {
    pub n_incident: u64,
    pub k_detected: u64,
    pub dark_added: bool,
}

/// Poisson-distributed photon number with mean `mu_incident`.
pub fn sample_incident<R: Rng + ?Sized>(mu_incident: f64, rng: &mut R) -> Result<u64> {
    if !(mu_incident.is_finite() && mu_incident >= 0.0) {
        return Err(Error::Validation(vec![FieldError {
            field: "mu_incident",
            message: format!("Poisson mean must be >= 0, got {mu_incident}"),
        }]));
    }
    if mu_incident == 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(mu_incident).map_err(|e| {
        Error::Validation(vec![FieldError {
            field: "mu_incident",
            message: e.to_string(),
        }])
    })?;
    Ok(poisson.sample(rng) as u64)
}

/// Keep each of `n` photons independently with probability `eta`.
pub fn thin<R: Rng + ?Sized>(n: u64, eta: f64, rng: &mut R) -> u64 {
    if n == 0 || eta <= 0.0 {
        return 0;
    }
    if eta >= 1.0 {
        return n;
    }
    Binomial::new(n, eta)
        .expect("eta checked to lie in (0, 1)")
        .sample(rng)
}

/// With probability `dark_prob` add one avalanche-triggering carrier.
pub fn add_dark<R: Rng + ?Sized>(k: u64, dark_prob: f64, rng: &mut R) -> (u64, bool) {
    if dark_prob > 0.0 && rng.random::<f64>() < dark_prob {
        (k + 1, true)
    } else {
        (k, false)
    }
}

/// Full draw for one gate. Unilluminated gates still roll for a dark event.
pub fn draw_gate<R: Rng + ?Sized>(
    mu_incident: f64,
    eta: f64,
    dark_prob: f64,
    illuminated: bool,
    rng: &mut R,
) -> Result<PhotonDraw> {
    let n_incident = if illuminated {
        sample_incident(mu_incident, rng)?
    } else {
        0
    };
    let detected = thin(n_incident, eta, rng);
    let (k_detected, dark_added) = add_dark(detected, dark_prob, rng);
    Ok(PhotonDraw {
        n_incident,
        k_detected,
        dark_added,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_mean_always_zero() {
        let mut r = rng(1);
        assert!((0..1000).all(|_| sample_incident(0.0, &mut r).unwrap() == 0));
    }

    #[test]
    fn negative_mean_rejected() {
        assert!(sample_incident(-0.1, &mut rng(1)).is_err());
    }

    #[test]
    fn poisson_pmf_at_reference_flux() {
        // e^{-mu} mu^n / n!
        let mu: f64 = 1.49;
        let p0 = (-mu).exp();
        let p1 = p0 * mu;
        let p2 = p1 * mu / 2.0;
        assert!((p0 - 0.2254).abs() < 5e-5);
        assert!((p1 - 0.3358).abs() < 5e-5);
        assert!((p2 - 0.2502).abs() < 5e-5);

        let n = 200_000;
        let mut counts = [0u64; 3];
        let mut r = rng(11);
        for _ in 0..n {
            let k = sample_incident(mu, &mut r).unwrap() as usize;
            if k < 3 {
                counts[k] += 1;
            }
        }
        for (k, p) in [p0, p1, p2].into_iter().enumerate() {
            let f = counts[k] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se, "n={k}: {f} vs {p}");
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let mut r = rng(5);
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| sample_incident(1.49, &mut r).unwrap()).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 1.49).abs() < 0.0037, "mean {mean}");
    }

    #[test]
    fn thinning_edge_cases() {
        let mut r = rng(2);
        assert_eq!(thin(17, 0.0, &mut r), 0);
        assert_eq!(thin(17, 1.0, &mut r), 17);
    }

    #[test]
    fn thinned_poisson_has_detected_mean() {
        let mut r = rng(9);
        let n = 1_000_000;
        let sum: u64 = (0..n)
            .map(|_| {
                let inc = sample_incident(14.9, &mut r).unwrap();
                thin(inc, 0.10, &mut r)
            })
            .sum();
        let mean = sum as f64 / n as f64;
        let bound = 3.0 * (1.49f64 / n as f64).sqrt();
        assert!((mean - 1.49).abs() < bound, "mean {mean}");
    }

    #[test]
    fn dark_events() {
        let mut r = rng(4);
        assert!((0..10_000).all(|_| add_dark(2, 0.0, &mut r) == (2, false)));
        assert!((0..10_000).all(|_| add_dark(3, 2e-6, &mut r).0 >= 3));
    }
}
