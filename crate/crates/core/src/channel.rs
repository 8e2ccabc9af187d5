//! Uplink budget over a Rician block-fading channel.
//!
//! [`required_tx_power`] is the closed-form power that keeps the outage
//! probability of a fixed-rate transmission at or below `eps`;
//! [`outage_probability_mc`] estimates the outage directly by sampling the
//! fading coefficient, which is how the closed form is audited.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal tail probability `Q(x) = P[Z > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of [`q_function`].
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("q_inv needs 0 < p < 1, got {p}")));
    }
    if p > 0.5 {
        return Ok(-q_inv(1.0 - p)?);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Rational starting point (max error ~4.5e-4), then Halley steps on
    // Q(x) - p.
    let t = (-2.0 * p.ln()).sqrt();
    let mut x = t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    for _ in 0..50 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let u = (q_function(x) - p) / pdf;
        let dx = u / (1.0 - x * u / 2.0);
        x += dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Normalized line-of-sight amplitude margin for outage `eps`:
/// `sqrt(2G) + ln(sqrt(2G) / (sqrt(2G) - q)) / (2q) - q` with `q = Q^-1(eps)`.
pub fn y_q(rician_g: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain(format!("outage target must lie in (0, 0.5), got {eps}")));
    }
    let q = q_inv(eps)?;
    let a = (2.0 * rician_g).sqrt();
    if !(a > q) {
        return Err(Error::InfeasibleLink {
            sqrt_2g: a,
            q_inv_eps: q,
        });
    }
    Ok(a + (a / (a - q)).ln() / (2.0 * q) - q)
}

/// Link budget parameters in linear units.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams {
    /// W (Hz).
    pub bandwidth: f64,
    /// Total in-band noise power W·N₀ (W).
    pub noise_power: f64,
    /// Rician factor G (linear).
    pub rician_g: f64,
    /// Channel power gain at the 1 m reference distance (linear).
    pub mu0: f64,
    pub path_loss_exp: f64,
    /// Fixed uplink rate (bit/s).
    pub rate_threshold: f64,
    /// Maximum outage probability.
    pub outage_eps: f64,
}

impl LinkParams {
    pub fn new(
        bandwidth: f64,
        noise_power: f64,
        rician_g: f64,
        mu0: f64,
        path_loss_exp: f64,
        rate_threshold: f64,
        outage_eps: f64,
    ) -> Result<Self> {
        let lp = Self {
            bandwidth,
            noise_power,
            rician_g,
            mu0,
            path_loss_exp,
            rate_threshold,
            outage_eps,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("rician_g", self.rician_g),
            ("mu0", self.mu0),
            ("path_loss_exp", self.path_loss_exp),
            ("rate_threshold", self.rate_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        y_q(self.rician_g, self.outage_eps).map(|_| ())
    }

    /// Large-scale gain `mu0 * d^-alpha`.
    pub fn path_gain(&self, d_ap: f64) -> f64 {
        self.mu0 * d_ap.powf(-self.path_loss_exp)
    }

    /// SNR threshold `2^(R/W) - 1` for the fixed rate.
    pub fn snr_threshold(&self) -> f64 {
        (self.rate_threshold / self.bandwidth).exp2() - 1.0
    }
}

/// Config-facing link parameters (dB where the usual datasheet unit is dB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Kept for the record; the gain at 1 m is configured directly.
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub rate_threshold_bps: f64,
    /// Total in-band noise power.
    pub noise_power_dbm: f64,
    pub rician_factor_db: f64,
    pub outage_eps: f64,
    pub mu0: f64,
    pub path_loss_exp: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 2.4e9,
            bandwidth_hz: 5e6,
            rate_threshold_bps: 250e3,
            noise_power_dbm: -11.5,
            rician_factor_db: 15.0,
            outage_eps: 1e-4,
            mu0: 1e-4,
            path_loss_exp: 2.5,
        }
    }
}

impl LinkConfig {
    pub fn params(&self) -> Result<LinkParams> {
        LinkParams::new(
            self.bandwidth_hz,
            1e-3 * 10f64.powf(self.noise_power_dbm / 10.0),
            10f64.powf(self.rician_factor_db / 10.0),
            self.mu0,
            self.path_loss_exp,
            self.rate_threshold_bps,
            self.outage_eps,
        )
    }
}

/// Transmit power (W) that meets the outage target at AP distance `d_ap`.
pub fn required_tx_power(d_ap: f64, lp: &LinkParams) -> Result<f64> {
    if !(d_ap >= 1.0) {
        return Err(Error::Domain(format!(
            "AP distance must be at least the 1 m reference, got {d_ap}"
        )));
    }
    let y = y_q(lp.rician_g, lp.outage_eps)?;
    Ok(2.0 * lp.noise_power * (1.0 + lp.rician_g) * lp.snr_threshold() / (y * y * lp.path_gain(d_ap)))
}

/// Counts outages over `trials` independent fading draws.
pub fn outage_count<R: Rng + ?Sized>(p_tx: f64, d_ap: f64, lp: &LinkParams, trials: u64, rng: &mut R) -> u64 {
    let los = (lp.rician_g / (lp.rician_g + 1.0)).sqrt();
    let scatter = (1.0 / (lp.rician_g + 1.0)).sqrt() * FRAC_1_SQRT_2;
    let snr_scale = p_tx * lp.path_gain(d_ap) / lp.noise_power;
    let mut outages = 0;
    for _ in 0..trials {
        let re = los + scatter * rng.sample::<f64, _>(StandardNormal);
        let im = scatter * rng.sample::<f64, _>(StandardNormal);
        let snr = snr_scale * (re * re + im * im);
        let rate = lp.bandwidth * (1.0 + snr).log2();
        if rate < lp.rate_threshold {
            outages += 1;
        }
    }
    outages
}

/// Monte Carlo estimate of `P[R < R_th]` at transmit power `p_tx`.
pub fn outage_probability_mc<R: Rng + ?Sized>(
    p_tx: f64,
    d_ap: f64,
    lp: &LinkParams,
    trials: u64,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    Ok(outage_count(p_tx, d_ap, lp, trials, rng) as f64 / trials as f64)
}

/// Same estimate split over `chunks` independently seeded streams. The
/// result depends only on `seed` and `chunks`, not on the thread count.
pub fn outage_probability_chunked(
    p_tx: f64,
    d_ap: f64,
    lp: &LinkParams,
    trials: u64,
    seed: u64,
    chunks: u64,
) -> Result<f64> {
    if trials == 0 || chunks == 0 {
        return Err(Error::Domain("need at least one trial and one chunk".into()));
    }
    let per_chunk = |c: u64| {
        let n = trials / chunks + u64::from(c < trials % chunks);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::mix(&[seed, c]));
        outage_count(p_tx, d_ap, lp, n, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let total: u64 = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(per_chunk).sum()
    };
    #[cfg(not(feature = "parallel"))]
    let total: u64 = (0..chunks).map(per_chunk).sum();
    Ok(total as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_link() -> LinkParams {
        LinkConfig::default().params().unwrap()
    }

    /// Bisection on an independent erfc implementation.
    fn q_inv_bisect(p: f64) -> f64 {
        let q = |x: f64| 0.5 * statrs::function::erf::erfc(x / 2f64.sqrt());
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn q_inv_matches_bisection() {
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        for p in [1e-1, 1e-2, 1e-4, 1e-8, 0.3, 0.7, 0.99] {
            let x = q_inv(p).unwrap();
            let oracle = q_inv_bisect(p);
            assert!(
                (x - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
                "p={p}: {x} vs {oracle}"
            );
        }
        assert!((q_inv(1e-4).unwrap() - 3.719016485455681).abs() < 1e-9);
    }

    #[test]
    fn q_inv_round_trips() {
        for p in [1e-1, 1e-2, 1e-4] {
            let back = q_function(q_inv(p).unwrap());
            assert!((back - p).abs() / p < 1e-10, "{p} -> {back}");
        }
    }

    #[test]
    fn q_inv_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(q_inv(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn y_q_at_table_values() {
        // 10^(15/10) with eps = 1e-4, evaluated at 30 digits.
        let g = 10f64.powf(1.5);
        let y = y_q(g, 1e-4).unwrap();
        assert!((y - 4.318_449_537_459_95).abs() < 1e-10, "{y}");
    }

    #[test]
    fn y_q_small_q_limit() {
        // ln(a/(a-q))/(2q) -> 1/(2a) as q -> 0, so y_q -> a + 1/(2a).
        let g: f64 = 31.6228;
        let a = (2.0 * g).sqrt();
        let y = y_q(g, 0.4999).unwrap();
        assert!((y - (a + 1.0 / (2.0 * a))).abs() < 1e-3, "{y}");
    }

    #[test]
    fn y_q_infeasible() {
        let q = q_inv(1e-4).unwrap();
        let g = 0.9 * q * q / 2.0;
        assert!(matches!(y_q(g, 1e-4), Err(Error::InfeasibleLink { .. })));
    }

    #[test]
    fn power_scaling_laws() {
        let lp = table_link();
        let p10 = required_tx_power(10.0, &lp).unwrap();
        let p20 = required_tx_power(20.0, &lp).unwrap();
        assert!((p20 / p10 - 2f64.powf(2.5)).abs() < 1e-12);

        let tiny = LinkParams {
            rate_threshold: 1e-9,
            ..lp.clone()
        };
        assert!(required_tx_power(10.0, &tiny).unwrap() < 1e-12);
        assert!(matches!(required_tx_power(0.5, &lp), Err(Error::Domain(_))));
    }

    #[test]
    fn power_regression_fixture() {
        // 2 (W N0)(1+G)(2^(R/W)-1) / (y² mu0 d^-alpha) at d = 10 m, all
        // terms evaluated at 30 digits.
        let p = required_tx_power(10.0, &table_link()).unwrap();
        assert!((p - 27.62092189982665).abs() / 27.62092189982665 < 1e-10, "{p}");
    }

    #[test]
    fn power_monotonicity() {
        let lp = table_link();
        let base = required_tx_power(8.0, &lp).unwrap();
        assert!(required_tx_power(8.5, &lp).unwrap() > base);
        let faster = LinkParams {
            rate_threshold: 3e5,
            ..lp.clone()
        };
        assert!(required_tx_power(8.0, &faster).unwrap() > base);
        let noisier = LinkParams {
            noise_power: lp.noise_power * 1.1,
            ..lp.clone()
        };
        assert!(required_tx_power(8.0, &noisier).unwrap() > base);
        let stronger = LinkParams {
            mu0: lp.mu0 * 1.1,
            ..lp.clone()
        };
        assert!(required_tx_power(8.0, &stronger).unwrap() < base);
    }

    #[test]
    fn outage_extremes() {
        let lp = table_link();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(outage_probability_mc(0.0, 10.0, &lp, 1000, &mut rng).unwrap(), 1.0);
        let p = required_tx_power(10.0, &lp).unwrap() * 1e6;
        assert_eq!(outage_probability_mc(p, 10.0, &lp, 10_000, &mut rng).unwrap(), 0.0);
    }

    /// Rice CDF with noncentrality `nu` and unit scale, by Simpson's rule on
    /// the density `r exp(-(r²+nu²)/2) I0(r nu)`.
    fn rice_cdf(nu: f64, b: f64) -> f64 {
        let bessel_i0 = |x: f64| {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..400 {
                term *= (x / 2.0).powi(2) / (k as f64 * k as f64);
                sum += term;
                if term < 1e-18 * sum {
                    break;
                }
            }
            sum
        };
        let pdf = |r: f64| r * (-(r * r + nu * nu) / 2.0).exp() * bessel_i0(r * nu);
        let n = 20_000;
        let h = b / n as f64;
        let mut acc = pdf(0.0) + pdf(b);
        for i in 1..n {
            acc += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn closed_form_power_outage_against_rice_cdf() {
        // At the closed-form power the outage event is |z| < y_Q with z Rice
        // distributed, nu = sqrt(2G).
        let lp = table_link();
        let nu = (2.0 * lp.rician_g).sqrt();
        let y = y_q(lp.rician_g, lp.outage_eps).unwrap();
        let exact = rice_cdf(nu, y);
        // Arbitrary-precision quadrature gives 1.00122788e-4.
        assert!((exact - 1.00122788e-4).abs() < 1e-11, "{exact}");

        let p = required_tx_power(10.0, &lp).unwrap();
        let trials = 2_000_000;
        let est = outage_probability_chunked(p, 10.0, &lp, trials, 7, 16).unwrap();
        let se = (exact / trials as f64).sqrt();
        assert!((est - exact).abs() < 5.0 * se, "mc {est} vs exact {exact}");
    }

    #[test]
    fn chunked_estimate_is_seeded() {
        let lp = table_link();
        let p = required_tx_power(5.0, &lp).unwrap() * 0.5;
        let a = outage_probability_chunked(p, 5.0, &lp, 100_000, 3, 8).unwrap();
        let b = outage_probability_chunked(p, 5.0, &lp, 100_000, 3, 8).unwrap();
        assert_eq!(a, b);
    }
}
