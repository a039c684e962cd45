//! FMCW point-scatterer simulation.
//!
//! Each scatterer contributes a separable complex exponential over ADC sample
//! `n`, chirp `m` and virtual antenna `k`:
//!
//! ```text
//! a · exp(j2π (f_b·n/f_s + f_d·m·T_c + k·d·sin(θ)/λ))
//! f_b = 2·S·R/c        (beat frequency, S = chirp slope)
//! f_d = 2·v/λ          (Doppler, v > 0 means approaching)
//! ```
//!
//! Scatterers are frozen within a frame (stop-and-hop). The virtual array is
//! synthesised directly, so TX/RX multiplexing never enters the model.

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_start_freq() -> f64 {
    77e9
}

fn default_antenna_spacing() -> f64 {
    SPEED_OF_LIGHT / default_start_freq() / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Hz.
    pub start_freq: f64,
    /// Hz/s.
    pub slope: f64,
    /// Complex samples per second.
    pub adc_rate: f64,
    pub n_adc: usize,
    pub n_chirps: usize,
    /// Seconds between chirp starts.
    pub chirp_interval: f64,
    pub n_virtual_antennas: usize,
    /// Metres between adjacent virtual elements.
    pub antenna_spacing: f64,
    /// Hz.
    pub frame_rate: f64,
    /// Standard deviation of the complex noise magnitude; each of I and Q
    /// gets variance `noise_std² / 2`.
    pub noise_std: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            start_freq: default_start_freq(),
            slope: 65.998e12,
            adc_rate: 4.8e6,
            n_adc: 256,
            n_chirps: 255,
            // Back-solved from a 0.0477 m/s Doppler resolution at 77 GHz.
            chirp_interval: 160.2e-6,
            n_virtual_antennas: 8,
            antenna_spacing: default_antenna_spacing(),
            frame_rate: 10.0,
            noise_std: 1.0,
        }
    }
}

impl RadarConfig {
    /// A 64-sample / 63-chirp variant for desk-scale experiments. Range
    /// resolution is unchanged (same swept bandwidth per ADC window); the
    /// chirp interval is widened so Doppler resolution stays near 0.1 m/s.
    pub fn compact() -> Self {
        Self {
            adc_rate: 1.2e6,
            n_adc: 64,
            n_chirps: 63,
            chirp_interval: 320.4e-6,
            ..Self::default()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.start_freq
    }

    /// Swept bandwidth over one ADC window.
    pub fn bandwidth(&self) -> f64 {
        self.slope * self.n_adc as f64 / self.adc_rate
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    pub fn doppler_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.n_chirps as f64 * self.chirp_interval)
    }

    /// Unambiguous range (complex sampling: beat frequency below `adc_rate`).
    pub fn max_range(&self) -> f64 {
        self.n_adc as f64 * self.range_resolution()
    }

    /// Unambiguous |radial velocity|.
    pub fn max_velocity(&self) -> f64 {
        (self.n_chirps / 2) as f64 * self.doppler_resolution()
    }

    /// Zero-Doppler bin after fftshift.
    pub fn zero_doppler_bin(&self) -> usize {
        self.n_chirps / 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("start_freq", self.start_freq),
            ("slope", self.slope),
            ("adc_rate", self.adc_rate),
            ("chirp_interval", self.chirp_interval),
            ("antenna_spacing", self.antenna_spacing),
            ("frame_rate", self.frame_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("radar.{name} must be positive, got {v}")));
            }
        }
        if self.n_adc < 2 || self.n_chirps < 2 || self.n_virtual_antennas < 1 {
            return Err(Error::Config("radar cube dimensions too small".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("radar.noise_std must be non-negative".into()));
        }
        let frame_time = self.n_chirps as f64 * self.chirp_interval;
        if frame_time > 1.0 / self.frame_rate {
            return Err(Error::Config(format!(
                "{} chirps x {} s exceeds the {} s frame period",
                self.n_chirps,
                self.chirp_interval,
                1.0 / self.frame_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Metres, > 0.
    pub range: f64,
    /// m/s, positive when approaching the radar.
    pub radial_velocity: f64,
    /// Radians from boresight, |θ| < π/2.
    pub azimuth: f64,
    /// Linear amplitude.
    pub amplitude: f64,
}

/// Complex baseband samples for one frame, axes `[chirp, adc, antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCube {
    pub n_chirps: usize,
    pub n_adc: usize,
    pub n_antennas: usize,
    pub data: Vec<Complex32>,
}

impl IqCube {
    pub fn zeros(n_chirps: usize, n_adc: usize, n_antennas: usize) -> Self {
        Self {
            n_chirps,
            n_adc,
            n_antennas,
            data: vec![Complex32::new(0.0, 0.0); n_chirps * n_adc * n_antennas],
        }
    }

    pub fn index(&self, chirp: usize, adc: usize, antenna: usize) -> usize {
        (chirp * self.n_adc + adc) * self.n_antennas + antenna
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr() as f64).sum()
    }
}

fn phasor(cycles: f64) -> Complex64 {
    let phase = 2.0 * std::f64::consts::PI * cycles.rem_euclid(1.0);
    Complex64::new(phase.cos(), phase.sin())
}

fn check_scatterer(s: &Scatterer, cfg: &RadarConfig) -> Result<()> {
    if !(s.range > 0.0 && s.range < cfg.max_range()) {
        return Err(Error::Aliasing(format!(
            "range {:.4} m outside (0, {:.4}) m",
            s.range,
            cfg.max_range()
        )));
    }
    if s.radial_velocity.abs() >= cfg.max_velocity() {
        return Err(Error::Aliasing(format!(
            "radial velocity {:.4} m/s beyond ±{:.4} m/s",
            s.radial_velocity,
            cfg.max_velocity()
        )));
    }
    if s.azimuth.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Aliasing(format!("azimuth {:.4} rad outside ±π/2", s.azimuth)));
    }
    Ok(())
}

/// Noise-free sum of scatterer returns, accumulated in f64.
fn accumulate(scatterers: &[Scatterer], cfg: &RadarConfig) -> Result<Vec<Complex64>> {
    let (nm, nn, nk) = (cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas);
    let mut acc = vec![Complex64::new(0.0, 0.0); nm * nn * nk];
    let lambda = cfg.wavelength();
    let mut fast = vec![Complex64::new(0.0, 0.0); nn * nk];
    for s in scatterers {
        check_scatterer(s, cfg)?;
        let f_beat = 2.0 * cfg.slope * s.range / SPEED_OF_LIGHT;
        let f_dopp = 2.0 * s.radial_velocity / lambda;
        let spatial = cfg.antenna_spacing * s.azimuth.sin() / lambda;
        let ant: Vec<Complex64> = (0..nk).map(|k| phasor(k as f64 * spatial)).collect();
        for n in 0..nn {
            let r = phasor(f_beat * n as f64 / cfg.adc_rate) * s.amplitude;
            for k in 0..nk {
                fast[n * nk + k] = r * ant[k];
            }
        }
        for m in 0..nm {
            let d = phasor(f_dopp * m as f64 * cfg.chirp_interval);
            let row = &mut acc[m * nn * nk..(m + 1) * nn * nk];
            for (dst, f) in row.iter_mut().zip(&fast) {
                *dst += d * f;
            }
        }
    }
    Ok(acc)
}

/// Simulates one frame. Noise is drawn from a stream keyed by `rng_seed`.
pub fn synthesize_frame(scatterers: &[Scatterer], cfg: &RadarConfig, rng_seed: u64) -> Result<IqCube> {
    cfg.validate()?;
    let acc = accumulate(scatterers, cfg)?;
    let mut cube = IqCube::zeros(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas);
    if cfg.noise_std > 0.0 {
        let mut rng = seed::rng(rng_seed, "iq-noise", 0);
        let sd = cfg.noise_std / std::f64::consts::SQRT_2;
        for (dst, a) in cube.data.iter_mut().zip(&acc) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *dst = Complex32::new((a.re + sd * re) as f32, (a.im + sd * im) as f32);
        }
    } else {
        for (dst, a) in cube.data.iter_mut().zip(&acc) {
            *dst = Complex32::new(a.re as f32, a.im as f32);
        }
    }
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> RadarConfig {
        RadarConfig {
            noise_std: 0.0,
            ..RadarConfig::default()
        }
    }

    #[test]
    fn derived_resolutions_match_device_figures() {
        let cfg = RadarConfig::default();
        assert!((cfg.range_resolution() - 0.0426).abs() < 5e-5, "{}", cfg.range_resolution());
        assert!((cfg.doppler_resolution() - 0.0477).abs() < 5e-5, "{}", cfg.doppler_resolution());
        cfg.validate().unwrap();
    }

    #[test]
    fn compact_keeps_range_resolution() {
        let c = RadarConfig::compact();
        c.validate().unwrap();
        assert!((c.range_resolution() - RadarConfig::default().range_resolution()).abs() < 1e-12);
        assert!(c.max_velocity() > 2.5);
    }

    #[test]
    fn frame_time_must_fit() {
        let cfg = RadarConfig {
            chirp_interval: 1e-3,
            ..RadarConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_scene_is_all_zero() {
        let cube = synthesize_frame(&[], &quiet(), 1).unwrap();
        assert_eq!(cube.data.len(), 255 * 256 * 8);
        assert!(cube.data.iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn aliasing_rejected() {
        let cfg = quiet();
        let far = Scatterer { range: 20.0, radial_velocity: 0.0, azimuth: 0.0, amplitude: 1.0 };
        assert!(matches!(synthesize_frame(&[far], &cfg, 0), Err(Error::Aliasing(_))));
        let fast = Scatterer { range: 2.0, radial_velocity: 9.0, azimuth: 0.0, amplitude: 1.0 };
        assert!(matches!(synthesize_frame(&[fast], &cfg, 0), Err(Error::Aliasing(_))));
        let wide = Scatterer { range: 2.0, radial_velocity: 0.0, azimuth: 1.6, amplitude: 1.0 };
        assert!(matches!(synthesize_frame(&[wide], &cfg, 0), Err(Error::Aliasing(_))));
    }

    #[test]
    fn two_scatterers_superpose() {
        let cfg = RadarConfig { noise_std: 0.0, ..RadarConfig::compact() };
        let a = Scatterer { range: 1.3, radial_velocity: 0.4, azimuth: 0.2, amplitude: 1.0 };
        let b = Scatterer { range: 2.1, radial_velocity: -0.7, azimuth: -0.5, amplitude: 2.5 };
        let ab = synthesize_frame(&[a, b], &cfg, 0).unwrap();
        let ia = synthesize_frame(&[a], &cfg, 0).unwrap();
        let ib = synthesize_frame(&[b], &cfg, 0).unwrap();
        for ((s, x), y) in ab.data.iter().zip(&ia.data).zip(&ib.data) {
            assert!((s - (x + y)).norm() < 1e-5);
        }
    }

    #[test]
    fn noise_is_seeded_with_requested_power() {
        let cfg = RadarConfig { noise_std: 2.0, ..RadarConfig::compact() };
        let a = synthesize_frame(&[], &cfg, 7).unwrap();
        let b = synthesize_frame(&[], &cfg, 7).unwrap();
        let c = synthesize_frame(&[], &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mean_power = a.energy() / a.data.len() as f64;
        assert!((mean_power - 4.0).abs() < 0.2, "{mean_power}");
    }
}
