//! IQ cube → RAD cube → RD / RA maps → normalised spectrogram clips.
//!
//! FFTs are forward and unnormalised, `X[k] = Σ x[n]·e^{-j2πkn/N}`, so
//! Parseval reads `Σ|X|² = N·Σ|x|²`. The Doppler and angle axes are
//! fftshifted: frequency bin `f` lands at index `f + N/2` (integer division),
//! which puts zero Doppler at bin 127 for 255 chirps.

use std::sync::Arc;

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::IqCube;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    /// Antennas are zero-padded to this length before the angle FFT.
    pub angle_fft_size: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self { angle_fft_size: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rd,
    Ra,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rd => "rd",
            Modality::Ra => "ra",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rd" => Ok(Modality::Rd),
            "ra" => Ok(Modality::Ra),
            other => Err(Error::Config(format!("unknown modality {other:?} (expected rd or ra)"))),
        }
    }
}

/// Magnitudes over `[range, doppler, angle]`, Doppler and angle fftshifted.
#[derive(Debug, Clone, PartialEq)]
pub struct RadCube {
    pub range_bins: usize,
    pub doppler_bins: usize,
    pub angle_bins: usize,
    pub data: Vec<f32>,
}

impl RadCube {
    pub fn at(&self, range: usize, doppler: usize, angle: usize) -> f32 {
        self.data[(range * self.doppler_bins + doppler) * self.angle_bins + angle]
    }
}

/// A real-valued 2-D image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Map2 {
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// Row-major first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

/// Reusable FFT plans for one cube geometry.
pub struct RadProcessor {
    range_fft: Arc<dyn Fft<f32>>,
    doppler_fft: Arc<dyn Fft<f32>>,
    angle_fft: Arc<dyn Fft<f32>>,
    n_adc: usize,
    n_chirps: usize,
    n_antennas: usize,
    angle_size: usize,
}

pub fn fftshift_index(bin: usize, n: usize) -> usize {
    (bin + n / 2) % n
}

impl RadProcessor {
    pub fn new(n_chirps: usize, n_adc: usize, n_antennas: usize, dsp: &DspConfig) -> Result<Self> {
        if dsp.angle_fft_size < n_antennas {
            return Err(Error::Config(format!(
                "angle_fft_size {} smaller than {} antennas",
                dsp.angle_fft_size, n_antennas
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            range_fft: planner.plan_fft_forward(n_adc),
            doppler_fft: planner.plan_fft_forward(n_chirps),
            angle_fft: planner.plan_fft_forward(dsp.angle_fft_size),
            n_adc,
            n_chirps,
            n_antennas,
            angle_size: dsp.angle_fft_size,
        })
    }

    /// Range FFT along the ADC axis for every (chirp, antenna); output keeps
    /// the `[chirp, range, antenna]` layout.
    pub fn range_fft(&self, iq: &IqCube) -> Vec<Complex32> {
        let (nm, nn, nk) = (self.n_chirps, self.n_adc, self.n_antennas);
        let mut out = iq.data.clone();
        let mut line = vec![Complex32::new(0.0, 0.0); nn];
        for m in 0..nm {
            for k in 0..nk {
                for n in 0..nn {
                    line[n] = out[(m * nn + n) * nk + k];
                }
                self.range_fft.process(&mut line);
                for n in 0..nn {
                    out[(m * nn + n) * nk + k] = line[n];
                }
            }
        }
        out
    }

    pub fn iq_to_rad(&self, iq: &IqCube) -> Result<RadCube> {
        if (iq.n_chirps, iq.n_adc, iq.n_antennas) != (self.n_chirps, self.n_adc, self.n_antennas) {
            return Err(Error::Data(format!(
                "IQ cube {}x{}x{} does not match processor {}x{}x{}",
                iq.n_chirps, iq.n_adc, iq.n_antennas, self.n_chirps, self.n_adc, self.n_antennas
            )));
        }
        let (nm, nn, nk, na) = (self.n_chirps, self.n_adc, self.n_antennas, self.angle_size);
        let ranged = self.range_fft(iq);

        // Doppler FFT per (range, antenna), stored as [range, doppler(shifted), antenna].
        let mut rd = vec![Complex32::new(0.0, 0.0); nn * nm * nk];
        let mut line = vec![Complex32::new(0.0, 0.0); nm];
        for n in 0..nn {
            for k in 0..nk {
                for m in 0..nm {
                    line[m] = ranged[(m * nn + n) * nk + k];
                }
                self.doppler_fft.process(&mut line);
                for m in 0..nm {
                    rd[(n * nm + fftshift_index(m, nm)) * nk + k] = line[m];
                }
            }
        }

        // Zero-padded angle FFT per (range, doppler).
        let mut data = vec![0f32; nn * nm * na];
        let mut line = vec![Complex32::new(0.0, 0.0); na];
        for cell in 0..nn * nm {
            line.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
            line[..nk].copy_from_slice(&rd[cell * nk..(cell + 1) * nk]);
            self.angle_fft.process(&mut line);
            let dst = &mut data[cell * na..(cell + 1) * na];
            for (a, v) in line.iter().enumerate() {
                dst[fftshift_index(a, na)] = v.norm();
            }
        }
        Ok(RadCube {
            range_bins: nn,
            doppler_bins: nm,
            angle_bins: na,
            data,
        })
    }
}

/// Range–Doppler map: maximum over the angle axis.
pub fn rad_to_rd(rad: &RadCube) -> Map2 {
    let mut data = vec![0f32; rad.range_bins * rad.doppler_bins];
    for (cell, dst) in data.iter_mut().enumerate() {
        let row = &rad.data[cell * rad.angle_bins..(cell + 1) * rad.angle_bins];
        *dst = row.iter().copied().fold(0.0, f32::max);
    }
    Map2 {
        rows: rad.range_bins,
        cols: rad.doppler_bins,
        data,
    }
}

/// Range–azimuth map: maximum over the Doppler axis.
pub fn rad_to_ra(rad: &RadCube) -> Map2 {
    let (nd, na) = (rad.doppler_bins, rad.angle_bins);
    let mut data = vec![0f32; rad.range_bins * na];
    for r in 0..rad.range_bins {
        let dst = &mut data[r * na..(r + 1) * na];
        for d in 0..nd {
            let src = &rad.data[(r * nd + d) * na..(r * nd + d + 1) * na];
            dst.iter_mut().zip(src).for_each(|(o, v)| *o = o.max(*v));
        }
    }
    Map2 {
        rows: rad.range_bins,
        cols: na,
        data,
    }
}

/// Bilinear resize with half-pixel centres:
/// `src = (dst + 0.5)·(in / out) − 0.5`, clamped to `[0, in − 1]`, then
/// linear interpolation between `floor(src)` and `floor(src) + 1` (the upper
/// neighbour clamped to the edge).
pub fn resize_bilinear(src: &Map2, rows: usize, cols: usize) -> Map2 {
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, (s - lo as f64) as f32)
            })
            .collect()
    };
    let ry = axis(rows, src.rows);
    let rx = axis(cols, src.cols);
    let mut data = Vec::with_capacity(rows * cols);
    for &(y0, y1, fy) in &ry {
        for &(x0, x1, fx) in &rx {
            let top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            let bottom = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Map2 { rows, cols, data }
}

/// Input-frame indices whose poses supervise the five decoder outputs.
pub const TARGET_FRAMES: [usize; 5] = [1, 5, 9, 13, 17];
pub const CLIP_FRAMES: usize = 20;
pub const JOINTS: usize = 13;

/// A normalised spectrogram video with its pose labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarClip {
    pub modality: Modality,
    /// `[T, H, W]`, values in `[0, 1]`.
    pub frames: Vec<f32>,
    pub dims: [usize; 3],
    /// `[5, 13, 2]` normalised `(x, y)` joint coordinates.
    pub labels: Vec<f32>,
    /// Metres per normalised unit along x and y.
    pub metres_per_unit: [f64; 2],
    pub person_id: usize,
    pub action_id: usize,
    /// Set when the clip was constant and emitted as zeros.
    pub degenerate: bool,
}

/// Log-compresses, resizes and min-max normalises 20 maps into a clip.
pub fn to_clip(
    maps: &[Map2],
    modality: Modality,
    labels: Vec<f32>,
    metres_per_unit: [f64; 2],
    size: (usize, usize),
) -> Result<RadarClip> {
    if maps.len() != CLIP_FRAMES {
        return Err(Error::Data(format!("clip needs {CLIP_FRAMES} maps, got {}", maps.len())));
    }
    let (r0, c0) = (maps[0].rows, maps[0].cols);
    if maps.iter().any(|m| m.rows != r0 || m.cols != c0) {
        return Err(Error::Data("clip maps differ in size".into()));
    }
    if labels.len() != TARGET_FRAMES.len() * JOINTS * 2 {
        return Err(Error::Data(format!("labels must hold 5x13x2 values, got {}", labels.len())));
    }
    if metres_per_unit.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Data("metres_per_unit must be positive".into()));
    }
    let (h, w) = size;
    let mut frames = Vec::with_capacity(CLIP_FRAMES * h * w);
    for m in maps {
        let logged = Map2 {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| v.ln_1p()).collect(),
        };
        frames.extend(resize_bilinear(&logged, h, w).data);
    }
    let lo = frames.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = frames.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let degenerate = !(hi > lo);
    if degenerate {
        frames.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let span = hi - lo;
        frames.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    }
    Ok(RadarClip {
        modality,
        frames,
        dims: [CLIP_FRAMES, h, w],
        labels,
        metres_per_unit,
        person_id: 0,
        action_id: 0,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::{synthesize_frame, RadarConfig, Scatterer};

    fn quiet() -> RadarConfig {
        RadarConfig { noise_std: 0.0, ..RadarConfig::default() }
    }

    fn one(range: f64, v: f64, az: f64) -> Scatterer {
        Scatterer { range, radial_velocity: v, azimuth: az, amplitude: 1.0 }
    }

    #[test]
    fn fftshift_centres_zero() {
        assert_eq!(fftshift_index(0, 255), 127);
        assert_eq!(fftshift_index(254, 255), 126);
        assert_eq!(fftshift_index(0, 64), 32);
        assert_eq!(fftshift_index(63, 64), 31);
    }

    #[test]
    fn single_scatterer_range_peak_bin_50() {
        let cfg = quiet();
        let iq = synthesize_frame(&[one(2.13, 0.0, 0.0)], &cfg, 0).unwrap();
        let p = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
        let ranged = p.range_fft(&iq);
        // magnitude along range for chirp 0, antenna 0
        let mags: Vec<f32> = (0..cfg.n_adc).map(|n| ranged[n * cfg.n_virtual_antennas].norm()).collect();
        let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(peak, 50);

        let rad = p.iq_to_rad(&iq).unwrap();
        let rd = rad_to_rd(&rad);
        assert_eq!(rd.argmax(), (50, cfg.zero_doppler_bin()));
        let ra = rad_to_ra(&rad);
        assert_eq!(ra.argmax(), (50, 32));
    }

    #[test]
    fn approaching_target_lands_ten_bins_above_zero_doppler() {
        let cfg = quiet();
        let iq = synthesize_frame(&[one(2.13, 0.477, 0.0)], &cfg, 0).unwrap();
        let p = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
        let rd = rad_to_rd(&p.iq_to_rad(&iq).unwrap());
        assert_eq!(rd.argmax(), (50, cfg.zero_doppler_bin() + 10));
    }

    #[test]
    fn thirty_degrees_steers_to_bin_48() {
        let cfg = quiet();
        let iq = synthesize_frame(&[one(2.13, 0.0, 30f64.to_radians())], &cfg, 0).unwrap();
        let p = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
        let ra = rad_to_ra(&p.iq_to_rad(&iq).unwrap());
        let expect = (32.0 + 64.0 * (cfg.antenna_spacing / cfg.wavelength()) * 0.5f64).round() as usize;
        assert_eq!(expect, 48);
        assert_eq!(ra.argmax(), (50, expect));
    }

    #[test]
    fn zero_iq_gives_zero_maps() {
        let cfg = RadarConfig { noise_std: 0.0, ..RadarConfig::compact() };
        let p = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
        let rad = p.iq_to_rad(&IqCube::zeros(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas)).unwrap();
        assert!(rad.data.iter().all(|&v| v == 0.0));
        assert!(rad_to_rd(&rad).data.iter().all(|&v| v == 0.0));
        assert!(rad_to_ra(&rad).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cube_rejected() {
        let p = RadProcessor::new(63, 64, 8, &DspConfig::default()).unwrap();
        assert!(p.iq_to_rad(&IqCube::zeros(63, 64, 4)).is_err());
        assert!(RadProcessor::new(63, 64, 8, &DspConfig { angle_fft_size: 4 }).is_err());
    }

    #[test]
    fn single_peak_rad_projects_to_both_maps() {
        let mut rad = RadCube { range_bins: 4, doppler_bins: 5, angle_bins: 3, data: vec![0.0; 60] };
        rad.data[(2 * 5 + 3) * 3 + 1] = 7.0;
        let rd = rad_to_rd(&rad);
        assert_eq!(rd.argmax(), (2, 3));
        assert_eq!(rd.at(2, 3), 7.0);
        assert_eq!(rad_to_ra(&rad).argmax(), (2, 1));
    }

    #[test]
    fn resize_identity_and_shape() {
        let m = Map2 { rows: 3, cols: 4, data: (0..12).map(|v| v as f32).collect() };
        assert_eq!(resize_bilinear(&m, 3, 4), m);
        let big = Map2 { rows: 256, cols: 255, data: vec![1.0; 256 * 255] };
        let r = resize_bilinear(&big, 224, 224);
        assert_eq!((r.rows, r.cols), (224, 224));
        assert!(r.data.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn resize_half_pixel_upsample() {
        // 2 -> 4 columns: sources at -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
        let m = Map2 { rows: 1, cols: 2, data: vec![0.0, 4.0] };
        assert_eq!(resize_bilinear(&m, 1, 4).data, vec![0.0, 1.0, 3.0, 4.0]);
    }

    fn labels() -> Vec<f32> {
        vec![0.5; 130]
    }

    #[test]
    fn constant_clip_is_degenerate_zero() {
        let maps = vec![Map2 { rows: 8, cols: 8, data: vec![3.0; 64] }; 20];
        let clip = to_clip(&maps, Modality::Rd, labels(), [1.0, 1.0], (16, 16)).unwrap();
        assert!(clip.degenerate);
        assert!(clip.frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_spans_unit_interval() {
        let maps: Vec<Map2> = (0..20)
            .map(|t| Map2 { rows: 256, cols: 255, data: (0..256 * 255).map(|i| ((i * 7 + t * 13) % 101) as f32).collect() })
            .collect();
        let clip = to_clip(&maps, Modality::Rd, labels(), [1.6, 1.6], (224, 224)).unwrap();
        assert_eq!(clip.dims, [20, 224, 224]);
        assert!(!clip.degenerate);
        let lo = clip.frames.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = clip.frames.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn clip_preconditions() {
        let maps = vec![Map2 { rows: 8, cols: 8, data: vec![1.0; 64] }; 19];
        assert!(to_clip(&maps, Modality::Rd, labels(), [1.0, 1.0], (8, 8)).is_err());
        let mut maps = vec![Map2 { rows: 8, cols: 8, data: vec![1.0; 64] }; 20];
        maps[3] = Map2 { rows: 4, cols: 8, data: vec![1.0; 32] };
        assert!(to_clip(&maps, Modality::Rd, labels(), [1.0, 1.0], (8, 8)).is_err());
    }
}
