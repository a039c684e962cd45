use maepose::dsp::{rad_to_ra, rad_to_rd, to_clip, DspConfig, Map2, Modality, RadProcessor, CLIP_FRAMES};
use maepose::radar::{synthesize_frame, RadarConfig, Scatterer, SPEED_OF_LIGHT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bin positions predicted from the chirp parameters alone.
struct Oracle {
    range_res: f64,
    doppler_res: f64,
    zero_doppler: f64,
    angle_bins: f64,
    spacing_over_lambda: f64,
}

impl Oracle {
    fn new(cfg: &RadarConfig, dsp: &DspConfig) -> Self {
        let bandwidth = cfg.slope * cfg.n_adc as f64 / cfg.adc_rate;
        let lambda = SPEED_OF_LIGHT / cfg.start_freq;
        Self {
            range_res: SPEED_OF_LIGHT / (2.0 * bandwidth),
            doppler_res: lambda / (2.0 * cfg.n_chirps as f64 * cfg.chirp_interval),
            zero_doppler: (cfg.n_chirps / 2) as f64,
            angle_bins: dsp.angle_fft_size as f64,
            spacing_over_lambda: cfg.antenna_spacing / lambda,
        }
    }

    fn range_bin(&self, s: &Scatterer) -> f64 {
        s.range / self.range_res
    }

    fn doppler_bin(&self, s: &Scatterer) -> f64 {
        self.zero_doppler + s.radial_velocity / self.doppler_res
    }

    fn angle_bin(&self, s: &Scatterer) -> f64 {
        self.angle_bins / 2.0 + self.angle_bins * self.spacing_over_lambda * s.azimuth.sin()
    }
}

fn maps(cfg: &RadarConfig, scatterers: &[Scatterer], seed: u64) -> (Map2, Map2) {
    let iq = synthesize_frame(scatterers, cfg, seed).unwrap();
    let proc = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
    let rad = proc.iq_to_rad(&iq).unwrap();
    (rad_to_rd(&rad), rad_to_ra(&rad))
}

fn within_one(found: usize, expected: f64) -> bool {
    (found as f64 - expected).abs() <= 1.0 + 1e-9
}

#[test]
fn device_resolutions() {
    let o = Oracle::new(&RadarConfig::default(), &DspConfig::default());
    assert!((o.range_res - 0.0426).abs() < 5e-5, "{}", o.range_res);
    assert!((o.doppler_res - 0.0477).abs() < 5e-5, "{}", o.doppler_res);
}

#[test]
fn fifty_random_scatterers_land_on_their_bins() {
    let cfg = RadarConfig::default();
    let o = Oracle::new(&cfg, &DspConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let s = Scatterer {
            range: rng.random_range(0.3..0.9 * cfg.max_range()),
            radial_velocity: rng.random_range(-0.9..0.9) * cfg.max_velocity(),
            azimuth: rng.random_range(-60f64..60.0).to_radians(),
            amplitude: rng.random_range(0.5..2.0),
        };
        let (rd, ra) = maps(&cfg, &[s], case);
        let (r, d) = rd.argmax();
        let (ra_r, a) = ra.argmax();
        assert!(within_one(r, o.range_bin(&s)), "case {case}: range bin {r} vs {:.2}", o.range_bin(&s));
        assert!(within_one(d, o.doppler_bin(&s)), "case {case}: doppler bin {d} vs {:.2}", o.doppler_bin(&s));
        assert!(within_one(ra_r, o.range_bin(&s)), "case {case}: RA range bin {ra_r}");
        assert!(within_one(a, o.angle_bin(&s)), "case {case}: angle bin {a} vs {:.2}", o.angle_bin(&s));
    }
}

#[test]
fn range_fft_scales_energy_by_adc_length() {
    let cfg = RadarConfig::compact();
    let s = [
        Scatterer { range: 1.1, radial_velocity: 0.3, azimuth: 0.2, amplitude: 1.0 },
        Scatterer { range: 2.0, radial_velocity: -0.5, azimuth: -0.4, amplitude: 0.7 },
    ];
    let iq = synthesize_frame(&s, &cfg, 9).unwrap();
    let proc = RadProcessor::new(cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas, &DspConfig::default()).unwrap();
    let out: f64 = proc.range_fft(&iq).iter().map(|c| c.norm_sqr() as f64).sum();
    let expected = cfg.n_adc as f64 * iq.energy();
    assert!((out - expected).abs() / expected < 1e-3, "{out} vs {expected}");
}

#[test]
fn doubling_amplitude_quadruples_peak_power() {
    let cfg = RadarConfig { noise_std: 0.0, ..RadarConfig::compact() };
    let one = Scatterer { range: 1.5, radial_velocity: 0.2, azimuth: 0.3, amplitude: 1.0 };
    let two = Scatterer { amplitude: 2.0, ..one };
    let (rd1, _) = maps(&cfg, &[one], 0);
    let (rd2, _) = maps(&cfg, &[two], 0);
    let (r, c) = rd1.argmax();
    let ratio = (rd2.at(r, c) / rd1.at(r, c)).powi(2);
    assert!((ratio - 4.0).abs() < 1e-4, "{ratio}");
}

/// Cells above half the maximum that are not exceeded by any 8-neighbour.
fn peaks(m: &Map2) -> Vec<(usize, usize)> {
    let (r0, c0) = m.argmax();
    let top = m.at(r0, c0);
    let mut out = Vec::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = m.at(r, c);
            if v < 0.5 * top {
                continue;
            }
            let mut is_peak = true;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if (dr, dc) != (0, 0) && rr >= 0 && cc >= 0 && (rr as usize) < m.rows && (cc as usize) < m.cols {
                        is_peak &= m.at(rr as usize, cc as usize) <= v;
                    }
                }
            }
            if is_peak {
                out.push((r, c));
            }
        }
    }
    out
}

#[test]
fn two_azimuths_one_rd_peak_two_ra_peaks() {
    let cfg = RadarConfig { noise_std: 0.0, ..RadarConfig::default() };
    let o = Oracle::new(&cfg, &DspConfig::default());
    let range = 50.0 * o.range_res;
    let s: Vec<Scatterer> = [-30f64, 20.0]
        .iter()
        .map(|deg| Scatterer { range, radial_velocity: 0.0, azimuth: deg.to_radians(), amplitude: 1.0 })
        .collect();
    let (rd, ra) = maps(&cfg, &s, 0);
    assert_eq!(peaks(&rd), vec![(50, cfg.n_chirps / 2)]);
    let ra_peaks = peaks(&ra);
    assert_eq!(ra_peaks.len(), 2, "{ra_peaks:?}");
    for (p, sc) in ra_peaks.iter().zip(&s) {
        assert_eq!(p.0, 50);
        assert!(within_one(p.1, o.angle_bin(sc)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Log compression and min-max scaling never reorder pixel values.
    #[test]
    fn clip_normalisation_preserves_order(values in prop::collection::vec(0f32..1e4, 4 * 6), a in 0usize..24, b in 0usize..24) {
        let maps: Vec<Map2> = (0..CLIP_FRAMES)
            .map(|t| Map2 { rows: 4, cols: 6, data: values.iter().map(|v| v * (1.0 + t as f32)).collect() })
            .collect();
        let clip = to_clip(&maps, Modality::Rd, vec![0.5; 130], [1.0, 1.0], (4, 6)).unwrap();
        let f = &clip.frames[..24];
        if values[a] < values[b] {
            prop_assert!(f[a] <= f[b]);
        }
        prop_assert!(clip.frames.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
